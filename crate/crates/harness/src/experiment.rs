//! Experiment pipeline: population, data and statistics for one seed, the
//! plan each policy picks, simulation, and the text artifacts.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sfl_core::{
    best_split, convergence_upper_bound, expected_round_latency, optimize, optimize_fixed_cuts, LatencyProfile,
    OptimizerResult, Population, SamplingPlan, SystemConfig, Tolerances,
};
use sfl_sim::training::init_rng;
use sfl_sim::{
    calibrate, generate_clients, run_training, Blocks, CalibrationConfig, ClientSchedule, Dataset, EstimationReport,
    LayeredModel, Mlp, SimulationTrace, SyntheticSpec, TrainingConfig,
};

use crate::config::{report_text, ExperimentConfig, Policy};
use crate::error::HarnessError;
use crate::population::{generate_population, mlp_profile, perturb_failures, reference_latency};

const POPULATION_STREAM: u64 = 1 << 40;
const DATA_STREAM: u64 = POPULATION_STREAM + 1;
const CUT_STREAM: u64 = POPULATION_STREAM + 2;
const NOISE_STREAM: u64 = POPULATION_STREAM + 3;
const CALIBRATION_STREAM: u64 = POPULATION_STREAM + 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything one seed of an experiment shares across policies.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// True failure probabilities; the simulator always draws from these.
    pub population: Population,
    /// Optimizer inputs, with noisy failure probabilities when `noise_cv > 0`.
    pub perturbed: Population,
    pub profile: LatencyProfile,
    pub model: Mlp,
    pub data: Vec<Dataset>,
    pub eval: Dataset,
    pub init: Blocks,
    /// Random cut per client used by the fixed-split policies.
    pub fixed_cuts: Vec<usize>,
    /// Present when the statistics were measured rather than configured.
    pub report: Option<EstimationReport>,
}

/// A policy's sampling plan with its bound and latency under the true population.
#[derive(Debug, Clone)]
pub struct PolicyPlan {
    pub policy: Policy,
    pub plan: SamplingPlan,
    pub schedule: ClientSchedule,
    pub optimizer: Option<OptimizerResult>,
    pub bound: f64,
    pub expected_latency: f64,
}

pub fn calibration_config(config: &ExperimentConfig) -> CalibrationConfig {
    let c = &config.calibration;
    CalibrationConfig {
        batch_size: c.batch_size,
        epochs: c.epochs,
        learning_rate: c.learning_rate,
        local_steps: c.local_steps,
        relative_perturbation: c.perturbation,
    }
}

impl Instance {
    pub fn build(config: &ExperimentConfig, seed: u64) -> Result<Self, HarnessError> {
        let generated = generate_population(&config.population, &mut stream(seed, POPULATION_STREAM));
        let m = &config.model;
        let layers = config.num_layers();
        let synthetic = SyntheticSpec {
            dim: m.widths[0],
            classes: m.widths[layers],
            separation: m.separation,
            noise: m.noise,
            samples_per_client: generated.sizes.clone(),
            iid: m.iid,
            primary_fraction: m.primary_fraction,
        };
        let data = generate_clients(&synthetic, stream(seed, DATA_STREAM).next_u64());
        let eval = Dataset::concat(&data);
        let model = Mlp::new(m.widths.clone());
        let init = model.init(&mut init_rng(seed));
        let s = &config.system;
        let profile = mlp_profile(&m.widths, s.batch_size, m.bytes_per_value, s.server_speed)?;

        let (stats, report) = match &config.stats {
            Some(stats) => (stats.clone(), None),
            None => {
                let report = calibrate(
                    &model,
                    &init,
                    &data,
                    &calibration_config(config),
                    &mut stream(seed, CALIBRATION_STREAM),
                );
                (report.statistics(), Some(report))
            }
        };
        let budget = s.latency_budget.unwrap_or_else(|| {
            s.latency_slack * reference_latency(&generated.clients, &profile, s.clients_per_round, s.min_cut)
        });
        let system = SystemConfig {
            num_clients: config.population.num_clients,
            clients_per_round: s.clients_per_round,
            aggregation_interval: s.aggregation_interval,
            learning_rate: s.learning_rate,
            rounds: s.rounds,
            latency_budget: budget,
            min_cut: s.min_cut,
        };
        let noisy = perturb_failures(
            &generated.clients,
            config.policy.noise_cv,
            &mut stream(seed, NOISE_STREAM),
        );
        let population = Population::new(generated.clients, stats, system)?;
        let perturbed = population.with_parts(Some(noisy), None, None)?;
        let mut cut_rng = stream(seed, CUT_STREAM);
        let fixed_cuts = (0..population.num_clients())
            .map(|_| cut_rng.random_range(s.min_cut..=layers))
            .collect();
        Ok(Instance {
            config: config.clone(),
            seed,
            population,
            perturbed,
            profile,
            model,
            data,
            eval,
            init,
            fixed_cuts,
            report,
        })
    }

    pub fn plan(&self, policy: Policy) -> Result<PolicyPlan, HarnessError> {
        let pop = &self.population;
        let n = pop.num_clients();
        let uniform = vec![1.0 / n as f64; n];
        let fixed = || self.fixed_cuts.clone();
        let tol = Tolerances::default();
        let mut schedule = ClientSchedule::Sampled;
        let (plan, optimizer) = match policy {
            Policy::OmsOcs => {
                let r = optimize(&self.perturbed, &self.profile, &tol)?;
                (r.plan.clone(), Some(r))
            }
            Policy::FmsOcs => {
                let r = optimize_fixed_cuts(&self.perturbed, &self.profile, &self.fixed_cuts, &tol)?;
                (r.plan.clone(), Some(r))
            }
            Policy::Uniform => {
                let (min_cut, layers) = (pop.system().min_cut, pop.num_layers());
                let cuts = pop
                    .clients()
                    .iter()
                    .map(|c| best_split(c, &self.profile, min_cut, layers).0)
                    .collect();
                (SamplingPlan::from_parts(pop, uniform, cuts), None)
            }
            Policy::Weighted => {
                let q = pop.clients().iter().map(|c| c.weight).collect();
                (SamplingPlan::from_parts(pop, q, fixed()), None)
            }
            Policy::RoundRobin => {
                schedule = ClientSchedule::RoundRobin;
                (SamplingPlan::from_parts(pop, uniform, fixed()), None)
            }
            Policy::RandomFixedSplit => (SamplingPlan::from_parts(pop, uniform, fixed()), None),
        };
        Ok(PolicyPlan {
            policy,
            bound: convergence_upper_bound(&plan, pop).total,
            expected_latency: expected_round_latency(&plan, pop, &self.profile),
            plan,
            schedule,
            optimizer,
        })
    }

    pub fn simulate(&self, chosen: &PolicyPlan) -> Result<SimulationTrace, HarnessError> {
        let config = TrainingConfig {
            batch_size: self.config.system.batch_size,
            seed: self.seed,
            schedule: chosen.schedule,
            round_latency: chosen.expected_latency,
        };
        Ok(run_training(
            &self.population,
            &chosen.plan,
            &self.model,
            &self.data,
            &self.eval,
            config,
        )?)
    }
}

/// Named text files produced by a verb.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |path: &Path, source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, text) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

/// `client,q,cut,max_cut,aux_m`, one row per client.
pub fn plan_text(plan: &SamplingPlan) -> String {
    let mut out = String::from("client,q,cut,max_cut,aux_m\n");
    for (i, (q, cut)) in plan.q.iter().zip(&plan.cut_layers).enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i + 1, q, cut, plan.max_cut, plan.aux_m);
    }
    out
}

fn summary_text(instance: &Instance, chosen: &PolicyPlan, trace: Option<&SimulationTrace>) -> String {
    let sys = instance.population.system();
    let stats = instance.population.stats();
    let mut rows: Vec<(&str, String)> = vec![
        ("policy", chosen.policy.to_string()),
        ("seed", instance.seed.to_string()),
        ("num_clients", sys.num_clients.to_string()),
        ("num_layers", instance.population.num_layers().to_string()),
        ("clients_per_round", sys.clients_per_round.to_string()),
        ("aggregation_interval", sys.aggregation_interval.to_string()),
        ("rounds", sys.rounds.to_string()),
        ("latency_budget", sys.latency_budget.to_string()),
        ("noise_cv", instance.config.policy.noise_cv.to_string()),
        (
            "stats_source",
            if instance.report.is_some() {
                "calibrated"
            } else {
                "config"
            }
            .to_string(),
        ),
        ("beta", stats.beta.to_string()),
        ("loss_gap", stats.loss_gap.to_string()),
        ("max_cut", chosen.plan.max_cut.to_string()),
        ("aux_m", chosen.plan.aux_m.to_string()),
        ("bound", chosen.bound.to_string()),
        ("expected_latency", chosen.expected_latency.to_string()),
    ];
    if let Some(r) = &chosen.optimizer {
        rows.push(("optimizer_objective", r.objective.to_string()));
        rows.push(("optimizer_status", format!("{:?}", r.status).to_lowercase()));
    }
    if let Some(t) = trace {
        rows.push(("final_loss", t.final_loss.to_string()));
    }
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

/// Plan and summary for the configured policy.
pub fn optimize_artifacts(config: &ExperimentConfig) -> Result<Artifacts, HarnessError> {
    let instance = Instance::build(config, config.system.seed)?;
    let chosen = instance.plan(config.policy.policy)?;
    Ok(Artifacts {
        files: vec![
            ("plan.csv".into(), plan_text(&chosen.plan)),
            ("summary.csv".into(), summary_text(&instance, &chosen, None)),
        ],
    })
}

/// Full pipeline for the configured policy: plan, trace and summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Artifacts, HarnessError> {
    let instance = Instance::build(config, config.system.seed)?;
    let chosen = instance.plan(config.policy.policy)?;
    let trace = instance.simulate(&chosen)?;
    Ok(Artifacts {
        files: vec![
            ("plan.csv".into(), plan_text(&chosen.plan)),
            ("trace.csv".into(), trace.to_delimited()),
            ("summary.csv".into(), summary_text(&instance, &chosen, Some(&trace))),
        ],
    })
}

/// Measured statistics in config format, ignoring any configured `stats.*`.
pub fn calibrate_artifacts(config: &ExperimentConfig) -> Result<Artifacts, HarnessError> {
    let mut measured = config.clone();
    measured.stats = None;
    let instance = Instance::build(&measured, config.system.seed)?;
    let report = instance.report.as_ref().expect("statistics were calibrated");
    Ok(Artifacts {
        files: vec![("stats.cfg".into(), report_text(report))],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub seed: u64,
    pub final_loss: f64,
    pub bound: f64,
    pub expected_latency: f64,
    pub max_cut: usize,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub policy: Policy,
    pub runs: Vec<PolicyRun>,
}

impl ComparisonRow {
    pub fn median_final_loss(&self) -> f64 {
        median(self.runs.iter().map(|r| r.final_loss).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Every policy on every seed; instances are shared across policies of a seed.
pub fn compare_policies(
    config: &ExperimentConfig,
    policies: &[Policy],
    seeds: &[u64],
) -> Result<Comparison, HarnessError> {
    let mut rows: Vec<ComparisonRow> = policies
        .iter()
        .map(|&policy| ComparisonRow {
            policy,
            runs: Vec::new(),
        })
        .collect();
    for &seed in seeds {
        let instance = Instance::build(config, seed)?;
        for row in rows.iter_mut() {
            let chosen = instance.plan(row.policy)?;
            let trace = instance.simulate(&chosen)?;
            row.runs.push(PolicyRun {
                seed,
                final_loss: trace.final_loss,
                bound: chosen.bound,
                expected_latency: chosen.expected_latency,
                max_cut: chosen.plan.max_cut,
                losses: trace.losses(),
            });
        }
    }
    Ok(Comparison { rows })
}

impl Comparison {
    /// `comparison.csv` (one row per policy), `runs.csv` (one row per policy
    /// and seed) and `curves.csv` (loss per round with cumulative expected latency).
    pub fn artifacts(&self) -> Artifacts {
        let mut table =
            String::from("policy,runs,median_final_loss,mean_final_loss,median_bound,median_expected_latency\n");
        let mut runs = String::from("policy,seed,final_loss,bound,expected_latency,max_cut\n");
        let mut curves = String::from("policy,seed,round,loss,cumulative_latency\n");
        for row in &self.rows {
            let finals: Vec<f64> = row.runs.iter().map(|r| r.final_loss).collect();
            let _ = writeln!(
                table,
                "{},{},{},{},{},{}",
                row.policy,
                row.runs.len(),
                row.median_final_loss(),
                finals.iter().sum::<f64>() / finals.len() as f64,
                median(row.runs.iter().map(|r| r.bound).collect()),
                median(row.runs.iter().map(|r| r.expected_latency).collect()),
            );
            for r in &row.runs {
                let _ = writeln!(
                    runs,
                    "{},{},{},{},{},{}",
                    row.policy, r.seed, r.final_loss, r.bound, r.expected_latency, r.max_cut
                );
                for (t, loss) in r.losses.iter().enumerate() {
                    let _ = writeln!(
                        curves,
                        "{},{},{},{},{}",
                        row.policy,
                        r.seed,
                        t + 1,
                        loss,
                        (t + 1) as f64 * r.expected_latency
                    );
                }
            }
        }
        Artifacts {
            files: vec![
                ("comparison.csv".into(), table),
                ("runs.csv".into(), runs),
                ("curves.csv".into(), curves),
            ],
        }
    }
}
