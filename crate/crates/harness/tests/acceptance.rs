//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sfl_core::optimizer::ProbeStatus;
use sfl_core::{
    convergence_upper_bound, discrepancy_bound, expected_round_latency, optimize, ClientProfile, LatencyProfile,
    ModelStatistics, OptimizerResult, Population, SamplingPlan, SystemConfig, Tolerances,
};
use sfl_harness::config::Range;
use sfl_harness::experiment::median;
use sfl_harness::{compare_policies, ExperimentConfig, Policy};
use sfl_sim::model::squared_norm;
use sfl_sim::training::{batch_rng, init_rng};
use sfl_sim::{
    batch_indices, generate_clients, run_training, ClientSchedule, Dataset, LayeredModel, Mlp, Quadratic, Simulation,
    SyntheticSpec, TrainingConfig,
};

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- helpers

fn population(
    weights: &[f64],
    failures: &[[f64; 3]],
    stats: ModelStatistics,
    k: usize,
    interval: usize,
    gamma: f64,
    rounds: usize,
) -> Population {
    let clients = weights
        .iter()
        .zip(failures)
        .enumerate()
        .map(|(i, (&weight, f))| ClientProfile {
            id: i + 1,
            weight,
            upload_failure: f[0],
            download_failure: f[1],
            aggregate_failure: f[2],
            uplink_rate: 1.0,
            downlink_rate: 1.0,
            fed_uplink_rate: 1.0,
            compute_speed: 1.0,
        })
        .collect();
    let system = SystemConfig {
        num_clients: weights.len(),
        clients_per_round: k,
        aggregation_interval: interval,
        learning_rate: gamma,
        rounds,
        latency_budget: 1.0,
        min_cut: 1,
    };
    Population::new(clients, stats, system).expect("valid population")
}

fn flat_stats(layers: usize) -> ModelStatistics {
    ModelStatistics {
        sigma_sq: vec![1.0; layers],
        g_sq: vec![1.0; layers],
        beta: 1.0,
        loss_gap: 1.0,
    }
}

fn config(seed: u64, batch_size: usize, schedule: ClientSchedule) -> TrainingConfig {
    TrainingConfig {
        batch_size,
        seed,
        schedule,
        round_latency: 0.0,
    }
}

fn task(clients: usize, per_client: usize, seed: u64) -> (Vec<Dataset>, Dataset) {
    let spec = SyntheticSpec {
        dim: 4,
        classes: 3,
        separation: 1.5,
        noise: 1.0,
        samples_per_client: vec![per_client; clients],
        iid: false,
        primary_fraction: 0.7,
    };
    let data = generate_clients(&spec, seed);
    let eval = Dataset::concat(&data);
    (data, eval)
}

fn with_client(pop: &Population, i: usize, edit: impl FnOnce(&mut ClientProfile)) -> Population {
    let mut clients = pop.clients().to_vec();
    edit(&mut clients[i]);
    pop.with_parts(Some(clients), None, None).unwrap()
}

/// Every plan `optimize` returns on the criterion-1 family, with its instance.
fn returned_plans(seeds: std::ops::Range<u64>) -> Vec<(Population, LatencyProfile, OptimizerResult)> {
    let tol = Tolerances::default();
    seeds
        .flat_map(|s| {
            [
                oracle::random_instance(s, 3, 4),
                oracle::random_wide_instance(s + 10_000, 6, 5),
            ]
        })
        .filter_map(|(pop, prof)| optimize(&pop, &prof, &tol).ok().map(|r| (pop, prof, r)))
        .collect()
}

// ---------------------------------------------------------------- criteria

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let (mut compared, mut worst, mut disagreements) = (0, 0.0f64, 0);
    for seed in 0..30 {
        let (pop, prof) = oracle::random_instance(seed, 3, 4);
        match (optimize(&pop, &prof, &tol), oracle::brute_force(&pop, &prof, 1e-3)) {
            (Ok(r), Some(best)) => {
                compared += 1;
                worst = worst.max((r.objective - best.objective).abs());
            }
            (Err(_), None) => {}
            _ => disagreements += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        compared >= 20 && worst <= 1e-3 && disagreements == 0 && elapsed < Duration::from_secs(300),
        format!(
            "{compared} instances, max |gap| {worst:.2e} (tol 1e-3), {disagreements} feasibility disagreements, {:.1}s (limit 300s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn kkt_residual(plans: &[(Population, LatencyProfile, OptimizerResult)]) -> Outcome {
    let residuals: Vec<f64> = plans
        .iter()
        .flat_map(|(pop, _, r)| r.stationarity_residuals(pop).into_iter().map(|(_, v)| v))
        .collect();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let count = |s: ProbeStatus| plans.iter().filter(|(_, _, r)| r.status == s).count();
    outcome(
        !residuals.is_empty() && worst <= 1e-6,
        format!(
            "{} interior positive clients over {} plans ({} vertex, {} pinned without finite multipliers), max relative residual {worst:.2e} (tol 1e-6)",
            residuals.len(),
            plans.len(),
            count(ProbeStatus::Vertex),
            count(ProbeStatus::Pinned)
        ),
    )
}

fn constraint_satisfaction(plans: &[(Population, LatencyProfile, OptimizerResult)]) -> Outcome {
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    for (n, (pop, prof, r)) in plans.iter().enumerate() {
        let sum: f64 = r.plan.q.iter().sum();
        let latency = expected_round_latency(&r.plan, pop, prof);
        let c4 = pop.max_inflated_ratio(&r.plan.q) <= r.plan.aux_m + tol.eps_m;
        let max_cut = r.plan.cut_layers.iter().max() == Some(&r.plan.max_cut);
        if (sum - 1.0).abs() > tol.eps_lambda
            || latency > pop.system().latency_budget + tol.eps_nu
            || !c4
            || !max_cut
            || r.plan.check(pop, tol.eps_lambda, tol.eps_m).is_err()
        {
            failures.push(n);
        }
    }
    outcome(
        failures.is_empty(),
        format!("{} plans checked, violations at {failures:?}", plans.len()),
    )
}

fn fixed_point() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let (pop, prof) = oracle::random_instance(seed, 8, 4);
        let clients: Vec<_> = pop
            .clients()
            .iter()
            .map(|c| ClientProfile {
                upload_failure: 0.0,
                download_failure: 0.0,
                aggregate_failure: 0.0,
                ..c.clone()
            })
            .collect();
        let mut sys = pop.system().clone();
        sys.learning_rate = 0.0;
        sys.latency_budget = 1e9;
        let pop = pop.with_parts(Some(clients), None, Some(sys)).unwrap();
        let Ok(r) = optimize(&pop, &prof, &Tolerances::default()) else {
            return outcome(false, format!("seed {seed}: optimizer failed"));
        };
        let sum_sq: f64 = pop.clients().iter().map(|c| c.weight * c.weight).sum();
        for (c, &q) in pop.clients().iter().zip(&r.plan.q) {
            worst = worst.max((q - c.weight * c.weight / sum_sq).abs());
        }
        worst = worst.max((r.plan.aux_m - sum_sq).abs());
    }
    outcome(
        worst <= 1e-6,
        format!("20 instances, max deviation {worst:.2e} (tol 1e-6)"),
    )
}

fn unbiasedness() -> Outcome {
    let start = Instant::now();
    let layers = 5;
    let model = Quadratic {
        curvature: 1.5,
        sizes: vec![2; layers],
    };
    let data: Vec<Dataset> = (0..3)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i);
            let features = (0..2 * layers * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
            Dataset::new(2 * layers, features, vec![0; 4])
        })
        .collect();
    let eval = data[0].clone();
    let init = model.init(&mut ChaCha8Rng::seed_from_u64(0));
    let weights = [0.2, 0.3, 0.5];
    let run = |fail: f64, seed: u64| {
        let pop = population(&weights, &[[fail; 3]; 3], flat_stats(layers), 3, 1, 0.1, 1);
        let plan = SamplingPlan::from_parts(&pop, vec![1.0 / 3.0; 3], vec![1, 2, 3]);
        let mut sim = Simulation::with_initial(
            &pop,
            &plan,
            &model,
            &data,
            &eval,
            config(seed, 4, ClientSchedule::RoundRobin),
            init.clone(),
        )
        .unwrap();
        sim.step();
        sim.global_model()
            .iter()
            .zip(&init)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>())
            .collect::<Vec<_>>()
    };
    let reference = run(0.0, 0);
    let replicates = 100_000;
    let mut sums = vec![(0.0, 0.0); layers];
    for seed in 0..replicates {
        for (j, (d, u)) in run(0.3, seed).iter().zip(&reference).enumerate() {
            let norm = squared_norm(std::slice::from_ref(u)).sqrt();
            let x = d.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / norm;
            sums[j].0 += x;
            sums[j].1 += x * x;
        }
    }
    let n = replicates as f64;
    let z: Vec<f64> = sums
        .iter()
        .zip(&reference)
        .map(|((s, s2), u)| {
            let mean = s / n;
            let se = ((s2 / n - mean * mean) / n).sqrt();
            (mean - squared_norm(std::slice::from_ref(u)).sqrt()).abs() / se
        })
        .collect();
    let elapsed = start.elapsed();
    let worst = z.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= 3.0 && elapsed < Duration::from_secs(60),
        format!(
            "1e5 replicates, per-block |z| max {worst:.2} (limit 3), {:.1}s (limit 60s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn discrepancy() -> Outcome {
    let (n, k, rounds, replicates) = (10, 3, 20, 200);
    let spec = SyntheticSpec {
        dim: 4,
        classes: 3,
        separation: 1.5,
        noise: 1.0,
        samples_per_client: (0..n).map(|i| 20 + 4 * i).collect(),
        iid: false,
        primary_fraction: 0.7,
    };
    let data = generate_clients(&spec, 1);
    let eval = Dataset::concat(&data);
    let model = Mlp::six_layer(4, 6, 3);
    let weights = sfl_sim::dataset_weights(&data);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fails: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.random_range(0.1..0.4),
                rng.random_range(0.1..0.4),
                rng.random_range(0.1..0.4),
            ]
        })
        .collect();
    let pop = population(&weights, &fails, flat_stats(6), k, 5, 0.05, rounds);
    let raw: Vec<f64> = weights.iter().map(|m| m.sqrt()).collect();
    let total: f64 = raw.iter().sum();
    let cuts: Vec<usize> = (0..n).map(|_| rng.random_range(1..=3)).collect();
    let plan = SamplingPlan::from_parts(&pop, raw.iter().map(|r| r / total).collect(), cuts);
    let init = model.init(&mut ChaCha8Rng::seed_from_u64(3));
    let lc = plan.max_cut;
    let mut gap = vec![vec![0.0; n]; rounds];
    let mut g_max = vec![0.0f64; 6];
    for seed in 0..replicates {
        let mut sim = Simulation::with_initial(
            &pop,
            &plan,
            &model,
            &data,
            &eval,
            config(seed, 8, ClientSchedule::Sampled),
            init.clone(),
        )
        .unwrap();
        for row in gap.iter_mut() {
            for (_, norms) in &sim.step().layer_grad_sq {
                g_max.iter_mut().zip(norms).for_each(|(g, v)| *g = g.max(*v));
            }
            let agg = sim.aggregated_model();
            for (i, cell) in row.iter_mut().enumerate() {
                let d: f64 = agg[..lc]
                    .iter()
                    .zip(sim.client_model(i))
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
                    .sum();
                *cell += d / replicates as f64;
            }
        }
    }
    let mut stats = pop.stats().clone();
    stats.g_sq = g_max;
    let measured = pop.with_parts(None, Some(stats), None).unwrap();
    let mut worst = 0.0f64;
    let mut violations = 0;
    for row in &gap {
        for (i, &g) in row.iter().enumerate() {
            let b = discrepancy_bound(i, &plan, &measured);
            worst = worst.max(g / b);
            violations += usize::from(g > b);
        }
    }
    outcome(
        violations == 0,
        format!("{rounds} rounds x {n} clients, {replicates} replicates, max measured/bound {worst:.3}, {violations} violations"),
    )
}

fn monotonicity() -> Outcome {
    let values: Vec<f64> = (0..10).map(|k| 0.09 * k as f64).collect();
    let mut bad = Vec::new();
    let mut cases = 0;
    let non_decreasing = |xs: &[f64]| xs.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
    for seed in 0..10 {
        let (pop, _) = oracle::random_wide_instance(seed, 6, 5);
        let n = pop.num_clients();
        let raw: Vec<f64> = (0..n).map(|i| 1.0 + ((seed as usize * 7 + i * 3) % 5) as f64).collect();
        let total: f64 = raw.iter().sum();
        let cuts = (0..n)
            .map(|i| pop.system().min_cut.max(1 + i % pop.num_layers()))
            .collect();
        let plan = SamplingPlan::from_parts(&pop, raw.iter().map(|x| x / total).collect(), cuts);
        let at = |p: &Population| convergence_upper_bound(&plan, p).total;
        for i in 0..n {
            for kind in 0..3 {
                let sweep: Vec<f64> = values
                    .iter()
                    .map(|&v| {
                        at(&with_client(&pop, i, |c| match kind {
                            0 => c.upload_failure = v,
                            1 => c.download_failure = v,
                            _ => c.aggregate_failure = v,
                        }))
                    })
                    .collect();
                cases += 1;
                if !non_decreasing(&sweep) {
                    bad.push(format!("seed {seed} client {} kind {kind}", i + 1));
                }
            }
            // matched increments from a common base
            for w in values.windows(2) {
                let base = with_client(&pop, i, |c| {
                    c.upload_failure = w[0];
                    c.download_failure = w[0];
                    c.aggregate_failure = w[0];
                });
                let origin = at(&base);
                let up = at(&with_client(&base, i, |c| c.upload_failure = w[1])) - origin;
                let down = at(&with_client(&base, i, |c| c.download_failure = w[1])) - origin;
                let agg = at(&with_client(&base, i, |c| c.aggregate_failure = w[1])) - origin;
                let slack = 1e-12 * up.abs().max(1.0);
                cases += 1;
                if up < down - slack || up < agg - slack {
                    bad.push(format!("seed {seed} client {} dominance at {}", i + 1, w[0]));
                }
            }
        }
        let intervals: Vec<f64> = (1..=10)
            .map(|interval| {
                let mut sys = pop.system().clone();
                sys.aggregation_interval = interval;
                at(&pop.with_parts(None, None, Some(sys)).unwrap())
            })
            .collect();
        cases += 1;
        if !non_decreasing(&intervals) {
            bad.push(format!("seed {seed} interval sweep"));
        }
    }
    outcome(
        bad.is_empty(),
        format!("{cases} sweeps and dominance checks on 10 instances, failures: {bad:?}"),
    )
}

/// Settings for the single-failure-kind runs.
fn failure_config(kind: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    let p = &mut c.population;
    p.num_clients = 20;
    p.upload_failure = Range::point(0.0);
    p.download_failure = Range::point(0.0);
    p.aggregate_failure = Range::point(0.0);
    match kind {
        "upload" => p.upload_failure = Range::point(0.4),
        "download" => p.download_failure = Range::point(0.4),
        _ => p.aggregate_failure = Range::point(0.4),
    }
    c.system.clients_per_round = 5;
    c.system.aggregation_interval = FAILURE_INTERVAL;
    c.system.min_cut = FAILURE_MIN_CUT;
    c
}

const FAILURE_SEEDS: u64 = 21;
const FAILURE_INTERVAL: usize = 1;
const FAILURE_MIN_CUT: usize = 4;

fn failure_ordering() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=FAILURE_SEEDS).collect();
    let mut medians = Vec::new();
    for kind in ["upload", "aggregate", "download"] {
        let cmp = compare_policies(&failure_config(kind), &[Policy::RandomFixedSplit], &seeds).expect("failure run");
        medians.push(cmp.rows[0].median_final_loss());
    }
    let elapsed = start.elapsed();
    outcome(
        medians[0] >= medians[1] && medians[1] >= medians[2] && elapsed < Duration::from_secs(600),
        format!(
            "median final loss over {FAILURE_SEEDS} seeds: upload {:.4}, aggregation {:.4}, download {:.4}; {:.0}s (limit 600s)",
            medians[0],
            medians[1],
            medians[2],
            elapsed.as_secs_f64()
        ),
    )
}

fn centralized_sgd() -> Outcome {
    let (data, eval) = task(1, 60, 3);
    let model = Mlp::six_layer(4, 6, 3);
    let (gamma, rounds, batch, seed) = (0.1, 40, 8, 17);
    let pop = population(&[1.0], &[[0.0; 3]], flat_stats(6), 1, 1, gamma, rounds);
    let mut worst = 0.0f64;
    for cut in 1..=6 {
        let plan = SamplingPlan::from_parts(&pop, vec![1.0], vec![cut]);
        let trace = run_training(
            &pop,
            &plan,
            &model,
            &data,
            &eval,
            config(seed, batch, ClientSchedule::Sampled),
        )
        .unwrap();
        let mut w = model.init(&mut init_rng(seed));
        for (t, record) in (1..=rounds).zip(&trace.records) {
            let idx = batch_indices(&mut batch_rng(seed, 0, t), data[0].len(), batch);
            let (_, g) = model.gradient(&w, &data[0], &idx);
            w.iter_mut()
                .zip(&g)
                .for_each(|(p, gv)| p.iter_mut().zip(gv).for_each(|(a, b)| *a -= gamma * b));
            worst = worst.max((record.loss - model.loss(&w, &eval, &eval.all())).abs());
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{rounds} rounds at every cut 1..=6, max |loss - reference| {worst:.2e} (tol 1e-12)"),
    )
}

fn comparison_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.population.num_clients = 20;
    c.system.clients_per_round = 5;
    c
}

fn policy_comparison(out: &Path) -> Outcome {
    let seeds: Vec<u64> = (1..=10).collect();
    let policies = [
        Policy::OmsOcs,
        Policy::Uniform,
        Policy::Weighted,
        Policy::RoundRobin,
        Policy::RandomFixedSplit,
    ];
    let cmp = match compare_policies(&comparison_config(), &policies, &seeds) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("comparison failed: {e}")),
    };
    cmp.artifacts().write_to(out).expect("write comparison artifact");
    let ours = cmp.rows[0].median_final_loss();
    let others: Vec<String> = cmp.rows[1..]
        .iter()
        .map(|r| format!("{} {:.4}", r.policy, r.median_final_loss()))
        .collect();
    let pass = cmp.rows[1..].iter().all(|r| ours <= r.median_final_loss());
    outcome(
        pass,
        format!(
            "median final loss over 10 seeds: oms-ocs {ours:.4} vs {}; table in {}",
            others.join(", "),
            out.join("comparison.csv").display()
        ),
    )
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output directory")
        .map(|e| {
            let e = e.expect("directory entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("artifact"),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism(work: &Path) -> Outcome {
    let cfg = work.join("determinism.cfg");
    let mut c = ExperimentConfig::default();
    c.population.num_clients = 6;
    c.system.rounds = 20;
    c.policy.compare = vec![Policy::OmsOcs, Policy::RoundRobin];
    c.policy.compare_seeds = 2;
    std::fs::write(&cfg, c.to_raw().to_text()).expect("write config");
    let mut bad = Vec::new();
    for verb in ["optimize", "simulate", "calibrate", "compare"] {
        let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
            .map(|k| {
                let out = work.join(format!("{verb}-{k}"));
                let _ = std::fs::remove_dir_all(&out);
                let status = Command::new(env!("CARGO_BIN_EXE_sflopt"))
                    .args([verb, "--config"])
                    .arg(&cfg)
                    .args(["--seed", "7", "--noise-cv", "0.1", "--out"])
                    .arg(&out)
                    .output()
                    .expect("run sflopt");
                if !status.status.success() {
                    bad.push(format!("{verb}: {}", String::from_utf8_lossy(&status.stderr).trim()));
                }
                files_in(&out)
            })
            .collect();
        if runs[0].is_empty() || runs[0] != runs[1] {
            bad.push(format!("{verb}: outputs differ or are missing"));
        }
    }
    outcome(
        bad.is_empty(),
        format!("optimize, simulate, calibrate, compare each run twice; problems: {bad:?}"),
    )
}

/// Instance with exactly `n` clients and `layers` layers and an unconstraining budget.
fn sized_instance(n: usize, layers: usize, seed: u64) -> (Population, LatencyProfile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let total: f64 = raw.iter().sum();
    let clients = raw
        .iter()
        .enumerate()
        .map(|(i, r)| ClientProfile {
            id: i + 1,
            weight: r / total,
            upload_failure: rng.random_range(0.0..0.4),
            download_failure: rng.random_range(0.0..0.4),
            aggregate_failure: rng.random_range(0.0..0.4),
            uplink_rate: rng.random_range(1.0..10.0),
            downlink_rate: rng.random_range(1.0..10.0),
            fed_uplink_rate: rng.random_range(1.0..10.0),
            compute_speed: rng.random_range(1.0..10.0),
        })
        .collect();
    let stats = ModelStatistics {
        sigma_sq: (0..layers).map(|_| rng.random_range(0.1..0.2)).collect(),
        g_sq: (0..layers).map(|_| rng.random_range(0.0002..0.002)).collect(),
        beta: 1.0,
        loss_gap: 1.0,
    };
    let system = SystemConfig {
        num_clients: n,
        clients_per_round: 3.min(n),
        aggregation_interval: 2,
        learning_rate: 0.1,
        rounds: 100,
        latency_budget: 1e12,
        min_cut: 1,
    };
    let activation: Vec<f64> = (0..layers).map(|_| rng.random_range(0.1..2.0)).collect();
    let mut prefix = Vec::with_capacity(layers);
    let mut acc = 0.0;
    for _ in 0..layers {
        acc += rng.random_range(0.1..1.0);
        prefix.push(acc);
    }
    let prof = LatencyProfile::new(activation, prefix, acc * 1.5, 20.0).unwrap();
    (Population::new(clients, stats, system).unwrap(), prof)
}

fn complexity() -> Outcome {
    let ns = [10usize, 50, 100];
    let ls = [6usize, 12, 24];
    let mut times = [[0.0f64; 3]; 3];
    for (a, &n) in ns.iter().enumerate() {
        for (b, &l) in ls.iter().enumerate() {
            let (pop, prof) = sized_instance(n, l, (n * 100 + l) as u64);
            let samples: Vec<f64> = (0..5)
                .map(|_| {
                    let start = Instant::now();
                    let r = optimize(&pop, &prof, &Tolerances::default());
                    let t = start.elapsed().as_secs_f64();
                    assert!(r.is_ok(), "N={n} L={l}: {:?}", r.err());
                    t
                })
                .collect();
            times[a][b] = median(samples);
        }
    }
    // least-squares slope of log time against log size, per row and column
    let slope = |xs: &[usize], ts: &[f64]| {
        let lx: Vec<f64> = xs.iter().map(|&x| (x as f64).ln()).collect();
        let lt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let (mx, mt) = (lx.iter().sum::<f64>() / 3.0, lt.iter().sum::<f64>() / 3.0);
        let cov: f64 = lx.iter().zip(&lt).map(|(x, t)| (x - mx) * (t - mt)).sum();
        cov / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
    };
    let n_slopes: Vec<f64> = (0..3)
        .map(|b| slope(&ns, &[times[0][b], times[1][b], times[2][b]]))
        .collect();
    let l_slopes: Vec<f64> = (0..3).map(|a| slope(&ls, &times[a])).collect();
    let pass = n_slopes.iter().all(|&s| s <= COMPLEXITY_N_SLOPE) && l_slopes.iter().all(|&s| s <= COMPLEXITY_L_SLOPE);
    let grid: Vec<String> = times
        .iter()
        .zip(ns)
        .map(|(row, n)| {
            format!(
                "N={n}: {}",
                row.iter()
                    .map(|t| format!("{:.1}ms", t * 1e3))
                    .collect::<Vec<_>>()
                    .join("/")
            )
        })
        .collect();
    outcome(
        pass,
        format!(
            "median of 5 at L=6/12/24 [{}]; N slopes {:?} (limit {COMPLEXITY_N_SLOPE}), L slopes {:?} (limit {COMPLEXITY_L_SLOPE})",
            grid.join("; "),
            n_slopes.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
            l_slopes.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
        ),
    )
}

// Exponent allowance of 0.2 over linear and quadratic for timer noise and
// instance-to-instance variation in the number of refined minima.
const COMPLEXITY_N_SLOPE: f64 = 1.2;
const COMPLEXITY_L_SLOPE: f64 = 2.2;

fn main() {
    let work: PathBuf = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&work).expect("work directory");
    let plans = returned_plans(0..40);
    let criteria: Vec<(&str, Check<'_>)> = vec![
        ("optimizer matches brute force", Box::new(oracle_equivalence)),
        ("stationarity residual", Box::new(|| kkt_residual(&plans))),
        ("constraint satisfaction", Box::new(|| constraint_satisfaction(&plans))),
        ("zero learning rate fixed point", Box::new(fixed_point)),
        ("unbiased scaled updates", Box::new(unbiasedness)),
        ("client discrepancy bound", Box::new(discrepancy)),
        ("bound monotonicity and upload dominance", Box::new(monotonicity)),
        ("failure impact ordering", Box::new(failure_ordering)),
        ("centralized SGD equivalence", Box::new(centralized_sgd)),
        (
            "policy comparison",
            Box::new(|| policy_comparison(&work.join("comparison"))),
        ),
        ("CLI determinism", Box::new(|| determinism(&work))),
        ("optimizer complexity", Box::new(complexity)),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} [{:>2}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            n + 1,
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
