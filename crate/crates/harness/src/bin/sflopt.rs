use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sfl_harness::{
    calibrate_artifacts, compare_policies, optimize_artifacts, run_experiment, Artifacts, ExperimentConfig,
    HarnessError, Policy, RawConfig,
};

/// Sampling and model-splitting experiments for split federated learning over unreliable links.
#[derive(Parser)]
#[command(name = "sflopt", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Pick the policy's plan and write plan.csv and summary.csv.
    Optimize(Options),
    /// Pick the plan and train: plan.csv, trace.csv and summary.csv.
    Simulate(Options),
    /// Measure model statistics and write them as config keys to stats.cfg.
    Calibrate(Options),
    /// Train every compared policy on consecutive seeds: comparison.csv, runs.csv, curves.csv.
    Compare(Options),
}

#[derive(clap::Args)]
struct Options {
    /// Config file; repeat to layer files, later keys win.
    #[arg(long)]
    config: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Policy tag; `compare` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<Policy>,
    /// Coefficient of variation of the noise on failure probabilities fed to the optimizer.
    #[arg(long = "noise-cv")]
    noise_cv: Option<f64>,
}

impl Options {
    fn load(&self, many_policies: bool) -> Result<ExperimentConfig, HarnessError> {
        let mut raw = RawConfig::default();
        for path in &self.config {
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            raw.merge(RawConfig::parse(&text)?);
        }
        if let Some(seed) = self.seed {
            raw.set("system.seed", seed);
        }
        if let Some(cv) = self.noise_cv {
            raw.set("policy.noise_cv", cv);
        }
        match (&self.policy[..], many_policies) {
            ([], _) => {}
            (list, true) => raw.set(
                "policy.compare",
                list.iter().map(|p| p.tag()).collect::<Vec<_>>().join(","),
            ),
            ([one], false) => raw.set("policy.name", one),
            (list, false) => {
                return Err(HarnessError::InvalidValue {
                    key: "--policy".into(),
                    value: list.iter().map(|p| p.tag()).collect::<Vec<_>>().join(","),
                    reason: "this verb takes a single policy".into(),
                })
            }
        }
        ExperimentConfig::from_raw(&raw)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let (options, artifacts): (&Options, Artifacts) = match &cli.verb {
        Verb::Optimize(o) => (o, optimize_artifacts(&o.load(false)?)?),
        Verb::Simulate(o) => (o, run_experiment(&o.load(false)?)?),
        Verb::Calibrate(o) => (o, calibrate_artifacts(&o.load(false)?)?),
        Verb::Compare(o) => {
            let config = o.load(true)?;
            let first = config.system.seed;
            let seeds: Vec<u64> = (0..config.policy.compare_seeds as u64).map(|k| first + k).collect();
            (
                o,
                compare_policies(&config, &config.policy.compare, &seeds)?.artifacts(),
            )
        }
    };
    artifacts.write_to(&options.out)?;
    for (name, _) in &artifacts.files {
        println!("{}", options.out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sflopt: {e}");
            ExitCode::FAILURE
        }
    }
}
