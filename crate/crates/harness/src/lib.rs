//! Experiment runner: reads a flat key-value config, builds a random client
//! population and synthetic task, calibrates model statistics, picks a
//! sampling plan per policy, simulates training and writes plain-text
//! artifacts that are byte-identical across reruns with the same seed.

pub mod config;
pub mod error;
pub mod experiment;
pub mod population;

pub use config::{ExperimentConfig, Policy, RawConfig};
pub use error::HarnessError;
pub use experiment::{
    calibrate_artifacts, compare_policies, optimize_artifacts, run_experiment, Artifacts, Comparison, Instance,
    PolicyPlan,
};
pub use population::{generate_population, perturb_failures, GeneratedPopulation};
