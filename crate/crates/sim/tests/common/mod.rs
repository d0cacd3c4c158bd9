#![allow(dead_code)]

use sfl_core::{ClientProfile, ModelStatistics, Population, SamplingPlan, SystemConfig};
use sfl_sim::{ClientSchedule, Dataset, TrainingConfig};

/// Population with the given per-client `[upload, download, aggregate]` failure
/// probabilities and dataset weights; link rates do not matter to the simulator.
pub fn population(
    weights: &[f64],
    failures: &[[f64; 3]],
    layers: usize,
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
    let stats = ModelStatistics {
        sigma_sq: vec![1.0; layers],
        g_sq: vec![1.0; layers],
        beta: 1.0,
        loss_gap: 1.0,
    };
    let system = SystemConfig {
        num_clients: weights.len(),
        clients_per_round: k,
        aggregation_interval: interval,
        learning_rate: gamma,
        rounds,
        latency_budget: 1.0,
        min_cut: 1,
    };
    Population::new(clients, stats, system).expect("valid test population")
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub fn plan(pop: &Population, q: Vec<f64>, cuts: Vec<usize>) -> SamplingPlan {
    SamplingPlan::from_parts(pop, q, cuts)
}

pub fn config(seed: u64, batch_size: usize, schedule: ClientSchedule) -> TrainingConfig {
    TrainingConfig {
        batch_size,
        seed,
        schedule,
        round_latency: 0.5,
    }
}

/// `count` samples of dimension `dim` with coordinates in `[-1, 1)` and labels `0..classes`.
pub fn random_data(dim: usize, count: usize, classes: usize, seed: u64) -> Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let features = (0..dim * count).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..count).map(|_| rng.random_range(0..classes)).collect();
    Dataset::new(dim, features, labels)
}
