//! Random client populations, failure-probability noise and the latency
//! profile of a fully connected model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sfl_core::{best_split, ClientProfile, LatencyProfile, ValidationError};

use crate::config::{PopulationSpec, Range, WeightScheme};

/// Largest failure probability handed to the optimizer after noise.
pub const MAX_NOISY_PROBABILITY: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPopulation {
    pub clients: Vec<ClientProfile>,
    /// Dataset size of each client.
    pub sizes: Vec<usize>,
}

fn draw(range: Range, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    if range.lo == range.hi {
        range.lo
    } else {
        range.lo + (range.hi - range.lo) * u
    }
}

/// Clients with dataset sizes, failure probabilities, rates and speeds drawn
/// uniformly from the configured ranges.
pub fn generate_population(spec: &PopulationSpec, rng: &mut ChaCha8Rng) -> GeneratedPopulation {
    let n = spec.num_clients;
    let (lo, hi) = (spec.samples.lo.round() as usize, spec.samples.hi.round() as usize);
    let mut sizes = Vec::with_capacity(n);
    let mut clients = Vec::with_capacity(n);
    for i in 0..n {
        sizes.push(rng.random_range(lo..=hi.max(lo)));
        clients.push(ClientProfile {
            id: i + 1,
            weight: 0.0,
            upload_failure: draw(spec.upload_failure, rng),
            download_failure: draw(spec.download_failure, rng),
            aggregate_failure: draw(spec.aggregate_failure, rng),
            uplink_rate: draw(spec.uplink_rate, rng),
            downlink_rate: draw(spec.downlink_rate, rng),
            fed_uplink_rate: draw(spec.fed_uplink_rate, rng),
            compute_speed: draw(spec.compute_speed, rng),
        });
    }
    let total: usize = sizes.iter().sum();
    for (c, &d) in clients.iter_mut().zip(&sizes) {
        c.weight = match spec.weights {
            WeightScheme::Data => d as f64 / total as f64,
            WeightScheme::Uniform => 1.0 / n as f64,
        };
    }
    GeneratedPopulation { clients, sizes }
}

/// Copies of `clients` whose failure probabilities carry multiplicative
/// Gaussian noise with coefficient of variation `cv`, clamped to `[0, 0.99]`.
pub fn perturb_failures(clients: &[ClientProfile], cv: f64, rng: &mut ChaCha8Rng) -> Vec<ClientProfile> {
    let mut noisy = |p: f64| {
        let z: f64 = rng.sample(StandardNormal);
        (p * (1.0 + cv * z)).clamp(0.0, MAX_NOISY_PROBABILITY)
    };
    clients
        .iter()
        .map(|c| ClientProfile {
            upload_failure: noisy(c.upload_failure),
            download_failure: noisy(c.download_failure),
            aggregate_failure: noisy(c.aggregate_failure),
            ..c.clone()
        })
        .collect()
}

/// Latency profile of a fully connected network with the given widths: cutting
/// after layer `j` ships `batch * widths[j]` values each way, and a layer costs
/// six operations per weight per sample (forward and backward).
pub fn mlp_profile(
    widths: &[usize],
    batch_size: usize,
    bytes_per_value: f64,
    server_speed: f64,
) -> Result<LatencyProfile, ValidationError> {
    let b = batch_size as f64;
    let activation: Vec<f64> = widths[1..].iter().map(|&w| b * w as f64 * bytes_per_value).collect();
    let mut prefix = Vec::with_capacity(activation.len());
    let mut total = 0.0;
    for pair in widths.windows(2) {
        total += 6.0 * b * ((pair[0] + 1) * pair[1]) as f64;
        prefix.push(total);
    }
    LatencyProfile::new(activation, prefix, total, server_speed)
}

/// `K/N sum_i min_cut A_i(cut)`: expected latency of uniform sampling with
/// every client at its fastest cut.
pub fn reference_latency(clients: &[ClientProfile], prof: &LatencyProfile, k: usize, min_cut: usize) -> f64 {
    let n = clients.len() as f64;
    let layers = prof.num_layers();
    k as f64 / n
        * clients
            .iter()
            .map(|c| best_split(c, prof, min_cut, layers).1)
            .sum::<f64>()
}
