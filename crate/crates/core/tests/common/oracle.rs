//! Brute-force reference for the sampling/splitting problem on tiny instances.
//!
//! Everything is recomputed from the raw population fields; nothing here calls
//! into the bound, latency or optimizer modules.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfl_core::{ClientProfile, LatencyProfile, ModelStatistics, Population, SystemConfig};

pub struct Best {
    pub objective: f64,
    pub q: Vec<f64>,
    pub cuts: Vec<usize>,
    pub max_cut: usize,
}

fn success(c: &ClientProfile) -> f64 {
    (1.0 - c.upload_failure) * (1.0 - c.download_failure) * (1.0 - c.aggregate_failure)
}

/// Full bound at `(q, max_cut)`, written out term by term.
pub fn bound(pop: &Population, q: &[f64], max_cut: usize) -> f64 {
    let s = pop.stats();
    let sys = pop.system();
    let n = pop.num_clients() as f64;
    let mut worst: f64 = 0.0;
    for (c, &qi) in pop.clients().iter().zip(q) {
        worst = worst.max(c.weight * c.weight / (qi * success(c)));
    }
    let mut client_side = 0.0;
    let mut server_side = 0.0;
    let mut g_client = 0.0;
    let mut g_all = 0.0;
    for j in 0..s.g_sq.len() {
        if j < max_cut {
            client_side += s.sigma_sq[j] + s.g_sq[j];
            g_client += s.g_sq[j];
        } else {
            server_side += s.sigma_sq[j] + s.g_sq[j];
        }
        g_all += s.g_sq[j];
    }
    let b = s.beta;
    let g = sys.learning_rate;
    let i2 = (sys.aggregation_interval * sys.aggregation_interval) as f64;
    let mut total = if s.loss_gap == 0.0 {
        0.0
    } else {
        2.0 * s.loss_gap / (g * sys.rounds as f64)
    };
    for (c, &qi) in pop.clients().iter().zip(q) {
        let p = c.upload_failure;
        let d = c.download_failure;
        let a = c.aggregate_failure;
        let var = b * g / (1.0 - p) * (client_side / ((1.0 - d) * (1.0 - a)) + server_side);
        let drift = 2.0 * b * b * g * g * i2 * (n * worst + 1.0 / ((1.0 - a) * (1.0 - p) * (1.0 - d))) * g_client;
        total += c.weight * c.weight / qi * (var + drift - g_all);
    }
    total
}

pub fn latency(c: &ClientProfile, prof: &LatencyProfile, cut: usize) -> f64 {
    let act = prof.activation_bytes()[cut - 1];
    let pre = prof.client_flops_prefix()[cut - 1];
    act / c.uplink_rate
        + act / c.downlink_rate
        + pre / c.compute_speed
        + (prof.total_flops() - pre) / prof.server_speed()
}

/// Every cut assignment in `[min_cut, max_cut]^n` whose deepest cut is `max_cut`.
fn assignments(n: usize, min_cut: usize, max_cut: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for prefix in &out {
            for cut in min_cut..=max_cut {
                let mut v = prefix.clone();
                v.push(cut);
                next.push(v);
            }
        }
        out = next;
    }
    out.retain(|v| v.iter().copied().max() == Some(max_cut));
    out
}

/// Grid search over `q_i = k_i * step`, `k_i >= 1`, times all cut assignments.
pub fn brute_force(pop: &Population, prof: &LatencyProfile, step: f64) -> Option<Best> {
    let n = pop.num_clients();
    assert!(n <= 3);
    let units = (1.0 / step).round() as usize;
    let sys = pop.system();
    let k = sys.clients_per_round as f64;
    let mut grid: Vec<Vec<f64>> = Vec::new();
    match n {
        1 => grid.push(vec![1.0]),
        2 => {
            for a in 1..units {
                grid.push(vec![a as f64 * step, (units - a) as f64 * step]);
            }
        }
        _ => {
            for a in 1..units {
                for b in 1..units - a {
                    let c = units - a - b;
                    grid.push(vec![a as f64 * step, b as f64 * step, c as f64 * step]);
                }
            }
        }
    }
    let mut best: Option<Best> = None;
    for max_cut in sys.min_cut..=pop.num_layers() {
        let options: Vec<(Vec<usize>, Vec<f64>)> = assignments(n, sys.min_cut, max_cut)
            .into_iter()
            .map(|cuts| {
                let lat = cuts
                    .iter()
                    .zip(pop.clients())
                    .map(|(&cut, c)| latency(c, prof, cut))
                    .collect();
                (cuts, lat)
            })
            .collect();
        for q in &grid {
            let feasible = options
                .iter()
                .find(|(_, lat)| k * q.iter().zip(lat).map(|(q, a)| q * a).sum::<f64>() <= sys.latency_budget);
            if let Some((cuts, _)) = feasible {
                let value = bound(pop, q, max_cut);
                if best.as_ref().is_none_or(|b| value < b.objective) {
                    best = Some(Best {
                        objective: value,
                        q: q.clone(),
                        cuts: cuts.clone(),
                        max_cut,
                    });
                }
            }
        }
    }
    best
}

/// Small random instance whose gradient noise dominates the second moments,
/// so the bound stays positive and the optimal `q` stays away from zero.
pub fn random_instance(seed: u64, max_clients: usize, max_layers: usize) -> (Population, LatencyProfile) {
    random_instance_with(seed, max_clients, max_layers, (0.1, 0.2), (0.0002, 0.002))
}

/// Same family with noise and second moments of the same size, where many
/// coefficients are negative and optimal distributions can be extreme.
pub fn random_wide_instance(seed: u64, max_clients: usize, max_layers: usize) -> (Population, LatencyProfile) {
    random_instance_with(seed, max_clients, max_layers, (0.01, 0.1), (0.01, 0.1))
}

pub fn random_instance_with(
    seed: u64,
    max_clients: usize,
    max_layers: usize,
    sigma: (f64, f64),
    second: (f64, f64),
) -> (Population, LatencyProfile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(max_clients.min(2)..=max_clients);
    let layers = rng.random_range(2..=max_layers);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let clients: Vec<ClientProfile> = raw
        .iter()
        .enumerate()
        .map(|(i, w)| ClientProfile {
            id: i + 1,
            weight: w / total,
            upload_failure: rng.random_range(0.0..0.4),
            download_failure: rng.random_range(0.0..0.4),
            aggregate_failure: rng.random_range(0.0..0.4),
            uplink_rate: rng.random_range(0.5..2.0),
            downlink_rate: rng.random_range(0.5..2.0),
            fed_uplink_rate: rng.random_range(0.5..2.0),
            compute_speed: rng.random_range(0.3..3.0),
        })
        .collect();
    let stats = ModelStatistics {
        sigma_sq: (0..layers).map(|_| rng.random_range(sigma.0..sigma.1)).collect(),
        g_sq: (0..layers).map(|_| rng.random_range(second.0..second.1)).collect(),
        beta: rng.random_range(0.5..2.0),
        loss_gap: rng.random_range(0.5..2.0),
    };
    let mut act: Vec<f64> = (0..layers).map(|_| rng.random_range(0.5..4.0)).collect();
    act.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = Vec::with_capacity(layers);
    let mut acc = 0.0;
    for _ in 0..layers {
        acc += rng.random_range(0.5..2.0);
        prefix.push(acc);
    }
    let prof = LatencyProfile::new(
        act,
        prefix,
        acc + rng.random_range(0.5..2.0),
        rng.random_range(1.0..4.0),
    )
    .unwrap();
    let min_cut = rng.random_range(1..=layers.min(2));
    let k = rng.random_range(1..=n);
    let per_client: Vec<(f64, f64)> = clients
        .iter()
        .map(|c| {
            let lats: Vec<f64> = (min_cut..=layers).map(|cut| latency(c, &prof, cut)).collect();
            (
                lats.iter().copied().fold(f64::INFINITY, f64::min),
                lats.iter().copied().fold(0.0, f64::max),
            )
        })
        .collect();
    let lo = per_client.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let hi = per_client.iter().map(|x| x.1).fold(0.0, f64::max);
    let budget = k as f64 * (lo + rng.random_range(0.3..1.3) * (hi - lo));
    let sys = SystemConfig {
        num_clients: n,
        clients_per_round: k,
        aggregation_interval: rng.random_range(1..=2),
        learning_rate: rng.random_range(0.05..0.3),
        rounds: 100,
        latency_budget: budget,
        min_cut,
    };
    (Population::new(clients, stats, sys).unwrap(), prof)
}
