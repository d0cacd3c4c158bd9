//! Per-round latency of a client at a given cut layer.
//!
//! A round costs the activation upload, the gradient download (same size), the
//! client's share of the compute and the server's share of the compute:
//!
//! ```text
//! A_i(cut) = act[cut]/r_U + act[cut]/r_D + prefix[cut]/speed_i + (total - prefix[cut])/server_speed
//! ```
//!
//! Upload to the Fed server is not part of the per-round latency.

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::types::{ClientProfile, Population, SamplingPlan};

/// Layer sizes and compute costs. Index `j - 1` describes cut layer `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    activation_bytes: Vec<f64>,
    client_flops_prefix: Vec<f64>,
    total_flops: f64,
    server_speed: f64,
}

impl LatencyProfile {
    pub fn new(
        activation_bytes: Vec<f64>,
        client_flops_prefix: Vec<f64>,
        total_flops: f64,
        server_speed: f64,
    ) -> Result<Self, ValidationError> {
        let layers = activation_bytes.len();
        if layers == 0 {
            return Err(ValidationError::NoLayers);
        }
        if client_flops_prefix.len() != layers {
            return Err(ValidationError::LayerLength {
                field: "client_flops_prefix",
                expected: layers,
                found: client_flops_prefix.len(),
            });
        }
        for (field, values) in [
            ("activation_bytes", &activation_bytes),
            ("client_flops_prefix", &client_flops_prefix),
        ] {
            if let Some((j, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(ValidationError::LayerValue {
                    field,
                    layer: j + 1,
                    value,
                });
            }
        }
        if let Some(j) = (1..layers).find(|&j| client_flops_prefix[j] < client_flops_prefix[j - 1]) {
            return Err(ValidationError::NotMonotone {
                field: "client_flops_prefix",
                layer: j + 1,
            });
        }
        if !(total_flops.is_finite() && total_flops > 0.0) {
            return Err(ValidationError::Scalar {
                field: "total_flops",
                requirement: "positive and finite",
                value: total_flops,
            });
        }
        if client_flops_prefix[layers - 1] > total_flops {
            return Err(ValidationError::Scalar {
                field: "client_flops_prefix",
                requirement: "at most total_flops at the last layer",
                value: client_flops_prefix[layers - 1],
            });
        }
        if !(server_speed.is_finite() && server_speed > 0.0) {
            return Err(ValidationError::Scalar {
                field: "server_speed",
                requirement: "positive and finite",
                value: server_speed,
            });
        }
        Ok(LatencyProfile {
            activation_bytes,
            client_flops_prefix,
            total_flops,
            server_speed,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.activation_bytes.len()
    }

    pub fn activation_bytes(&self) -> &[f64] {
        &self.activation_bytes
    }

    pub fn client_flops_prefix(&self) -> &[f64] {
        &self.client_flops_prefix
    }

    pub fn total_flops(&self) -> f64 {
        self.total_flops
    }

    pub fn server_speed(&self) -> f64 {
        self.server_speed
    }
}

/// Round latency of `client` when split at `cut` (1-based, `cut <= L`).
pub fn per_client_latency(client: &ClientProfile, prof: &LatencyProfile, cut: usize) -> f64 {
    let act = prof.activation_bytes[cut - 1];
    let prefix = prof.client_flops_prefix[cut - 1];
    act / client.uplink_rate
        + act / client.downlink_rate
        + prefix / client.compute_speed
        + (prof.total_flops - prefix) / prof.server_speed
}

/// Latency-minimizing cut in `[min_cut, cap]` and its latency. Ties go to the shallower cut.
pub fn best_split(client: &ClientProfile, prof: &LatencyProfile, min_cut: usize, cap: usize) -> (usize, f64) {
    let mut best = (min_cut, per_client_latency(client, prof, min_cut));
    for cut in min_cut + 1..=cap {
        let a = per_client_latency(client, prof, cut);
        if a < best.1 {
            best = (cut, a);
        }
    }
    best
}

/// `K * sum_i q_i A_i(cut_i)`.
pub fn expected_round_latency(plan: &SamplingPlan, pop: &Population, prof: &LatencyProfile) -> f64 {
    let k = pop.system().clients_per_round as f64;
    k * pop
        .clients()
        .iter()
        .zip(plan.q.iter().zip(&plan.cut_layers))
        .map(|(c, (&q, &cut))| q * per_client_latency(c, prof, cut))
        .sum::<f64>()
}
