//! Population, model statistics, system configuration and sampling plans.
//!
//! Everything here is plain data. A [`Population`] can only be obtained through
//! [`Population::new`], which checks every invariant, so downstream modules
//! take `&Population` and never re-validate.

use serde::{Deserialize, Serialize};

use crate::error::{PlanError, ValidationError};

/// Absolute tolerance on `sum(m) == 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One client: dataset weight, the three failure probabilities, and link/compute speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    /// 1-based index into the population.
    pub id: usize,
    /// Dataset weight `m_i = D_i / D`.
    pub weight: f64,
    /// Probability that the activation upload to the edge server fails (`p_i`).
    pub upload_failure: f64,
    /// Probability that the gradient download from the edge server fails (`phi_i`).
    pub download_failure: f64,
    /// Probability that the client-model upload to the Fed server fails (`a_i`).
    pub aggregate_failure: f64,
    pub uplink_rate: f64,
    pub downlink_rate: f64,
    pub fed_uplink_rate: f64,
    pub compute_speed: f64,
}

impl ClientProfile {
    /// `(1 - a)(1 - p)(1 - phi)`: probability that all three stages succeed.
    pub fn success_product(&self) -> f64 {
        (1.0 - self.aggregate_failure) * (1.0 - self.upload_failure) * (1.0 - self.download_failure)
    }

    /// `m^2 / (q (1 - a)(1 - p)(1 - phi))`, the quantity bounded by `M` in constraint C4.
    pub fn inflated_ratio(&self, q: f64) -> f64 {
        self.weight * self.weight / (q * self.success_product())
    }

    fn validate(&self, position: usize) -> Result<(), ValidationError> {
        if self.id != position + 1 {
            return Err(ValidationError::ClientId { position, id: self.id });
        }
        let client = self.id;
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(ValidationError::Weight {
                client,
                value: self.weight,
            });
        }
        for (kind, value) in [
            ("upload", self.upload_failure),
            ("download", self.download_failure),
            ("aggregation", self.aggregate_failure),
        ] {
            if !(0.0..1.0).contains(&value) {
                return Err(ValidationError::FailureProbability { client, kind, value });
            }
        }
        for (field, value) in [
            ("uplink_rate", self.uplink_rate),
            ("downlink_rate", self.downlink_rate),
            ("fed_uplink_rate", self.fed_uplink_rate),
            ("compute_speed", self.compute_speed),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ValidationError::Rate { client, field, value });
            }
        }
        Ok(())
    }
}

/// Per-layer gradient statistics and smoothness of the training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStatistics {
    /// Per-layer gradient variance bounds `sigma_j^2`, layer 1 first.
    pub sigma_sq: Vec<f64>,
    /// Per-layer second-moment bounds `G_j^2`.
    pub g_sq: Vec<f64>,
    /// Smoothness constant.
    pub beta: f64,
    /// `f(w^0) - f*`.
    pub loss_gap: f64,
}

impl ModelStatistics {
    pub fn num_layers(&self) -> usize {
        self.g_sq.len()
    }

    /// `sum_{j <= cut} G_j^2`.
    pub fn g_sq_prefix(&self, cut: usize) -> f64 {
        self.g_sq[..cut].iter().sum()
    }

    pub fn g_sq_total(&self) -> f64 {
        self.g_sq.iter().sum()
    }

    /// `(sum_{j <= cut} (sigma_j^2 + G_j^2), sum_{j > cut} (sigma_j^2 + G_j^2))`.
    pub fn split_moments(&self, cut: usize) -> (f64, f64) {
        let moment = |j: usize| self.sigma_sq[j] + self.g_sq[j];
        let client: f64 = (0..cut).map(moment).sum();
        let server: f64 = (cut..self.num_layers()).map(moment).sum();
        (client, server)
    }

    fn validate(&self) -> Result<(), ValidationError> {
        let layers = self.g_sq.len();
        if layers == 0 {
            return Err(ValidationError::NoLayers);
        }
        if self.sigma_sq.len() != layers {
            return Err(ValidationError::LayerLength {
                field: "sigma_sq",
                expected: layers,
                found: self.sigma_sq.len(),
            });
        }
        for (field, values) in [("sigma_sq", &self.sigma_sq), ("g_sq", &self.g_sq)] {
            if let Some((layer, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(ValidationError::LayerValue {
                    field,
                    layer: layer + 1,
                    value,
                });
            }
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(ValidationError::Scalar {
                field: "beta",
                requirement: "positive and finite",
                value: self.beta,
            });
        }
        if !(self.loss_gap.is_finite() && self.loss_gap >= 0.0) {
            return Err(ValidationError::Scalar {
                field: "loss_gap",
                requirement: "finite and >= 0",
                value: self.loss_gap,
            });
        }
        Ok(())
    }
}

/// Training-system constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// `N`
    pub num_clients: usize,
    /// `K`, draws per sampling window.
    pub clients_per_round: usize,
    /// `I`, rounds between client-side aggregations.
    pub aggregation_interval: usize,
    /// `gamma`. Zero is accepted as a degenerate setting.
    pub learning_rate: f64,
    /// `R`
    pub rounds: usize,
    /// `T`, budget on the expected per-round latency in seconds.
    pub latency_budget: f64,
    /// Smallest permissible cut layer.
    pub min_cut: usize,
}

impl SystemConfig {
    fn validate(&self, layers: usize) -> Result<(), ValidationError> {
        if self.num_clients == 0 {
            return Err(ValidationError::ZeroCount { field: "num_clients" });
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return Err(ValidationError::ClientsPerRound {
                k: self.clients_per_round,
                n: self.num_clients,
            });
        }
        if self.aggregation_interval == 0 {
            return Err(ValidationError::ZeroCount {
                field: "aggregation_interval",
            });
        }
        if self.rounds == 0 {
            return Err(ValidationError::ZeroCount { field: "rounds" });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(ValidationError::Scalar {
                field: "learning_rate",
                requirement: "finite and >= 0",
                value: self.learning_rate,
            });
        }
        if !(self.latency_budget > 0.0) {
            return Err(ValidationError::Scalar {
                field: "latency_budget",
                requirement: "positive",
                value: self.latency_budget,
            });
        }
        if self.min_cut == 0 || self.min_cut > layers {
            return Err(ValidationError::MinCut {
                min_cut: self.min_cut,
                layers,
            });
        }
        Ok(())
    }
}

/// Validated bundle of clients, model statistics and system constants.
///
/// Immutable once built; deserialization re-runs validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PopulationParts", into = "PopulationParts")]
pub struct Population {
    clients: Vec<ClientProfile>,
    stats: ModelStatistics,
    system: SystemConfig,
}

#[derive(Serialize, Deserialize)]
struct PopulationParts {
    clients: Vec<ClientProfile>,
    stats: ModelStatistics,
    system: SystemConfig,
}

impl TryFrom<PopulationParts> for Population {
    type Error = ValidationError;

    fn try_from(parts: PopulationParts) -> Result<Self, Self::Error> {
        Population::new(parts.clients, parts.stats, parts.system)
    }
}

impl From<Population> for PopulationParts {
    fn from(p: Population) -> Self {
        PopulationParts {
            clients: p.clients,
            stats: p.stats,
            system: p.system,
        }
    }
}

impl Population {
    /// Checks every invariant and returns the bundle, or the first violation found.
    pub fn new(
        clients: Vec<ClientProfile>,
        stats: ModelStatistics,
        system: SystemConfig,
    ) -> Result<Self, ValidationError> {
        if clients.is_empty() {
            return Err(ValidationError::EmptyPopulation);
        }
        stats.validate()?;
        system.validate(stats.num_layers())?;
        if clients.len() != system.num_clients {
            return Err(ValidationError::ClientCount {
                expected: system.num_clients,
                found: clients.len(),
            });
        }
        for (position, client) in clients.iter().enumerate() {
            client.validate(position)?;
        }
        let sum: f64 = clients.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(ValidationError::WeightSum { sum });
        }
        Ok(Population { clients, stats, system })
    }

    pub fn clients(&self) -> &[ClientProfile] {
        &self.clients
    }

    pub fn stats(&self) -> &ModelStatistics {
        &self.stats
    }

    pub fn system(&self) -> &SystemConfig {
        &self.system
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_layers(&self) -> usize {
        self.stats.num_layers()
    }

    /// Exact `max_i m_i^2 / (q_i (1-a_i)(1-p_i)(1-phi_i))`.
    pub fn max_inflated_ratio(&self, q: &[f64]) -> f64 {
        self.clients
            .iter()
            .zip(q)
            .map(|(c, &qi)| c.inflated_ratio(qi))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rebuilds the bundle with replaced parts, re-validating.
    pub fn with_parts(
        &self,
        clients: Option<Vec<ClientProfile>>,
        stats: Option<ModelStatistics>,
        system: Option<SystemConfig>,
    ) -> Result<Self, ValidationError> {
        Population::new(
            clients.unwrap_or_else(|| self.clients.clone()),
            stats.unwrap_or_else(|| self.stats.clone()),
            system.unwrap_or_else(|| self.system.clone()),
        )
    }
}

/// Shorthand for [`Population::new`].
pub fn validate_population(
    clients: Vec<ClientProfile>,
    stats: ModelStatistics,
    system: SystemConfig,
) -> Result<Population, ValidationError> {
    Population::new(clients, stats, system)
}

/// Sampling distribution, per-client cut layers and the auxiliary bound `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub q: Vec<f64>,
    /// Cut layer per client; layers `1..=cut` run on the client.
    pub cut_layers: Vec<usize>,
    /// `L_c = max_i cut_layers[i]`.
    pub max_cut: usize,
    /// Auxiliary variable `M` upper-bounding every inflated ratio.
    pub aux_m: f64,
}

impl SamplingPlan {
    /// Builds a plan with `max_cut` derived from the cuts and `aux_m` set to the tight value.
    pub fn from_parts(pop: &Population, q: Vec<f64>, cut_layers: Vec<usize>) -> Self {
        let max_cut = cut_layers.iter().copied().max().unwrap_or(0);
        let aux_m = pop.max_inflated_ratio(&q);
        SamplingPlan {
            q,
            cut_layers,
            max_cut,
            aux_m,
        }
    }

    /// Checks the plan invariants: normalization within `sum_tolerance`, `0 < q <= 1`,
    /// the cut range, the declared maximum cut, and C4 within `aux_tolerance`.
    pub fn check(&self, pop: &Population, sum_tolerance: f64, aux_tolerance: f64) -> Result<(), PlanError> {
        let n = pop.num_clients();
        for found in [self.q.len(), self.cut_layers.len()] {
            if found != n {
                return Err(PlanError::Length { expected: n, found });
            }
        }
        let sum: f64 = self.q.iter().sum();
        if (sum - 1.0).abs() > sum_tolerance {
            return Err(PlanError::Normalization {
                sum,
                tolerance: sum_tolerance,
            });
        }
        if self.max_cut > pop.num_layers() {
            return Err(PlanError::MaxCutDepth {
                max_cut: self.max_cut,
                layers: pop.num_layers(),
            });
        }
        let min_cut = pop.system().min_cut;
        for (i, (&qi, &cut)) in self.q.iter().zip(&self.cut_layers).enumerate() {
            if !(qi > 0.0 && qi <= 1.0) {
                return Err(PlanError::Probability {
                    client: i + 1,
                    value: qi,
                });
            }
            if cut < min_cut || cut > self.max_cut {
                return Err(PlanError::CutRange {
                    client: i + 1,
                    cut,
                    min_cut,
                    max_cut: self.max_cut,
                });
            }
        }
        let actual = self.cut_layers.iter().copied().max().unwrap_or(0);
        if actual != self.max_cut {
            return Err(PlanError::MaxCut {
                declared: self.max_cut,
                actual,
            });
        }
        for (i, (client, &qi)) in pop.clients().iter().zip(&self.q).enumerate() {
            let ratio = client.inflated_ratio(qi);
            if ratio > self.aux_m + aux_tolerance {
                return Err(PlanError::AuxBound {
                    client: i + 1,
                    ratio,
                    aux_m: self.aux_m,
                });
            }
        }
        Ok(())
    }
}
