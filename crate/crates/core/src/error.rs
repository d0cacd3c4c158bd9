use thiserror::Error;

/// Violation of a domain-type invariant, reported with the offending client or layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("model statistics must describe at least one layer")]
    NoLayers,
    #[error("expected {expected} clients, found {found}")]
    ClientCount { expected: usize, found: usize },
    #[error("client at position {position} has id {id}, expected {}", position + 1)]
    ClientId { position: usize, id: usize },
    #[error("client {client}: {kind} failure probability must be < 1 and >= 0, got {value}")]
    FailureProbability {
        client: usize,
        kind: &'static str,
        value: f64,
    },
    #[error("client {client}: dataset weight must be positive and finite, got {value}")]
    Weight { client: usize, value: f64 },
    #[error("weights must sum to 1 (sum = {sum})")]
    WeightSum { sum: f64 },
    #[error("client {client}: {field} must be positive and finite, got {value}")]
    Rate {
        client: usize,
        field: &'static str,
        value: f64,
    },
    #[error("{field} has {found} entries, expected {expected}")]
    LayerLength {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{field}[{layer}] must be finite and >= 0, got {value}")]
    LayerValue {
        field: &'static str,
        layer: usize,
        value: f64,
    },
    #[error("{field} must be {requirement}, got {value}")]
    Scalar {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("clients per round K = {k} must lie in [1, {n}]")]
    ClientsPerRound { k: usize, n: usize },
    #[error("{field} must be at least 1")]
    ZeroCount { field: &'static str },
    #[error("minimum cut layer {min_cut} must lie in [1, {layers}]")]
    MinCut { min_cut: usize, layers: usize },
    #[error("{field} must be non-decreasing (layer {layer})")]
    NotMonotone { field: &'static str, layer: usize },
}

/// Reason a sampling plan fails its invariants.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("plan has {found} entries, population has {expected} clients")]
    Length { expected: usize, found: usize },
    #[error("sampling probabilities sum to {sum}, outside tolerance {tolerance}")]
    Normalization { sum: f64, tolerance: f64 },
    #[error("client {client}: sampling probability {value} outside (0, 1]")]
    Probability { client: usize, value: f64 },
    #[error("client {client}: cut layer {cut} outside [{min_cut}, {max_cut}]")]
    CutRange {
        client: usize,
        cut: usize,
        min_cut: usize,
        max_cut: usize,
    },
    #[error("maximum cut layer {declared} does not match max over clients {actual}")]
    MaxCut { declared: usize, actual: usize },
    #[error("maximum cut layer {max_cut} exceeds model depth {layers}")]
    MaxCutDepth { max_cut: usize, layers: usize },
    #[error("client {client}: m^2/(q(1-a)(1-p)(1-phi)) = {ratio} exceeds M = {aux_m}")]
    AuxBound { client: usize, ratio: f64, aux_m: f64 },
    #[error("expected latency {latency} exceeds budget {budget}")]
    Latency { latency: f64, budget: f64 },
}
