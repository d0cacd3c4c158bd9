//! Desk-scale split federated learning with Bernoulli link failures.
//!
//! A layered model is split per client at a cut layer. Sampled clients train
//! on mini-batches; activation uploads, gradient downloads and client-model
//! uploads fail independently, and every successful update is scaled by the
//! inverse of its success probability so the expected update matches the
//! failure-free one. [`estimation`] measures the smoothness and per-layer
//! gradient statistics that parameterize the convergence bound.

pub mod data;
pub mod estimation;
pub mod model;
pub mod steps;
pub mod training;

pub use data::{batch_indices, dataset_weights, generate_clients, Dataset, SyntheticSpec};
pub use estimation::{
    calibrate, estimate_beta_cross, estimate_beta_local, estimate_layer_stats, CalibrationConfig, CrossEstimate,
    EstimationReport, LayerStats,
};
pub use model::{Blocks, LayeredModel, Linear, Logistic, Mlp, Quadratic};
pub use steps::{
    aggregate_client_specific, aggregate_client_specific_delta, aggregate_common, aggregate_common_delta,
    client_side_step, sample_clients, server_side_step, FailureKind, FailureSampler, Flags, ForgedPart,
};
pub use training::{
    run_training, ClientSchedule, RoundDetail, RoundRecord, SimError, Simulation, SimulationTrace, TrainingConfig,
};
