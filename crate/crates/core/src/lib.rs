//! Convergence bound, latency model and joint sampling/splitting optimizer for
//! split federated learning over unreliable links.
//!
//! Clients hold the first `cut` layers of a layered model; an edge server holds
//! the rest. Each round, activation uploads, gradient downloads and client-model
//! uploads fail independently per client. The [`bound`] module evaluates the
//! resulting convergence upper bound for a sampling distribution and cut
//! assignment, [`latency`] prices a cut assignment in seconds, and
//! [`optimizer`] searches for the plan minimizing the bound under a latency
//! budget.

pub mod bound;
pub mod error;
pub mod latency;
pub mod optimizer;
pub mod types;

pub use bound::{
    client_coefficient, convergence_upper_bound, discrepancy_bound, rounds_to_accuracy, BoundBreakdown,
    RoundsToAccuracy,
};
pub use error::{PlanError, ValidationError};
pub use latency::{best_split, expected_round_latency, per_client_latency, LatencyProfile};
pub use optimizer::{optimize, optimize_fixed_cuts, OptimizeError, OptimizerResult, Partition, Tolerances};
pub use types::{
    validate_population, ClientProfile, ModelStatistics, Population, SamplingPlan, SystemConfig, WEIGHT_SUM_TOLERANCE,
};
