//! Convergence upper bound for split federated training with failures.
//!
//! For a sampling distribution `q` and population-wide maximum cut `L_c`, the
//! average squared gradient norm is bounded by
//!
//! ```text
//! U = 2 theta / (gamma R) + sum_i (m_i^2 / q_i) * C_i(M*)
//! ```
//!
//! where `M* = max_i m_i^2 / (q_i f_i)`, `f_i` is the probability that all three
//! stages of client `i` succeed, and `C_i` is [`client_coefficient`].

use serde::{Deserialize, Serialize};

use crate::types::{ClientProfile, ModelStatistics, Population, SamplingPlan, SystemConfig};

/// The bound split into its four additive parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub total: f64,
    /// `2 theta / (gamma R)`. Zero when `theta = 0`, infinite when `gamma = 0 < theta`.
    pub term_init: f64,
    /// `-(sum_i m_i^2/q_i) * sum_j G_j^2`
    pub term_negative: f64,
    /// Gradient variance and second moment, inflated by the failure probabilities.
    pub term_variance: f64,
    /// Client drift between aggregations, proportional to `I^2`.
    pub term_drift: f64,
}

/// Outcome of [`rounds_to_accuracy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundsToAccuracy {
    Rounds(u64),
    /// No finite number of rounds brings the bound below the target.
    Infeasible,
}

struct CoefficientParts {
    variance: f64,
    drift: f64,
    negative: f64,
}

fn coefficient_parts(
    client: &ClientProfile,
    stats: &ModelStatistics,
    max_cut: usize,
    aux_m: f64,
    sys: &SystemConfig,
) -> CoefficientParts {
    let beta = stats.beta;
    let gamma = sys.learning_rate;
    let interval = sys.aggregation_interval as f64;
    let (client_moment, server_moment) = stats.split_moments(max_cut);
    let variance = beta * gamma / (1.0 - client.upload_failure)
        * (client_moment / ((1.0 - client.download_failure) * (1.0 - client.aggregate_failure)) + server_moment);
    let drift = 2.0
        * beta
        * beta
        * gamma
        * gamma
        * interval
        * interval
        * (sys.num_clients as f64 * aux_m + 1.0 / client.success_product())
        * stats.g_sq_prefix(max_cut);
    CoefficientParts {
        variance,
        drift,
        negative: -stats.g_sq_total(),
    }
}

/// Per-client coefficient multiplying `m_i^2 / q_i` in the bound, for maximum cut
/// `max_cut` and auxiliary bound `aux_m` on the inflated ratios.
///
/// Affine in `aux_m` with slope [`coefficient_slope`].
pub fn client_coefficient(
    client: &ClientProfile,
    stats: &ModelStatistics,
    max_cut: usize,
    aux_m: f64,
    sys: &SystemConfig,
) -> f64 {
    let parts = coefficient_parts(client, stats, max_cut, aux_m, sys);
    parts.variance + parts.drift + parts.negative
}

/// `d C_i / d M`, identical for every client: `2 beta^2 gamma^2 I^2 N sum_{j<=L_c} G_j^2`.
pub fn coefficient_slope(stats: &ModelStatistics, max_cut: usize, sys: &SystemConfig) -> f64 {
    let bg = stats.beta * sys.learning_rate * sys.aggregation_interval as f64;
    2.0 * bg * bg * sys.num_clients as f64 * stats.g_sq_prefix(max_cut)
}

/// `2 theta / (gamma R)`, with `0 / 0` read as zero.
pub fn initial_gap_term(stats: &ModelStatistics, sys: &SystemConfig) -> f64 {
    if stats.loss_gap == 0.0 {
        0.0
    } else {
        2.0 * stats.loss_gap / (sys.learning_rate * sys.rounds as f64)
    }
}

/// Everything in the bound except the initial-gap term, for an arbitrary `q`
/// and maximum cut. This is the part the optimizer minimizes.
pub fn sampling_cost(pop: &Population, q: &[f64], max_cut: usize) -> f64 {
    let b = breakdown_for(pop, q, max_cut);
    b.term_negative + b.term_variance + b.term_drift
}

fn breakdown_for(pop: &Population, q: &[f64], max_cut: usize) -> BoundBreakdown {
    let stats = pop.stats();
    let sys = pop.system();
    let aux_m = pop.max_inflated_ratio(q);
    let mut term_negative = 0.0;
    let mut term_variance = 0.0;
    let mut term_drift = 0.0;
    for (client, &qi) in pop.clients().iter().zip(q) {
        let scale = client.weight * client.weight / qi;
        let parts = coefficient_parts(client, stats, max_cut, aux_m, sys);
        term_negative += scale * parts.negative;
        term_variance += scale * parts.variance;
        term_drift += scale * parts.drift;
    }
    let term_init = initial_gap_term(stats, sys);
    BoundBreakdown {
        total: term_init + term_negative + term_variance + term_drift,
        term_init,
        term_negative,
        term_variance,
        term_drift,
    }
}

/// Evaluates the bound at `plan`, using `plan.max_cut` and the exact maximum
/// inflated ratio (not `plan.aux_m`).
pub fn convergence_upper_bound(plan: &SamplingPlan, pop: &Population) -> BoundBreakdown {
    breakdown_for(pop, &plan.q, plan.max_cut)
}

/// Smallest number of rounds for which the bound at `plan` is at most `epsilon`.
///
/// Returns [`RoundsToAccuracy::Infeasible`] when the round-independent part of
/// the bound is already at or above `epsilon`, or when the learning rate is
/// zero with a positive loss gap. A zero loss gap needs one round.
pub fn rounds_to_accuracy(epsilon: f64, plan: &SamplingPlan, pop: &Population) -> RoundsToAccuracy {
    let b = convergence_upper_bound(plan, pop);
    let slack = epsilon + -(b.term_negative + b.term_variance + b.term_drift);
    if !(slack > 0.0) {
        return RoundsToAccuracy::Infeasible;
    }
    let gap = pop.stats().loss_gap;
    if gap == 0.0 {
        return RoundsToAccuracy::Rounds(1);
    }
    let gamma = pop.system().learning_rate;
    if gamma == 0.0 {
        return RoundsToAccuracy::Infeasible;
    }
    let needed = (2.0 * gap / (gamma * slack)).ceil();
    if needed >= u64::MAX as f64 {
        return RoundsToAccuracy::Infeasible;
    }
    RoundsToAccuracy::Rounds((needed as u64).max(1))
}

/// Upper bound on `E || h_c - h_{c,i} ||^2`, the gap between the aggregated
/// client-side model and client `client_index`'s local copy (0-based index).
pub fn discrepancy_bound(client_index: usize, plan: &SamplingPlan, pop: &Population) -> f64 {
    let client = &pop.clients()[client_index];
    let sys = pop.system();
    let gi = sys.learning_rate * sys.aggregation_interval as f64;
    2.0 * gi
        * gi
        * (sys.num_clients as f64 * pop.max_inflated_ratio(&plan.q) + 1.0 / client.success_product())
        * pop.stats().g_sq_prefix(plan.max_cut)
}
