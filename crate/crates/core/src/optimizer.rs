//! Joint client-sampling and model-splitting optimizer.
//!
//! For every candidate maximum cut `L_c`, each client first picks its
//! latency-minimizing cut no deeper than `L_c`. The sampling distribution is
//! then found by a nested search: an outer bisection over the auxiliary bound
//! `M` on the inflated ratios `m_i^2 / (q_i f_i)`, and inner bisections over the
//! normalization multiplier `lambda` and the latency multiplier `nu`. At fixed
//! `M` the clients split by the sign of their bound coefficient: clients with a
//! positive coefficient get
//!
//! ```text
//! q_i = max(floor_i, sqrt(m_i^2 C_i / (lambda + nu K A_i)))
//! ```
//!
//! and the rest sit at `floor_i = m_i^2 / (M f_i)`. If no client landed on `L_c`
//! itself, the cheapest client to push down to `L_c` is found by re-solving with
//! its latency replaced. The `L_c` with the smallest bound wins.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bound::{client_coefficient, coefficient_slope, convergence_upper_bound, sampling_cost};
use crate::latency::{best_split, per_client_latency, LatencyProfile};
use crate::types::{ClientProfile, Population, SamplingPlan};

/// Coefficients with magnitude at most this are treated as zero.
pub const ZERO_COEFFICIENT: f64 = 1e-12;

/// Log-spaced probes of `M` before the bisection refines around the best one.
const M_GRID_POINTS: usize = 80;
const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_STEPS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("latency profile describes {profile} layers, model statistics describe {model}")]
    ProfileMismatch { profile: usize, model: usize },
    #[error("invalid tolerances: {0}")]
    Tolerances(&'static str),
    #[error("cut assignment has {found} entries for {expected} clients")]
    CutCount { expected: usize, found: usize },
    #[error("client {client}: cut layer {cut} outside [{min_cut}, {layers}]")]
    CutRange {
        client: usize,
        cut: usize,
        min_cut: usize,
        layers: usize,
    },
    #[error(
        "latency constraint cannot be met: budget {budget} s, \
         smallest single-client round latency is {lower_bound} s"
    )]
    Infeasible { budget: f64, lower_bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eps_m: f64,
    pub eps_lambda: f64,
    pub eps_nu: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub nu_min: f64,
    pub nu_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_m: 1e-6,
            eps_lambda: 1e-6,
            eps_nu: 1e-6,
            m_min: 1e-8,
            m_max: 1e7,
            lambda_min: 1e-8,
            lambda_max: 1e7,
            nu_min: 1e-8,
            nu_max: 1e7,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if !(self.eps_m > 0.0 && self.eps_lambda > 0.0 && self.eps_nu > 0.0) {
            return Err(OptimizeError::Tolerances("tolerances must be positive"));
        }
        for (lo, hi) in [
            (self.m_min, self.m_max),
            (self.lambda_min, self.lambda_max),
            (self.nu_min, self.nu_max),
        ] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(OptimizeError::Tolerances(
                    "search bounds must satisfy 0 < min < max < inf",
                ));
            }
        }
        Ok(())
    }
}

/// Clients by sign of their bound coefficient at a given `M` (1-based ids).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Partition {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub zero: Vec<usize>,
}

pub fn partition_clients(pop: &Population, max_cut: usize, aux_m: f64) -> Partition {
    let mut part = Partition::default();
    for c in pop.clients() {
        let coef = client_coefficient(c, pop.stats(), max_cut, aux_m, pop.system());
        if coef > ZERO_COEFFICIENT {
            part.positive.push(c.id);
        } else if coef < -ZERO_COEFFICIENT {
            part.negative.push(c.id);
        } else {
            part.zero.push(c.id);
        }
    }
    part
}

/// Smallest `q` allowed by the bound `M`: `m^2 / (M f)`.
pub fn floor_probability(client: &ClientProfile, aux_m: f64) -> f64 {
    client.weight * client.weight / (aux_m * client.success_product())
}

/// Stationary point for a positive-coefficient client, clamped to its floor.
/// `None` when `lambda + nu K A` is not positive.
pub fn positive_branch_probability(
    client: &ClientProfile,
    coefficient: f64,
    aux_m: f64,
    lambda: f64,
    nu: f64,
    clients_per_round: usize,
    latency: f64,
) -> Option<f64> {
    let denom = lambda + nu * clients_per_round as f64 * latency;
    if !(denom > 0.0) {
        return None;
    }
    let stationary = (client.weight * client.weight * coefficient / denom).sqrt();
    Some(floor_probability(client, aux_m).max(stationary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeStatus {
    /// Positive clients at their stationary points, the rest at their floors.
    Stationary,
    /// No positive client can take the leftover mass: one or two non-positive
    /// clients absorb it while everyone else sits at the floor.
    Vertex,
    /// The budget is met only in the limit of an unbounded latency multiplier:
    /// every positive client but the fastest sits at its floor.
    Pinned,
    /// No distribution meets the constraints at this `M`.
    Infeasible,
}

/// One probe of the outer search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub max_cut: usize,
    pub m_low: f64,
    pub m_high: f64,
    pub m: f64,
    pub lambda: f64,
    pub nu: f64,
    /// `sum q - 1`
    pub e1: f64,
    /// `max(0, K sum q A - T)`
    pub e2: f64,
    pub status: ProbeStatus,
}

/// Sampling distribution and multipliers at one value of `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSolution {
    pub q: Vec<f64>,
    /// Infinite when every client sits at its floor, NaN for vertex solutions,
    /// `-inf` with `nu = inf` for pinned ones.
    pub lambda: f64,
    pub nu: f64,
    pub e1: f64,
    pub e2: f64,
    pub positive: Vec<bool>,
    pub status: ProbeStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiplierOutcome {
    Solved(MultiplierSolution),
    Infeasible,
}

struct Probe<'a> {
    latencies: &'a [f64],
    floors: Vec<f64>,
    scaled: Vec<f64>,
    positive: Vec<bool>,
    k: f64,
    eps_lambda: f64,
}

impl Probe<'_> {
    /// q at offset `t = lambda + nu K min_P A`.
    fn q_at(&self, t: f64, nu: f64, a_min: f64) -> Vec<f64> {
        (0..self.floors.len())
            .map(|i| {
                if self.positive[i] {
                    let denom = t + nu * self.k * (self.latencies[i] - a_min);
                    self.floors[i].max((self.scaled[i] / denom).sqrt())
                } else {
                    self.floors[i]
                }
            })
            .collect()
    }

    /// Finds `lambda` for fixed `nu` so that `sum q` lands in `[1 - eps, 1]`.
    fn normalize(&self, nu: f64, lambda_min: f64, lambda_max: f64) -> Option<(Vec<f64>, f64)> {
        let a_min = self
            .latencies
            .iter()
            .zip(&self.positive)
            .filter(|(_, &p)| p)
            .map(|(&a, _)| a)
            .fold(f64::INFINITY, f64::min);
        let sum = |t: f64| self.q_at(t, nu, a_min).iter().sum::<f64>();
        let mut hi = lambda_max;
        let mut steps = 0;
        while sum(hi) > 1.0 && steps < MAX_BRACKET_STEPS {
            hi *= 4.0;
            steps += 1;
        }
        let mut lo = lambda_min.min(hi);
        steps = 0;
        while sum(lo) < 1.0 - self.eps_lambda && lo > f64::MIN_POSITIVE && steps < MAX_BRACKET_STEPS {
            lo /= 4.0;
            steps += 1;
        }
        let lambda_of = |t: f64| t - nu * self.k * a_min;
        for t in [lo, hi] {
            let q = self.q_at(t, nu, a_min);
            let s: f64 = q.iter().sum();
            if s <= 1.0 && s >= 1.0 - self.eps_lambda {
                return Some((q, lambda_of(t)));
            }
        }
        if sum(lo) < 1.0 || sum(hi) > 1.0 {
            return None;
        }
        for _ in 0..MAX_BISECTION_STEPS * 2 {
            let mid = (lo * hi).sqrt();
            let q = self.q_at(mid, nu, a_min);
            let s: f64 = q.iter().sum();
            if s > 1.0 {
                lo = mid;
            } else if s < 1.0 - self.eps_lambda {
                hi = mid;
            } else {
                return Some((q, lambda_of(mid)));
            }
            if hi <= lo * (1.0 + 4.0 * f64::EPSILON) {
                break;
            }
        }
        Some((self.q_at(hi, nu, a_min), lambda_of(hi)))
    }

    fn latency(&self, q: &[f64]) -> f64 {
        self.k * q.iter().zip(self.latencies).map(|(q, a)| q * a).sum::<f64>()
    }
}

/// Leftover mass placed on one non-positive client, or on two when no single
/// client fits the budget. Minimizing a concave cost over the simplex slice
/// lands on one of these vertices.
fn vertex_solution(pop: &Population, probe: &Probe<'_>, coefficients: &[f64], budget: f64) -> Option<Vec<f64>> {
    let floor_sum: f64 = probe.floors.iter().sum();
    let rest = 1.0 - floor_sum;
    let floor_latency = probe.latency(&probe.floors);
    let m2 = |i: usize| pop.clients()[i].weight.powi(2);
    // Change in cost when client i moves from its floor to floor + extra.
    let lift =
        |i: usize, extra: f64| m2(i) * coefficients[i] * (1.0 / (probe.floors[i] + extra) - 1.0 / probe.floors[i]);
    let free: Vec<usize> = (0..probe.floors.len()).filter(|&i| !probe.positive[i]).collect();

    let mut best: Option<(f64, usize, usize, f64)> = None;
    let consider = |best: &mut Option<(f64, usize, usize, f64)>, cost: f64, j: usize, k: usize, x: f64| {
        if best.is_none_or(|b| cost < b.0) {
            *best = Some((cost, j, k, x));
        }
    };
    for &j in &free {
        if floor_latency + probe.k * rest * probe.latencies[j] <= budget {
            consider(&mut best, lift(j, rest), j, j, rest);
        }
    }
    if best.is_none() {
        for (a, &j) in free.iter().enumerate() {
            for &k in &free[a + 1..] {
                let (fast, slow) = if probe.latencies[j] <= probe.latencies[k] {
                    (j, k)
                } else {
                    (k, j)
                };
                let spread = probe.latencies[slow] - probe.latencies[fast];
                if !(spread > 0.0) {
                    continue;
                }
                // Mass on the fast client that makes the budget tight.
                let x = (floor_latency + probe.k * rest * probe.latencies[slow] - budget) / (probe.k * spread);
                if (0.0..=rest).contains(&x) {
                    consider(&mut best, lift(fast, x) + lift(slow, rest - x), fast, slow, x);
                }
            }
        }
    }
    best.map(|(_, j, k, x)| {
        let mut q = probe.floors.clone();
        q[j] += x;
        if k != j {
            q[k] += rest - x;
        }
        q
    })
}

/// Inner search at fixed `M`: `lambda` enforces normalization, `nu` the latency budget.
///
/// `nu = 0` is tried first; a positive `nu` is only searched for when the
/// unconstrained distribution exceeds the budget. When no positive client can
/// take the mass left over by the floors, [`vertex_solution`] places it.
pub fn solve_multipliers(
    pop: &Population,
    max_cut: usize,
    aux_m: f64,
    latencies: &[f64],
    tol: &Tolerances,
) -> MultiplierOutcome {
    let sys = pop.system();
    let budget = sys.latency_budget;
    let n = pop.num_clients();
    let mut positive = Vec::with_capacity(n);
    let mut floors = Vec::with_capacity(n);
    let mut scaled = Vec::with_capacity(n);
    let mut coefficients = Vec::with_capacity(n);
    for c in pop.clients() {
        let coef = client_coefficient(c, pop.stats(), max_cut, aux_m, sys);
        positive.push(coef > ZERO_COEFFICIENT);
        floors.push(floor_probability(c, aux_m));
        scaled.push(c.weight * c.weight * coef);
        coefficients.push(coef);
    }
    let probe = Probe {
        latencies,
        floors,
        scaled,
        positive,
        k: sys.clients_per_round as f64,
        eps_lambda: tol.eps_lambda,
    };
    let floor_sum: f64 = probe.floors.iter().sum();
    let any_positive = probe.positive.iter().any(|&p| p);

    let finish = |q: Vec<f64>, lambda: f64, nu: f64, status: ProbeStatus| {
        let lat = probe.latency(&q);
        if lat > budget + tol.eps_nu {
            return MultiplierOutcome::Infeasible;
        }
        MultiplierOutcome::Solved(MultiplierSolution {
            e1: q.iter().sum::<f64>() - 1.0,
            e2: (lat - budget).max(0.0),
            q,
            lambda,
            nu,
            positive: probe.positive.clone(),
            status,
        })
    };

    if floor_sum > 1.0 + tol.eps_lambda || (floor_sum > 1.0 && any_positive) {
        return MultiplierOutcome::Infeasible;
    }
    if floor_sum >= 1.0 - tol.eps_lambda {
        return finish(probe.floors.clone(), f64::INFINITY, 0.0, ProbeStatus::Stationary);
    }
    let vertex = || match vertex_solution(pop, &probe, &coefficients, budget) {
        Some(q) => finish(q, f64::NAN, f64::NAN, ProbeStatus::Vertex),
        None => MultiplierOutcome::Infeasible,
    };
    if !any_positive {
        // With a flat coefficient slope the cost of a vertex falls without bound
        // as M grows, so only the all-floor point is kept.
        if coefficient_slope(pop.stats(), max_cut, sys) == 0.0 {
            return MultiplierOutcome::Infeasible;
        }
        return vertex();
    }

    let floor_latency = probe.latency(&probe.floors);
    let fastest_positive = probe
        .latencies
        .iter()
        .zip(&probe.positive)
        .filter(|(_, &p)| p)
        .map(|(&a, _)| a)
        .fold(f64::INFINITY, f64::min);
    let min_latency = floor_latency + probe.k * (1.0 - floor_sum) * fastest_positive;
    if min_latency > budget + tol.eps_nu {
        return vertex();
    }

    let Some((q, lambda)) = probe.normalize(0.0, tol.lambda_min, tol.lambda_max) else {
        return vertex();
    };
    if probe.latency(&q) <= budget + tol.eps_nu {
        return finish(q, lambda, 0.0, ProbeStatus::Stationary);
    }

    if min_latency >= budget - tol.eps_nu {
        let fastest = (0..n)
            .filter(|&i| probe.positive[i])
            .min_by(|&a, &b| probe.latencies[a].total_cmp(&probe.latencies[b]))
            .expect("a positive client exists");
        let mut q = probe.floors.clone();
        q[fastest] += 1.0 - floor_sum;
        return finish(q, f64::NEG_INFINITY, f64::INFINITY, ProbeStatus::Pinned);
    }

    let latency_at = |nu: f64| {
        probe
            .normalize(nu, tol.lambda_min, tol.lambda_max)
            .map(|(q, lambda)| (probe.latency(&q), q, lambda))
    };
    let mut lo = tol.nu_min;
    let mut hi = tol.nu_max;
    let mut upper = latency_at(hi);
    let mut widen = 0;
    while upper.as_ref().is_none_or(|u| u.0 > budget) && widen < 40 {
        hi *= 10.0;
        upper = latency_at(hi);
        widen += 1;
    }
    let Some(mut best) = upper.filter(|u| u.0 <= budget + tol.eps_nu) else {
        return vertex();
    };
    let mut best_nu = hi;
    if let Some(l) = latency_at(lo) {
        if l.0 <= budget + tol.eps_nu {
            return finish(l.1, l.2, lo, ProbeStatus::Stationary);
        }
    }
    for _ in 0..MAX_BISECTION_STEPS {
        if (best.0 - budget).abs() <= tol.eps_nu || hi <= lo * (1.0 + 4.0 * f64::EPSILON) {
            break;
        }
        let mid = (lo * hi).sqrt();
        match latency_at(mid) {
            Some(cand) if cand.0 <= budget => {
                hi = mid;
                best = cand;
                best_nu = mid;
            }
            Some(cand) if cand.0 <= budget + tol.eps_nu => {
                best = cand;
                best_nu = mid;
                break;
            }
            _ => lo = mid,
        }
    }
    finish(best.1, best.2, best_nu, ProbeStatus::Stationary)
}

/// Solution of the sampling problem for one maximum cut and one latency vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CutSolution {
    pub q: Vec<f64>,
    /// Value of `M` at which `q` was produced.
    pub solve_m: f64,
    pub lambda: f64,
    pub nu: f64,
    pub positive: Vec<bool>,
    pub status: ProbeStatus,
    /// Latencies the multipliers were solved against.
    pub latencies: Vec<f64>,
    /// Bound minus its initial-gap term.
    pub cost: f64,
}

/// Outer search over `M` for a fixed maximum cut and latency vector.
///
/// `M = sum m^2/f` puts every client exactly at its floor and is always probed.
/// Above it, `M` is scanned on a grid and the best probe is refined by
/// golden-section bisection on the bound. `None` when no probe is feasible.
pub fn solve_for_max_cut(
    pop: &Population,
    max_cut: usize,
    latencies: &[f64],
    tol: &Tolerances,
    trace: &mut Vec<IterationRecord>,
) -> Option<CutSolution> {
    let all_floor: f64 = pop
        .clients()
        .iter()
        .map(|c| c.weight * c.weight / c.success_product())
        .sum();
    let mut best: Option<CutSolution> = None;

    let mut probe = |m: f64, lo: f64, hi: f64, trace: &mut Vec<IterationRecord>| -> Option<f64> {
        let outcome = solve_multipliers(pop, max_cut, m, latencies, tol);
        let mut record = IterationRecord {
            max_cut,
            m_low: lo,
            m_high: hi,
            m,
            lambda: f64::NAN,
            nu: f64::NAN,
            e1: f64::NAN,
            e2: f64::NAN,
            status: ProbeStatus::Infeasible,
        };
        let cost = match outcome {
            MultiplierOutcome::Solved(sol) => {
                record.lambda = sol.lambda;
                record.nu = sol.nu;
                record.e1 = sol.e1;
                record.e2 = sol.e2;
                record.status = sol.status;
                let cost = sampling_cost(pop, &sol.q, max_cut);
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    best = Some(CutSolution {
                        q: sol.q,
                        solve_m: m,
                        lambda: sol.lambda,
                        nu: sol.nu,
                        positive: sol.positive,
                        status: sol.status,
                        latencies: latencies.to_vec(),
                        cost,
                    });
                }
                Some(cost)
            }
            MultiplierOutcome::Infeasible => None,
        };
        trace.push(record);
        cost
    };

    probe(all_floor, all_floor, all_floor, trace);

    // Floors bind only just above the all-floor point, so the grid is log-spaced
    // in the distance from it.
    let lo_edge = all_floor.max(tol.m_min);
    let hi_edge = tol.m_max;
    if hi_edge > lo_edge {
        let span = hi_edge - lo_edge;
        let first = span * 1e-12;
        let ratio = (span / first).powf(1.0 / (M_GRID_POINTS - 1) as f64);
        let mut grid: Vec<f64> = (0..M_GRID_POINTS - 1)
            .map(|j| lo_edge + first * ratio.powi(j as i32))
            .collect();
        grid.push(hi_edge);
        let costs: Vec<f64> = grid
            .iter()
            .map(|&m| probe(m, lo_edge, hi_edge, trace).unwrap_or(f64::INFINITY))
            .collect();
        // The bound is not unimodal in M; every local minimum of the grid is refined.
        let minima: Vec<usize> = (0..grid.len())
            .filter(|&j| {
                costs[j].is_finite()
                    && (j == 0 || costs[j] <= costs[j - 1])
                    && (j + 1 == grid.len() || costs[j] <= costs[j + 1])
            })
            .collect();
        for j in minima {
            let lo = if j == 0 { lo_edge } else { grid[j - 1] };
            let hi = if j + 1 < grid.len() {
                grid[j + 1]
            } else {
                hi_edge * 10.0
            };
            golden_section(lo, hi, tol.eps_m, |m, a, b| probe(m, a, b, trace));
        }
    }
    best
}

/// Golden-section search for the minimum of `f` on `[lo, hi]`; infeasible
/// points (`None`) count as `+inf`.
fn golden_section(mut lo: f64, mut hi: f64, eps: f64, mut f: impl FnMut(f64, f64, f64) -> Option<f64>) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut value = |m: f64, a: f64, b: f64| f(m, a, b).unwrap_or(f64::INFINITY);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = value(x1, lo, hi);
    let mut f2 = value(x2, lo, hi);
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo < eps {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = value(x1, lo, hi);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = value(x2, lo, hi);
        }
    }
}

/// Ensures some client is cut at `max_cut` exactly.
///
/// Returns the input unchanged when a client already sits there. Otherwise each
/// client in turn has its latency replaced by its latency at `max_cut`; a
/// candidate whose relaxed distribution still meets the budget keeps it, the
/// rest are re-solved. The candidate with the smallest cost wins, ties broken by
/// latency then index.
pub fn enforce_max_cut(
    pop: &Population,
    prof: &LatencyProfile,
    max_cut: usize,
    relaxed: CutSolution,
    cuts: Vec<usize>,
    tol: &Tolerances,
    trace: &mut Vec<IterationRecord>,
) -> Option<(CutSolution, Vec<usize>)> {
    if cuts.contains(&max_cut) {
        return Some((relaxed, cuts));
    }
    let sys = pop.system();
    let k = sys.clients_per_round as f64;
    let mut best: Option<(CutSolution, f64, usize)> = None;
    for (i, client) in pop.clients().iter().enumerate() {
        let mut forced = relaxed.latencies.clone();
        forced[i] = per_client_latency(client, prof, max_cut);
        let lat = |q: &[f64]| k * q.iter().zip(&forced).map(|(q, a)| q * a).sum::<f64>();
        let kept = lat(&relaxed.q);
        let candidate = if kept <= sys.latency_budget + tol.eps_nu {
            Some((relaxed.clone(), kept))
        } else {
            solve_for_max_cut(pop, max_cut, &forced, tol, trace).map(|s| {
                let l = lat(&s.q);
                (s, l)
            })
        };
        if let Some((sol, l)) = candidate {
            let better = best
                .as_ref()
                .is_none_or(|(b, bl, _)| match sol.cost.total_cmp(&b.cost) {
                    Ordering::Less => true,
                    Ordering::Equal => l < *bl,
                    Ordering::Greater => false,
                });
            if better {
                best = Some((sol, l, i));
            }
        }
    }
    best.map(|(sol, _, i)| {
        let mut cuts = cuts;
        cuts[i] = max_cut;
        (sol, cuts)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub plan: SamplingPlan,
    /// Bound at the plan.
    pub objective: f64,
    /// `K sum q_i A_i(cut_i)`
    pub expected_latency: f64,
    /// `M` at which the returned distribution was produced.
    pub solve_m: f64,
    /// Infinite when every client sits at its floor; see [`MultiplierSolution`].
    pub lambda: f64,
    pub nu: f64,
    /// Positive-coefficient clients at `solve_m`.
    pub positive: Vec<bool>,
    pub status: ProbeStatus,
    /// Latencies the multipliers correspond to.
    pub solve_latencies: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

impl OptimizerResult {
    /// Relative residual of the stationarity condition
    /// `m^2 C / q^2 = lambda + nu K A` for every positive client strictly above
    /// its floor, as `(0-based index, residual)`.
    pub fn stationarity_residuals(&self, pop: &Population) -> Vec<(usize, f64)> {
        let sys = pop.system();
        let k = sys.clients_per_round as f64;
        pop.clients()
            .iter()
            .enumerate()
            .filter(|(i, c)| {
                self.status == ProbeStatus::Stationary
                    && self.positive[*i]
                    && self.plan.q[*i] > floor_probability(c, self.solve_m) * (1.0 + 1e-9)
            })
            .map(|(i, c)| {
                let q = self.plan.q[i];
                let coef = client_coefficient(c, pop.stats(), self.plan.max_cut, self.solve_m, sys);
                let lhs = c.weight * c.weight * coef / (q * q);
                let rhs = self.lambda + self.nu * k * self.solve_latencies[i];
                (i, ((lhs - rhs) / rhs).abs())
            })
            .collect()
    }
}

fn check_profile(pop: &Population, prof: &LatencyProfile, tol: &Tolerances) -> Result<(), OptimizeError> {
    tol.validate()?;
    if prof.num_layers() != pop.num_layers() {
        return Err(OptimizeError::ProfileMismatch {
            profile: prof.num_layers(),
            model: pop.num_layers(),
        });
    }
    Ok(())
}

fn infeasible(pop: &Population, prof: &LatencyProfile) -> OptimizeError {
    let sys = pop.system();
    let lower_bound = pop
        .clients()
        .iter()
        .map(|c| best_split(c, prof, sys.min_cut, pop.num_layers()).1)
        .fold(f64::INFINITY, f64::min)
        * sys.clients_per_round as f64;
    OptimizeError::Infeasible {
        budget: sys.latency_budget,
        lower_bound,
    }
}

fn finish(
    pop: &Population,
    prof: &LatencyProfile,
    sol: CutSolution,
    cuts: Vec<usize>,
    trace: Vec<IterationRecord>,
) -> OptimizerResult {
    let plan = SamplingPlan::from_parts(pop, sol.q, cuts);
    let objective = convergence_upper_bound(&plan, pop).total;
    let expected_latency = crate::latency::expected_round_latency(&plan, pop, prof);
    OptimizerResult {
        plan,
        objective,
        expected_latency,
        solve_m: sol.solve_m,
        lambda: sol.lambda,
        nu: sol.nu,
        positive: sol.positive,
        status: sol.status,
        solve_latencies: sol.latencies,
        trace,
    }
}

/// Searches every maximum cut from the minimum cut to the model depth and
/// returns the plan with the smallest bound. Ties go to the shallower maximum cut.
pub fn optimize(pop: &Population, prof: &LatencyProfile, tol: &Tolerances) -> Result<OptimizerResult, OptimizeError> {
    check_profile(pop, prof, tol)?;
    let min_cut = pop.system().min_cut;
    let mut trace = Vec::new();
    let mut best: Option<(CutSolution, Vec<usize>)> = None;
    for max_cut in min_cut..=pop.num_layers() {
        let (cuts, latencies): (Vec<usize>, Vec<f64>) = pop
            .clients()
            .iter()
            .map(|c| best_split(c, prof, min_cut, max_cut))
            .unzip();
        let Some(relaxed) = solve_for_max_cut(pop, max_cut, &latencies, tol, &mut trace) else {
            continue;
        };
        let Some((sol, cuts)) = enforce_max_cut(pop, prof, max_cut, relaxed, cuts, tol, &mut trace) else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| sol.cost < b.cost) {
            best = Some((sol, cuts));
        }
    }
    let (sol, cuts) = best.ok_or_else(|| infeasible(pop, prof))?;
    Ok(finish(pop, prof, sol, cuts, trace))
}

/// Optimizes only the sampling distribution for a given cut assignment.
pub fn optimize_fixed_cuts(
    pop: &Population,
    prof: &LatencyProfile,
    cuts: &[usize],
    tol: &Tolerances,
) -> Result<OptimizerResult, OptimizeError> {
    check_profile(pop, prof, tol)?;
    let layers = pop.num_layers();
    let min_cut = pop.system().min_cut;
    if cuts.len() != pop.num_clients() {
        return Err(OptimizeError::CutCount {
            expected: pop.num_clients(),
            found: cuts.len(),
        });
    }
    if let Some((i, &cut)) = cuts.iter().enumerate().find(|(_, &c)| c < min_cut || c > layers) {
        return Err(OptimizeError::CutRange {
            client: i + 1,
            cut,
            min_cut,
            layers,
        });
    }
    let max_cut = cuts.iter().copied().max().unwrap_or(min_cut);
    let latencies: Vec<f64> = pop
        .clients()
        .iter()
        .zip(cuts)
        .map(|(c, &cut)| per_client_latency(c, prof, cut))
        .collect();
    let mut trace = Vec::new();
    let sol = solve_for_max_cut(pop, max_cut, &latencies, tol, &mut trace).ok_or_else(|| infeasible(pop, prof))?;
    Ok(finish(pop, prof, sol, cuts.to_vec(), trace))
}
