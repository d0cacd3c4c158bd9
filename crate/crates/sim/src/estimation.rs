//! Empirical smoothness, per-layer gradient statistics and loss gap.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sfl_core::ModelStatistics;

use crate::data::{batch_indices, Dataset};
use crate::model::{flatten, squared_norm, Blocks, LayeredModel};

/// Default perturbation norm relative to the parameter norm.
pub const RELATIVE_PERTURBATION: f64 = 1e-3;

/// Pairs closer than this are skipped by [`estimate_beta_cross`].
pub const MIN_PAIR_DISTANCE: f64 = 1e-12;

fn distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    flatten(a)
        .iter()
        .zip(flatten(b))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Random direction of norm `scale`, isotropic in parameter space.
fn perturbation(shape: &[Vec<f64>], scale: f64, rng: &mut ChaCha8Rng) -> Blocks {
    let mut dir: Blocks = shape
        .iter()
        .map(|b| b.iter().map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let norm = squared_norm(&dir).sqrt();
    dir.iter_mut().flatten().for_each(|v| *v *= scale / norm);
    dir
}

/// Finite-difference ratio `|grad f(w + e) - grad f(w)| / |e|` on one mini-batch
/// per client, averaged with the batch sizes as weights.
pub fn estimate_beta_local<M: LayeredModel + ?Sized>(
    model: &M,
    params: &[Vec<f64>],
    clients: &[Dataset],
    batch_size: usize,
    perturbation_norm: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    assert!(perturbation_norm > 0.0, "perturbation norm must be positive");
    let (mut weighted, mut total) = (0.0, 0.0);
    for data in clients {
        let batch = batch_indices(rng, data.len(), batch_size);
        let eps = perturbation(params, perturbation_norm, rng);
        let shifted: Blocks = params
            .iter()
            .zip(&eps)
            .map(|(p, e)| p.iter().zip(e).map(|(a, b)| a + b).collect())
            .collect();
        let (_, g0) = model.gradient(params, data, &batch);
        let (_, g1) = model.gradient(&shifted, data, &batch);
        let ratio = distance(&g1, &g0) / squared_norm(&eps).sqrt();
        weighted += ratio * batch.len() as f64;
        total += batch.len() as f64;
    }
    weighted / total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEstimate {
    pub value: f64,
    /// False when no pair of models was far enough apart; `value` is then 0.
    pub defined: bool,
}

/// Largest `|grad f(w_i) - grad f(w_z)| / |w_i - w_z|` over pairs of models on the same data.
pub fn estimate_beta_cross<M: LayeredModel + ?Sized>(model: &M, models: &[Blocks], shared: &Dataset) -> CrossEstimate {
    let all = shared.all();
    let grads: Vec<Blocks> = models.iter().map(|w| model.gradient(w, shared, &all).1).collect();
    let mut best: Option<f64> = None;
    for i in 0..models.len() {
        for z in i + 1..models.len() {
            let dw = distance(&models[i], &models[z]);
            if dw < MIN_PAIR_DISTANCE {
                continue;
            }
            let ratio = distance(&grads[i], &grads[z]) / dw;
            best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
        }
    }
    CrossEstimate {
        value: best.unwrap_or(0.0),
        defined: best.is_some(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    /// Population variance of each layer's squared gradient norm across batches.
    pub sigma_sq: Vec<f64>,
    /// Largest squared gradient norm of each layer across batches.
    pub g_sq: Vec<f64>,
    pub batches: usize,
    /// Set when only one batch was seen, in which case `sigma_sq` is zero.
    pub degenerate: bool,
}

/// Running per-layer mean, variance and maximum of squared gradient norms.
#[derive(Debug, Clone, PartialEq)]
struct LayerAccumulator {
    mean: Vec<f64>,
    m2: Vec<f64>,
    max: Vec<f64>,
    count: usize,
}

impl LayerAccumulator {
    fn new(layers: usize) -> Self {
        LayerAccumulator {
            mean: vec![0.0; layers],
            m2: vec![0.0; layers],
            max: vec![0.0; layers],
            count: 0,
        }
    }

    fn push(&mut self, grad: &[Vec<f64>]) {
        self.count += 1;
        let n = self.count as f64;
        for (j, g) in grad.iter().enumerate() {
            let x: f64 = g.iter().map(|v| v * v).sum();
            let d = x - self.mean[j];
            self.mean[j] += d / n;
            self.m2[j] += d * (x - self.mean[j]);
            self.max[j] = self.max[j].max(x);
        }
    }

    fn finish(self) -> LayerStats {
        let n = self.count as f64;
        LayerStats {
            sigma_sq: self.m2.iter().map(|v| v / n).collect(),
            g_sq: self.max,
            batches: self.count,
            degenerate: self.count == 1,
        }
    }
}

/// One shuffled pass in batches, recording every batch gradient and stepping
/// when `learning_rate > 0`.
fn pass<M: LayeredModel + ?Sized>(
    model: &M,
    params: &mut Blocks,
    data: &Dataset,
    batch_size: usize,
    learning_rate: f64,
    rng: &mut ChaCha8Rng,
    acc: &mut LayerAccumulator,
) {
    let mut order = data.all();
    order.shuffle(rng);
    for batch in order.chunks(batch_size) {
        let (_, grad) = model.gradient(params, data, batch);
        acc.push(&grad);
        if learning_rate > 0.0 {
            params
                .iter_mut()
                .zip(&grad)
                .for_each(|(p, g)| p.iter_mut().zip(g).for_each(|(w, gv)| *w -= learning_rate * gv));
        }
    }
}

/// Per-layer statistics over every mini-batch of `epochs` shuffled passes. With
/// `learning_rate > 0` the parameters take an SGD step after each batch, so the
/// statistics follow a training trajectory; with 0 they describe `params` alone.
pub fn estimate_layer_stats<M: LayeredModel + ?Sized>(
    model: &M,
    params: &mut Blocks,
    data: &Dataset,
    batch_size: usize,
    epochs: usize,
    learning_rate: f64,
    rng: &mut ChaCha8Rng,
) -> LayerStats {
    assert!(
        epochs >= 1 && batch_size >= 1,
        "need at least one epoch and a positive batch size"
    );
    let mut acc = LayerAccumulator::new(params.len());
    for _ in 0..epochs {
        pass(model, params, data, batch_size, learning_rate, rng, &mut acc);
    }
    acc.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Local SGD steps each client takes from the initial model to produce the
    /// models compared by the cross estimate.
    pub local_steps: usize,
    /// Perturbation norm as a multiple of the parameter norm.
    pub relative_perturbation: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            batch_size: 16,
            epochs: 2,
            learning_rate: 0.05,
            local_steps: 5,
            relative_perturbation: RELATIVE_PERTURBATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub beta_local: f64,
    pub beta_cross: f64,
    pub beta_cross_defined: bool,
    pub beta: f64,
    pub sigma_sq: Vec<f64>,
    pub g_sq: Vec<f64>,
    /// `f(w0)` minus the smallest loss seen during calibration.
    pub vartheta: f64,
    pub calibration_epochs: usize,
    pub batches: usize,
}

impl EstimationReport {
    pub fn statistics(&self) -> ModelStatistics {
        ModelStatistics {
            sigma_sq: self.sigma_sq.clone(),
            g_sq: self.g_sq.clone(),
            beta: self.beta,
            loss_gap: self.vartheta,
        }
    }
}

/// Full calibration from `init`: local smoothness at `init`, cross smoothness
/// between briefly trained client models on the pooled data, and layer
/// statistics and loss gap along an SGD run on the pooled data.
pub fn calibrate<M: LayeredModel + ?Sized>(
    model: &M,
    init: &Blocks,
    clients: &[Dataset],
    config: &CalibrationConfig,
    rng: &mut ChaCha8Rng,
) -> EstimationReport {
    let pooled = Dataset::concat(clients);
    let all = pooled.all();
    let scale = config.relative_perturbation * squared_norm(init).sqrt().max(1.0);
    let beta_local = estimate_beta_local(model, init, clients, config.batch_size, scale, rng);

    let trained: Vec<Blocks> = clients
        .iter()
        .map(|data| {
            let mut w = init.clone();
            for _ in 0..config.local_steps {
                let batch = batch_indices(rng, data.len(), config.batch_size);
                let (_, g) = model.gradient(&w, data, &batch);
                w.iter_mut()
                    .zip(&g)
                    .for_each(|(p, gv)| p.iter_mut().zip(gv).for_each(|(a, b)| *a -= config.learning_rate * b));
            }
            w
        })
        .collect();
    let cross = estimate_beta_cross(model, &trained, &pooled);

    let initial = model.loss(init, &pooled, &all);
    let mut best = initial;
    let mut params = init.clone();
    let mut acc = LayerAccumulator::new(init.len());
    for _ in 0..config.epochs.max(1) {
        pass(
            model,
            &mut params,
            &pooled,
            config.batch_size,
            config.learning_rate,
            rng,
            &mut acc,
        );
        best = best.min(model.loss(&params, &pooled, &all));
    }
    let stats = acc.finish();
    EstimationReport {
        beta_local,
        beta_cross: cross.value,
        beta_cross_defined: cross.defined,
        beta: beta_local.max(cross.value),
        sigma_sq: stats.sigma_sq,
        g_sq: stats.g_sq,
        vartheta: initial - best,
        calibration_epochs: config.epochs,
        batches: stats.batches,
    }
}
