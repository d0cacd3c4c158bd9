//! Layered differentiable models. Parameters are stored as one block per layer,
//! and the cut layer decides which blocks a client holds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;

/// One parameter block per layer.
pub type Blocks = Vec<Vec<f64>>;

pub trait LayeredModel {
    /// Parameter count of every layer.
    fn layer_sizes(&self) -> Vec<usize>;

    fn init(&self, rng: &mut ChaCha8Rng) -> Blocks;

    /// Mean loss over the samples `idx`, accumulating the mean gradient into
    /// `grad` when given. `grad` is overwritten, not added to.
    fn loss_grad(&self, params: &[Vec<f64>], data: &Dataset, idx: &[usize], grad: Option<&mut Blocks>) -> f64;

    fn num_layers(&self) -> usize {
        self.layer_sizes().len()
    }

    fn loss(&self, params: &[Vec<f64>], data: &Dataset, idx: &[usize]) -> f64 {
        self.loss_grad(params, data, idx, None)
    }

    fn gradient(&self, params: &[Vec<f64>], data: &Dataset, idx: &[usize]) -> (f64, Blocks) {
        let mut grad = zeros_like(params);
        let loss = self.loss_grad(params, data, idx, Some(&mut grad));
        (loss, grad)
    }
}

pub fn zeros_like(blocks: &[Vec<f64>]) -> Blocks {
    blocks.iter().map(|b| vec![0.0; b.len()]).collect()
}

pub fn squared_norm(blocks: &[Vec<f64>]) -> f64 {
    blocks.iter().flatten().map(|x| x * x).sum()
}

pub fn flatten(blocks: &[Vec<f64>]) -> Vec<f64> {
    blocks.iter().flatten().copied().collect()
}

/// Splits `flat` into blocks shaped like `shape`.
pub fn unflatten(flat: &[f64], shape: &[Vec<f64>]) -> Blocks {
    let mut out = Vec::with_capacity(shape.len());
    let mut at = 0;
    for b in shape {
        out.push(flat[at..at + b.len()].to_vec());
        at += b.len();
    }
    out
}

/// Fully connected network with tanh hidden units and a softmax cross-entropy
/// output. Layer `j` holds a row-major `out x in` weight matrix followed by `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
}

impl Mlp {
    /// `widths` lists the input size, every hidden width and the class count.
    pub fn new(widths: Vec<usize>) -> Self {
        assert!(
            widths.len() >= 2 && widths.iter().all(|&w| w > 0),
            "need at least one layer"
        );
        Mlp { widths }
    }

    /// Six layers: `input -> hidden x5 -> classes`.
    pub fn six_layer(input: usize, hidden: usize, classes: usize) -> Self {
        let mut widths = vec![input];
        widths.extend([hidden; 5]);
        widths.push(classes);
        Mlp::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn forward(&self, params: &[Vec<f64>], x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.widths.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for j in 0..layers {
            let (n_in, n_out) = (self.widths[j], self.widths[j + 1]);
            let (w, b) = params[j].split_at(n_in * n_out);
            let prev = &acts[j];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| {
                    b[o] + w[o * n_in..(o + 1) * n_in]
                        .iter()
                        .zip(prev)
                        .map(|(a, c)| a * c)
                        .sum::<f64>()
                })
                .collect();
            if j + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }
}

impl LayeredModel for Mlp {
    fn layer_sizes(&self) -> Vec<usize> {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).collect()
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Blocks {
        self.widths
            .windows(2)
            .map(|w| {
                let scale = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let mut block: Vec<f64> = (0..w[0] * w[1]).map(|_| rng.random_range(-scale..scale)).collect();
                block.extend(std::iter::repeat_n(0.0, w[1]));
                block
            })
            .collect()
    }

    fn loss_grad(&self, params: &[Vec<f64>], data: &Dataset, idx: &[usize], mut grad: Option<&mut Blocks>) -> f64 {
        let layers = self.widths.len() - 1;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|b| b.iter_mut().for_each(|v| *v = 0.0));
        }
        let scale = 1.0 / idx.len() as f64;
        let mut total = 0.0;
        for &s in idx {
            let acts = self.forward(params, data.features(s));
            let logits = &acts[layers];
            let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|v| (v - peak).exp()).collect();
            let norm: f64 = exps.iter().sum();
            let label = data.label(s);
            total += norm.ln() + peak - logits[label];
            let Some(g) = grad.as_deref_mut() else { continue };
            let mut delta: Vec<f64> = exps.iter().map(|e| e / norm).collect();
            delta[label] -= 1.0;
            for j in (0..layers).rev() {
                let (n_in, n_out) = (self.widths[j], self.widths[j + 1]);
                let prev = &acts[j];
                let (gw, gb) = g[j].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let d = delta[o] * scale;
                    gb[o] += d;
                    gw[o * n_in..(o + 1) * n_in]
                        .iter_mut()
                        .zip(prev)
                        .for_each(|(gv, a)| *gv += d * a);
                }
                if j > 0 {
                    let w = &params[j][..n_in * n_out];
                    delta = (0..n_in)
                        .map(|i| {
                            let back: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                            back * (1.0 - prev[i] * prev[i])
                        })
                        .collect();
                }
            }
        }
        total * scale
    }
}

/// `f(w) = mean_s c/2 |w - x_s|^2` with the sample's feature vector as target.
/// The Hessian is `c I`, so the smoothness constant is exactly `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub curvature: f64,
    pub sizes: Vec<usize>,
}

impl LayeredModel for Quadratic {
    fn layer_sizes(&self) -> Vec<usize> {
        self.sizes.clone()
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Blocks {
        self.sizes
            .iter()
            .map(|&n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn loss_grad(&self, params: &[Vec<f64>], data: &Dataset, idx: &[usize], mut grad: Option<&mut Blocks>) -> f64 {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|b| b.iter_mut().for_each(|v| *v = 0.0));
        }
        let scale = 1.0 / idx.len() as f64;
        let mut total = 0.0;
        for &s in idx {
            let mut x = data.features(s).iter();
            for (j, block) in params.iter().enumerate() {
                for (k, &w) in block.iter().enumerate() {
                    let diff = w - x.next().expect("feature dimension matches parameters");
                    total += 0.5 * self.curvature * diff * diff;
                    if let Some(g) = grad.as_deref_mut() {
                        g[j][k] += self.curvature * diff * scale;
                    }
                }
            }
        }
        total * scale
    }
}

/// `f(w) = mean_s <x_s, w>`. Constant gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub sizes: Vec<usize>,
}

impl LayeredModel for Linear {
    fn layer_sizes(&self) -> Vec<usize> {
        self.sizes.clone()
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Blocks {
        self.sizes
            .iter()
            .map(|&n| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn loss_grad(&self, params: &[Vec<f64>], data: &Dataset, idx: &[usize], mut grad: Option<&mut Blocks>) -> f64 {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|b| b.iter_mut().for_each(|v| *v = 0.0));
        }
        let scale = 1.0 / idx.len() as f64;
        let mut total = 0.0;
        for &s in idx {
            let mut x = data.features(s).iter();
            for (j, block) in params.iter().enumerate() {
                for (k, &w) in block.iter().enumerate() {
                    let xv = *x.next().expect("feature dimension matches parameters");
                    total += xv * w;
                    if let Some(g) = grad.as_deref_mut() {
                        g[j][k] += xv * scale;
                    }
                }
            }
        }
        total * scale
    }
}

/// Binary logistic regression on labels 0/1, weights in a single layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub dim: usize,
}

impl LayeredModel for Logistic {
    fn layer_sizes(&self) -> Vec<usize> {
        vec![self.dim]
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Blocks {
        vec![(0..self.dim).map(|_| rng.random_range(-0.5..0.5)).collect()]
    }

    fn loss_grad(&self, params: &[Vec<f64>], data: &Dataset, idx: &[usize], mut grad: Option<&mut Blocks>) -> f64 {
        let w = &params[0];
        if let Some(g) = grad.as_deref_mut() {
            g[0].iter_mut().for_each(|v| *v = 0.0);
        }
        let scale = 1.0 / idx.len() as f64;
        let mut total = 0.0;
        for &s in idx {
            let x = data.features(s);
            let y = if data.label(s) == 1 { 1.0 } else { -1.0 };
            let margin = y * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            // log(1 + e^-m), stable for both signs
            total += (-margin).max(0.0) + (-margin.abs()).exp().ln_1p();
            if let Some(g) = grad.as_deref_mut() {
                let coef = -y / (1.0 + margin.exp()) * scale;
                g[0].iter_mut().zip(x).for_each(|(gv, xv)| *gv += coef * xv);
            }
        }
        total * scale
    }
}
