//! Synthetic Gaussian-cluster classification data split across clients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Row-major samples with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Self {
        assert_eq!(
            features.len(),
            dim * labels.len(),
            "feature length must be dim * samples"
        );
        Dataset { dim, features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self, s: usize) -> &[f64] {
        &self.features[s * self.dim..(s + 1) * self.dim]
    }

    pub fn label(&self, s: usize) -> usize {
        self.labels[s]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn all(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Concatenation of `parts` in order.
    pub fn concat(parts: &[Dataset]) -> Dataset {
        let dim = parts.first().map_or(0, |d| d.dim);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            assert_eq!(p.dim, dim, "datasets must share a dimension");
            features.extend_from_slice(&p.features);
            labels.extend_from_slice(&p.labels);
        }
        Dataset { dim, features, labels }
    }
}

/// `b` distinct indices in `0..n`, or every index when `b >= n`.
pub fn batch_indices(rng: &mut ChaCha8Rng, n: usize, b: usize) -> Vec<usize> {
    if b >= n {
        return (0..n).collect();
    }
    let mut idx = sample(rng, n, b).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub classes: usize,
    /// Standard deviation of the class means around the origin.
    pub separation: f64,
    /// Standard deviation of samples around their class mean.
    pub noise: f64,
    pub samples_per_client: Vec<usize>,
    pub iid: bool,
    /// Share of a client's samples drawn from its primary class when not IID.
    pub primary_fraction: f64,
}

/// Per-client datasets. Client `i` has primary class `i mod classes` when not IID;
/// its other samples are spread uniformly over the remaining classes.
pub fn generate_clients(spec: &SyntheticSpec, seed: u64) -> Vec<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.dim).map(|_| spec.separation * gauss(&mut rng)).collect())
        .collect();
    spec.samples_per_client
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let primary = i % spec.classes;
            let mut features = Vec::with_capacity(count * spec.dim);
            let mut labels = Vec::with_capacity(count);
            for _ in 0..count {
                let label = if spec.iid || spec.classes == 1 {
                    rng.random_range(0..spec.classes)
                } else if rng.random::<f64>() < spec.primary_fraction {
                    primary
                } else {
                    let other = rng.random_range(0..spec.classes - 1);
                    if other >= primary {
                        other + 1
                    } else {
                        other
                    }
                };
                features.extend(means[label].iter().map(|m| m + spec.noise * gauss(&mut rng)));
                labels.push(label);
            }
            Dataset::new(spec.dim, features, labels)
        })
        .collect()
}

/// Dataset weights `D_i / D`.
pub fn dataset_weights(clients: &[Dataset]) -> Vec<f64> {
    let total: usize = clients.iter().map(Dataset::len).sum();
    clients.iter().map(|d| d.len() as f64 / total as f64).collect()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
