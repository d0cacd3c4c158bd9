//! Client sampling, failure draws, scaled update steps and the two aggregations.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Upload,
    Download,
    Aggregate,
}

impl FailureKind {
    const ALL: [FailureKind; 3] = [FailureKind::Upload, FailureKind::Download, FailureKind::Aggregate];

    fn index(self) -> u64 {
        self as u64
    }
}

/// Success flags of one client in one round; `true` means the transfer went through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    pub upload: bool,
    pub download: bool,
    pub aggregate: bool,
}

impl Flags {
    pub const ALL_OK: Flags = Flags {
        upload: true,
        download: true,
        aggregate: true,
    };
}

/// Bernoulli failure draws with one ChaCha stream per (client, kind). Round `t`
/// always reads the same position of its stream, so draws do not depend on
/// the order in which clients or rounds are visited.
#[derive(Debug, Clone)]
pub struct FailureSampler {
    seed: u64,
    base: ChaCha8Rng,
}

impl FailureSampler {
    pub fn new(seed: u64) -> Self {
        FailureSampler {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Whether `kind` succeeds for `client` (0-based) in `round`, given its failure probability.
    pub fn succeeds(&self, client: usize, kind: FailureKind, round: usize, failure: f64) -> bool {
        let mut rng = self.base.clone();
        rng.set_stream(client as u64 * 3 + kind.index());
        rng.set_word_pos(round as u128 * 2);
        rng.random::<f64>() >= failure
    }

    pub fn flags(&self, client: usize, round: usize, failures: [f64; 3]) -> Flags {
        let [u, d, a] = FailureKind::ALL.map(|k| self.succeeds(client, k, round, failures[k.index() as usize]));
        Flags {
            upload: u,
            download: d,
            aggregate: a,
        }
    }
}

/// `k` independent categorical draws from `q`, returned sorted (0-based ids).
pub fn sample_clients(q: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let dist = WeightedIndex::new(q).expect("sampling distribution must have positive mass");
    let mut ids: Vec<usize> = (0..k).map(|_| dist.sample(rng)).collect();
    ids.sort_unstable();
    ids
}

/// `w <- w - gamma * [s_u and s_d] / ((1-p)(1-phi)) * grad`
pub fn client_side_step(
    w: &mut [f64],
    grad: &[f64],
    flags: Flags,
    upload_failure: f64,
    download_failure: f64,
    gamma: f64,
) {
    if flags.upload && flags.download {
        let scale = gamma / ((1.0 - upload_failure) * (1.0 - download_failure));
        w.iter_mut().zip(grad).for_each(|(x, g)| *x -= scale * g);
    }
}

/// `h <- h - gamma * [s_u] / (1-p) * grad`, for both server-side blocks.
pub fn server_side_step(h: &mut [f64], grad: &[f64], upload_ok: bool, upload_failure: f64, gamma: f64) {
    if upload_ok {
        let scale = gamma / (1.0 - upload_failure);
        h.iter_mut().zip(grad).for_each(|(x, g)| *x -= scale * g);
    }
}

/// `(1/K) sum ratio_o * part_o` over sampled occurrences, with `ratio = m/q`.
pub fn aggregate_common(parts: &[&[f64]], ratios: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; parts.first().map_or(0, |p| p.len())];
    for (part, r) in parts.iter().zip(ratios) {
        out.iter_mut().zip(*part).for_each(|(o, x)| *o += r * x);
    }
    let k = k as f64;
    out.iter_mut().for_each(|o| *o /= k);
    out
}

/// [`aggregate_common`] applied to displacements from `prev`.
pub fn aggregate_common_delta(prev: &[f64], parts: &[&[f64]], ratios: &[f64], k: usize) -> Vec<f64> {
    let deltas: Vec<Vec<f64>> = parts
        .iter()
        .map(|p| p.iter().zip(prev).map(|(x, b)| x - b).collect())
        .collect();
    let refs: Vec<&[f64]> = deltas.iter().map(Vec::as_slice).collect();
    let mean = aggregate_common(&refs, ratios, k);
    prev.iter().zip(mean).map(|(b, d)| b + d).collect()
}

/// One sampled occurrence of a client-specific model: layers `1..=L_c`, of
/// which the first `cut` run on the client.
#[derive(Debug, Clone, Copy)]
pub struct ForgedPart<'a> {
    pub blocks: &'a [Vec<f64>],
    pub cut: usize,
    pub ratio: f64,
    pub aggregate_ok: bool,
    pub aggregate_failure: f64,
}

impl ForgedPart<'_> {
    /// `[s_a/(1-a)] w_c` on client layers, identity on server layers.
    fn forge(&self, j: usize, x: f64) -> f64 {
        if j >= self.cut {
            x
        } else if self.aggregate_ok {
            x / (1.0 - self.aggregate_failure)
        } else {
            0.0
        }
    }
}

/// `(1/K) sum ratio_o * [h_m; s_a/(1-a) w_c]_o`, layer by layer.
pub fn aggregate_client_specific(parts: &[ForgedPart<'_>], k: usize) -> Vec<Vec<f64>> {
    let Some(first) = parts.first() else { return Vec::new() };
    let mut out: Vec<Vec<f64>> = first.blocks.iter().map(|b| vec![0.0; b.len()]).collect();
    for part in parts {
        for (j, (o, b)) in out.iter_mut().zip(part.blocks).enumerate() {
            o.iter_mut()
                .zip(b)
                .for_each(|(o, &x)| *o += part.ratio * part.forge(j, x));
        }
    }
    let k = k as f64;
    out.iter_mut().flatten().for_each(|o| *o /= k);
    out
}

/// [`aggregate_client_specific`] applied to displacements from `prev`: a failed
/// aggregation upload drops the client-side progress, not the client-side model.
pub fn aggregate_client_specific_delta(prev: &[Vec<f64>], parts: &[ForgedPart<'_>], k: usize) -> Vec<Vec<f64>> {
    let deltas: Vec<Vec<Vec<f64>>> = parts
        .iter()
        .map(|p| {
            p.blocks
                .iter()
                .zip(prev)
                .map(|(b, base)| b.iter().zip(base).map(|(x, y)| x - y).collect())
                .collect()
        })
        .collect();
    let shifted: Vec<ForgedPart<'_>> = parts
        .iter()
        .zip(&deltas)
        .map(|(p, d)| ForgedPart { blocks: d, ..*p })
        .collect();
    let mean = aggregate_client_specific(&shifted, k);
    prev.iter()
        .zip(mean)
        .map(|(b, d)| b.iter().zip(d).map(|(x, y)| x + y).collect())
        .collect()
}
