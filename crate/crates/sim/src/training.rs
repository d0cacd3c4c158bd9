//! Round-by-round split training with failure injection.
//!
//! Layers `1..=L_c` (with `L_c` the plan's maximum cut) are client-specific:
//! the first `cut_i` run on client `i`, the rest sit on the edge server as that
//! client's private block. Layers above `L_c` are common and aggregated every
//! round. Client-specific layers are aggregated at the end of every window of
//! `I` rounds and broadcast back to every client.
//!
//! Both aggregations average displacements from the previous aggregate,
//! `h <- h + (1/K) sum (m/q)(h_i - h)`, so a client that failed contributes no
//! progress rather than a zeroed model.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use sfl_core::{Population, SamplingPlan};

use crate::data::{batch_indices, Dataset};
use crate::model::{squared_norm, Blocks, LayeredModel};
use crate::steps::{
    aggregate_client_specific_delta, aggregate_common_delta, client_side_step, sample_clients, server_side_step,
    FailureSampler, Flags, ForgedPart,
};

const BATCH_STREAM: u64 = 1 << 32;
const SAMPLING_STREAM: u64 = 1 << 33;
const INIT_STREAM: u64 = 1 << 34;
const ROUND_ROBIN_STREAM: u64 = 1 << 35;

/// Random stream for client `client`'s mini-batch in `round`.
pub fn batch_rng(seed: u64, client: usize, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BATCH_STREAM + client as u64);
    rng.set_word_pos((round as u128) << 32);
    rng
}

/// Random stream used for the initial model.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("client {client} has no samples")]
    EmptyClient { client: usize },
    #[error("batch size must be positive")]
    BatchSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientSchedule {
    /// `K` draws with replacement from the plan's `q` at the start of every window.
    Sampled,
    /// Consecutive blocks of `K` from a permutation reshuffled after every full pass.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: ClientSchedule,
    /// Expected per-round latency copied into every record.
    pub round_latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// 1-based client ids, sorted, with repeats.
    pub sampled: Vec<usize>,
    /// Flags of each distinct sampled client, in id order.
    pub flags: Vec<Flags>,
    pub loss: f64,
    pub grad_norm: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub records: Vec<RoundRecord>,
    pub final_loss: f64,
}

impl SimulationTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Comma-separated text, one row per round. Sampled ids are joined with
    /// `;`; failure columns hold one bit per distinct sampled client, `1` for a failure.
    pub fn to_delimited(&self) -> String {
        let mut out =
            String::from("round,loss,grad_norm_estimate,sampled_ids,failures_u,failures_d,failures_a,latency\n");
        for r in &self.records {
            let ids: Vec<String> = r.sampled.iter().map(usize::to_string).collect();
            let bits = |f: fn(&Flags) -> bool| r.flags.iter().map(|x| if f(x) { '0' } else { '1' }).collect::<String>();
            writeln!(
                out,
                "{},{:e},{:e},{},{},{},{},{:e}",
                r.round,
                r.loss,
                r.grad_norm,
                ids.join(";"),
                bits(|f| f.upload),
                bits(|f| f.download),
                bits(|f| f.aggregate),
                r.latency
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Per-client layer gradients of one round, for statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDetail {
    pub record: RoundRecord,
    /// `(0-based client, squared gradient norm per layer)` for each distinct sampled client.
    pub layer_grad_sq: Vec<(usize, Vec<f64>)>,
}

pub struct Simulation<'a, M: LayeredModel + ?Sized> {
    pop: &'a Population,
    plan: &'a SamplingPlan,
    model: &'a M,
    data: &'a [Dataset],
    eval: &'a Dataset,
    config: TrainingConfig,
    failures: FailureSampler,
    sampling: ChaCha8Rng,
    queue: VecDeque<usize>,
    /// Common layers and the last client-specific aggregate.
    global: Blocks,
    /// Client-specific layers `1..=L_c` per client.
    local: Vec<Blocks>,
    window: Vec<usize>,
    flags: Vec<Option<Flags>>,
    round: usize,
}

impl<'a, M: LayeredModel + ?Sized> Simulation<'a, M> {
    pub fn new(
        pop: &'a Population,
        plan: &'a SamplingPlan,
        model: &'a M,
        data: &'a [Dataset],
        eval: &'a Dataset,
        config: TrainingConfig,
    ) -> Result<Self, SimError> {
        let init = model.init(&mut init_rng(config.seed));
        Self::with_initial(pop, plan, model, data, eval, config, init)
    }

    pub fn with_initial(
        pop: &'a Population,
        plan: &'a SamplingPlan,
        model: &'a M,
        data: &'a [Dataset],
        eval: &'a Dataset,
        config: TrainingConfig,
        init: Blocks,
    ) -> Result<Self, SimError> {
        let n = pop.num_clients();
        let layers = model.num_layers();
        let checks = [
            ("client datasets", n, data.len()),
            ("sampling probabilities", n, plan.q.len()),
            ("cut layers", n, plan.cut_layers.len()),
            ("model layers", pop.num_layers(), layers),
            ("initial blocks", layers, init.len()),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(SimError::Dimension { what, expected, found });
            }
        }
        if plan.max_cut > layers {
            return Err(SimError::Dimension {
                what: "maximum cut within model depth",
                expected: layers,
                found: plan.max_cut,
            });
        }
        if let Some(i) = data.iter().position(Dataset::is_empty) {
            return Err(SimError::EmptyClient { client: i + 1 });
        }
        if config.batch_size == 0 {
            return Err(SimError::BatchSize);
        }
        let mut sampling = ChaCha8Rng::seed_from_u64(config.seed);
        sampling.set_stream(match config.schedule {
            ClientSchedule::Sampled => SAMPLING_STREAM,
            ClientSchedule::RoundRobin => ROUND_ROBIN_STREAM,
        });
        let local = vec![init[..plan.max_cut].to_vec(); n];
        Ok(Simulation {
            pop,
            plan,
            model,
            data,
            eval,
            failures: FailureSampler::new(config.seed),
            config,
            sampling,
            queue: VecDeque::new(),
            global: init,
            local,
            window: Vec::new(),
            flags: vec![None; n],
            round: 0,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Clients of the current window, 0-based, sorted, with repeats.
    pub fn window(&self) -> &[usize] {
        &self.window
    }

    /// Client `i`'s client-specific layers.
    pub fn client_model(&self, i: usize) -> &Blocks {
        &self.local[i]
    }

    /// Common layers and the last client-specific aggregate.
    pub fn global_model(&self) -> &Blocks {
        &self.global
    }

    fn ratio(&self, i: usize) -> f64 {
        self.pop.clients()[i].weight / self.plan.q[i]
    }

    fn next_window(&mut self) -> Vec<usize> {
        let k = self.pop.system().clients_per_round;
        match self.config.schedule {
            ClientSchedule::Sampled => sample_clients(&self.plan.q, k, &mut self.sampling),
            ClientSchedule::RoundRobin => {
                while self.queue.len() < k {
                    let mut pass: Vec<usize> = (0..self.pop.num_clients()).collect();
                    pass.shuffle(&mut self.sampling);
                    self.queue.extend(pass);
                }
                let mut ids: Vec<usize> = self.queue.drain(..k).collect();
                ids.sort_unstable();
                ids
            }
        }
    }

    fn distinct(&self) -> Vec<usize> {
        let mut ids = self.window.clone();
        ids.dedup();
        ids
    }

    /// Aggregate of the forged client-specific models with the current round's
    /// aggregation flags, as the Fed server would form it now.
    pub fn forged_aggregate(&self) -> Blocks {
        let base = &self.global[..self.plan.max_cut];
        let parts: Vec<ForgedPart<'_>> = self
            .window
            .iter()
            .map(|&i| {
                let c = &self.pop.clients()[i];
                ForgedPart {
                    blocks: &self.local[i],
                    cut: self.plan.cut_layers[i],
                    ratio: self.ratio(i),
                    aggregate_ok: self.flags[i].is_none_or(|f| f.aggregate),
                    aggregate_failure: c.aggregate_failure,
                }
            })
            .collect();
        if parts.is_empty() {
            return base.to_vec();
        }
        aggregate_client_specific_delta(base, &parts, self.window.len())
    }

    /// Model the loss is reported on: common layers plus the weighted average of
    /// the sampled clients' client-specific layers.
    pub fn aggregated_model(&self) -> Blocks {
        let lc = self.plan.max_cut;
        let k = self.window.len();
        let ratios: Vec<f64> = self.window.iter().map(|&i| self.ratio(i)).collect();
        let mut out = self.global.clone();
        for (j, block) in out.iter_mut().enumerate().take(lc) {
            let parts: Vec<&[f64]> = self.window.iter().map(|&i| self.local[i][j].as_slice()).collect();
            if !parts.is_empty() {
                *block = aggregate_common_delta(block, &parts, &ratios, k);
            }
        }
        out
    }

    pub fn step(&mut self) -> RoundDetail {
        let sys = self.pop.system();
        let (gamma, interval, lc) = (sys.learning_rate, sys.aggregation_interval, self.plan.max_cut);
        self.round += 1;
        let t = self.round;
        if (t - 1).is_multiple_of(interval) {
            self.window = self.next_window();
        }
        let distinct = self.distinct();
        let mut common: Vec<(usize, Blocks)> = Vec::with_capacity(distinct.len());
        let mut layer_grad_sq = Vec::with_capacity(distinct.len());
        self.flags.iter_mut().for_each(|f| *f = None);
        for &i in &distinct {
            let c = &self.pop.clients()[i];
            let mut params = self.local[i].clone();
            params.extend_from_slice(&self.global[lc..]);
            let mut rng = batch_rng(self.config.seed, i, t);
            let batch = batch_indices(&mut rng, self.data[i].len(), self.config.batch_size);
            let (_, grad) = self.model.gradient(&params, &self.data[i], &batch);
            layer_grad_sq.push((i, grad.iter().map(|g| squared_norm(std::slice::from_ref(g))).collect()));
            let flags = self
                .failures
                .flags(i, t, [c.upload_failure, c.download_failure, c.aggregate_failure]);
            self.flags[i] = Some(flags);
            for (j, (w, g)) in self.local[i].iter_mut().zip(&grad).enumerate() {
                if j < self.plan.cut_layers[i] {
                    client_side_step(w, g, flags, c.upload_failure, c.download_failure, gamma);
                } else {
                    server_side_step(w, g, flags.upload, c.upload_failure, gamma);
                }
            }
            let mut server = params.split_off(lc);
            for (h, g) in server.iter_mut().zip(&grad[lc..]) {
                server_side_step(h, g, flags.upload, c.upload_failure, gamma);
            }
            common.push((i, server));
        }

        let k = self.window.len();
        let ratios: Vec<f64> = self.window.iter().map(|&i| self.ratio(i)).collect();
        let position = |i: usize| distinct.binary_search(&i).expect("window member");
        for j in lc..self.global.len() {
            let parts: Vec<&[f64]> = self
                .window
                .iter()
                .map(|&i| common[position(i)].1[j - lc].as_slice())
                .collect();
            self.global[j] = aggregate_common_delta(&self.global[j], &parts, &ratios, k);
        }
        let window_end = t.is_multiple_of(interval) || t == sys.rounds;
        if window_end {
            let merged = self.forged_aggregate();
            self.global[..lc].clone_from_slice(&merged);
            self.local.iter_mut().for_each(|l| l.clone_from(&merged));
        }

        let eval_model = self.aggregated_model();
        let (loss, grad) = self.model.gradient(&eval_model, self.eval, &self.eval.all());
        let mut flags: Vec<Flags> = Vec::with_capacity(distinct.len());
        flags.extend(distinct.iter().map(|&i| self.flags[i].expect("drawn this round")));
        RoundDetail {
            record: RoundRecord {
                round: t,
                sampled: self.window.iter().map(|i| i + 1).collect(),
                flags,
                loss,
                grad_norm: squared_norm(&grad).sqrt(),
                latency: self.config.round_latency,
            },
            layer_grad_sq,
        }
    }
}

/// Runs every round of the population's system configuration.
pub fn run_training<M: LayeredModel + ?Sized>(
    pop: &Population,
    plan: &SamplingPlan,
    model: &M,
    data: &[Dataset],
    eval: &Dataset,
    config: TrainingConfig,
) -> Result<SimulationTrace, SimError> {
    let mut sim = Simulation::new(pop, plan, model, data, eval, config)?;
    let records: Vec<RoundRecord> = (0..pop.system().rounds).map(|_| sim.step().record).collect();
    let final_loss = records
        .last()
        .map_or_else(|| model.loss(sim.global_model(), eval, &eval.all()), |r| r.loss);
    Ok(SimulationTrace { records, final_loss })
}
