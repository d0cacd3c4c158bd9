//! Flat `section.key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment. Ranges are written `lo,hi` or as a
//! single value for a degenerate range; lists are comma separated. Several
//! files can be merged, later keys overriding earlier ones, so a calibration
//! output can be layered on top of an experiment file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sfl_core::ModelStatistics;
use sfl_sim::EstimationReport;

use crate::error::HarnessError;

/// Parsed key-value pairs, sorted by key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Syntax {
                    line: n + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            let key = key.trim();
            if !key.contains('.') || key.split('.').any(str::is_empty) {
                return Err(HarnessError::Syntax {
                    line: n + 1,
                    message: format!("key `{key}` must look like `section.name`"),
                });
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(RawConfig { entries })
    }

    /// Keys of `other` replace keys of `self`.
    pub fn merge(&mut self, other: RawConfig) {
        self.entries.extend(other.entries);
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").expect("writing to a String cannot fail");
        }
        out
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| invalid(key, value, format!("not a valid {}", std::any::type_name::<T>())))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    value.split(',').map(|v| scalar(key, v.trim())).collect()
}

/// Inclusive range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn point(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    fn parse(key: &str, value: &str) -> Result<Self, HarnessError> {
        let v: Vec<f64> = list(key, value)?;
        let r = match v[..] {
            [x] => Range::point(x),
            [lo, hi] => Range { lo, hi },
            _ => return Err(invalid(key, value, "expected `lo,hi` or a single value")),
        };
        if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
            return Err(invalid(key, value, "bounds must be finite with lo <= hi"));
        }
        Ok(r)
    }

    fn text(&self) -> String {
        if self.lo == self.hi {
            format!("{}", self.lo)
        } else {
            format!("{},{}", self.lo, self.hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Policy {
    /// Jointly optimized sampling and cuts.
    OmsOcs,
    /// Optimized sampling over random fixed cuts.
    FmsOcs,
    /// Uniform sampling, each client at its latency-minimizing cut.
    Uniform,
    /// Sampling proportional to dataset size over random fixed cuts.
    Weighted,
    /// Round-robin client blocks over random fixed cuts.
    RoundRobin,
    /// Uniform sampling over random fixed cuts.
    RandomFixedSplit,
}

impl Policy {
    pub const ALL: [Policy; 6] = [
        Policy::OmsOcs,
        Policy::FmsOcs,
        Policy::Uniform,
        Policy::Weighted,
        Policy::RoundRobin,
        Policy::RandomFixedSplit,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Policy::OmsOcs => "oms-ocs",
            Policy::FmsOcs => "fms-ocs",
            Policy::Uniform => "uniform",
            Policy::Weighted => "weighted",
            Policy::RoundRobin => "round-robin",
            Policy::RandomFixedSplit => "random-fixed-split",
        }
    }
}

impl FromStr for Policy {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| HarnessError::UnknownPolicy(s.to_string()))
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    /// `m_i = D_i / D`
    Data,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub num_clients: usize,
    pub weights: WeightScheme,
    /// Dataset size range; sizes are drawn as integers.
    pub samples: Range,
    pub upload_failure: Range,
    pub download_failure: Range,
    pub aggregate_failure: Range,
    /// Bytes per second.
    pub uplink_rate: Range,
    pub downlink_rate: Range,
    pub fed_uplink_rate: Range,
    /// Operations per second.
    pub compute_speed: Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub clients_per_round: usize,
    pub aggregation_interval: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    pub batch_size: usize,
    pub min_cut: usize,
    /// Absolute per-round latency budget in seconds.
    pub latency_budget: Option<f64>,
    /// Used without an absolute budget: multiple of the expected latency of
    /// uniform sampling with every client at its fastest cut.
    pub latency_slack: f64,
    pub server_speed: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Input width, hidden widths, class count.
    pub widths: Vec<usize>,
    pub separation: f64,
    pub noise: f64,
    pub iid: bool,
    pub primary_fraction: f64,
    /// Bytes per transmitted activation value.
    pub bytes_per_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub local_steps: usize,
    pub perturbation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub policy: Policy,
    pub noise_cv: f64,
    /// Policies run by `compare`.
    pub compare: Vec<Policy>,
    /// Number of consecutive seeds run by `compare`, starting at the experiment seed.
    pub compare_seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub population: PopulationSpec,
    pub system: SystemSpec,
    pub model: ModelSpec,
    pub calibration: CalibrationSpec,
    pub policy: PolicySpec,
    /// Measured statistics; calibration runs when absent.
    pub stats: Option<ModelStatistics>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            population: PopulationSpec {
                num_clients: 10,
                weights: WeightScheme::Data,
                samples: Range { lo: 40.0, hi: 120.0 },
                upload_failure: Range { lo: 0.2, hi: 0.6 },
                download_failure: Range { lo: 0.2, hi: 0.6 },
                aggregate_failure: Range { lo: 0.2, hi: 0.6 },
                uplink_rate: Range { lo: 1e5, hi: 1e6 },
                downlink_rate: Range { lo: 1e5, hi: 1e6 },
                fed_uplink_rate: Range { lo: 1e5, hi: 1e6 },
                compute_speed: Range { lo: 1e7, hi: 1e8 },
            },
            system: SystemSpec {
                clients_per_round: 3,
                aggregation_interval: 5,
                learning_rate: 0.05,
                rounds: 100,
                batch_size: 16,
                min_cut: 1,
                latency_budget: None,
                latency_slack: 1.5,
                server_speed: 1e9,
                seed: 1,
            },
            model: ModelSpec {
                widths: vec![8, 16, 16, 16, 16, 16, 4],
                separation: 1.5,
                noise: 1.0,
                iid: false,
                primary_fraction: 0.7,
                bytes_per_value: 4.0,
            },
            calibration: CalibrationSpec {
                epochs: 2,
                batch_size: 16,
                learning_rate: 0.05,
                local_steps: 5,
                perturbation: sfl_sim::estimation::RELATIVE_PERTURBATION,
            },
            policy: PolicySpec {
                policy: Policy::OmsOcs,
                noise_cv: 0.0,
                compare: Policy::ALL.to_vec(),
                compare_seeds: 1,
            },
            stats: None,
        }
    }
}

const STAT_KEYS: [&str; 4] = ["stats.beta", "stats.sigma_sq", "stats.g_sq", "stats.loss_gap"];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    /// Defaults overridden by every key of `raw`. Unknown keys are rejected.
    pub fn from_raw(raw: &RawConfig) -> Result<Self, HarnessError> {
        let mut c = ExperimentConfig::default();
        for key in raw.keys() {
            let v = raw.get(key).expect("key listed by the map");
            let p = &mut c.population;
            let s = &mut c.system;
            let m = &mut c.model;
            let k = &mut c.calibration;
            match key {
                "population.num_clients" => p.num_clients = scalar(key, v)?,
                "population.weights" => {
                    p.weights = match v {
                        "data" => WeightScheme::Data,
                        "uniform" => WeightScheme::Uniform,
                        _ => return Err(invalid(key, v, "expected `data` or `uniform`")),
                    }
                }
                "population.samples" => p.samples = Range::parse(key, v)?,
                "population.upload_failure" => p.upload_failure = Range::parse(key, v)?,
                "population.download_failure" => p.download_failure = Range::parse(key, v)?,
                "population.aggregate_failure" => p.aggregate_failure = Range::parse(key, v)?,
                "population.uplink_rate" => p.uplink_rate = Range::parse(key, v)?,
                "population.downlink_rate" => p.downlink_rate = Range::parse(key, v)?,
                "population.fed_uplink_rate" => p.fed_uplink_rate = Range::parse(key, v)?,
                "population.compute_speed" => p.compute_speed = Range::parse(key, v)?,
                "system.clients_per_round" => s.clients_per_round = scalar(key, v)?,
                "system.aggregation_interval" => s.aggregation_interval = scalar(key, v)?,
                "system.learning_rate" => s.learning_rate = scalar(key, v)?,
                "system.rounds" => s.rounds = scalar(key, v)?,
                "system.batch_size" => s.batch_size = scalar(key, v)?,
                "system.min_cut" => s.min_cut = scalar(key, v)?,
                "system.latency_budget" => s.latency_budget = Some(scalar(key, v)?),
                "system.latency_slack" => s.latency_slack = scalar(key, v)?,
                "system.server_speed" => s.server_speed = scalar(key, v)?,
                "system.seed" => s.seed = scalar(key, v)?,
                "model.widths" => m.widths = list(key, v)?,
                "model.separation" => m.separation = scalar(key, v)?,
                "model.noise" => m.noise = scalar(key, v)?,
                "model.iid" => m.iid = scalar(key, v)?,
                "model.primary_fraction" => m.primary_fraction = scalar(key, v)?,
                "model.bytes_per_value" => m.bytes_per_value = scalar(key, v)?,
                "calibration.epochs" => k.epochs = scalar(key, v)?,
                "calibration.batch_size" => k.batch_size = scalar(key, v)?,
                "calibration.learning_rate" => k.learning_rate = scalar(key, v)?,
                "calibration.local_steps" => k.local_steps = scalar(key, v)?,
                "calibration.perturbation" => k.perturbation = scalar(key, v)?,
                "policy.name" => c.policy.policy = v.parse()?,
                "policy.noise_cv" => c.policy.noise_cv = scalar(key, v)?,
                "policy.compare" => {
                    c.policy.compare = v.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>()?
                }
                "policy.compare_seeds" => c.policy.compare_seeds = scalar(key, v)?,
                _ if STAT_KEYS.contains(&key) => {}
                _ => return Err(HarnessError::UnknownKey(key.to_string())),
            }
        }
        c.stats = parse_stats(raw)?;
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let p = &self.population;
        let check = |ok: bool, key: &str, value: String, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(invalid(key, &value, reason))
            }
        };
        check(
            p.num_clients > 0,
            "population.num_clients",
            p.num_clients.to_string(),
            "must be positive",
        )?;
        check(
            p.samples.lo >= 1.0,
            "population.samples",
            p.samples.text(),
            "every client needs a sample",
        )?;
        for (key, r) in [
            ("population.upload_failure", p.upload_failure),
            ("population.download_failure", p.download_failure),
            ("population.aggregate_failure", p.aggregate_failure),
        ] {
            check(
                r.lo >= 0.0 && r.hi < 1.0,
                key,
                r.text(),
                "probabilities must lie in [0, 1)",
            )?;
        }
        for (key, r) in [
            ("population.uplink_rate", p.uplink_rate),
            ("population.downlink_rate", p.downlink_rate),
            ("population.fed_uplink_rate", p.fed_uplink_rate),
            ("population.compute_speed", p.compute_speed),
        ] {
            check(r.lo > 0.0, key, r.text(), "must be positive")?;
        }
        let m = &self.model;
        check(
            m.widths.len() >= 2 && m.widths.iter().all(|&w| w > 0) && *m.widths.last().unwrap_or(&0) >= 2,
            "model.widths",
            format!("{:?}", m.widths),
            "need an input width, at least one layer and two or more classes",
        )?;
        check(
            (0.0..=1.0).contains(&m.primary_fraction),
            "model.primary_fraction",
            m.primary_fraction.to_string(),
            "must lie in [0, 1]",
        )?;
        let s = &self.system;
        check(
            s.batch_size > 0,
            "system.batch_size",
            s.batch_size.to_string(),
            "must be positive",
        )?;
        check(
            s.latency_slack > 0.0,
            "system.latency_slack",
            s.latency_slack.to_string(),
            "must be positive",
        )?;
        check(
            self.policy.noise_cv >= 0.0,
            "policy.noise_cv",
            self.policy.noise_cv.to_string(),
            "must be >= 0",
        )?;
        check(
            self.policy.compare_seeds > 0,
            "policy.compare_seeds",
            self.policy.compare_seeds.to_string(),
            "must be positive",
        )?;
        check(
            self.calibration.epochs > 0,
            "calibration.epochs",
            self.calibration.epochs.to_string(),
            "must be positive",
        )?;
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.model.widths.len() - 1
    }

    /// Every setting, in the same format [`ExperimentConfig::parse`] reads.
    pub fn to_raw(&self) -> RawConfig {
        let mut r = RawConfig::default();
        let p = &self.population;
        r.set("population.num_clients", p.num_clients);
        r.set(
            "population.weights",
            match p.weights {
                WeightScheme::Data => "data",
                WeightScheme::Uniform => "uniform",
            },
        );
        r.set("population.samples", p.samples.text());
        r.set("population.upload_failure", p.upload_failure.text());
        r.set("population.download_failure", p.download_failure.text());
        r.set("population.aggregate_failure", p.aggregate_failure.text());
        r.set("population.uplink_rate", p.uplink_rate.text());
        r.set("population.downlink_rate", p.downlink_rate.text());
        r.set("population.fed_uplink_rate", p.fed_uplink_rate.text());
        r.set("population.compute_speed", p.compute_speed.text());
        let s = &self.system;
        r.set("system.clients_per_round", s.clients_per_round);
        r.set("system.aggregation_interval", s.aggregation_interval);
        r.set("system.learning_rate", s.learning_rate);
        r.set("system.rounds", s.rounds);
        r.set("system.batch_size", s.batch_size);
        r.set("system.min_cut", s.min_cut);
        if let Some(b) = s.latency_budget {
            r.set("system.latency_budget", b);
        }
        r.set("system.latency_slack", s.latency_slack);
        r.set("system.server_speed", s.server_speed);
        r.set("system.seed", s.seed);
        let m = &self.model;
        r.set("model.widths", join(&m.widths));
        r.set("model.separation", m.separation);
        r.set("model.noise", m.noise);
        r.set("model.iid", m.iid);
        r.set("model.primary_fraction", m.primary_fraction);
        r.set("model.bytes_per_value", m.bytes_per_value);
        let k = &self.calibration;
        r.set("calibration.epochs", k.epochs);
        r.set("calibration.batch_size", k.batch_size);
        r.set("calibration.learning_rate", k.learning_rate);
        r.set("calibration.local_steps", k.local_steps);
        r.set("calibration.perturbation", k.perturbation);
        r.set("policy.name", self.policy.policy);
        r.set("policy.noise_cv", self.policy.noise_cv);
        r.set("policy.compare", join(&self.policy.compare));
        r.set("policy.compare_seeds", self.policy.compare_seeds);
        if let Some(stats) = &self.stats {
            r.merge(stats_raw(stats));
        }
        r
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_stats(raw: &RawConfig) -> Result<Option<ModelStatistics>, HarnessError> {
    let present: Vec<&str> = STAT_KEYS.iter().copied().filter(|k| raw.get(k).is_some()).collect();
    if present.is_empty() {
        return Ok(None);
    }
    if let Some(missing) = STAT_KEYS.iter().find(|k| raw.get(k).is_none()) {
        return Err(HarnessError::MissingKey(missing.to_string()));
    }
    let get = |k: &str| raw.get(k).expect("checked above");
    Ok(Some(ModelStatistics {
        beta: scalar("stats.beta", get("stats.beta"))?,
        sigma_sq: list("stats.sigma_sq", get("stats.sigma_sq"))?,
        g_sq: list("stats.g_sq", get("stats.g_sq"))?,
        loss_gap: scalar("stats.loss_gap", get("stats.loss_gap"))?,
    }))
}

fn stats_raw(stats: &ModelStatistics) -> RawConfig {
    let mut r = RawConfig::default();
    r.set("stats.beta", stats.beta);
    r.set("stats.sigma_sq", join(&stats.sigma_sq));
    r.set("stats.g_sq", join(&stats.g_sq));
    r.set("stats.loss_gap", stats.loss_gap);
    r
}

/// Calibration output in config format: the `stats.*` keys an experiment
/// reads, followed by the remaining measurements as comments.
pub fn report_text(report: &EstimationReport) -> String {
    let mut out = stats_raw(&report.statistics()).to_text();
    let _ = writeln!(out, "# beta_local = {}", report.beta_local);
    let _ = writeln!(out, "# beta_cross = {}", report.beta_cross);
    let _ = writeln!(out, "# beta_cross_defined = {}", report.beta_cross_defined);
    let _ = writeln!(out, "# calibration_epochs = {}", report.calibration_epochs);
    let _ = writeln!(out, "# batches = {}", report.batches);
    out
}
