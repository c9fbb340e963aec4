//! Run parameters and the flat `section.key = value` file format.
//!
//! A configuration file is plain text: one `key = value` pair per line,
//! `#` starts a comment, blank lines are ignored. Every key has a default,
//! so an empty file is a valid baseline configuration. Writing a resolved
//! configuration with [`SystemConfig::to_config_string`] and parsing it
//! back yields an identical value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_N: usize = 100;
pub const DEFAULT_E: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_MU: f64 = 1.0;
pub const DEFAULT_DIM: usize = 100;
pub const DEFAULT_DATA_SIZE: usize = 10_000;
pub const DEFAULT_RHO: f64 = 0.01;
pub const DEFAULT_ETA: f64 = 0.01;
pub const DEFAULT_LOCAL_STEPS: u32 = 10;
pub const DEFAULT_SIGMA_EXPONENT: f64 = 0.1;
pub const DEFAULT_TOTAL_UPDATES: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_BURN_IN: f64 = 0.1;

/// Cluster topology: `n` clients split evenly across `e` edge servers.
///
/// Each cycle an edge waits for the first `m` of its `l` clients to become
/// available, dispatches them, and aggregates the first `k` uplinks. When
/// derived from fractions, `m = round(beta * l)` and `k = round(alpha * m)`,
/// each at least 1, with ties rounding away from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    /// Total number of clients.
    pub n: usize,
    /// Number of edge servers.
    pub e: usize,
    /// Clients per edge server; `n = e * l`.
    pub l: usize,
    /// Availability quorum per cycle.
    pub m: usize,
    /// Aggregation quorum per cycle.
    pub k: usize,
    /// Aggregated fraction of the availability quorum, in (0, 1).
    pub alpha: f64,
    /// Available fraction of a cluster, in (0, 1).
    pub beta: f64,
}

impl TopologyConfig {
    /// Derives the quorums `m` and `k` from `alpha` and `beta`.
    pub fn from_fractions(n: usize, e: usize, alpha: f64, beta: f64) -> Result<Self> {
        check_fraction("topology.alpha", alpha)?;
        check_fraction("topology.beta", beta)?;
        if e == 0 {
            return Err(Error::invalid("topology.e", "must be at least 1"));
        }
        if n == 0 || !n.is_multiple_of(e) {
            return Err(Error::invalid(
                "topology.n",
                format!("{n} is not a positive multiple of e = {e}"),
            ));
        }
        let l = n / e;
        let m = ((beta * l as f64).round() as usize).clamp(1, l);
        let k = ((alpha * m as f64).round() as usize).clamp(1, m);
        let cfg = TopologyConfig {
            n,
            e,
            l,
            m,
            k,
            alpha,
            beta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a topology with explicit quorums.
    pub fn with_quorums(
        n: usize,
        e: usize,
        m: usize,
        k: usize,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        if e == 0 {
            return Err(Error::invalid("topology.e", "must be at least 1"));
        }
        if n == 0 || !n.is_multiple_of(e) {
            return Err(Error::invalid(
                "topology.n",
                format!("{n} is not a positive multiple of e = {e}"),
            ));
        }
        let cfg = TopologyConfig {
            n,
            e,
            l: n / e,
            m,
            k,
            alpha,
            beta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.e == 0 {
            return Err(Error::invalid("topology.e", "must be at least 1"));
        }
        if self.l == 0 {
            return Err(Error::invalid("topology.l", "must be at least 1"));
        }
        if self.n != self.e * self.l {
            return Err(Error::invalid(
                "topology.n",
                format!("n = {} but e * l = {}", self.n, self.e * self.l),
            ));
        }
        if self.m < 1 || self.m > self.l {
            return Err(Error::invalid(
                "topology.m",
                format!("m = {} must satisfy 1 <= m <= l = {}", self.m, self.l),
            ));
        }
        if self.k < 1 || self.k > self.m {
            return Err(Error::invalid(
                "topology.k",
                format!("k = {} must satisfy 1 <= k <= m = {}", self.k, self.m),
            ));
        }
        check_fraction("topology.alpha", self.alpha)?;
        check_fraction("topology.beta", self.beta)?;
        Ok(())
    }

    /// Global client ids owned by `edge`.
    pub fn clients_of(&self, edge: usize) -> Range<usize> {
        debug_assert!(edge < self.e);
        edge * self.l..(edge + 1) * self.l
    }

    /// The edge a client belongs to.
    pub fn edge_of(&self, client: usize) -> usize {
        debug_assert!(client < self.n);
        client / self.l
    }
}

fn check_fraction(field: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0 && value < 1.0) {
        return Err(Error::invalid(
            field,
            format!("{value} must lie strictly between 0 and 1"),
        ));
    }
    Ok(())
}

/// Cycle timing: exponential availability and uplink clocks around a
/// deterministic training interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    /// Client availability rate (mean wait `1 / lambda`).
    pub lambda: f64,
    /// Deterministic local training duration.
    pub c: f64,
    /// Uplink completion rate (mean delay `1 / mu`).
    pub mu: f64,
}

impl TimingConfig {
    pub fn new(lambda: f64, c: f64, mu: f64) -> Result<Self> {
        let cfg = TimingConfig { lambda, c, mu };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("timing.lambda", "must be finite and > 0"));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::invalid("timing.c", "must be finite and >= 0"));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::invalid("timing.mu", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Local training and aggregation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    /// Proximal weight pulling local models toward the cycle anchor.
    pub rho: f64,
    /// SGD step size.
    pub eta: f64,
    /// Local SGD steps per dispatched cycle.
    pub local_steps: u32,
    /// Exponent of the inverse-power staleness discount used in cloud mixing.
    pub sigma_exponent: f64,
    /// Minibatch size; `None` trains on the full shard each step.
    pub batch: Option<usize>,
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::invalid("learning.rho", "must be finite and >= 0"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid("learning.eta", "must be finite and > 0"));
        }
        if self.local_steps == 0 {
            return Err(Error::invalid("learning.local_steps", "must be at least 1"));
        }
        if !(self.sigma_exponent.is_finite() && self.sigma_exponent >= 0.0) {
            return Err(Error::invalid(
                "learning.sigma_exponent",
                "must be finite and >= 0",
            ));
        }
        if let Some(batch) = self.batch {
            if batch == 0 {
                return Err(Error::invalid("learning.batch", "must be at least 1"));
            }
        }
        Ok(())
    }
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            rho: DEFAULT_RHO,
            eta: DEFAULT_ETA,
            local_steps: DEFAULT_LOCAL_STEPS,
            sigma_exponent: DEFAULT_SIGMA_EXPONENT,
            batch: None,
        }
    }
}

/// Synthetic dataset shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    /// Feature dimension.
    pub dim: usize,
    /// Total number of rows, split across the `n` clients.
    pub size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dim: DEFAULT_DIM,
            size: DEFAULT_DATA_SIZE,
        }
    }
}

/// Everything a run needs, resolved against defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub topology: TopologyConfig,
    pub timing: TimingConfig,
    pub learning: LearningConfig,
    pub data: DataConfig,
    /// Number of cloud aggregations to simulate.
    pub total_updates: u64,
    /// Master seed; timing, data, and SGD streams are derived from it.
    pub seed: u64,
    /// Fraction of simulated time discarded before empirical staleness stats.
    pub burn_in: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            topology: TopologyConfig::from_fractions(
                DEFAULT_N,
                DEFAULT_E,
                DEFAULT_ALPHA,
                DEFAULT_BETA,
            )
            .expect("default topology is valid"),
            timing: TimingConfig {
                lambda: DEFAULT_LAMBDA,
                c: DEFAULT_C,
                mu: DEFAULT_MU,
            },
            learning: LearningConfig::default(),
            data: DataConfig::default(),
            total_updates: DEFAULT_TOTAL_UPDATES,
            seed: DEFAULT_SEED,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

impl SystemConfig {
    /// Parses a full configuration, rejecting unknown keys.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        let cfg = SystemConfig::from_raw(&mut raw)?;
        raw.ensure_empty()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SystemConfig::parse(&text)
    }

    /// Consumes the keys this type understands from `raw`, leaving the rest.
    pub fn from_raw(raw: &mut RawConfig) -> Result<Self> {
        let n = raw.take_usize("topology.n")?.unwrap_or(DEFAULT_N);
        let e = raw.take_usize("topology.e")?.unwrap_or(DEFAULT_E);
        let l = raw.take_usize("topology.l")?;
        let m = raw.take_usize("topology.m")?;
        let k = raw.take_usize("topology.k")?;
        let alpha = raw.take_f64("topology.alpha")?.unwrap_or(DEFAULT_ALPHA);
        let beta = raw.take_f64("topology.beta")?.unwrap_or(DEFAULT_BETA);

        if let Some(l) = l {
            if e == 0 || n != e * l {
                return Err(Error::invalid(
                    "topology.l",
                    format!("n = {n} does not equal e * l = {}", e * l),
                ));
            }
        }
        let topology = match (m, k) {
            (None, None) => TopologyConfig::from_fractions(n, e, alpha, beta)?,
            (m_opt, k_opt) => {
                let derived = TopologyConfig::from_fractions(n, e, alpha, beta)?;
                TopologyConfig::with_quorums(
                    n,
                    e,
                    m_opt.unwrap_or(derived.m),
                    k_opt.unwrap_or(derived.k),
                    alpha,
                    beta,
                )?
            }
        };

        let timing = TimingConfig {
            lambda: raw.take_f64("timing.lambda")?.unwrap_or(DEFAULT_LAMBDA),
            c: raw.take_f64("timing.c")?.unwrap_or(DEFAULT_C),
            mu: raw.take_f64("timing.mu")?.unwrap_or(DEFAULT_MU),
        };
        timing.validate()?;

        let learning = LearningConfig {
            rho: raw.take_f64("learning.rho")?.unwrap_or(DEFAULT_RHO),
            eta: raw.take_f64("learning.eta")?.unwrap_or(DEFAULT_ETA),
            local_steps: raw
                .take_usize("learning.local_steps")?
                .map(|v| v as u32)
                .unwrap_or(DEFAULT_LOCAL_STEPS),
            sigma_exponent: raw
                .take_f64("learning.sigma_exponent")?
                .unwrap_or(DEFAULT_SIGMA_EXPONENT),
            batch: raw.take_usize("learning.batch")?,
        };
        learning.validate()?;

        let data = DataConfig {
            dim: raw.take_usize("data.dim")?.unwrap_or(DEFAULT_DIM),
            size: raw.take_usize("data.size")?.unwrap_or(DEFAULT_DATA_SIZE),
        };
        if data.dim == 0 {
            return Err(Error::invalid("data.dim", "must be at least 1"));
        }
        if data.size < topology.n {
            return Err(Error::invalid(
                "data.size",
                format!(
                    "{} rows cannot cover {} clients with nonempty shards",
                    data.size, topology.n
                ),
            ));
        }

        let total_updates = raw
            .take_u64("run.total_updates")?
            .unwrap_or(DEFAULT_TOTAL_UPDATES);
        if total_updates == 0 {
            return Err(Error::invalid("run.total_updates", "must be at least 1"));
        }
        let seed = raw.take_u64("run.seed")?.unwrap_or(DEFAULT_SEED);
        let burn_in = raw.take_f64("run.burn_in")?.unwrap_or(DEFAULT_BURN_IN);
        if !(burn_in.is_finite() && (0.0..1.0).contains(&burn_in)) {
            return Err(Error::invalid("run.burn_in", "must lie in [0, 1)"));
        }

        Ok(SystemConfig {
            topology,
            timing,
            learning,
            data,
            total_updates,
            seed,
            burn_in,
        })
    }

    /// Renders the resolved configuration; parsing the result reproduces
    /// `self` exactly.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let t = &self.topology;
        let _ = writeln!(out, "topology.n = {}", t.n);
        let _ = writeln!(out, "topology.e = {}", t.e);
        let _ = writeln!(out, "topology.l = {}", t.l);
        let _ = writeln!(out, "topology.m = {}", t.m);
        let _ = writeln!(out, "topology.k = {}", t.k);
        let _ = writeln!(out, "topology.alpha = {}", t.alpha);
        let _ = writeln!(out, "topology.beta = {}", t.beta);
        let _ = writeln!(out, "timing.lambda = {}", self.timing.lambda);
        let _ = writeln!(out, "timing.c = {}", self.timing.c);
        let _ = writeln!(out, "timing.mu = {}", self.timing.mu);
        let _ = writeln!(out, "learning.rho = {}", self.learning.rho);
        let _ = writeln!(out, "learning.eta = {}", self.learning.eta);
        let _ = writeln!(out, "learning.local_steps = {}", self.learning.local_steps);
        let _ = writeln!(
            out,
            "learning.sigma_exponent = {}",
            self.learning.sigma_exponent
        );
        if let Some(batch) = self.learning.batch {
            let _ = writeln!(out, "learning.batch = {}", batch);
        }
        let _ = writeln!(out, "data.dim = {}", self.data.dim);
        let _ = writeln!(out, "data.size = {}", self.data.size);
        let _ = writeln!(out, "run.total_updates = {}", self.total_updates);
        let _ = writeln!(out, "run.seed = {}", self.seed);
        let _ = writeln!(out, "run.burn_in = {}", self.burn_in);
        out
    }
}

/// Parsed but untyped `key = value` entries with their line numbers.
///
/// Callers take the keys they understand and then call
/// [`RawConfig::ensure_empty`] so typos surface as errors.
#[derive(Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                Error::parse(line_no, format!("expected `key = value`, got `{content}`"))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(line_no, "empty key"));
            }
            if entries.insert(key.clone(), (line_no, value)).is_some() {
                return Err(Error::parse(line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<u64>().map(Some).map_err(|_| {
                Error::parse(
                    line,
                    format!("`{key}` expects an unsigned integer, got `{v}`"),
                )
            }),
        }
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<usize>().map(Some).map_err(|_| {
                Error::parse(
                    line,
                    format!("`{key}` expects an unsigned integer, got `{v}`"),
                )
            }),
        }
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(Error::parse(
                    line,
                    format!("`{key}` expects a finite number, got `{v}`"),
                )),
            },
        }
    }

    /// Errors on the first leftover (unrecognized) key.
    pub fn ensure_empty(&self) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.iter().next() {
            return Err(Error::parse(*line, format!("unknown key `{key}`")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
