//! Full training runs: the timing core drives proximal local SGD, edge
//! aggregation, and staleness-discounted cloud mixing.
//!
//! A run shares its event loop with [`crate::timing::run_timing_sim`], so a
//! training run and a pure timing run with the same configuration and seed
//! produce identical staleness traces. The master seed feeds three
//! independent streams: the timing stream uses it directly, while dataset
//! generation and per-dispatch SGD minibatching hash it with fixed tags so
//! changing one stream never perturbs another.

use crate::config::{DataConfig, LearningConfig, SystemConfig, TimingConfig, TopologyConfig};
use crate::error::{Error, Result};
use crate::learning::{
    cloud_aggregate, edge_aggregate, generate_dataset, local_train, loss_and_grad_norm_sq, Dataset,
    ModelVector,
};
use crate::seed;
use crate::timing::{run_core, CycleHooks, StalenessTrace};

const DATA_TAG: u64 = 0x6461_7461; // "data"
const SGD_TAG: u64 = 0x73_6764; // "sgd"

/// A run aborts once the evaluated loss exceeds its initial value by this
/// factor; plain overflow to infinity is caught separately.
const DIVERGENCE_FACTOR: f64 = 1e9;

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: TopologyConfig,
    pub timing: TimingConfig,
    pub learning: LearningConfig,
    pub data: DataConfig,
    /// Number of cloud aggregations to run.
    pub total_updates: u64,
    /// Master seed for the timing, data, and SGD streams.
    pub seed: u64,
    /// Rows to evaluate the global loss on; `None` means the whole dataset.
    pub eval_rows: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn from_system(cfg: &SystemConfig) -> Self {
        RunConfig {
            topology: cfg.topology.clone(),
            timing: cfg.timing.clone(),
            learning: cfg.learning.clone(),
            data: cfg.data.clone(),
            total_updates: cfg.total_updates,
            seed: cfg.seed,
            eval_rows: None,
        }
    }
}

/// Global loss right after a cloud aggregation. Version 0 is the zero
/// initialization before any update.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPoint {
    pub version: u64,
    pub time: f64,
    pub loss: f64,
}

/// Outputs of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Loss at every global version, `total_updates + 1` entries.
    pub loss_trace: Vec<LossPoint>,
    pub staleness_trace: StalenessTrace,
    pub cloud_gaps: Vec<f64>,
    pub edge_cycle_times: Vec<Vec<f64>>,
    /// Smallest squared gradient norm seen across all global versions.
    pub min_grad_norm_sq: f64,
    pub final_model: ModelVector,
    /// Global model at every version, parallel to `loss_trace`.
    pub model_trace: Vec<ModelVector>,
}

/// Seed of the dataset stream derived from a master seed.
pub fn data_seed(master: u64) -> u64 {
    seed::mix(&[master, DATA_TAG])
}

fn sgd_seed(master: u64, edge: usize, cycle: u64, client: usize) -> u64 {
    seed::mix(&[
        seed::mix(&[master, SGD_TAG]),
        edge as u64,
        cycle,
        client as u64,
    ])
}

struct TrainingHooks<'a> {
    ds: &'a Dataset,
    top: TopologyConfig,
    lc: LearningConfig,
    master_seed: u64,
    eval_rows: &'a [usize],
    global: ModelVector,
    /// Model each edge dispatched this cycle; local training anchors to it
    /// even when the cloud moves on mid-cycle.
    anchors: Vec<ModelVector>,
    /// Cloud version each edge's current cycle started from.
    anchor_tags: Vec<u64>,
    /// Trained models waiting for aggregation, indexed edge-locally.
    trained: Vec<Vec<Option<ModelVector>>>,
    loss_trace: Vec<LossPoint>,
    model_trace: Vec<ModelVector>,
    min_grad_norm_sq: f64,
    divergence_cap: f64,
}

impl TrainingHooks<'_> {
    fn evaluate(&mut self, version: u64, time: f64, edge: usize, cycle: u64) -> Result<()> {
        let (loss, grad_sq) = loss_and_grad_norm_sq(&self.global, self.eval_rows, self.ds);
        if !loss.is_finite() || loss > self.divergence_cap {
            return Err(Error::Diverged {
                edge,
                cycle,
                reason: format!("global loss reached {loss}; lower the step size"),
            });
        }
        self.min_grad_norm_sq = self.min_grad_norm_sq.min(grad_sq);
        self.loss_trace.push(LossPoint {
            version,
            time,
            loss,
        });
        self.model_trace.push(self.global.clone());
        Ok(())
    }
}

impl CycleHooks for TrainingHooks<'_> {
    fn on_cycle_start(
        &mut self,
        edge: usize,
        _cycle: u64,
        cloud_version: u64,
        _time: f64,
    ) -> Result<()> {
        self.anchors[edge] = self.global.clone();
        self.anchor_tags[edge] = cloud_version;
        self.trained[edge].iter_mut().for_each(|slot| *slot = None);
        Ok(())
    }

    fn on_dispatch(
        &mut self,
        edge: usize,
        cycle: u64,
        clients: &[usize],
        _time: f64,
    ) -> Result<()> {
        let base = self.top.clients_of(edge).start;
        for &client in clients {
            let theta = local_train(
                &self.anchors[edge],
                &self.anchors[edge],
                self.ds.shard(client),
                self.ds,
                &self.lc,
                sgd_seed(self.master_seed, edge, cycle, client),
            )
            .map_err(|e| match e {
                Error::NonFinite(reason) => Error::Diverged {
                    edge,
                    cycle,
                    reason,
                },
                other => other,
            })?;
            self.trained[edge][client - base] = Some(theta);
        }
        Ok(())
    }

    fn on_aggregate(
        &mut self,
        edge: usize,
        cycle: u64,
        responders: &[usize],
        cloud_version: u64,
        time: f64,
    ) -> Result<()> {
        let base = self.top.clients_of(edge).start;
        let models: Vec<(ModelVector, usize)> = responders
            .iter()
            .map(|&client| {
                let model = self.trained[edge][client - base]
                    .take()
                    .expect("responder was dispatched this cycle");
                (model, self.ds.shard(client).len())
            })
            .collect();
        let incoming = edge_aggregate(&models);
        debug_assert!(cloud_version >= self.anchor_tags[edge]);
        let gap = cloud_version - self.anchor_tags[edge];
        self.global = cloud_aggregate(&self.global, &incoming, gap, &self.lc);
        self.evaluate(cloud_version + 1, time, edge, cycle)
    }
}

/// Runs training on a freshly generated dataset.
pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    cfg.topology.validate()?;
    if cfg.data.size < cfg.topology.n {
        return Err(Error::invalid(
            "data.size",
            format!(
                "{} rows cannot cover {} clients with nonempty shards",
                cfg.data.size, cfg.topology.n
            ),
        ));
    }
    if cfg.data.dim == 0 {
        return Err(Error::invalid("data.dim", "must be at least 1"));
    }
    let ds = generate_dataset(
        cfg.data.dim,
        cfg.data.size,
        cfg.topology.n,
        data_seed(cfg.seed),
    );
    run_with_dataset(cfg, &ds)
}

/// Runs training on a caller-provided dataset; its shard count must match
/// the topology's client count.
pub fn run_with_dataset(cfg: &RunConfig, ds: &Dataset) -> Result<RunResult> {
    cfg.topology.validate()?;
    cfg.learning.validate()?;
    if ds.shards().len() != cfg.topology.n {
        return Err(Error::invalid(
            "dataset",
            format!(
                "{} shards for {} clients",
                ds.shards().len(),
                cfg.topology.n
            ),
        ));
    }
    let all_rows;
    let eval_rows: &[usize] = match &cfg.eval_rows {
        Some(rows) => {
            if rows.is_empty() {
                return Err(Error::invalid("eval_rows", "must name at least one row"));
            }
            if let Some(&bad) = rows.iter().find(|&&r| r >= ds.n_rows()) {
                return Err(Error::invalid(
                    "eval_rows",
                    format!("row {bad} out of range for {} rows", ds.n_rows()),
                ));
            }
            rows
        }
        None => {
            all_rows = ds.all_rows();
            &all_rows
        }
    };

    let global = ModelVector::zeros(ds.dim());
    let (initial_loss, initial_grad_sq) = loss_and_grad_norm_sq(&global, eval_rows, ds);
    let mut hooks = TrainingHooks {
        ds,
        top: cfg.topology.clone(),
        lc: cfg.learning.clone(),
        master_seed: cfg.seed,
        eval_rows,
        global: global.clone(),
        anchors: vec![ModelVector::zeros(ds.dim()); cfg.topology.e],
        anchor_tags: vec![0; cfg.topology.e],
        trained: vec![vec![None; cfg.topology.l]; cfg.topology.e],
        loss_trace: Vec::with_capacity(cfg.total_updates as usize + 1),
        model_trace: Vec::with_capacity(cfg.total_updates as usize + 1),
        min_grad_norm_sq: initial_grad_sq,
        divergence_cap: DIVERGENCE_FACTOR * initial_loss.max(1e-12),
    };
    hooks.loss_trace.push(LossPoint {
        version: 0,
        time: 0.0,
        loss: initial_loss,
    });
    hooks.model_trace.push(global);

    let out = run_core(
        &cfg.topology,
        &cfg.timing,
        cfg.total_updates,
        cfg.seed,
        &mut hooks,
    )?;

    Ok(RunResult {
        loss_trace: hooks.loss_trace,
        staleness_trace: out.trace,
        cloud_gaps: out.cloud_gaps,
        edge_cycle_times: out.edge_cycle_times,
        min_grad_norm_sq: hooks.min_grad_norm_sq,
        final_model: hooks.global,
        model_trace: hooks.model_trace,
    })
}

/// Recomputes the smallest squared gradient norm over a strided sample of
/// the stored versions (plus the final one), against the given rows.
pub fn min_gradient_norm_sq(
    result: &RunResult,
    ds: &Dataset,
    rows: &[usize],
    stride: usize,
) -> f64 {
    let stride = stride.max(1);
    let mut best = f64::INFINITY;
    for model in result.model_trace.iter().step_by(stride) {
        let (_, grad_sq) = loss_and_grad_norm_sq(model, rows, ds);
        best = best.min(grad_sq);
    }
    if let Some(last) = result.model_trace.last() {
        let (_, grad_sq) = loss_and_grad_norm_sq(last, rows, ds);
        best = best.min(grad_sq);
    }
    best
}
