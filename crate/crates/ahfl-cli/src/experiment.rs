//! Experiment grids: sweep the edge count at a fixed client count with
//! paired seeds, export per-variant traces, and render comparison figures.
//!
//! A spec file is the flat key-value format with three extra keys
//! (`experiment.name`, `experiment.e_values`, `experiment.repetitions`);
//! every remaining key seeds the base run configuration. Repetition r of
//! every edge-count variant shares one derived seed, and since the client
//! count is fixed the variants of a repetition train on the identical
//! dataset, so cross-variant comparisons are paired.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ahfl::analytics::{expected_staleness, ideal_staleness};
use ahfl::engine::{run, RunConfig};
use ahfl::timing::empirical_mean_staleness;
use ahfl::{export, seed, Error, RawConfig, Result, SystemConfig, TopologyConfig};

use crate::plot::{Chart, LineStyle, Series};

/// Cap applied to `run.total_updates` under `--quick`.
pub const QUICK_UPDATES: u64 = 2_000;
/// Cap applied to repetitions under `--quick`.
pub const QUICK_REPS: u64 = 3;

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub e_values: Vec<usize>,
    pub repetitions: u64,
    pub base: SystemConfig,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        let name = raw
            .take_string("experiment.name")
            .unwrap_or_else(|| "experiment".to_string());
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::invalid(
                "experiment.name",
                format!("`{name}` is not a safe directory name"),
            ));
        }
        let e_text = raw
            .take_string("experiment.e_values")
            .ok_or_else(|| Error::invalid("experiment.e_values", "is required"))?;
        let e_values: Vec<usize> = e_text
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid("experiment.e_values", format!("bad entry `{v}`")))
            })
            .collect::<Result<_>>()?;
        if e_values.is_empty() {
            return Err(Error::invalid("experiment.e_values", "names no variants"));
        }
        let repetitions = raw.take_u64("experiment.repetitions")?.unwrap_or(3);
        if repetitions == 0 {
            return Err(Error::invalid(
                "experiment.repetitions",
                "must be at least 1",
            ));
        }
        let base = SystemConfig::from_raw(&mut raw)?;
        raw.ensure_empty()?;
        // every variant topology must be valid up front
        for &e in &e_values {
            TopologyConfig::from_fractions(
                base.topology.n,
                e,
                base.topology.alpha,
                base.topology.beta,
            )?;
        }
        Ok(ExperimentSpec {
            name,
            e_values,
            repetitions,
            base,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentSpec::parse(&text)
    }
}

/// Scalar outcomes of one variant run.
#[derive(Debug, Clone)]
pub struct VariantResult {
    pub e: usize,
    pub rep: u64,
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub mean_staleness: f64,
    pub expected_staleness: f64,
    pub ideal_staleness: f64,
    pub min_grad_norm_sq: f64,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub variants: Vec<VariantResult>,
    pub loss_figure: PathBuf,
    pub staleness_figure: PathBuf,
    pub summary_csv: PathBuf,
}

/// Runs the full grid, one directory per variant under `out_dir/<name>/`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_dir: &Path,
    workers: Option<usize>,
    quick: bool,
) -> Result<ExperimentOutput> {
    let total_updates = if quick {
        spec.base.total_updates.min(QUICK_UPDATES)
    } else {
        spec.base.total_updates
    };
    let repetitions = if quick {
        spec.repetitions.min(QUICK_REPS)
    } else {
        spec.repetitions
    };
    let dir = out_dir.join(&spec.name);

    let jobs: Vec<(usize, u64)> = spec
        .e_values
        .iter()
        .flat_map(|&e| (0..repetitions).map(move |rep| (e, rep)))
        .collect();

    let run_one = |&(e, rep): &(usize, u64)| -> Result<(VariantResult, Vec<f64>)> {
        let topology = TopologyConfig::from_fractions(
            spec.base.topology.n,
            e,
            spec.base.topology.alpha,
            spec.base.topology.beta,
        )?;
        let variant_seed = seed::mix(&[spec.base.seed, rep]);
        let cfg = RunConfig {
            topology: topology.clone(),
            timing: spec.base.timing.clone(),
            learning: spec.base.learning.clone(),
            data: spec.base.data.clone(),
            total_updates,
            seed: variant_seed,
            eval_rows: None,
        };
        let res = run(&cfg)?;
        let variant_dir = dir.join(format!("e{e}_rep{rep}"));
        export::write_loss_csv(variant_dir.join("loss.csv"), &res.loss_trace)?;
        export::write_staleness_csv(variant_dir.join("staleness.csv"), &res.staleness_trace)?;
        let mean_staleness = empirical_mean_staleness(&res.staleness_trace, spec.base.burn_in)?;
        let initial_loss = res.loss_trace[0].loss;
        let final_loss = res.loss_trace.last().unwrap().loss;
        export::write_summary(
            variant_dir.join("summary.txt"),
            &[
                ("e".to_string(), e.to_string()),
                ("rep".to_string(), rep.to_string()),
                ("seed".to_string(), variant_seed.to_string()),
                ("initial_loss".to_string(), initial_loss.to_string()),
                ("final_loss".to_string(), final_loss.to_string()),
                ("mean_staleness".to_string(), mean_staleness.to_string()),
                (
                    "min_grad_norm_sq".to_string(),
                    res.min_grad_norm_sq.to_string(),
                ),
            ],
        )?;
        let losses: Vec<f64> = res.loss_trace.iter().map(|p| p.loss).collect();
        Ok((
            VariantResult {
                e,
                rep,
                seed: variant_seed,
                initial_loss,
                final_loss,
                mean_staleness,
                expected_staleness: expected_staleness(&topology),
                ideal_staleness: ideal_staleness(&topology),
                min_grad_norm_sq: res.min_grad_norm_sq,
            },
            losses,
        ))
    };

    let outcomes: Vec<(VariantResult, Vec<f64>)> = match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::invalid("workers", e.to_string()))?;
            pool.install(|| par_run(&jobs, run_one))?
        }
        None => par_run(&jobs, run_one)?,
    };

    let variants: Vec<VariantResult> = outcomes.iter().map(|(v, _)| v.clone()).collect();
    let loss_figure = dir.join("loss.svg");
    export::atomic_write(
        &loss_figure,
        loss_chart(spec, &outcomes, repetitions).render().as_bytes(),
    )?;
    let staleness_figure = dir.join("staleness.svg");
    export::atomic_write(
        &staleness_figure,
        staleness_chart(spec, &variants).render().as_bytes(),
    )?;
    let summary_csv = dir.join("summary.csv");
    export::atomic_write(&summary_csv, summary_csv_text(&variants).as_bytes())?;

    Ok(ExperimentOutput {
        dir,
        variants,
        loss_figure,
        staleness_figure,
        summary_csv,
    })
}

fn par_run<F>(jobs: &[(usize, u64)], run_one: F) -> Result<Vec<(VariantResult, Vec<f64>)>>
where
    F: Fn(&(usize, u64)) -> Result<(VariantResult, Vec<f64>)> + Sync + Send,
{
    use rayon::prelude::*;
    jobs.par_iter().map(run_one).collect()
}

/// Loss curves, one series per edge count, averaged over repetitions.
fn loss_chart(
    spec: &ExperimentSpec,
    outcomes: &[(VariantResult, Vec<f64>)],
    repetitions: u64,
) -> Chart {
    let mut chart = Chart::new(
        format!(
            "global loss vs cloud version (n = {}, {} reps)",
            spec.base.topology.n, repetitions
        ),
        "cloud version",
        "loss",
    )
    .log_y();
    for &e in &spec.e_values {
        let traces: Vec<&Vec<f64>> = outcomes
            .iter()
            .filter(|(v, _)| v.e == e)
            .map(|(_, losses)| losses)
            .collect();
        if traces.is_empty() {
            continue;
        }
        let len = traces.iter().map(|t| t.len()).min().unwrap();
        let points: Vec<(f64, f64)> = (0..len)
            .map(|i| {
                let mean = traces.iter().map(|t| t[i]).sum::<f64>() / traces.len() as f64;
                (i as f64, mean)
            })
            .collect();
        chart = chart.with_series(Series::new(format!("e = {e}"), points));
    }
    chart
}

/// Mean staleness against the edge count, with both analytic references.
fn staleness_chart(spec: &ExperimentSpec, variants: &[VariantResult]) -> Chart {
    let mut empirical = Vec::new();
    let mut formula = Vec::new();
    let mut ideal = Vec::new();
    for &e in &spec.e_values {
        let of_e: Vec<&VariantResult> = variants.iter().filter(|v| v.e == e).collect();
        if of_e.is_empty() {
            continue;
        }
        let mean = of_e.iter().map(|v| v.mean_staleness).sum::<f64>() / of_e.len() as f64;
        empirical.push((e as f64, mean));
        formula.push((e as f64, of_e[0].expected_staleness));
        ideal.push((e as f64, of_e[0].ideal_staleness));
    }
    Chart::new(
        format!(
            "mean staleness vs edge count (n = {})",
            spec.base.topology.n
        ),
        "edge count",
        "mean staleness",
    )
    .with_series(Series::new("simulated", empirical))
    .with_series(Series::styled("n/k - 1", formula, LineStyle::Dashed))
    .with_series(Series::styled(
        "e/(alpha*beta) - 1",
        ideal,
        LineStyle::Dotted,
    ))
}

fn summary_csv_text(variants: &[VariantResult]) -> String {
    let mut out = String::from(
        "e,rep,seed,initial_loss,final_loss,mean_staleness,expected_staleness,ideal_staleness,min_grad_norm_sq\n",
    );
    for v in variants {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            v.e,
            v.rep,
            v.seed,
            v.initial_loss,
            v.final_loss,
            v.mean_staleness,
            v.expected_staleness,
            v.ideal_staleness,
            v.min_grad_norm_sq
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY_SPEC: &str = "\
experiment.name = tiny
experiment.e_values = 1, 2
experiment.repetitions = 2
topology.n = 4
topology.e = 2
data.dim = 2
data.size = 16
run.total_updates = 30
run.seed = 9
";

    #[test]
    fn spec_parsing_reads_grid_and_base() {
        let spec = ExperimentSpec::parse(TINY_SPEC).unwrap();
        assert_eq!(spec.name, "tiny");
        assert_eq!(spec.e_values, vec![1, 2]);
        assert_eq!(spec.repetitions, 2);
        assert_eq!(spec.base.topology.n, 4);
        assert_eq!(spec.base.total_updates, 30);
    }

    #[test]
    fn spec_rejects_bad_grids() {
        assert!(ExperimentSpec::parse("topology.n = 4\n").is_err()); // no e_values
                                                                     // 3 does not divide n = 4 even though the base topology is valid
        assert!(
            ExperimentSpec::parse("experiment.e_values = 3\ntopology.n = 4\ntopology.e = 2\n")
                .is_err()
        );
        assert!(
            ExperimentSpec::parse("experiment.e_values = 2\nexperiment.name = ../evil\n").is_err()
        );
        assert!(
            ExperimentSpec::parse("experiment.e_values = 2\nexperiment.repetitions = 0\n").is_err()
        );
        // unknown keys still surface
        assert!(ExperimentSpec::parse("experiment.e_values = 2\nbogus.key = 1\n").is_err());
    }

    #[test]
    fn tiny_grid_runs_and_writes_every_artifact() {
        let spec = ExperimentSpec::parse(TINY_SPEC).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&spec, dir.path(), Some(2), false).unwrap();
        assert_eq!(out.variants.len(), 4);
        for v in &out.variants {
            assert!(v.initial_loss > 0.0);
            assert!(v.final_loss.is_finite());
        }
        for e in [1, 2] {
            for rep in [0, 1] {
                let vdir = out.dir.join(format!("e{e}_rep{rep}"));
                assert!(vdir.join("loss.csv").exists());
                assert!(vdir.join("staleness.csv").exists());
                assert!(vdir.join("summary.txt").exists());
            }
        }
        assert!(out.loss_figure.exists());
        assert!(out.staleness_figure.exists());
        assert!(out.summary_csv.exists());
        // paired seeds: same rep shares a seed across edge counts
        let seed_of = |e: usize, rep: u64| {
            out.variants
                .iter()
                .find(|v| v.e == e && v.rep == rep)
                .unwrap()
                .seed
        };
        assert_eq!(seed_of(1, 0), seed_of(2, 0));
        assert_eq!(seed_of(1, 1), seed_of(2, 1));
        assert_ne!(seed_of(1, 0), seed_of(1, 1));
    }

    #[test]
    fn quick_mode_caps_updates_and_reps() {
        let text = TINY_SPEC
            .replace("run.total_updates = 30", "run.total_updates = 100000")
            .replace("experiment.repetitions = 2", "experiment.repetitions = 9");
        let spec = ExperimentSpec::parse(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&spec, dir.path(), Some(2), true).unwrap();
        // 2 edge counts x QUICK_REPS repetitions
        assert_eq!(out.variants.len(), 2 * QUICK_REPS as usize);
        let loss = ahfl::export::read_loss_csv(out.dir.join("e1_rep0").join("loss.csv")).unwrap();
        assert_eq!(loss.len() as u64, QUICK_UPDATES + 1);
    }
}
