//! Subcommand implementations. Each returns a report string for stdout;
//! artifact-producing commands also write CSVs under the output directory.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ahfl::analytics::{
    cloud_update_rate, expected_availability_wait, expected_client_update_time,
    expected_cycle_time, expected_staleness, expected_uplink_wait, ideal_staleness,
    min_bound_for_confidence,
};
use ahfl::engine::{run, RunConfig};
use ahfl::timing::{empirical_cloud_rate, empirical_mean_staleness, run_timing_sim};
use ahfl::{export, Result, SystemConfig};

use crate::experiment::{run_experiment, ExperimentSpec};

const BOUND_EPSILONS: [f64; 5] = [0.5, 0.25, 0.1, 0.05, 0.01];

/// Relative tolerance on the simulated cloud rate and cycle time.
const TIMING_TOL: f64 = 0.02;
/// Relative tolerance on the simulated mean staleness.
const STALENESS_TOL: f64 = 0.05;

/// Closed-form analysis of the configured system.
pub fn analyze(cfg: &SystemConfig) -> Result<String> {
    let top = &cfg.topology;
    let tc = &cfg.timing;
    let mut out = String::new();
    let _ = writeln!(out, "topology.n: {}", top.n);
    let _ = writeln!(out, "topology.e: {}", top.e);
    let _ = writeln!(out, "topology.l: {}", top.l);
    let _ = writeln!(out, "topology.m: {}", top.m);
    let _ = writeln!(out, "topology.k: {}", top.k);
    let _ = writeln!(
        out,
        "expected_availability_wait: {}",
        expected_availability_wait(tc, top.l, top.m)?
    );
    let _ = writeln!(
        out,
        "expected_uplink_wait: {}",
        expected_uplink_wait(tc, top.m, top.k)?
    );
    let _ = writeln!(
        out,
        "expected_cycle_time: {}",
        expected_cycle_time(tc, top)?
    );
    let _ = writeln!(
        out,
        "expected_client_update_time: {}",
        expected_client_update_time(tc, top)?
    );
    let _ = writeln!(out, "cloud_update_rate: {}", cloud_update_rate(tc, top)?);
    let _ = writeln!(out, "expected_staleness: {}", expected_staleness(top));
    let _ = writeln!(out, "ideal_staleness: {}", ideal_staleness(top));
    for eps in BOUND_EPSILONS {
        let _ = writeln!(
            out,
            "staleness_bound_eps_{eps}: {}",
            min_bound_for_confidence(top, eps)?
        );
    }
    Ok(out)
}

fn check_line(out: &mut String, key: &str, actual: f64, expected: f64, tol: f64) -> bool {
    let err = if expected.abs() < 1e-12 {
        actual.abs()
    } else {
        (actual - expected).abs() / expected.abs()
    };
    let pass = err <= tol;
    let _ = writeln!(
        out,
        "{key}: {actual} (analytic {expected}, rel_err {err:.5}) -> {}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// Timing-only simulation plus an agreement report against the closed
/// forms. The boolean is false when any tolerance check fails.
pub fn simulate_timing(
    cfg: &SystemConfig,
    updates: Option<u64>,
    out_dir: &Path,
) -> Result<(String, bool)> {
    let updates = updates.unwrap_or(cfg.total_updates);
    let top = &cfg.topology;
    let tc = &cfg.timing;
    let sim = run_timing_sim(top, tc, updates, cfg.seed)?;

    let staleness_path = out_dir.join("staleness.csv");
    export::write_staleness_csv(&staleness_path, &sim.trace)?;
    let cycles_path = out_dir.join("cycles.csv");
    export::write_cycles_csv(&cycles_path, &sim.edge_cycle_times)?;

    let mut out = String::new();
    let _ = writeln!(out, "updates: {updates}");
    let _ = writeln!(out, "seed: {}", cfg.seed);
    let _ = writeln!(
        out,
        "topology: n={} e={} l={} m={} k={}",
        top.n, top.e, top.l, top.m, top.k
    );
    let _ = writeln!(out, "end_time: {}", sim.trace.end_time);

    let mut pass = true;
    let rate = empirical_cloud_rate(&sim.cloud_gaps);
    pass &= check_line(
        &mut out,
        "empirical_cloud_rate",
        rate,
        cloud_update_rate(tc, top)?,
        TIMING_TOL,
    );
    let cycle_count: usize = sim.edge_cycle_times.iter().map(|v| v.len()).sum();
    let cycle_mean: f64 = sim.edge_cycle_times.iter().flatten().sum::<f64>() / cycle_count as f64;
    pass &= check_line(
        &mut out,
        "empirical_cycle_time",
        cycle_mean,
        expected_cycle_time(tc, top)?,
        TIMING_TOL,
    );
    let staleness = empirical_mean_staleness(&sim.trace, cfg.burn_in)?;
    pass &= check_line(
        &mut out,
        "empirical_mean_staleness",
        staleness,
        expected_staleness(top),
        STALENESS_TOL,
    );

    let _ = writeln!(out, "staleness_csv: {}", staleness_path.display());
    let _ = writeln!(out, "cycles_csv: {}", cycles_path.display());
    let _ = writeln!(out, "result: {}", if pass { "PASS" } else { "FAIL" });
    Ok((out, pass))
}

/// Full training run; exports traces and a summary.
pub fn train(cfg: &SystemConfig, out_dir: &Path) -> Result<String> {
    let started = Instant::now();
    let run_cfg = RunConfig::from_system(cfg);
    let res = run(&run_cfg)?;
    let wall = started.elapsed().as_secs_f64();

    let initial = res.loss_trace[0].loss;
    let final_loss = res.loss_trace.last().unwrap().loss;
    let mean_staleness = empirical_mean_staleness(&res.staleness_trace, cfg.burn_in)?;

    export::write_loss_csv(out_dir.join("loss.csv"), &res.loss_trace)?;
    export::write_staleness_csv(out_dir.join("staleness.csv"), &res.staleness_trace)?;
    export::write_cycles_csv(out_dir.join("cycles.csv"), &res.edge_cycle_times)?;

    let entries = vec![
        ("cloud_updates".to_string(), cfg.total_updates.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("initial_loss".to_string(), initial.to_string()),
        ("final_loss".to_string(), final_loss.to_string()),
        ("loss_ratio".to_string(), (final_loss / initial).to_string()),
        ("mean_staleness".to_string(), mean_staleness.to_string()),
        (
            "expected_staleness".to_string(),
            expected_staleness(&cfg.topology).to_string(),
        ),
        (
            "min_grad_norm_sq".to_string(),
            res.min_grad_norm_sq.to_string(),
        ),
        (
            "end_time".to_string(),
            res.staleness_trace.end_time.to_string(),
        ),
        ("wall_clock_seconds".to_string(), format!("{wall:.3}")),
    ];
    export::write_summary(out_dir.join("summary.txt"), &entries)?;

    let mut out = export::summary_text(&entries);
    let _ = writeln!(out, "loss_csv: {}", out_dir.join("loss.csv").display());
    let _ = writeln!(
        out,
        "staleness_csv: {}",
        out_dir.join("staleness.csv").display()
    );
    let _ = writeln!(out, "summary: {}", out_dir.join("summary.txt").display());
    Ok(out)
}

/// Runs an experiment grid from a spec file and renders its figures.
pub fn figure(
    spec_path: &Path,
    out_dir: &Path,
    workers: Option<usize>,
    quick: bool,
    seed_override: Option<u64>,
) -> Result<String> {
    let mut spec = ExperimentSpec::load(spec_path)?;
    if let Some(seed) = seed_override {
        spec.base.seed = seed;
    }
    let result = run_experiment(&spec, out_dir, workers, quick)?;
    let mut out = String::new();
    let _ = writeln!(out, "experiment: {}", spec.name);
    let _ = writeln!(out, "output_dir: {}", result.dir.display());
    for v in &result.variants {
        let _ = writeln!(
            out,
            "e={} rep={}: final_loss {} mean_staleness {} (formula {}, ideal {})",
            v.e, v.rep, v.final_loss, v.mean_staleness, v.expected_staleness, v.ideal_staleness
        );
    }
    let _ = writeln!(out, "loss_figure: {}", result.loss_figure.display());
    let _ = writeln!(
        out,
        "staleness_figure: {}",
        result.staleness_figure.display()
    );
    let _ = writeln!(out, "summary_csv: {}", result.summary_csv.display());
    Ok(out)
}

/// Echoes the fully resolved configuration.
pub fn validate(cfg: &SystemConfig) -> String {
    cfg.to_config_string()
}
