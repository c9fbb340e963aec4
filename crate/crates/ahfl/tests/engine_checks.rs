//! End-to-end checks of training runs: the learning layer must not perturb
//! the simulated timeline, runs must be reproducible, and the degenerate
//! single-client system must behave like plain gradient descent.

use ahfl::analytics::expected_staleness;
use ahfl::engine::{run, run_with_dataset, RunConfig};
use ahfl::learning::{generate_dataset, smoothness_constant};
use ahfl::timing::{empirical_mean_staleness, run_timing_sim};
use ahfl::{DataConfig, LearningConfig, SystemConfig, TimingConfig, TopologyConfig};

fn base_config() -> RunConfig {
    RunConfig {
        topology: TopologyConfig::with_quorums(20, 4, 3, 2, 0.5, 0.5).unwrap(),
        timing: TimingConfig {
            lambda: 1.0,
            c: 1.0,
            mu: 1.0,
        },
        learning: LearningConfig {
            rho: 0.01,
            eta: 0.02,
            local_steps: 5,
            sigma_exponent: 0.1,
            batch: None,
        },
        data: DataConfig { dim: 4, size: 100 },
        total_updates: 500,
        seed: 11,
        eval_rows: None,
    }
}

#[test]
fn training_never_perturbs_the_timeline() {
    let cfg = base_config();
    let trained = run(&cfg).unwrap();
    let timed = run_timing_sim(&cfg.topology, &cfg.timing, cfg.total_updates, cfg.seed).unwrap();
    // bit-identical: the SGD and data streams are separate from timing
    assert_eq!(trained.staleness_trace, timed.trace);
    assert_eq!(trained.cloud_gaps, timed.cloud_gaps);
    assert_eq!(trained.edge_cycle_times, timed.edge_cycle_times);
}

#[test]
fn training_runs_are_reproducible() {
    let cfg = base_config();
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_client_system_is_plain_descent_to_the_optimum() {
    // e = l = m = k = 1 with full replacement at the cloud and rho = 0:
    // the run is sequential full-batch gradient descent.
    let ds = generate_dataset(5, 200, 1, 404);
    let smooth = smoothness_constant(&ds).unwrap();
    let cfg = RunConfig {
        topology: TopologyConfig::with_quorums(1, 1, 1, 1, 0.5, 0.5).unwrap(),
        timing: TimingConfig {
            lambda: 1.0,
            c: 0.0,
            mu: 1.0,
        },
        learning: LearningConfig {
            rho: 0.0,
            eta: 0.9 / smooth,
            local_steps: 10,
            sigma_exponent: 0.1,
            batch: None,
        },
        data: DataConfig { dim: 5, size: 200 },
        total_updates: 300,
        seed: 404,
        eval_rows: None,
    };
    let res = run_with_dataset(&cfg, &ds).unwrap();
    let initial = res.loss_trace[0].loss;
    let last = res.loss_trace.last().unwrap().loss;
    assert!(
        last <= 1e-8 * initial,
        "descent stalled: {initial} -> {last}"
    );
    // monotone decrease: replacement aggregation makes this exact descent
    for pair in res.loss_trace.windows(2) {
        assert!(pair[1].loss <= pair[0].loss * (1.0 + 1e-12));
    }
    assert!(res.min_grad_norm_sq <= 1e-12);
}

#[test]
fn engine_staleness_statistics_match_the_formula() {
    let cfg = RunConfig {
        topology: TopologyConfig::from_fractions(100, 5, 0.5, 0.5).unwrap(),
        timing: TimingConfig {
            lambda: 1.0,
            c: 1.0,
            mu: 1.0,
        },
        learning: LearningConfig {
            rho: 0.01,
            eta: 0.05,
            local_steps: 2,
            sigma_exponent: 0.1,
            batch: None,
        },
        data: DataConfig { dim: 2, size: 100 },
        total_updates: 20_000,
        seed: 5,
        eval_rows: Some(vec![0]),
    };
    let res = run(&cfg).unwrap();
    let mean = empirical_mean_staleness(&res.staleness_trace, 0.1).unwrap();
    let expected = expected_staleness(&cfg.topology);
    let rel = (mean - expected).abs() / expected;
    assert!(rel < 0.05, "engine staleness {mean} vs {expected}");
}

#[test]
fn system_config_drives_a_run_end_to_end() {
    let cfg = SystemConfig::parse(
        "topology.n = 8\ntopology.e = 2\ndata.dim = 3\ndata.size = 64\nrun.total_updates = 40\nrun.seed = 3\n",
    )
    .unwrap();
    let run_cfg = RunConfig::from_system(&cfg);
    let res = run(&run_cfg).unwrap();
    assert_eq!(res.loss_trace.len(), 41);
    assert_eq!(res.staleness_trace.samples.len(), 40 * cfg.topology.k);
    let final_loss = res.loss_trace.last().unwrap().loss;
    let initial = res.loss_trace[0].loss;
    assert!(final_loss < initial);
}
