//! Synthetic regression data and the learning-side math: loss, gradient,
//! proximal local SGD, and the two aggregation rules.
//!
//! The dataset is a two-component Gaussian mixture in `dim` dimensions.
//! A ground-truth vector `w*` is drawn uniformly from [0, 1]^dim, each row
//! is `N(s * (1.5/dim) * w*, I)` with `s` a fair sign flip, and targets are
//! noiseless: `y = x . w*`. The loss is the mean squared residual
//! `(1/rows) * ||X theta - y||^2`, so the optimum attains exactly zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::LearningConfig;
use crate::error::{Error, Result};

/// Dense parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector {
    values: Vec<f64>,
}

impl ModelVector {
    pub fn zeros(dim: usize) -> Self {
        ModelVector {
            values: vec![0.0; dim],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ModelVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Row-major regression dataset with a fixed partition into client shards.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
    shards: Vec<Vec<usize>>,
    w_star: Vec<f64>,
}

impl Dataset {
    /// Wraps existing rows; `w_star` may be empty when unknown.
    pub fn from_parts(
        dim: usize,
        features: Vec<f64>,
        targets: Vec<f64>,
        n_shards: usize,
        w_star: Vec<f64>,
    ) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        assert!(n_shards >= 1, "need at least one shard");
        assert_eq!(features.len() % dim, 0, "features must be whole rows");
        let rows = features.len() / dim;
        assert_eq!(targets.len(), rows, "one target per row");
        assert!(rows >= n_shards, "every shard needs at least one row");
        assert!(w_star.is_empty() || w_star.len() == dim);
        Dataset {
            dim,
            features,
            targets,
            shards: make_shards(rows, n_shards),
            w_star,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.dim..(r + 1) * self.dim]
    }

    pub fn target(&self, r: usize) -> f64 {
        self.targets[r]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    pub fn shard(&self, client: usize) -> &[usize] {
        &self.shards[client]
    }

    /// Ground-truth weights; empty for datasets built from raw parts.
    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).collect()
    }
}

/// Contiguous near-equal shards; the first `rows % n` shards take one
/// extra row each.
fn make_shards(rows: usize, n: usize) -> Vec<Vec<usize>> {
    let base = rows / n;
    let extra = rows % n;
    let mut shards = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        shards.push((start..start + len).collect());
        start += len;
    }
    debug_assert_eq!(start, rows);
    shards
}

/// Draws the mixture dataset described in the module docs.
pub fn generate_dataset(dim: usize, size: usize, n: usize, seed: u64) -> Dataset {
    assert!(dim >= 1, "dimension must be positive");
    assert!(n >= 1 && size >= n, "need at least one row per client");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_star: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
    let scale = 1.5 / dim as f64;
    let mut features = Vec::with_capacity(size * dim);
    let mut targets = Vec::with_capacity(size);
    for _ in 0..size {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let row_start = features.len();
        for &w in &w_star {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(sign * scale * w + noise);
        }
        targets.push(dot(&features[row_start..], &w_star));
    }
    Dataset {
        dim,
        features,
        targets,
        shards: make_shards(size, n),
        w_star,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean squared residual of `theta` over the given rows.
pub fn loss(theta: &ModelVector, rows: &[usize], ds: &Dataset) -> f64 {
    assert!(!rows.is_empty(), "loss needs at least one row");
    let mut acc = 0.0;
    for &r in rows {
        let residual = dot(ds.row(r), theta.values()) - ds.target(r);
        acc += residual * residual;
    }
    acc / rows.len() as f64
}

/// Exact gradient of [`loss`] over the given rows:
/// `(2/rows) * X^T (X theta - y)`.
pub fn gradient(theta: &ModelVector, rows: &[usize], ds: &Dataset) -> Vec<f64> {
    assert!(!rows.is_empty(), "gradient needs at least one row");
    let dim = ds.dim();
    let mut grad = vec![0.0; dim];
    for &r in rows {
        let residual = dot(ds.row(r), theta.values()) - ds.target(r);
        let row = ds.row(r);
        for (g, &x) in grad.iter_mut().zip(row) {
            *g += 2.0 * residual * x;
        }
    }
    let inv = 1.0 / rows.len() as f64;
    for g in &mut grad {
        *g *= inv;
    }
    grad
}

/// Loss and squared gradient norm over the same rows in one pass.
pub fn loss_and_grad_norm_sq(theta: &ModelVector, rows: &[usize], ds: &Dataset) -> (f64, f64) {
    assert!(!rows.is_empty(), "evaluation needs at least one row");
    let dim = ds.dim();
    let mut acc = 0.0;
    let mut grad = vec![0.0; dim];
    for &r in rows {
        let row = ds.row(r);
        let residual = dot(row, theta.values()) - ds.target(r);
        acc += residual * residual;
        for (g, &x) in grad.iter_mut().zip(row) {
            *g += 2.0 * residual * x;
        }
    }
    let inv = 1.0 / rows.len() as f64;
    let grad_sq = grad.iter().map(|g| (g * inv) * (g * inv)).sum();
    (acc * inv, grad_sq)
}

/// Runs `local_steps` proximal SGD steps on a shard.
///
/// Each step descends the shard loss plus `(rho/2) * ||theta - anchor||^2`.
/// With `batch = None` the gradient uses the whole shard and the path is
/// deterministic; otherwise each step samples a minibatch without
/// replacement from `seed`. Errors if the parameters stop being finite.
pub fn local_train(
    theta_init: &ModelVector,
    anchor: &ModelVector,
    shard: &[usize],
    ds: &Dataset,
    lc: &LearningConfig,
    seed: u64,
) -> Result<ModelVector> {
    assert!(!shard.is_empty(), "cannot train on an empty shard");
    assert_eq!(theta_init.len(), ds.dim());
    assert_eq!(anchor.len(), ds.dim());
    let dim = ds.dim();
    let batch = lc.batch.unwrap_or(shard.len()).min(shard.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = theta_init.values().to_vec();
    let mut grad = vec![0.0; dim];
    let mut batch_rows = Vec::with_capacity(batch);

    for _ in 0..lc.local_steps {
        let rows: &[usize] = if batch == shard.len() {
            shard
        } else {
            batch_rows.clear();
            for idx in rand::seq::index::sample(&mut rng, shard.len(), batch) {
                batch_rows.push(shard[idx]);
            }
            &batch_rows
        };
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &r in rows {
            let row = ds.row(r);
            let residual = dot(row, &theta) - ds.target(r);
            for (g, &x) in grad.iter_mut().zip(row) {
                *g += 2.0 * residual * x;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        for j in 0..dim {
            let step = grad[j] * inv + lc.rho * (theta[j] - anchor.values()[j]);
            theta[j] -= lc.eta * step;
        }
    }

    if theta.iter().all(|v| v.is_finite()) {
        Ok(ModelVector::from_vec(theta))
    } else {
        Err(Error::NonFinite(
            "local training produced non-finite parameters; lower the step size".into(),
        ))
    }
}

/// Shard-size-weighted average of edge-local models.
pub fn edge_aggregate(models: &[(ModelVector, usize)]) -> ModelVector {
    assert!(!models.is_empty(), "nothing to aggregate");
    let dim = models[0].0.len();
    let total: usize = models.iter().map(|(_, s)| *s).sum();
    assert!(total > 0, "shard sizes must be positive");
    let mut out = vec![0.0; dim];
    for (model, size) in models {
        assert_eq!(model.len(), dim);
        let weight = *size as f64 / total as f64;
        for (o, &v) in out.iter_mut().zip(model.values()) {
            *o += weight * v;
        }
    }
    ModelVector::from_vec(out)
}

/// Mixes an incoming edge aggregate into the global model.
///
/// The mixing weight is `sigma = gap^(-sigma_exponent)` with the version
/// gap clamped to at least 1, so an aggregate trained against the current
/// version replaces the global model outright and older ones are
/// discounted smoothly.
pub fn cloud_aggregate(
    global: &ModelVector,
    incoming: &ModelVector,
    version_gap: u64,
    lc: &LearningConfig,
) -> ModelVector {
    assert_eq!(global.len(), incoming.len());
    let gap = version_gap.max(1) as f64;
    let sigma = gap.powf(-lc.sigma_exponent);
    let out = global
        .values()
        .iter()
        .zip(incoming.values())
        .map(|(&g, &i)| (1.0 - sigma) * g + sigma * i)
        .collect();
    ModelVector::from_vec(out)
}

/// Smoothness constant of the full-dataset loss: `(2/rows) * ||X^T X||_2`,
/// estimated by power iteration from a fixed-seed start vector.
pub fn smoothness_constant(ds: &Dataset) -> Result<f64> {
    const MAX_ITERS: usize = 20_000;
    const REL_TOL: f64 = 1e-8;
    assert!(ds.n_rows() >= 1);
    let dim = ds.dim();
    let rows = ds.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED0FA11);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut v).ok_or(Error::NoConvergence(0))?;

    let mut xv = vec![0.0; rows];
    let mut w = vec![0.0; dim];
    let mut prev = f64::INFINITY;
    for iter in 1..=MAX_ITERS {
        for (r, out) in xv.iter_mut().enumerate() {
            *out = dot(ds.row(r), &v);
        }
        // Rayleigh quotient of X^T X at the unit vector v
        let lambda: f64 = xv.iter().map(|x| x * x).sum();
        if !lambda.is_finite() {
            return Err(Error::NoConvergence(iter));
        }
        w.iter_mut().for_each(|x| *x = 0.0);
        for (r, &scale) in xv.iter().enumerate() {
            for (out, &x) in w.iter_mut().zip(ds.row(r)) {
                *out += scale * x;
            }
        }
        v.copy_from_slice(&w);
        if normalize(&mut v).is_none() {
            return Err(Error::NoConvergence(iter));
        }
        if (lambda - prev).abs() <= REL_TOL * lambda.abs().max(f64::MIN_POSITIVE) {
            return Ok(2.0 * lambda / rows as f64);
        }
        prev = lambda;
    }
    Err(Error::NoConvergence(MAX_ITERS))
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> LearningConfig {
        LearningConfig {
            rho: 0.0,
            eta: 0.1,
            local_steps: 1,
            sigma_exponent: 0.1,
            batch: None,
        }
    }

    #[test]
    fn shards_partition_rows() {
        let shards = make_shards(10_000, 100);
        assert_eq!(shards.len(), 100);
        assert!(shards.iter().all(|s| s.len() == 100));
        let shards = make_shards(10_000, 400);
        assert!(shards.iter().all(|s| s.len() == 25));
        // remainder spreads one row each over the leading shards
        let shards = make_shards(11, 3);
        let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        let mut all: Vec<usize> = shards.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn generated_targets_are_exact_at_w_star() {
        let ds = generate_dataset(8, 200, 4, 7);
        assert_eq!(ds.n_rows(), 200);
        assert_eq!(ds.dim(), 8);
        let w = ModelVector::from_vec(ds.w_star().to_vec());
        let at_truth = loss(&w, &ds.all_rows(), &ds);
        assert!(at_truth.abs() <= 1e-12, "loss at w* was {at_truth}");
        let g = gradient(&w, &ds.all_rows(), &ds);
        assert!(g.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_dataset(5, 50, 5, 11);
        let b = generate_dataset(5, 50, 5, 11);
        assert_eq!(a, b);
        let c = generate_dataset(5, 50, 5, 12);
        assert_ne!(a, c);
    }

    #[test]
    fn loss_and_gradient_single_row() {
        // one row x = e1, y = 0, theta = e1: loss 1, gradient 2*e1
        let ds = Dataset::from_parts(2, vec![1.0, 0.0], vec![0.0], 1, vec![]);
        let theta = ModelVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(loss(&theta, &[0], &ds), 1.0);
        assert_eq!(gradient(&theta, &[0], &ds), vec![2.0, 0.0]);
        let zero = ModelVector::zeros(2);
        assert_eq!(loss(&zero, &[0], &ds), 0.0);
    }

    #[test]
    fn combined_evaluation_matches_separate_calls() {
        let ds = generate_dataset(6, 120, 3, 3);
        let theta = ModelVector::from_vec((0..6).map(|i| 0.3 * i as f64 - 0.7).collect());
        let rows = ds.all_rows();
        let (l, gsq) = loss_and_grad_norm_sq(&theta, &rows, &ds);
        assert!((l - loss(&theta, &rows, &ds)).abs() < 1e-12);
        let g = gradient(&theta, &rows, &ds);
        let expect: f64 = g.iter().map(|x| x * x).sum();
        assert!((gsq - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn local_train_zero_steps_returns_init() {
        let ds = generate_dataset(4, 40, 2, 3);
        let lc = LearningConfig {
            local_steps: 0,
            ..tiny_config()
        };
        let init = ModelVector::from_vec(vec![0.5; 4]);
        let out = local_train(&init, &ModelVector::zeros(4), ds.shard(0), &ds, &lc, 1).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn local_train_single_step_by_hand() {
        // one row x = [2], y = 3; theta0 = 0, anchor = 1, rho = 0.5, eta = 0.1:
        // grad = 2*2*(0-3) + 0.5*(0-1) = -12.5, so theta1 = 1.25
        let ds = Dataset::from_parts(1, vec![2.0], vec![3.0], 1, vec![]);
        let lc = LearningConfig {
            rho: 0.5,
            eta: 0.1,
            local_steps: 1,
            sigma_exponent: 0.1,
            batch: None,
        };
        let out = local_train(
            &ModelVector::zeros(1),
            &ModelVector::from_vec(vec![1.0]),
            &[0],
            &ds,
            &lc,
            0,
        )
        .unwrap();
        assert!((out.values()[0] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn local_train_fixed_point_at_truth() {
        let ds = generate_dataset(5, 60, 2, 9);
        let truth = ModelVector::from_vec(ds.w_star().to_vec());
        let lc = LearningConfig {
            rho: 0.3,
            eta: 0.05,
            local_steps: 25,
            sigma_exponent: 0.1,
            batch: None,
        };
        let out = local_train(&truth, &truth, ds.shard(1), &ds, &lc, 3).unwrap();
        for (a, b) in out.values().iter().zip(truth.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_batch_descent_strictly_decreases_loss() {
        let ds = generate_dataset(6, 300, 2, 21);
        let smooth = smoothness_constant(&ds).unwrap();
        let lc = LearningConfig {
            rho: 0.0,
            eta: 0.9 / smooth,
            local_steps: 1,
            sigma_exponent: 0.1,
            batch: None,
        };
        let rows = ds.all_rows();
        let shard: Vec<usize> = rows.clone();
        let mut theta = ModelVector::zeros(6);
        let mut prev = loss(&theta, &rows, &ds);
        for step in 0..12 {
            theta = local_train(&theta, &theta, &shard, &ds, &lc, 0).unwrap();
            let now = loss(&theta, &rows, &ds);
            assert!(
                now < prev,
                "step {step}: loss {now} did not drop below {prev}"
            );
            prev = now;
        }
    }

    #[test]
    fn oversized_learning_rate_is_reported_as_divergence() {
        let ds = generate_dataset(4, 80, 2, 5);
        let lc = LearningConfig {
            rho: 0.0,
            eta: 1e6,
            local_steps: 400,
            sigma_exponent: 0.1,
            batch: None,
        };
        let out = local_train(
            &ModelVector::zeros(4),
            &ModelVector::zeros(4),
            ds.shard(0),
            &ds,
            &lc,
            0,
        );
        assert!(matches!(out, Err(Error::NonFinite(_))));
    }

    #[test]
    fn minibatch_training_is_seed_deterministic() {
        let ds = generate_dataset(4, 100, 2, 13);
        let lc = LearningConfig {
            batch: Some(8),
            local_steps: 6,
            ..tiny_config()
        };
        let z = ModelVector::zeros(4);
        let a = local_train(&z, &z, ds.shard(0), &ds, &lc, 42).unwrap();
        let b = local_train(&z, &z, ds.shard(0), &ds, &lc, 42).unwrap();
        assert_eq!(a, b);
        let c = local_train(&z, &z, ds.shard(0), &ds, &lc, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn edge_aggregate_weights_by_shard_size() {
        let a = ModelVector::from_vec(vec![1.0, 0.0]);
        let b = ModelVector::from_vec(vec![0.0, 1.0]);
        let single = edge_aggregate(&[(a.clone(), 10)]);
        assert_eq!(single, a);
        let mid = edge_aggregate(&[(a.clone(), 50), (b.clone(), 50)]);
        assert_eq!(mid.values(), &[0.5, 0.5]);
        let lop = edge_aggregate(&[(a.clone(), 25), (b.clone(), 75)]);
        assert!((lop.values()[0] - 0.25).abs() < 1e-12);
        assert!((lop.values()[1] - 0.75).abs() < 1e-12);
        // permutation invariance up to rounding
        let swapped = edge_aggregate(&[(b, 75), (a, 25)]);
        for (x, y) in lop.values().iter().zip(swapped.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cloud_aggregate_examples() {
        let lc = LearningConfig::default();
        let g = ModelVector::from_vec(vec![1.0, -2.0]);
        let inc = ModelVector::from_vec(vec![3.0, 4.0]);
        // gap <= 1 replaces the global model outright
        assert_eq!(cloud_aggregate(&g, &inc, 0, &lc), inc);
        assert_eq!(cloud_aggregate(&g, &inc, 1, &lc), inc);
        // 1024^(-0.1) = 0.5 gives the midpoint
        let far = cloud_aggregate(&g, &inc, 1024, &lc);
        assert!((far.values()[0] - 2.0).abs() < 1e-12);
        assert!((far.values()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothness_reference_cases() {
        // X = I_4: ||X^T X||_2 = 1, so L = 2/4
        let eye = Dataset::from_parts(
            4,
            vec![
                1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
            vec![0.0; 4],
            1,
            vec![],
        );
        let l = smoothness_constant(&eye).unwrap();
        assert!((l - 0.5).abs() < 1e-8);

        // single row: L = 2 * ||x||^2
        let row = Dataset::from_parts(3, vec![1.0, 2.0, 2.0], vec![0.0], 1, vec![]);
        let l = smoothness_constant(&row).unwrap();
        assert!((l - 18.0).abs() < 1e-6);
    }

    #[test]
    fn smoothness_scales_quadratically() {
        let ds = generate_dataset(5, 200, 2, 3);
        let l1 = smoothness_constant(&ds).unwrap();
        let scaled = Dataset::from_parts(
            5,
            ds.features.iter().map(|x| 3.0 * x).collect(),
            ds.targets.clone(),
            2,
            vec![],
        );
        let l9 = smoothness_constant(&scaled).unwrap();
        assert!((l9 - 9.0 * l1).abs() < 1e-5 * l9);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cloud_aggregate_stays_between_inputs(
                gap in 0u64..10_000,
                exponent in 0.0f64..2.0,
                g in proptest::collection::vec(-10.0f64..10.0, 1..6),
                offsets in proptest::collection::vec(-10.0f64..10.0, 1..6),
            ) {
                let dim = g.len().min(offsets.len());
                let global = ModelVector::from_vec(g[..dim].to_vec());
                let incoming = ModelVector::from_vec(
                    global.values().iter().zip(&offsets[..dim]).map(|(a, b)| a + b).collect(),
                );
                let lc = LearningConfig { sigma_exponent: exponent, ..LearningConfig::default() };
                let out = cloud_aggregate(&global, &incoming, gap, &lc);
                for ((&o, &a), &b) in out.values().iter().zip(global.values()).zip(incoming.values()) {
                    let lo = a.min(b) - 1e-9 * (a.abs() + b.abs() + 1.0);
                    let hi = a.max(b) + 1e-9 * (a.abs() + b.abs() + 1.0);
                    prop_assert!(o >= lo && o <= hi);
                }
            }

            #[test]
            fn edge_aggregate_of_identical_models_is_identity(
                vals in proptest::collection::vec(-5.0f64..5.0, 1..6),
                sizes in proptest::collection::vec(1usize..40, 1..5),
            ) {
                let model = ModelVector::from_vec(vals);
                let inputs: Vec<(ModelVector, usize)> =
                    sizes.iter().map(|&s| (model.clone(), s)).collect();
                let out = edge_aggregate(&inputs);
                for (a, b) in out.values().iter().zip(model.values()) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }
    }
}
