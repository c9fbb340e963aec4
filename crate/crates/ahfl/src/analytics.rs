//! Closed-form timing and staleness analysis of the client-edge-cloud cycle.
//!
//! Each edge cycle waits for the m-th of l i.i.d. exponential availability
//! clocks, trains for a fixed duration c, then waits for the k-th of m
//! i.i.d. exponential uplinks. Expected exponential order statistics reduce
//! to harmonic-number differences, which gives every quantity below in
//! closed form:
//!
//! ```text
//! H_j                = sum_{i=1..j} 1/i
//! E[avail wait]      = (1/lambda) * (H_l - H_{l-m})
//! E[uplink wait]     = (1/mu) * (H_m - H_{m-k})
//! E[cycle]           = E[avail wait] + c + E[uplink wait]
//! E[client period]   = (l/k) * E[cycle]      (mean time between a client's
//!                                             successful participations)
//! cloud update rate  = e / E[cycle]
//! E[staleness]       = n/k - 1
//! ```
//!
//! With quorums taken exactly at m = beta*l and k = alpha*m the expected
//! staleness becomes e/(alpha*beta) - 1; integer rounding of the quorums
//! makes the two differ, so both are exposed. Markov's inequality bounds
//! the staleness distribution: P(S <= M) >= 1 - E[S]/M.

use crate::config::{TimingConfig, TopologyConfig};
use crate::error::{Error, Result};

/// The j-th harmonic number, by forward summation. `harmonic(0) == 0`.
pub fn harmonic(j: u64) -> f64 {
    (1..=j).map(|i| 1.0 / i as f64).sum()
}

/// Expected wait until the m-th of `l` exponential(lambda) clocks fires.
pub fn expected_availability_wait(tc: &TimingConfig, l: usize, m: usize) -> Result<f64> {
    tc.validate()?;
    if m < 1 || m > l {
        return Err(Error::invalid(
            "m",
            format!("m = {m} must satisfy 1 <= m <= l = {l}"),
        ));
    }
    Ok((harmonic(l as u64) - harmonic((l - m) as u64)) / tc.lambda)
}

/// Expected wait until the k-th of `m` exponential(mu) uplinks lands.
pub fn expected_uplink_wait(tc: &TimingConfig, m: usize, k: usize) -> Result<f64> {
    tc.validate()?;
    if k < 1 || k > m {
        return Err(Error::invalid(
            "k",
            format!("k = {k} must satisfy 1 <= k <= m = {m}"),
        ));
    }
    Ok((harmonic(m as u64) - harmonic((m - k) as u64)) / tc.mu)
}

/// Expected duration of one edge cycle.
pub fn expected_cycle_time(tc: &TimingConfig, top: &TopologyConfig) -> Result<f64> {
    top.validate()?;
    let avail = expected_availability_wait(tc, top.l, top.m)?;
    let uplink = expected_uplink_wait(tc, top.m, top.k)?;
    Ok(avail + tc.c + uplink)
}

/// Expected time between a fixed client's successful participations.
///
/// A client makes it into the aggregated set with probability k/l per
/// cycle, so its participation period is (l/k) cycles.
pub fn expected_client_update_time(tc: &TimingConfig, top: &TopologyConfig) -> Result<f64> {
    let cycle = expected_cycle_time(tc, top)?;
    Ok(cycle * top.l as f64 / top.k as f64)
}

/// Long-run rate of cloud aggregations: e independent edges, each
/// completing one cycle per expected cycle time.
pub fn cloud_update_rate(tc: &TimingConfig, top: &TopologyConfig) -> Result<f64> {
    let cycle = expected_cycle_time(tc, top)?;
    Ok(top.e as f64 / cycle)
}

/// Long-run expected staleness `n/k - 1` under the configured integer
/// quorums. Zero when every client is aggregated every cycle.
pub fn expected_staleness(top: &TopologyConfig) -> f64 {
    top.n as f64 / top.k as f64 - 1.0
}

/// Staleness under exact fractional quorums: `e/(alpha*beta) - 1`.
///
/// Equals [`expected_staleness`] whenever `k = alpha*beta*l` is an integer;
/// quorum rounding makes the realized figure differ otherwise.
pub fn ideal_staleness(top: &TopologyConfig) -> f64 {
    top.e as f64 / (top.alpha * top.beta) - 1.0
}

/// Markov lower bound on P(staleness <= bound).
pub fn staleness_bound_probability(top: &TopologyConfig, bound: u64) -> Result<f64> {
    if bound == 0 {
        return Err(Error::invalid("bound", "must be a positive integer"));
    }
    let expected = expected_staleness(top);
    Ok((1.0 - expected / bound as f64).max(0.0))
}

/// Smallest integer bound M with guaranteed P(S <= M) >= 1 - epsilon.
pub fn min_bound_for_confidence(top: &TopologyConfig, epsilon: f64) -> Result<u64> {
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("{epsilon} must lie strictly between 0 and 1"),
        ));
    }
    let expected = expected_staleness(top);
    if expected <= 0.0 {
        return Ok(1);
    }
    let quotient = expected / epsilon;
    // Snap near-integer quotients before taking the ceiling so an exact
    // ratio computed with rounding noise does not overshoot by one.
    let snapped = quotient.round();
    let bound = if (quotient - snapped).abs() <= 1e-9 * snapped.max(1.0) {
        snapped
    } else {
        quotient.ceil()
    };
    Ok((bound as u64).max(1))
}

/// An expected-staleness figure together with a Markov tail bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StalenessBound {
    pub expected_staleness: f64,
    pub bound: u64,
    /// Guaranteed lower bound on P(S <= bound), clamped to [0, 1].
    pub confidence: f64,
}

pub fn staleness_bound(top: &TopologyConfig, bound: u64) -> Result<StalenessBound> {
    Ok(StalenessBound {
        expected_staleness: expected_staleness(top),
        bound,
        confidence: staleness_bound_probability(top, bound)?,
    })
}
