//! Deterministic event-driven simulation of the asynchronous cycle and
//! version dynamics.
//!
//! Every edge runs cycles independently: at cycle start all `l` of its
//! clients draw fresh exponential availability clocks; when the `m`-th
//! fires the quorum is dispatched, trains for the fixed duration `c`, and
//! each member draws an exponential uplink delay; the first `k` uplinks
//! trigger an edge aggregation followed immediately by a cloud aggregation,
//! after which the edge starts its next cycle. Late availability clocks and
//! the `m - k` straggler uplinks are discarded and do not advance those
//! clients' versions.
//!
//! A version ledger tracks the cloud aggregation count and the version each
//! client last received. Just before an aggregation, every participating
//! client records `staleness = cloud_version - client_version`, then jumps
//! to the new version.
//!
//! Determinism: events are ordered by time with ties broken by
//! (kind, edge, client, cycle), so two runs with the same configuration and
//! seed produce identical traces bit for bit, and simultaneous aggregations
//! resolve lowest edge first.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::config::{TimingConfig, TopologyConfig};
use crate::error::{Error, Result};

/// What a scheduled event represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    /// A client's availability clock fired.
    ClientAvailable,
    /// A dispatched client's uplink landed at its edge.
    UplinkArrival,
}

/// A scheduled simulation event.
#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub edge_id: usize,
    pub client_id: usize,
    /// Edge-local cycle counter; events from superseded cycles are stale.
    pub cycle_id: u64,
}

impl Event {
    fn tie_key(&self) -> (EventKind, usize, usize, u64) {
        (self.kind, self.edge_id, self.client_id, self.cycle_id)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.tie_key().cmp(&other.tie_key()))
    }
}

/// Min-queue over events with the deterministic tie-break above.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
}

impl EventQueue {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
        }
    }

    pub fn push(&mut self, event: Event) {
        debug_assert!(event.time.is_finite());
        self.heap.push(Reverse(event));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Version bookkeeping for the cloud and every client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionLedger {
    /// Number of cloud aggregations so far.
    pub cloud_version: u64,
    /// Version each client last received.
    pub client_version: Vec<u64>,
    /// Cloud version each edge's current cycle is anchored to.
    pub edge_cycle_tag: Vec<u64>,
}

impl VersionLedger {
    pub fn new(n_clients: usize, n_edges: usize) -> Self {
        VersionLedger {
            cloud_version: 0,
            client_version: vec![0; n_clients],
            edge_cycle_tag: vec![0; n_edges],
        }
    }
}

/// One recorded participation: client `client_id`'s `event_index`-th
/// successful aggregation, with the staleness it observed.
#[derive(Debug, Clone, PartialEq)]
pub struct StalenessSample {
    pub client_id: usize,
    /// 1-based count of this client's successful participations.
    pub event_index: u64,
    pub time: f64,
    pub staleness: u64,
}

/// All staleness samples of a run in chronological order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StalenessTrace {
    pub samples: Vec<StalenessSample>,
    /// Simulated time at which the run stopped.
    pub end_time: f64,
}

/// Where an edge is within its current cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgePhase {
    AwaitingAvailability,
    AwaitingUplinks,
}

/// Mutable per-edge cycle state.
#[derive(Debug, Clone)]
pub struct EdgeCycleState {
    pub phase: EdgePhase,
    pub cycle_id: u64,
    pub cycle_start: f64,
    /// Clients that became available this cycle, capped at `m`.
    pub available: Vec<usize>,
    /// Dispatched clients whose uplinks have landed, capped at `k`.
    pub responded: Vec<usize>,
}

impl EdgeCycleState {
    fn new() -> Self {
        EdgeCycleState {
            phase: EdgePhase::AwaitingAvailability,
            cycle_id: 0,
            cycle_start: 0.0,
            available: Vec::new(),
            responded: Vec::new(),
        }
    }
}

/// Everything a pure timing run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRunOutput {
    pub trace: StalenessTrace,
    /// Time between consecutive cloud aggregations (first gap from t = 0).
    pub cloud_gaps: Vec<f64>,
    /// Completed cycle durations, per edge.
    pub edge_cycle_times: Vec<Vec<f64>>,
}

/// Callbacks for layering work on top of the event loop. The hooks must not
/// touch the timing RNG, so a run's timeline is the same with or without
/// them.
pub(crate) trait CycleHooks {
    fn on_cycle_start(
        &mut self,
        edge: usize,
        cycle: u64,
        cloud_version: u64,
        time: f64,
    ) -> Result<()>;

    /// The availability quorum was met; `clients` is sorted by id.
    fn on_dispatch(&mut self, edge: usize, cycle: u64, clients: &[usize], time: f64) -> Result<()>;

    /// Called just before the cloud version increments; `responders` is
    /// sorted by id and `cloud_version` is the pre-increment count.
    fn on_aggregate(
        &mut self,
        edge: usize,
        cycle: u64,
        responders: &[usize],
        cloud_version: u64,
        time: f64,
    ) -> Result<()>;
}

pub(crate) struct NoopHooks;

impl CycleHooks for NoopHooks {
    fn on_cycle_start(&mut self, _: usize, _: u64, _: u64, _: f64) -> Result<()> {
        Ok(())
    }
    fn on_dispatch(&mut self, _: usize, _: u64, _: &[usize], _: f64) -> Result<()> {
        Ok(())
    }
    fn on_aggregate(&mut self, _: usize, _: u64, _: &[usize], _: u64, _: f64) -> Result<()> {
        Ok(())
    }
}

struct Core<'h, H: CycleHooks> {
    top: TopologyConfig,
    train_time: f64,
    avail: Exp<f64>,
    uplink: Exp<f64>,
    rng: ChaCha8Rng,
    queue: EventQueue,
    ledger: VersionLedger,
    edges: Vec<EdgeCycleState>,
    samples: Vec<StalenessSample>,
    sample_counts: Vec<u64>,
    cloud_gaps: Vec<f64>,
    edge_cycle_times: Vec<Vec<f64>>,
    last_update_time: f64,
    hooks: &'h mut H,
}

impl<H: CycleHooks> Core<'_, H> {
    fn start_cycle(&mut self, edge: usize, now: f64) -> Result<()> {
        let cycle = {
            let st = &mut self.edges[edge];
            st.cycle_id += 1;
            st.phase = EdgePhase::AwaitingAvailability;
            st.cycle_start = now;
            st.available.clear();
            st.responded.clear();
            st.cycle_id
        };
        self.ledger.edge_cycle_tag[edge] = self.ledger.cloud_version;
        self.hooks
            .on_cycle_start(edge, cycle, self.ledger.cloud_version, now)?;
        for client in self.top.clients_of(edge) {
            let wait = self.avail.sample(&mut self.rng);
            self.queue.push(Event {
                time: now + wait,
                kind: EventKind::ClientAvailable,
                edge_id: edge,
                client_id: client,
                cycle_id: cycle,
            });
        }
        Ok(())
    }

    fn handle_available(&mut self, ev: Event) -> Result<()> {
        let quorum_met = {
            let st = &mut self.edges[ev.edge_id];
            if st.phase != EdgePhase::AwaitingAvailability {
                return Ok(()); // quorum already dispatched this cycle
            }
            st.available.push(ev.client_id);
            st.available.len() == self.top.m
        };
        if !quorum_met {
            return Ok(());
        }
        let dispatched = {
            let st = &mut self.edges[ev.edge_id];
            st.phase = EdgePhase::AwaitingUplinks;
            st.available.sort_unstable();
            st.available.clone()
        };
        self.hooks
            .on_dispatch(ev.edge_id, ev.cycle_id, &dispatched, ev.time)?;
        for &client in &dispatched {
            let delay = self.uplink.sample(&mut self.rng);
            self.queue.push(Event {
                time: ev.time + self.train_time + delay,
                kind: EventKind::UplinkArrival,
                edge_id: ev.edge_id,
                client_id: client,
                cycle_id: ev.cycle_id,
            });
        }
        Ok(())
    }

    /// Returns true once the run's aggregation target is reached.
    fn handle_uplink(&mut self, ev: Event, target: u64) -> Result<bool> {
        let quorum_met = {
            let st = &mut self.edges[ev.edge_id];
            debug_assert_eq!(st.phase, EdgePhase::AwaitingUplinks);
            st.responded.push(ev.client_id);
            st.responded.len() == self.top.k
        };
        if !quorum_met {
            return Ok(false);
        }
        let mut responders = self.edges[ev.edge_id].responded.clone();
        responders.sort_unstable();
        self.hooks.on_aggregate(
            ev.edge_id,
            ev.cycle_id,
            &responders,
            self.ledger.cloud_version,
            ev.time,
        )?;
        for &client in &responders {
            debug_assert!(self.ledger.cloud_version >= self.ledger.client_version[client]);
            let staleness = self.ledger.cloud_version - self.ledger.client_version[client];
            self.sample_counts[client] += 1;
            self.samples.push(StalenessSample {
                client_id: client,
                event_index: self.sample_counts[client],
                time: ev.time,
                staleness,
            });
        }
        self.ledger.cloud_version += 1;
        for &client in &responders {
            self.ledger.client_version[client] = self.ledger.cloud_version;
        }
        self.cloud_gaps.push(ev.time - self.last_update_time);
        self.last_update_time = ev.time;
        let cycle_start = self.edges[ev.edge_id].cycle_start;
        self.edge_cycle_times[ev.edge_id].push(ev.time - cycle_start);
        if self.ledger.cloud_version >= target {
            return Ok(true);
        }
        self.start_cycle(ev.edge_id, ev.time)?;
        Ok(false)
    }
}

pub(crate) fn run_core<H: CycleHooks>(
    top: &TopologyConfig,
    tc: &TimingConfig,
    num_cloud_updates: u64,
    seed: u64,
    hooks: &mut H,
) -> Result<TimingRunOutput> {
    top.validate()?;
    tc.validate()?;
    if num_cloud_updates == 0 {
        return Err(Error::invalid("num_cloud_updates", "must be at least 1"));
    }
    let avail = Exp::new(tc.lambda)
        .map_err(|e| Error::invalid("timing.lambda", format!("not a valid rate: {e}")))?;
    let uplink = Exp::new(tc.mu)
        .map_err(|e| Error::invalid("timing.mu", format!("not a valid rate: {e}")))?;
    let mut core = Core {
        top: top.clone(),
        train_time: tc.c,
        avail,
        uplink,
        rng: ChaCha8Rng::seed_from_u64(seed),
        queue: EventQueue::new(),
        ledger: VersionLedger::new(top.n, top.e),
        edges: vec![EdgeCycleState::new(); top.e],
        samples: Vec::new(),
        sample_counts: vec![0; top.n],
        cloud_gaps: Vec::with_capacity(num_cloud_updates as usize),
        edge_cycle_times: vec![Vec::new(); top.e],
        last_update_time: 0.0,
        hooks,
    };
    for edge in 0..top.e {
        core.start_cycle(edge, 0.0)?;
    }
    let end_time = loop {
        let ev = core
            .queue
            .pop()
            .expect("event queue drained before reaching the update target");
        if ev.cycle_id != core.edges[ev.edge_id].cycle_id {
            continue; // stale event from a completed cycle
        }
        match ev.kind {
            EventKind::ClientAvailable => core.handle_available(ev)?,
            EventKind::UplinkArrival => {
                if core.handle_uplink(ev, num_cloud_updates)? {
                    break ev.time;
                }
            }
        }
    };
    Ok(TimingRunOutput {
        trace: StalenessTrace {
            samples: core.samples,
            end_time,
        },
        cloud_gaps: core.cloud_gaps,
        edge_cycle_times: core.edge_cycle_times,
    })
}

/// Simulates the version dynamics alone (no learning) until
/// `num_cloud_updates` cloud aggregations have happened.
pub fn run_timing_sim(
    top: &TopologyConfig,
    tc: &TimingConfig,
    num_cloud_updates: u64,
    seed: u64,
) -> Result<TimingRunOutput> {
    run_core(top, tc, num_cloud_updates, seed, &mut NoopHooks)
}

/// Mean staleness over samples recorded after `burn_in` of the simulated
/// time has elapsed.
pub fn empirical_mean_staleness(trace: &StalenessTrace, burn_in: f64) -> Result<f64> {
    assert!(
        (0.0..1.0).contains(&burn_in),
        "burn-in fraction must lie in [0, 1)"
    );
    let cutoff = burn_in * trace.end_time;
    let mut sum = 0.0;
    let mut count = 0u64;
    for s in &trace.samples {
        if s.time >= cutoff {
            sum += s.staleness as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InsufficientSamples(format!(
            "no staleness samples past the {burn_in} burn-in"
        )));
    }
    Ok(sum / count as f64)
}

/// Long-run cloud aggregation rate implied by the observed gaps.
pub fn empirical_cloud_rate(gaps: &[f64]) -> f64 {
    assert!(!gaps.is_empty(), "rate needs at least one gap");
    gaps.len() as f64 / gaps.iter().sum::<f64>()
}

/// Fraction of samples with staleness at most `bound`.
pub fn empirical_bound_satisfaction(trace: &StalenessTrace, bound: u64) -> f64 {
    assert!(!trace.samples.is_empty(), "trace has no samples");
    let hits = trace
        .samples
        .iter()
        .filter(|s| s.staleness <= bound)
        .count();
    hits as f64 / trace.samples.len() as f64
}
