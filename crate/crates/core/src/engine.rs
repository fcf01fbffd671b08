//! Warmup, measurement and drain around the cycle loop.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NetworkError};
use crate::policy::{PolicyConfig, PolicyKind};
use crate::rng::{stream_rng, Purpose};
use crate::router::RouterConfig;
use crate::stats::{LatencySummary, StatsRecord, Window};
use crate::topology::MeshConfig;
use crate::traffic::{dest_for, should_inject, PatternKind, TrafficError, TrafficSchedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("measurement window must be at least one cycle")]
    EmptyMeasurement,
    #[error("time-series window must be at least one cycle")]
    ZeroWindow,
    #[error("sweep needs at least one {0}")]
    EmptySweep(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mesh: MeshConfig,
    pub router: RouterConfig,
    pub policy: PolicyConfig,
    pub traffic: TrafficSchedule,
    pub warmup_cycles: u64,
    pub measure_cycles: u64,
    pub drain_timeout: u64,
    /// Width of the latency time-series windows.
    pub window_cycles: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mesh: MeshConfig::default(),
            router: RouterConfig::default(),
            policy: PolicyConfig::default(),
            traffic: TrafficSchedule::fixed(PatternKind::Uniform, 0.02, 4),
            warmup_cycles: 10_000,
            measure_cycles: 100_000,
            drain_timeout: 50_000,
            window_cycles: 1_000,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.mesh.validate().map_err(NetworkError::from)?;
        self.router.validate().map_err(NetworkError::from)?;
        self.policy.validate().map_err(NetworkError::from)?;
        self.traffic.validate(&self.mesh)?;
        if self.measure_cycles == 0 {
            return Err(EngineError::EmptyMeasurement);
        }
        if self.window_cycles == 0 {
            return Err(EngineError::ZeroWindow);
        }
        Ok(())
    }

    pub fn with_policy(&self, kind: PolicyKind) -> SimConfig {
        let mut c = self.clone();
        c.policy.kind = kind;
        c
    }

    pub fn with_rate(&self, rate: f64) -> SimConfig {
        let mut c = self.clone();
        c.traffic.injection_rate = rate;
        c
    }

    pub fn with_seed(&self, seed: u64) -> SimConfig {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}

/// Per-node Bernoulli packet sources.
pub struct Generator {
    inject: Vec<ChaCha8Rng>,
    dest: Vec<ChaCha8Rng>,
}

impl Generator {
    pub fn new(seed: u64, nodes: usize) -> Self {
        Generator {
            inject: (0..nodes)
                .map(|n| stream_rng(seed, n, Purpose::Injection))
                .collect(),
            dest: (0..nodes)
                .map(|n| stream_rng(seed, n, Purpose::Destination))
                .collect(),
        }
    }

    /// Generates this cycle's packets; returns how many flits were offered.
    pub fn generate(
        &mut self,
        net: &mut Network,
        traffic: &TrafficSchedule,
    ) -> Result<u64, EngineError> {
        let pattern = traffic.active_pattern(net.cycle());
        let mesh = *net.mesh();
        let mut flits = 0;
        for node in 0..mesh.nodes() {
            if !should_inject(
                traffic.injection_rate,
                traffic.packet_len,
                &mut self.inject[node],
            )? {
                continue;
            }
            if let Some(dst) = dest_for(pattern, node, &mesh, &mut self.dest[node]) {
                net.enqueue_packet(node, dst, traffic.packet_len)?;
                flits += traffic.packet_len as u64;
            }
        }
        Ok(flits)
    }
}

/// Runs one simulation. A drain that times out yields a record flagged as
/// saturated, with a census of what was left.
pub fn run(cfg: &SimConfig) -> Result<StatsRecord, EngineError> {
    cfg.validate()?;
    let mut net = Network::new(cfg.mesh, cfg.router, cfg.policy.clone(), cfg.seed)?;
    let mut sources = Generator::new(cfg.seed, cfg.mesh.nodes());
    let start = cfg.warmup_cycles;
    let end = start + cfg.measure_cycles;

    let mut measured_ids: Option<(u64, u64)> = None;
    let mut latencies = Vec::new();
    let n_windows = cfg.measure_cycles.div_ceil(cfg.window_cycles) as usize;
    let mut windows: Vec<Window> = (0..n_windows as u64)
        .map(|i| Window {
            start: start + i * cfg.window_cycles,
            end: (start + (i + 1) * cfg.window_cycles).min(end),
            ..Window::default()
        })
        .collect();
    let mut nonminimal = 0;
    let mut offered_flits = 0;
    let mut ejected_at_start = 0;

    let mut absorb = |net: &mut Network, ids: Option<(u64, u64)>| {
        for d in net.take_deliveries() {
            if d.hops != cfg.mesh.distance(d.src, d.dst) {
                nonminimal += 1;
            }
            if (start..end).contains(&d.eject_cycle) {
                let w = &mut windows[((d.eject_cycle - start) / cfg.window_cycles) as usize];
                w.packets += 1;
                w.latency_sum += d.latency();
            }
            if ids.is_some_and(|(a, b)| (a..b).contains(&d.pkt_id)) {
                latencies.push(d.latency());
            }
        }
    };

    while net.cycle() < end {
        let c = net.cycle();
        if c == start {
            ejected_at_start = net.flits_ejected();
        }
        let first = net.enqueued();
        let flits = sources.generate(&mut net, &cfg.traffic)?;
        if c >= start {
            offered_flits += flits;
            let (a, _) = measured_ids.unwrap_or((first, first));
            measured_ids = Some((a, net.enqueued()));
        }
        net.step();
        absorb(&mut net, measured_ids);
    }
    let ejected_in_window = net.flits_ejected() - ejected_at_start;

    let deadline = net.cycle() + cfg.drain_timeout;
    let mut drained = net.is_idle();
    while !drained && net.cycle() < deadline {
        net.step();
        absorb(&mut net, measured_ids);
        drained = net.is_idle();
    }

    let node_cycles = (cfg.mesh.nodes() as u64 * cfg.measure_cycles) as f64;
    let measured_injected = measured_ids.map_or(0, |(a, b)| b - a);
    Ok(StatsRecord {
        injected: net.enqueued(),
        delivered: net.delivered(),
        measured_injected,
        measured_delivered: latencies.len() as u64,
        latency: LatencySummary::from_latencies(&latencies),
        throughput: ejected_in_window as f64 / node_cycles,
        offered: offered_flits as f64 / node_cycles,
        windows,
        counters: *net.counters(),
        nonminimal,
        saturated: !drained,
        census: (!drained).then(|| net.census()),
        cycles: net.cycle(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: PolicyKind,
    pub rate: f64,
    pub seed: u64,
    pub stats: StatsRecord,
}

/// One run per (policy, rate, seed), in that nesting order.
pub fn sweep(
    base: &SimConfig,
    policies: &[PolicyKind],
    rates: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, EngineError> {
    if policies.is_empty() {
        return Err(EngineError::EmptySweep("policy"));
    }
    if rates.is_empty() {
        return Err(EngineError::EmptySweep("rate"));
    }
    if seeds.is_empty() {
        return Err(EngineError::EmptySweep("seed"));
    }
    let mut rows = Vec::with_capacity(policies.len() * rates.len() * seeds.len());
    for &policy in policies {
        for &rate in rates {
            for &seed in seeds {
                let cfg = base.with_policy(policy).with_rate(rate).with_seed(seed);
                let stats = run(&cfg)?;
                rows.push(SweepRow {
                    policy,
                    rate,
                    seed,
                    stats,
                });
            }
        }
    }
    Ok(rows)
}

/// Whether a run could not keep up with its offered load.
pub fn is_saturated(stats: &StatsRecord) -> bool {
    stats.saturated || stats.throughput < 0.95 * stats.offered
}

/// Bisects the injection rate between `lo` (sustainable) and `hi`
/// (saturated) until the bracket is narrower than `tol`. Returns the
/// highest rate found sustainable.
pub fn saturation_rate(
    cfg: &SimConfig,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64, EngineError> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if is_saturated(&run(&cfg.with_rate(mid))?) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// Q-table storage per router, in bits.
///
/// Q-RASP keeps two 10-bit values plus a 3-bit route code per destination;
/// the latency-valued tables use 16-bit values, and BiLCQ and CrQ add a
/// 16-bit column each (reverse-estimate staging and two 8-bit credence
/// stamps respectively).
pub fn table_storage_bits(policy: PolicyKind, mesh: &MeshConfig) -> u64 {
    let rows = mesh.nodes().saturating_sub(1) as u64;
    let per_row = match policy {
        PolicyKind::Xy | PolicyKind::Dyad => 0,
        PolicyKind::Qrasp => 2 * 10 + 3,
        PolicyKind::Qr => 2 * 16,
        PolicyKind::Bilcq => 2 * 16 + 16,
        PolicyKind::Crq => 2 * 16 + 2 * 8,
    };
    rows * per_row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: PolicyKind, rate: f64) -> SimConfig {
        SimConfig {
            mesh: MeshConfig::new(4, 4).unwrap(),
            policy: PolicyConfig::new(kind),
            traffic: TrafficSchedule::fixed(PatternKind::Uniform, rate, 4),
            warmup_cycles: 200,
            measure_cycles: 2_000,
            drain_timeout: 5_000,
            window_cycles: 500,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_rate_is_empty() {
        let s = run(&small(PolicyKind::Xy, 0.0)).unwrap();
        assert_eq!((s.injected, s.delivered), (0, 0));
        assert!(s.latency.is_none());
        assert!(!s.saturated);
        assert_eq!(s.throughput, 0.0);
    }

    #[test]
    fn light_load_drains_for_every_policy() {
        for kind in PolicyKind::ALL {
            let s = run(&small(kind, 0.05)).unwrap();
            assert!(!s.saturated, "{kind}");
            assert_eq!(s.injected, s.delivered, "{kind}");
            assert_eq!(s.nonminimal, 0, "{kind}");
            assert!(s.latency.unwrap().min >= 5, "{kind}");
            assert!((s.throughput - s.offered).abs() < 0.01, "{kind}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small(PolicyKind::Qrasp, 0.1);
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        assert_ne!(run(&cfg).unwrap(), run(&cfg.with_seed(2)).unwrap());
    }

    #[test]
    fn windows_cover_the_measurement() {
        let s = run(&small(PolicyKind::Xy, 0.05)).unwrap();
        assert_eq!(s.windows.len(), 4);
        assert_eq!(s.windows[0].start, 200);
        assert_eq!(s.windows[3].end, 2_200);
        assert!(s.windows.iter().all(|w| w.packets > 0));
    }

    #[test]
    fn sweep_cardinality_and_order() {
        let mut base = small(PolicyKind::Xy, 0.0);
        base.measure_cycles = 300;
        let rows = sweep(
            &base,
            &[PolicyKind::Xy, PolicyKind::Qrasp],
            &[0.01, 0.02, 0.03],
            &[1, 2],
        )
        .unwrap();
        assert_eq!(rows.len(), 12);
        let keys: Vec<_> = rows.iter().map(|r| (r.policy, r.rate, r.seed)).collect();
        assert_eq!(keys[0], (PolicyKind::Xy, 0.01, 1));
        assert_eq!(keys[1], (PolicyKind::Xy, 0.01, 2));
        assert_eq!(keys[2], (PolicyKind::Xy, 0.02, 1));
        assert_eq!(keys[11], (PolicyKind::Qrasp, 0.03, 2));
        assert!(sweep(&base, &[], &[0.1], &[1]).is_err());
    }

    #[test]
    fn storage_model() {
        let m = MeshConfig::default();
        assert_eq!(table_storage_bits(PolicyKind::Qrasp, &m), 1449);
        assert_eq!(table_storage_bits(PolicyKind::Qr, &m), 2016);
        assert_eq!(table_storage_bits(PolicyKind::Bilcq, &m), 3024);
        assert_eq!(table_storage_bits(PolicyKind::Xy, &m), 0);
    }

    #[test]
    fn overload_is_flagged_not_fatal() {
        let mut cfg = small(PolicyKind::Xy, 0.9);
        cfg.traffic = TrafficSchedule::fixed(PatternKind::Transpose, 0.9, 4);
        cfg.drain_timeout = 10;
        let s = run(&cfg).unwrap();
        assert!(s.saturated);
        assert!(is_saturated(&s));
        let census = s.census.unwrap();
        assert!(census.queued_at_source + census.in_network > 0);
        assert!(s.delivered < s.injected);
    }
}
