//! Run statistics.

use serde::{Deserialize, Serialize};

use crate::topology::NodeId;

/// Monotone event counters. They stand in for an energy model: each one
/// tracks an activity that costs dynamic power in hardware.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub qtable_reads: u64,
    pub qtable_writes: u64,
    /// Learning packets that crossed a learning link.
    pub learning_flits: u64,
    /// Learning packets lost to a full learning queue.
    pub learning_drops: u64,
    /// Learning packets that reached a router for which the update did not
    /// apply.
    pub learning_discards: u64,
    pub flit_hops: u64,
    pub buffer_writes: u64,
}

/// One delivered packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub pkt_id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub len: usize,
    pub gen_cycle: u64,
    /// Cycle the head was written into the source router.
    pub entry_cycle: u64,
    /// Cycle the tail left the network.
    pub eject_cycle: u64,
    pub hops: usize,
}

impl Delivery {
    /// Network latency; time in the source queue is excluded.
    pub fn latency(&self) -> u64 {
        self.eject_cycle - self.entry_cycle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
    pub min: u64,
    pub max: u64,
}

impl LatencySummary {
    /// Nearest-rank percentiles over `latencies`; `None` when empty.
    pub fn from_latencies(latencies: &[u64]) -> Option<LatencySummary> {
        if latencies.is_empty() {
            return None;
        }
        let mut v = latencies.to_vec();
        v.sort_unstable();
        let n = v.len();
        let rank = |p: f64| v[((p * n as f64).ceil() as usize).clamp(1, n) - 1] as f64;
        Some(LatencySummary {
            count: n,
            mean: v.iter().sum::<u64>() as f64 / n as f64,
            median: rank(0.5),
            p99: rank(0.99),
            min: v[0],
            max: v[n - 1],
        })
    }
}

/// Packets ejected in one window of the run, keyed by ejection cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: u64,
    pub end: u64,
    pub packets: u64,
    pub latency_sum: u64,
}

impl Window {
    pub fn mean_latency(&self) -> Option<f64> {
        (self.packets > 0).then(|| self.latency_sum as f64 / self.packets as f64)
    }
}

/// What was still in the network when a drain timed out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub cycle: u64,
    /// Packets waiting in source queues, not yet entered.
    pub queued_at_source: u64,
    /// Packets that entered the network and have not been delivered.
    pub in_network: u64,
    /// Input VCs holding or sinking a packet.
    pub busy_vcs: u64,
    pub flits_on_links: u64,
    pub learning_queued: u64,
    /// Entry cycle of the oldest undelivered packet.
    pub oldest_entry: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    /// Packets generated over the run.
    pub injected: u64,
    /// Packets delivered over the run.
    pub delivered: u64,
    /// Packets generated in the measurement window.
    pub measured_injected: u64,
    /// Measurement-window packets that were delivered.
    pub measured_delivered: u64,
    pub latency: Option<LatencySummary>,
    /// Flits ejected per node per cycle during the measurement window.
    pub throughput: f64,
    /// Offered load over the measurement window, flits per node per cycle.
    pub offered: f64,
    pub windows: Vec<Window>,
    pub counters: EventCounters,
    /// Delivered packets whose hop count differed from the Manhattan
    /// distance.
    pub nonminimal: u64,
    pub saturated: bool,
    pub census: Option<Census>,
    pub cycles: u64,
}

impl StatsRecord {
    pub fn mean_latency(&self) -> Option<f64> {
        self.latency.map(|l| l.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let lat: Vec<u64> = (1..=100).collect();
        let s = LatencySummary::from_latencies(&lat).unwrap();
        assert_eq!(s.mean, 50.5);
        assert_eq!(s.median, 50.0);
        assert_eq!(s.p99, 99.0);
        assert_eq!((s.min, s.max), (1, 100));
        let one = LatencySummary::from_latencies(&[18]).unwrap();
        assert_eq!((one.median, one.p99), (18.0, 18.0));
        assert!(LatencySummary::from_latencies(&[]).is_none());
    }

    #[test]
    fn window_mean() {
        let w = Window {
            start: 0,
            end: 10,
            packets: 4,
            latency_sum: 90,
        };
        assert_eq!(w.mean_latency(), Some(22.5));
        assert_eq!(Window::default().mean_latency(), None);
    }
}
