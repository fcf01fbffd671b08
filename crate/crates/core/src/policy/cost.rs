//! Per-policy learning costs.

use crate::qtable::QTable;
use crate::topology::{Direction, NodeId};

/// Contention counters of one router at a single instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ContentionView {
    /// Occupied input VCs per input port, by direction ordinal.
    pub occupied_in: [u32; 5],
    /// Reserved downstream VCs per output port, by direction ordinal.
    pub reserved_out: [u32; 5],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSample {
    /// Occupied VCs at the arrival input port.
    pub r_i: u32,
    /// Reserved VCs at the selected output.
    pub r_o: u32,
    /// Path contention, `r_i + r_o`.
    pub q_p: u32,
    /// Region contention: reservations on the other mesh outputs.
    pub q_r: u32,
    /// `q_p + mu * q_r`.
    pub q_y: f64,
}

/// Path-and-region contention cost seen by a packet that entered through
/// `in_port` and will leave through `out_dir`.
pub fn cost_qrasp(
    view: &ContentionView,
    in_port: Direction,
    out_dir: Direction,
    mu: f64,
) -> CostSample {
    let r_i = view.occupied_in[in_port.ordinal()];
    let r_o = if out_dir == Direction::Local {
        0
    } else {
        view.reserved_out[out_dir.ordinal()]
    };
    let q_r = Direction::MESH
        .into_iter()
        .filter(|&d| d != out_dir)
        .map(|d| view.reserved_out[d.ordinal()])
        .sum();
    let q_p = r_i + r_o;
    CostSample {
        r_i,
        r_o,
        q_p,
        q_r,
        q_y: q_p as f64 + mu * q_r as f64,
    }
}

/// Flits buffered across all VCs of one input port.
pub fn cost_bilcq<I: IntoIterator<Item = usize>>(slots_per_vc: I) -> f64 {
    slots_per_vc.into_iter().sum::<usize>() as f64
}

/// Cycles a head flit spent in an input queue: buffer write to switch grant.
pub fn cost_queue_latency(write_cycle: u64, grant_cycle: u64) -> f64 {
    grant_cycle.saturating_sub(write_cycle) as f64
}

/// Credence-scaled learning rate: `base * max(floor, 2^(-dt / half_life))`
/// where `dt` is the age of the incoming estimate.
pub fn crq_effective_alpha(
    last_update_cycle: u64,
    now: u64,
    base_alpha: f64,
    half_life: f64,
    floor: f64,
) -> f64 {
    let dt = now.saturating_sub(last_update_cycle) as f64;
    base_alpha * (-dt / half_life).exp2().max(floor)
}

/// Cycle of the last update of every Q-value of one router (CrQ).
#[derive(Debug, Clone)]
pub struct CredenceTable {
    stamps: Vec<[u64; 2]>,
}

impl CredenceTable {
    pub fn new(nodes: usize) -> Self {
        CredenceTable {
            stamps: vec![[0; 2]; nodes],
        }
    }

    fn slot(dir: Direction) -> usize {
        usize::from(!dir.is_horizontal())
    }

    pub fn last_update(&self, dest: NodeId, dir: Direction) -> u64 {
        self.stamps[dest][Self::slot(dir)]
    }

    pub fn touch(&mut self, dest: NodeId, dir: Direction, now: u64) {
        self.stamps[dest][Self::slot(dir)] = now;
    }

    /// Stamp of the entry behind `table`'s estimate for `dest`. The
    /// destination's own zero estimate is always fresh.
    pub fn estimate_stamp(&self, table: &QTable, dest: NodeId, now: u64) -> u64 {
        match table.best(dest) {
            Ok(Some((dir, _))) => self.last_update(dest, dir),
            _ => now,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Direction::*;

    fn view() -> ContentionView {
        let mut v = ContentionView::default();
        v.occupied_in[North.ordinal()] = 2;
        v.reserved_out[South.ordinal()] = 3;
        v.reserved_out[East.ordinal()] = 1;
        v.reserved_out[West.ordinal()] = 3;
        v
    }

    #[test]
    fn qrasp_cost_example() {
        let c = cost_qrasp(&view(), North, South, 0.1);
        assert_eq!((c.r_i, c.r_o, c.q_p, c.q_r), (2, 3, 5, 4));
        assert!((c.q_y - 5.4).abs() < 1e-12);
    }

    #[test]
    fn qrasp_cost_without_region_weight() {
        let c = cost_qrasp(&view(), North, South, 0.0);
        assert_eq!(c.q_y, c.q_p as f64);
        let idle = cost_qrasp(&ContentionView::default(), North, South, 0.1);
        assert_eq!(idle.q_y, 0.0);
    }

    #[test]
    fn qrasp_cost_at_ejection_counts_every_mesh_output() {
        let c = cost_qrasp(&view(), North, Local, 0.1);
        assert_eq!((c.r_o, c.q_r), (0, 7));
    }

    #[test]
    fn bilcq_cost_examples() {
        assert_eq!(cost_bilcq([0, 0, 0, 0]), 0.0);
        assert_eq!(cost_bilcq([3, 0, 4, 0]), 7.0);
        assert_eq!(cost_bilcq([4, 4, 4, 4]), 16.0);
    }

    #[test]
    fn queue_latency_examples() {
        assert_eq!(cost_queue_latency(100, 103), 3.0);
        assert_eq!(cost_queue_latency(100, 108), 8.0);
    }

    #[test]
    fn credence_examples() {
        let a = |dt: u64| crq_effective_alpha(1_000_000, 1_000_000 + dt, 0.5, 512.0, 1.0 / 16.0);
        assert_eq!(a(0), 0.5);
        assert!((a(512) - 0.25).abs() < 1e-12);
        assert!((a(1_000_000) - 0.03125).abs() < 1e-12);
    }
}
