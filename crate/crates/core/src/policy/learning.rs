//! Learning packets: the feedback a downstream router sends upstream.

use serde::{Deserialize, Serialize};

use crate::qtable::{QFixed, QTable, QTableError};
use crate::topology::{Direction, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningPacket {
    pub dest: NodeId,
    pub cost: f64,
    /// Sender's best Q-value toward `dest` (zero at the destination).
    pub estimate: QFixed,
    pub origin: NodeId,
    pub target: NodeId,
    pub issue_cycle: u64,
    /// Last update cycle of the Q-value behind `estimate` (used by CrQ).
    pub estimate_stamp: u64,
    /// False for shared-path updates.
    pub primary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Updated(QFixed),
    Discarded,
}

/// Builds the learning packets router `y` returns to `target` for a head
/// toward `dest`: the primary update first, then one per destination in
/// `shared` with the same cost and `y`'s own estimate for that destination.
/// At most `capacity` packets are produced.
pub fn make_learning_packets(
    y: &QTable,
    target: NodeId,
    dest: NodeId,
    cost: f64,
    shared: &[NodeId],
    capacity: usize,
    issue_cycle: u64,
) -> Result<Vec<LearningPacket>, QTableError> {
    let mut out = Vec::with_capacity(capacity.min(1 + shared.len()));
    for (i, &d) in std::iter::once(&dest).chain(shared.iter()).enumerate() {
        if out.len() == capacity {
            break;
        }
        out.push(LearningPacket {
            primary: i == 0,
            dest: d,
            cost,
            estimate: y.estimate(d)?,
            origin: y.owner(),
            target,
            issue_cycle,
            estimate_stamp: issue_cycle,
        });
    }
    Ok(out)
}

/// Applies `lp` to the table of the router it reached. `from` is the port
/// the packet came in on, i.e. the direction of its origin.
pub fn apply_learning_packet(
    x: &mut QTable,
    lp: &LearningPacket,
    alpha: f64,
    gamma: f64,
    from: Direction,
) -> ApplyOutcome {
    if lp.dest == x.owner() || !x.is_candidate(lp.dest, from) {
        return ApplyOutcome::Discarded;
    }
    match x.update(lp.dest, from, alpha, lp.cost, gamma, lp.estimate) {
        Ok(q) => ApplyOutcome::Updated(q),
        Err(_) => ApplyOutcome::Discarded,
    }
}

/// Reverse-path update: a data packet from `src` that arrived from
/// direction `from` carries the sender's cost proxy and its estimate toward
/// `src`.
pub fn bilcq_reverse_update(
    y: &mut QTable,
    src: NodeId,
    from: Direction,
    cost: f64,
    estimate: QFixed,
    alpha: f64,
    gamma: f64,
) -> ApplyOutcome {
    if src == y.owner() || !y.is_candidate(src, from) {
        return ApplyOutcome::Discarded;
    }
    match y.update(src, from, alpha, cost, gamma, estimate) {
        Ok(q) => ApplyOutcome::Updated(q),
        Err(_) => ApplyOutcome::Discarded,
    }
}
