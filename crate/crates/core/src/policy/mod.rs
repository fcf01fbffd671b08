//! Routing policies.
//!
//! Six policies share one contract: given the minimal, turn-legal candidate
//! outputs for a head flit, pick one. The Q-learning policies additionally
//! learn from the cost reported by the downstream router:
//!
//! | policy  | cost                                         | extra updates             |
//! |---------|----------------------------------------------|---------------------------|
//! | `xy`    | -                                            | -                         |
//! | `dyad`  | - (most free downstream credits)             | -                         |
//! | `qr`    | queueing delay of the packet at the sender   | -                         |
//! | `bilcq` | flits buffered at the downstream input port  | reverse-path update       |
//! | `crq`   | queueing delay at the downstream router      | credence-scaled rate      |
//! | `qrasp` | path + weighted region contention downstream | shared-path experience    |

mod cost;
mod learning;

pub use cost::{
    cost_bilcq, cost_qrasp, cost_queue_latency, crq_effective_alpha, ContentionView, CostSample,
    CredenceTable,
};
pub use learning::{
    apply_learning_packet, bilcq_reverse_update, make_learning_packets, ApplyOutcome,
    LearningPacket,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qtable::{QFormat, QTable, QTableError};
use crate::topology::{Direction, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("unknown routing policy `{0}` (expected xy, dyad, qr, bilcq, crq or qrasp)")]
    UnknownPolicy(String),
    #[error("no legal output for packet toward {dest} at router {router}")]
    NoCandidates { router: NodeId, dest: NodeId },
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("learning queue capacity must be at least 1")]
    ZeroQueue,
    #[error("credence half-life must be positive")]
    BadHalfLife,
    #[error(transparent)]
    Table(#[from] QTableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Xy,
    Dyad,
    Qr,
    Bilcq,
    Crq,
    Qrasp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Xy,
        PolicyKind::Dyad,
        PolicyKind::Qr,
        PolicyKind::Bilcq,
        PolicyKind::Crq,
        PolicyKind::Qrasp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Xy => "xy",
            PolicyKind::Dyad => "dyad",
            PolicyKind::Qr => "qr",
            PolicyKind::Bilcq => "bilcq",
            PolicyKind::Crq => "crq",
            PolicyKind::Qrasp => "qrasp",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(
            self,
            PolicyKind::Qr | PolicyKind::Bilcq | PolicyKind::Crq | PolicyKind::Qrasp
        )
    }

    /// Contention-valued Q-values fit the narrow 6.4 format; latency-valued
    /// ones need 12 integer bits.
    pub fn q_format(self) -> QFormat {
        match self {
            PolicyKind::Qrasp => QFormat::Q6_4,
            _ => QFormat::Q12_4,
        }
    }

    pub fn default_alpha(self) -> f64 {
        match self {
            PolicyKind::Qrasp => 0.7,
            _ => 0.5,
        }
    }

    pub fn default_gamma(self) -> f64 {
        match self {
            PolicyKind::Qrasp => 0.9,
            _ => 1.0,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "xy" => Ok(PolicyKind::Xy),
            "dyad" => Ok(PolicyKind::Dyad),
            "qr" => Ok(PolicyKind::Qr),
            "bilcq" => Ok(PolicyKind::Bilcq),
            "crq" => Ok(PolicyKind::Crq),
            "qrasp" => Ok(PolicyKind::Qrasp),
            _ => Err(PolicyError::UnknownPolicy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Learning rate; `None` picks the policy's default.
    pub alpha: Option<f64>,
    /// Discount factor; `None` picks the policy's default.
    pub gamma: Option<f64>,
    /// Weight of the region-contention term.
    pub mu: f64,
    /// Shared-path experience updates (Q-RASP only).
    pub shared_path: bool,
    /// Whether the arriving packet's own VC counts toward input contention.
    pub count_arriving_vc: bool,
    /// Probability of picking a random legal candidate instead of the
    /// greedy one.
    pub epsilon: f64,
    /// Learning packets buffered per outgoing learning link.
    pub learning_queue_capacity: usize,
    pub crq_half_life: f64,
    pub crq_floor: f64,
    /// Test hook: replaces every learning cost with a constant.
    #[serde(skip)]
    pub cost_override: Option<f64>,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            kind,
            alpha: None,
            gamma: None,
            mu: 0.1,
            shared_path: true,
            count_arriving_vc: true,
            epsilon: 0.0,
            learning_queue_capacity: 4,
            crq_half_life: 512.0,
            crq_floor: 1.0 / 16.0,
            cost_override: None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| self.kind.default_alpha())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(|| self.kind.default_gamma())
    }

    /// Shared-path updates only exist for Q-RASP.
    pub fn sharing(&self) -> bool {
        self.kind == PolicyKind::Qrasp && self.shared_path
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let unit = |name: &'static str, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(PolicyError::OutOfRange { name, value })
            }
        };
        unit("alpha", self.alpha())?;
        unit("gamma", self.gamma())?;
        unit("mu", self.mu)?;
        unit("epsilon", self.epsilon)?;
        unit("crq_floor", self.crq_floor)?;
        if self.learning_queue_capacity == 0 {
            return Err(PolicyError::ZeroQueue);
        }
        if self.crq_half_life.is_nan() || self.crq_half_life <= 0.0 {
            return Err(PolicyError::BadHalfLife);
        }
        Ok(())
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::new(PolicyKind::Qrasp)
    }
}

/// What a router exposes to the output-selection step.
#[derive(Debug, Clone, Copy)]
pub struct SelectView<'a> {
    pub router: NodeId,
    pub dest: NodeId,
    /// Minimal, turn-legal outputs; horizontal candidate first.
    pub candidates: &'a [Direction],
    pub qtable: Option<&'a QTable>,
    /// Free downstream buffer slots per output, indexed by direction ordinal.
    pub free_credits: [u32; 5],
}

/// Greedy output selection for `kind`.
pub fn select_output(kind: PolicyKind, view: &SelectView<'_>) -> Result<Direction, PolicyError> {
    let first = *view.candidates.first().ok_or(PolicyError::NoCandidates {
        router: view.router,
        dest: view.dest,
    })?;
    match kind {
        PolicyKind::Xy => Ok(view
            .candidates
            .iter()
            .copied()
            .find(|d| d.is_horizontal())
            .unwrap_or(first)),
        PolicyKind::Dyad => {
            let mut best = first;
            for &d in &view.candidates[1..] {
                if view.free_credits[d.ordinal()] > view.free_credits[best.ordinal()] {
                    best = d;
                }
            }
            Ok(best)
        }
        PolicyKind::Qr | PolicyKind::Bilcq | PolicyKind::Crq | PolicyKind::Qrasp => {
            let table = view
                .qtable
                .expect("learning policies always carry a Q-table");
            Ok(table.min_estimate(view.dest, view.candidates)?.0)
        }
    }
}
