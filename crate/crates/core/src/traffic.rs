//! Synthetic traffic: destination patterns, Bernoulli injection and
//! interval-switched schedules.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Coord, MeshConfig, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("unknown traffic pattern `{0}`")]
    UnknownPattern(String),
    #[error("{pattern} traffic needs a square mesh, got {width}x{height}")]
    NotSquare {
        pattern: PatternKind,
        width: usize,
        height: usize,
    },
    #[error("{pattern} traffic needs a power-of-two node count, got {nodes}")]
    NotPowerOfTwo { pattern: PatternKind, nodes: usize },
    #[error("injection rate {rate} with {packet_len}-flit packets gives a per-cycle probability above 1")]
    RateTooHigh { rate: f64, packet_len: usize },
    #[error("injection rate must lie in [0, 1], got {0}")]
    BadRate(f64),
    #[error("packet length must be at least 1 flit")]
    BadPacketLen,
    #[error("traffic schedule has no phases")]
    EmptySchedule,
    #[error("phase {0} has zero duration")]
    ZeroPhase(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Uniform,
    Transpose,
    BitReversal,
    Butterfly,
}

impl PatternKind {
    pub const ALL: [PatternKind; 4] = [
        PatternKind::Uniform,
        PatternKind::Transpose,
        PatternKind::BitReversal,
        PatternKind::Butterfly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Uniform => "uniform",
            PatternKind::Transpose => "transpose",
            PatternKind::BitReversal => "bit_reversal",
            PatternKind::Butterfly => "butterfly",
        }
    }

    /// Checks that the pattern is defined on `mesh`.
    pub fn validate(self, mesh: &MeshConfig) -> Result<(), TrafficError> {
        match self {
            PatternKind::Uniform => Ok(()),
            PatternKind::Transpose if mesh.width != mesh.height => Err(TrafficError::NotSquare {
                pattern: self,
                width: mesh.width,
                height: mesh.height,
            }),
            PatternKind::Transpose => Ok(()),
            PatternKind::BitReversal | PatternKind::Butterfly => address_bits(mesh)
                .map(|_| ())
                .ok_or(TrafficError::NotPowerOfTwo {
                    pattern: self,
                    nodes: mesh.nodes(),
                }),
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = TrafficError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform" | "uniform_random" => Ok(PatternKind::Uniform),
            "transpose" => Ok(PatternKind::Transpose),
            "bit_reversal" | "bitreversal" | "bitrev" => Ok(PatternKind::BitReversal),
            "butterfly" => Ok(PatternKind::Butterfly),
            _ => Err(TrafficError::UnknownPattern(s.to_string())),
        }
    }
}

/// `log2(nodes)` when the node count is a power of two.
pub fn address_bits(mesh: &MeshConfig) -> Option<u32> {
    let n = mesh.nodes();
    n.is_power_of_two().then(|| n.trailing_zeros())
}

/// Destination for a packet generated at `src`, or `None` when the pattern
/// maps `src` onto itself (no packet is injected in that slot).
///
/// Only `Uniform` consumes randomness.
pub fn dest_for<R: Rng + ?Sized>(
    pattern: PatternKind,
    src: NodeId,
    mesh: &MeshConfig,
    rng: &mut R,
) -> Option<NodeId> {
    let n = mesh.nodes();
    let dst = match pattern {
        PatternKind::Uniform => {
            let r = rng.gen_range(0..n - 1);
            if r >= src {
                r + 1
            } else {
                r
            }
        }
        PatternKind::Transpose => {
            let c = mesh.coord(src);
            mesh.id(Coord::new(c.y, c.x))
        }
        PatternKind::BitReversal => {
            let bits = address_bits(mesh).expect("validated power-of-two mesh");
            (src as u64)
                .reverse_bits()
                .checked_shr(64 - bits)
                .unwrap_or(0) as NodeId
        }
        PatternKind::Butterfly => {
            let bits = address_bits(mesh).expect("validated power-of-two mesh");
            let msb = bits - 1;
            let hi = (src >> msb) & 1;
            let lo = src & 1;
            let cleared = src & !(1 | (1 << msb));
            cleared | (lo << msb) | hi
        }
    };
    (dst != src).then_some(dst)
}

/// Per-cycle packet generation probability for an offered load of `rate`
/// flits per node per cycle.
pub fn injection_probability(rate: f64, packet_len: usize) -> Result<f64, TrafficError> {
    if packet_len == 0 {
        return Err(TrafficError::BadPacketLen);
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(TrafficError::BadRate(rate));
    }
    let p = rate / packet_len as f64;
    if p > 1.0 {
        return Err(TrafficError::RateTooHigh { rate, packet_len });
    }
    Ok(p)
}

/// One Bernoulli trial with `p = rate / packet_len`.
pub fn should_inject<R: Rng + ?Sized>(
    rate: f64,
    packet_len: usize,
    rng: &mut R,
) -> Result<bool, TrafficError> {
    let p = injection_probability(rate, packet_len)?;
    Ok(p > 0.0 && rng.gen::<f64>() < p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub pattern: PatternKind,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSchedule {
    pub phases: Vec<Phase>,
    /// Offered load in flits per node per cycle.
    pub injection_rate: f64,
    pub packet_len: usize,
}

impl TrafficSchedule {
    /// A single pattern for the whole run.
    pub fn fixed(pattern: PatternKind, injection_rate: f64, packet_len: usize) -> Self {
        TrafficSchedule {
            phases: vec![Phase {
                pattern,
                cycles: u64::MAX,
            }],
            injection_rate,
            packet_len,
        }
    }

    /// Default interval schedule: transpose, bit-reversal, butterfly.
    pub fn interval(phase_cycles: u64, injection_rate: f64, packet_len: usize) -> Self {
        let phases = [
            PatternKind::Transpose,
            PatternKind::BitReversal,
            PatternKind::Butterfly,
        ]
        .into_iter()
        .map(|pattern| Phase {
            pattern,
            cycles: phase_cycles,
        })
        .collect();
        TrafficSchedule {
            phases,
            injection_rate,
            packet_len,
        }
    }

    pub fn validate(&self, mesh: &MeshConfig) -> Result<(), TrafficError> {
        if self.phases.is_empty() {
            return Err(TrafficError::EmptySchedule);
        }
        for (i, ph) in self.phases.iter().enumerate() {
            if ph.cycles == 0 {
                return Err(TrafficError::ZeroPhase(i));
            }
            ph.pattern.validate(mesh)?;
        }
        injection_probability(self.injection_rate, self.packet_len)?;
        Ok(())
    }

    /// Pattern active at `cycle`. Phases are half-open intervals and the
    /// schedule repeats after the last one.
    pub fn active_pattern(&self, cycle: u64) -> PatternKind {
        let total = self
            .phases
            .iter()
            .fold(0u64, |acc, p| acc.saturating_add(p.cycles));
        let mut t = if total == u64::MAX {
            cycle
        } else {
            cycle % total
        };
        for ph in &self.phases {
            if t < ph.cycles {
                return ph.pattern;
            }
            t -= ph.cycles;
        }
        self.phases.last().expect("non-empty schedule").pattern
    }

    /// Cycle boundaries where the pattern changes, up to `horizon`.
    pub fn boundaries(&self, horizon: u64) -> Vec<u64> {
        let mut out = Vec::new();
        if self.phases.len() < 2 {
            return out;
        }
        let mut t = 0u64;
        'outer: loop {
            for ph in &self.phases {
                t = t.saturating_add(ph.cycles);
                if t >= horizon {
                    break 'outer;
                }
                out.push(t);
            }
        }
        out
    }

    /// `+`-joined pattern names, used as the pattern column of reports.
    pub fn label(&self) -> String {
        self.phases
            .iter()
            .map(|p| p.pattern.name())
            .collect::<Vec<_>>()
            .join("+")
    }
}
