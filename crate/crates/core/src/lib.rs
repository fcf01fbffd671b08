//! Cycle-level simulator for 2D-mesh networks-on-chip with reinforcement
//! learning routing.
//!
//! The crate models wormhole routers with virtual channels and credit-based
//! flow control, and six routing policies: dimension-order `xy`, the
//! congestion-aware `dyad`, and the Q-learning family `qr`, `bilcq`, `crq`
//! and `qrasp`. Q-RASP learns from path and region contention and spreads
//! each update to destinations that share the same route through a router.
//!
//! ```
//! use qnoc::{run, PatternKind, PolicyConfig, PolicyKind, SimConfig, TrafficSchedule};
//!
//! let cfg = SimConfig {
//!     policy: PolicyConfig::new(PolicyKind::Qrasp),
//!     traffic: TrafficSchedule::fixed(PatternKind::Transpose, 0.05, 4),
//!     warmup_cycles: 500,
//!     measure_cycles: 2_000,
//!     ..SimConfig::default()
//! };
//! let stats = run(&cfg).unwrap();
//! assert_eq!(stats.injected, stats.delivered);
//! ```

pub mod engine;
pub mod network;
pub mod policy;
pub mod qtable;
pub mod report;
pub mod rng;
pub mod router;
pub mod stats;
pub mod topology;
pub mod traffic;

pub use engine::{
    is_saturated, run, saturation_rate, sweep, table_storage_bits, EngineError, SimConfig, SweepRow,
};
pub use network::{Network, NetworkError};
pub use policy::{LearningPacket, PolicyConfig, PolicyError, PolicyKind};
pub use qtable::{quantize, QFixed, QFormat, QTable, QTableError};
pub use router::{FlitKind, RouterConfig, RouterError, TraceEvent, TraceKind, VcStage};
pub use stats::{Census, Delivery, EventCounters, LatencySummary, StatsRecord, Window};
pub use topology::{
    cdg_acyclic, AllTurns, Coord, Direction, MeshConfig, NodeId, RouteKey, TopologyError, VcClass,
};
pub use traffic::{PatternKind, Phase, TrafficError, TrafficSchedule};
