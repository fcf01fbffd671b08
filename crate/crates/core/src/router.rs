//! Input-queued wormhole router with virtual channels and credit-based flow
//! control.
//!
//! Timing for a head flit written into an input buffer at cycle `t`: route
//! computation at `t+1`, VC allocation at `t+2`, switch allocation at `t+3`,
//! link traversal at `t+4`, and the write into the next router at `t+5`.
//! Body and tail flits follow one per cycle and skip the first two stages.
//! Credits take one cycle to travel back. Flits that reach their destination
//! router are consumed on arrival.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::policy::{
    apply_learning_packet, bilcq_reverse_update, cost_bilcq, cost_qrasp, cost_queue_latency,
    crq_effective_alpha, make_learning_packets, select_output, ApplyOutcome, ContentionView,
    CredenceTable, LearningPacket, PolicyConfig, PolicyKind, SelectView,
};
use crate::qtable::{QFixed, QTable};
use crate::stats::{Delivery, EventCounters};
use crate::topology::{
    allowed_turn, minimal_candidates, Coord, Direction, MeshConfig, NodeId, RouteKey, VcClass,
};

/// Cycles from a switch grant until the flit is written downstream.
pub const LINK_DELAY: u64 = 2;
/// Cycles a credit spends on the wire.
pub const CREDIT_DELAY: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouterError {
    #[error("a router needs an even number of VCs per port, at least 2 (got {0})")]
    BadVcCount(usize),
    #[error("buffer depth must be at least 1")]
    ZeroDepth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterConfig {
    pub vcs_per_port: usize,
    pub buffer_depth: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            vcs_per_port: 4,
            buffer_depth: 4,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), RouterError> {
        if self.vcs_per_port < 2 || !self.vcs_per_port.is_multiple_of(2) {
            return Err(RouterError::BadVcCount(self.vcs_per_port));
        }
        if self.buffer_depth == 0 {
            return Err(RouterError::ZeroDepth);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlitKind {
    Head,
    Body,
    Tail,
    /// A one-flit packet: head and tail at once.
    Single,
}

impl FlitKind {
    pub fn for_position(seq: usize, len: usize) -> FlitKind {
        match (seq == 0, seq + 1 == len) {
            (true, true) => FlitKind::Single,
            (true, false) => FlitKind::Head,
            (false, true) => FlitKind::Tail,
            (false, false) => FlitKind::Body,
        }
    }

    pub fn is_head(self) -> bool {
        matches!(self, FlitKind::Head | FlitKind::Single)
    }

    pub fn is_tail(self) -> bool {
        matches!(self, FlitKind::Tail | FlitKind::Single)
    }
}

/// Per-hop data a head flit carries for the learning policies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sideband {
    /// Destinations that shared the sender's route for this packet.
    pub shared: SmallVec<[NodeId; 3]>,
    /// Cycles the head waited in the sender's input buffer.
    pub queue_latency: u64,
    /// Sender's cost proxy and estimate toward the packet's source.
    pub reverse: Option<(f64, QFixed)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flit {
    pub pkt_id: u64,
    pub kind: FlitKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub class: VcClass,
    pub len: usize,
    /// VC at the receiving input port.
    pub vc: usize,
    pub hops: usize,
    pub gen_cycle: u64,
    pub entry_cycle: u64,
    pub side: Sideband,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcStage {
    Idle,
    Routing,
    VcAlloc,
    Active,
    /// The VC belongs to a packet that terminates here; flits are consumed
    /// as they arrive.
    Sinking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Credit {
    pub vc: usize,
    pub tail: bool,
}

#[derive(Debug, Clone)]
struct InputVc {
    buf: VecDeque<(Flit, u64)>,
    stage: VcStage,
    since: u64,
    route: Direction,
    out_vc: usize,
    head_write: u64,
    shared: SmallVec<[NodeId; 3]>,
}

impl InputVc {
    fn new(depth: usize) -> Self {
        InputVc {
            buf: VecDeque::with_capacity(depth),
            stage: VcStage::Idle,
            since: 0,
            route: Direction::Local,
            out_vc: 0,
            head_write: 0,
            shared: SmallVec::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct OutputPort {
    credits: Vec<u32>,
    reserved: Vec<bool>,
    sa_rr: usize,
    va_rr: usize,
}

/// A traced pipeline event.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    Inject {
        pkt: u64,
    },
    Route {
        pkt: u64,
        out: Direction,
    },
    VcAlloc {
        pkt: u64,
        out: Direction,
        vc: usize,
    },
    Switch {
        pkt: u64,
        out: Direction,
        vc: usize,
        kind: FlitKind,
    },
    Eject {
        pkt: u64,
    },
    Learn {
        dest: NodeId,
        from: Direction,
        value: QFixed,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub router: NodeId,
    pub kind: TraceKind,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.cycle, self.router)?;
        match &self.kind {
            TraceKind::Inject { pkt } => write!(f, "inject pkt={pkt}"),
            TraceKind::Route { pkt, out } => write!(f, "route pkt={pkt} out={out}"),
            TraceKind::VcAlloc { pkt, out, vc } => write!(f, "vc pkt={pkt} out={out} vc={vc}"),
            TraceKind::Switch { pkt, out, vc, kind } => {
                write!(f, "switch pkt={pkt} out={out} vc={vc} flit={kind:?}")
            }
            TraceKind::Eject { pkt } => write!(f, "eject pkt={pkt}"),
            TraceKind::Learn { dest, from, value } => {
                write!(f, "learn dest={dest} from={from} q={value}")
            }
        }
    }
}

/// In-flight flits and credits, indexed by `receiver * 5 + port`. For flits
/// the port is the receiver's input port; for credits it is the receiver's
/// output port.
#[derive(Debug, Default)]
pub(crate) struct Links {
    pub flits: Vec<VecDeque<(u64, Flit)>>,
    pub credits: Vec<VecDeque<(u64, Credit)>>,
}

impl Links {
    pub fn new(nodes: usize) -> Self {
        Links {
            flits: (0..nodes * 5).map(|_| VecDeque::new()).collect(),
            credits: (0..nodes * 5).map(|_| VecDeque::new()).collect(),
        }
    }
}

/// Everything a router may touch outside itself during one cycle. Flits and
/// credits it emits land in the future, so routers can be ticked in any
/// order.
pub(crate) struct Ctx<'a> {
    pub cycle: u64,
    pub policy: &'a PolicyConfig,
    pub links: &'a mut Links,
    pub counters: &'a mut EventCounters,
    pub deliveries: &'a mut Vec<Delivery>,
    pub flits_ejected: &'a mut u64,
    pub trace: Option<&'a mut Vec<TraceEvent>>,
}

impl Ctx<'_> {
    fn trace(&mut self, router: NodeId, kind: TraceKind) {
        if let Some(t) = self.trace.as_deref_mut() {
            t.push(TraceEvent {
                cycle: self.cycle,
                router,
                kind,
            });
        }
    }
}

#[derive(Debug, Clone)]
pub struct Router {
    id: NodeId,
    coord: Coord,
    width: usize,
    vcs: usize,
    depth: usize,
    kind: PolicyKind,
    neighbors: [Option<NodeId>; 5],
    inputs: Vec<InputVc>,
    outputs: Vec<OutputPort>,
    qtable: Option<QTable>,
    credence: Option<CredenceTable>,
    learning: [VecDeque<LearningPacket>; 5],
    explore: Option<ChaCha8Rng>,
}

impl Router {
    pub(crate) fn new(
        id: NodeId,
        mesh: &MeshConfig,
        cfg: &RouterConfig,
        policy: &PolicyConfig,
        explore: Option<ChaCha8Rng>,
    ) -> Router {
        let mut neighbors = [None; 5];
        for d in Direction::MESH {
            neighbors[d.ordinal()] = mesh.neighbor(id, d);
        }
        let outputs = Direction::ALL
            .iter()
            .map(|d| OutputPort {
                credits: vec![
                    if neighbors[d.ordinal()].is_some() {
                        cfg.buffer_depth as u32
                    } else {
                        0
                    };
                    cfg.vcs_per_port
                ],
                reserved: vec![false; cfg.vcs_per_port],
                sa_rr: 0,
                va_rr: 0,
            })
            .collect();
        let kind = policy.kind;
        Router {
            id,
            coord: mesh.coord(id),
            width: mesh.width,
            vcs: cfg.vcs_per_port,
            depth: cfg.buffer_depth,
            kind,
            neighbors,
            inputs: (0..5 * cfg.vcs_per_port)
                .map(|_| InputVc::new(cfg.buffer_depth))
                .collect(),
            outputs,
            qtable: kind
                .is_learning()
                .then(|| QTable::new(id, mesh, kind.q_format())),
            credence: (kind == PolicyKind::Crq).then(|| CredenceTable::new(mesh.nodes())),
            learning: Default::default(),
            explore,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn neighbor(&self, dir: Direction) -> Option<NodeId> {
        self.neighbors[dir.ordinal()]
    }

    pub fn qtable(&self) -> Option<&QTable> {
        self.qtable.as_ref()
    }

    pub fn qtable_mut(&mut self) -> Option<&mut QTable> {
        self.qtable.as_mut()
    }

    fn ivc(&self, port: Direction, vc: usize) -> &InputVc {
        &self.inputs[port.ordinal() * self.vcs + vc]
    }

    pub fn stage(&self, port: Direction, vc: usize) -> VcStage {
        self.ivc(port, vc).stage
    }

    pub fn occupancy(&self, port: Direction, vc: usize) -> usize {
        self.ivc(port, vc).buf.len()
    }

    /// Input VCs of `port` that hold a packet.
    pub fn occupied_vcs(&self, port: Direction) -> u32 {
        let base = port.ordinal() * self.vcs;
        self.inputs[base..base + self.vcs]
            .iter()
            .filter(|v| v.stage != VcStage::Idle)
            .count() as u32
    }

    /// Flits buffered across all VCs of `port`.
    pub fn buffered_flits(&self, port: Direction) -> usize {
        let base = port.ordinal() * self.vcs;
        cost_bilcq(
            self.inputs[base..base + self.vcs]
                .iter()
                .map(|v| v.buf.len()),
        ) as usize
    }

    /// Downstream VCs reserved on output `port`.
    pub fn reserved_vcs(&self, port: Direction) -> u32 {
        self.outputs[port.ordinal()]
            .reserved
            .iter()
            .filter(|&&r| r)
            .count() as u32
    }

    pub fn credits(&self, port: Direction, vc: usize) -> u32 {
        self.outputs[port.ordinal()].credits[vc]
    }

    pub fn learning_queue(&self, toward: Direction) -> &VecDeque<LearningPacket> {
        &self.learning[toward.ordinal()]
    }

    pub fn busy_vcs(&self) -> usize {
        self.inputs
            .iter()
            .filter(|v| v.stage != VcStage::Idle)
            .count()
    }

    pub fn contention(&self) -> ContentionView {
        let mut view = ContentionView::default();
        for d in Direction::ALL {
            view.occupied_in[d.ordinal()] = self.occupied_vcs(d);
            view.reserved_out[d.ordinal()] = self.reserved_vcs(d);
        }
        view
    }

    /// A Local-port VC of `class` that can take a new packet.
    pub(crate) fn free_injection_vc(&self, class: VcClass) -> Option<usize> {
        class.vc_range(self.vcs).find(|&vc| {
            let v = self.ivc(Direction::Local, vc);
            v.stage == VcStage::Idle && v.buf.is_empty()
        })
    }

    pub(crate) fn injection_room(&self, vc: usize) -> bool {
        self.ivc(Direction::Local, vc).buf.len() < self.depth
    }

    /// Writes a flit from the local network interface.
    pub(crate) fn inject(&mut self, vc: usize, flit: Flit, ctx: &mut Ctx<'_>) {
        if flit.kind.is_head() {
            ctx.trace(self.id, TraceKind::Inject { pkt: flit.pkt_id });
        }
        self.write(Direction::Local, vc, flit, ctx);
    }

    fn write(&mut self, port: Direction, vc: usize, flit: Flit, ctx: &mut Ctx<'_>) {
        let cycle = ctx.cycle;
        let v = &mut self.inputs[port.ordinal() * self.vcs + vc];
        debug_assert!(
            v.buf.len() < self.depth,
            "buffer overflow at router {}",
            self.id
        );
        if flit.kind.is_head() {
            debug_assert_eq!(v.stage, VcStage::Idle);
            v.stage = VcStage::Routing;
            v.since = cycle;
            v.head_write = cycle;
        }
        v.buf.push_back((flit, cycle));
        ctx.counters.buffer_writes += 1;
    }

    /// A flit arriving over the link on input `port`.
    pub(crate) fn accept(&mut self, port: Direction, flit: Flit, ctx: &mut Ctx<'_>) {
        let vc = flit.vc;
        let idx = port.ordinal() * self.vcs + vc;
        if flit.kind.is_head() {
            self.on_head_arrival(port, &flit, ctx);
            if flit.dst == self.id {
                self.inputs[idx].stage = VcStage::Sinking;
            }
        }
        if self.inputs[idx].stage == VcStage::Sinking {
            self.sink(port, flit, ctx);
        } else {
            self.write(port, vc, flit, ctx);
        }
    }

    fn sink(&mut self, port: Direction, flit: Flit, ctx: &mut Ctx<'_>) {
        let idx = port.ordinal() * self.vcs + flit.vc;
        *ctx.flits_ejected += 1;
        self.return_credit(port, flit.vc, flit.kind.is_tail(), ctx);
        if flit.kind.is_tail() {
            self.inputs[idx].stage = VcStage::Idle;
            ctx.trace(self.id, TraceKind::Eject { pkt: flit.pkt_id });
            ctx.deliveries.push(Delivery {
                pkt_id: flit.pkt_id,
                src: flit.src,
                dst: flit.dst,
                len: flit.len,
                gen_cycle: flit.gen_cycle,
                entry_cycle: flit.entry_cycle,
                eject_cycle: ctx.cycle,
                hops: flit.hops,
            });
        }
    }

    fn return_credit(&mut self, port: Direction, vc: usize, tail: bool, ctx: &mut Ctx<'_>) {
        if let Some(up) = self.neighbors[port.ordinal()] {
            ctx.links.credits[up * 5 + port.opposite().ordinal()]
                .push_back((ctx.cycle + CREDIT_DELAY, Credit { vc, tail }));
        }
    }

    pub(crate) fn accept_credit(&mut self, port: Direction, credit: Credit) {
        let out = &mut self.outputs[port.ordinal()];
        out.credits[credit.vc] += 1;
        debug_assert!(out.credits[credit.vc] as usize <= self.depth);
        if credit.tail {
            out.reserved[credit.vc] = false;
        }
    }

    /// Learning work triggered by a head flit entering on `port`.
    fn on_head_arrival(&mut self, port: Direction, flit: &Flit, ctx: &mut Ctx<'_>) {
        let policy = ctx.policy;
        if self.kind == PolicyKind::Bilcq {
            if let (Some((cost, est)), Some(table)) = (flit.side.reverse, self.qtable.as_mut()) {
                let alpha = policy.alpha();
                if let ApplyOutcome::Updated(_) =
                    bilcq_reverse_update(table, flit.src, port, cost, est, alpha, policy.gamma())
                {
                    ctx.counters.qtable_writes += 1;
                }
            }
        }
        let at_dest = flit.dst == self.id;
        let cost = match self.kind {
            PolicyKind::Xy | PolicyKind::Dyad => return,
            PolicyKind::Qr => flit.side.queue_latency as f64,
            PolicyKind::Bilcq => self.buffered_flits(port) as f64,
            PolicyKind::Crq if at_dest => 0.0,
            PolicyKind::Qrasp if at_dest => {
                // The sinking VC is not yet marked; count it by hand.
                let mut view = self.contention();
                view.occupied_in[port.ordinal()] += 1;
                self.qrasp_cost(&view, port, Direction::Local, policy)
            }
            // Emitted later, once the output or the queueing delay is known.
            PolicyKind::Crq | PolicyKind::Qrasp => return,
        };
        self.emit_learning(port, flit.dst, cost, &flit.side.shared, ctx);
    }

    fn qrasp_cost(
        &self,
        view: &ContentionView,
        port: Direction,
        out: Direction,
        policy: &PolicyConfig,
    ) -> f64 {
        let mut view = *view;
        if !policy.count_arriving_vc {
            view.occupied_in[port.ordinal()] = view.occupied_in[port.ordinal()].saturating_sub(1);
        }
        cost_qrasp(&view, port, out, policy.mu).q_y
    }

    /// Queues learning packets toward the upstream neighbor on `port`.
    fn emit_learning(
        &mut self,
        port: Direction,
        dest: NodeId,
        cost: f64,
        shared: &[NodeId],
        ctx: &mut Ctx<'_>,
    ) {
        if self.neighbors[port.ordinal()].is_none() {
            return;
        }
        let Some(table) = self.qtable.as_ref() else {
            return;
        };
        let policy = ctx.policy;
        let cost = policy.cost_override.unwrap_or(cost);
        let shared = if policy.sharing() { shared } else { &[] };
        let target = self.neighbors[port.ordinal()].expect("checked above");
        let mut lps = make_learning_packets(
            table,
            target,
            dest,
            cost,
            shared,
            policy.learning_queue_capacity,
            ctx.cycle,
        )
        .expect("destinations are inside the mesh");
        if let Some(cred) = &self.credence {
            for lp in &mut lps {
                lp.estimate_stamp = cred.estimate_stamp(table, lp.dest, ctx.cycle);
            }
        }
        ctx.counters.qtable_reads += lps.len() as u64;
        let queue = &mut self.learning[port.ordinal()];
        for lp in lps {
            if queue.len() < policy.learning_queue_capacity {
                queue.push_back(lp);
            } else if let Some(pos) = queue
                .iter()
                .rposition(|q| !q.primary)
                .filter(|_| lp.primary)
            {
                // A primary update displaces the newest shared one.
                queue.remove(pos);
                queue.push_back(lp);
                ctx.counters.learning_drops += 1;
            } else {
                ctx.counters.learning_drops += 1;
            }
        }
    }

    /// Pops the learning packet to send toward `dir` this cycle, if any.
    pub(crate) fn pop_learning(&mut self, dir: Direction, cycle: u64) -> Option<LearningPacket> {
        let q = &mut self.learning[dir.ordinal()];
        match q.front() {
            Some(lp) if lp.issue_cycle < cycle => q.pop_front(),
            _ => None,
        }
    }

    /// Applies a learning packet that arrived from direction `from`.
    pub(crate) fn apply_learning(
        &mut self,
        lp: &LearningPacket,
        from: Direction,
        ctx: &mut Ctx<'_>,
    ) {
        let policy = ctx.policy;
        let Some(table) = self.qtable.as_mut() else {
            return;
        };
        let alpha = match &self.credence {
            Some(_) => crq_effective_alpha(
                lp.estimate_stamp,
                ctx.cycle,
                policy.alpha(),
                policy.crq_half_life,
                policy.crq_floor,
            ),
            None => policy.alpha(),
        };
        match apply_learning_packet(table, lp, alpha, policy.gamma(), from) {
            ApplyOutcome::Updated(value) => {
                ctx.counters.qtable_writes += 1;
                if let Some(cred) = self.credence.as_mut() {
                    cred.touch(lp.dest, from, ctx.cycle);
                }
                ctx.trace(
                    self.id,
                    TraceKind::Learn {
                        dest: lp.dest,
                        from,
                        value,
                    },
                );
            }
            ApplyOutcome::Discarded => ctx.counters.learning_discards += 1,
        }
    }

    /// One cycle of switch allocation, VC allocation and route computation,
    /// in that order.
    pub(crate) fn tick(&mut self, ctx: &mut Ctx<'_>) {
        if self.inputs.iter().all(|v| v.stage == VcStage::Idle) {
            return;
        }
        self.switch_allocation(ctx);
        self.vc_allocation(ctx);
        self.route_computation(ctx);
    }

    fn route_computation(&mut self, ctx: &mut Ctx<'_>) {
        let cycle = ctx.cycle;
        for idx in 0..self.inputs.len() {
            let v = &self.inputs[idx];
            if v.stage != VcStage::Routing || v.since >= cycle {
                continue;
            }
            let Some((flit, written)) = v.buf.front() else {
                continue;
            };
            if *written >= cycle {
                continue;
            }
            let port = Direction::from_ordinal(idx / self.vcs).expect("port index");
            let (dst, class, pkt) = (flit.dst, flit.class, flit.pkt_id);
            let carried = flit.side.shared.clone();
            let out = self.select(port, dst, class, ctx);
            ctx.trace(self.id, TraceKind::Route { pkt, out });

            if self.kind == PolicyKind::Qrasp {
                let policy = ctx.policy;
                let key = RouteKey::new(port, out);
                let table = self.qtable.as_mut().expect("learning policy has a table");
                let shared: SmallVec<[NodeId; 3]> = if policy.sharing() {
                    let limit = policy.learning_queue_capacity.saturating_sub(1);
                    table.shared_dests(key, dst, limit).into_iter().collect()
                } else {
                    SmallVec::new()
                };
                table
                    .record_route(dst, key)
                    .expect("destination is another node");
                self.inputs[idx].shared = shared;
                let cost = self.qrasp_cost(&self.contention(), port, out, policy);
                self.emit_learning(port, dst, cost, &carried, ctx);
            }
            let v = &mut self.inputs[idx];
            v.route = out;
            v.stage = VcStage::VcAlloc;
            v.since = cycle;
        }
    }

    fn select(
        &mut self,
        port: Direction,
        dst: NodeId,
        class: VcClass,
        ctx: &mut Ctx<'_>,
    ) -> Direction {
        let prev = if port == Direction::Local {
            Direction::Local
        } else {
            port.opposite()
        };
        let cands: SmallVec<[Direction; 2]> =
            minimal_candidates(self.coord, Coord::new(dst % self.width, dst / self.width))
                .into_iter()
                .filter(|&d| allowed_turn(class, prev, d))
                .collect();
        if ctx.policy.epsilon > 0.0 && cands.len() > 1 {
            if let Some(rng) = self.explore.as_mut() {
                if rng.gen::<f64>() < ctx.policy.epsilon {
                    return cands[rng.gen_range(0..cands.len())];
                }
            }
        }
        let mut free_credits = [0u32; 5];
        if self.kind == PolicyKind::Dyad {
            for d in &cands {
                free_credits[d.ordinal()] = self.outputs[d.ordinal()].credits.iter().sum();
            }
        }
        if self.qtable.is_some() {
            ctx.counters.qtable_reads += 1;
        }
        let view = SelectView {
            router: self.id,
            dest: dst,
            candidates: &cands,
            qtable: self.qtable.as_ref(),
            free_credits,
        };
        select_output(self.kind, &view).unwrap_or_else(|e| panic!("routing invariant broken: {e}"))
    }

    fn vc_allocation(&mut self, ctx: &mut Ctx<'_>) {
        let cycle = ctx.cycle;
        let n = self.inputs.len();
        for out in Direction::MESH {
            let o = out.ordinal();
            let rr = self.outputs[o].va_rr;
            let mut requests: SmallVec<[(u64, usize, usize); 8]> = SmallVec::new();
            for k in 0..n {
                let idx = (rr + k) % n;
                let v = &self.inputs[idx];
                if v.stage == VcStage::VcAlloc && v.route == out && v.since < cycle {
                    requests.push((v.since, k, idx));
                }
            }
            if requests.is_empty() {
                continue;
            }
            requests.sort_unstable();
            for &(_, _, idx) in &requests {
                let class = self.inputs[idx]
                    .buf
                    .front()
                    .expect("head is buffered")
                    .0
                    .class;
                let port = &mut self.outputs[o];
                let Some(vc) = class.vc_range(self.vcs).find(|&vc| !port.reserved[vc]) else {
                    continue;
                };
                port.reserved[vc] = true;
                port.va_rr = (idx + 1) % n;
                let v = &mut self.inputs[idx];
                v.out_vc = vc;
                v.stage = VcStage::Active;
                v.since = cycle;
                let pkt = v.buf.front().expect("head is buffered").0.pkt_id;
                ctx.trace(self.id, TraceKind::VcAlloc { pkt, out, vc });
            }
        }
    }

    fn switch_allocation(&mut self, ctx: &mut Ctx<'_>) {
        let cycle = ctx.cycle;
        let n = self.inputs.len();
        for out in Direction::MESH {
            let o = out.ordinal();
            let Some(next) = self.neighbors[o] else {
                continue;
            };
            let rr = self.outputs[o].sa_rr;
            let mut grant = None;
            for k in 0..n {
                let idx = (rr + k) % n;
                let v = &self.inputs[idx];
                if v.stage != VcStage::Active || v.route != out || v.since >= cycle {
                    continue;
                }
                match v.buf.front() {
                    Some((_, written)) if *written < cycle => {}
                    _ => continue,
                }
                if self.outputs[o].credits[v.out_vc] == 0 {
                    continue;
                }
                grant = Some(idx);
                break;
            }
            let Some(idx) = grant else {
                continue;
            };
            self.outputs[o].sa_rr = (idx + 1) % n;
            let port = Direction::from_ordinal(idx / self.vcs).expect("port index");
            let in_vc = idx % self.vcs;
            let (mut flit, _) = self.inputs[idx].buf.pop_front().expect("checked non-empty");
            let out_vc = self.inputs[idx].out_vc;
            self.outputs[o].credits[out_vc] -= 1;

            if flit.kind.is_head() {
                let waited = cost_queue_latency(self.inputs[idx].head_write, cycle);
                flit.side = Sideband {
                    shared: std::mem::take(&mut self.inputs[idx].shared),
                    queue_latency: waited as u64,
                    reverse: None,
                };
                if self.kind == PolicyKind::Bilcq {
                    let table = self.qtable.as_ref().expect("learning policy has a table");
                    let est = table.estimate(flit.src).expect("source is inside the mesh");
                    ctx.counters.qtable_reads += 1;
                    flit.side.reverse = Some((self.buffered_flits(out) as f64, est));
                }
                if self.kind == PolicyKind::Crq {
                    self.emit_learning(port, flit.dst, waited, &[], ctx);
                }
            }
            ctx.trace(
                self.id,
                TraceKind::Switch {
                    pkt: flit.pkt_id,
                    out,
                    vc: out_vc,
                    kind: flit.kind,
                },
            );
            let tail = flit.kind.is_tail();
            flit.vc = out_vc;
            flit.hops += 1;
            ctx.counters.flit_hops += 1;
            ctx.links.flits[next * 5 + out.opposite().ordinal()]
                .push_back((cycle + LINK_DELAY, flit));
            self.return_credit(port, in_vc, tail, ctx);
            if tail {
                let v = &mut self.inputs[idx];
                v.stage = VcStage::Idle;
                v.route = Direction::Local;
            }
        }
    }
}
