//! The mesh: routers, links, network interfaces and the cycle loop.

use std::collections::VecDeque;

use thiserror::Error;

use crate::policy::{PolicyConfig, PolicyError};
use crate::rng::{stream_rng, Purpose};
use crate::router::{
    Ctx, Flit, FlitKind, Links, Router, RouterConfig, RouterError, Sideband, TraceEvent,
};
use crate::stats::{Census, Delivery, EventCounters};
use crate::topology::{vc_class_for, Direction, MeshConfig, NodeId, TopologyError, VcClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("packet from {0} to itself")]
    SelfAddressed(NodeId),
    #[error("packets need at least one flit")]
    EmptyPacket,
    #[error("credit imbalance on link {node}->{dir} vc {vc}: {total} != {depth}")]
    CreditImbalance {
        node: NodeId,
        dir: Direction,
        vc: usize,
        total: usize,
        depth: usize,
    },
}

#[derive(Debug, Clone)]
struct PacketDesc {
    id: u64,
    src: NodeId,
    dst: NodeId,
    len: usize,
    class: VcClass,
    gen_cycle: u64,
}

/// Streams packets from a source queue into the local input port, one
/// flit per cycle.
#[derive(Debug, Clone, Default)]
struct Interface {
    queue: VecDeque<PacketDesc>,
    current: Option<(PacketDesc, usize, usize, u64)>,
}

pub struct Network {
    mesh: MeshConfig,
    rcfg: RouterConfig,
    policy: PolicyConfig,
    routers: Vec<Router>,
    links: Links,
    nis: Vec<Interface>,
    cycle: u64,
    counters: EventCounters,
    deliveries: Vec<Delivery>,
    flits_ejected: u64,
    next_pkt: u64,
    enqueued: u64,
    entered: u64,
    delivered: u64,
    trace: Option<Vec<TraceEvent>>,
    scratch: Vec<(NodeId, Direction, crate::policy::LearningPacket)>,
}

impl Network {
    pub fn new(
        mesh: MeshConfig,
        rcfg: RouterConfig,
        policy: PolicyConfig,
        seed: u64,
    ) -> Result<Network, NetworkError> {
        mesh.validate()?;
        rcfg.validate()?;
        policy.validate()?;
        let routers = (0..mesh.nodes())
            .map(|id| {
                let explore =
                    (policy.epsilon > 0.0).then(|| stream_rng(seed, id, Purpose::Exploration));
                Router::new(id, &mesh, &rcfg, &policy, explore)
            })
            .collect();
        Ok(Network {
            links: Links::new(mesh.nodes()),
            nis: vec![Interface::default(); mesh.nodes()],
            mesh,
            rcfg,
            policy,
            routers,
            cycle: 0,
            counters: EventCounters::default(),
            deliveries: Vec::new(),
            flits_ejected: 0,
            next_pkt: 0,
            enqueued: 0,
            entered: 0,
            delivered: 0,
            trace: None,
            scratch: Vec::new(),
        })
    }

    pub fn mesh(&self) -> &MeshConfig {
        &self.mesh
    }

    pub fn policy(&self) -> &PolicyConfig {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut PolicyConfig {
        &mut self.policy
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn router(&self, id: NodeId) -> &Router {
        &self.routers[id]
    }

    pub fn router_mut(&mut self, id: NodeId) -> &mut Router {
        &mut self.routers[id]
    }

    pub fn routers(&self) -> &[Router] {
        &self.routers
    }

    pub fn counters(&self) -> &EventCounters {
        &self.counters
    }

    /// Flits consumed at their destinations so far.
    pub fn flits_ejected(&self) -> u64 {
        self.flits_ejected
    }

    /// Packets handed to the source queues so far.
    pub fn enqueued(&self) -> u64 {
        self.enqueued
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Packets whose head entered the network but whose tail has not left.
    pub fn in_network(&self) -> u64 {
        self.entered - self.delivered
    }

    pub fn take_deliveries(&mut self) -> Vec<Delivery> {
        std::mem::take(&mut self.deliveries)
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Queues a packet at `src`; its head enters the network no earlier
    /// than the current cycle. Returns the packet id.
    pub fn enqueue_packet(
        &mut self,
        src: NodeId,
        dst: NodeId,
        len: usize,
    ) -> Result<u64, NetworkError> {
        let a = self.mesh.id_to_coord(src)?;
        let b = self.mesh.id_to_coord(dst)?;
        if src == dst {
            return Err(NetworkError::SelfAddressed(src));
        }
        if len == 0 {
            return Err(NetworkError::EmptyPacket);
        }
        let id = self.next_pkt;
        self.next_pkt += 1;
        self.enqueued += 1;
        self.nis[src].queue.push_back(PacketDesc {
            id,
            src,
            dst,
            len,
            class: vc_class_for(a, b, id),
            gen_cycle: self.cycle,
        });
        Ok(id)
    }

    /// Advances one cycle: learning delivery, credit delivery, flit
    /// delivery, router pipelines, then injection.
    pub fn step(&mut self) {
        let cycle = self.cycle;
        let mut ctx = Ctx {
            cycle,
            policy: &self.policy,
            links: &mut self.links,
            counters: &mut self.counters,
            deliveries: &mut self.deliveries,
            flits_ejected: &mut self.flits_ejected,
            trace: self.trace.as_mut(),
        };

        self.scratch.clear();
        for r in self.routers.iter_mut() {
            for d in Direction::MESH {
                if let Some(lp) = r.pop_learning(d, cycle) {
                    let target = r.neighbor(d).expect("learning queues face neighbors");
                    self.scratch.push((target, d.opposite(), lp));
                }
            }
        }
        ctx.counters.learning_flits += self.scratch.len() as u64;
        for (target, from, lp) in &self.scratch {
            self.routers[*target].apply_learning(lp, *from, &mut ctx);
        }

        for (i, r) in self.routers.iter_mut().enumerate() {
            for d in Direction::MESH {
                let q = &mut ctx.links.credits[i * 5 + d.ordinal()];
                while q.front().is_some_and(|(t, _)| *t <= cycle) {
                    let (_, c) = q.pop_front().expect("front exists");
                    r.accept_credit(d, c);
                }
            }
        }

        let before = ctx.deliveries.len();
        for i in 0..self.routers.len() {
            for d in Direction::MESH {
                let slot = i * 5 + d.ordinal();
                while ctx.links.flits[slot]
                    .front()
                    .is_some_and(|(t, _)| *t <= cycle)
                {
                    let (_, flit) = ctx.links.flits[slot].pop_front().expect("front exists");
                    self.routers[i].accept(d, flit, &mut ctx);
                }
            }
        }

        for r in self.routers.iter_mut() {
            r.tick(&mut ctx);
        }

        for (i, ni) in self.nis.iter_mut().enumerate() {
            let router = &mut self.routers[i];
            if ni.current.is_none() {
                if let Some(class) = ni.queue.front().map(|p| p.class) {
                    if let Some(vc) = router.free_injection_vc(class) {
                        let p = ni.queue.pop_front().expect("front exists");
                        ni.current = Some((p, 0, vc, cycle));
                        self.entered += 1;
                    }
                }
            }
            let Some((p, seq, vc, entry)) = ni.current.as_mut() else {
                continue;
            };
            if !router.injection_room(*vc) {
                continue;
            }
            let kind = FlitKind::for_position(*seq, p.len);
            let flit = Flit {
                pkt_id: p.id,
                kind,
                src: p.src,
                dst: p.dst,
                class: p.class,
                len: p.len,
                vc: *vc,
                hops: 0,
                gen_cycle: p.gen_cycle,
                entry_cycle: *entry,
                side: Sideband::default(),
            };
            router.inject(*vc, flit, &mut ctx);
            *seq += 1;
            if kind.is_tail() {
                ni.current = None;
            }
        }

        self.delivered += (ctx.deliveries.len() - before) as u64;
        self.cycle += 1;
    }

    pub fn run(&mut self, cycles: u64) {
        for _ in 0..cycles {
            self.step();
        }
    }

    /// Nothing queued, in flight or pending, learning traffic included.
    pub fn is_idle(&self) -> bool {
        self.nis
            .iter()
            .all(|n| n.queue.is_empty() && n.current.is_none())
            && self.entered == self.delivered
            && self.links.flits.iter().all(|q| q.is_empty())
            && self.links.credits.iter().all(|q| q.is_empty())
            && self.routers.iter().all(|r| {
                Direction::MESH
                    .iter()
                    .all(|&d| r.learning_queue(d).is_empty())
            })
    }

    /// Steps until idle or until `max_cycles` more cycles have run. Returns
    /// whether the network went idle.
    pub fn run_until_idle(&mut self, max_cycles: u64) -> bool {
        let stop = self.cycle + max_cycles;
        while !self.is_idle() {
            if self.cycle >= stop {
                return false;
            }
            self.step();
        }
        true
    }

    pub fn census(&self) -> Census {
        let queued: u64 = self.nis.iter().map(|n| n.queue.len() as u64).sum();
        let mut oldest = self
            .nis
            .iter()
            .filter_map(|n| n.current.as_ref().map(|c| c.3))
            .min();
        for q in &self.links.flits {
            for (_, f) in q {
                oldest = Some(oldest.map_or(f.entry_cycle, |o| o.min(f.entry_cycle)));
            }
        }
        Census {
            cycle: self.cycle,
            queued_at_source: queued,
            in_network: self.in_network(),
            busy_vcs: self.routers.iter().map(|r| r.busy_vcs() as u64).sum(),
            flits_on_links: self.links.flits.iter().map(|q| q.len() as u64).sum(),
            learning_queued: self
                .routers
                .iter()
                .map(|r| {
                    Direction::MESH
                        .iter()
                        .map(|&d| r.learning_queue(d).len() as u64)
                        .sum::<u64>()
                })
                .sum(),
            oldest_entry: oldest,
        }
    }

    /// Checks, for every link and VC, that the sender's credits plus flits
    /// on the wire plus credits on the way back plus the receiver's buffer
    /// occupancy equal the buffer depth.
    pub fn check_credit_conservation(&self) -> Result<(), NetworkError> {
        let depth = self.rcfg.buffer_depth;
        for (u, r) in self.routers.iter().enumerate() {
            for d in Direction::MESH {
                let Some(v) = r.neighbor(d) else {
                    continue;
                };
                let back = d.opposite();
                for vc in 0..self.rcfg.vcs_per_port {
                    let wire = self.links.flits[v * 5 + back.ordinal()]
                        .iter()
                        .filter(|(_, f)| f.vc == vc)
                        .count();
                    let returning = self.links.credits[u * 5 + d.ordinal()]
                        .iter()
                        .filter(|(_, c)| c.vc == vc)
                        .count();
                    let total = r.credits(d, vc) as usize
                        + wire
                        + returning
                        + self.routers[v].occupancy(back, vc);
                    if total != depth {
                        return Err(NetworkError::CreditImbalance {
                            node: u,
                            dir: d,
                            vc,
                            total,
                            depth,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}
