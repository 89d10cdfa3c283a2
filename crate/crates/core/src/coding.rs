//! XOR coding: broadcast weights, broadcast shadow dynamics and real
//! broadcast service over per-previous-hop state.
//!
//! Point-to-point decisions, routing and token buckets use the generic row
//! machinery in [`crate::shadow`] and [`crate::router`] with a coded
//! [`Layout`]; only the broadcast pieces live here.

use crate::net::{Activation, LinkId, NodeId, Schedule, ScheduleBuilder, ScheduleSpace, SchedulerKind, Topology};
use crate::packet::{FifoQueue, Packet};
use crate::shadow::{
    best_commodity, shadow_transfer, shadow_weights_into, ArcWeights, BroadcastSide, Layout, PpDecision,
    ShadowQueues, ShadowTransfer,
};

/// Decision for a broadcast (n|jl): the commodity served on each side and
/// the side weights whose sum is the broadcast weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BroadcastDecision {
    pub weight: i64,
    pub dests: [NodeId; 2],
    pub side_weights: [i64; 2],
}

/// w_{n|jl} = max_d w^d(l, n, j) + max_d' w^d'(j, n, l).
///
/// The two sides are independent, so the joint maximum over (d, d') is the
/// sum of the per-side maxima.
pub fn coded_broadcast_weight(
    layout: &Layout,
    topology: &Topology,
    p: &ShadowQueues,
    sides: &[BroadcastSide; 2],
    m: i64,
) -> BroadcastDecision {
    let side = |s: &BroadcastSide| {
        let center = topology.link(s.link).from;
        best_commodity(p, s.row, layout.down_row(s.link), center, m)
    };
    let (w0, d0) = side(&sides[0]);
    let (w1, d1) = side(&sides[1]);
    BroadcastDecision {
        weight: w0 + w1,
        dests: [d0, d1],
        side_weights: [w0, w1],
    }
}

pub fn coded_broadcast_weights_into(
    layout: &Layout,
    topology: &Topology,
    p: &ShadowQueues,
    m: i64,
    out: &mut Vec<BroadcastDecision>,
) {
    out.clear();
    out.extend(
        layout
            .broadcast_sides()
            .iter()
            .map(|s| coded_broadcast_weight(layout, topology, p, s, m)),
    );
}

/// Broadcast decisions from cached arc weights.
pub fn broadcast_decisions_into(layout: &Layout, arcs: &ArcWeights, out: &mut Vec<BroadcastDecision>) {
    out.clear();
    out.extend(layout.broadcast_sides().iter().map(|s| {
        let (w0, d0) = arcs.arc(s[0].arc);
        let (w1, d1) = arcs.arc(s[1].arc);
        BroadcastDecision {
            weight: w0 + w1,
            dests: [d0, d1],
            side_weights: [w0, w1],
        }
    }));
}

/// Shadow broadcast service: each side moves up to `capacity` of its own
/// commodity independently. Returns the amounts moved per side.
#[allow(clippy::too_many_arguments)]
pub fn broadcast_shadow_transfer(
    layout: &Layout,
    topology: &Topology,
    p: &mut ShadowQueues,
    sides: &[BroadcastSide; 2],
    decision: &BroadcastDecision,
    capacity: u32,
    staged: &mut Vec<(usize, NodeId, u64)>,
) -> [u64; 2] {
    let mut moved = [0; 2];
    for k in 0..2 {
        moved[k] = shadow_transfer(
            layout,
            topology,
            p,
            sides[k].arc,
            decision.dests[k],
            capacity,
            staged,
        );
    }
    moved
}

/// Weights and shadow schedule over point-to-point and broadcast elements.
pub fn coding_schedule(
    layout: &Layout,
    topology: &Topology,
    space: &ScheduleSpace,
    p: &ShadowQueues,
    m: i64,
    scheduler: SchedulerKind,
) -> (Schedule, Vec<PpDecision>, Vec<BroadcastDecision>) {
    let mut pp = Vec::new();
    let mut bc = Vec::new();
    shadow_weights_into(layout, topology, p, m, &mut pp);
    if !space.broadcasts().is_empty() {
        coded_broadcast_weights_into(layout, topology, p, m, &mut bc);
    }
    let weights: Vec<f64> = pp
        .iter()
        .map(|d| d.weight as f64)
        .chain(bc.iter().map(|d| d.weight as f64))
        .collect();
    let mut schedule = Schedule::default();
    ScheduleBuilder::new().build(scheduler, space, &weights, &mut schedule);
    (schedule, pp, bc)
}

/// One slot of coded shadow dynamics: departures for every scheduled
/// element, staged increments, then external shadow arrivals.
pub fn coded_shadow_step(
    layout: &Layout,
    topology: &Topology,
    space: &ScheduleSpace,
    p: &mut ShadowQueues,
    schedule: &Schedule,
    pp: &[PpDecision],
    bc: &[BroadcastDecision],
    arrivals: impl IntoIterator<Item = (NodeId, NodeId, u64)>,
) -> Vec<ShadowTransfer> {
    let mut staged = Vec::new();
    let mut transfers = Vec::new();
    for &e in schedule.elements() {
        match space.activation(e) {
            Activation::Link(l) => {
                let dec = pp[l.0];
                let amount = shadow_transfer(
                    layout,
                    topology,
                    p,
                    dec.arc,
                    dec.dest,
                    space.capacity(e),
                    &mut staged,
                );
                transfers.push(ShadowTransfer { arc: dec.arc, dest: dec.dest, amount });
            }
            Activation::Broadcast(b) => {
                let sides = &layout.broadcast_sides()[b.0];
                let moved = broadcast_shadow_transfer(
                    layout,
                    topology,
                    p,
                    sides,
                    &bc[b.0],
                    space.capacity(e),
                    &mut staged,
                );
                for k in 0..2 {
                    transfers.push(ShadowTransfer {
                        arc: sides[k].arc,
                        dest: bc[b.0].dests[k],
                        amount: moved[k],
                    });
                }
            }
        }
    }
    for (row, d, k) in staged {
        p.add(row, d, k);
    }
    for (src, dst, k) in arrivals {
        p.add(layout.external_row(src), dst, k);
    }
    transfers
}

/// Real packets moved by one broadcast activation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BroadcastService {
    /// XOR-coded pairs, one transmission each.
    pub pairs: u32,
    /// Uncoded transmissions from the nonempty side with leftover capacity.
    pub singles: u32,
}

impl BroadcastService {
    pub fn transmissions(&self) -> u32 {
        self.pairs + self.singles
    }
}

/// Serves a broadcast from the two side queues. Each pair takes the head of
/// both queues; capacity left when one side runs dry serves the other side
/// point-to-point. Moved packets are appended to `out` with their link.
pub fn serve_broadcast(
    queues: &mut [FifoQueue],
    sides: &[BroadcastSide; 2],
    capacity: u32,
    out: &mut Vec<(LinkId, Packet)>,
) -> BroadcastService {
    let (a, b) = (sides[0].arc, sides[1].arc);
    let pairs = (queues[a].len().min(queues[b].len()) as u32).min(capacity);
    for _ in 0..pairs {
        out.push((sides[0].link, queues[a].pop().unwrap()));
        out.push((sides[1].link, queues[b].pop().unwrap()));
    }
    let mut singles = 0;
    for side in sides {
        while pairs + singles < capacity {
            let Some(packet) = queues[side.arc].pop() else { break };
            out.push((side.link, packet));
            singles += 1;
        }
    }
    BroadcastService { pairs, singles }
}
