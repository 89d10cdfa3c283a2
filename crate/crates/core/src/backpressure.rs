//! Traditional and M-back-pressure over per-destination queues.

use std::sync::Arc;

use crate::net::{
    is_conflict_free, is_maximal, LinkId, NodeId, Schedule, ScheduleBuilder, ScheduleSpace,
    SchedulerKind, Topology,
};
use crate::audit::{AuditLog, Check};
use crate::packet::{Delivery, FifoQueue, Packet};
use crate::traffic::ArrivalBatch;

/// Weight of a link and the commodity (destination) achieving it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkWeight {
    pub weight: i64,
    pub commodity: NodeId,
}

/// w(n→j) = max_d (level(n, d) − level(j, d) − M), ties to the smallest d.
///
/// `level(v, d)` must be zero when `v == d`; the commodity `d == n` is
/// skipped for link (n→j).
pub fn differential_weights_into(
    topology: &Topology,
    m: i64,
    level: impl Fn(NodeId, NodeId) -> i64,
    out: &mut Vec<LinkWeight>,
) {
    let num_nodes = topology.num_nodes();
    out.clear();
    for link in topology.links() {
        let (n, j) = (link.from, link.to);
        let mut best = LinkWeight {
            weight: i64::MIN,
            commodity: usize::MAX,
        };
        for d in (0..num_nodes).filter(|&d| d != n) {
            let w = level(n, d) - level(j, d) - m;
            if w > best.weight {
                best = LinkWeight {
                    weight: w,
                    commodity: d,
                };
            }
        }
        out.push(best);
    }
}

/// Per-(node, destination) FIFO queues, indexed `[node * N + dest]`.
#[derive(Clone, Debug)]
pub struct PerDestQueues {
    num_nodes: usize,
    queues: Vec<FifoQueue>,
}

impl PerDestQueues {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            queues: vec![FifoQueue::new(); num_nodes * num_nodes],
        }
    }

    #[inline]
    pub fn len(&self, node: NodeId, dest: NodeId) -> usize {
        self.queues[node * self.num_nodes + dest].len()
    }

    pub fn queue(&self, node: NodeId, dest: NodeId) -> &FifoQueue {
        &self.queues[node * self.num_nodes + dest]
    }

    pub fn queue_mut(&mut self, node: NodeId, dest: NodeId) -> &mut FifoQueue {
        &mut self.queues[node * self.num_nodes + dest]
    }

    pub fn total(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    pub fn order_violations(&self) -> u64 {
        self.queues.iter().map(FifoQueue::order_violations).sum()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
}

pub fn bp_weights(queues: &PerDestQueues, topology: &Topology, m: i64) -> Vec<LinkWeight> {
    let mut out = Vec::with_capacity(topology.num_links());
    differential_weights_into(topology, m, |v, d| queues.len(v, d) as i64, &mut out);
    out
}

/// What one active link did in a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkDecision {
    pub link: LinkId,
    pub commodity: NodeId,
    pub weight: i64,
    pub moved: u32,
}

/// Applies one slot of queue dynamics.
///
/// Each active link moves min(c, |Q(n, d*)|) packets from Q(n, d*) to
/// Q(j, d*); packets reaching d* leave and are appended to `deliveries`.
/// Forwarded packets and then this slot's external arrivals are appended
/// after all departures, so neither is served before the next slot.
pub fn bp_step(
    queues: &mut PerDestQueues,
    topology: &Topology,
    schedule: &Schedule,
    weights: &[LinkWeight],
    arrivals: &ArrivalBatch,
    deliveries: &mut Vec<Delivery>,
) -> Vec<LinkDecision> {
    let mut staged = Vec::new();
    let decisions = serve(queues, topology, schedule, weights, arrivals.slot, deliveries, &mut staged);
    for (node, packet) in staged {
        queues.queue_mut(node, packet.dest()).push(packet);
    }
    inject(queues, arrivals);
    decisions
}

fn serve(
    queues: &mut PerDestQueues,
    topology: &Topology,
    schedule: &Schedule,
    weights: &[LinkWeight],
    slot: u64,
    deliveries: &mut Vec<Delivery>,
    staged: &mut Vec<(NodeId, Packet)>,
) -> Vec<LinkDecision> {
    let mut decisions = Vec::with_capacity(schedule.len());
    for &e in schedule.elements() {
        let id = LinkId(e);
        let link = topology.link(id);
        let d = weights[e].commodity;
        let queue = queues.queue_mut(link.from, d);
        let mut moved = 0;
        while moved < link.capacity {
            let Some(packet) = queue.pop() else { break };
            moved += 1;
            if link.to == d {
                deliveries.push(Delivery { packet, slot });
            } else {
                staged.push((link.to, packet));
            }
        }
        decisions.push(LinkDecision {
            link: id,
            commodity: d,
            weight: weights[e].weight,
            moved,
        });
    }
    decisions
}

fn inject(queues: &mut PerDestQueues, arrivals: &ArrivalBatch) {
    for a in &arrivals.entries {
        for _ in 0..a.real {
            queues
                .queue_mut(a.source, a.dest)
                .push(Packet::new(a.source, a.dest, arrivals.slot));
        }
    }
}

/// Result of one engine slot, shared by all engines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SlotSummary {
    pub schedule_size: u32,
    pub transmissions: u64,
}

/// Back-pressure engine; `m = 0` is the traditional algorithm.
#[derive(Clone, Debug)]
pub struct BpEngine {
    topology: Arc<Topology>,
    space: Arc<ScheduleSpace>,
    m: i64,
    scheduler: SchedulerKind,
    queues: PerDestQueues,
    weights: Vec<LinkWeight>,
    element_weights: Vec<f64>,
    builder: ScheduleBuilder,
    schedule: Schedule,
    staged: Vec<(NodeId, Packet)>,
    injected: u64,
    delivered: u64,
    audit: Option<AuditLog>,
}

impl BpEngine {
    pub fn new(
        topology: Arc<Topology>,
        space: Arc<ScheduleSpace>,
        m: i64,
        scheduler: SchedulerKind,
    ) -> Self {
        let n = topology.num_nodes();
        Self {
            queues: PerDestQueues::new(n),
            weights: Vec::with_capacity(topology.num_links()),
            element_weights: vec![0.0; space.len()],
            topology,
            space,
            m,
            scheduler,
            builder: ScheduleBuilder::new(),
            schedule: Schedule::default(),
            staged: Vec::new(),
            injected: 0,
            delivered: 0,
            audit: None,
        }
    }

    pub fn with_audit(mut self) -> Self {
        self.audit = Some(AuditLog::default());
        self
    }

    pub fn queues(&self) -> &PerDestQueues {
        &self.queues
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn audit(&self) -> Option<&AuditLog> {
        self.audit.as_ref()
    }

    /// Weights, schedule, service, then arrivals.
    pub fn run_slot(&mut self, arrivals: &ArrivalBatch, deliveries: &mut Vec<Delivery>) -> SlotSummary {
        let queues = &self.queues;
        differential_weights_into(
            &self.topology,
            self.m,
            |v, d| queues.len(v, d) as i64,
            &mut self.weights,
        );
        for (w, lw) in self.element_weights.iter_mut().zip(&self.weights) {
            *w = lw.weight as f64;
        }
        self.builder.build(
            self.scheduler,
            &self.space,
            &self.element_weights,
            &mut self.schedule,
        );
        let before = deliveries.len();
        self.staged.clear();
        let decisions = serve(
            &mut self.queues,
            &self.topology,
            &self.schedule,
            &self.weights,
            arrivals.slot,
            deliveries,
            &mut self.staged,
        );
        for &(node, packet) in &self.staged {
            self.queues.queue_mut(node, packet.dest()).push(packet);
        }
        inject(&mut self.queues, arrivals);
        self.injected += arrivals.real_total();
        self.delivered += (deliveries.len() - before) as u64;
        if self.audit.is_some() {
            self.check(arrivals.slot);
        }
        SlotSummary {
            schedule_size: self.schedule.len() as u32,
            transmissions: decisions.iter().map(|d| u64::from(d.moved)).sum(),
        }
    }

    pub fn queued(&self) -> u64 {
        self.queues.total()
    }

    pub fn injected(&self) -> u64 {
        self.injected
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    fn check(&mut self, slot: u64) {
        let queued = self.queues.total();
        let fifo = self.queues.order_violations();
        let self_queued = (0..self.topology.num_nodes()).any(|n| self.queues.len(n, n) > 0);
        let free = is_conflict_free(&self.space, &self.schedule);
        let weights = &self.element_weights;
        let maximal = self.scheduler != SchedulerKind::Lwf
            || is_maximal(&self.space, &self.schedule, |e| weights[e] > 0.0);
        let log = self.audit.as_mut().unwrap();
        log.expect(
            self.injected == self.delivered + queued,
            Check::Conservation,
            slot,
            "packet conservation",
        );
        log.expect(!self_queued, Check::Negative, slot, "packet queued at its own destination");
        log.expect(fifo == 0, Check::Fifo, slot, "fifo order");
        log.expect(free, Check::Conflicts, slot, "conflicting schedule");
        log.expect(maximal, Check::Maximality, slot, "greedy schedule not maximal");
    }
}
