//! Routing of real packets into per-arc FIFO queues and the PARN engine.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::{AuditLog, Check};
use crate::backpressure::SlotSummary;
use crate::coding::{broadcast_decisions_into, broadcast_shadow_transfer, serve_broadcast, BroadcastDecision};
use crate::net::{
    is_conflict_free, is_maximal, Activation, LinkId, NodeId, Schedule, ScheduleBuilder, ScheduleSpace,
    SchedulerKind, Topology,
};
use crate::packet::{Delivery, FifoQueue, Packet};
use crate::shadow::{shadow_transfer, ArcWeights, Layout, PpDecision, ShadowQueues};
use crate::traffic::ArrivalBatch;

/// σ̂ ← (1 − β) σ̂ + β σ.
#[inline]
pub fn update_sigma_hat(prev: f64, sigma: f64, beta: f64) -> f64 {
    (1.0 - beta) * prev + beta * sigma
}

/// Exponentially averaged shadow transfer rates per (arc, destination).
///
/// Every entry decays each update while only a few receive new transfers,
/// so the decay is kept as one global scale factor and entries are stored
/// divided by it.
#[derive(Clone, Debug)]
pub struct SigmaEstimate {
    num_nodes: usize,
    beta: f64,
    stride: u32,
    phase: u32,
    scale: f64,
    values: Vec<f64>,
    pending: Vec<u64>,
    touched: Vec<usize>,
    frozen: bool,
}

impl SigmaEstimate {
    pub fn new(num_arcs: usize, num_nodes: usize, beta: f64, stride: u32) -> Self {
        Self {
            num_nodes,
            beta,
            stride: stride.max(1),
            phase: 0,
            scale: 1.0,
            values: vec![0.0; num_arcs * num_nodes],
            pending: vec![0; num_arcs * num_nodes],
            touched: Vec::new(),
            frozen: false,
        }
    }

    /// Adds σ for the current slot.
    #[inline]
    pub fn record(&mut self, arc: usize, dest: NodeId, amount: u64) {
        let i = arc * self.num_nodes + dest;
        if self.pending[i] == 0 {
            self.touched.push(i);
        }
        self.pending[i] += amount;
    }

    /// Closes a slot. Every `stride` slots the estimate is updated with the
    /// mean σ over the stride.
    pub fn end_slot(&mut self) {
        self.phase += 1;
        if self.phase < self.stride {
            return;
        }
        self.phase = 0;
        if self.frozen {
            for &i in &self.touched {
                self.pending[i] = 0;
            }
            self.touched.clear();
            return;
        }
        self.scale *= 1.0 - self.beta;
        let gain = self.beta / (f64::from(self.stride) * self.scale);
        for &i in &self.touched {
            self.values[i] += gain * self.pending[i] as f64;
            self.pending[i] = 0;
        }
        self.touched.clear();
        if self.scale < 1e-150 {
            for v in &mut self.values {
                *v *= self.scale;
            }
            self.scale = 1.0;
        }
    }

    #[inline]
    pub fn get(&self, arc: usize, dest: NodeId) -> f64 {
        self.values[arc * self.num_nodes + dest] * self.scale
    }

    /// Entry up to the common scale factor; only ratios are meaningful.
    #[inline]
    fn relative(&self, arc: usize, dest: NodeId) -> f64 {
        self.values[arc * self.num_nodes + dest]
    }

    /// Stops further updates, keeping the current estimate.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// P(arc) ∝ σ̂(arc, d) over `arcs`, uniform when every σ̂ is zero.
pub fn splitting_probabilities(sigma: &SigmaEstimate, arcs: Range<usize>, dest: NodeId) -> Vec<f64> {
    let total: f64 = arcs.clone().map(|a| sigma.relative(a, dest)).sum();
    let k = arcs.len() as f64;
    arcs.map(|a| {
        if total > 0.0 {
            sigma.relative(a, dest) / total
        } else {
            1.0 / k
        }
    })
    .collect()
}

/// Samples an arc from the splitting probabilities.
pub fn route_probabilistic<R: Rng + ?Sized>(
    sigma: &SigmaEstimate,
    arcs: Range<usize>,
    dest: NodeId,
    rng: &mut R,
) -> usize {
    debug_assert!(!arcs.is_empty());
    let total: f64 = arcs.clone().map(|a| sigma.relative(a, dest)).sum();
    if total <= 0.0 {
        return arcs.start + rng.gen_range(0..arcs.len());
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = arcs.start;
    for a in arcs {
        let w = sigma.relative(a, dest);
        if w > 0.0 {
            acc += w;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

/// Default bucket cap: ceil(10 / ε), or 1000 when ε = 0.
pub fn default_bucket_cap(epsilon: f64) -> u32 {
    if epsilon > 0.0 {
        (10.0 / epsilon).ceil().min(f64::from(u32::MAX)) as u32
    } else {
        1000
    }
}

/// Token counts r(arc, d) in [0, cap].
#[derive(Clone, Debug)]
pub struct TokenBuckets {
    num_nodes: usize,
    cap: u32,
    tokens: Vec<u32>,
    saturations: u64,
    wasted: u64,
}

impl TokenBuckets {
    pub fn new(num_arcs: usize, num_nodes: usize, cap: u32) -> Self {
        Self {
            num_nodes,
            cap,
            tokens: vec![0; num_arcs * num_nodes],
            saturations: 0,
            wasted: 0,
        }
    }

    #[inline]
    pub fn get(&self, arc: usize, dest: NodeId) -> u32 {
        self.tokens[arc * self.num_nodes + dest]
    }

    pub fn set(&mut self, arc: usize, dest: NodeId, value: u32) {
        self.tokens[arc * self.num_nodes + dest] = value.min(self.cap);
    }

    /// Picks the arc with fewest tokens (first among equals) and adds a
    /// token to it, recording a saturation event when the cap bites.
    pub fn route(&mut self, arcs: Range<usize>, dest: NodeId) -> usize {
        debug_assert!(!arcs.is_empty());
        let n = self.num_nodes;
        let best = arcs
            .min_by_key(|&a| self.tokens[a * n + dest])
            .expect("node without outgoing links");
        let t = &mut self.tokens[best * n + dest];
        if *t >= self.cap {
            self.saturations += 1;
        } else {
            *t += 1;
        }
        best
    }

    /// r ← max(r − σ, 0); the shortfall counts as wasted tokens.
    pub fn drain(&mut self, arc: usize, dest: NodeId, sigma: u64) {
        let t = &mut self.tokens[arc * self.num_nodes + dest];
        let have = u64::from(*t);
        if sigma > have {
            self.wasted += sigma - have;
            *t = 0;
        } else {
            *t = (have - sigma) as u32;
        }
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn max_tokens(&self) -> u32 {
        self.tokens.iter().copied().max().unwrap_or(0)
    }

    pub fn saturations(&self) -> u64 {
        self.saturations
    }

    pub fn wasted(&self) -> u64 {
        self.wasted
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouterKind {
    #[default]
    Probabilistic,
    Token,
}

#[derive(Clone, Debug)]
enum Table {
    Probabilistic(SigmaEstimate),
    Token(TokenBuckets),
}

/// Routing state of one run: the active table and its random stream.
#[derive(Clone, Debug)]
pub struct Router {
    table: Table,
    rng: ChaCha8Rng,
}

impl Router {
    pub fn probabilistic(sigma: SigmaEstimate, seed: u64) -> Self {
        Self {
            table: Table::Probabilistic(sigma),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn token(buckets: TokenBuckets, seed: u64) -> Self {
        Self {
            table: Table::Token(buckets),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn kind(&self) -> RouterKind {
        match self.table {
            Table::Probabilistic(_) => RouterKind::Probabilistic,
            Table::Token(_) => RouterKind::Token,
        }
    }

    #[inline]
    pub fn choose(&mut self, arcs: Range<usize>, dest: NodeId) -> usize {
        match &mut self.table {
            Table::Probabilistic(s) => route_probabilistic(s, arcs, dest, &mut self.rng),
            Table::Token(t) => t.route(arcs, dest),
        }
    }

    /// Feeds one slot's shadow transfers to the table.
    #[inline]
    pub fn observe(&mut self, arc: usize, dest: NodeId, amount: u64) {
        match &mut self.table {
            Table::Probabilistic(s) => s.record(arc, dest, amount),
            Table::Token(t) => t.drain(arc, dest, amount),
        }
    }

    pub fn end_slot(&mut self) {
        if let Table::Probabilistic(s) = &mut self.table {
            s.end_slot();
        }
    }

    pub fn sigma(&self) -> Option<&SigmaEstimate> {
        match &self.table {
            Table::Probabilistic(s) => Some(s),
            Table::Token(_) => None,
        }
    }

    pub fn tokens(&self) -> Option<&TokenBuckets> {
        match &self.table {
            Table::Token(t) => Some(t),
            Table::Probabilistic(_) => None,
        }
    }

    pub fn freeze(&mut self) {
        if let Table::Probabilistic(s) = &mut self.table {
            s.freeze();
        }
    }
}

/// Serves a point-to-point activation of `link`: first from `first` (the
/// shadow decision's arc, if any), then any capacity left from the link's
/// other arcs, longest first. Moved packets are appended to `out`.
pub fn serve_link(
    queues: &mut [FifoQueue],
    layout: &Layout,
    link: LinkId,
    capacity: u32,
    first: Option<usize>,
    out: &mut Vec<(LinkId, Packet)>,
) -> u32 {
    let mut moved = 0;
    if let Some(a) = first {
        while moved < capacity {
            let Some(p) = queues[a].pop() else { break };
            out.push((link, p));
            moved += 1;
        }
    }
    let arcs = layout.arcs_of_link(link);
    while moved < capacity {
        let Some(&a) = arcs
            .iter()
            .filter(|&&a| !queues[a].is_empty())
            .max_by(|&&a, &&b| queues[a].len().cmp(&queues[b].len()).then(b.cmp(&a)))
        else {
            break;
        };
        out.push((link, queues[a].pop().unwrap()));
        moved += 1;
    }
    moved
}

/// Rates measured over a statistics window, for the stability oracle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateCounters {
    pub num_nodes: usize,
    pub slots: u64,
    /// Per link: slots in which it transmitted (alone or in a broadcast).
    pub link_active: Vec<u64>,
    /// Per link: real packets entering its queues.
    pub link_arrivals: Vec<u64>,
    /// Per (arc, dest): real packets entering the arc's queue.
    pub arc_arrivals: Vec<u64>,
    /// Per (arc, dest): shadow packets moved over the arc.
    pub arc_sigma: Vec<u64>,
    pub arc_link: Vec<usize>,
    pub link_capacity: Vec<u32>,
}

impl RateCounters {
    pub fn new(layout: &Layout, topology: &Topology) -> Self {
        let a = layout.num_arcs();
        let n = layout.num_nodes();
        Self {
            num_nodes: n,
            slots: 0,
            link_active: vec![0; topology.num_links()],
            link_arrivals: vec![0; topology.num_links()],
            arc_arrivals: vec![0; a * n],
            arc_sigma: vec![0; a * n],
            arc_link: (0..a).map(|x| layout.arc_link(x).0).collect(),
            link_capacity: topology.links().iter().map(|l| l.capacity).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParnParams {
    pub m: i64,
    pub epsilon: f64,
    pub beta: f64,
    pub sigma_stride: u32,
    pub router: RouterKind,
    pub extra_activation: bool,
    pub bucket_cap: u32,
    pub scheduler: SchedulerKind,
}

impl Default for ParnParams {
    fn default() -> Self {
        Self {
            m: 2,
            epsilon: 0.1,
            beta: 0.02,
            sigma_stride: 1,
            router: RouterKind::Probabilistic,
            extra_activation: true,
            bucket_cap: default_bucket_cap(0.1),
            scheduler: SchedulerKind::Lwf,
        }
    }
}

/// Shadow-queue scheduling with routed real FIFO queues. Works on an
/// uncoded layout (plain PARN) or a coded one, where broadcast elements in
/// the schedule space enable XOR coding.
#[derive(Clone, Debug)]
pub struct ParnEngine {
    topology: Arc<Topology>,
    space: Arc<ScheduleSpace>,
    layout: Arc<Layout>,
    params: ParnParams,
    shadow: ShadowQueues,
    arc_weights: ArcWeights,
    pp: Vec<PpDecision>,
    bc: Vec<BroadcastDecision>,
    weights: Vec<f64>,
    builder: ScheduleBuilder,
    shadow_schedule: Schedule,
    active: Schedule,
    backlogs: Vec<u64>,
    staged: Vec<(usize, NodeId, u64)>,
    transfers: Vec<(usize, NodeId, u64)>,
    moved: Vec<(LinkId, Packet)>,
    router: Router,
    queues: Vec<FifoQueue>,
    injected: u64,
    delivered: u64,
    shadow_in: u64,
    shadow_out: u64,
    pairs: u64,
    window: Option<RateCounters>,
    audit: Option<AuditLog>,
}

impl ParnEngine {
    pub fn new(
        topology: Arc<Topology>,
        space: Arc<ScheduleSpace>,
        layout: Arc<Layout>,
        params: ParnParams,
        route_seed: u64,
    ) -> Self {
        assert!(
            space.broadcasts().is_empty() || space.broadcasts().len() == layout.broadcast_sides().len(),
            "broadcast elements need a coded layout"
        );
        let n = topology.num_nodes();
        let arcs = layout.num_arcs();
        let router = match params.router {
            RouterKind::Probabilistic => Router::probabilistic(
                SigmaEstimate::new(arcs, n, params.beta, params.sigma_stride),
                route_seed,
            ),
            RouterKind::Token => Router::token(TokenBuckets::new(arcs, n, params.bucket_cap), route_seed),
        };
        Self {
            shadow: ShadowQueues::new(&layout),
            arc_weights: ArcWeights::new(&layout, &topology, params.m),
            pp: Vec::with_capacity(topology.num_links()),
            bc: Vec::new(),
            weights: vec![0.0; space.len()],
            builder: ScheduleBuilder::new(),
            shadow_schedule: Schedule::default(),
            active: Schedule::default(),
            backlogs: vec![0; topology.num_links()],
            staged: Vec::new(),
            transfers: Vec::new(),
            moved: Vec::new(),
            router,
            queues: vec![FifoQueue::new(); arcs],
            injected: 0,
            delivered: 0,
            shadow_in: 0,
            shadow_out: 0,
            pairs: 0,
            window: None,
            audit: None,
            topology,
            space,
            layout,
            params,
        }
    }

    pub fn with_audit(mut self) -> Self {
        self.audit = Some(AuditLog::default());
        self
    }

    pub fn audit(&self) -> Option<&AuditLog> {
        self.audit.as_ref()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &ParnParams {
        &self.params
    }

    pub fn shadow(&self) -> &ShadowQueues {
        &self.shadow
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn queue(&self, arc: usize) -> &FifoQueue {
        &self.queues[arc]
    }

    pub fn shadow_schedule(&self) -> &Schedule {
        &self.shadow_schedule
    }

    pub fn active_schedule(&self) -> &Schedule {
        &self.active
    }

    pub fn queued(&self) -> u64 {
        self.injected - self.delivered
    }

    pub fn injected(&self) -> u64 {
        self.injected
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Coded pairs sent since the start of the run.
    pub fn coded_pairs(&self) -> u64 {
        self.pairs
    }

    /// Starts (or restarts) collecting rate statistics.
    pub fn begin_window(&mut self) {
        self.window = Some(RateCounters::new(&self.layout, &self.topology));
    }

    pub fn window(&self) -> Option<&RateCounters> {
        self.window.as_ref()
    }

    pub fn freeze_routing(&mut self) {
        self.router.freeze();
    }

    pub fn run_slot(&mut self, arrivals: &ArrivalBatch, deliveries: &mut Vec<Delivery>) -> SlotSummary {
        let slot = arrivals.slot;
        let num_links = self.topology.num_links();

        // Weights from start-of-slot shadow counters.
        self.arc_weights.refresh(&self.layout, &self.topology, &mut self.shadow);
        self.arc_weights.link_decisions_into(&mut self.pp);
        if !self.space.broadcasts().is_empty() {
            broadcast_decisions_into(&self.layout, &self.arc_weights, &mut self.bc);
        }
        for (w, d) in self.weights.iter_mut().zip(&self.pp) {
            *w = d.weight as f64;
        }
        for (w, d) in self.weights[num_links..].iter_mut().zip(&self.bc) {
            *w = d.weight as f64;
        }

        // Shadow schedule, then extra activation by real backlog.
        self.builder
            .build(self.params.scheduler, &self.space, &self.weights, &mut self.shadow_schedule);
        self.active.clone_from(&self.shadow_schedule);
        if self.params.extra_activation {
            for (l, b) in self.backlogs.iter_mut().enumerate() {
                *b = self
                    .layout
                    .arcs_of_link(LinkId(l))
                    .iter()
                    .map(|&a| self.queues[a].len() as u64)
                    .sum();
            }
            self.builder
                .extend_maximal(&self.space, &self.backlogs, &mut self.active);
        }

        // Shadow departures on shadow-scheduled elements only.
        self.staged.clear();
        self.transfers.clear();
        for &e in self.shadow_schedule.elements() {
            match self.space.activation(e) {
                Activation::Link(l) => {
                    let dec = self.pp[l.0];
                    let moved = shadow_transfer(
                        &self.layout,
                        &self.topology,
                        &mut self.shadow,
                        dec.arc,
                        dec.dest,
                        self.space.capacity(e),
                        &mut self.staged,
                    );
                    if moved > 0 {
                        self.transfers.push((dec.arc, dec.dest, moved));
                    }
                }
                Activation::Broadcast(b) => {
                    let sides = &self.layout.broadcast_sides()[b.0];
                    let dec = self.bc[b.0];
                    let moved = broadcast_shadow_transfer(
                        &self.layout,
                        &self.topology,
                        &mut self.shadow,
                        sides,
                        &dec,
                        self.space.capacity(e),
                        &mut self.staged,
                    );
                    for k in 0..2 {
                        if moved[k] > 0 {
                            self.transfers.push((sides[k].arc, dec.dests[k], moved[k]));
                        }
                    }
                }
            }
        }
        for &(row, d, k) in &self.staged {
            self.shadow.add(row, d, k);
        }
        for &(arc, d, k) in &self.transfers {
            if self.topology.link(self.layout.arc_link(arc)).to == d {
                self.shadow_out += k;
            }
        }

        // Real FIFO service on the active schedule.
        self.moved.clear();
        let mut transmissions = 0u64;
        let shadow_len = self.shadow_schedule.len();
        for (i, &e) in self.active.elements().iter().enumerate() {
            match self.space.activation(e) {
                Activation::Link(l) => {
                    let first = (i < shadow_len).then(|| self.pp[l.0].arc);
                    let cap = self.space.capacity(e);
                    transmissions += u64::from(serve_link(&mut self.queues, &self.layout, l, cap, first, &mut self.moved));
                    if let Some(w) = &mut self.window {
                        w.link_active[l.0] += 1;
                    }
                }
                Activation::Broadcast(b) => {
                    let sides = &self.layout.broadcast_sides()[b.0];
                    let s = serve_broadcast(&mut self.queues, sides, self.space.capacity(e), &mut self.moved);
                    transmissions += u64::from(s.transmissions());
                    self.pairs += u64::from(s.pairs);
                    if let Some(w) = &mut self.window {
                        w.link_active[sides[0].link.0] += 1;
                        w.link_active[sides[1].link.0] += 1;
                    }
                }
            }
        }
        // Relayed packets are routed at the receiver once all service is done.
        for i in 0..self.moved.len() {
            let (link, packet) = self.moved[i];
            if self.topology.link(link).to == packet.dest() {
                deliveries.push(Delivery { packet, slot });
                self.delivered += 1;
            } else {
                self.route(self.layout.down_row(link), packet);
            }
        }

        // Routing tables learn from this slot's shadow transfers.
        for &(arc, d, k) in &self.transfers {
            self.router.observe(arc, d, k);
            if let Some(w) = &mut self.window {
                w.arc_sigma[arc * w.num_nodes + d] += k;
            }
        }
        self.router.end_slot();

        // Arrivals, eligible from the next slot.
        for a in &arrivals.entries {
            let row = self.layout.external_row(a.source);
            self.shadow.add(row, a.dest, u64::from(a.shadow));
            self.shadow_in += u64::from(a.shadow);
            for _ in 0..a.real {
                self.route(row, Packet::new(a.source, a.dest, slot));
                self.injected += 1;
            }
        }
        if let Some(w) = &mut self.window {
            w.slots += 1;
        }
        if self.audit.is_some() {
            self.check(slot);
        }
        SlotSummary {
            schedule_size: self.active.len() as u32,
            transmissions,
        }
    }

    fn route(&mut self, row: usize, packet: Packet) {
        let d = packet.dest();
        let arc = self.router.choose(self.layout.arcs_of_row(row), d);
        self.queues[arc].push(packet);
        if let Some(w) = &mut self.window {
            w.arc_arrivals[arc * w.num_nodes + d] += 1;
            w.link_arrivals[self.layout.arc_link(arc).0] += 1;
        }
    }

    fn check(&mut self, slot: u64) {
        let queued: u64 = self.queues.iter().map(|q| q.len() as u64).sum();
        let fifo: u64 = self.queues.iter().map(FifoQueue::order_violations).sum();
        let self_held = (0..self.layout.num_rows())
            .any(|r| self.shadow.get(r, self.layout.row_node(r)) > 0);
        let misplaced = self
            .queues
            .iter()
            .enumerate()
            .any(|(a, q)| {
                let node = self.layout.row_node(self.layout.arc_row(a));
                q.iter().any(|p| p.dest() == node)
            });
        let tokens_ok = self
            .router
            .tokens()
            .is_none_or(|t| t.max_tokens() <= t.cap());
        let free = is_conflict_free(&self.space, &self.active);
        let maximal = if self.params.extra_activation {
            is_maximal(&self.space, &self.active, |e| e < self.space.num_links())
        } else if self.params.scheduler == SchedulerKind::Lwf {
            let w = &self.weights;
            is_maximal(&self.space, &self.shadow_schedule, |e| w[e] > 0.0)
        } else {
            true
        };
        let shadow_total = self.shadow.total();
        let log = self.audit.as_mut().unwrap();
        log.expect(
            self.injected == self.delivered + queued,
            Check::Conservation,
            slot,
            "real packet conservation",
        );
        log.expect(
            self.shadow_in == self.shadow_out + shadow_total,
            Check::Conservation,
            slot,
            "shadow conservation",
        );
        log.expect(!self_held, Check::Negative, slot, "shadow counter at its destination");
        log.expect(!misplaced, Check::Negative, slot, "packet queued at its destination");
        log.expect(fifo == 0, Check::Fifo, slot, "fifo order");
        log.expect(tokens_ok, Check::TokenBounds, slot, "token bucket above cap");
        log.expect(free, Check::Conflicts, slot, "conflicting schedule");
        log.expect(maximal, Check::Maximality, slot, "schedule not maximal");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{InterferenceKind, InterferenceModel, Link};
    use crate::traffic::{ArrivalEntry, ArrivalProcess, Flow};

    fn topo(n: usize, edges: &[(usize, usize)]) -> Arc<Topology> {
        let links = edges
            .iter()
            .flat_map(|&(a, b)| [Link { from: a, to: b, capacity: 1 }, Link { from: b, to: a, capacity: 1 }])
            .collect();
        Arc::new(Topology::new(n, links).unwrap())
    }

    fn engine(t: &Arc<Topology>, kind: InterferenceKind, coded: bool, params: ParnParams) -> ParnEngine {
        let model = InterferenceModel::new(t, kind).unwrap();
        let (space, layout) = if coded {
            (ScheduleSpace::with_broadcasts(t, &model), Layout::coded(t))
        } else {
            (ScheduleSpace::point_to_point(t, &model), Layout::uncoded(t))
        };
        ParnEngine::new(t.clone(), Arc::new(space), Arc::new(layout), params, 7).with_audit()
    }

    #[test]
    fn sigma_examples() {
        assert!((update_sigma_hat(1.0, 0.0, 0.02) - 0.98).abs() < 1e-15);
        assert!((update_sigma_hat(0.0, 5.0, 0.02) - 0.1).abs() < 1e-15);
        let mut x = 0.0;
        for _ in 0..2000 {
            x = update_sigma_hat(x, 3.0, 0.02);
        }
        assert!((x - 3.0).abs() < 1e-12);
    }

    /// Lazy scaling against a dense update of every entry every slot.
    #[test]
    fn lazy_sigma_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lazy = SigmaEstimate::new(4, 3, 0.3, 1);
        let mut dense = [0.0; 12];
        for _ in 0..5000 {
            let mut sigma = [0u64; 12];
            for s in sigma.iter_mut() {
                if rng.gen::<f64>() < 0.05 {
                    *s = rng.gen_range(1..3);
                }
            }
            for (i, &s) in sigma.iter().enumerate() {
                if s > 0 {
                    lazy.record(i / 3, i % 3, s);
                }
                dense[i] = update_sigma_hat(dense[i], s as f64, 0.3);
            }
            lazy.end_slot();
        }
        for (i, &d) in dense.iter().enumerate() {
            let l = lazy.get(i / 3, i % 3);
            assert!((l - d).abs() <= 1e-9 * d.max(1e-300), "{i}: {l} vs {d}");
        }
    }

    #[test]
    fn sigma_stride_averages() {
        let mut s = SigmaEstimate::new(1, 2, 0.5, 2);
        s.record(0, 1, 4);
        s.end_slot();
        assert_eq!(s.get(0, 1), 0.0);
        s.end_slot();
        // Mean over the stride is 2.
        assert!((s.get(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn splitting_examples() {
        let mut s = SigmaEstimate::new(3, 1, 0.5, 1);
        s.record(0, 0, 2);
        s.record(1, 0, 3);
        s.end_slot();
        let p = splitting_probabilities(&s, 0..2, 0);
        assert!((p[0] - 0.4).abs() < 1e-12 && (p[1] - 0.6).abs() < 1e-12);
        let p = splitting_probabilities(&s, 1..3, 0);
        assert_eq!(p, vec![1.0, 0.0]);
        let z = SigmaEstimate::new(3, 1, 0.5, 1);
        let p = splitting_probabilities(&z, 0..3, 0);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn probabilistic_routing_frequencies() {
        let s = SigmaEstimate::new(2, 1, 0.5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let first = (0..n).filter(|_| route_probabilistic(&s, 0..2, 0, &mut rng) == 0).count();
        let frac = first as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");

        let mut one = SigmaEstimate::new(2, 1, 0.5, 1);
        one.record(1, 0, 1);
        one.end_slot();
        assert!((0..1000).all(|_| route_probabilistic(&one, 0..2, 0, &mut rng) == 1));
    }

    #[test]
    fn token_examples() {
        let mut t = TokenBuckets::new(2, 1, 5);
        t.set(1, 0, 3);
        assert_eq!(t.route(0..2, 0), 0);
        assert_eq!(t.get(0, 0), 1);

        let mut full = TokenBuckets::new(2, 1, 5);
        full.set(0, 0, 5);
        full.set(1, 0, 5);
        assert_eq!(full.route(0..2, 0), 0);
        assert_eq!(full.get(0, 0), 5);
        assert_eq!(full.saturations(), 1);

        let mut tie = TokenBuckets::new(2, 1, 5);
        tie.set(0, 0, 2);
        tie.set(1, 0, 2);
        assert_eq!(tie.route(0..2, 0), 0);
    }

    #[test]
    fn drain_examples() {
        let mut t = TokenBuckets::new(1, 1, 10);
        t.set(0, 0, 3);
        t.drain(0, 0, 5);
        assert_eq!((t.get(0, 0), t.wasted()), (0, 2));
        t.set(0, 0, 3);
        t.drain(0, 0, 0);
        assert_eq!(t.get(0, 0), 3);
        t.set(0, 0, 0);
        t.drain(0, 0, 4);
        assert_eq!((t.get(0, 0), t.wasted()), (0, 6));
        assert_eq!(default_bucket_cap(0.1), 100);
        assert_eq!(default_bucket_cap(0.03), 334);
        assert_eq!(default_bucket_cap(0.0), 1000);
    }

    #[test]
    fn serve_link_examples() {
        let t = topo(3, &[(0, 1), (1, 2)]);
        let layout = Layout::uncoded(&t);
        let l01 = t.find_link(0, 1).unwrap();
        let arc = layout.arcs_of_link(l01)[0];
        let mut queues = vec![FifoQueue::new(); layout.num_arcs()];
        let mut out = Vec::new();
        assert_eq!(serve_link(&mut queues, &layout, l01, 1, Some(arc), &mut out), 0);
        queues[arc].push(Packet::new(0, 1, 0));
        queues[arc].push(Packet::new(0, 2, 0));
        assert_eq!(serve_link(&mut queues, &layout, l01, 1, None, &mut out), 1);
        assert_eq!(out[0].1.dest(), 1);
        assert_eq!(queues[arc].len(), 1);
    }

    #[test]
    fn one_hop_delivery_and_relay() {
        let t = topo(3, &[(0, 1), (1, 2)]);
        let params = ParnParams { epsilon: 0.0, m: 0, ..ParnParams::default() };
        let mut e = engine(&t, InterferenceKind::Wireline, false, params);
        let mut out = Vec::new();
        let batch = |slot, dest| ArrivalBatch {
            slot,
            entries: vec![ArrivalEntry { flow: 0, source: 0, dest, real: 1, shadow: 1 }],
        };
        e.run_slot(&batch(0, 1), &mut out);
        e.run_slot(&ArrivalBatch { slot: 1, entries: vec![] }, &mut out);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].delay(), 1);

        e.run_slot(&batch(2, 2), &mut out);
        for slot in 3..6 {
            e.run_slot(&ArrivalBatch { slot, entries: vec![] }, &mut out);
        }
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].delay(), 2);
        assert!(e.audit().unwrap().is_clean());
    }

    #[test]
    fn empty_engine_is_fixed_point() {
        let t = topo(3, &[(0, 1), (1, 2)]);
        let mut e = engine(&t, InterferenceKind::KHop(1), false, ParnParams::default());
        let mut out = Vec::new();
        for slot in 0..100 {
            let s = e.run_slot(&ArrivalBatch { slot, entries: vec![] }, &mut out);
            assert_eq!(s.transmissions, 0);
        }
        assert_eq!(e.shadow().total(), 0);
        assert!(out.is_empty());
    }

    fn run(e: &mut ParnEngine, flows: Vec<Flow>, eps: f64, slots: u64) -> Vec<Delivery> {
        let mut arrivals = ArrivalProcess::from_flows(flows, eps, 11);
        let mut out = Vec::new();
        let mut batch = ArrivalBatch::default();
        for t in 0..slots {
            arrivals.generate_into(t, &mut batch);
            e.run_slot(&batch, &mut out);
        }
        out
    }

    #[test]
    fn parn_delivers_on_a_mesh() {
        let t = topo(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]);
        let flows = vec![
            Flow { id: 0, source: 0, dest: 2, rate: 0.2 },
            Flow { id: 1, source: 1, dest: 3, rate: 0.1 },
            Flow { id: 2, source: 3, dest: 1, rate: 0.1 },
        ];
        for router in [RouterKind::Probabilistic, RouterKind::Token] {
            for coded in [false, true] {
                let params = ParnParams { router, ..ParnParams::default() };
                let mut e = engine(&t, InterferenceKind::KHop(1), coded, params);
                let out = run(&mut e, flows.clone(), 0.1, 20_000);
                let audit = e.audit().unwrap();
                assert!(audit.is_clean(), "{router:?} {coded}: {audit:?}");
                assert!(e.queued() < 200, "{router:?} {coded}: {}", e.queued());
                assert_eq!(out.len() as u64, e.delivered());
            }
        }
    }

    #[test]
    fn coded_relay_uses_broadcasts() {
        let t = topo(3, &[(0, 1), (1, 2)]);
        let flows = vec![
            Flow { id: 0, source: 0, dest: 2, rate: 0.3 },
            Flow { id: 1, source: 2, dest: 0, rate: 0.3 },
        ];
        let mut e = engine(&t, InterferenceKind::KHop(1), true, ParnParams::default());
        let out = run(&mut e, flows, 0.05, 20_000);
        assert!(e.audit().unwrap().is_clean());
        assert!(e.coded_pairs() > (out.len() as u64) / 4, "{} {}", e.coded_pairs(), out.len());
    }

    #[test]
    fn frozen_routing_matches_table() {
        let t = topo(4, &[(0, 1), (1, 3), (0, 2), (2, 3)]);
        let params = ParnParams { m: 0, epsilon: 0.0, extra_activation: true, ..ParnParams::default() };
        let mut e = ParnEngine::new(
            t.clone(),
            Arc::new(ScheduleSpace::point_to_point(
                &t,
                &InterferenceModel::new(&t, InterferenceKind::Wireline).unwrap(),
            )),
            Arc::new(Layout::uncoded(&t)),
            params,
            5,
        );
        let flows = vec![Flow { id: 0, source: 0, dest: 3, rate: 0.8 }];
        run(&mut e, flows.clone(), 0.0, 5000);
        e.freeze_routing();
        e.begin_window();
        let mut arrivals = ArrivalProcess::from_flows(flows, 0.0, 99);
        let mut out = Vec::new();
        for slot in 5000..25_000 {
            e.run_slot(&arrivals.generate(slot), &mut out);
        }
        let layout = e.layout();
        let arcs = layout.arcs_of_row(0);
        let probs = splitting_probabilities(e.router().sigma().unwrap(), arcs.clone(), 3);
        let w = e.window().unwrap();
        let counts: Vec<u64> = arcs.map(|a| w.arc_arrivals[a * 4 + 3]).collect();
        let total: u64 = counts.iter().sum();
        assert!(total > 10_000);
        for (p, c) in probs.iter().zip(&counts) {
            let se = (p * (1.0 - p) / total as f64).sqrt();
            let f = *c as f64 / total as f64;
            assert!((f - p).abs() <= 3.0 * se + 1e-12, "{f} vs {p}");
        }
    }
}
