//! Shadow queues and the back-pressure step run on them.
//!
//! Counters live in *rows*. Without coding there is one row per node, so
//! row `n` holds p_nd. With coding a node has one row for external traffic
//! plus one per incoming link, holding p_lnd. An *arc* is a (row, outgoing
//! link) pair: it carries the routing table, token buckets and real queue
//! for packets that sit in that row and leave over that link.

use crate::net::{
    broadcast_links, LinkId, NodeId, Schedule, ScheduleBuilder, ScheduleSpace, SchedulerKind,
    Topology,
};

#[derive(Clone, Debug)]
pub struct Layout {
    coded: bool,
    num_nodes: usize,
    row_node: Vec<NodeId>,
    rows_at: Vec<Vec<usize>>,
    down_row: Vec<usize>,
    row_arcs: Vec<usize>,
    arc_row: Vec<usize>,
    arc_link: Vec<LinkId>,
    link_arcs: Vec<Vec<usize>>,
    broadcast_sides: Vec<[BroadcastSide; 2]>,
}

/// One half of a broadcast (n|jl): the packet for `link`'s receiver, taken
/// from the row of packets that arrived over the reverse of the other leg.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BroadcastSide {
    pub link: LinkId,
    pub row: usize,
    pub arc: usize,
}

impl Layout {
    /// One row per node.
    pub fn uncoded(topology: &Topology) -> Self {
        let n = topology.num_nodes();
        let row_node = (0..n).collect();
        let rows_at = (0..n).map(|v| vec![v]).collect();
        let down_row = topology.links().iter().map(|l| l.to).collect();
        Self::finish(topology, false, row_node, rows_at, down_row)
    }

    /// Row `n` for external arrivals at node n, row `N + l` for packets that
    /// came over link l.
    pub fn coded(topology: &Topology) -> Self {
        let n = topology.num_nodes();
        let mut row_node: Vec<NodeId> = (0..n).collect();
        row_node.extend(topology.links().iter().map(|l| l.to));
        let rows_at = (0..n)
            .map(|v| {
                std::iter::once(v)
                    .chain(topology.in_links(v).iter().map(|l| n + l.0))
                    .collect()
            })
            .collect();
        let down_row = (0..topology.num_links()).map(|l| n + l).collect();
        Self::finish(topology, true, row_node, rows_at, down_row)
    }

    fn finish(
        topology: &Topology,
        coded: bool,
        row_node: Vec<NodeId>,
        rows_at: Vec<Vec<usize>>,
        down_row: Vec<usize>,
    ) -> Self {
        let mut row_arcs = vec![0];
        let mut arc_row = Vec::new();
        let mut arc_link = Vec::new();
        let mut link_arcs = vec![Vec::new(); topology.num_links()];
        for (row, &node) in row_node.iter().enumerate() {
            for &l in topology.out_links(node) {
                link_arcs[l.0].push(arc_row.len());
                arc_row.push(row);
                arc_link.push(l);
            }
            row_arcs.push(arc_row.len());
        }
        let mut layout = Self {
            coded,
            num_nodes: topology.num_nodes(),
            row_node,
            rows_at,
            down_row,
            row_arcs,
            arc_row,
            arc_link,
            link_arcs,
            broadcast_sides: Vec::new(),
        };
        if coded {
            layout.broadcast_sides = broadcast_links(topology)
                .iter()
                .map(|b| {
                    let (j, l) = b.receivers;
                    let side = |leg: LinkId, other: NodeId| {
                        let back = topology.find_link(other, b.center).expect("bidirectional");
                        let row = layout.down_row[back.0];
                        BroadcastSide {
                            link: leg,
                            row,
                            arc: layout.arc(row, leg),
                        }
                    };
                    [side(b.legs.0, l), side(b.legs.1, j)]
                })
                .collect();
        }
        layout
    }

    pub fn is_coded(&self) -> bool {
        self.coded
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_rows(&self) -> usize {
        self.row_node.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arc_row.len()
    }

    #[inline]
    pub fn row_node(&self, row: usize) -> NodeId {
        self.row_node[row]
    }

    /// Rows held at `node`, the external row first.
    pub fn rows_at(&self, node: NodeId) -> &[usize] {
        &self.rows_at[node]
    }

    #[inline]
    pub fn external_row(&self, node: NodeId) -> usize {
        node
    }

    /// Row at the receiver of `link` that its packets join.
    #[inline]
    pub fn down_row(&self, link: LinkId) -> usize {
        self.down_row[link.0]
    }

    /// Arcs leaving `row`, ordered by next-hop node id.
    #[inline]
    pub fn arcs_of_row(&self, row: usize) -> std::ops::Range<usize> {
        self.row_arcs[row]..self.row_arcs[row + 1]
    }

    #[inline]
    pub fn arc_row(&self, arc: usize) -> usize {
        self.arc_row[arc]
    }

    #[inline]
    pub fn arc_link(&self, arc: usize) -> LinkId {
        self.arc_link[arc]
    }

    pub fn arcs_of_link(&self, link: LinkId) -> &[usize] {
        &self.link_arcs[link.0]
    }

    pub fn arc(&self, row: usize, link: LinkId) -> usize {
        self.arcs_of_row(row)
            .find(|&a| self.arc_link[a] == link)
            .expect("link leaves the row's node")
    }

    /// Per broadcast, in the order of [`broadcast_links`].
    pub fn broadcast_sides(&self) -> &[[BroadcastSide; 2]] {
        &self.broadcast_sides
    }
}

/// Integer shadow counters, `[row * N + dest]`.
#[derive(Clone, Debug)]
pub struct ShadowQueues {
    num_nodes: usize,
    counts: Vec<u64>,
    row_total: Vec<u64>,
    dirty: Vec<bool>,
    dirty_rows: Vec<usize>,
}

impl ShadowQueues {
    pub fn new(layout: &Layout) -> Self {
        Self {
            num_nodes: layout.num_nodes(),
            counts: vec![0; layout.num_rows() * layout.num_nodes()],
            row_total: vec![0; layout.num_rows()],
            dirty: vec![false; layout.num_rows()],
            dirty_rows: Vec::new(),
        }
    }

    #[inline]
    fn touch(&mut self, row: usize) {
        if !self.dirty[row] {
            self.dirty[row] = true;
            self.dirty_rows.push(row);
        }
    }

    /// Rows changed since the last call, in first-touch order.
    pub fn take_dirty(&mut self, out: &mut Vec<usize>) {
        out.clear();
        for &r in &self.dirty_rows {
            self.dirty[r] = false;
        }
        std::mem::swap(out, &mut self.dirty_rows);
    }

    #[inline]
    pub fn get(&self, row: usize, dest: NodeId) -> u64 {
        self.counts[row * self.num_nodes + dest]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.counts[row * self.num_nodes..(row + 1) * self.num_nodes]
    }

    #[inline]
    pub fn add(&mut self, row: usize, dest: NodeId, amount: u64) {
        if amount > 0 {
            self.counts[row * self.num_nodes + dest] += amount;
            self.row_total[row] += amount;
            self.touch(row);
        }
    }

    /// Removes up to `max`, returning what was removed.
    #[inline]
    pub fn take(&mut self, row: usize, dest: NodeId, max: u64) -> u64 {
        let c = &mut self.counts[row * self.num_nodes + dest];
        let t = (*c).min(max);
        *c -= t;
        if t > 0 {
            self.row_total[row] -= t;
            self.touch(row);
        }
        t
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.row_total[row]
    }

    pub fn total(&self) -> u64 {
        self.row_total.iter().sum()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
}

/// Point-to-point decision for one link: weight and the arc and commodity
/// achieving it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PpDecision {
    pub weight: i64,
    pub arc: usize,
    pub dest: NodeId,
}

/// Best commodity for moving packets from `row` into `down`:
/// max over d ≠ `skip` of p(row, d) − p(down, d) − m, ties to smallest d.
#[inline]
pub fn best_commodity(
    p: &ShadowQueues,
    row: usize,
    down: usize,
    skip: NodeId,
    m: i64,
) -> (i64, NodeId) {
    let up = p.row(row);
    let dn = p.row(down);
    let mut best = (i64::MIN, usize::MAX);
    for d in 0..up.len() {
        if d == skip {
            continue;
        }
        let w = up[d] as i64 - dn[d] as i64 - m;
        if w > best.0 {
            best = (w, d);
        }
    }
    best
}

/// Shadow weights of all point-to-point links. For link (n→j) this is the
/// max over rows l at n and d ≠ n of p(l, n, d) − p(n, j, d) − M, ties to
/// the smallest (row, d) with the external row first.
pub fn shadow_weights_into(
    layout: &Layout,
    topology: &Topology,
    p: &ShadowQueues,
    m: i64,
    out: &mut Vec<PpDecision>,
) {
    out.clear();
    for (l, link) in topology.links().iter().enumerate() {
        let n = link.from;
        let down = layout.down_row(LinkId(l));
        // Every empty row scores the same; compute that once.
        let mut empty: Option<(i64, NodeId)> = None;
        let mut best = (i64::MIN, usize::MAX, usize::MAX);
        for &row in layout.rows_at(n) {
            let (w, d) = if p.row_total(row) == 0 {
                *empty.get_or_insert_with(|| best_commodity(p, row, down, n, m))
            } else {
                best_commodity(p, row, down, n, m)
            };
            if w > best.0 {
                best = (w, row, d);
            }
        }
        out.push(PpDecision {
            weight: best.0,
            arc: layout.arc(best.1, LinkId(l)),
            dest: best.2,
        });
    }
}

/// Per-arc best commodity, kept current by recomputing only the arcs whose
/// source or receiving row changed. Gives the same decisions as
/// [`shadow_weights_into`].
#[derive(Clone, Debug)]
pub struct ArcWeights {
    m: i64,
    best: Vec<(i64, NodeId)>,
    readers: Vec<Vec<usize>>,
    link_arcs: Vec<Vec<usize>>,
    rows: Vec<usize>,
    stale: Vec<bool>,
    primed: bool,
}

impl ArcWeights {
    pub fn new(layout: &Layout, topology: &Topology, m: i64) -> Self {
        let mut readers = vec![Vec::new(); layout.num_rows()];
        for a in 0..layout.num_arcs() {
            readers[layout.arc_row(a)].push(a);
            let down = layout.down_row(layout.arc_link(a));
            if down != layout.arc_row(a) {
                readers[down].push(a);
            }
        }
        let link_arcs = topology
            .links()
            .iter()
            .enumerate()
            .map(|(l, link)| {
                layout
                    .rows_at(link.from)
                    .iter()
                    .map(|&row| layout.arc(row, LinkId(l)))
                    .collect()
            })
            .collect();
        Self {
            m,
            best: vec![(0, 0); layout.num_arcs()],
            readers,
            link_arcs,
            rows: Vec::new(),
            stale: vec![false; layout.num_arcs()],
            primed: false,
        }
    }

    fn compute(&self, layout: &Layout, topology: &Topology, p: &ShadowQueues, a: usize) -> (i64, NodeId) {
        let link = layout.arc_link(a);
        best_commodity(p, layout.arc_row(a), layout.down_row(link), topology.link(link).from, self.m)
    }

    pub fn refresh(&mut self, layout: &Layout, topology: &Topology, p: &mut ShadowQueues) {
        p.take_dirty(&mut self.rows);
        if !self.primed {
            self.primed = true;
            for a in 0..self.best.len() {
                self.best[a] = self.compute(layout, topology, p, a);
            }
            return;
        }
        for i in 0..self.rows.len() {
            let row = self.rows[i];
            for j in 0..self.readers[row].len() {
                let a = self.readers[row][j];
                if !self.stale[a] {
                    self.stale[a] = true;
                    self.best[a] = self.compute(layout, topology, p, a);
                }
            }
        }
        for &row in &self.rows {
            for &a in &self.readers[row] {
                self.stale[a] = false;
            }
        }
    }

    #[inline]
    pub fn arc(&self, a: usize) -> (i64, NodeId) {
        self.best[a]
    }

    pub fn link_decisions_into(&self, out: &mut Vec<PpDecision>) {
        out.clear();
        out.extend(self.link_arcs.iter().map(|arcs| {
            let mut best = PpDecision { weight: i64::MIN, arc: usize::MAX, dest: usize::MAX };
            for &a in arcs {
                let (w, d) = self.best[a];
                if w > best.weight {
                    best = PpDecision { weight: w, arc: a, dest: d };
                }
            }
            best
        }));
    }
}

pub fn shadow_weights(layout: &Layout, topology: &Topology, p: &ShadowQueues, m: i64) -> Vec<PpDecision> {
    let mut out = Vec::with_capacity(topology.num_links());
    shadow_weights_into(layout, topology, p, m, &mut out);
    out
}

/// Shadow packets moved over an arc for one destination in one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShadowTransfer {
    pub arc: usize,
    pub dest: NodeId,
    pub amount: u64,
}

/// Moves up to `capacity` shadow packets of `dest` out of `arc`'s row.
///
/// The decrement is immediate so later activations in the same slot see
/// what is left; the increment at the receiver is staged. Packets reaching
/// their destination are absorbed.
pub fn shadow_transfer(
    layout: &Layout,
    topology: &Topology,
    p: &mut ShadowQueues,
    arc: usize,
    dest: NodeId,
    capacity: u32,
    staged: &mut Vec<(usize, NodeId, u64)>,
) -> u64 {
    let link = layout.arc_link(arc);
    let moved = p.take(layout.arc_row(arc), dest, u64::from(capacity));
    if moved > 0 && topology.link(link).to != dest {
        staged.push((layout.down_row(link), dest, moved));
    }
    moved
}

/// One slot of point-to-point shadow dynamics: service of every element in
/// `schedule`, then `arrivals` as (source, dest, count) at external rows.
pub fn shadow_step(
    layout: &Layout,
    topology: &Topology,
    p: &mut ShadowQueues,
    schedule: &Schedule,
    decisions: &[PpDecision],
    arrivals: impl IntoIterator<Item = (NodeId, NodeId, u64)>,
) -> Vec<ShadowTransfer> {
    let mut staged = Vec::new();
    let mut transfers = Vec::new();
    for &e in schedule.elements() {
        let dec = decisions[e];
        let capacity = topology.link(LinkId(e)).capacity;
        let amount = shadow_transfer(layout, topology, p, dec.arc, dec.dest, capacity, &mut staged);
        transfers.push(ShadowTransfer {
            arc: dec.arc,
            dest: dec.dest,
            amount,
        });
    }
    for (row, d, k) in staged {
        p.add(row, d, k);
    }
    for (src, dst, k) in arrivals {
        p.add(layout.external_row(src), dst, k);
    }
    transfers
}

/// Shadow schedule from point-to-point shadow weights, plus the schedule
/// actually activated (the same one extended to a maximal set by real
/// backlog when `extra` is set).
pub fn schedule_for_slot(
    space: &ScheduleSpace,
    decisions: &[PpDecision],
    backlogs: &[u64],
    scheduler: SchedulerKind,
    extra: bool,
) -> (Schedule, Schedule) {
    let weights: Vec<f64> = decisions.iter().map(|d| d.weight as f64).collect();
    let mut builder = ScheduleBuilder::new();
    let mut shadow = Schedule::default();
    builder.build(scheduler, space, &weights, &mut shadow);
    let mut active = shadow.clone();
    if extra {
        builder.extend_maximal(space, backlogs, &mut active);
    }
    (shadow, active)
}
