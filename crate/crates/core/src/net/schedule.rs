//! Schedules and schedule construction.
//!
//! A [`ScheduleSpace`] enumerates everything that can be activated in a slot:
//! the point-to-point links (element `i` is link `i`) followed by broadcast
//! links when coding is enabled. Each element has a footprint of one or two
//! point-to-point links and a blocked set equal to the union of N_b over its
//! footprint; two elements conflict iff one's footprint meets the other's
//! blocked set.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use super::interference::InterferenceModel;
use super::topology::{LinkId, NodeId, Topology};
use crate::error::NetError;

/// Largest instance the brute-force oracle accepts.
pub const ORACLE_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BroadcastId(pub usize);

/// One XOR transmission from `center` decoded by both receivers.
///
/// Receivers are stored with `receivers.0 < receivers.1`, so (n|jl) and
/// (n|lj) map to the same value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BroadcastLink {
    pub center: NodeId,
    pub receivers: (NodeId, NodeId),
    /// (center -> receivers.0, center -> receivers.1)
    pub legs: (LinkId, LinkId),
}

/// Every bidirectional neighbor pair of every node.
pub fn broadcast_links(topology: &Topology) -> Vec<BroadcastLink> {
    let mut out = Vec::new();
    for n in 0..topology.num_nodes() {
        let bidir: Vec<(NodeId, LinkId)> = topology
            .out_links(n)
            .iter()
            .map(|&l| (topology.link(l).to, l))
            .filter(|&(j, _)| topology.find_link(j, n).is_some())
            .collect();
        for a in 0..bidir.len() {
            for b in a + 1..bidir.len() {
                out.push(BroadcastLink {
                    center: n,
                    receivers: (bidir[a].0, bidir[b].0),
                    legs: (bidir[a].1, bidir[b].1),
                });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Link(LinkId),
    Broadcast(BroadcastId),
}

#[derive(Clone, Debug)]
pub struct ScheduleSpace {
    num_links: usize,
    broadcasts: Vec<BroadcastLink>,
    footprint: Vec<SmallVec<[usize; 2]>>,
    blocked: Vec<FixedBitSet>,
    capacity: Vec<u32>,
}

impl ScheduleSpace {
    pub fn point_to_point(topology: &Topology, model: &InterferenceModel) -> Self {
        Self::build(topology, model, Vec::new())
    }

    pub fn with_broadcasts(topology: &Topology, model: &InterferenceModel) -> Self {
        Self::build(topology, model, broadcast_links(topology))
    }

    fn build(
        topology: &Topology,
        model: &InterferenceModel,
        broadcasts: Vec<BroadcastLink>,
    ) -> Self {
        let num_links = topology.num_links();
        let mut footprint: Vec<SmallVec<[usize; 2]>> = (0..num_links).map(|l| smallvec![l]).collect();
        let mut blocked: Vec<FixedBitSet> = (0..num_links)
            .map(|l| model.conflict_mask(LinkId(l)).clone())
            .collect();
        let mut capacity: Vec<u32> = topology.links().iter().map(|l| l.capacity).collect();
        for b in &broadcasts {
            let (x, y) = b.legs;
            footprint.push(smallvec![x.0, y.0]);
            let mut mask = model.conflict_mask(x).clone();
            mask.union_with(model.conflict_mask(y));
            blocked.push(mask);
            capacity.push(topology.link(x).capacity.min(topology.link(y).capacity));
        }
        Self {
            num_links,
            broadcasts,
            footprint,
            blocked,
            capacity,
        }
    }

    /// Total number of activatable elements.
    #[inline]
    pub fn len(&self) -> usize {
        self.footprint.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.footprint.is_empty()
    }

    #[inline]
    pub fn num_links(&self) -> usize {
        self.num_links
    }

    pub fn broadcasts(&self) -> &[BroadcastLink] {
        &self.broadcasts
    }

    pub fn broadcast(&self, id: BroadcastId) -> &BroadcastLink {
        &self.broadcasts[id.0]
    }

    #[inline]
    pub fn activation(&self, element: usize) -> Activation {
        if element < self.num_links {
            Activation::Link(LinkId(element))
        } else {
            Activation::Broadcast(BroadcastId(element - self.num_links))
        }
    }

    pub fn element_of_broadcast(&self, id: BroadcastId) -> usize {
        self.num_links + id.0
    }

    /// Packets (or packet pairs, for a broadcast) served per activation.
    #[inline]
    pub fn capacity(&self, element: usize) -> u32 {
        self.capacity[element]
    }

    pub fn footprint(&self, element: usize) -> &[usize] {
        &self.footprint[element]
    }

    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        self.footprint[b].iter().any(|&l| self.blocked[a].contains(l))
    }

    #[inline]
    fn fits(&self, element: usize, taken: &FixedBitSet) -> bool {
        !self.footprint[element].iter().any(|&l| taken.contains(l))
    }
}

/// How the max-weight step of back-pressure is solved each slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    /// Greedy largest-weight-first (greedy maximal scheduling).
    #[default]
    Lwf,
    /// Exhaustive search; only for spaces of at most [`ORACLE_LIMIT`] elements.
    Oracle,
}

/// Active elements of a slot, in the order they were selected.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schedule {
    elements: Vec<usize>,
}

impl Schedule {
    pub fn from_elements(elements: Vec<usize>) -> Self {
        Self { elements }
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, element: usize) -> bool {
        self.elements.contains(&element)
    }

    pub fn links<'a>(&'a self, space: &'a ScheduleSpace) -> impl Iterator<Item = LinkId> + 'a {
        self.elements
            .iter()
            .filter(|&&e| e < space.num_links())
            .map(|&e| LinkId(e))
    }

    pub fn broadcasts<'a>(
        &'a self,
        space: &'a ScheduleSpace,
    ) -> impl Iterator<Item = BroadcastId> + 'a {
        self.elements
            .iter()
            .filter(|&&e| e >= space.num_links())
            .map(|&e| BroadcastId(e - space.num_links()))
    }

    /// Elements sorted ascending, for set comparisons.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.elements.clone();
        v.sort_unstable();
        v
    }

    /// Σ capacity × weight over active elements.
    pub fn value(&self, space: &ScheduleSpace, weights: &[f64]) -> f64 {
        self.elements
            .iter()
            .map(|&e| f64::from(space.capacity(e)) * weights[e])
            .sum()
    }
}

/// Reusable buffers for per-slot schedule construction.
#[derive(Clone, Debug, Default)]
pub struct ScheduleBuilder {
    order: Vec<usize>,
    taken: FixedBitSet,
}

impl ScheduleBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Largest-weight-first over elements with positive weight, ranking by
    /// capacity-scaled weight and breaking ties by smallest element id.
    pub fn greedy(&mut self, space: &ScheduleSpace, weights: &[f64], out: &mut Schedule) {
        debug_assert_eq!(weights.len(), space.len());
        out.elements.clear();
        self.order.clear();
        self.order
            .extend((0..space.len()).filter(|&e| weights[e] > 0.0));
        let key = |e: usize| f64::from(space.capacity(e)) * weights[e];
        self.order
            .sort_unstable_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
        self.reset(space);
        for i in 0..self.order.len() {
            let e = self.order[i];
            if space.fits(e, &self.taken) {
                self.take(space, e);
                out.elements.push(e);
            }
        }
    }

    /// Adds point-to-point links by decreasing backlog until no further
    /// link fits. Links already in `schedule` are kept.
    pub fn extend_maximal(
        &mut self,
        space: &ScheduleSpace,
        backlogs: &[u64],
        schedule: &mut Schedule,
    ) {
        debug_assert_eq!(backlogs.len(), space.num_links());
        self.reset(space);
        for &e in &schedule.elements {
            self.take(space, e);
        }
        self.order.clear();
        self.order.extend(0..space.num_links());
        self.order
            .sort_unstable_by(|&a, &b| backlogs[b].cmp(&backlogs[a]).then(a.cmp(&b)));
        for i in 0..self.order.len() {
            let l = self.order[i];
            if space.fits(l, &self.taken) && !schedule.elements.contains(&l) {
                self.take(space, l);
                schedule.elements.push(l);
            }
        }
    }

    /// Builds the shadow or back-pressure schedule with the chosen solver.
    pub fn build(
        &mut self,
        kind: SchedulerKind,
        space: &ScheduleSpace,
        weights: &[f64],
        out: &mut Schedule,
    ) {
        match kind {
            SchedulerKind::Lwf => self.greedy(space, weights, out),
            SchedulerKind::Oracle => {
                let (s, _) = max_weight_schedule_oracle(space, weights)
                    .expect("oracle scheduler on an oversized space");
                *out = s;
            }
        }
    }

    fn reset(&mut self, space: &ScheduleSpace) {
        if self.taken.len() != space.num_links() {
            self.taken = FixedBitSet::with_capacity(space.num_links());
        } else {
            self.taken.clear();
        }
    }

    fn take(&mut self, space: &ScheduleSpace, e: usize) {
        self.taken.union_with(&space.blocked[e]);
    }
}

pub fn greedy_maximal_schedule(space: &ScheduleSpace, weights: &[f64]) -> Schedule {
    let mut out = Schedule::default();
    ScheduleBuilder::new().greedy(space, weights, &mut out);
    out
}

pub fn extra_activation(space: &ScheduleSpace, base: &Schedule, backlogs: &[u64]) -> Schedule {
    let mut out = base.clone();
    ScheduleBuilder::new().extend_maximal(space, backlogs, &mut out);
    out
}

/// Exhaustive max-weight schedule for small instances.
///
/// Maximizes Σ capacity × max(weight, 0); only positive-weight elements are
/// ever included. Among optimal schedules the lexicographically smallest
/// sorted element list is returned.
pub fn max_weight_schedule_oracle(
    space: &ScheduleSpace,
    weights: &[f64],
) -> Result<(Schedule, f64), NetError> {
    if space.len() > ORACLE_LIMIT {
        return Err(NetError::OracleTooLarge {
            limit: ORACLE_LIMIT,
            got: space.len(),
        });
    }
    let candidates: Vec<usize> = (0..space.len()).filter(|&e| weights[e] > 0.0).collect();
    let gain: Vec<f64> = candidates
        .iter()
        .map(|&e| f64::from(space.capacity(e)) * weights[e])
        .collect();
    let mut conflict_mask = vec![0u32; candidates.len()];
    for (i, &a) in candidates.iter().enumerate() {
        for (j, &b) in candidates.iter().enumerate() {
            if i != j && space.conflicts(a, b) {
                conflict_mask[i] |= 1 << j;
            }
        }
    }

    struct Search<'a> {
        gain: &'a [f64],
        conflict: &'a [u32],
        best: f64,
        best_set: u32,
    }
    impl Search<'_> {
        // Include-first depth-first search visits sets in lexicographic
        // order, so the first strictly-better set wins ties.
        fn go(&mut self, i: usize, chosen: u32, blocked: u32, value: f64) {
            if i == self.gain.len() {
                if value > self.best {
                    self.best = value;
                    self.best_set = chosen;
                }
                return;
            }
            let rest: f64 = (i..self.gain.len())
                .filter(|&j| blocked & (1 << j) == 0)
                .map(|j| self.gain[j])
                .sum();
            if value + rest <= self.best {
                return;
            }
            if blocked & (1 << i) == 0 {
                self.go(
                    i + 1,
                    chosen | (1 << i),
                    blocked | self.conflict[i],
                    value + self.gain[i],
                );
            }
            self.go(i + 1, chosen, blocked, value);
        }
    }
    let mut search = Search {
        gain: &gain,
        conflict: &conflict_mask,
        best: 0.0,
        best_set: 0,
    };
    search.go(0, 0, 0, 0.0);
    let elements = (0..candidates.len())
        .filter(|&i| search.best_set & (1 << i) != 0)
        .map(|i| candidates[i])
        .collect();
    Ok((Schedule::from_elements(elements), search.best))
}

pub fn is_conflict_free(space: &ScheduleSpace, schedule: &Schedule) -> bool {
    let e = schedule.elements();
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            if e[i] == e[j] || space.conflicts(e[i], e[j]) {
                return false;
            }
        }
    }
    true
}

/// True when no element satisfying `eligible` can be added without conflict.
pub fn is_maximal(
    space: &ScheduleSpace,
    schedule: &Schedule,
    eligible: impl Fn(usize) -> bool,
) -> bool {
    let mut taken = FixedBitSet::with_capacity(space.num_links());
    for &e in schedule.elements() {
        taken.union_with(&space.blocked[e]);
    }
    (0..space.len())
        .filter(|&e| eligible(e) && !schedule.contains(e))
        .all(|e| !space.fits(e, &taken))
}
