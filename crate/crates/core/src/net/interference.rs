//! Link conflict relations.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use super::topology::{LinkId, Topology};
use crate::error::NetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceKind {
    /// Every link can be active simultaneously.
    Wireline,
    /// An active link silences every link within `k` hops.
    KHop(u32),
}

/// Precomputed conflict sets N_b(l), each containing `l` itself.
#[derive(Clone, Debug)]
pub struct InterferenceModel {
    kind: InterferenceKind,
    sets: Vec<Vec<LinkId>>,
    masks: Vec<FixedBitSet>,
}

impl InterferenceModel {
    /// Two links conflict under `KHop(k)` iff the nearest pair of their
    /// endpoints is at most `k - 1` hops apart on the undirected support
    /// graph, so `KHop(1)` is the shared-endpoint relation.
    pub fn new(topology: &Topology, kind: InterferenceKind) -> Result<Self, NetError> {
        let num_links = topology.num_links();
        let mut masks = vec![FixedBitSet::with_capacity(num_links); num_links];
        match kind {
            InterferenceKind::Wireline => {
                for (l, mask) in masks.iter_mut().enumerate() {
                    mask.insert(l);
                }
            }
            InterferenceKind::KHop(0) => return Err(NetError::ZeroHop),
            InterferenceKind::KHop(k) => {
                let dist = topology.undirected_distances();
                let links = topology.links();
                for a in 0..num_links {
                    for b in a..num_links {
                        let (la, lb) = (&links[a], &links[b]);
                        let nearest = [
                            dist[la.from][lb.from],
                            dist[la.from][lb.to],
                            dist[la.to][lb.from],
                            dist[la.to][lb.to],
                        ]
                        .into_iter()
                        .min()
                        .unwrap();
                        if nearest < k {
                            masks[a].insert(b);
                            masks[b].insert(a);
                        }
                    }
                }
            }
        }
        let sets = masks
            .iter()
            .map(|m| m.ones().map(LinkId).collect())
            .collect();
        Ok(Self { kind, sets, masks })
    }

    pub fn kind(&self) -> InterferenceKind {
        self.kind
    }

    pub fn num_links(&self) -> usize {
        self.sets.len()
    }

    /// N_b(l), sorted by link id.
    pub fn conflict_set(&self, l: LinkId) -> &[LinkId] {
        &self.sets[l.0]
    }

    pub fn conflict_mask(&self, l: LinkId) -> &FixedBitSet {
        &self.masks[l.0]
    }

    #[inline]
    pub fn conflicts(&self, a: LinkId, b: LinkId) -> bool {
        self.masks[a.0].contains(b.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::topology::Link;

    /// Directed path 0->1->...->n with one link per hop.
    fn path(hops: usize) -> Topology {
        let links = (0..hops)
            .map(|i| Link {
                from: i,
                to: i + 1,
                capacity: 1,
            })
            .collect();
        Topology::new(hops + 1, links).unwrap()
    }

    #[test]
    fn wireline_is_singleton() {
        let topo = path(4);
        let model = InterferenceModel::new(&topo, InterferenceKind::Wireline).unwrap();
        for l in topo.link_ids() {
            assert_eq!(model.conflict_set(l), &[l]);
        }
    }

    #[test]
    fn one_hop_shares_endpoint() {
        let topo = path(3);
        let model = InterferenceModel::new(&topo, InterferenceKind::KHop(1)).unwrap();
        assert_eq!(model.conflict_set(LinkId(0)), &[LinkId(0), LinkId(1)]);
        assert_eq!(
            model.conflict_set(LinkId(1)),
            &[LinkId(0), LinkId(1), LinkId(2)]
        );
    }

    /// Hop-distance oracle written directly on the path: links i and j of a
    /// path sit on nodes {i, i+1} and {j, j+1}; their nearest endpoints are
    /// |i - j| - 1 hops apart when i != j.
    #[test]
    fn two_hop_on_five_link_path() {
        let topo = path(5);
        let model = InterferenceModel::new(&topo, InterferenceKind::KHop(2)).unwrap();
        for i in 0..5usize {
            for j in 0..5usize {
                let gap = if i == j { 0 } else { i.abs_diff(j) - 1 };
                assert_eq!(model.conflicts(LinkId(i), LinkId(j)), gap < 2, "{i} {j}");
            }
        }
        assert_eq!(model.conflict_set(LinkId(2)).len(), 5);
    }

    #[test]
    fn zero_hop_rejected() {
        assert!(InterferenceModel::new(&path(2), InterferenceKind::KHop(0)).is_err());
    }
}
