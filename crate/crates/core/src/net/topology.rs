//! Directed network topologies with per-link capacities.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetError;

pub type NodeId = usize;

/// Index of a directed point-to-point link in [`Topology::links`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId(pub usize);

impl LinkId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    /// Packets per slot.
    pub capacity: u32,
}

/// A validated directed graph. Nodes are dense integers `0..N`.
#[derive(Clone, Debug)]
pub struct Topology {
    names: Vec<String>,
    links: Vec<Link>,
    out_links: Vec<Vec<LinkId>>,
    in_links: Vec<Vec<LinkId>>,
    lookup: HashMap<(NodeId, NodeId), LinkId>,
    coords: Option<Vec<[f64; 2]>>,
    range: Option<f64>,
}

impl Topology {
    /// Builds a topology from `num_nodes` anonymous nodes and a link list.
    pub fn new(num_nodes: usize, links: Vec<Link>) -> Result<Self, NetError> {
        let names = (0..num_nodes).map(|n| n.to_string()).collect();
        Self::with_names(names, links)
    }

    pub fn with_names(names: Vec<String>, links: Vec<Link>) -> Result<Self, NetError> {
        let n = names.len();
        if n == 0 {
            return Err(NetError::Empty);
        }
        let mut lookup = HashMap::with_capacity(links.len());
        let mut out_links = vec![Vec::new(); n];
        let mut in_links = vec![Vec::new(); n];
        for (i, link) in links.iter().enumerate() {
            if link.from >= n || link.to >= n {
                return Err(NetError::UnknownNode(format!(
                    "{}->{}",
                    link.from, link.to
                )));
            }
            if link.from == link.to {
                return Err(NetError::SelfLoop(names[link.from].clone()));
            }
            if link.capacity == 0 {
                return Err(NetError::ZeroCapacity {
                    from: names[link.from].clone(),
                    to: names[link.to].clone(),
                });
            }
            if lookup.insert((link.from, link.to), LinkId(i)).is_some() {
                return Err(NetError::DuplicateLink {
                    from: names[link.from].clone(),
                    to: names[link.to].clone(),
                });
            }
            out_links[link.from].push(LinkId(i));
            in_links[link.to].push(LinkId(i));
        }
        // Neighbor lists ordered by the far-end node id; tie-breaks rely on it.
        for list in &mut out_links {
            list.sort_by_key(|l| links[l.0].to);
        }
        for list in &mut in_links {
            list.sort_by_key(|l| links[l.0].from);
        }
        Ok(Self {
            names,
            links,
            out_links,
            in_links,
            lookup,
            coords: None,
            range: None,
        })
    }

    /// Unit-capacity bidirectional links between every pair within `range`.
    pub fn from_coords(coords: Vec<[f64; 2]>, range: f64) -> Result<Self, NetError> {
        if !(range.is_finite() && range >= 0.0) {
            return Err(NetError::InvalidRange(range));
        }
        let mut links = Vec::new();
        for a in 0..coords.len() {
            for b in 0..coords.len() {
                if a != b && distance(coords[a], coords[b]) <= range {
                    links.push(Link {
                        from: a,
                        to: b,
                        capacity: 1,
                    });
                }
            }
        }
        let mut topo = Self::new(coords.len(), links)?;
        topo.coords = Some(coords);
        topo.range = Some(range);
        Ok(topo)
    }

    /// Grows the transmission range from zero until the graph is connected.
    ///
    /// The smallest such range is the longest edge of a Euclidean minimum
    /// spanning tree, found here with Kruskal over all pairs.
    pub fn from_coords_connected(coords: Vec<[f64; 2]>) -> Result<Self, NetError> {
        let range = connectivity_range(&coords).ok_or(NetError::Empty)?;
        Self::from_coords(coords, range)
    }

    /// `n` nodes uniform in the unit square with the connectivity-threshold range.
    pub fn random_geometric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, NetError> {
        let coords = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        Self::from_coords_connected(coords)
    }

    pub fn from_spec(spec: &TopologySpec) -> Result<Self, NetError> {
        let (topo, require_connected) = match spec {
            TopologySpec::Links(s) => {
                let names = match &s.nodes {
                    NodeList::Count(n) => (0..*n).map(|i| i.to_string()).collect(),
                    NodeList::Names(v) => v.clone(),
                };
                let index: HashMap<&str, usize> = names
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_str(), i))
                    .collect();
                let resolve = |r: &NodeRef| -> Result<usize, NetError> {
                    match r {
                        NodeRef::Index(i) if *i < names.len() => Ok(*i),
                        NodeRef::Index(i) => Err(NetError::UnknownNode(i.to_string())),
                        NodeRef::Name(s) => index
                            .get(s.as_str())
                            .copied()
                            .ok_or_else(|| NetError::UnknownNode(s.clone())),
                    }
                };
                let mut links = Vec::with_capacity(s.links.len());
                for l in &s.links {
                    let (from, to) = (resolve(&l.from)?, resolve(&l.to)?);
                    let capacity = l.capacity.unwrap_or(1);
                    links.push(Link { from, to, capacity });
                    if l.bidirectional {
                        links.push(Link {
                            from: to,
                            to: from,
                            capacity,
                        });
                    }
                }
                (Self::with_names(names, links)?, s.require_connected)
            }
            TopologySpec::Coords(s) => {
                let topo = match (s.range, s.auto_connect) {
                    (Some(r), false) => Self::from_coords(s.coords.clone(), r)?,
                    (None, true) => Self::from_coords_connected(s.coords.clone())?,
                    (Some(_), true) => return Err(NetError::AmbiguousRange),
                    (None, false) => return Err(NetError::MissingRange),
                };
                (topo, s.require_connected)
            }
        };
        if require_connected && !topo.is_strongly_connected() {
            return Err(NetError::Disconnected);
        }
        Ok(topo)
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let spec: TopologySpec =
            serde_json::from_str(text).map_err(|e| NetError::Parse(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Serializable description that rebuilds this topology exactly.
    pub fn to_spec(&self) -> TopologySpec {
        if let (Some(coords), Some(range)) = (&self.coords, self.range) {
            return TopologySpec::Coords(CoordSpec {
                name: None,
                coords: coords.clone(),
                range: Some(range),
                auto_connect: false,
                require_connected: false,
            });
        }
        TopologySpec::Links(LinkListSpec {
            name: None,
            nodes: NodeList::Names(self.names.clone()),
            links: self
                .links
                .iter()
                .map(|l| LinkSpec {
                    from: NodeRef::Index(l.from),
                    to: NodeRef::Index(l.to),
                    capacity: Some(l.capacity),
                    bidirectional: false,
                })
                .collect(),
            require_connected: false,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    #[inline]
    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> {
        (0..self.links.len()).map(LinkId)
    }

    /// Outgoing links of `n`, sorted by receiving node.
    #[inline]
    pub fn out_links(&self, n: NodeId) -> &[LinkId] {
        &self.out_links[n]
    }

    /// Incoming links of `n`, sorted by transmitting node.
    #[inline]
    pub fn in_links(&self, n: NodeId) -> &[LinkId] {
        &self.in_links[n]
    }

    /// Neighbor count J_n (out-degree).
    #[inline]
    pub fn out_degree(&self, n: NodeId) -> usize {
        self.out_links[n].len()
    }

    pub fn max_out_degree(&self) -> usize {
        self.out_links.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn find_link(&self, from: NodeId, to: NodeId) -> Option<LinkId> {
        self.lookup.get(&(from, to)).copied()
    }

    pub fn name(&self, n: NodeId) -> &str {
        &self.names[n]
    }

    pub fn node_index(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|s| s == name)
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    pub fn range(&self) -> Option<f64> {
        self.range
    }

    pub fn is_strongly_connected(&self) -> bool {
        let n = self.num_nodes();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0]);
            seen[0] = true;
            while let Some(u) = queue.pop_front() {
                let adj = if forward {
                    &self.out_links[u]
                } else {
                    &self.in_links[u]
                };
                for &l in adj {
                    let link = &self.links[l.0];
                    let v = if forward { link.to } else { link.from };
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Breadth-first hop distances on the undirected support graph.
    pub fn undirected_distances(&self) -> Vec<Vec<u32>> {
        let n = self.num_nodes();
        let mut adj = vec![Vec::new(); n];
        for l in &self.links {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        (0..n)
            .map(|src| {
                let mut dist = vec![u32::MAX; n];
                dist[src] = 0;
                let mut queue = VecDeque::from([src]);
                while let Some(u) = queue.pop_front() {
                    for &v in &adj[u] {
                        if dist[v] == u32::MAX {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                dist
            })
            .collect()
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Smallest range at which the unit-disk graph over `coords` is connected.
pub fn connectivity_range(coords: &[[f64; 2]]) -> Option<f64> {
    let n = coords.len();
    if n == 0 {
        return None;
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            pairs.push((distance(coords[a], coords[b]), a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    let mut range = 0.0;
    for (d, a, b) in pairs {
        if components == 1 {
            break;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
            range = d;
        }
    }
    Some(range)
}

/// On-disk topology description.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TopologySpec {
    Links(LinkListSpec),
    Coords(CoordSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkListSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: NodeList,
    pub links: Vec<LinkSpec>,
    #[serde(default = "default_true")]
    pub require_connected: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CoordSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub coords: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    #[serde(default)]
    pub auto_connect: bool,
    #[serde(default = "default_true")]
    pub require_connected: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum NodeList {
    Count(usize),
    Names(Vec<String>),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum NodeRef {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub from: NodeRef,
    pub to: NodeRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
    /// Also create the reverse link with the same capacity.
    #[serde(default)]
    pub bidirectional: bool,
}

fn default_true() -> bool {
    true
}
