//! Exogenous arrivals: Poisson flows, degree-based destinations and
//! shadow-traffic inflation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::{NodeId, Topology};

/// Identifier of the random-number stream layout. Bump when the draw order
/// of any generator changes so old reports are not silently compared.
pub const RNG_VERSION: &str = "chacha8-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: usize,
    pub source: NodeId,
    pub dest: NodeId,
    /// Mean packets per slot.
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArrivalEntry {
    pub flow: usize,
    pub source: NodeId,
    pub dest: NodeId,
    pub real: u32,
    pub shadow: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArrivalBatch {
    pub slot: u64,
    pub entries: Vec<ArrivalEntry>,
}

impl ArrivalBatch {
    pub fn real_total(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.real)).sum()
    }

    pub fn shadow_total(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.shadow)).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DestinationMode {
    /// One Poisson process per node; each packet draws its destination.
    #[default]
    Sampled,
    /// One Poisson process per (source, destination) pair.
    Static,
}

/// Per-source destination probabilities, row-major `[source * N + dest]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DestinationPmf {
    num_nodes: usize,
    probs: Vec<f64>,
}

impl DestinationPmf {
    pub fn prob(&self, source: NodeId, dest: NodeId) -> f64 {
        self.probs[source * self.num_nodes + dest]
    }

    pub fn row(&self, source: NodeId) -> &[f64] {
        &self.probs[source * self.num_nodes..(source + 1) * self.num_nodes]
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
}

/// P(n, d) = (J_d + J_n) / Σ_{k≠n} (J_k + J_n) with J the out-degree.
pub fn degree_pmf(topology: &Topology) -> DestinationPmf {
    let n = topology.num_nodes();
    let degree: Vec<f64> = (0..n).map(|v| topology.out_degree(v) as f64).collect();
    let mut probs = vec![0.0; n * n];
    for src in 0..n {
        let total: f64 = (0..n)
            .filter(|&k| k != src)
            .map(|k| degree[k] + degree[src])
            .sum();
        if total <= 0.0 {
            continue;
        }
        for dst in (0..n).filter(|&d| d != src) {
            probs[src * n + dst] = (degree[dst] + degree[src]) / total;
        }
    }
    DestinationPmf {
        num_nodes: n,
        probs,
    }
}

/// Static per-pair flows with x(n→d) = λ_n · P(n, d), one per ordered pair.
pub fn flows_from_pmf(node_rates: &[f64], pmf: &DestinationPmf) -> Vec<Flow> {
    let n = pmf.num_nodes();
    let mut flows = Vec::with_capacity(n * n.saturating_sub(1));
    for src in 0..n {
        for dst in (0..n).filter(|&d| d != src) {
            flows.push(Flow {
                id: flows.len(),
                source: src,
                dest: dst,
                rate: node_rates[src] * pmf.prob(src, dst),
            });
        }
    }
    flows
}

/// Poisson variate by sequential inversion of the CDF.
pub fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 30.0 {
        // exp(-mean) loses precision; split into independent halves.
        let half = mean / 2.0;
        return poisson_inversion(half, rng) + poisson_inversion(half, rng);
    }
    let u: f64 = rng.gen();
    let mut k = 0u32;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf && p > 0.0 {
        k += 1;
        p *= mean / f64::from(k);
        cdf += p;
    }
    k
}

/// Shadow count for `real` arrivals: each spawns one shadow packet plus one
/// more with probability `epsilon`.
pub fn inflate<R: Rng + ?Sized>(real: u32, epsilon: f64, rng: &mut R) -> u32 {
    if epsilon <= 0.0 {
        return real;
    }
    real + (0..real).filter(|_| rng.gen::<f64>() < epsilon).count() as u32
}

/// One slot of arrivals for static flows.
pub fn generate_arrivals<R: Rng + ?Sized>(
    flows: &[Flow],
    epsilon: f64,
    slot: u64,
    rng: &mut R,
) -> ArrivalBatch {
    let mut batch = ArrivalBatch {
        slot,
        entries: Vec::new(),
    };
    push_static(flows, epsilon, rng, &mut batch.entries);
    batch
}

fn push_static<R: Rng + ?Sized>(
    flows: &[Flow],
    epsilon: f64,
    rng: &mut R,
    out: &mut Vec<ArrivalEntry>,
) {
    for f in flows {
        let real = poisson_inversion(f.rate, rng);
        if real > 0 {
            out.push(ArrivalEntry {
                flow: f.id,
                source: f.source,
                dest: f.dest,
                real,
                shadow: inflate(real, epsilon, rng),
            });
        }
    }
}

#[derive(Clone, Debug)]
enum Source {
    Static(Vec<Flow>),
    Sampled {
        rates: Vec<f64>,
        /// Per source: cumulative probabilities and matching destinations.
        cdf: Vec<Vec<(f64, NodeId)>>,
        num_nodes: usize,
    },
}

/// Stateful arrival generator owning its random stream.
#[derive(Clone, Debug)]
pub struct ArrivalProcess {
    source: Source,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl ArrivalProcess {
    pub fn from_flows(flows: Vec<Flow>, epsilon: f64, seed: u64) -> Self {
        Self {
            source: Source::Static(flows),
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn new(
        node_rates: &[f64],
        pmf: &DestinationPmf,
        mode: DestinationMode,
        epsilon: f64,
        seed: u64,
    ) -> Self {
        let source = match mode {
            DestinationMode::Static => Source::Static(flows_from_pmf(node_rates, pmf)),
            DestinationMode::Sampled => {
                let n = pmf.num_nodes();
                let cdf = (0..n)
                    .map(|src| {
                        let mut acc = 0.0;
                        pmf.row(src)
                            .iter()
                            .enumerate()
                            .filter(|&(_, &p)| p > 0.0)
                            .map(|(d, &p)| {
                                acc += p;
                                (acc, d)
                            })
                            .collect()
                    })
                    .collect();
                Source::Sampled {
                    rates: node_rates.to_vec(),
                    cdf,
                    num_nodes: n,
                }
            }
        };
        Self {
            source,
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Fills `batch` with the arrivals of `slot`.
    pub fn generate_into(&mut self, slot: u64, batch: &mut ArrivalBatch) {
        batch.slot = slot;
        batch.entries.clear();
        match &self.source {
            Source::Static(flows) => push_static(flows, self.epsilon, &mut self.rng, &mut batch.entries),
            Source::Sampled {
                rates,
                cdf,
                num_nodes,
            } => {
                for (src, &rate) in rates.iter().enumerate() {
                    let row = &cdf[src];
                    if row.is_empty() {
                        continue;
                    }
                    for _ in 0..poisson_inversion(rate, &mut self.rng) {
                        let u = self.rng.gen::<f64>() * row.last().unwrap().0;
                        let idx = row.partition_point(|&(c, _)| c <= u).min(row.len() - 1);
                        let dest = row[idx].1;
                        let shadow = inflate(1, self.epsilon, &mut self.rng);
                        batch.entries.push(ArrivalEntry {
                            flow: src * num_nodes + dest,
                            source: src,
                            dest,
                            real: 1,
                            shadow,
                        });
                    }
                }
            }
        }
    }

    pub fn generate(&mut self, slot: u64) -> ArrivalBatch {
        let mut batch = ArrivalBatch::default();
        self.generate_into(slot, &mut batch);
        batch
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of an independent stream for one sweep point:
/// `seed ⊕ hash(λ, run index, stream)`.
pub fn stream_seed(seed: u64, lambda: f64, run_index: u64, stream: u64) -> u64 {
    seed ^ mix64(lambda.to_bits() ^ mix64(run_index ^ mix64(stream)))
}
