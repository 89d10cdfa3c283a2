//! Run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::net::topology::NodeRef;
use crate::net::{InterferenceKind, SchedulerKind, Topology, ORACLE_LIMIT};
use crate::router::{default_bucket_cap, RouterKind};
use crate::traffic::{DestinationMode, RNG_VERSION};

const WIRELINE31: &str = include_str!("../../fixtures/wireline31.json");
const WIRELESS30: &str = include_str!("../../fixtures/wireless30.json");
const WIRELINE5: &str = include_str!("../../fixtures/wireline5.json");

/// Topology named by `fixture:<name>` instead of a path.
pub fn fixture(name: &str) -> Option<&'static str> {
    match name {
        "wireline31" => Some(WIRELINE31),
        "wireless30" => Some(WIRELESS30),
        "wireline5" => Some(WIRELINE5),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Traditional back-pressure (M is forced to 0).
    Bp,
    /// M-back-pressure.
    Mbp,
    #[default]
    Parn,
    ParnCoding,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interference {
    #[default]
    Wireline,
    KHop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coding {
    Off,
    On,
}

/// An explicit flow whose rate is `share` × λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub source: NodeRef,
    pub dest: NodeRef,
    #[serde(default = "one")]
    pub share: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Path to a topology file, or `fixture:<name>`.
    pub topology: String,
    pub algorithm: Algorithm,
    pub m: i64,
    pub epsilon: Option<f64>,
    pub beta: f64,
    /// Per-node arrival rates to sweep.
    pub lambda: Vec<f64>,
    /// Per-node λ overrides by node name or index, applied at every point.
    pub node_lambda: BTreeMap<String, f64>,
    /// Explicit flows; replaces the degree-based destination split.
    pub flows: Option<Vec<FlowSpec>>,
    pub slots: u64,
    pub warmup: Option<u64>,
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub router: RouterKind,
    pub extra_activation: bool,
    pub bucket_cap: Option<u32>,
    pub interference: Interference,
    pub k: u32,
    pub coding: Option<Coding>,
    pub destination_mode: DestinationMode,
    pub sigma_stride: u32,
    pub stability_tolerance: f64,
    pub rng: String,
    pub audit: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            topology: "fixture:wireline31".into(),
            algorithm: Algorithm::Parn,
            m: 2,
            epsilon: None,
            beta: 0.02,
            lambda: vec![0.1],
            node_lambda: BTreeMap::new(),
            flows: None,
            slots: 100_000,
            warmup: None,
            seed: 1,
            scheduler: SchedulerKind::Lwf,
            router: RouterKind::Probabilistic,
            extra_activation: true,
            bucket_cap: None,
            interference: Interference::Wireline,
            k: 2,
            coding: None,
            destination_mode: DestinationMode::Sampled,
            sigma_stride: 1,
            stability_tolerance: 0.01,
            rng: RNG_VERSION.into(),
            audit: false,
        }
    }
}

impl SimConfig {
    /// Reads JSON, or TOML when the extension is `.toml`. Relative topology
    /// paths are resolved against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text)?
        } else {
            serde_json::from_str(&text)?
        };
        if !cfg.topology.starts_with("fixture:") && Path::new(&cfg.topology).is_relative() {
            if let Some(dir) = path.parent() {
                cfg.topology = dir.join(&cfg.topology).display().to_string();
            }
        }
        Ok(cfg)
    }

    pub fn wireless(&self) -> bool {
        self.interference == Interference::KHop
    }

    pub fn coding_enabled(&self) -> bool {
        match self.coding {
            Some(c) => c == Coding::On,
            None => self.algorithm == Algorithm::ParnCoding,
        }
    }

    /// Shadow inflation: explicit value, else 0.1 on wireless, 0 on wireline
    /// with extra activation and 0.02 on wireline without.
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(match (self.wireless(), self.extra_activation) {
            (true, _) => 0.1,
            (false, true) => 0.0,
            (false, false) => 0.02,
        })
    }

    /// Explicit warmup, else 10% of the run with a floor of 2000 slots that
    /// never exceeds half the run.
    pub fn warmup(&self) -> u64 {
        self.warmup
            .unwrap_or_else(|| (self.slots / 10).max(2000).min(self.slots / 2))
    }

    pub fn bucket_cap(&self) -> u32 {
        self.bucket_cap.unwrap_or_else(|| default_bucket_cap(self.epsilon()))
    }

    /// M actually used: traditional back-pressure ignores the configured M.
    pub fn effective_m(&self) -> i64 {
        if self.algorithm == Algorithm::Bp {
            0
        } else {
            self.m
        }
    }

    pub fn interference_kind(&self) -> InterferenceKind {
        match self.interference {
            Interference::Wireline => InterferenceKind::Wireline,
            Interference::KHop => InterferenceKind::KHop(self.k),
        }
    }

    pub fn load_topology(&self) -> Result<Topology, SimError> {
        match self.topology.strip_prefix("fixture:") {
            Some(name) => {
                let text = fixture(name)
                    .ok_or_else(|| SimError::Config(format!("unknown fixture {name}")))?;
                Ok(Topology::from_json(text)?)
            }
            None => Ok(Topology::load(PathBuf::from(&self.topology))?),
        }
    }

    /// Checks everything that does not need the topology.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.rng != RNG_VERSION {
            return bad(format!("rng {} unsupported, expected {RNG_VERSION}", self.rng));
        }
        if self.slots == 0 {
            return bad("slots must be positive".into());
        }
        if self.warmup() >= self.slots {
            return bad(format!("warmup {} must be below slots {}", self.warmup(), self.slots));
        }
        if self.lambda.is_empty() {
            return bad("lambda list is empty".into());
        }
        if let Some(l) = self
            .lambda
            .iter()
            .chain(self.node_lambda.values())
            .find(|l| !(l.is_finite() && **l >= 0.0))
        {
            return bad(format!("arrival rate {l} must be finite and nonnegative"));
        }
        if self.m < 0 {
            return bad("M must be nonnegative".into());
        }
        let eps = self.epsilon();
        if !(0.0..1.0).contains(&eps) {
            return bad(format!("epsilon {eps} outside [0, 1)"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta {} outside (0, 1)", self.beta));
        }
        if self.sigma_stride == 0 {
            return bad("sigma_stride must be positive".into());
        }
        if self.bucket_cap == Some(0) {
            return bad("bucket_cap must be positive".into());
        }
        if self.wireless() && self.k == 0 {
            return bad("k-hop interference needs k >= 1".into());
        }
        if self.coding_enabled() && !self.wireless() {
            return bad("coding requires k-hop interference".into());
        }
        if self.coding_enabled() && matches!(self.algorithm, Algorithm::Bp | Algorithm::Mbp) {
            return bad("coding is only available with parn".into());
        }
        if !(0.0..1.0).contains(&self.stability_tolerance) {
            return bad("stability_tolerance outside [0, 1)".into());
        }
        if let Some(flows) = &self.flows {
            if let Some(f) = flows.iter().find(|f| !(f.share.is_finite() && f.share >= 0.0)) {
                return bad(format!("flow share {} must be finite and nonnegative", f.share));
            }
        }
        Ok(())
    }

    /// Checks that depend on the loaded topology and schedule space size.
    pub fn validate_for(&self, topology: &Topology, space_len: usize) -> Result<(), SimError> {
        if self.scheduler == SchedulerKind::Oracle && space_len > ORACLE_LIMIT {
            return Err(SimError::Config(format!(
                "oracle scheduler limited to {ORACLE_LIMIT} elements, this network has {space_len}"
            )));
        }
        for key in self.node_lambda.keys() {
            resolve(topology, key)?;
        }
        Ok(())
    }
}

/// Node by name, falling back to a numeric index.
pub fn resolve(topology: &Topology, key: &str) -> Result<usize, SimError> {
    topology
        .node_index(key)
        .or_else(|| key.parse().ok().filter(|&i: &usize| i < topology.num_nodes()))
        .ok_or_else(|| SimError::Config(format!("unknown node {key}")))
}

pub fn resolve_ref(topology: &Topology, r: &NodeRef) -> Result<usize, SimError> {
    match r {
        NodeRef::Index(i) if *i < topology.num_nodes() => Ok(*i),
        NodeRef::Index(i) => Err(SimError::Config(format!("unknown node {i}"))),
        NodeRef::Name(s) => resolve(topology, s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_network_kind() {
        let mut c = SimConfig::default();
        assert_eq!(c.epsilon(), 0.0);
        c.extra_activation = false;
        assert_eq!(c.epsilon(), 0.02);
        c.interference = Interference::KHop;
        assert_eq!(c.epsilon(), 0.1);
        assert_eq!(c.bucket_cap(), 100);
        assert_eq!(c.warmup(), 10_000);
        c.slots = 3000;
        assert_eq!(c.warmup(), 1500);
    }

    #[test]
    fn rejects_bad_configs() {
        let c = SimConfig { slots: 100, warmup: Some(200), ..SimConfig::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { lambda: vec![-0.1], ..SimConfig::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { coding: Some(Coding::On), ..SimConfig::default() };
        assert!(c.validate().is_err());
        let c = SimConfig { rng: "pcg".into(), ..SimConfig::default() };
        assert!(c.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
    }

    #[test]
    fn fixtures_load() {
        let wl = SimConfig::default().load_topology().unwrap();
        assert_eq!(wl.num_nodes(), 31);
        let c = SimConfig { topology: "fixture:wireless30".into(), ..SimConfig::default() };
        let w = c.load_topology().unwrap();
        assert_eq!(w.num_nodes(), 30);
        assert!(w.is_strongly_connected());
        assert!(w.links().iter().all(|l| l.capacity == 1));
    }

    #[test]
    fn parses_json_and_toml() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("c.json");
        std::fs::write(&json, r#"{"algorithm": "mbp", "m": 3, "lambda": [0.1, 0.2]}"#).unwrap();
        let c = SimConfig::load(&json).unwrap();
        assert_eq!((c.algorithm, c.m, c.lambda.len()), (Algorithm::Mbp, 3, 2));
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "algorithm = \"parn-coding\"\ninterference = \"k-hop\"\ntopology = \"net.json\"\n",
        )
        .unwrap();
        let c = SimConfig::load(&toml_path).unwrap();
        assert!(c.coding_enabled());
        assert!(c.topology.ends_with("net.json") && c.topology.len() > "net.json".len());
        std::fs::write(&json, r#"{"lamda": [0.1]}"#).unwrap();
        assert!(SimConfig::load(&json).is_err());
    }
}
