//! Engines behind one interface, built from a configuration.

use std::sync::Arc;

use crate::audit::AuditLog;
use crate::backpressure::{BpEngine, SlotSummary};
use crate::error::SimError;
use crate::net::{InterferenceModel, ScheduleSpace, Topology};
use crate::packet::Delivery;
use crate::router::{ParnEngine, ParnParams, RateCounters};
use crate::shadow::Layout;
use crate::traffic::{degree_pmf, ArrivalBatch, ArrivalProcess, Flow};

use super::config::{resolve, resolve_ref, Algorithm, SimConfig};

#[derive(Clone, Debug)]
pub enum Engine {
    Bp(BpEngine),
    Parn(Box<ParnEngine>),
}

impl Engine {
    pub fn run_slot(&mut self, arrivals: &ArrivalBatch, deliveries: &mut Vec<Delivery>) -> SlotSummary {
        match self {
            Engine::Bp(e) => e.run_slot(arrivals, deliveries),
            Engine::Parn(e) => e.run_slot(arrivals, deliveries),
        }
    }

    pub fn queued(&self) -> u64 {
        match self {
            Engine::Bp(e) => e.queued(),
            Engine::Parn(e) => e.queued(),
        }
    }

    pub fn shadow_queued(&self) -> u64 {
        match self {
            Engine::Bp(_) => 0,
            Engine::Parn(e) => e.shadow().total(),
        }
    }

    pub fn begin_window(&mut self) {
        if let Engine::Parn(e) = self {
            e.begin_window();
        }
    }

    pub fn window(&self) -> Option<&RateCounters> {
        match self {
            Engine::Bp(_) => None,
            Engine::Parn(e) => e.window(),
        }
    }

    pub fn audit(&self) -> Option<&AuditLog> {
        match self {
            Engine::Bp(e) => e.audit(),
            Engine::Parn(e) => e.audit(),
        }
    }

    /// (saturation events, wasted tokens) since the start of the run.
    pub fn token_counts(&self) -> Option<(u64, u64)> {
        match self {
            Engine::Parn(e) => e.router().tokens().map(|t| (t.saturations(), t.wasted())),
            Engine::Bp(_) => None,
        }
    }

    pub fn coded_pairs(&self) -> u64 {
        match self {
            Engine::Parn(e) => e.coded_pairs(),
            Engine::Bp(_) => 0,
        }
    }

    pub fn as_parn(&self) -> Option<&ParnEngine> {
        match self {
            Engine::Parn(e) => Some(e),
            Engine::Bp(_) => None,
        }
    }
}

/// A validated configuration with its network built once and shared by
/// every sweep point.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SimConfig,
    pub topology: Arc<Topology>,
    pub space: Arc<ScheduleSpace>,
    pub layout: Option<Arc<Layout>>,
}

impl Scenario {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let topology = config.load_topology()?;
        Self::with_topology(config, topology)
    }

    pub fn with_topology(config: SimConfig, topology: Topology) -> Result<Self, SimError> {
        config.validate()?;
        if !topology.is_strongly_connected() {
            return Err(SimError::Config("topology must be strongly connected".into()));
        }
        let model = InterferenceModel::new(&topology, config.interference_kind())?;
        let coding = config.coding_enabled();
        let space = if coding {
            ScheduleSpace::with_broadcasts(&topology, &model)
        } else {
            ScheduleSpace::point_to_point(&topology, &model)
        };
        config.validate_for(&topology, space.len())?;
        let layout = match config.algorithm {
            Algorithm::Bp | Algorithm::Mbp => None,
            _ if coding => Some(Arc::new(Layout::coded(&topology))),
            _ => Some(Arc::new(Layout::uncoded(&topology))),
        };
        Ok(Self {
            config,
            topology: Arc::new(topology),
            space: Arc::new(space),
            layout,
        })
    }

    pub fn parn_params(&self) -> ParnParams {
        let c = &self.config;
        ParnParams {
            m: c.effective_m(),
            epsilon: c.epsilon(),
            beta: c.beta,
            sigma_stride: c.sigma_stride,
            router: c.router,
            extra_activation: c.extra_activation,
            bucket_cap: c.bucket_cap(),
            scheduler: c.scheduler,
        }
    }

    pub fn engine(&self, route_seed: u64) -> Engine {
        let c = &self.config;
        match &self.layout {
            None => {
                let e = BpEngine::new(self.topology.clone(), self.space.clone(), c.effective_m(), c.scheduler);
                Engine::Bp(if c.audit { e.with_audit() } else { e })
            }
            Some(layout) => {
                let e = ParnEngine::new(
                    self.topology.clone(),
                    self.space.clone(),
                    layout.clone(),
                    self.parn_params(),
                    route_seed,
                );
                Engine::Parn(Box::new(if c.audit { e.with_audit() } else { e }))
            }
        }
    }

    /// Explicit flows at λ × share each, when configured.
    pub fn flows(&self, lambda: f64) -> Result<Option<Vec<Flow>>, SimError> {
        let Some(specs) = &self.config.flows else { return Ok(None) };
        let mut flows = Vec::with_capacity(specs.len());
        for (id, f) in specs.iter().enumerate() {
            let source = resolve_ref(&self.topology, &f.source)?;
            let dest = resolve_ref(&self.topology, &f.dest)?;
            if source == dest {
                return Err(SimError::Config(format!("flow {id} has source equal to destination")));
            }
            flows.push(Flow { id, source, dest, rate: lambda * f.share });
        }
        Ok(Some(flows))
    }

    pub fn node_rates(&self, lambda: f64) -> Result<Vec<f64>, SimError> {
        let mut rates = vec![lambda; self.topology.num_nodes()];
        for (key, &rate) in &self.config.node_lambda {
            rates[resolve(&self.topology, key)?] = rate;
        }
        Ok(rates)
    }

    pub fn arrivals(&self, lambda: f64, seed: u64) -> Result<ArrivalProcess, SimError> {
        let eps = self.config.epsilon();
        Ok(match self.flows(lambda)? {
            Some(flows) => ArrivalProcess::from_flows(flows, eps, seed),
            None => ArrivalProcess::new(
                &self.node_rates(lambda)?,
                &degree_pmf(&self.topology),
                self.config.destination_mode,
                eps,
                seed,
            ),
        })
    }
}
