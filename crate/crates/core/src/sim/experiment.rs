//! Single runs and λ sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::AuditLog;
use crate::error::SimError;
use crate::packet::Delivery;
use crate::traffic::{stream_seed, ArrivalBatch, RNG_VERSION};

use super::config::SimConfig;
use super::engine::{Engine, Scenario};
use super::metrics::{Collector, SlotMetrics};
use super::stability::{queue_growth, stability_oracle, StabilityReport};

pub const SCHEMA_VERSION: u32 = 1;

const ARRIVAL_STREAM: u64 = 0;
const ROUTING_STREAM: u64 = 1;

/// Results for one λ. Delay and delivery counts cover packets born after
/// warmup; throughput counts every delivery after warmup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub lambda: f64,
    pub slots: u64,
    pub warmup: u64,
    pub no_traffic: bool,
    pub arrivals: u64,
    pub shadow_arrivals: u64,
    pub total_arrivals: u64,
    pub total_shadow_arrivals: u64,
    pub delivered: u64,
    pub mean_delay: Option<f64>,
    pub p95_delay: Option<u64>,
    pub max_delay: Option<u64>,
    pub throughput: f64,
    pub mean_queue: f64,
    pub mean_shadow_queue: f64,
    pub queue_quarters: [f64; 4],
    pub queue_growth: bool,
    pub transmissions: u64,
    pub transmissions_per_delivery: Option<f64>,
    pub coded_pairs: u64,
    pub token_saturation_rate: Option<f64>,
    pub wasted_token_rate: Option<f64>,
    pub stability: Option<StabilityReport>,
    pub violations: Option<AuditLog>,
}

impl PointReport {
    /// Oracle verdict where available, else the absence of queue growth.
    pub fn is_stable(&self) -> bool {
        match &self.stability {
            Some(s) => s.stable,
            None => !self.queue_growth,
        }
    }

    /// `stable`/`unstable` from the oracle; `growing`/`no-oracle` from queue trend alone.
    pub fn verdict(&self) -> &'static str {
        match &self.stability {
            Some(s) if s.stable => "stable",
            Some(_) => "unstable",
            None if self.queue_growth => "growing",
            None => "no-oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub rng: String,
    pub config: SimConfig,
    pub points: Vec<PointReport>,
}

impl RunReport {
    pub fn violations(&self) -> u64 {
        self.points
            .iter()
            .filter_map(|p| p.violations.as_ref())
            .map(AuditLog::total)
            .sum()
    }
}

/// Runs sweep point `index`, calling `observe` after every slot.
pub fn run_point_with(
    scenario: &Scenario,
    index: usize,
    mut observe: impl FnMut(&SlotMetrics, &Engine),
) -> Result<PointReport, SimError> {
    let c = &scenario.config;
    let lambda = c.lambda[index];
    let slots = c.slots;
    let warmup = c.warmup();
    let mut arrivals = scenario.arrivals(lambda, stream_seed(c.seed, lambda, index as u64, ARRIVAL_STREAM))?;
    let mut engine = scenario.engine(stream_seed(c.seed, lambda, index as u64, ROUTING_STREAM));
    let mut collector = Collector::new(slots, warmup);
    let mut batch = ArrivalBatch::default();
    let mut deliveries: Vec<Delivery> = Vec::new();
    let mut tokens_at_warmup = (0, 0);
    for t in 0..slots {
        if t == warmup {
            engine.begin_window();
            tokens_at_warmup = engine.token_counts().unwrap_or_default();
        }
        arrivals.generate_into(t, &mut batch);
        deliveries.clear();
        let summary = engine.run_slot(&batch, &mut deliveries);
        let m = SlotMetrics::new(&batch, &deliveries, summary, engine.queued(), engine.shadow_queued());
        collector.record(&m, &deliveries);
        observe(&m, &engine);
    }

    let window = collector.window_slots() as f64;
    let quarters = collector.quarter_means();
    let stability = engine.window().map(|w| {
        let endpoints: Vec<(usize, usize)> =
            scenario.topology.links().iter().map(|l| (l.from, l.to)).collect();
        stability_oracle(w, &endpoints, c.epsilon(), c.stability_tolerance)
    });
    let tokens = engine.token_counts().map(|(s, w)| {
        (
            (s - tokens_at_warmup.0) as f64 / window,
            (w - tokens_at_warmup.1) as f64 / window,
        )
    });
    Ok(PointReport {
        lambda,
        slots,
        warmup,
        no_traffic: collector.total_arrivals == 0,
        arrivals: collector.arrivals,
        shadow_arrivals: collector.shadow_arrivals,
        total_arrivals: collector.total_arrivals,
        total_shadow_arrivals: collector.total_shadow_arrivals,
        delivered: collector.delivered,
        mean_delay: collector.mean_delay(),
        p95_delay: collector.delay_quantile(0.95),
        max_delay: collector.max_delay(),
        throughput: collector.window_deliveries as f64 / window,
        mean_queue: collector.mean_queue_last_half(),
        mean_shadow_queue: collector.mean_shadow_last_half(),
        queue_quarters: quarters,
        queue_growth: queue_growth(quarters[1], quarters[3]),
        transmissions: collector.window_transmissions,
        transmissions_per_delivery: (collector.window_deliveries > 0)
            .then(|| collector.window_transmissions as f64 / collector.window_deliveries as f64),
        coded_pairs: engine.coded_pairs(),
        token_saturation_rate: tokens.map(|t| t.0),
        wasted_token_rate: tokens.map(|t| t.1),
        stability,
        violations: engine.audit().cloned(),
    })
}

pub fn run_point(scenario: &Scenario, index: usize) -> Result<PointReport, SimError> {
    run_point_with(scenario, index, |_, _| {})
}

/// Runs every λ of the configuration in parallel.
pub fn run_experiment(config: &SimConfig) -> Result<RunReport, SimError> {
    let scenario = Scenario::new(config.clone())?;
    run_scenario(&scenario)
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunReport, SimError> {
    let points = (0..scenario.config.lambda.len())
        .into_par_iter()
        .map(|i| run_point(scenario, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        rng: RNG_VERSION.into(),
        config: scenario.config.clone(),
        points,
    })
}
