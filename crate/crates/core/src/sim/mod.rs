//! Configuration, slot loop, metrics, stability oracle and export.

pub mod config;
pub mod engine;
pub mod experiment;
pub mod export;
pub mod metrics;
pub mod stability;

pub use config::{Algorithm, Coding, FlowSpec, Interference, SimConfig};
pub use engine::{Engine, Scenario};
pub use experiment::{run_experiment, run_point, run_point_with, run_scenario, PointReport, RunReport, SCHEMA_VERSION};
pub use metrics::{Collector, SlotMetrics};
pub use stability::{identity_error, intensity, queue_growth, stability_oracle, LinkIntensity, StabilityReport};
