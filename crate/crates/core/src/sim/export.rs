//! CSV and JSON export of run reports.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::SimError;

use super::experiment::RunReport;

#[derive(Serialize)]
struct Row {
    lambda: f64,
    mean_delay: Option<f64>,
    p95_delay: Option<u64>,
    throughput: f64,
    stability: &'static str,
    arrivals: u64,
    delivered: u64,
    mean_queue: f64,
    queue_growth: bool,
    max_rho: Option<f64>,
    identity_error: Option<f64>,
    transmissions_per_delivery: Option<f64>,
    token_saturation_rate: Option<f64>,
    wasted_token_rate: Option<f64>,
    violations: Option<u64>,
}

const HEADER: [&str; 15] = [
    "lambda",
    "mean_delay",
    "p95_delay",
    "throughput",
    "stability",
    "arrivals",
    "delivered",
    "mean_queue",
    "queue_growth",
    "max_rho",
    "identity_error",
    "transmissions_per_delivery",
    "token_saturation_rate",
    "wasted_token_rate",
    "violations",
];

/// One row per λ; delays in slots.
pub fn write_csv<W: Write>(report: &RunReport, out: W) -> Result<(), SimError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for p in &report.points {
        let oracle = p.stability.as_ref();
        w.serialize(Row {
            lambda: p.lambda,
            mean_delay: p.mean_delay,
            p95_delay: p.p95_delay,
            throughput: p.throughput,
            stability: p.verdict(),
            arrivals: p.arrivals,
            delivered: p.delivered,
            mean_queue: p.mean_queue,
            queue_growth: p.queue_growth,
            max_rho: oracle.map(|s| s.max_rho),
            identity_error: oracle.map(|s| s.identity_error),
            transmissions_per_delivery: p.transmissions_per_delivery,
            token_saturation_rate: p.token_saturation_rate,
            wasted_token_rate: p.wasted_token_rate,
            violations: p.violations.as_ref().map(|v| v.total()),
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_json<W: Write>(report: &RunReport, out: W) -> Result<(), SimError> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

pub fn read_json(text: &str) -> Result<RunReport, SimError> {
    Ok(serde_json::from_str(text)?)
}

fn create(path: &Path) -> Result<File, SimError> {
    File::create(path).map_err(|source| SimError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_csv(report: &RunReport, path: impl AsRef<Path>) -> Result<(), SimError> {
    write_csv(report, create(path.as_ref())?)
}

pub fn save_json(report: &RunReport, path: impl AsRef<Path>) -> Result<(), SimError> {
    let path = path.as_ref();
    let mut f = create(path)?;
    write_json(report, &mut f)?;
    f.write_all(b"\n").map_err(|source| SimError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::SimConfig;
    use crate::sim::experiment::{run_experiment, SCHEMA_VERSION};
    use crate::traffic::RNG_VERSION;

    fn empty() -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            rng: RNG_VERSION.into(),
            config: SimConfig::default(),
            points: Vec::new(),
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&empty(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("lambda,mean_delay,p95_delay,throughput,stability"));
    }

    #[test]
    fn rows_and_json_round_trip() {
        let c = SimConfig {
            topology: "fixture:wireline5".into(),
            lambda: vec![0.05, 0.1],
            slots: 3000,
            ..SimConfig::default()
        };
        let r = run_experiment(&c).unwrap();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);

        let mut json = Vec::new();
        write_json(&r, &mut json).unwrap();
        assert_eq!(read_json(std::str::from_utf8(&json).unwrap()).unwrap(), r);
    }

    #[test]
    fn unwritable_path_errors() {
        let err = save_csv(&empty(), "/nonexistent-dir/x.csv").unwrap_err();
        assert!(matches!(err, SimError::Write { .. }));
    }
}
