use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use parn::net::{
    greedy_maximal_schedule, is_conflict_free, is_maximal, max_weight_schedule_oracle, InterferenceKind,
    InterferenceModel, Link, ScheduleSpace, Topology,
};
use parn::sim::{export, run_experiment, RunReport, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "parn", version, about = "Back-pressure and shadow-queue routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration at each of its arrival rates.
    Run(RunArgs),
    /// Run a configuration over an evenly spaced range of arrival rates.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Run with every per-slot invariant audited; exits nonzero on violations.
    Validate(RunArgs),
    /// Compare greedy scheduling against brute force on random small networks.
    Oracle {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 12)]
        max_links: usize,
        /// Interference hops.
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON configuration file.
    config: Option<PathBuf>,
    #[command(flatten)]
    set: Overrides,
    /// Write per-rate results as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

/// Flags named after configuration keys; each overrides the file value.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    topology: Option<String>,
    /// bp, mbp, parn or parn-coding.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    m: Option<i64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated arrival rates per node.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// lwf or oracle.
    #[arg(long)]
    scheduler: Option<String>,
    /// probabilistic or token.
    #[arg(long)]
    router: Option<String>,
    #[arg(long)]
    extra_activation: Option<bool>,
    #[arg(long)]
    bucket_cap: Option<u32>,
    /// wireline or k-hop.
    #[arg(long)]
    interference: Option<String>,
    #[arg(long)]
    k: Option<u32>,
    /// on or off.
    #[arg(long)]
    coding: Option<String>,
    /// sampled or static.
    #[arg(long)]
    destination_mode: Option<String>,
    #[arg(long)]
    sigma_stride: Option<u32>,
    #[arg(long)]
    stability_tolerance: Option<f64>,
    #[arg(long)]
    audit: bool,
}

impl Overrides {
    fn entries(&self) -> Vec<(&'static str, toml::Value)> {
        let mut out: Vec<(&'static str, toml::Value)> = Vec::new();
        let mut put = |key, v: Option<toml::Value>| {
            if let Some(v) = v {
                out.push((key, v));
            }
        };
        let s = |v: &Option<String>| v.clone().map(toml::Value::String);
        let int = |v: Option<u64>| v.map(|x| toml::Value::Integer(x as i64));
        put("topology", s(&self.topology));
        put("algorithm", s(&self.algorithm));
        put("m", self.m.map(toml::Value::Integer));
        put("epsilon", self.epsilon.map(toml::Value::Float));
        put("beta", self.beta.map(toml::Value::Float));
        put(
            "lambda",
            self.lambda
                .clone()
                .map(|l| toml::Value::Array(l.into_iter().map(toml::Value::Float).collect())),
        );
        put("slots", int(self.slots));
        put("warmup", int(self.warmup));
        put("seed", int(self.seed));
        put("scheduler", s(&self.scheduler));
        put("router", s(&self.router));
        put("extra_activation", self.extra_activation.map(toml::Value::Boolean));
        put("bucket_cap", int(self.bucket_cap.map(u64::from)));
        put("interference", s(&self.interference));
        put("k", int(self.k.map(u64::from)));
        put("coding", s(&self.coding));
        put("destination_mode", s(&self.destination_mode));
        put("sigma_stride", int(self.sigma_stride.map(u64::from)));
        put("stability_tolerance", self.stability_tolerance.map(toml::Value::Float));
        if self.audit {
            put("audit", Some(toml::Value::Boolean(true)));
        }
        out
    }
}

fn load(args: &RunArgs) -> Result<SimConfig> {
    let base = match &args.config {
        Some(path) => SimConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => SimConfig::default(),
    };
    let mut value = toml::Value::try_from(&base).context("encoding configuration")?;
    let table = value.as_table_mut().expect("configuration is a table");
    for (key, v) in args.set.entries() {
        table.insert(key.to_string(), v);
    }
    let cfg: SimConfig = value.try_into().context("applying flags")?;
    cfg.validate()?;
    Ok(cfg)
}

fn print_table(report: &RunReport) {
    println!(
        "{:>9} {:>11} {:>6} {:>10} {:>9} {:>9} {:>10}",
        "lambda", "mean_delay", "p95", "throughput", "max_rho", "verdict", "violations"
    );
    for p in &report.points {
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:>9.4} {:>11} {:>6} {:>10.4} {:>9} {:>9} {:>10}",
            p.lambda,
            fmt_opt(p.mean_delay),
            p.p95_delay.map_or("-".to_string(), |x| x.to_string()),
            p.throughput,
            fmt_opt(p.stability.as_ref().map(|s| s.max_rho)),
            p.verdict(),
            p.violations.as_ref().map_or("-".to_string(), |v| v.total().to_string()),
        );
    }
}

fn execute(args: &RunArgs, cfg: SimConfig) -> Result<RunReport> {
    let report = run_experiment(&cfg)?;
    if !args.quiet {
        print_table(&report);
    }
    if let Some(path) = &args.csv {
        export::save_csv(&report, path)?;
    }
    if let Some(path) = &args.json {
        export::save_json(&report, path)?;
    }
    Ok(report)
}

fn oracle(instances: usize, max_links: usize, k: u32, seed: u64) -> Result<bool> {
    if max_links == 0 || max_links > 20 {
        bail!("max-links must be between 1 and 20");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut done, mut bad) = (0, 0);
    let mut worst = f64::INFINITY;
    while done < instances {
        let n = rng.gen_range(3..=7usize);
        let want = rng.gen_range(1..=max_links.min(n * (n - 1)));
        let mut links: Vec<Link> = Vec::new();
        while links.len() < want {
            let (from, to) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if from != to && !links.iter().any(|l| l.from == from && l.to == to) {
                links.push(Link { from, to, capacity: rng.gen_range(1..=3) });
            }
        }
        let Ok(topo) = Topology::new(n, links) else { continue };
        let model = InterferenceModel::new(&topo, InterferenceKind::KHop(k))?;
        let space = ScheduleSpace::point_to_point(&topo, &model);
        let weights: Vec<f64> = (0..space.len()).map(|_| f64::from(rng.gen_range(-4..=12))).collect();
        let greedy = greedy_maximal_schedule(&space, &weights);
        let (_, best) = max_weight_schedule_oracle(&space, &weights)?;
        let value = greedy.value(&space, &weights);
        let valid = is_conflict_free(&space, &greedy) && is_maximal(&space, &greedy, |e| weights[e] > 0.0);
        if best > 0.0 {
            worst = worst.min(value / best);
        }
        if !valid {
            bad += 1;
        }
        done += 1;
    }
    println!("instances {done}, invalid greedy schedules {bad}, worst greedy/optimal {worst:.3}");
    Ok(bad == 0)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            execute(&args, cfg)?;
        }
        Command::Sweep { run, from, to, points } => {
            if points == 0 || !(to >= from && from >= 0.0) {
                bail!("need 0 <= from <= to and at least one point");
            }
            let mut cfg = load(&run)?;
            cfg.lambda = (0..points)
                .map(|i| match points {
                    1 => from,
                    _ => from + (to - from) * i as f64 / (points - 1) as f64,
                })
                .collect();
            execute(&run, cfg)?;
        }
        Command::Validate(args) => {
            let mut cfg = load(&args)?;
            cfg.audit = true;
            let report = execute(&args, cfg)?;
            let total = report.violations();
            if total > 0 {
                for p in &report.points {
                    if let Some(first) = p.violations.as_ref().and_then(|v| v.first.as_ref()) {
                        eprintln!("lambda {}: {first}", p.lambda);
                    }
                }
                eprintln!("{total} invariant violations");
                return Ok(ExitCode::from(2));
            }
            println!("no invariant violations");
        }
        Command::Oracle { instances, max_links, k, seed } => {
            if !oracle(instances, max_links, k, seed)? {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
