//! Command-line front end. The binary only parses arguments and maps errors
//! to exit codes; every subcommand lives here so it can be driven from tests.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime, Timelike};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{self, ConfigError, ScenarioFile};
use crate::emissions;
use crate::geo::{GeoPoint, LonLat, Projection};
use crate::ingest::{self, SyntheticSpec};
use crate::queueing::{self, QueueParams, ServiceLaw, XiConvention};
use crate::sim::{self, SimOptions, SimReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
#[error("{kind}: {message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl std::fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Runtime => "runtime",
        })
    }
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Config, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Runtime, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Runtime => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(_) => CliError::config(e.to_string()),
            ConfigError::Data(m) => CliError::data(m),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "etaxi", version, about = "Electric taxi fleet dispatch simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic GPS record file.
    Synth(SynthArgs),
    /// Extract trips and the hourly demand curve from GPS records.
    Ingest(IngestArgs),
    /// Site charging stations on trip origins with k-means.
    Stations(StationsArgs),
    /// Run one scenario.
    Simulate(SimulateArgs),
    /// Run a scenario once per demand-weight scale `x`.
    Sweep(SweepArgs),
    /// Compare fuel and electric fleet CO2.
    Emissions(EmissionsArgs),
    /// Compare analytic queue waits with a discrete-event simulation.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub taxis: usize,
    #[arg(long, default_value_t = 1000)]
    pub trips: usize,
    #[arg(long, default_value_t = 24)]
    pub hours: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Probability that an in-trip sample has no GPS fix.
    #[arg(long, default_value_t = 0.0)]
    pub missing_fix: f64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub records: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Demand horizon start (YYYYMMDDHHMMSS); defaults to midnight of the first trip's day.
    #[arg(long)]
    pub horizon_start: Option<String>,
    /// Demand horizon length; defaults to covering the last trip.
    #[arg(long)]
    pub hours: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StationsArgs {
    #[arg(long)]
    pub trips: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub chargers: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 116.397)]
    pub ref_lon: f64,
    #[arg(long, default_value_t = 39.908)]
    pub ref_lat: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    pub scenario: PathBuf,
    /// Override a scenario key, `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
    pub x: Vec<f64>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmissionsArgs {
    /// Total fleet kilometres.
    #[arg(long, conflicts_with = "report")]
    pub km: Option<f64>,
    /// Read total kilometres from a simulation report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub arrivals: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, stdout),
        Command::Ingest(a) => cmd_ingest(&a, stdout),
        Command::Stations(a) => cmd_stations(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(&a, stdout),
        Command::Emissions(a) => cmd_emissions(&a, stdout),
        Command::Oracle(a) => cmd_oracle(&a, stdout),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn cmd_synth(a: &SynthArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut spec = SyntheticSpec::city(a.taxis, a.trips, a.hours);
    spec.missing_fix_probability = a.missing_fix;
    let records = ingest::generate_synthetic(&spec, a.seed).map_err(|e| CliError::config(e.to_string()))?;
    write_with(&a.out, |w| ingest::write_records(w, &records))?;
    writeln!(stdout, "wrote {} records to {}", records.len(), a.out.display()).map_err(|e| CliError::runtime(e.to_string()))
}

pub fn cmd_ingest(a: &IngestArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let f = File::open(&a.records).map_err(io_err(&a.records))?;
    let records = ingest::read_records(BufReader::new(f)).map_err(|e| CliError::data(format!("{}: {e}", a.records.display())))?;
    let ex = ingest::extract_trips(&records);
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;

    let summary = format!(
        "records={}\npickups={}\ntrips={}\ntoo_short={}\nmissing_coordinates={}\nunclosed={}\nduplicate_rows={}\ntruncated_starts={}\n",
        records.len(),
        ex.pickups,
        ex.trips.len(),
        ex.exclusions.too_short,
        ex.exclusions.missing_coordinates,
        ex.exclusions.unclosed,
        ex.exclusions.duplicate_rows,
        ex.exclusions.truncated_starts,
    );
    let summary_path = a.out.join("summary.txt");
    write_with(&summary_path, |w| w.write_all(summary.as_bytes()))?;
    if ex.trips.is_empty() {
        return Err(CliError::data(format!("no valid trips in {} ({} pickups)", a.records.display(), ex.pickups)));
    }

    let first = ex.trips.iter().map(|t| t.start_time).min().expect("non-empty");
    let last = ex.trips.iter().map(|t| t.start_time).max().expect("non-empty");
    let start = match &a.horizon_start {
        Some(s) => ingest::parse_timestamp(s).ok_or_else(|| CliError::config(format!("invalid --horizon-start `{s}`")))?,
        None => first.date().and_hms_opt(0, 0, 0).expect("midnight"),
    };
    let hours = a.hours.unwrap_or_else(|| ((last - start).num_seconds().max(0) / 3600 + 1) as usize);
    let curve = ingest::build_demand_curve(&ex.trips, start, hours).map_err(|e| CliError::data(e.to_string()))?;

    write_with(&a.out.join("trips.csv"), |w| ingest::write_trips(w, &ex.trips))?;
    write_with(&a.out.join("demand.csv"), |w| curve.write_csv(w))?;
    writeln!(stdout, "{} trips, {} excluded, {} hours", ex.trips.len(), ex.exclusions.excluded(), hours)
        .map_err(|e| CliError::runtime(e.to_string()))
}

pub fn cmd_stations(a: &StationsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let f = File::open(&a.trips).map_err(io_err(&a.trips))?;
    let trips = ingest::read_trips(BufReader::new(f)).map_err(|e| CliError::data(format!("{}: {e}", a.trips.display())))?;
    let proj = Projection::new(LonLat::new(a.ref_lon, a.ref_lat));
    let origins: Vec<GeoPoint> = trips.iter().map(|t| proj.project(t.origin)).collect();
    let layout = config::site_stations(&origins, a.k, a.chargers, a.seed, 300, 1e-6)?;
    write_with(&a.out, |w| config::write_layout(w, &layout))?;
    writeln!(stdout, "sited {} stations from {} trip origins", layout.len(), origins.len())
        .map_err(|e| CliError::runtime(e.to_string()))
}

fn load_scenario(a: &ScenarioArgs) -> Result<config::BuiltScenario, CliError> {
    let mut file = ScenarioFile::load(&a.scenario)?;
    let mut problems = Vec::new();
    for o in &a.overrides {
        if let Err(ConfigError::Invalid(p)) = file.apply_override(o) {
            problems.extend(p);
        }
    }
    if let Some(seed) = a.seed {
        file.set("seed", &seed.to_string()).expect("known key");
    }
    if !problems.is_empty() {
        return Err(ConfigError::Invalid(problems).into());
    }
    let cfg = file.resolve()?;
    Ok(config::build_scenario(&cfg)?)
}

/// Runs the scenario and writes `report.json`, `hourly.csv`,
/// `station_chart.csv` and `layout.csv` into the output directory.
pub fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<SimReport, CliError> {
    let built = load_scenario(&a.scenario)?;
    let outcome = sim::run(&built.scenario, SimOptions::default()).map_err(|e| match e {
        sim::SimError::Config(p) => CliError::config(p.join("; ")),
        other => CliError::runtime(other.to_string()),
    })?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let report = outcome.report;
    write_with(&a.out.join("report.json"), |w| writeln!(w, "{}", report.to_json()))?;
    write_with(&a.out.join("hourly.csv"), |w| report.write_hourly_csv(w))?;
    write_with(&a.out.join("station_chart.csv"), |w| sim::write_chart_csv(w, &outcome.chart))?;
    write_with(&a.out.join("layout.csv"), |w| config::write_layout(w, &built.scenario.layout))?;
    writeln!(
        stdout,
        "fulfill_rate={:.4} mean_wait_min={:.4} gini={:.4} mean_distance_km={:.4}",
        report.fulfill_rate, report.mean_wait, report.gini, report.mean_distance
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(report)
}

pub const SWEEP_HEADER: &str = "x,mean_wait_min,gini,fulfill_rate,mean_distance_km";

pub fn sweep_row(x: f64, r: &SimReport) -> String {
    format!("{x},{:.4},{:.4},{:.4},{:.4}", r.mean_wait, r.gini, r.fulfill_rate, r.mean_distance)
}

/// One simulation per `x`, run in parallel; rows keep the input order.
pub fn sweep(scenario: &sim::Scenario, xs: &[f64]) -> Result<Vec<SimReport>, sim::SimError> {
    xs.par_iter()
        .map(|&x| {
            let mut s = scenario.clone();
            s.dispatch.x = x;
            sim::run(&s, SimOptions::default()).map(|o| o.report)
        })
        .collect()
}

pub fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if a.x.is_empty() {
        return Err(CliError::config("sweep needs at least one x value"));
    }
    let built = load_scenario(&a.scenario)?;
    let reports = sweep(&built.scenario, &a.x).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut table = String::from(SWEEP_HEADER);
    table.push('\n');
    for (x, r) in a.x.iter().zip(&reports) {
        table.push_str(&sweep_row(*x, r));
        table.push('\n');
    }
    match &a.out {
        Some(path) => write_with(path, |w| w.write_all(table.as_bytes())),
        None => stdout.write_all(table.as_bytes()).map_err(|e| CliError::runtime(e.to_string())),
    }
}

pub fn cmd_emissions(a: &EmissionsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let km = match (&a.km, &a.report) {
        (Some(km), _) if *km >= 0.0 && km.is_finite() => *km,
        (Some(km), _) => return Err(CliError::config(format!("--km must be non-negative, got {km}"))),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let report: SimReport =
                serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            report.total_fleet_km
        }
        (None, None) => return Err(CliError::config("pass --km or --report")),
    };
    let rates = emissions::default_rates();
    let per_100 = emissions::fleet_comparison(100.0, rates.tv_co2, rates.ev_co2);
    let fleet = emissions::fleet_comparison(km, rates.tv_co2, rates.ev_co2);
    let out = format!(
        "{}\n{}\n{}\n",
        emissions::COMPARISON_HEADER,
        emissions::comparison_csv_row("per_100km", &per_100),
        emissions::comparison_csv_row("fleet", &fleet)
    );
    stdout.write_all(out.as_bytes()).map_err(|e| CliError::runtime(e.to_string()))
}

pub const ORACLE_HEADER: &str = "s,lambda,mu,law,analytic,simulated,rel_err";

/// One row of the analytic-versus-simulated comparison grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub servers: usize,
    pub lambda: f64,
    pub mu: f64,
    pub law: ServiceLaw,
    pub analytic: f64,
    pub simulated: f64,
}

impl OracleRow {
    pub fn rel_err(&self) -> f64 {
        ((self.simulated - self.analytic) / self.analytic).abs()
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.5}",
            self.servers,
            self.lambda,
            self.mu,
            self.law.label(),
            self.analytic,
            self.simulated,
            self.rel_err()
        )
    }
}

/// s ∈ {1,2,4} × ρ ∈ {0.5,0.8} × {exponential, deterministic, Erlang-4},
/// μ = 1. Rows are computed in parallel.
pub fn oracle_grid(arrivals: usize, seed: u64) -> Result<Vec<OracleRow>, queueing::QueueError> {
    let mu = 1.0;
    let mut cases = Vec::new();
    for s in [1usize, 2, 4] {
        for rho in [0.5, 0.8] {
            for law in [ServiceLaw::Exponential, ServiceLaw::Deterministic, ServiceLaw::Erlang(4)] {
                cases.push((s, rho * s as f64 * mu, law));
            }
        }
    }
    cases
        .into_par_iter()
        .enumerate()
        .map(|(i, (s, lambda, law))| {
            let sigma_t = law.cv() / mu;
            let analytic = queueing::w_mgs(&QueueParams::new(lambda, mu, sigma_t, s), XiConvention::Cv)?;
            let simulated = queueing::des_oracle(lambda, mu, law, s, arrivals, seed.wrapping_add(i as u64))?;
            Ok(OracleRow { servers: s, lambda, mu, law, analytic, simulated })
        })
        .collect()
}

pub fn cmd_oracle(a: &OracleArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rows = oracle_grid(a.arrivals, a.seed).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut out = String::from(ORACLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    stdout.write_all(out.as_bytes()).map_err(|e| CliError::runtime(e.to_string()))
}

/// Midnight of the day containing `t`.
pub fn day_start(t: NaiveDateTime) -> NaiveDateTime {
    t - Duration::seconds(t.num_seconds_from_midnight() as i64)
}
