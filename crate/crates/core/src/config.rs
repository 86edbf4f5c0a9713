//! Scenario files.
//!
//! A scenario is a flat `key = value` text file; `#` starts a comment. Every
//! key except the demand source has a default. The demand source is either
//! `trips` (path to a trips CSV, relative to the scenario file) or
//! `synthetic_trips` (number of trips to generate).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use thiserror::Error;

use crate::dispatch::DispatchConfig;
use crate::geo::{self, GeoPoint, KMeansConfig, LonLat, Projection, StationLayout};
use crate::ingest::{self, DemandCurve, SyntheticSpec, Trip};
use crate::queueing::{MatchingCoefficients, XiConvention};
use crate::sim::{FleetSpec, RequestSpec, Scenario, SimParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("{0}")]
    Data(String),
}

/// Documented keys and their defaults, in file order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("trips", "", "trips CSV (taxi_id,start_time,end_time,o_lon,o_lat,d_lon,d_lat)"),
    ("synthetic_trips", "", "generate this many trips instead of reading `trips`"),
    ("synthetic_source_taxis", "1000", "taxis in the synthetic record generator"),
    ("synthetic_half_extent_km", "20", "half width of the synthetic service square"),
    ("seed", "1", "seed for synthetic data and station siting"),
    ("horizon_start", "20160502000000", "first instant of the horizon, YYYYMMDDHHMMSS"),
    ("horizon_hours", "24", "horizon length; trips starting later are dropped"),
    ("ref_lon", "116.397", "projection reference longitude"),
    ("ref_lat", "39.908", "projection reference latitude"),
    ("fleet_size", "9000", "number of electric taxis"),
    ("battery_kwh", "38", "battery capacity"),
    ("range_km", "250", "driving range on a full battery"),
    ("speed_kmh", "30", "constant travel speed"),
    ("charge_power_kw", "60", "charger power"),
    ("stations", "12", "number of charging stations (k-means k)"),
    ("chargers_per_station", "10", "chargers at every station"),
    ("kmeans_max_iter", "300", "Lloyd iteration cap"),
    ("kmeans_tol", "1e-6", "centroid shift tolerance, km"),
    ("x", "0.01", "demand weight scale"),
    ("w1", "-1", "pickup distance weight"),
    ("w2", "-0.5", "cumulative income weight"),
    ("w3", "1", "matching degree weight"),
    ("w4", "0", "empty time weight"),
    ("c2", "-1", "matching degree curvature"),
    ("c3", "1", "matching degree offset"),
    ("soc_charge_threshold", "0.2", "recharge below this SOC after a trip"),
    ("wait_escalation_min", "5", "search adjacent sub-regions after this wait"),
    ("wait_cancel_min", "30", "decline requests waiting longer than this"),
    ("reachability_buffer", "0.1", "energy safety margin, fraction"),
    ("adjacency_m", "3", "adjacent sub-regions searched on escalation"),
    ("flag_fall", "13", "fare per trip"),
    ("per_km_rate", "2.3", "fare per km"),
    ("tick_seconds", "60", "waitlist scan cadence"),
    ("xi_convention", "cv", "service variability convention: cv or mu_over_sigma"),
    ("sample_window", "50", "charging-time samples kept per station"),
    ("max_wait_estimate_h", "4", "wait estimate for an unstable station"),
];

/// Raw key/value pairs from a scenario file plus overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioFile {
    entries: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut file = Self::default();
        let mut problems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = file.set(k.trim(), v.trim()) {
                        problems.push(format!("line {}: {e}", i + 1));
                    }
                }
                None => problems.push(format!("line {}: expected key = value", i + 1)),
            }
        }
        if problems.is_empty() {
            Ok(file)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Data(format!("{}: {e}", path.display())))?;
        let mut file = Self::parse(&text)?;
        file.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(file)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(format!("unknown key `{key}`"));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(vec![format!("override `{assignment}` is not key=value")]))?;
        self.set(k.trim(), v.trim()).map_err(|e| ConfigError::Invalid(vec![e]))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Resolves every key, reporting all problems at once.
    pub fn resolve(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut r = Resolver { file: self, problems: Vec::new() };
        let source = match (self.get("trips"), self.get("synthetic_trips")) {
            (Some(_), Some(_)) => {
                r.problems.push("`trips` and `synthetic_trips` are mutually exclusive".into());
                DemandSource::Synthetic { trips: 0 }
            }
            (Some(path), None) => DemandSource::TripsFile(self.base_dir.join(path)),
            (None, Some(_)) => {
                let trips = r.num("synthetic_trips");
                if trips == 0 {
                    r.problems.push("synthetic_trips must be positive".into());
                }
                DemandSource::Synthetic { trips }
            }
            (None, None) => {
                r.problems.push("missing required key `trips` (or `synthetic_trips`)".into());
                DemandSource::Synthetic { trips: 0 }
            }
        };
        let horizon_start = {
            let raw = r.raw("horizon_start");
            ingest::parse_timestamp(raw).unwrap_or_else(|| {
                r.problems.push(format!("horizon_start: `{raw}` is not YYYYMMDDHHMMSS"));
                NaiveDateTime::default()
            })
        };
        let xi_convention = r.raw("xi_convention").parse::<XiConvention>().unwrap_or_else(|e| {
            r.problems.push(format!("xi_convention: {e}"));
            XiConvention::Cv
        });
        let cfg = ScenarioConfig {
            source,
            synthetic_source_taxis: r.num("synthetic_source_taxis"),
            synthetic_half_extent_km: r.num("synthetic_half_extent_km"),
            seed: r.num("seed"),
            horizon_start,
            horizon_hours: r.num("horizon_hours"),
            reference: LonLat::new(r.num("ref_lon"), r.num("ref_lat")),
            fleet: FleetSpec { taxis: r.num("fleet_size"), battery_kwh: r.num("battery_kwh"), range_km: r.num("range_km") },
            params: SimParams {
                speed_kmh: r.num("speed_kmh"),
                charge_power_kw: r.num("charge_power_kw"),
                tick_seconds: r.num("tick_seconds"),
                xi_convention,
                sample_window: r.num("sample_window"),
                max_wait_estimate_h: r.num("max_wait_estimate_h"),
            },
            stations: r.num("stations"),
            chargers_per_station: r.num("chargers_per_station"),
            kmeans_max_iter: r.num("kmeans_max_iter"),
            kmeans_tol: r.num("kmeans_tol"),
            dispatch: DispatchConfig {
                x: r.num("x"),
                w1: r.num("w1"),
                w2: r.num("w2"),
                w3: r.num("w3"),
                w4: r.num("w4"),
                soc_charge_threshold: r.num("soc_charge_threshold"),
                wait_escalation_min: r.num("wait_escalation_min"),
                wait_cancel_min: r.num("wait_cancel_min"),
                reachability_buffer: r.num("reachability_buffer"),
                adjacency_m: r.num("adjacency_m"),
                flag_fall: r.num("flag_fall"),
                per_km_rate: r.num("per_km_rate"),
                matching: MatchingCoefficients { c2: r.num("c2"), c3: r.num("c3") },
            },
        };
        let mut problems = r.problems;
        problems.extend(cfg.problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

struct Resolver<'a> {
    file: &'a ScenarioFile,
    problems: Vec<String>,
}

impl<'a> Resolver<'a> {
    fn raw(&self, key: &str) -> &'a str {
        self.file.get(key).unwrap_or_else(|| {
            KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d).expect("documented key")
        })
    }

    fn num<T: std::str::FromStr + Default>(&mut self, key: &str) -> T {
        let raw = self.raw(key).to_string();
        raw.parse().unwrap_or_else(|_| {
            self.problems.push(format!("{key}: cannot parse `{raw}`"));
            T::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandSource {
    TripsFile(PathBuf),
    Synthetic { trips: usize },
}

/// A fully resolved scenario configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub source: DemandSource,
    pub synthetic_source_taxis: usize,
    pub synthetic_half_extent_km: f64,
    pub seed: u64,
    pub horizon_start: NaiveDateTime,
    pub horizon_hours: usize,
    pub reference: LonLat,
    pub fleet: FleetSpec,
    pub params: SimParams,
    pub stations: usize,
    pub chargers_per_station: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub dispatch: DispatchConfig,
}

impl ScenarioConfig {
    fn problems(&self) -> Vec<String> {
        let mut out = self.fleet.problems();
        out.extend(self.params.problems());
        out.extend(self.dispatch.problems());
        if self.horizon_hours == 0 {
            out.push("horizon_hours must be positive".into());
        }
        if self.stations == 0 {
            out.push("stations must be at least 1".into());
        }
        if self.chargers_per_station == 0 {
            out.push("chargers_per_station must be at least 1".into());
        }
        if !self.reference.is_valid() {
            out.push("ref_lon/ref_lat out of range".into());
        }
        if let DemandSource::Synthetic { .. } = self.source {
            if self.synthetic_source_taxis == 0 {
                out.push("synthetic_source_taxis must be positive".into());
            }
        }
        out
    }
}

/// A scenario ready to run, with the data it was derived from.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub scenario: Scenario,
    pub demand: DemandCurve,
    pub trips: Vec<Trip>,
    /// Trips outside the horizon that were left out.
    pub dropped_trips: usize,
}

/// Loads or generates trips, sites stations and assembles the scenario.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<BuiltScenario, ConfigError> {
    let all_trips = match &cfg.source {
        DemandSource::TripsFile(path) => {
            let f = std::fs::File::open(path).map_err(|e| ConfigError::Data(format!("{}: {e}", path.display())))?;
            ingest::read_trips(std::io::BufReader::new(f)).map_err(|e| ConfigError::Data(format!("{}: {e}", path.display())))?
        }
        DemandSource::Synthetic { trips } => {
            let mut spec = SyntheticSpec::city(cfg.synthetic_source_taxis, *trips, cfg.horizon_hours);
            spec.horizon_start = cfg.horizon_start;
            spec.reference = cfg.reference;
            spec.half_extent_km = cfg.synthetic_half_extent_km;
            let records = ingest::generate_synthetic(&spec, cfg.seed).map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
            ingest::extract_trips(&records).trips
        }
    };
    let end = cfg.horizon_start + Duration::hours(cfg.horizon_hours as i64);
    let before = all_trips.len();
    let mut trips: Vec<Trip> =
        all_trips.into_iter().filter(|t| t.start_time >= cfg.horizon_start && t.start_time < end).collect();
    let dropped_trips = before - trips.len();
    trips.sort_by(|a, b| a.start_time.cmp(&b.start_time).then(a.taxi_id.cmp(&b.taxi_id)));
    if trips.is_empty() {
        return Err(ConfigError::Data("no trips inside the horizon".into()));
    }

    let proj = Projection::new(cfg.reference);
    let requests: Vec<RequestSpec> = trips
        .iter()
        .map(|t| RequestSpec {
            time: (t.start_time - cfg.horizon_start).num_seconds() as f64,
            origin: proj.project(t.origin),
            destination: proj.project(t.destination),
        })
        .collect();
    let origins: Vec<GeoPoint> = requests.iter().map(|r| r.origin).collect();
    let layout = site_stations(&origins, cfg.stations, cfg.chargers_per_station, cfg.seed, cfg.kmeans_max_iter, cfg.kmeans_tol)?;
    let demand = ingest::build_demand_curve(&trips, cfg.horizon_start, cfg.horizon_hours)
        .map_err(|e| ConfigError::Data(e.to_string()))?;

    let scenario = Scenario {
        layout,
        requests,
        hourly_demand: demand.counts.clone(),
        fleet: cfg.fleet,
        params: cfg.params,
        dispatch: cfg.dispatch,
        seed: cfg.seed,
    };
    let problems = scenario.problems();
    if !problems.is_empty() {
        return Err(ConfigError::Invalid(problems));
    }
    Ok(BuiltScenario { scenario, demand, trips, dropped_trips })
}

/// K-means over trip origins with a uniform charger count.
pub fn site_stations(
    origins: &[GeoPoint],
    k: usize,
    chargers: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<StationLayout, ConfigError> {
    let result = geo::kmeans(origins, &KMeansConfig { k, seed, max_iter, tol })
        .map_err(|e| ConfigError::Invalid(vec![format!("station siting: {e}")]))?;
    result.into_layout(chargers).map_err(|e| ConfigError::Invalid(vec![format!("station siting: {e}")]))
}

pub const LAYOUT_HEADER: &str = "station_id,x_km,y_km,chargers";

pub fn write_layout<W: std::io::Write>(mut w: W, layout: &StationLayout) -> std::io::Result<()> {
    writeln!(w, "{LAYOUT_HEADER}")?;
    for s in layout.stations() {
        writeln!(w, "{},{:.6},{:.6},{}", s.id, s.centroid.x, s.centroid.y, s.chargers)?;
    }
    Ok(())
}
