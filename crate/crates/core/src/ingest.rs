//! Trajectory records, trip extraction and hourly demand curves.
//!
//! Input rows follow the `taxi_id,timestamp,longitude,latitude,load` layout
//! with the timestamp written as `YYYYMMDDHHMMSS`. Longitude and latitude may
//! both be left empty when a sample has no GPS fix.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{Duration, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, LonLat, Projection};

pub const TIMESTAMP_FORMAT: &str = "%Y%m%d%H%M%S";

/// Trips shorter than this are invalid.
pub const MIN_TRIP_SECONDS: i64 = 120;
/// Maximum time offset when borrowing coordinates from a neighbouring row.
pub const COORDINATE_SEARCH_SECONDS: i64 = 180;

#[derive(Debug, Error, PartialEq)]
pub enum ParseErrorKind {
    #[error("expected 5 fields, found {0}")]
    FieldCount(usize),
    #[error("invalid taxi id `{0}`")]
    TaxiId(String),
    #[error("invalid timestamp `{0}`")]
    Timestamp(String),
    #[error("invalid coordinate `{0}`")]
    Coordinate(String),
    #[error("longitude and latitude must both be present or both empty")]
    PartialCoordinates,
    #[error("invalid load `{0}`, expected 0 or 1")]
    Load(String),
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trip {index} starts at {start} outside the demand horizon")]
    OutsideHorizon { index: usize, start: NaiveDateTime },
    #[error("synthetic spec: {0}")]
    Config(String),
}

/// One GPS status sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TaxiRecord {
    pub taxi_id: u64,
    pub timestamp: NaiveDateTime,
    pub position: Option<LonLat>,
    pub loaded: bool,
}

impl TaxiRecord {
    pub fn to_row(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TaxiRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},", self.taxi_id, self.timestamp.format(TIMESTAMP_FORMAT))?;
        match self.position {
            Some(p) => write!(f, "{},{},", p.lon, p.lat)?,
            None => write!(f, ",,")?,
        }
        write!(f, "{}", u8::from(self.loaded))
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if s.len() != 14 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).ok()
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Decodes one comma-separated record row. `line` is only used for error
/// reporting.
pub fn parse_record(row: &str, line: usize) -> Result<TaxiRecord, ParseError> {
    let err = |kind| ParseError { line, kind };
    let fields: Vec<&str> = row.trim_end_matches(['\r', '\n']).split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(err(ParseErrorKind::FieldCount(fields.len())));
    }
    let taxi_id = fields[0].parse::<u64>().map_err(|_| err(ParseErrorKind::TaxiId(fields[0].into())))?;
    let timestamp = parse_timestamp(fields[1]).ok_or_else(|| err(ParseErrorKind::Timestamp(fields[1].into())))?;
    let position = match (fields[2].is_empty(), fields[3].is_empty()) {
        (true, true) => None,
        (false, false) => {
            let coord = |s: &str| -> Result<f64, ParseError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(ParseErrorKind::Coordinate(s.into())))
            };
            let p = LonLat::new(coord(fields[2])?, coord(fields[3])?);
            if !(-180.0..=180.0).contains(&p.lon) {
                return Err(err(ParseErrorKind::Coordinate(fields[2].into())));
            }
            if !(-90.0..=90.0).contains(&p.lat) {
                return Err(err(ParseErrorKind::Coordinate(fields[3].into())));
            }
            Some(p)
        }
        _ => return Err(err(ParseErrorKind::PartialCoordinates)),
    };
    let loaded = match fields[4] {
        "0" => false,
        "1" => true,
        other => return Err(err(ParseErrorKind::Load(other.into()))),
    };
    Ok(TaxiRecord { taxi_id, timestamp, position, loaded })
}

/// Reads every record from `reader`. Blank lines are skipped, as is a first
/// line whose leading field is not numeric (a header).
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<TaxiRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 && !trimmed.starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        out.push(parse_record(trimmed, i + 1)?);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, records: &[TaxiRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

/// One occupied journey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub taxi_id: u64,
    pub origin: LonLat,
    pub destination: LonLat,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
}

impl Trip {
    pub fn duration(&self) -> Duration {
        self.end_time - self.start_time
    }
}

pub const TRIPS_HEADER: &str = "taxi_id,start_time,end_time,o_lon,o_lat,d_lon,d_lat";

pub fn write_trips<W: Write>(mut w: W, trips: &[Trip]) -> std::io::Result<()> {
    writeln!(w, "{TRIPS_HEADER}")?;
    for t in trips {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t.taxi_id,
            format_timestamp(t.start_time),
            format_timestamp(t.end_time),
            t.origin.lon,
            t.origin.lat,
            t.destination.lon,
            t.destination.lat
        )?;
    }
    Ok(())
}

pub fn read_trips<R: BufRead>(reader: R) -> Result<Vec<Trip>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let row = line.trim();
        if row.is_empty() || (i == 0 && row.starts_with("taxi_id")) {
            continue;
        }
        let lineno = i + 1;
        let err = |kind| IngestError::Parse(ParseError { line: lineno, kind });
        let f: Vec<&str> = row.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(err(ParseErrorKind::FieldCount(f.len())));
        }
        let taxi_id = f[0].parse().map_err(|_| err(ParseErrorKind::TaxiId(f[0].into())))?;
        let ts = |s: &str| parse_timestamp(s).ok_or_else(|| err(ParseErrorKind::Timestamp(s.into())));
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(ParseErrorKind::Coordinate(s.into())))
        };
        out.push(Trip {
            taxi_id,
            start_time: ts(f[1])?,
            end_time: ts(f[2])?,
            origin: LonLat::new(num(f[3])?, num(f[4])?),
            destination: LonLat::new(num(f[5])?, num(f[6])?),
        });
    }
    Ok(out)
}

/// Why a 0→1 load transition did not become a trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Exclusion {
    TooShort,
    MissingCoordinates,
    /// The taxi's records end while it is still loaded.
    Unclosed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub too_short: usize,
    pub missing_coordinates: usize,
    pub unclosed: usize,
    /// Rows dropped because the taxi already had a row at that timestamp.
    pub duplicate_rows: usize,
    /// Trailing 1→0 transitions with no opening 0→1 (truncated at the horizon start).
    pub truncated_starts: usize,
}

impl ExclusionCounts {
    /// Excluded 0→1 transitions.
    pub fn excluded(&self) -> usize {
        self.too_short + self.missing_coordinates + self.unclosed
    }

    fn record(&mut self, why: Exclusion) {
        match why {
            Exclusion::TooShort => self.too_short += 1,
            Exclusion::MissingCoordinates => self.missing_coordinates += 1,
            Exclusion::Unclosed => self.unclosed += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub trips: Vec<Trip>,
    pub exclusions: ExclusionCounts,
    /// Number of load 0→1 transitions seen.
    pub pickups: usize,
}

/// Extracts trips from records of any number of taxis. Records are grouped
/// by taxi id and stably sorted by timestamp; rows repeating a timestamp are
/// dropped. Output is ordered by taxi id, then start time.
pub fn extract_trips(records: &[TaxiRecord]) -> Extraction {
    let mut by_taxi: BTreeMap<u64, Vec<&TaxiRecord>> = BTreeMap::new();
    for r in records {
        by_taxi.entry(r.taxi_id).or_default().push(r);
    }
    let mut out = Extraction::default();
    for rows in by_taxi.values_mut() {
        rows.sort_by_key(|r| r.timestamp);
        let before = rows.len();
        rows.dedup_by_key(|r| r.timestamp);
        out.exclusions.duplicate_rows += before - rows.len();
        extract_taxi(rows, &mut out);
    }
    out
}

fn extract_taxi(rows: &[&TaxiRecord], out: &mut Extraction) {
    let mut open: Option<usize> = None;
    let mut seen_empty = false;
    for (i, r) in rows.iter().enumerate() {
        match (r.loaded, open) {
            (true, None) if seen_empty => {
                out.pickups += 1;
                open = Some(i);
            }
            (true, None) => {}
            (false, Some(start)) => {
                open = None;
                match close_trip(rows, start, i) {
                    Ok(trip) => out.trips.push(trip),
                    Err(why) => out.exclusions.record(why),
                }
            }
            (false, None) => {
                if !seen_empty && i > 0 {
                    out.exclusions.truncated_starts += 1;
                }
            }
            (true, Some(_)) => {}
        }
        if !r.loaded {
            seen_empty = true;
        }
    }
    if open.is_some() {
        out.exclusions.record(Exclusion::Unclosed);
    }
}

fn close_trip(rows: &[&TaxiRecord], start: usize, end: usize) -> Result<Trip, Exclusion> {
    let (s, e) = (rows[start], rows[end]);
    if (e.timestamp - s.timestamp).num_seconds() < MIN_TRIP_SECONDS {
        return Err(Exclusion::TooShort);
    }
    let origin = boundary_position(rows, start).ok_or(Exclusion::MissingCoordinates)?;
    let destination = boundary_position(rows, end).ok_or(Exclusion::MissingCoordinates)?;
    Ok(Trip {
        taxi_id: s.taxi_id,
        origin,
        destination,
        start_time: s.timestamp,
        end_time: e.timestamp,
    })
}

/// The row's own position, or that of the nearest-in-time row of the same
/// taxi with coordinates no more than three minutes away (earlier row wins
/// an exact tie).
fn boundary_position(rows: &[&TaxiRecord], idx: usize) -> Option<LonLat> {
    if let Some(p) = rows[idx].position {
        return Some(p);
    }
    let t = rows[idx].timestamp;
    let within = |r: &&&TaxiRecord| (r.timestamp - t).num_seconds().abs() <= COORDINATE_SEARCH_SECONDS;
    let before = rows[..idx].iter().rev().take_while(within).find(|r| r.position.is_some());
    let after = rows[idx + 1..].iter().take_while(within).find(|r| r.position.is_some());
    match (before, after) {
        (Some(b), Some(a)) => {
            if (t - b.timestamp) <= (a.timestamp - t) {
                b.position
            } else {
                a.position
            }
        }
        (Some(b), None) => b.position,
        (None, Some(a)) => a.position,
        (None, None) => None,
    }
}

/// Request counts per hour of the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandCurve {
    pub start: NaiveDateTime,
    pub counts: Vec<u64>,
}

impl DemandCurve {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Count for the hour containing `offset_seconds` past the start; zero
    /// outside the horizon.
    pub fn at_offset(&self, offset_seconds: f64) -> u64 {
        if offset_seconds < 0.0 {
            return 0;
        }
        self.counts.get((offset_seconds / 3600.0) as usize).copied().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "hour_index,count")?;
        for (h, c) in self.counts.iter().enumerate() {
            writeln!(w, "{h},{c}")?;
        }
        Ok(())
    }
}

/// Bins trips by start time into `hours` one-hour bins from `horizon_start`.
pub fn build_demand_curve(trips: &[Trip], horizon_start: NaiveDateTime, hours: usize) -> Result<DemandCurve, IngestError> {
    let mut counts = vec![0u64; hours];
    for (index, t) in trips.iter().enumerate() {
        let offset = (t.start_time - horizon_start).num_seconds();
        let bin = if offset >= 0 { Some((offset / 3600) as usize) } else { None };
        match bin.and_then(|b| counts.get_mut(b)) {
            Some(c) => *c += 1,
            None => return Err(IngestError::OutsideHorizon { index, start: t.start_time }),
        }
    }
    Ok(DemandCurve { start: horizon_start, counts })
}

/// A Gaussian cluster of trip endpoints on the local plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub center: GeoPoint,
    pub sigma_km: f64,
    pub weight: f64,
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub taxis: usize,
    pub trips: usize,
    pub horizon_start: NaiveDateTime,
    /// Relative trip intensity per hour; its length is the horizon in hours.
    pub hourly_profile: Vec<f64>,
    pub reference: LonLat,
    /// Points are clamped to `[-half_extent_km, half_extent_km]²`.
    pub half_extent_km: f64,
    pub hotspots: Vec<Hotspot>,
    pub speed_kmh: f64,
    pub sample_seconds: i64,
    /// Probability that an in-trip row is written without coordinates.
    pub missing_fix_probability: f64,
}

impl SyntheticSpec {
    /// A city-like default: twelve hotspots in a 40 km square and a daily
    /// profile with morning and evening peaks.
    pub fn city(taxis: usize, trips: usize, hours: usize) -> Self {
        let hotspots = (0..12)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 12.0;
                let r = if i % 2 == 0 { 6.0 } else { 13.0 };
                Hotspot { center: GeoPoint::new(r * a.cos(), r * a.sin()), sigma_km: 2.0, weight: 1.0 + (i % 3) as f64 }
            })
            .collect();
        Self {
            taxis,
            trips,
            horizon_start: chrono::NaiveDate::from_ymd_opt(2016, 5, 2).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            hourly_profile: (0..hours).map(|h| daily_profile(h % 24)).collect(),
            reference: LonLat::new(116.397, 39.908),
            half_extent_km: 20.0,
            hotspots,
            speed_kmh: 25.0,
            sample_seconds: 30,
            missing_fix_probability: 0.0,
        }
    }

    pub fn horizon_hours(&self) -> usize {
        self.hourly_profile.len()
    }

    fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::Config(m.to_string()));
        if self.taxis == 0 {
            return bad("taxi count must be positive");
        }
        if self.hourly_profile.is_empty() {
            return bad("horizon must be at least one hour");
        }
        if self.hourly_profile.iter().any(|w| !w.is_finite() || *w < 0.0) || self.hourly_profile.iter().sum::<f64>() <= 0.0 {
            return bad("hourly profile must be non-negative with positive total");
        }
        if self.hotspots.is_empty() || self.hotspots.iter().any(|h| h.weight <= 0.0 || h.sigma_km < 0.0) {
            return bad("need at least one hotspot with positive weight");
        }
        if self.speed_kmh <= 0.0 || self.sample_seconds <= 0 || self.half_extent_km <= 0.0 {
            return bad("speed, sampling interval and extent must be positive");
        }
        if !(0.0..=1.0).contains(&self.missing_fix_probability) {
            return bad("missing-fix probability must lie in [0, 1]");
        }
        Ok(())
    }
}

fn daily_profile(hour: usize) -> f64 {
    const P: [f64; 24] = [
        0.4, 0.25, 0.15, 0.1, 0.1, 0.2, 0.5, 1.0, 1.4, 1.2, 1.0, 1.0, 1.1, 1.0, 1.0, 1.0, 1.1, 1.3, 1.5, 1.3, 1.1, 0.9,
        0.8, 0.6,
    ];
    P[hour]
}

/// A trip produced by the generator before it is rendered into rows.
#[derive(Debug, Clone, Copy)]
struct PlannedTrip {
    start: i64,
    end: i64,
    origin: GeoPoint,
    destination: GeoPoint,
}

/// Generates a record stream in the ingest format. The output is a pure
/// function of `(spec, seed)`, sorted by timestamp then taxi id.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<TaxiRecord>, IngestError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon_secs = spec.horizon_hours() as i64 * 3600;
    let sample = spec.sample_seconds;
    let min_duration = MIN_TRIP_SECONDS + 2 * sample;

    let profile_total: f64 = spec.hourly_profile.iter().sum();
    let hotspot_total: f64 = spec.hotspots.iter().map(|h| h.weight).sum();

    let mut planned: Vec<PlannedTrip> = (0..spec.trips)
        .map(|_| {
            let hour = pick_weighted(&mut rng, &spec.hourly_profile, profile_total);
            let start = hour as i64 * 3600 + rng.random_range(0..3600);
            let origin = sample_point(&mut rng, spec, hotspot_total);
            let destination = sample_point(&mut rng, spec, hotspot_total);
            let km = crate::geo::manhattan(origin, destination);
            let duration = ((km / spec.speed_kmh * 3600.0).round() as i64).max(min_duration);
            PlannedTrip { start, end: start + duration, origin, destination }
        })
        .collect();
    planned.sort_by_key(|p| p.start);

    // Hand each trip to the free taxi that has been idle longest; trips
    // nobody can take are delayed until a taxi frees up.
    let gap = 2 * sample;
    let mut free_at = vec![-gap; spec.taxis];
    let mut per_taxi: Vec<Vec<PlannedTrip>> = vec![Vec::new(); spec.taxis];
    for mut p in planned {
        let taxi = (0..spec.taxis).min_by_key(|&t| (free_at[t], t)).unwrap();
        let earliest = free_at[taxi] + gap;
        if p.start < earliest {
            let shift = earliest - p.start;
            p.start += shift;
            p.end += shift;
        }
        // demand is binned by start time; a trip may finish after the horizon
        if p.start >= horizon_secs {
            return Err(IngestError::Config(format!(
                "fleet of {} taxis cannot carry {} trips within the horizon",
                spec.taxis, spec.trips
            )));
        }
        free_at[taxi] = p.end;
        per_taxi[taxi].push(p);
    }

    let proj = Projection::new(spec.reference);
    let mut records = Vec::new();
    for (taxi, trips) in per_taxi.iter().enumerate() {
        let taxi_id = taxi as u64 + 1;
        for p in trips {
            let at = |secs: i64| spec.horizon_start + Duration::seconds(secs);
            let fix = |g: GeoPoint| Some(proj.unproject(g));
            records.push(TaxiRecord { taxi_id, timestamp: at(p.start - sample), position: fix(p.origin), loaded: false });
            let mut t = p.start;
            while t < p.end {
                let frac = (t - p.start) as f64 / (p.end - p.start) as f64;
                let here = along_manhattan(p.origin, p.destination, frac);
                let boundary = t == p.start;
                let position = if !boundary && rng.random::<f64>() < spec.missing_fix_probability { None } else { fix(here) };
                records.push(TaxiRecord { taxi_id, timestamp: at(t), position, loaded: true });
                t += sample;
            }
            records.push(TaxiRecord { taxi_id, timestamp: at(p.end), position: fix(p.destination), loaded: false });
        }
    }
    records.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.taxi_id.cmp(&b.taxi_id)));
    Ok(records)
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64], total: f64) -> usize {
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn sample_point(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, total_weight: f64) -> GeoPoint {
    let weights: Vec<f64> = spec.hotspots.iter().map(|h| h.weight).collect();
    let h = spec.hotspots[pick_weighted(rng, &weights, total_weight)];
    let normal = Normal::new(0.0, h.sigma_km.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let e = spec.half_extent_km;
    GeoPoint::new(
        (h.center.x + normal.sample(rng)).clamp(-e, e),
        (h.center.y + normal.sample(rng)).clamp(-e, e),
    )
}

/// Position `frac` of the way along the east-then-north L1 path.
fn along_manhattan(a: GeoPoint, b: GeoPoint, frac: f64) -> GeoPoint {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let total = dx.abs() + dy.abs();
    if total == 0.0 {
        return a;
    }
    let travelled = frac * total;
    if travelled <= dx.abs() {
        GeoPoint::new(a.x + dx.signum() * travelled, a.y)
    } else {
        GeoPoint::new(b.x, a.y + dy.signum() * (travelled - dx.abs()))
    }
}
