//! Deterministic event loop tying the fleet, the charging stations and the
//! dispatch platform together.
//!
//! Time is kept in seconds since the start of the horizon. Events fire in
//! `(time, sequence)` order, where `sequence` is the order of scheduling.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{
    self, DispatchConfig, ElectricTaxi, Platform, PostTrip, RequestId, RequestOutcome, RequestState, ScoreContext,
    TaxiId, TaxiState, WaitlistOutcome,
};
use crate::emissions::{self, FleetComparison};
use crate::geo::{manhattan, GeoPoint, StationId, StationLayout};
use crate::queueing::{self, QueueError, ServiceDefaults, StationStats, XiConvention};

/// Relative tolerance of the energy balance check.
pub const ENERGY_TOLERANCE: f64 = 1e-9;
const SOC_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("invariant violated at t={time:.3}s: {message}")]
    Invariant { time: f64, message: String },
}

/// Seconds to cover `km` at `speed_kmh`.
pub fn travel_time(km: f64, speed_kmh: f64) -> f64 {
    km / speed_kmh * 3600.0
}

/// Mean absolute difference over twice the mean. Zero for empty or all-zero
/// input.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // sum_i sum_j |x_i - x_j| = 2 * sum_i (2i - n + 1) x_(i), 0-based
    let weighted: f64 = v.iter().enumerate().map(|(i, x)| (2.0 * i as f64 - n as f64 + 1.0) * x).sum();
    (weighted / (n as f64 * total)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub taxis: usize,
    pub battery_kwh: f64,
    pub range_km: f64,
}

impl FleetSpec {
    pub fn consumption_kwh_per_km(&self) -> f64 {
        self.battery_kwh / self.range_km
    }
}

impl FleetSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.taxis == 0 {
            out.push("fleet must contain at least one taxi".into());
        }
        if !(self.battery_kwh > 0.0) {
            out.push("battery_kwh must be positive".into());
        }
        if !(self.range_km > 0.0) {
            out.push("range_km must be positive".into());
        }
        out
    }
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self { taxis: 9000, battery_kwh: 38.0, range_km: 250.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub speed_kmh: f64,
    pub charge_power_kw: f64,
    pub tick_seconds: f64,
    pub xi_convention: XiConvention,
    /// Charging-time samples kept per station.
    pub sample_window: usize,
    /// Wait estimate used when a station's queue is unstable, hours.
    pub max_wait_estimate_h: f64,
}

impl SimParams {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.speed_kmh > 0.0) {
            out.push("speed_kmh must be positive".into());
        }
        if !(self.charge_power_kw > 0.0) {
            out.push("charge_power_kw must be positive".into());
        }
        if !(self.tick_seconds > 0.0) {
            out.push("tick_seconds must be positive".into());
        }
        if !(self.max_wait_estimate_h > 0.0) {
            out.push("max_wait_estimate_h must be positive".into());
        }
        out
    }
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            speed_kmh: 30.0,
            charge_power_kw: 60.0,
            tick_seconds: 60.0,
            xi_convention: XiConvention::Cv,
            sample_window: 50,
            max_wait_estimate_h: 4.0,
        }
    }
}

/// A ride request as it enters the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestSpec {
    /// Seconds since horizon start.
    pub time: f64,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub layout: StationLayout,
    /// Sorted by time.
    pub requests: Vec<RequestSpec>,
    /// Request count per hour of the horizon, fed to the demand weight.
    pub hourly_demand: Vec<u64>,
    pub fleet: FleetSpec,
    pub params: SimParams,
    pub dispatch: DispatchConfig,
    pub seed: u64,
}

impl Scenario {
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.fleet.problems();
        out.extend(self.params.problems());
        out.extend(self.dispatch.problems());
        if self.requests.iter().any(|r| !(r.time.is_finite() && r.time >= 0.0)) {
            out.push("request times must be finite and non-negative".into());
        }
        if self.requests.windows(2).any(|w| w[1].time < w[0].time) {
            out.push("requests must be sorted by time".into());
        }
        let finite = |p: GeoPoint| p.x.is_finite() && p.y.is_finite();
        if self.requests.iter().any(|r| !finite(r.origin) || !finite(r.destination)) {
            out.push("request coordinates must be finite".into());
        }
        out
    }

    fn service_defaults(&self) -> ServiceDefaults {
        ServiceDefaults { mean_hours: self.fleet.battery_kwh / self.params.charge_power_kw, sigma_hours: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    /// Verify kernel invariants after every event.
    pub check_invariants: bool,
    pub record_log: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    RequestArrival { request: RequestId },
    PickupComplete { taxi: TaxiId, request: RequestId },
    DropoffComplete { taxi: TaxiId, request: RequestId },
    StationArrival { taxi: TaxiId, station: StationId },
    ChargeComplete { taxi: TaxiId, station: StationId },
    WaitlistTick,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// What happened at one processed event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time: f64,
    pub seq: u64,
    pub event: EventKind,
    /// Kilometres driven in the leg this event completes.
    pub km: f64,
    /// Passenger wait in minutes, on pickups.
    pub wait_min: Option<f64>,
    pub fare: Option<f64>,
    pub assigned: Vec<(RequestId, TaxiId)>,
    pub cancelled: Vec<RequestId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartEntry {
    pub time: f64,
    pub station: StationId,
    pub occupied: usize,
    pub queue_len: usize,
}

#[derive(Debug, Clone)]
pub struct ChargingStation {
    pub id: StationId,
    pub chargers: usize,
    pub occupied: usize,
    pub queue: VecDeque<TaxiId>,
    pub stats: StationStats,
    pub wait_estimate_h: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HourStats {
    pub hour: usize,
    pub requests: usize,
    pub fulfilled: usize,
    pub cancelled: usize,
    /// Minutes; zero when nothing was fulfilled.
    pub mean_wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub taxis: usize,
    pub requests: usize,
    pub completed: usize,
    pub cancelled: usize,
    pub fulfill_rate: f64,
    /// Minutes from request to pickup over fulfilled requests.
    pub mean_wait: f64,
    pub max_wait: f64,
    pub gini: f64,
    /// Kilometres per taxi, empty and loaded.
    pub mean_distance: f64,
    pub total_fleet_km: f64,
    pub energy_consumed_kwh: f64,
    pub energy_charged_kwh: f64,
    pub charging_sessions: usize,
    pub end_time: f64,
    pub emissions: FleetComparison,
    pub hourly: Vec<HourStats>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_hourly_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "hour,requests,fulfilled,cancelled,mean_wait")?;
        for h in &self.hourly {
            writeln!(w, "{},{},{},{},{:.4}", h.hour, h.requests, h.fulfilled, h.cancelled, h.mean_wait)?;
        }
        Ok(())
    }
}

pub fn write_chart_csv<W: Write>(mut w: W, chart: &[ChartEntry]) -> std::io::Result<()> {
    writeln!(w, "time,station_id,occupied,queue_len")?;
    for c in chart {
        writeln!(w, "{:.3},{},{},{}", c.time, c.station, c.occupied, c.queue_len)?;
    }
    Ok(())
}

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub chart: Vec<ChartEntry>,
    pub log: Vec<LogEntry>,
    pub fleet: Vec<ElectricTaxi>,
    pub requests: Vec<dispatch::RideRequest>,
}

pub fn run(scenario: &Scenario, options: SimOptions) -> Result<SimOutcome, SimError> {
    let problems = scenario.problems();
    if !problems.is_empty() {
        return Err(SimError::Config(problems));
    }
    let mut kernel = Kernel::new(scenario, options);
    kernel.run()?;
    Ok(kernel.finish())
}

struct Kernel<'a> {
    scenario: &'a Scenario,
    options: SimOptions,
    platform: Platform,
    stations: Vec<ChargingStation>,
    station_waits: Vec<f64>,
    queue: BinaryHeap<Event>,
    next_seq: u64,
    now: f64,
    /// Request arrivals not yet processed.
    arrivals_left: usize,
    tick_pending: bool,
    /// Planned km of each scheduled leg, keyed by taxi.
    leg_km: Vec<f64>,
    d_ref: f64,
    chart: Vec<ChartEntry>,
    log: Vec<LogEntry>,
    initial_energy: f64,
    consumed: f64,
    charged: f64,
    sessions: usize,
}

impl<'a> Kernel<'a> {
    fn new(scenario: &'a Scenario, options: SimOptions) -> Self {
        let layout = scenario.layout.clone();
        let k = layout.len();
        let fleet: Vec<ElectricTaxi> = (0..scenario.fleet.taxis)
            .map(|i| {
                ElectricTaxi::new(
                    i,
                    layout.centroid(i % k),
                    &layout,
                    scenario.fleet.battery_kwh,
                    scenario.fleet.consumption_kwh_per_km(),
                )
            })
            .collect();
        let initial_energy = fleet.iter().map(ElectricTaxi::energy_kwh).sum();
        let stations = layout
            .stations()
            .iter()
            .map(|s| ChargingStation {
                id: s.id,
                chargers: s.chargers,
                occupied: 0,
                queue: VecDeque::new(),
                stats: StationStats::new(scenario.params.sample_window),
                wait_estimate_h: 0.0,
            })
            .collect();
        let origins: Vec<GeoPoint> = scenario.requests.iter().map(|r| r.origin).collect();
        let d_ref = dispatch::reference_distance(&origins, &layout);
        let mut platform = Platform::new(layout, scenario.dispatch, fleet);

        let mut kernel = Self {
            scenario,
            options,
            platform: {
                for r in &scenario.requests {
                    platform.submit(r.origin, r.destination, r.time);
                }
                platform
            },
            stations,
            station_waits: vec![0.0; k],
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: 0.0,
            arrivals_left: scenario.requests.len(),
            tick_pending: false,
            leg_km: vec![0.0; scenario.fleet.taxis],
            d_ref,
            chart: Vec::new(),
            log: Vec::new(),
            initial_energy,
            consumed: 0.0,
            charged: 0.0,
            sessions: 0,
        };
        for (id, r) in scenario.requests.iter().enumerate() {
            kernel.schedule(r.time, EventKind::RequestArrival { request: id });
        }
        kernel
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { time, seq, kind });
    }

    fn ensure_tick(&mut self) {
        if !self.tick_pending && (self.arrivals_left > 0 || self.platform.waitlist().len() > 0) {
            self.tick_pending = true;
            self.schedule(self.now + self.scenario.params.tick_seconds, EventKind::WaitlistTick);
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        self.ensure_tick();
        while let Some(ev) = self.queue.pop() {
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            let mut entry = LogEntry {
                time: ev.time,
                seq: ev.seq,
                event: ev.kind,
                km: 0.0,
                wait_min: None,
                fare: None,
                assigned: Vec::new(),
                cancelled: Vec::new(),
            };
            self.handle(ev.kind, &mut entry)?;
            if self.options.check_invariants {
                self.check_invariants()?;
            }
            if self.options.record_log {
                self.log.push(entry);
            }
        }
        if self.options.check_invariants {
            self.check_final()?;
        }
        Ok(())
    }

    fn handle(&mut self, kind: EventKind, entry: &mut LogEntry) -> Result<(), SimError> {
        match kind {
            EventKind::RequestArrival { request } => {
                self.arrivals_left -= 1;
                self.scan_waitlist(entry)?;
                let income = self.platform.fleet_mean_income();
                let ctx = score_context(self.now, self.scenario, &self.station_waits, self.d_ref, income);
                let outcome = self.platform.handle_request(request, &ctx);
                match outcome {
                    RequestOutcome::Assigned { taxi, .. } => {
                        entry.assigned.push((request, taxi));
                        self.dispatch_to_pickup(request, taxi)?;
                    }
                    RequestOutcome::Waitlisted => self.ensure_tick(),
                }
            }
            EventKind::PickupComplete { taxi, request } => {
                let origin = self.platform.request(request).origin;
                entry.km = self.leg_km[taxi];
                self.consumed += self.platform.drive(taxi, origin, entry.km);
                self.platform.mark_pickup(request, self.now);
                entry.wait_min = self.platform.request(request).wait_minutes();
                let trip = self.platform.request(request).trip_distance;
                self.leg_km[taxi] = trip;
                self.schedule(self.now + self.travel(trip), EventKind::DropoffComplete { taxi, request });
            }
            EventKind::DropoffComplete { taxi, request } => {
                let destination = self.platform.request(request).destination;
                entry.km = self.leg_km[taxi];
                self.consumed += self.platform.drive(taxi, destination, entry.km);
                entry.fare = Some(self.platform.complete_trip(request, self.now));
                match dispatch::post_trip_decision(self.platform.taxi(taxi), self.platform.layout(), self.platform.config()) {
                    PostTrip::ToStation(station) => {
                        self.platform.set_state(taxi, TaxiState::ToStation);
                        let km = manhattan(destination, self.platform.layout().centroid(station));
                        self.leg_km[taxi] = km;
                        self.schedule(self.now + self.travel(km), EventKind::StationArrival { taxi, station });
                    }
                    PostTrip::StayAvailable => {
                        self.platform.make_available(taxi, self.now);
                        self.scan_waitlist(entry)?;
                    }
                }
            }
            EventKind::StationArrival { taxi, station } => {
                let centroid = self.platform.layout().centroid(station);
                entry.km = self.leg_km[taxi];
                self.consumed += self.platform.drive(taxi, centroid, entry.km);
                self.stations[station].stats.record_arrival(self.now);
                self.refresh_estimate(station);
                let st = &mut self.stations[station];
                if st.occupied < st.chargers {
                    self.start_charge(taxi, station);
                } else {
                    st.queue.push_back(taxi);
                    self.platform.set_state(taxi, TaxiState::QueuedAtStation);
                }
                self.record_chart(station);
            }
            EventKind::ChargeComplete { taxi, station } => {
                let t = self.platform.taxi(taxi);
                self.charged += (1.0 - t.soc) * t.battery_kwh;
                self.platform.set_soc(taxi, 1.0);
                self.stations[station].occupied -= 1;
                self.platform.make_available(taxi, self.now);
                if let Some(next) = self.stations[station].queue.pop_front() {
                    self.start_charge(next, station);
                }
                self.record_chart(station);
                self.scan_waitlist(entry)?;
            }
            EventKind::WaitlistTick => {
                self.tick_pending = false;
                self.scan_waitlist(entry)?;
                self.ensure_tick();
            }
        }
        Ok(())
    }

    fn travel(&self, km: f64) -> f64 {
        travel_time(km, self.scenario.params.speed_kmh)
    }

    fn scan_waitlist(&mut self, entry: &mut LogEntry) -> Result<(), SimError> {
        if self.platform.waitlist().len() == 0 {
            return Ok(());
        }
        let income = self.platform.fleet_mean_income();
        let ctx = score_context(self.now, self.scenario, &self.station_waits, self.d_ref, income);
        let outcome: WaitlistOutcome = self.platform.process_waitlist(&ctx);
        for &(request, taxi) in &outcome.assigned {
            self.dispatch_to_pickup(request, taxi)?;
        }
        entry.assigned.extend(outcome.assigned);
        entry.cancelled.extend(outcome.cancelled);
        Ok(())
    }

    fn dispatch_to_pickup(&mut self, request: RequestId, taxi: TaxiId) -> Result<(), SimError> {
        let (t, r) = (self.platform.taxi(taxi), self.platform.request(request));
        if !dispatch::reachability_test(t, r, self.scenario.dispatch.reachability_buffer) {
            return Err(SimError::Invariant {
                time: self.now,
                message: format!("taxi {taxi} assigned to request {request} without passing reachability"),
            });
        }
        let km = manhattan(t.position, r.origin);
        self.leg_km[taxi] = km;
        self.schedule(self.now + self.travel(km), EventKind::PickupComplete { taxi, request });
        Ok(())
    }

    fn start_charge(&mut self, taxi: TaxiId, station: StationId) {
        let t = self.platform.taxi(taxi);
        let hours = (1.0 - t.soc) * t.battery_kwh / self.scenario.params.charge_power_kw;
        let st = &mut self.stations[station];
        st.occupied += 1;
        st.stats.record_charge(hours);
        self.sessions += 1;
        self.platform.set_state(taxi, TaxiState::Charging);
        self.schedule(self.now + hours * 3600.0, EventKind::ChargeComplete { taxi, station });
    }

    fn refresh_estimate(&mut self, station: StationId) {
        let cap = self.scenario.params.max_wait_estimate_h;
        let st = &mut self.stations[station];
        st.stats.prune(self.now);
        let params = queueing::estimate_params(&st.stats, st.chargers, self.scenario.service_defaults());
        let w = match queueing::w_mgs(&params, self.scenario.params.xi_convention) {
            Ok(w) => w.min(cap),
            Err(QueueError::Unstable { .. } | QueueError::Singular | QueueError::InvalidParams(_)) => cap,
        };
        st.wait_estimate_h = w;
        self.station_waits[station] = w;
    }

    fn record_chart(&mut self, station: StationId) {
        let st = &self.stations[station];
        self.chart.push(ChartEntry { time: self.now, station, occupied: st.occupied, queue_len: st.queue.len() });
    }

    fn violation(&self, message: String) -> SimError {
        SimError::Invariant { time: self.now, message }
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        let fleet = self.platform.fleet();
        if fleet.len() != self.scenario.fleet.taxis {
            return Err(self.violation("fleet size changed".into()));
        }
        let mut charging = vec![0usize; self.stations.len()];
        for t in fleet {
            if !(t.soc >= -SOC_SLACK && t.soc <= 1.0) {
                return Err(self.violation(format!("taxi {} soc {} out of [0,1]", t.id, t.soc)));
            }
            let listed = self.platform.available_in(t.subregion).any(|id| id == t.id);
            if listed != (t.state == TaxiState::Available) {
                return Err(self.violation(format!("taxi {} availability index out of sync", t.id)));
            }
            match (t.state, t.request) {
                (TaxiState::Serving, Some(r)) => {
                    let req = self.platform.request(r);
                    if req.state != RequestState::Assigned || req.taxi != Some(t.id) {
                        return Err(self.violation(format!("taxi {} serving request {} not assigned to it", t.id, r)));
                    }
                }
                (TaxiState::Serving, None) => return Err(self.violation(format!("taxi {} serving nothing", t.id))),
                (_, Some(r)) => return Err(self.violation(format!("idle taxi {} holds request {}", t.id, r))),
                (TaxiState::Charging, None) => {
                    charging[t.subregion] += 1;
                }
                _ => {}
            }
        }
        for st in &self.stations {
            if st.occupied > st.chargers {
                return Err(self.violation(format!("station {} over capacity", st.id)));
            }
            if !st.queue.is_empty() && st.occupied != st.chargers {
                return Err(self.violation(format!("station {} queues with a free charger", st.id)));
            }
            if charging[st.id] != st.occupied {
                return Err(self.violation(format!("station {} occupancy {} but {} taxis charging", st.id, st.occupied, charging[st.id])));
            }
            if st.queue.iter().any(|&t| fleet[t].state != TaxiState::QueuedAtStation) {
                return Err(self.violation(format!("station {} queue holds a taxi not waiting", st.id)));
            }
        }
        for r in self.platform.requests() {
            if r.state == RequestState::Assigned {
                let ok = r.taxi.is_some_and(|t| fleet[t].state == TaxiState::Serving && fleet[t].request == Some(r.id));
                if !ok {
                    return Err(self.violation(format!("request {} assigned without a serving taxi", r.id)));
                }
            }
        }
        let wl: Vec<RequestId> = self.platform.waitlist().collect();
        if wl.windows(2).any(|w| w[0] >= w[1]) {
            return Err(self.violation("waitlist not in arrival order".into()));
        }
        if wl.iter().any(|&r| self.platform.request(r).state != RequestState::Waitlisted) {
            return Err(self.violation("waitlist holds a request that is not waitlisted".into()));
        }
        let now_energy: f64 = fleet.iter().map(ElectricTaxi::energy_kwh).sum();
        let expected = self.initial_energy + self.charged - self.consumed;
        if (now_energy - expected).abs() > ENERGY_TOLERANCE * self.initial_energy.max(1.0) {
            return Err(self.violation(format!("energy balance off: {now_energy} vs {expected}")));
        }
        Ok(())
    }

    fn check_final(&self) -> Result<(), SimError> {
        let fleet = self.platform.fleet();
        let by_km: f64 = fleet.iter().map(|t| t.km_driven * t.consumption_kwh_per_km).sum();
        if (by_km - self.consumed).abs() > ENERGY_TOLERANCE * self.consumed.max(1.0) {
            return Err(self.violation(format!("consumed {} kWh but km imply {}", self.consumed, by_km)));
        }
        let cancel_s = self.scenario.dispatch.wait_cancel_min * 60.0;
        for r in self.platform.requests() {
            match r.state {
                RequestState::Completed | RequestState::Cancelled => {}
                other => return Err(self.violation(format!("request {} left {:?}", r.id, other))),
            }
            if let Some(at) = r.cancelled_at {
                if at - r.request_time < cancel_s {
                    return Err(self.violation(format!("request {} cancelled early", r.id)));
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> SimOutcome {
        let fleet = self.platform.fleet().to_vec();
        let requests = self.platform.requests().to_vec();
        let completed: Vec<_> = requests.iter().filter(|r| r.state == RequestState::Completed).collect();
        let cancelled = requests.iter().filter(|r| r.state == RequestState::Cancelled).count();
        let waits: Vec<f64> = completed.iter().filter_map(|r| r.wait_minutes()).collect();
        let mean_wait = if waits.is_empty() { 0.0 } else { waits.iter().sum::<f64>() / waits.len() as f64 };
        let max_wait = waits.iter().copied().fold(0.0, f64::max);
        let total_km: f64 = fleet.iter().map(|t| t.km_driven).sum();
        let incomes: Vec<f64> = fleet.iter().map(|t| t.income).collect();
        let resolved = completed.len() + cancelled;

        let hours = requests
            .iter()
            .map(|r| (r.request_time / 3600.0) as usize + 1)
            .max()
            .unwrap_or(0)
            .max(self.scenario.hourly_demand.len());
        let mut hourly: Vec<HourStats> = (0..hours).map(|hour| HourStats { hour, ..Default::default() }).collect();
        for r in &requests {
            let h = &mut hourly[(r.request_time / 3600.0) as usize];
            h.requests += 1;
            match r.state {
                RequestState::Completed => {
                    h.fulfilled += 1;
                    h.mean_wait += r.wait_minutes().unwrap_or(0.0);
                }
                RequestState::Cancelled => h.cancelled += 1,
                _ => {}
            }
        }
        for h in &mut hourly {
            if h.fulfilled > 0 {
                h.mean_wait /= h.fulfilled as f64;
            }
        }

        let rates = emissions::default_rates();
        let report = SimReport {
            seed: self.scenario.seed,
            taxis: fleet.len(),
            requests: requests.len(),
            completed: completed.len(),
            cancelled,
            fulfill_rate: if resolved == 0 { 1.0 } else { completed.len() as f64 / resolved as f64 },
            mean_wait,
            max_wait,
            gini: gini(&incomes),
            mean_distance: total_km / fleet.len() as f64,
            total_fleet_km: total_km,
            energy_consumed_kwh: self.consumed,
            energy_charged_kwh: self.charged,
            charging_sessions: self.sessions,
            end_time: self.now,
            emissions: emissions::fleet_comparison(total_km, rates.tv_co2, rates.ev_co2),
            hourly,
        };
        SimOutcome { report, chart: self.chart, log: self.log, fleet, requests }
    }
}

/// Scoring inputs at `now`. C1 is the mean of the current station wait
/// estimates.
fn score_context<'s>(now: f64, scenario: &Scenario, waits: &'s [f64], d_ref: f64, mean_income: f64) -> ScoreContext<'s> {
    let hour = (now / 3600.0) as usize;
    ScoreContext {
        now,
        demand: scenario.hourly_demand.get(hour).copied().unwrap_or(0) as f64,
        c1: waits.iter().sum::<f64>() / waits.len() as f64,
        station_waits: waits,
        fleet_mean_income: mean_income,
        d_ref,
    }
}
