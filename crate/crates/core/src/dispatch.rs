//! Centralized dispatch platform.
//!
//! A request is first offered to the available taxis of its own sub-region.
//! Candidates must be able to reach the origin, carry the passenger and then
//! reach the destination's charging station on their current charge. The
//! best-scoring candidate wins. Requests nobody can serve join a FIFO
//! waitlist that is rescanned before any new request; after the escalation
//! threshold a waiting request may also draw from adjacent sub-regions, and
//! after the cancel threshold it is declined.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geo::{self, manhattan, GeoPoint, StationId, StationLayout};
use crate::queueing::{self, MatchingCoefficients};

pub type TaxiId = usize;
pub type RequestId = usize;

/// Added to the fleet mean income before normalizing.
pub const INCOME_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxiState {
    Available,
    /// Assigned to a request, driving to pickup or carrying the passenger.
    Serving,
    /// Driving to a charging station.
    ToStation,
    QueuedAtStation,
    Charging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectricTaxi {
    pub id: TaxiId,
    pub position: GeoPoint,
    /// Sub-region containing `position`.
    pub subregion: StationId,
    pub soc: f64,
    pub battery_kwh: f64,
    pub consumption_kwh_per_km: f64,
    pub state: TaxiState,
    pub income: f64,
    pub orders: u32,
    /// Seconds since horizon start at which the taxi last became idle.
    pub empty_since: f64,
    pub km_driven: f64,
    pub request: Option<RequestId>,
}

impl ElectricTaxi {
    pub fn new(id: TaxiId, position: GeoPoint, layout: &StationLayout, battery_kwh: f64, consumption: f64) -> Self {
        Self {
            id,
            position,
            subregion: geo::assign_subregion(position, layout),
            soc: 1.0,
            battery_kwh,
            consumption_kwh_per_km: consumption,
            state: TaxiState::Available,
            income: 0.0,
            orders: 0,
            empty_since: 0.0,
            km_driven: 0.0,
            request: None,
        }
    }

    pub fn energy_kwh(&self) -> f64 {
        self.soc * self.battery_kwh
    }

    /// SOC left after driving `km`.
    pub fn soc_after(&self, km: f64) -> f64 {
        self.soc - km * self.consumption_kwh_per_km / self.battery_kwh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestState {
    Pending,
    Waitlisted,
    Assigned,
    Completed,
    Cancelled,
}

impl RequestState {
    pub fn can_advance_to(self, next: RequestState) -> bool {
        use RequestState::*;
        matches!(
            (self, next),
            (Pending, Waitlisted) | (Pending, Assigned) | (Waitlisted, Assigned) | (Waitlisted, Cancelled) | (Assigned, Completed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RideRequest {
    pub id: RequestId,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    /// Seconds since horizon start.
    pub request_time: f64,
    pub trip_distance: f64,
    pub origin_region: StationId,
    pub destination_region: StationId,
    /// Distance from the destination to its sub-region's station.
    pub destination_to_station: f64,
    pub state: RequestState,
    pub taxi: Option<TaxiId>,
    pub assigned_at: Option<f64>,
    pub pickup_at: Option<f64>,
    pub dropoff_at: Option<f64>,
    pub cancelled_at: Option<f64>,
}

impl RideRequest {
    pub fn new(id: RequestId, origin: GeoPoint, destination: GeoPoint, request_time: f64, layout: &StationLayout) -> Self {
        let destination_region = geo::assign_subregion(destination, layout);
        Self {
            id,
            origin,
            destination,
            request_time,
            trip_distance: manhattan(origin, destination),
            origin_region: geo::assign_subregion(origin, layout),
            destination_region,
            destination_to_station: manhattan(destination, layout.centroid(destination_region)),
            state: RequestState::Pending,
            taxi: None,
            assigned_at: None,
            pickup_at: None,
            dropoff_at: None,
            cancelled_at: None,
        }
    }

    fn advance(&mut self, next: RequestState) {
        assert!(self.state.can_advance_to(next), "request {}: illegal transition {:?} -> {:?}", self.id, self.state, next);
        self.state = next;
    }

    /// Minutes between the request and pickup, if picked up.
    pub fn wait_minutes(&self) -> Option<f64> {
        self.pickup_at.map(|p| (p - self.request_time) / 60.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchConfig {
    /// Scale of the demand-adaptive distance weight.
    pub x: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub soc_charge_threshold: f64,
    pub wait_escalation_min: f64,
    pub wait_cancel_min: f64,
    pub reachability_buffer: f64,
    pub adjacency_m: usize,
    pub flag_fall: f64,
    pub per_km_rate: f64,
    pub matching: MatchingCoefficients,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        Self {
            x: 0.01,
            w1: -1.0,
            w2: -0.5,
            w3: 1.0,
            w4: 0.0,
            soc_charge_threshold: 0.2,
            wait_escalation_min: 5.0,
            wait_cancel_min: 30.0,
            reachability_buffer: 0.1,
            adjacency_m: 3,
            flag_fall: 13.0,
            per_km_rate: 2.3,
            matching: MatchingCoefficients::default(),
        }
    }
}

impl DispatchConfig {
    /// Every violated constraint, as human-readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("x", self.x), ("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4)] {
            if !v.is_finite() {
                out.push(format!("{name} must be finite"));
            }
        }
        if self.x < 0.0 {
            out.push("x must be non-negative".into());
        }
        if !(self.soc_charge_threshold > 0.0 && self.soc_charge_threshold < 1.0) {
            out.push("soc_charge_threshold must lie in (0, 1)".into());
        }
        if !(self.wait_escalation_min > 0.0) {
            out.push("wait_escalation_min must be positive".into());
        }
        if !(self.wait_cancel_min > self.wait_escalation_min) {
            out.push("wait_cancel_min must exceed wait_escalation_min".into());
        }
        if !(self.reachability_buffer >= 0.0) {
            out.push("reachability_buffer must be non-negative".into());
        }
        if !(self.flag_fall >= 0.0 && self.per_km_rate >= 0.0) {
            out.push("fares must be non-negative".into());
        }
        out
    }

    pub fn fare(&self, trip_km: f64) -> f64 {
        self.flag_fall + self.per_km_rate * trip_km
    }
}

/// Demand-adaptive weight on pickup distance.
pub fn f_demand(demand: f64, x: f64) -> f64 {
    x * demand.max(0.0).sqrt()
}

/// kWh needed to pick up, carry and then reach the destination's station,
/// including the safety buffer.
pub fn energy_needed(taxi: &ElectricTaxi, request: &RideRequest, buffer: f64) -> f64 {
    let km = manhattan(taxi.position, request.origin) + request.trip_distance + request.destination_to_station;
    km * taxi.consumption_kwh_per_km * (1.0 + buffer)
}

pub fn reachability_test(taxi: &ElectricTaxi, request: &RideRequest, buffer: f64) -> bool {
    taxi.energy_kwh() >= energy_needed(taxi, request, buffer)
}

/// Inputs to scoring that come from outside the taxi/request pair.
#[derive(Debug, Clone, Copy)]
pub struct ScoreContext<'a> {
    pub now: f64,
    /// Requests in the current hour of the demand curve.
    pub demand: f64,
    /// Utilization scale, hours.
    pub c1: f64,
    /// Current mean-wait estimate per station, hours.
    pub station_waits: &'a [f64],
    pub fleet_mean_income: f64,
    /// Pickup-distance normalizer, km.
    pub d_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub d: f64,
    pub d_norm: f64,
    pub income_norm: f64,
    pub o: f64,
    pub empty_time_norm: f64,
    pub f_demand: f64,
    pub total: f64,
}

impl ScoreBreakdown {
    /// Recombines the parts under the given weights.
    pub fn recompose(&self, cfg: &DispatchConfig) -> f64 {
        self.f_demand * cfg.w1 * self.d_norm + cfg.w2 * self.income_norm + cfg.w3 * self.o + cfg.w4 * self.empty_time_norm
    }
}

pub fn score(taxi: &ElectricTaxi, request: &RideRequest, ctx: &ScoreContext<'_>, cfg: &DispatchConfig) -> ScoreBreakdown {
    let d = manhattan(taxi.position, request.origin);
    let d_norm = d / ctx.d_ref;
    let income_norm = taxi.income / (ctx.fleet_mean_income + INCOME_EPSILON);
    let wait = ctx.station_waits.get(request.destination_region).copied().unwrap_or(0.0);
    let u = queueing::utilization(wait, ctx.c1);
    let soc_after = taxi.soc_after(d + request.trip_distance).clamp(0.0, 1.0);
    let o = queueing::matching_degree(u, soc_after, cfg.matching);
    let empty_time_norm = ((ctx.now - taxi.empty_since) / 3600.0).clamp(0.0, 1.0);
    let fd = f_demand(ctx.demand, cfg.x);
    let mut b = ScoreBreakdown { d, d_norm, income_norm, o, empty_time_norm, f_demand: fd, total: 0.0 };
    b.total = b.recompose(cfg);
    b
}

/// Highest score wins; equal scores go to the smaller taxi id.
pub fn select_candidate<I>(scored: I) -> Option<TaxiId>
where
    I: IntoIterator<Item = (TaxiId, f64)>,
{
    scored
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(id, _)| id)
}

/// 95th percentile of the distance from each point to its station, floored
/// at 100 m.
pub fn reference_distance(points: &[GeoPoint], layout: &StationLayout) -> f64 {
    const FLOOR_KM: f64 = 0.1;
    if points.is_empty() {
        return FLOOR_KM;
    }
    let mut d: Vec<f64> = points.iter().map(|&p| geo::distance_to_nearest_station(p, layout)).collect();
    d.sort_by(f64::total_cmp);
    let idx = ((d.len() as f64 * 0.95).ceil() as usize).clamp(1, d.len()) - 1;
    d[idx].max(FLOOR_KM)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RequestOutcome {
    Assigned { taxi: TaxiId, score: ScoreBreakdown },
    Waitlisted,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaitlistOutcome {
    pub assigned: Vec<(RequestId, TaxiId)>,
    pub cancelled: Vec<RequestId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostTrip {
    ToStation(StationId),
    StayAvailable,
}

/// Charging decision for a taxi that just dropped off a passenger.
pub fn post_trip_decision(taxi: &ElectricTaxi, layout: &StationLayout, cfg: &DispatchConfig) -> PostTrip {
    if taxi.soc < cfg.soc_charge_threshold {
        PostTrip::ToStation(geo::assign_subregion(taxi.position, layout))
    } else {
        PostTrip::StayAvailable
    }
}

/// Fleet, requests and waitlist under one dispatcher.
#[derive(Debug, Clone)]
pub struct Platform {
    layout: StationLayout,
    config: DispatchConfig,
    fleet: Vec<ElectricTaxi>,
    requests: Vec<RideRequest>,
    /// Available taxis per sub-region.
    available: Vec<BTreeSet<TaxiId>>,
    waitlist: VecDeque<RequestId>,
    adjacency: Vec<Vec<StationId>>,
    total_income: f64,
}

impl Platform {
    /// Taxis must have dense ids `0..n`. Every taxi starts available.
    pub fn new(layout: StationLayout, config: DispatchConfig, fleet: Vec<ElectricTaxi>) -> Self {
        let k = layout.len();
        let m = config.adjacency_m.min(k.saturating_sub(1));
        let adjacency = (0..k).map(|s| geo::adjacent_subregions(s, &layout, m)).collect();
        let mut available = vec![BTreeSet::new(); k];
        for (i, t) in fleet.iter().enumerate() {
            assert_eq!(t.id, i, "taxi ids must be dense");
            if t.state == TaxiState::Available {
                available[t.subregion].insert(t.id);
            }
        }
        let total_income = fleet.iter().map(|t| t.income).sum();
        Self { layout, config, fleet, requests: Vec::new(), available, waitlist: VecDeque::new(), adjacency, total_income }
    }

    pub fn layout(&self) -> &StationLayout {
        &self.layout
    }

    pub fn config(&self) -> &DispatchConfig {
        &self.config
    }

    pub fn fleet(&self) -> &[ElectricTaxi] {
        &self.fleet
    }

    pub fn taxi(&self, id: TaxiId) -> &ElectricTaxi {
        &self.fleet[id]
    }

    pub fn requests(&self) -> &[RideRequest] {
        &self.requests
    }

    pub fn request(&self, id: RequestId) -> &RideRequest {
        &self.requests[id]
    }

    pub fn waitlist(&self) -> impl ExactSizeIterator<Item = RequestId> + '_ {
        self.waitlist.iter().copied()
    }

    pub fn available_in(&self, region: StationId) -> impl Iterator<Item = TaxiId> + '_ {
        self.available[region].iter().copied()
    }

    pub fn fleet_mean_income(&self) -> f64 {
        self.total_income / self.fleet.len().max(1) as f64
    }

    /// Registers a new pending request and returns its id.
    pub fn submit(&mut self, origin: GeoPoint, destination: GeoPoint, request_time: f64) -> RequestId {
        let id = self.requests.len();
        self.requests.push(RideRequest::new(id, origin, destination, request_time, &self.layout));
        id
    }

    /// Offers a pending request to its own sub-region; waitlists it if no
    /// candidate passes the reachability test.
    pub fn handle_request(&mut self, id: RequestId, ctx: &ScoreContext<'_>) -> RequestOutcome {
        assert_eq!(self.requests[id].state, RequestState::Pending);
        let region = self.requests[id].origin_region;
        match self.best_candidate(id, &[region], ctx) {
            Some((taxi, score)) => {
                self.assign(id, taxi, ctx.now);
                RequestOutcome::Assigned { taxi, score }
            }
            None => {
                self.requests[id].advance(RequestState::Waitlisted);
                self.waitlist.push_back(id);
                RequestOutcome::Waitlisted
            }
        }
    }

    /// Scans the waitlist in arrival order: cancels requests past the cancel
    /// threshold, then tries to serve the rest, widening the search to
    /// adjacent sub-regions once the escalation threshold has passed.
    pub fn process_waitlist(&mut self, ctx: &ScoreContext<'_>) -> WaitlistOutcome {
        let mut out = WaitlistOutcome::default();
        let cancel_s = self.config.wait_cancel_min * 60.0;
        let escalate_s = self.config.wait_escalation_min * 60.0;
        let mut kept = VecDeque::with_capacity(self.waitlist.len());
        let queue = std::mem::take(&mut self.waitlist);
        for id in queue {
            let waited = ctx.now - self.requests[id].request_time;
            if waited > cancel_s {
                let r = &mut self.requests[id];
                r.advance(RequestState::Cancelled);
                r.cancelled_at = Some(ctx.now);
                out.cancelled.push(id);
                continue;
            }
            let own = self.requests[id].origin_region;
            let mut regions = vec![own];
            if waited > escalate_s {
                regions.extend_from_slice(&self.adjacency[own]);
            }
            match self.best_candidate(id, &regions, ctx) {
                Some((taxi, _)) => {
                    self.assign(id, taxi, ctx.now);
                    out.assigned.push((id, taxi));
                }
                None => kept.push_back(id),
            }
        }
        self.waitlist = kept;
        out
    }

    fn best_candidate(&self, id: RequestId, regions: &[StationId], ctx: &ScoreContext<'_>) -> Option<(TaxiId, ScoreBreakdown)> {
        let req = &self.requests[id];
        let buffer = self.config.reachability_buffer;
        let mut best: Option<(TaxiId, ScoreBreakdown)> = None;
        for &region in regions {
            for taxi in self.available[region].iter().map(|&t| &self.fleet[t]) {
                if !reachability_test(taxi, req, buffer) {
                    continue;
                }
                let s = score(taxi, req, ctx, &self.config);
                let better = match &best {
                    None => true,
                    Some((bid, bs)) => select_candidate([(*bid, bs.total), (taxi.id, s.total)]) == Some(taxi.id),
                };
                if better {
                    best = Some((taxi.id, s));
                }
            }
        }
        best
    }

    fn assign(&mut self, id: RequestId, taxi: TaxiId, now: f64) {
        self.set_state(taxi, TaxiState::Serving);
        self.fleet[taxi].request = Some(id);
        let r = &mut self.requests[id];
        r.advance(RequestState::Assigned);
        r.taxi = Some(taxi);
        r.assigned_at = Some(now);
    }

    /// Changes a taxi's state, keeping the availability index in sync.
    pub fn set_state(&mut self, taxi: TaxiId, state: TaxiState) {
        let t = &mut self.fleet[taxi];
        if t.state == TaxiState::Available {
            self.available[t.subregion].remove(&taxi);
        }
        t.state = state;
        if state == TaxiState::Available {
            self.available[t.subregion].insert(taxi);
        }
    }

    /// Marks the taxi idle from `now`.
    pub fn make_available(&mut self, taxi: TaxiId, now: f64) {
        self.fleet[taxi].empty_since = now;
        self.set_state(taxi, TaxiState::Available);
    }

    /// Moves a taxi along an L1 path of `km`, drawing energy. The taxi must
    /// not be available (its index entry would go stale).
    pub fn drive(&mut self, taxi: TaxiId, to: GeoPoint, km: f64) -> f64 {
        let layout = &self.layout;
        let t = &mut self.fleet[taxi];
        debug_assert_ne!(t.state, TaxiState::Available);
        let kwh = km * t.consumption_kwh_per_km;
        t.soc -= kwh / t.battery_kwh;
        t.km_driven += km;
        t.position = to;
        t.subregion = geo::assign_subregion(to, layout);
        kwh
    }

    pub fn mark_pickup(&mut self, id: RequestId, now: f64) {
        self.requests[id].pickup_at = Some(now);
    }

    /// Closes the request and credits the fare.
    pub fn complete_trip(&mut self, id: RequestId, now: f64) -> f64 {
        let r = &mut self.requests[id];
        r.advance(RequestState::Completed);
        r.dropoff_at = Some(now);
        let fare = self.config.fare(r.trip_distance);
        let taxi = r.taxi.expect("completed request has a taxi");
        let t = &mut self.fleet[taxi];
        t.income += fare;
        t.orders += 1;
        t.request = None;
        self.total_income += fare;
        fare
    }

    pub fn set_soc(&mut self, taxi: TaxiId, soc: f64) {
        self.fleet[taxi].soc = soc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> StationLayout {
        StationLayout::uniform(&[GeoPoint::new(0.0, 0.0), GeoPoint::new(20.0, 0.0)], 2).unwrap()
    }

    fn taxi(id: TaxiId, x: f64, soc: f64) -> ElectricTaxi {
        let mut t = ElectricTaxi::new(id, GeoPoint::new(x, 0.0), &layout(), 40.0, 0.25);
        t.soc = soc;
        t
    }

    #[test]
    fn f_demand_values() {
        assert!((f_demand(100.0, 0.1) - 1.0).abs() < 1e-15);
        assert_eq!(f_demand(0.0, 0.1), 0.0);
    }

    #[test]
    fn request_states_only_move_forward() {
        use RequestState::*;
        assert!(Pending.can_advance_to(Waitlisted));
        assert!(Waitlisted.can_advance_to(Cancelled));
        assert!(!Assigned.can_advance_to(Cancelled));
        assert!(!Cancelled.can_advance_to(Assigned));
        assert!(!Completed.can_advance_to(Pending));
    }

    #[test]
    fn reachability_edges() {
        let l = layout();
        let req = RideRequest::new(0, GeoPoint::new(1.0, 0.0), GeoPoint::new(2.0, 0.0), 0.0, &l);
        assert!(reachability_test(&taxi(0, 0.0, 1.0), &req, 0.1));
        assert!(!reachability_test(&taxi(0, 0.0, 0.0), &req, 0.0));
    }

    #[test]
    fn reachability_exact_equality_passes() {
        let l = layout();
        // pickup 20 + trip 50 + 10 to station 1 = 80 km * 0.25 = 20 kWh = 0.5 * 40
        let req = RideRequest::new(0, GeoPoint::new(-20.0, 0.0), GeoPoint::new(20.0, 10.0), 0.0, &l);
        assert_eq!(req.trip_distance, 50.0);
        assert_eq!(req.destination_to_station, 10.0);
        let t = taxi(0, 0.0, 0.5);
        assert_eq!(energy_needed(&t, &req, 0.0), 20.0);
        assert!(reachability_test(&t, &req, 0.0));
        assert!(!reachability_test(&taxi(0, 0.0, 0.49), &req, 0.0));
        assert!(!reachability_test(&t, &req, 0.01));
    }

    #[test]
    fn select_candidate_breaks_ties_by_id() {
        assert_eq!(select_candidate(Vec::<(TaxiId, f64)>::new()), None);
        assert_eq!(select_candidate([(4, 0.3)]), Some(4));
        assert_eq!(select_candidate([(9, 1.0), (3, 1.0), (5, 0.5)]), Some(3));
    }

    #[test]
    fn post_trip_threshold() {
        let cfg = DispatchConfig::default();
        let l = layout();
        assert_eq!(post_trip_decision(&taxi(0, 18.0, 0.2 - 1e-9), &l, &cfg), PostTrip::ToStation(1));
        assert_eq!(post_trip_decision(&taxi(0, 18.0, 1.0), &l, &cfg), PostTrip::StayAvailable);
    }

    #[test]
    fn config_problems_are_collected() {
        let cfg = DispatchConfig { wait_cancel_min: 1.0, reachability_buffer: -1.0, ..Default::default() };
        assert_eq!(cfg.problems().len(), 2);
        assert!(DispatchConfig::default().problems().is_empty());
    }

    #[test]
    fn reference_distance_percentile() {
        let l = layout();
        let pts: Vec<_> = (1..=20).map(|i| GeoPoint::new(0.0, i as f64 * 0.5)).collect();
        // 19th of 20 sorted distances
        assert_eq!(reference_distance(&pts, &l), 9.5);
        assert_eq!(reference_distance(&[], &l), 0.1);
    }
}
