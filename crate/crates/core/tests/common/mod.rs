#![allow(dead_code)]

use etaxi::dispatch::{DispatchConfig, ElectricTaxi, Platform, ScoreContext};
use etaxi::geo::{GeoPoint, StationLayout};
use etaxi::sim::{FleetSpec, RequestSpec, Scenario, SimParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BATTERY_KWH: f64 = 40.0;
pub const KWH_PER_KM: f64 = 0.25;

/// Stations on the x axis, two chargers each.
pub fn line_layout(xs: &[f64]) -> StationLayout {
    let c: Vec<GeoPoint> = xs.iter().map(|&x| GeoPoint::new(x, 0.0)).collect();
    StationLayout::uniform(&c, 2).unwrap()
}

pub fn taxi(id: usize, at: GeoPoint, soc: f64, layout: &StationLayout) -> ElectricTaxi {
    let mut t = ElectricTaxi::new(id, at, layout, BATTERY_KWH, KWH_PER_KM);
    t.soc = soc;
    t
}

pub fn platform(layout: &StationLayout, fleet: Vec<ElectricTaxi>) -> Platform {
    Platform::new(layout.clone(), DispatchConfig::default(), fleet)
}

pub fn ctx(now: f64, waits: &[f64]) -> ScoreContext<'_> {
    ScoreContext { now, demand: 100.0, c1: 1.0, station_waits: waits, fleet_mean_income: 0.0, d_ref: 5.0 }
}

pub const MIN: f64 = 60.0;

/// Random scenario on a square city with uniform demand.
pub fn random_scenario(taxis: usize, requests: usize, stations: usize, hours: usize, half_km: f64, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pt = |rng: &mut ChaCha8Rng| GeoPoint::new(rng.random_range(-half_km..half_km), rng.random_range(-half_km..half_km));
    let centroids: Vec<GeoPoint> = (0..stations).map(|_| pt(&mut rng)).collect();
    let layout = StationLayout::uniform(&centroids, 2).unwrap();
    let horizon = hours as f64 * 3600.0;
    let mut reqs: Vec<RequestSpec> = (0..requests)
        .map(|_| RequestSpec { time: rng.random_range(0.0..horizon), origin: pt(&mut rng), destination: pt(&mut rng) })
        .collect();
    reqs.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut hourly = vec![0u64; hours];
    for r in &reqs {
        hourly[(r.time / 3600.0) as usize] += 1;
    }
    Scenario {
        layout,
        requests: reqs,
        hourly_demand: hourly,
        fleet: FleetSpec { taxis, ..Default::default() },
        params: SimParams::default(),
        dispatch: DispatchConfig::default(),
        seed,
    }
}
