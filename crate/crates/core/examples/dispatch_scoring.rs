//! Score a handful of taxis for one request and show how each term of the
//! dispatch score contributes.
//!
//! ```bash
//! cargo run --example dispatch_scoring
//! ```

use etaxi::dispatch::{self, DispatchConfig, ElectricTaxi, RequestOutcome, ScoreContext};
use etaxi::geo::{GeoPoint, StationLayout};
use etaxi::Platform;

fn main() {
    let layout = StationLayout::uniform(&[GeoPoint::new(0.0, 0.0), GeoPoint::new(8.0, 0.0)], 4).unwrap();
    let cfg = DispatchConfig::default();
    let kwh_km = 38.0 / 250.0;

    let spots = [(0.5, 0.5, 0.9, 400.0), (1.5, -1.0, 0.6, 120.0), (-2.0, 2.0, 0.3, 80.0), (3.0, 0.0, 0.05, 10.0)];
    let fleet: Vec<ElectricTaxi> = spots
        .iter()
        .enumerate()
        .map(|(i, &(x, y, soc, income))| {
            let mut t = ElectricTaxi::new(i, GeoPoint::new(x, y), &layout, 38.0, kwh_km);
            t.soc = soc;
            t.income = income;
            t
        })
        .collect();
    let mut platform = Platform::new(layout, cfg, fleet);
    let waits = [0.2, 1.5];
    let ctx = ScoreContext {
        now: 3600.0,
        demand: 400.0,
        c1: 1.0,
        station_waits: &waits,
        fleet_mean_income: platform.fleet_mean_income(),
        d_ref: 3.0,
    };

    let id = platform.submit(GeoPoint::new(1.0, 0.0), GeoPoint::new(7.0, 2.0), 3600.0);
    let req = platform.request(id).clone();
    println!("taxi  reach      d   income      O    total");
    for t in platform.fleet() {
        let ok = dispatch::reachability_test(t, &req, cfg.reachability_buffer);
        let s = dispatch::score(t, &req, &ctx, &cfg);
        println!("{:>4} {:>6} {:>6.2} {:>8.2} {:>6.3} {:>8.3}", t.id, ok, s.d, s.income_norm, s.o, s.total);
    }
    match platform.handle_request(id, &ctx) {
        RequestOutcome::Assigned { taxi, score } => println!("assigned taxi {taxi} (score {:.3})", score.total),
        RequestOutcome::Waitlisted => println!("waitlisted"),
    }
}
