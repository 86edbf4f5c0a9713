//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::path::Path;
use std::time::Instant;

use common::{ctx, line_layout, platform, random_scenario, taxi, MIN};
use etaxi::cli;
use etaxi::config::{self, ScenarioFile};
use etaxi::dispatch::{self, RequestOutcome, RequestState, RideRequest, TaxiState};
use etaxi::emissions;
use etaxi::geo::{self, GeoPoint, KMeansConfig};
use etaxi::queueing::{self, QueueParams, ServiceLaw, XiConvention};
use etaxi::sim::{self, EventKind, RequestSpec, Scenario, SimOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn criterion_1() -> Outcome {
    let a = queueing::w_mms(1.0, 2.0, 1).map_err(|e| e.to_string())?;
    let b = queueing::w_mms(1.5, 1.0, 2).map_err(|e| e.to_string())?;
    check(rel(a, 0.5) <= 1e-12, format!("M/M/1 wait {a}"))?;
    check(rel(b, 9.0 / 7.0) <= 1e-12, format!("M/M/2 wait {b}"))?;
    Ok(format!("w(1;1,2)={a}, w(2;1.5,1)={b:.15}"))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let rows = cli::oracle_grid(1_000_000, 1).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let worst = |law: ServiceLaw| rows.iter().filter(|r| r.law == law).map(|r| r.rel_err()).fold(0.0, f64::max);
    let (mm, md) = (worst(ServiceLaw::Exponential), worst(ServiceLaw::Deterministic));
    check(rows.iter().filter(|r| r.law != ServiceLaw::Erlang(4)).count() == 12, "grid incomplete")?;
    check(mm <= 0.02, format!("M/M/s off by {:.2}%", mm * 100.0))?;
    check(md <= 0.03, format!("M/D/s off by {:.2}%", md * 100.0))?;
    check(secs < 120.0, format!("took {secs:.1}s"))?;
    Ok(format!("max rel err M/M/s {:.2}% (≤2%), M/D/s {:.2}% (≤3%), {secs:.1}s", mm * 100.0, md * 100.0))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_end, mut worst_lim) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let s = rng.random_range(1..=40usize);
        let mu = rng.random_range(0.05..20.0);
        let lambda = rng.random_range(0.01..0.99) * s as f64 * mu;
        let e = |err: queueing::QueueError| err.to_string();
        let mm = queueing::w_mms(lambda, mu, s).map_err(e)?;
        let md = queueing::w_mds(lambda, mu, s).map_err(e)?;
        let at_one = queueing::w_mgs(&QueueParams::new(lambda, mu, 1.0 / mu, s), XiConvention::Cv).map_err(e)?;
        let at_zero = queueing::w_mgs(&QueueParams::new(lambda, mu, 0.0, s), XiConvention::Cv).map_err(e)?;
        worst_end = worst_end.max(rel(at_one, mm)).max(rel(at_zero, md));
        if s > 1 {
            let limit = queueing::interpolate_limit(mm, md).map_err(e)?;
            worst_lim = worst_lim.max(rel(queueing::interpolate(mm, md, 1e7), limit));
        }
    }
    check(worst_end <= 1e-12, format!("endpoint rel err {worst_end:e}"))?;
    check(worst_lim <= 1e-9, format!("limit rel err {worst_lim:e}"))?;
    Ok(format!("1000 draws: endpoints {worst_end:.1e} (≤1e-12), limit {worst_lim:.1e} (≤1e-9)"))
}

fn criterion_4() -> Outcome {
    let r = emissions::default_rates();
    let c = emissions::fleet_comparison(1.0e6, r.tv_co2, r.ev_co2);
    let pct = c.reduction_fraction * 100.0;
    check((r.tv_co2 - 18.61).abs() <= 0.02, format!("TV rate {}", r.tv_co2))?;
    check((r.ev_coal - 3.73).abs() <= 0.02, format!("EV coal {}", r.ev_coal))?;
    check((pct - 52.3).abs() <= 0.5, format!("reduction {pct}%"))?;
    Ok(format!("TV {:.3} kg/100km, EV coal {:.3} kg/100km, reduction {pct:.2}%", r.tv_co2, r.ev_coal))
}

fn desk_scenario() -> Result<Scenario, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/baseline.cfg");
    let cfg = ScenarioFile::load(&path).and_then(|f| f.resolve()).map_err(|e| e.to_string())?;
    let built = config::build_scenario(&cfg).map_err(|e| e.to_string())?;
    Ok(built.scenario)
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let base = desk_scenario()?;
    check(base.fleet.taxis == 200 && base.requests.len() == 5000 && base.layout.len() == 12, "desk scenario shape")?;

    // (a) supply: initial charge plus every charger running for the whole horizon
    let kwh_km = base.fleet.consumption_kwh_per_km();
    let horizon_h = base.hourly_demand.len() as f64;
    let chargers: usize = base.layout.stations().iter().map(|s| s.chargers).sum();
    let supply = base.fleet.taxis as f64 * base.fleet.battery_kwh + chargers as f64 * base.params.charge_power_kw * horizon_h;
    let demand: f64 = base.requests.iter().map(|r| geo::manhattan(r.origin, r.destination) * kwh_km).sum();
    check(supply >= 2.0 * demand, format!("precondition: supply {supply:.0} kWh < 2 × demand {demand:.0} kWh"))?;
    let run = |s: &Scenario| sim::run(s, SimOptions { check_invariants: true, record_log: false }).map_err(|e| e.to_string());
    let out = run(&base)?;
    let r = &out.report;
    check(r.fulfill_rate >= 0.90, format!("(a) fulfill rate {}", r.fulfill_rate))?;

    // (b)
    let mut flat = base.clone();
    flat.dispatch.w2 = 0.0;
    let flat_gini = run(&flat)?.report.gini;
    check(r.gini < flat_gini, format!("(b) gini {} with fairness vs {} without", r.gini, flat_gini))?;

    // (c)
    check(r.mean_wait.is_finite(), "(c) mean wait not finite")?;
    let cancel_s = base.dispatch.wait_cancel_min * 60.0;
    let early = out
        .requests
        .iter()
        .filter(|q| q.state == RequestState::Cancelled)
        .filter(|q| q.cancelled_at.unwrap() - q.request_time < cancel_s)
        .count();
    check(early == 0, format!("(c) {early} requests cancelled before the threshold"))?;

    // (d)
    let xs = [0.001, 0.01, 0.1];
    let rows = cli::sweep(&base, &xs).map_err(|e| e.to_string())?;
    check(rows.len() == 3, "(d) sweep row count")?;
    for (x, row) in xs.iter().zip(&rows) {
        let line = cli::sweep_row(*x, row);
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect();
        check(cols.len() == 5 && cols.iter().all(|c| c.is_finite()), format!("(d) bad row {line}"))?;
    }
    let secs = t.elapsed().as_secs_f64();
    check(secs < 300.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "(a) fulfill {:.4}, supply/demand {:.1}× (b) gini {:.4} < {:.4} (c) wait {:.2} min, {} cancelled, none early (d) 3 rows; {secs:.1}s",
        r.fulfill_rate,
        supply / demand,
        r.gini,
        flat_gini,
        r.mean_wait,
        r.cancelled
    ))
}

fn criterion_6() -> Outcome {
    // short range and few chargers: frequent charging, station queues and waitlisting
    let mut s = random_scenario(40, 1500, 4, 12, 12.0, 17);
    s.fleet.range_km = 60.0;
    let checked = SimOptions { check_invariants: true, record_log: true };
    let a = sim::run(&s, checked).map_err(|e| e.to_string())?;
    let b = sim::run(&s, checked).map_err(|e| e.to_string())?;
    check(a.report.to_json() == b.report.to_json(), "reports differ between identical runs")?;
    let queued = a.chart.iter().filter(|c| c.queue_len > 0).count();
    let charges = a.log.iter().filter(|e| matches!(e.event, EventKind::ChargeComplete { .. })).count();
    let waitlisted = a.requests.iter().filter(|r| r.assigned_at.is_some_and(|t| t > r.request_time)).count();
    check(queued > 0 && charges > 0 && waitlisted > 0, "scenario did not exercise queues, charging and the waitlist")?;
    Ok(format!(
        "{} events checked, {charges} charges, {queued} queued chart rows, {waitlisted} waitlisted-then-served, identical bytes",
        a.log.len()
    ))
}

fn criterion_7() -> Outcome {
    let p = GeoPoint::new;
    let l = line_layout(&[0.0, 10.0]);
    let w = [0.0; 2];

    // reachability: exact equality passes with zero buffer, anything less fails
    let wide = line_layout(&[0.0, 20.0]);
    let req = RideRequest::new(0, p(-20.0, 0.0), p(20.0, 10.0), 0.0, &wide);
    let exact = taxi(0, p(0.0, 0.0), 0.5, &wide);
    check(dispatch::energy_needed(&exact, &req, 0.0) == exact.energy_kwh(), "equality case not constructed")?;
    check(dispatch::reachability_test(&exact, &req, 0.0), "equality should pass")?;
    check(!dispatch::reachability_test(&taxi(0, p(0.0, 0.0), 0.4999, &wide), &req, 0.0), "below need should fail")?;
    check(!dispatch::reachability_test(&exact, &req, 0.1), "buffer should fail the equality case")?;
    check(!dispatch::reachability_test(&taxi(0, p(0.0, 0.0), 0.0, &wide), &req, 0.0), "empty battery")?;

    // ties by id
    let mut pf = platform(&l, (0..3).map(|i| taxi(i, p(2.0, 1.0), 0.9, &l)).collect());
    let r = pf.submit(p(1.0, 0.0), p(2.0, 0.0), 0.0);
    check(matches!(pf.handle_request(r, &ctx(0.0, &w)), RequestOutcome::Assigned { taxi: 0, .. }), "tie not to smallest id")?;
    check(dispatch::select_candidate([(7, 1.0), (2, 1.0), (5, 1.0)]) == Some(2), "select_candidate tie")?;

    // escalation only after the threshold
    let mut pf = platform(&l, vec![taxi(0, p(9.0, 0.0), 1.0, &l)]);
    let r = pf.submit(p(1.0, 0.0), p(2.0, 0.0), 0.0);
    pf.handle_request(r, &ctx(0.0, &w));
    check(pf.process_waitlist(&ctx(5.0 * MIN, &w)).assigned.is_empty(), "escalated at threshold")?;
    check(pf.process_waitlist(&ctx(6.0 * MIN, &w)).assigned == vec![(r, 0)], "no escalation after threshold")?;

    // cancellation only after the threshold
    let mut pf = platform(&l, vec![]);
    let r = pf.submit(p(1.0, 0.0), p(2.0, 0.0), 0.0);
    pf.handle_request(r, &ctx(0.0, &w));
    check(pf.process_waitlist(&ctx(30.0 * MIN, &w)).cancelled.is_empty(), "cancelled at threshold")?;
    check(pf.process_waitlist(&ctx(30.0 * MIN + 1.0, &w)).cancelled == vec![r], "not cancelled after threshold")?;

    // waitlisted requests outrank later ones
    let mut pf = platform(&l, vec![taxi(0, p(1.0, 0.0), 1.0, &l)]);
    pf.set_state(0, TaxiState::Charging);
    let ids: Vec<_> = (0..3).map(|i| pf.submit(p(1.0, 0.0), p(2.0, 0.0), i as f64)).collect();
    for &id in &ids {
        pf.handle_request(id, &ctx(id as f64, &w));
    }
    pf.make_available(0, 60.0);
    check(pf.process_waitlist(&ctx(60.0, &w)).assigned == vec![(ids[0], 0)], "oldest waitlisted not served first")?;

    let reqs = [(0.0, 1.0), (30.0, 2.0), (60.0, 3.0), (600.0, 1.5)]
        .iter()
        .map(|&(t, x)| RequestSpec { time: t, origin: p(x, 0.0), destination: p(x, 2.0) })
        .collect();
    let scenario = Scenario {
        layout: line_layout(&[0.0, 50.0]),
        requests: reqs,
        hourly_demand: vec![4],
        fleet: sim::FleetSpec { taxis: 1, ..Default::default() },
        params: Default::default(),
        dispatch: Default::default(),
        seed: 1,
    };
    let out = sim::run(&scenario, SimOptions { check_invariants: true, record_log: false }).map_err(|e| e.to_string())?;
    let pickups: Vec<f64> = out.requests.iter().filter_map(|r| r.pickup_at).collect();
    check(pickups.len() == 4 && pickups.windows(2).all(|w| w[0] < w[1]), format!("service order {pickups:?}"))?;
    Ok("reachability boundaries, id tie-break, escalation, cancellation, waitlist priority".into())
}

fn criterion_8() -> Outcome {
    let mut worst_rise = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(20..400);
        let k = rng.random_range(1..=12).min(n);
        let pts: Vec<GeoPoint> =
            (0..n).map(|_| GeoPoint::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0))).collect();
        let r = geo::kmeans(&pts, &KMeansConfig { k, seed, ..Default::default() }).map_err(|e| e.to_string())?;
        for w in r.objective_history.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    check(worst_rise <= 0.0, format!("objective rose by {worst_rise:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 1.5).unwrap();
    let truth = [GeoPoint::new(-10.0, -10.0), GeoPoint::new(10.0, 8.0)];
    let mut pts = Vec::new();
    for c in truth {
        pts.extend((0..1000).map(|_| GeoPoint::new(c.x + noise.sample(&mut rng), c.y + noise.sample(&mut rng))));
    }
    let r = geo::kmeans(&pts, &KMeansConfig { k: 2, seed: 4, ..Default::default() }).map_err(|e| e.to_string())?;
    // generating centres recovered to within a few standard errors (1.5/√1000 ≈ 0.05 km)
    let miss = truth
        .iter()
        .map(|t| r.centroids.iter().map(|&c| geo::manhattan(c, *t)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    check(miss < 0.25, format!("blob centre missed by {miss} km"))?;
    Ok(format!("100 datasets monotone; two blobs recovered within {miss:.3} km (≤0.25)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 queueing exactness", criterion_1),
        ("2 oracle equivalence", criterion_2),
        ("3 interpolation endpoints", criterion_3),
        ("4 emissions", criterion_4),
        ("5 desk scenario", criterion_5),
        ("6 simulation invariants", criterion_6),
        ("7 dispatch suite", criterion_7),
        ("8 k-means", criterion_8),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {name} [{secs:.2}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} [{secs:.2}s]: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
