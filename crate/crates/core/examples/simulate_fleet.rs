//! Run the bundled smoke scenario end to end and print the report.
//!
//! ```bash
//! cargo run --release --example simulate_fleet [scenario.cfg]
//! ```

use std::path::PathBuf;

use etaxi::config::{self, ScenarioFile};
use etaxi::{run, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/smoke.cfg"));
    let cfg = ScenarioFile::load(&path)?.resolve()?;
    let built = config::build_scenario(&cfg)?;
    println!(
        "{} requests ({} dropped outside the horizon), {} taxis, {} stations",
        built.scenario.requests.len(),
        built.dropped_trips,
        built.scenario.fleet.taxis,
        built.scenario.layout.len()
    );

    let out = run(&built.scenario, SimOptions { check_invariants: true, record_log: false })?;
    println!("{}", out.report.to_json());
    let busiest = out.chart.iter().max_by_key(|c| c.queue_len);
    if let Some(c) = busiest {
        println!("longest charger queue: {} taxis at station {} (t = {:.0} s)", c.queue_len, c.station, c.time);
    }
    Ok(())
}
