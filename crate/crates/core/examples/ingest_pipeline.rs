//! Generate synthetic GPS records, write them in the record format, read them
//! back and extract trips and the hourly demand curve.
//!
//! ```bash
//! cargo run --example ingest_pipeline
//! ```

use etaxi::ingest::{self, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = SyntheticSpec::city(200, 2_000, 24);
    spec.missing_fix_probability = 0.05;
    let records = ingest::generate_synthetic(&spec, 7)?;

    let mut raw = Vec::new();
    ingest::write_records(&mut raw, &records)?;
    let parsed = ingest::read_records(raw.as_slice())?;
    println!("{} records, first row: {}", parsed.len(), parsed[0]);

    let ex = ingest::extract_trips(&parsed);
    println!("{} pickups -> {} trips ({} excluded)", ex.pickups, ex.trips.len(), ex.exclusions.excluded());

    let curve = ingest::build_demand_curve(&ex.trips, spec.horizon_start, spec.horizon_hours())?;
    let peak = curve.counts.iter().enumerate().max_by_key(|(_, c)| **c).unwrap();
    println!("peak hour {:02}:00 with {} requests", peak.0, peak.1);
    curve.write_csv(std::io::stdout().lock())?;
    Ok(())
}
