//! Cluster trip origins into charging-station sites and inspect the resulting
//! sub-regions.
//!
//! ```bash
//! cargo run --example station_siting
//! ```

use etaxi::geo::{self, GeoPoint, KMeansConfig, Projection};
use etaxi::ingest::{self, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::city(300, 3_000, 24);
    let trips = ingest::extract_trips(&ingest::generate_synthetic(&spec, 1)?).trips;
    let proj = Projection::new(spec.reference);
    let origins: Vec<GeoPoint> = trips.iter().map(|t| proj.project(t.origin)).collect();

    let result = geo::kmeans(&origins, &KMeansConfig { k: 12, seed: 3, ..Default::default() })?;
    println!(
        "k-means: {} iterations, converged={}, objective {:.0} -> {:.0}",
        result.iterations,
        result.converged,
        result.objective_history[0],
        result.objective_history.last().unwrap()
    );
    let layout = result.into_layout(10)?;

    let mut members = vec![0usize; layout.len()];
    for &p in &origins {
        members[geo::assign_subregion(p, &layout)] += 1;
    }
    println!("station     x_km     y_km  origins  nearest");
    for s in layout.stations() {
        let near = geo::adjacent_subregions(s.id, &layout, 3);
        println!("{:>7} {:>8.2} {:>8.2} {:>8}  {:?}", s.id, s.centroid.x, s.centroid.y, members[s.id], near);
    }
    Ok(())
}
