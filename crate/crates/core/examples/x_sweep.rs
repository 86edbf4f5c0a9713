//! Sweep the demand weight scale `x` on the desk baseline scenario.
//!
//! ```bash
//! cargo run --release --example x_sweep
//! ```

use std::path::Path;

use etaxi::cli;
use etaxi::config::{self, ScenarioFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/baseline.cfg");
    let built = config::build_scenario(&ScenarioFile::load(&path)?.resolve()?)?;
    let xs = [0.001, 0.01, 0.1, 1.0];
    let reports = cli::sweep(&built.scenario, &xs)?;
    println!("{}", cli::SWEEP_HEADER);
    for (x, r) in xs.iter().zip(&reports) {
        println!("{}", cli::sweep_row(*x, r));
    }
    Ok(())
}
