//! Charging-station wait formulas against a discrete-event simulation of the
//! same queue.
//!
//! ```bash
//! cargo run --release --example queueing_oracle
//! ```

use etaxi::cli;
use etaxi::queueing::{self, QueueParams, XiConvention};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a station with 10 chargers, 12 arrivals/h, 40 min mean charge, 15 min deviation
    let p = QueueParams::new(12.0, 1.5, 0.25, 10);
    println!("rho = {:.3}", p.rho());
    println!("M/M/10 wait {:.2} min", queueing::w_mms(p.lambda, p.mu, p.servers)? * 60.0);
    println!("M/D/10 wait {:.2} min", queueing::w_mds(p.lambda, p.mu, p.servers)? * 60.0);
    println!("M/G/10 wait {:.2} min", queueing::w_mgs(&p, XiConvention::Cv)? * 60.0);
    let w = queueing::w_mgs(&p, XiConvention::Cv)?;
    println!("utilization level {:.3}", queueing::utilization(w, 1.0));

    println!();
    println!("{}", cli::ORACLE_HEADER);
    for row in cli::oracle_grid(200_000, 1)? {
        println!("{}", row.to_csv());
    }
    Ok(())
}
