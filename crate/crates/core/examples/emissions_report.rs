//! Per-100 km and fleet-level CO2 of fuel taxis versus electric taxis, and how
//! the comparison moves with the share of thermal generation.
//!
//! ```bash
//! cargo run --example emissions_report
//! ```

use etaxi::emissions::{self, ElectricityMix, EmissionFactors};

fn main() {
    let r = emissions::default_rates();
    println!("fuel taxi      {:.3} kg CO2 / 100 km", r.tv_co2);
    println!("electric taxi  {:.3} kg coal / 100 km", r.ev_coal);
    println!("electric taxi  {:.3} kg CO2 / 100 km", r.ev_co2);

    // a 9000-taxi fleet driving 200 km a day for a year
    let km = 9000.0 * 200.0 * 365.0;
    let c = emissions::fleet_comparison(km, r.tv_co2, r.ev_co2);
    println!("{}", emissions::COMPARISON_HEADER);
    println!("{}", emissions::comparison_csv_row("fleet_year", &c));

    println!();
    println!("thermal_share,ev_co2_per_100km,reduction_pct");
    let factors = EmissionFactors::default();
    let ev = emissions::default_electric_vehicles();
    for share in [1.0, 0.721, 0.5, 0.25, 0.0] {
        let mix = ElectricityMix { thermal: share, ..ElectricityMix::default() };
        let rate = emissions::ev_co2_per_100km(&ev, &mix, &factors).unwrap();
        let cmp = emissions::fleet_comparison(100.0, r.tv_co2, rate);
        println!("{share},{rate:.3},{:.2}", cmp.reduction_fraction * 100.0);
    }
}
