//! Tailpipe CO₂ of fuel taxis versus generation-side CO₂ of electric taxis.

use serde::{Deserialize, Serialize};

/// Share of generation by source, as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricityMix {
    pub thermal: f64,
    pub hydro: f64,
    pub wind: f64,
    pub solar: f64,
    pub pumped_storage: f64,
    pub nuclear: f64,
}

impl ElectricityMix {
    /// China, 2016.
    pub const CHINA_2016: ElectricityMix = ElectricityMix {
        thermal: 0.721,
        hydro: 0.1886,
        wind: 0.0395,
        solar: 0.0108,
        pumped_storage: 0.005,
        nuclear: 0.0349,
    };

    pub fn is_valid(&self) -> bool {
        [self.thermal, self.hydro, self.wind, self.solar, self.pumped_storage, self.nuclear]
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
    }
}

impl Default for ElectricityMix {
    fn default() -> Self {
        Self::CHINA_2016
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactors {
    pub co2_per_litre_oil: f64,
    pub co2_per_kg_coal: f64,
    pub kwh_per_kg_coal: f64,
}

impl Default for EmissionFactors {
    fn default() -> Self {
        Self { co2_per_litre_oil: 2.3, co2_per_kg_coal: 2.38, kwh_per_kg_coal: 3.21 }
    }
}

/// Consumption per 100 km: litres for fuel vehicles, kWh for electric ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub label: String,
    pub per_100km: f64,
}

impl VehicleSpec {
    pub fn new(label: impl Into<String>, per_100km: f64) -> Self {
        Self { label: label.into(), per_100km }
    }
}

pub fn default_fuel_vehicles() -> Vec<VehicleSpec> {
    vec![
        VehicleSpec::new("Toyota Yaris L", 6.72),
        VehicleSpec::new("Chevrolet Sonic", 7.59),
        VehicleSpec::new("Ford Escape", 9.95),
    ]
}

pub fn default_electric_vehicles() -> Vec<VehicleSpec> {
    vec![VehicleSpec::new("Geely Emgrand EV", 15.8), VehicleSpec::new("BYD Qin Pro DM", 17.5)]
}

fn mean_consumption(specs: &[VehicleSpec]) -> Option<f64> {
    if specs.is_empty() {
        return None;
    }
    Some(specs.iter().map(|s| s.per_100km).sum::<f64>() / specs.len() as f64)
}

/// kg CO₂ per 100 km for the average fuel vehicle.
pub fn tv_co2_per_100km(specs: &[VehicleSpec], factors: &EmissionFactors) -> Option<f64> {
    mean_consumption(specs).map(|l| l * factors.co2_per_litre_oil)
}

/// kg of coal burned per 100 km for the average electric vehicle, assuming
/// all thermal generation is coal-fired.
pub fn ev_coal_per_100km(specs: &[VehicleSpec], mix: &ElectricityMix, factors: &EmissionFactors) -> Option<f64> {
    mean_consumption(specs).map(|kwh| kwh * mix.thermal / factors.kwh_per_kg_coal)
}

/// kg CO₂ per 100 km for the average electric vehicle.
pub fn ev_co2_per_100km(specs: &[VehicleSpec], mix: &ElectricityMix, factors: &EmissionFactors) -> Option<f64> {
    ev_coal_per_100km(specs, mix, factors).map(|coal| coal * factors.co2_per_kg_coal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetComparison {
    pub tv_kg: f64,
    pub ev_kg: f64,
    pub reduction_fraction: f64,
}

pub fn fleet_comparison(total_fleet_km: f64, tv_rate: f64, ev_rate: f64) -> FleetComparison {
    let km = total_fleet_km.max(0.0);
    FleetComparison {
        tv_kg: km * tv_rate / 100.0,
        ev_kg: km * ev_rate / 100.0,
        // the km factor cancels, so the ratio is well defined at zero distance
        reduction_fraction: if tv_rate > 0.0 { 1.0 - ev_rate / tv_rate } else { 0.0 },
    }
}

/// Per-100km rates from the default vehicle tables, China 2016 mix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultRates {
    pub tv_co2: f64,
    pub ev_coal: f64,
    pub ev_co2: f64,
}

pub fn default_rates() -> DefaultRates {
    let f = EmissionFactors::default();
    let mix = ElectricityMix::default();
    let ev = default_electric_vehicles();
    DefaultRates {
        tv_co2: tv_co2_per_100km(&default_fuel_vehicles(), &f).expect("non-empty table"),
        ev_coal: ev_coal_per_100km(&ev, &mix, &f).expect("non-empty table"),
        ev_co2: ev_co2_per_100km(&ev, &mix, &f).expect("non-empty table"),
    }
}

pub const COMPARISON_HEADER: &str = "scope,tv_kg,ev_kg,reduction_pct";

pub fn comparison_csv_row(scope: &str, c: &FleetComparison) -> String {
    format!("{scope},{:.3},{:.3},{:.3}", c.tv_kg, c.ev_kg, c.reduction_fraction * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fuel_vehicle() {
        let r = tv_co2_per_100km(&[VehicleSpec::new("x", 10.0)], &EmissionFactors::default()).unwrap();
        assert!((r - 23.0).abs() < 1e-12);
    }

    #[test]
    fn fuel_table_rate() {
        let r = default_rates();
        assert!((r.tv_co2 - 18.61).abs() <= 0.02, "{}", r.tv_co2);
    }

    #[test]
    fn electric_chain() {
        let r = default_rates();
        // 16.65 kWh * 0.721 / 3.21 kWh/kg
        assert!((r.ev_coal - 3.739_766_355).abs() < 1e-6);
        assert!((r.ev_co2 - 8.900_643_925).abs() < 1e-6);
    }

    #[test]
    fn renewable_grid_has_no_emissions() {
        let mix = ElectricityMix { thermal: 0.0, ..ElectricityMix::default() };
        let r = ev_co2_per_100km(&default_electric_vehicles(), &mix, &EmissionFactors::default()).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn empty_table_has_no_rate() {
        assert!(tv_co2_per_100km(&[], &EmissionFactors::default()).is_none());
    }

    #[test]
    fn zero_distance_keeps_ratio() {
        let c = fleet_comparison(0.0, 18.61, 8.88);
        assert_eq!((c.tv_kg, c.ev_kg), (0.0, 0.0));
        assert!((c.reduction_fraction - (1.0 - 8.88 / 18.61)).abs() < 1e-15);
    }

    #[test]
    fn mix_table_validates() {
        assert!(ElectricityMix::CHINA_2016.is_valid());
    }
}
