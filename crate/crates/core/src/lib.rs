//! Electric taxi fleet dispatch simulation.
//!
//! The crate covers the full pipeline: GPS status records are turned into
//! trips and hourly demand ([`ingest`]), trip origins are clustered into
//! charging stations ([`geo`]), and a deterministic event loop ([`sim`])
//! replays the requests against a fleet managed by a scoring dispatcher
//! ([`dispatch`]) that accounts for charging-station congestion
//! ([`queueing`]). Fleet mileage is converted into CO₂ figures by
//! [`emissions`].

pub mod cli;
pub mod config;
pub mod dispatch;
pub mod emissions;
pub mod geo;
pub mod ingest;
pub mod queueing;
pub mod sim;

pub use dispatch::{DispatchConfig, Platform};
pub use geo::{GeoPoint, LonLat, StationLayout};
pub use sim::{run, Scenario, SimOptions, SimReport};
