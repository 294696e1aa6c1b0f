//! Configuration, persistence, experiment drivers and the identity battery.

pub mod battery;
pub mod config;
pub mod drivers;
pub mod profiles;
pub mod rng;
pub mod snapshot;

pub use battery::{run_battery, verify_operators, BatteryReport};
pub use config::{parse_config, Config};
pub use drivers::{grid_from_config, run_ensemble, run_simulation, run_twin};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotHeader};
