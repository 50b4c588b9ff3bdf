//! Configuration, presets and file output.

pub mod config;
pub mod csv;
pub mod run;
pub mod vtu;

pub use config::{ConfigError, ConfigOverrides, Experiment, RunConfig};
pub use csv::{render_energy_csv, write_energy_csv, ENERGY_COLUMNS};
pub use vtu::{render_vtu, write_collection, write_fields, VtuLayout};
