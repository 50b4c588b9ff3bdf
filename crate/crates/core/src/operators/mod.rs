//! Assembled forms of the structure-preserving scheme.

pub mod director;
pub mod forms;
pub mod leslie;
pub mod momentum;
pub mod params;

pub use params::{Model, Params};
