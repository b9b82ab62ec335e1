//! Informative path planning for UAV terrain monitoring with Gaussian-process
//! occupancy maps.

pub mod benchmarks;
pub mod cmaes;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod grid_map;
pub mod metrics;
pub mod planner;
mod linalg;
pub mod trajectory;
pub mod world;

pub use error::{Error, Result};
