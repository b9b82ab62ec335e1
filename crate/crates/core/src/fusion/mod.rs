//! Sequential Bayesian fusion of camera frames into a [`GridMap`].
//!
//! A frame is reduced to a linear Gaussian observation: each row averages a
//! set of map cells and carries an altitude-dependent noise variance. Above
//! the scale altitude the image is downsampled, so one row covers a block of
//! `1/s_f × 1/s_f` cells with uniform weights; below it every footprint cell is
//! observed directly.
//!
//! [`GridMap`]: crate::grid_map::GridMap

mod simulated;
mod update;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_map::GridGeometry;

pub use simulated::{CovarianceOnlyFusion, Factor};
pub use update::{fuse_in_place, kf_update};

/// Altitude-dependent camera model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    /// Noise variance asymptote.
    pub a: f64,
    /// Noise growth rate per metre of altitude.
    pub b: f64,
    /// Full field-of-view angle of the square footprint.
    pub fov_deg: f64,
    /// Altitude above which the image resolution is scaled by `scale_factor`.
    pub scale_altitude_m: f64,
    pub scale_factor: f64,
    pub frequency_hz: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            a: 0.2,
            b: 0.05,
            fov_deg: 60.0,
            scale_altitude_m: 10.0,
            scale_factor: 0.5,
            frequency_hz: 0.15,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSensorModel(msg));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("a must be positive, got {}", self.a));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad(format!("b must be positive, got {}", self.b));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return bad(format!("scale_factor must be in (0, 1], got {}", self.scale_factor));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad(format!("fov_deg must be in (0, 180), got {}", self.fov_deg));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return bad(format!("frequency_hz must be positive, got {}", self.frequency_hz));
        }
        if !(self.scale_altitude_m >= 0.0) {
            return bad(format!(
                "scale_altitude_m must be non-negative, got {}",
                self.scale_altitude_m
            ));
        }
        Ok(())
    }

    pub fn noise_variance(&self, altitude_m: f64) -> f64 {
        noise_variance(altitude_m, self)
    }

    /// Half the side length of the square ground footprint at `altitude_m`.
    pub fn footprint_half_side(&self, altitude_m: f64) -> f64 {
        altitude_m * (0.5 * self.fov_deg).to_radians().tan()
    }

    /// Side length, in cells, of the averaging block at `altitude_m`.
    pub fn block_side(&self, altitude_m: f64) -> usize {
        if altitude_m <= self.scale_altitude_m {
            1
        } else {
            (1.0 / self.scale_factor).round().max(1.0) as usize
        }
    }
}

/// Measurement noise variance `a (1 − e^{−b h})`.
pub fn noise_variance(altitude_m: f64, sm: &SensorModel) -> f64 {
    sm.a * (1.0 - (-sm.b * altitude_m).exp())
}

/// One observation row: a weighted average of cells plus its noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub cells: Vec<usize>,
    pub weights: Vec<f64>,
    pub noise_var: f64,
}

impl ObservationRow {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cells.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Value-free structure of a frame: the rows of `H` and the diagonal of `R`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observation {
    pub rows: Vec<ObservationRow>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self, geometry: &GridGeometry) -> Result<()> {
        let n = geometry.num_cells();
        for (r, row) in self.rows.iter().enumerate() {
            if row.cells.is_empty() || row.cells.len() != row.weights.len() {
                return Err(Error::InvalidMeasurement(format!(
                    "row {r} has {} cells and {} weights",
                    row.cells.len(),
                    row.weights.len()
                )));
            }
            if let Some(&c) = row.cells.iter().find(|&&c| c >= n) {
                return Err(Error::InvalidMeasurement(format!(
                    "row {r} references cell {c} outside the {n}-cell grid"
                )));
            }
            if row.weights.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::InvalidMeasurement(format!("row {r} has a negative weight")));
            }
            let sum: f64 = row.weights.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidMeasurement(format!(
                    "row {r} weights sum to {sum}, expected 1"
                )));
            }
            if !(row.noise_var > 0.0 && row.noise_var.is_finite()) {
                return Err(Error::InvalidMeasurement(format!(
                    "row {r} noise variance {} is not positive",
                    row.noise_var
                )));
            }
        }
        Ok(())
    }
}

/// A frame's observation structure together with its measured values.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub observation: Observation,
    pub values: Vec<f64>,
}

impl Measurement {
    pub fn new(observation: Observation, values: Vec<f64>) -> Result<Self> {
        if observation.len() != values.len() {
            return Err(Error::InvalidMeasurement(format!(
                "{} rows but {} values",
                observation.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasurement("non-finite measured value".into()));
        }
        Ok(Self {
            observation,
            values,
        })
    }

    pub fn validate(&self, geometry: &GridGeometry) -> Result<()> {
        if self.observation.len() != self.values.len() {
            return Err(Error::InvalidMeasurement("row/value count mismatch".into()));
        }
        self.observation.validate(geometry)
    }
}

/// Builds the observation rows for a footprint seen from `altitude_m`.
///
/// Blocks are anchored at the footprint's lowest `(ix, iy)` corner; blocks cut
/// by the footprint edge average over the cells they actually contain. Rows
/// are ordered row-major by block.
pub fn build_observation(
    footprint: &[usize],
    geometry: &GridGeometry,
    altitude_m: f64,
    sm: &SensorModel,
) -> Result<Observation> {
    if footprint.is_empty() {
        return Err(Error::EmptyFootprint);
    }
    let side = sm.block_side(altitude_m);
    let noise_var = noise_variance(altitude_m, sm);
    let (min_x, min_y) = footprint.iter().fold((usize::MAX, usize::MAX), |(mx, my), &c| {
        let (ix, iy) = geometry.cell(c);
        (mx.min(ix), my.min(iy))
    });
    let mut blocks: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for &c in footprint {
        let (ix, iy) = geometry.cell(c);
        blocks
            .entry(((iy - min_y) / side, (ix - min_x) / side))
            .or_default()
            .push(c);
    }
    let rows = blocks
        .into_values()
        .map(|mut cells| {
            cells.sort_unstable();
            cells.dedup();
            let w = 1.0 / cells.len() as f64;
            ObservationRow {
                weights: vec![w; cells.len()],
                cells,
                noise_var,
            }
        })
        .collect();
    Ok(Observation { rows })
}
