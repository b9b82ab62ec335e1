//! Map quality against ground truth.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::Result;
use crate::grid_map::GridMap;
use crate::world::GroundTruth;

const VARIANCE_FLOOR: f64 = 1e-9;

/// Metrics of one map state at mission time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSnapshot {
    pub t: f64,
    pub trace: f64,
    pub rmse: f64,
    pub wrmse: f64,
    pub mll: f64,
    pub wmll: f64,
}

impl MetricSnapshot {
    pub fn capture(t: f64, map: &GridMap, gt: &GroundTruth) -> Self {
        let uniform = uniform_weights(map.num_cells());
        let weights = truth_weights(gt);
        Self {
            t,
            trace: map.trace(),
            rmse: weighted_rmse(map, gt, &uniform),
            wrmse: weighted_rmse(map, gt, &weights),
            mll: weighted_mll(map, gt, &uniform),
            wmll: weighted_mll(map, gt, &weights),
        }
    }
}

/// One mission's metric log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub planner: String,
    pub snapshots: Vec<MetricSnapshot>,
    pub planning_seconds: f64,
}

pub const CSV_HEADER: [&str; 6] = ["t", "trace", "rmse", "wrmse", "mll", "wmll"];

impl TrialRecord {
    pub fn last(&self) -> Option<&MetricSnapshot> {
        self.snapshots.last()
    }

    /// Writes the snapshots with header `t,trace,rmse,wrmse,mll,wmll`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for s in &self.snapshots {
            w.write_record([s.t, s.trace, s.rmse, s.wrmse, s.mll, s.wmll].map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `ζ_i / Σζ`, or uniform when the field is identically zero.
fn truth_weights(gt: &GroundTruth) -> Vec<f64> {
    let total: f64 = gt.values.iter().sum();
    if total > 0.0 {
        gt.values.iter().map(|v| v / total).collect()
    } else {
        uniform_weights(gt.values.len())
    }
}

fn weighted_rmse(map: &GridMap, gt: &GroundTruth, w: &[f64]) -> f64 {
    map.mean
        .iter()
        .zip(&gt.values)
        .zip(w)
        .map(|((m, z), w)| w * (m - z) * (m - z))
        .sum::<f64>()
        .sqrt()
}

fn weighted_mll(map: &GridMap, gt: &GroundTruth, w: &[f64]) -> f64 {
    (0..map.num_cells())
        .map(|i| {
            let var = map.covariance[(i, i)].max(VARIANCE_FLOOR);
            let err = gt.values[i] - map.mean[i];
            w[i] * (0.5 * (2.0 * PI * var).ln() + err * err / (2.0 * var))
        })
        .sum()
}

/// Root mean squared error of the map mean.
pub fn rmse(map: &GridMap, gt: &GroundTruth) -> f64 {
    weighted_rmse(map, gt, &uniform_weights(map.num_cells()))
}

/// Mean per-cell Gaussian negative log likelihood of the ground truth.
pub fn mll(map: &GridMap, gt: &GroundTruth) -> f64 {
    weighted_mll(map, gt, &uniform_weights(map.num_cells()))
}

/// RMSE with cells weighted by their share of the total ground-truth value.
pub fn wrmse(map: &GridMap, gt: &GroundTruth) -> f64 {
    weighted_rmse(map, gt, &truth_weights(gt))
}

/// MLL with the same weighting as [`wrmse`].
pub fn wmll(map: &GridMap, gt: &GroundTruth) -> f64 {
    weighted_mll(map, gt, &truth_weights(gt))
}
