//! Simulated terrain and downward-looking camera.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fusion::{build_observation, Measurement, SensorModel};
use crate::grid_map::{GridGeometry, GridMap};
use crate::linalg;

/// Field values per cell, row-major like [`GridGeometry::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl GroundTruth {
    /// Same field with every value multiplied by `factor` (e.g. percent to
    /// fraction).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            geometry: self.geometry,
            values: self.values.iter().map(|v| v * factor).collect(),
            seed: self.seed,
        }
    }

    /// Writes the field as CSV: a `#` geometry line, then one row per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_cells(out, &self.geometry, &["value"], |i| vec![self.values[i]])
    }
}

/// Writes a map's mean and variance in the same layout as
/// [`GroundTruth::write_csv`].
pub fn write_map_csv<W: Write>(map: &GridMap, out: W) -> Result<()> {
    write_cells(out, &map.geometry, &["mean", "variance"], |i| {
        vec![map.mean[i], map.covariance[(i, i)]]
    })
}

fn write_cells<W: Write>(
    mut out: W,
    g: &GridGeometry,
    columns: &[&str],
    values: impl Fn(usize) -> Vec<f64>,
) -> Result<()> {
    writeln!(
        out,
        "# num_x={} num_y={} resolution_m={} width_m={} height_m={}",
        g.num_x, g.num_y, g.resolution_m, g.width_m, g.height_m
    )?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["ix", "iy", "x_m", "y_m"];
    header.extend_from_slice(columns);
    w.write_record(&header)?;
    for i in 0..g.num_cells() {
        let (ix, iy) = g.cell(i);
        let (x, y) = g.center(i);
        let mut rec = vec![ix.to_string(), iy.to_string(), x.to_string(), y.to_string()];
        rec.extend(values(i).into_iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// UAV pose: planar position, altitude and mission time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub t: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, h: f64) -> Self {
        Self { x, y, h, t: 0.0 }
    }

    pub fn at(self, t: f64) -> Self {
        Self { t, ..self }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.h]
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        let (dx, dy, dh) = (self.x - other.x, self.y - other.y, self.h - other.h);
        (dx * dx + dy * dy + dh * dh).sqrt()
    }
}

/// Samples a Gaussian random field with squared-exponential correlation of
/// lengthscale `cluster_radius_m` and rescales it to span exactly `[0, 100]`.
pub fn generate_field(geometry: &GridGeometry, cluster_radius_m: f64, seed: u64) -> Result<GroundTruth> {
    if !(0.5..=10.0).contains(&cluster_radius_m) {
        return Err(Error::InvalidGeometry(format!(
            "cluster radius {cluster_radius_m} m outside [0.5, 10]"
        )));
    }
    let n = geometry.num_cells();
    if n < 2 {
        return Err(Error::InvalidGeometry(
            "a random field needs at least two cells".into(),
        ));
    }
    let centers = geometry.centers();
    let inv = 1.0 / (2.0 * cluster_radius_m * cluster_radius_m);
    let corr = DMatrix::from_fn(n, n, |i, j| {
        let (dx, dy) = (centers[i].0 - centers[j].0, centers[i].1 - centers[j].1);
        (-(dx * dx + dy * dy) * inv).exp()
    });
    let chol = factor_with_jitter(corr)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let field = chol * z;
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    let values = field
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span * 100.0 } else { 50.0 })
        .collect();
    Ok(GroundTruth {
        geometry: *geometry,
        values,
        seed,
    })
}

/// Cholesky factor of a correlation matrix with 1e-8 diagonal jitter, raised
/// by decades when rounding leaves the matrix numerically indefinite.
fn factor_with_jitter(corr: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut jitter = 1e-8;
    loop {
        let mut m = corr.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        match linalg::cholesky_in_place(&mut m) {
            Ok(()) => return Ok(m),
            Err(e) if jitter >= 1e-4 => return Err(e),
            Err(_) => jitter *= 10.0,
        }
    }
}

/// Cells whose centres lie inside the square footprint of half-side
/// `h · tan(fov/2)` centred below the pose, clipped to the grid.
pub fn footprint(pose: &Pose, fov_deg: f64, geometry: &GridGeometry) -> Vec<usize> {
    let half = pose.h * (0.5 * fov_deg).to_radians().tan();
    if !(half > 0.0) {
        return Vec::new();
    }
    let res = geometry.resolution_m;
    let span = |center: f64, count: usize| {
        let lo = ((center - half) / res - 0.5).floor().max(0.0) as usize;
        let hi = (((center + half) / res - 0.5).ceil().max(-1.0) + 1.0) as usize;
        (lo, hi.min(count))
    };
    let (x0, x1) = span(pose.x, geometry.num_x);
    let (y0, y1) = span(pose.y, geometry.num_y);
    let mut cells = Vec::new();
    for iy in y0..y1 {
        let cy = (iy as f64 + 0.5) * res;
        if (cy - pose.y).abs() > half {
            continue;
        }
        for ix in x0..x1 {
            let cx = (ix as f64 + 0.5) * res;
            if (cx - pose.x).abs() <= half {
                cells.push(geometry.index(ix, iy));
            }
        }
    }
    cells
}

/// Simulates one camera frame over `gt` from `pose`.
///
/// Each row's true value is the weighted average of the ground-truth cells it
/// covers, corrupted by zero-mean Gaussian noise of the altitude's variance.
pub fn sample_measurement<R: Rng + ?Sized>(
    gt: &GroundTruth,
    pose: &Pose,
    sm: &SensorModel,
    rng: &mut R,
) -> Result<Measurement> {
    let cells = footprint(pose, sm.fov_deg, &gt.geometry);
    let observation = build_observation(&cells, &gt.geometry, pose.h, sm)?;
    let values = observation
        .rows
        .iter()
        .map(|row| {
            let truth: f64 = row.iter().map(|(c, w)| w * gt.values[c]).sum();
            let noise: f64 = rng.sample(StandardNormal);
            truth + noise * row.noise_var.sqrt()
        })
        .collect();
    Measurement::new(observation, values)
}

/// [`sample_measurement`] with a dedicated seeded generator.
pub fn sample_measurement_seeded(
    gt: &GroundTruth,
    pose: &Pose,
    sm: &SensorModel,
    seed: u64,
) -> Result<Measurement> {
    sample_measurement(gt, pose, sm, &mut ChaCha8Rng::seed_from_u64(seed))
}
