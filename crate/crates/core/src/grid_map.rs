//! Discretised Gaussian-process terrain belief.
//!
//! The map is a mean vector and a dense covariance over a uniform grid of
//! cells. Cells are linearised row-major: `index = iy * num_x + ix`, with cell
//! `(ix, iy)` centred at `((ix + 0.5) * res, (iy + 0.5) * res)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Uniform 2-D cell grid anchored at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width_m: f64,
    pub height_m: f64,
    pub resolution_m: f64,
    pub num_x: usize,
    pub num_y: usize,
}

impl GridGeometry {
    pub fn new(width_m: f64, height_m: f64, resolution_m: f64) -> Result<Self> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(width_m) || !finite_pos(height_m) || !finite_pos(resolution_m) {
            return Err(Error::InvalidGeometry(format!(
                "extent and resolution must be positive (width {width_m}, height {height_m}, resolution {resolution_m})"
            )));
        }
        let num_x = (width_m / resolution_m).round() as usize;
        let num_y = (height_m / resolution_m).round() as usize;
        if num_x == 0 || num_y == 0 {
            return Err(Error::InvalidGeometry(format!(
                "resolution {resolution_m} m leaves no cells in a {width_m} x {height_m} m area"
            )));
        }
        Ok(Self {
            width_m,
            height_m,
            resolution_m,
            num_x,
            num_y,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.num_x * self.num_y
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.num_x && iy < self.num_y);
        iy * self.num_x + ix
    }

    /// Inverse of [`GridGeometry::index`].
    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index % self.num_x, index / self.num_x)
    }

    pub fn center(&self, index: usize) -> (f64, f64) {
        let (ix, iy) = self.cell(index);
        (
            (ix as f64 + 0.5) * self.resolution_m,
            (iy as f64 + 0.5) * self.resolution_m,
        )
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.num_cells()).map(|i| self.center(i)).collect()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width_m).contains(&x) && (0.0..=self.height_m).contains(&y)
    }
}

/// Fixed GP hyperparameters `{σ_n², σ_f², l}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub sigma_n_sq: f64,
    pub sigma_f_sq: f64,
    pub lengthscale_m: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            sigma_n_sq: 1.42,
            sigma_f_sq: 1.82,
            lengthscale_m: 3.67,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_n_sq", self.sigma_n_sq),
            ("sigma_f_sq", self.sigma_f_sq),
            ("lengthscale_m", self.lengthscale_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidHyperparameters(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Isotropic Matérn 3/2 covariance at distance `d`.
pub fn matern32(d: f64, hp: &Hyperparameters) -> f64 {
    let r = 3f64.sqrt() * d.abs() / hp.lengthscale_m;
    hp.sigma_f_sq * (1.0 + r) * (-r).exp()
}

/// Kernel matrix `K(X, X)` over all grid cell centres.
pub fn kernel_matrix(geometry: &GridGeometry, hp: &Hyperparameters) -> DMatrix<f64> {
    let centers = geometry.centers();
    let n = centers.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = hp.sigma_f_sq;
        for i in (j + 1)..n {
            let (dx, dy) = (centers[i].0 - centers[j].0, centers[i].1 - centers[j].1);
            let v = matern32(dx.hypot(dy), hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Mean and covariance of the terrain belief.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub geometry: GridGeometry,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GridMap {
    /// Wraps an explicit mean/covariance pair after checking dimensions.
    pub fn from_parts(
        geometry: GridGeometry,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let n = geometry.num_cells();
        if mean.len() != n || covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::InvalidGeometry(format!(
                "expected {n} cells, got mean {} and covariance {}x{}",
                mean.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        Ok(Self {
            geometry,
            mean,
            covariance,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.geometry.num_cells()
    }

    pub fn variances(&self) -> DVector<f64> {
        self.covariance.diagonal()
    }

    pub fn trace(&self) -> f64 {
        trace(self)
    }

    /// Checks the symmetric-PSD and finiteness invariants.
    ///
    /// The eigen-decomposition is O(n³); intended for tests and diagnostics.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err("non-finite mean".into());
        }
        if self.covariance.diagonal().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err("negative or non-finite variance".into());
        }
        let scale = self.covariance.abs().max().max(f64::MIN_POSITIVE);
        let asym = (&self.covariance - self.covariance.transpose()).abs().max();
        if asym > 1e-9 * scale {
            return Err(format!("asymmetry {asym:e} exceeds 1e-9 relative"));
        }
        let eig = self.covariance.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if lo < -1e-8 * hi.abs().max(f64::MIN_POSITIVE) {
            return Err(format!("smallest eigenvalue {lo:e} vs largest {hi:e}"));
        }
        Ok(())
    }
}

/// Builds the correlated prior: a uniform mean (given in percent, stored as a fraction) and the GP posterior covariance
/// `K − K (K + σ_n² I)⁻¹ K` with training and prediction on the same grid.
pub fn build_prior(geometry: &GridGeometry, hp: &Hyperparameters, prior_mean: f64) -> Result<GridMap> {
    hp.validate()?;
    if !(0.0..=100.0).contains(&prior_mean) {
        return Err(Error::InvalidHyperparameters(format!(
            "prior mean {prior_mean} outside [0, 100]"
        )));
    }
    let n = geometry.num_cells();
    let k = kernel_matrix(geometry, hp);
    let mut chol = k.clone();
    for i in 0..n {
        chol[(i, i)] += hp.sigma_n_sq;
    }
    linalg::cholesky_in_place(&mut chol)?;
    // P = K - Bᵀ B with B = L⁻¹ K.
    let mut b = k.clone();
    linalg::solve_lower_in_place(&chol, &mut b);
    let bt = b.transpose();
    let mut p = k;
    p.gemm(-1.0, &bt, &b, 1.0);
    linalg::symmetrize(&mut p);
    Ok(GridMap {
        geometry: *geometry,
        mean: DVector::from_element(n, 0.01 * prior_mean),
        covariance: p,
    })
}

/// Sum of the covariance diagonal.
pub fn trace(map: &GridMap) -> f64 {
    map.covariance.diagonal().sum()
}
