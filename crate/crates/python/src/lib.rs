//! Python bindings for the terrain mapping simulator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::terrain_ipp as core;
use core::experiment::{self, RunConfig};
use core::fusion::{self, SensorModel};
use core::grid_map::{self, GridGeometry, Hyperparameters};
use core::trajectory::{self, Dynamics};
use core::world::{self, GroundTruth, Pose};

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(_) | core::Error::Csv(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn pose(p: (f64, f64, f64)) -> Pose {
    Pose::new(p.0, p.1, p.2)
}

#[pyclass(name = "SensorModel", module = "terrain_ipp", from_py_object)]
#[derive(Clone)]
struct PySensorModel {
    inner: SensorModel,
}

#[pymethods]
impl PySensorModel {
    #[new]
    #[pyo3(signature = (a=0.2, b=0.05, fov_deg=60.0, scale_altitude_m=10.0, scale_factor=0.5, frequency_hz=0.15))]
    fn new(a: f64, b: f64, fov_deg: f64, scale_altitude_m: f64, scale_factor: f64, frequency_hz: f64) -> PyResult<Self> {
        let inner = SensorModel {
            a,
            b,
            fov_deg,
            scale_altitude_m,
            scale_factor,
            frequency_hz,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn noise_variance(&self, altitude_m: f64) -> f64 {
        self.inner.noise_variance(altitude_m)
    }

    /// Side length in metres of the square ground footprint.
    fn footprint_side(&self, altitude_m: f64) -> f64 {
        2.0 * self.inner.footprint_half_side(altitude_m)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A synthetic terrain field, values in percent.
#[pyclass(name = "Field", module = "terrain_ipp", from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: GroundTruth,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    #[pyo3(signature = (width_m, height_m, resolution_m, cluster_radius_m, seed))]
    fn generate(width_m: f64, height_m: f64, resolution_m: f64, cluster_radius_m: f64, seed: u64) -> PyResult<Self> {
        let g = GridGeometry::new(width_m, height_m, resolution_m).map_err(err)?;
        let inner = world::generate_field(&g, cluster_radius_m, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.geometry.num_y, self.inner.geometry.num_x)
    }

    /// Row-major cell values.
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }
}

/// Gaussian belief over the grid, values as fractions.
#[pyclass(name = "GridMap", module = "terrain_ipp")]
struct PyGridMap {
    inner: grid_map::GridMap,
}

#[pymethods]
impl PyGridMap {
    /// Prior with a Matérn 3/2 covariance and a uniform mean in percent.
    #[staticmethod]
    #[pyo3(signature = (width_m, height_m, resolution_m, prior_mean_percent=50.0, sigma_n_sq=1.42, sigma_f_sq=1.82, lengthscale_m=3.67))]
    fn prior(
        width_m: f64,
        height_m: f64,
        resolution_m: f64,
        prior_mean_percent: f64,
        sigma_n_sq: f64,
        sigma_f_sq: f64,
        lengthscale_m: f64,
    ) -> PyResult<Self> {
        let g = GridGeometry::new(width_m, height_m, resolution_m).map_err(err)?;
        let hp = Hyperparameters {
            sigma_n_sq,
            sigma_f_sq,
            lengthscale_m,
        };
        let inner = grid_map::build_prior(&g, &hp, prior_mean_percent).map_err(err)?;
        Ok(Self { inner })
    }

    fn num_cells(&self) -> usize {
        self.inner.num_cells()
    }

    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean.iter().copied().collect()
    }

    fn variances(&self) -> Vec<f64> {
        self.inner.variances().iter().copied().collect()
    }

    /// Cells seen from `pose` = (x, y, h).
    fn footprint(&self, pose_xyh: (f64, f64, f64), sensor: &PySensorModel) -> Vec<usize> {
        world::footprint(&pose(pose_xyh), sensor.inner.fov_deg, &self.inner.geometry)
    }

    /// Simulates a frame of `field` from `pose` and fuses it. Returns the
    /// number of measurement rows.
    fn measure(&mut self, field: &PyField, pose_xyh: (f64, f64, f64), sensor: &PySensorModel, seed: u64) -> PyResult<usize> {
        let truth = field.inner.scaled(0.01);
        let m = world::sample_measurement_seeded(&truth, &pose(pose_xyh), &sensor.inner, seed).map_err(err)?;
        fusion::fuse_in_place(&mut self.inner, &m).map_err(err)?;
        Ok(m.values.len())
    }

    fn rmse(&self, field: &PyField) -> f64 {
        core::metrics::rmse(&self.inner, &field.inner.scaled(0.01))
    }
}

/// Minimum-snap polynomial through 3-D waypoints.
#[pyclass(name = "Trajectory", module = "terrain_ipp")]
struct PyTrajectory {
    inner: trajectory::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[new]
    #[pyo3(signature = (waypoints, v_ref=5.0, a_ref=2.0, order=12))]
    fn new(waypoints: Vec<(f64, f64, f64)>, v_ref: f64, a_ref: f64, order: usize) -> PyResult<Self> {
        let wps: Vec<Pose> = waypoints.into_iter().map(pose).collect();
        let dynamics = Dynamics { v_ref, a_ref, order };
        let inner = trajectory::plan_polynomial(&wps, &dynamics).map_err(err)?;
        Ok(Self { inner })
    }

    fn total_time(&self) -> f64 {
        self.inner.total_time()
    }

    fn position(&self, t: f64) -> [f64; 3] {
        self.inner.position(t)
    }

    fn derivative(&self, t: f64, order: usize) -> [f64; 3] {
        self.inner.derivative(t, order)
    }

    /// Camera poses at `frequency_hz` starting at t = 0, as (t, x, y, h).
    #[pyo3(signature = (frequency_hz, max_poses=usize::MAX))]
    fn measurement_poses(&self, frequency_hz: f64, max_poses: usize) -> Vec<(f64, f64, f64, f64)> {
        trajectory::measurement_poses(&self.inner, frequency_hz, max_poses)
            .into_iter()
            .map(|p| (p.t, p.x, p.y, p.h))
            .collect()
    }
}

#[pyfunction]
fn segment_time(length_m: f64, v_ref: f64, a_ref: f64) -> f64 {
    trajectory::segment_time(length_m, v_ref, a_ref)
}

/// Minimises `objective` over a box with CMA-ES. Returns (best, cost, evaluations).
#[pyfunction]
#[pyo3(signature = (objective, x0, sigma, lower, upper, max_evaluations=5000, seed=0, population=None))]
#[allow(clippy::too_many_arguments)]
fn cmaes_minimize(
    objective: Bound<'_, PyAny>,
    x0: Vec<f64>,
    sigma: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    max_evaluations: usize,
    seed: u64,
    population: Option<usize>,
) -> PyResult<(Vec<f64>, f64, usize)> {
    let cfg = core::cmaes::CmaesConfig {
        initial_mean: x0,
        initial_step_sizes: sigma,
        population,
        max_evaluations,
        lower,
        upper,
        seed,
    };
    let mut failure: Option<PyErr> = None;
    let result = core::cmaes::minimize(
        |x| {
            if failure.is_some() {
                return f64::INFINITY;
            }
            match objective.call1((x.to_vec(),)).and_then(|v| v.extract::<f64>()) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    f64::INFINITY
                }
            }
        },
        &cfg,
    )
    .map_err(err)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((result.best, result.best_cost, result.evaluations))
}

/// Experiment configuration loaded from TOML.
#[pyclass(name = "RunConfig", module = "terrain_ipp")]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(text) => RunConfig::from_toml(text).map_err(err)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(&path).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Violations as (key, message) pairs; empty when valid.
    fn violations(&self) -> Vec<(String, String)> {
        self.inner.validate().violations
    }

    fn report(&self) -> String {
        self.inner.validate().to_string()
    }

    /// Runs every trial and returns the summary rows. The GIL is released
    /// while the missions fly.
    #[pyo3(signature = (jobs=1))]
    fn run<'py>(&self, py: Python<'py>, jobs: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let cfg = self.inner.clone();
        let out = py.detach(move || experiment::run(&cfg, jobs)).map_err(err)?;
        out.summary
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("planner", &r.planner)?;
                d.set_item("trials", r.trials)?;
                d.set_item("trace", r.trace)?;
                d.set_item("rmse", r.rmse)?;
                d.set_item("wrmse", r.wrmse)?;
                d.set_item("mll", r.mll)?;
                d.set_item("wmll", r.wmll)?;
                Ok(d)
            })
            .collect()
    }
}

#[pymodule]
fn terrain_ipp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySensorModel>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyGridMap>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(segment_time, m)?)?;
    m.add_function(wrap_pyfunction!(cmaes_minimize, m)?)?;
    Ok(())
}
