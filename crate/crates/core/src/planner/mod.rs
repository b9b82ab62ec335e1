//! Two-stage fixed-horizon planner: greedy selection over a 3-D lattice of
//! viewpoints, then CMA-ES refinement of the resulting polynomial.
//!
//! Map values are fractions of full scale; thresholds are given in percent.

mod mission;

pub use mission::{run_mission, run_mission_with_prior, Plan, Planner, TwoStagePlanner};

use crate::cmaes::{self, CmaesConfig};
use crate::error::{Error, Result};
use crate::fusion::{build_observation, CovarianceOnlyFusion, Factor, Observation, SensorModel};
use crate::grid_map::{GridGeometry, GridMap};
use crate::trajectory::{measurement_poses_from, plan_polynomial, Dynamics, Trajectory};
use crate::world::{footprint, Pose};

/// Candidate viewpoints for the greedy stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub points: Vec<Pose>,
}

impl Lattice {
    /// 30 points in four tiers: n×n grids for n = 4, 3, 2, 1, each at the
    /// altitude where the footprint side is the field span over n, so every
    /// tier tiles the field exactly.
    pub fn default_for(geometry: &GridGeometry, fov_deg: f64) -> Self {
        let span = geometry.width_m.max(geometry.height_m);
        let tan = (0.5 * fov_deg).to_radians().tan();
        let mut points = Vec::with_capacity(30);
        for n in [4usize, 3, 2, 1] {
            let h = span / n as f64 / (2.0 * tan);
            for j in 0..n {
                for i in 0..n {
                    let x = (i as f64 + 0.5) * geometry.width_m / n as f64;
                    let y = (j as f64 + 0.5) * geometry.height_m / n as f64;
                    points.push(Pose::new(x, y, h));
                }
            }
        }
        Self { points }
    }

    pub fn validate(&self, geometry: &GridGeometry, altitude: (f64, f64)) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidPlannerConfig("lattice is empty".into()));
        }
        for p in &self.points {
            if !geometry.contains(p.x, p.y) || p.h < altitude.0 || p.h > altitude.1 {
                return Err(Error::InvalidPlannerConfig(format!(
                    "lattice point ({}, {}, {}) outside the workspace",
                    p.x, p.y, p.h
                )));
            }
        }
        Ok(())
    }
}

/// Refinement settings; the bounds and mean come from the workspace and the
/// greedy solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmaesSettings {
    pub step_planar_m: f64,
    pub step_altitude_m: f64,
    pub max_evaluations: usize,
    pub population: Option<usize>,
}

impl Default for CmaesSettings {
    fn default() -> Self {
        Self {
            step_planar_m: 3.0,
            step_altitude_m: 4.0,
            max_evaluations: 200,
            population: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub budget_s: f64,
    pub num_waypoints: usize,
    /// Cells with a mean below this percentage are ignored by the utility.
    pub mu_threshold: f64,
    pub lattice: Lattice,
    pub max_measurements: usize,
    pub cmaes: CmaesSettings,
    pub altitude_min_m: f64,
    pub altitude_max_m: f64,
    pub dynamics: Dynamics,
    pub start: Pose,
    /// Charge wall-clock planning time against the budget.
    pub charge_planning_time: bool,
}

impl PlannerConfig {
    pub fn default_for(geometry: &GridGeometry, sm: &SensorModel) -> Self {
        Self {
            budget_s: 200.0,
            num_waypoints: 5,
            mu_threshold: 40.0,
            lattice: Lattice::default_for(geometry, sm.fov_deg),
            max_measurements: 10,
            cmaes: CmaesSettings::default(),
            altitude_min_m: 1.0,
            altitude_max_m: 26.0,
            dynamics: Dynamics::default(),
            start: Pose::new(7.5, 7.5, 8.66),
            charge_planning_time: false,
        }
    }

    pub fn validate(&self, geometry: &GridGeometry) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlannerConfig(m));
        if !(self.budget_s > 0.0 && self.budget_s.is_finite()) {
            return bad(format!("budget {} s must be positive", self.budget_s));
        }
        if self.num_waypoints < 2 {
            return bad(format!("{} waypoints; at least 2 are needed", self.num_waypoints));
        }
        if !(0.0..=100.0).contains(&self.mu_threshold) {
            return bad(format!("threshold {}% outside [0, 100]", self.mu_threshold));
        }
        if self.max_measurements == 0 {
            return bad("measurement cap must be at least 1".into());
        }
        if !(self.altitude_min_m >= 0.0 && self.altitude_min_m < self.altitude_max_m) {
            return bad(format!(
                "altitude range [{}, {}] is empty",
                self.altitude_min_m, self.altitude_max_m
            ));
        }
        if !(self.cmaes.step_planar_m > 0.0 && self.cmaes.step_altitude_m > 0.0) {
            return bad("CMA-ES step sizes must be positive".into());
        }
        let s = &self.start;
        if !geometry.contains(s.x, s.y) || s.h < 0.0 {
            return bad(format!("start ({}, {}, {}) outside the workspace", s.x, s.y, s.h));
        }
        self.dynamics.validate()?;
        self.lattice.validate(geometry, (self.altitude_min_m, self.altitude_max_m))
    }
}

/// Cells counted by the utility: all of them when the threshold is zero,
/// otherwise those whose mean reaches it.
pub fn interesting_cells(map: &GridMap, mu_threshold: f64) -> Vec<usize> {
    if mu_threshold <= 0.0 {
        return (0..map.num_cells()).collect();
    }
    let thr = mu_threshold / 100.0;
    (0..map.num_cells()).filter(|&i| map.mean[i] >= thr).collect()
}

/// Observation structure of a frame taken at `pose`, or `None` if the
/// footprint holds no cell centre.
pub fn frame_at(pose: &Pose, geometry: &GridGeometry, sm: &SensorModel) -> Result<Option<Observation>> {
    let cells = footprint(pose, sm.fov_deg, geometry);
    if cells.is_empty() {
        return Ok(None);
    }
    build_observation(&cells, geometry, pose.h, sm).map(Some)
}

/// Expected reduction of the masked variance sum after fusing frames at
/// `poses` in order. The map is not modified.
pub fn utility(map: &GridMap, poses: &[Pose], sm: &SensorModel, mu_threshold: f64) -> Result<f64> {
    let scored = interesting_cells(map, mu_threshold);
    if poses.is_empty() || scored.is_empty() {
        return Ok(0.0);
    }
    let mut frames = Vec::with_capacity(poses.len());
    for p in poses {
        if let Some(obs) = frame_at(p, &map.geometry, sm)? {
            frames.push(obs);
        }
    }
    let touched = frames.iter().flat_map(|o| o.rows.iter().flat_map(|r| r.cells.iter().copied()));
    let fusion = CovarianceOnlyFusion::new(&map.covariance, touched.collect::<Vec<_>>(), scored);
    fusion.sequence_gain(&frames)
}

/// Greedy stage: `N − 1` lattice points appended to `start`, each maximising
/// utility per constant-velocity travel time from the previous waypoint
/// given the simulated fusion of the earlier picks. Ties go to the lowest
/// lattice index.
pub fn greedy_lattice_plan(map: &GridMap, start: &Pose, cfg: &PlannerConfig, sm: &SensorModel) -> Result<Vec<Pose>> {
    let g = &map.geometry;
    let frames: Vec<Option<Observation>> = cfg
        .lattice
        .points
        .iter()
        .map(|p| frame_at(p, g, sm))
        .collect::<Result<_>>()?;
    let touched: Vec<usize> = frames
        .iter()
        .flatten()
        .flat_map(|o| o.rows.iter().flat_map(|r| r.cells.iter().copied()))
        .collect();
    let fusion = CovarianceOnlyFusion::new(&map.covariance, touched, interesting_cells(map, cfg.mu_threshold));
    greedy_with(&fusion, &frames, start, cfg)
}

fn greedy_with(
    fusion: &CovarianceOnlyFusion,
    frames: &[Option<Observation>],
    start: &Pose,
    cfg: &PlannerConfig,
) -> Result<Vec<Pose>> {
    let lattice = &cfg.lattice.points;
    let mut waypoints = vec![Pose { t: 0.0, ..*start }];
    let mut chain: Vec<Factor> = Vec::new();
    while waypoints.len() < cfg.num_waypoints {
        let last = *waypoints.last().unwrap();
        let refs: Vec<&Factor> = chain.iter().collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in lattice.iter().enumerate() {
            let dist = last.distance(p);
            if dist <= 0.0 {
                continue;
            }
            let gain = match &frames[i] {
                Some(obs) => fusion.gain(&refs, obs)?,
                None => 0.0,
            };
            let rate = gain / (dist / cfg.dynamics.v_ref);
            if best.is_none_or(|(_, r)| rate > r) {
                best = Some((i, rate));
            }
        }
        let Some((i, _)) = best else {
            // Single-point lattice at the current pose.
            waypoints.push(lattice[0]);
            continue;
        };
        if let Some(obs) = &frames[i] {
            let (_, factor) = fusion.gain_and_factor(&refs, obs)?;
            chain.push(factor);
        }
        waypoints.push(lattice[i]);
    }
    Ok(waypoints)
}

/// Trigger poses along `traj` starting `first_s` seconds in, kept inside the
/// field and above ground.
pub fn plan_measurements(
    traj: &Trajectory,
    geometry: &GridGeometry,
    cfg: &PlannerConfig,
    sm: &SensorModel,
    first_s: f64,
) -> Vec<Pose> {
    measurement_poses_from(traj, sm.frequency_hz, first_s, cfg.max_measurements)
        .into_iter()
        .map(|p| Pose {
            x: p.x.clamp(0.0, geometry.width_m),
            y: p.y.clamp(0.0, geometry.height_m),
            h: p.h.max(0.0),
            t: p.t,
        })
        .collect()
}

/// Evaluates waypoint sequences against one map snapshot.
struct RateObjective<'a> {
    fusion: CovarianceOnlyFusion<'a>,
    geometry: GridGeometry,
    cfg: &'a PlannerConfig,
    sm: &'a SensorModel,
    first_s: f64,
}

impl<'a> RateObjective<'a> {
    fn new(map: &'a GridMap, cfg: &'a PlannerConfig, sm: &'a SensorModel, first_s: f64) -> Self {
        Self {
            fusion: CovarianceOnlyFusion::all_cells(&map.covariance, interesting_cells(map, cfg.mu_threshold)),
            geometry: map.geometry,
            cfg,
            sm,
            first_s,
        }
    }

    /// Utility per second of the polynomial through `waypoints`.
    fn rate(&self, waypoints: &[Pose]) -> Result<f64> {
        let traj = plan_polynomial(waypoints, &self.cfg.dynamics)?;
        let time = traj.total_time();
        if time <= 0.0 {
            return Ok(0.0);
        }
        let mut frames = Vec::new();
        for p in plan_measurements(&traj, &self.geometry, self.cfg, self.sm, self.first_s) {
            if let Some(obs) = frame_at(&p, &self.geometry, self.sm)? {
                frames.push(obs);
            }
        }
        Ok(self.fusion.sequence_gain(&frames)? / time)
    }
}

/// Information rate (utility per second of travel) of the polynomial plan
/// through `waypoints`, whose first camera trigger comes `first_s` seconds
/// after it starts.
pub fn plan_rate(waypoints: &[Pose], map: &GridMap, cfg: &PlannerConfig, sm: &SensorModel, first_s: f64) -> Result<f64> {
    RateObjective::new(map, cfg, sm, first_s).rate(waypoints)
}

/// Refines all waypoints but the first with CMA-ES on the information rate
/// (see [`plan_rate`]) of the resulting polynomial. Returns whichever of `initial` and the
/// optimised sequence scores higher; optimiser failures fall back to
/// `initial`.
pub fn refine_cmaes(
    initial: &[Pose],
    map: &GridMap,
    cfg: &PlannerConfig,
    sm: &SensorModel,
    first_s: f64,
    seed: u64,
) -> Result<Vec<Pose>> {
    if initial.len() < 2 {
        return Ok(initial.to_vec());
    }
    let objective = RateObjective::new(map, cfg, sm, first_s);
    let base_rate = objective.rate(initial)?;
    let g = &map.geometry;
    let start = initial[0];
    let free = &initial[1..];
    let n = 3 * free.len();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    let mut mean = Vec::with_capacity(n);
    for p in free {
        lower.extend([0.0, 0.0, cfg.altitude_min_m]);
        upper.extend([g.width_m, g.height_m, cfg.altitude_max_m]);
        steps.extend([cfg.cmaes.step_planar_m, cfg.cmaes.step_planar_m, cfg.cmaes.step_altitude_m]);
        mean.extend([p.x, p.y, p.h]);
    }
    let decode = |v: &[f64]| -> Vec<Pose> {
        std::iter::once(start)
            .chain(v.chunks(3).map(|c| Pose::new(c[0], c[1], c[2])))
            .collect()
    };
    let config = CmaesConfig {
        initial_mean: mean,
        initial_step_sizes: steps,
        population: cfg.cmaes.population,
        max_evaluations: cfg.cmaes.max_evaluations,
        lower,
        upper,
        seed,
    };
    let result = cmaes::minimize(
        |v| match objective.rate(&decode(v)) {
            Ok(r) => -r,
            Err(_) => f64::INFINITY,
        },
        &config,
    );
    match result {
        Ok(r) if -r.best_cost > base_rate => Ok(decode(&r.best)),
        Ok(_) => Ok(initial.to_vec()),
        Err(e) => {
            log::warn!("refinement skipped: {e}");
            Ok(initial.to_vec())
        }
    }
}

#[cfg(test)]
mod tests;
