use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{greedy_lattice_plan, plan_measurements, refine_cmaes, PlannerConfig};
use crate::error::{Error, Result};
use crate::fusion::{fuse_in_place, SensorModel};
use crate::grid_map::{build_prior, GridMap, Hyperparameters};
use crate::metrics::{MetricSnapshot, TrialRecord};
use crate::trajectory::{next_trigger_delay, plan_polynomial};
use crate::world::{sample_measurement, GroundTruth, Pose};

/// One replanning round's output.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub waypoints: Vec<Pose>,
    /// Trigger poses; `t` is relative to the start of the plan.
    pub measurements: Vec<Pose>,
    pub duration: f64,
}

impl Plan {
    pub fn end(&self) -> Pose {
        self.waypoints.last().copied().unwrap_or_default()
    }
}

/// Anything that can propose the next plan from the current map.
///
/// The camera fires at mission times `0, 1/f, 2/f, …` regardless of
/// replanning, so a plan's measurement times start at the next tick after
/// `elapsed`.
pub trait Planner {
    fn name(&self) -> &str;

    /// `elapsed` is the mission time already spent.
    fn plan(&mut self, map: &GridMap, start: &Pose, elapsed: f64) -> Result<Plan>;
}

/// Greedy lattice search, optionally followed by CMA-ES refinement.
#[derive(Debug, Clone)]
pub struct TwoStagePlanner {
    pub cfg: PlannerConfig,
    pub sm: SensorModel,
    pub refine: bool,
    seed: u64,
    round: u64,
}

impl TwoStagePlanner {
    pub fn new(cfg: PlannerConfig, sm: SensorModel, refine: bool, seed: u64) -> Self {
        Self {
            cfg,
            sm,
            refine,
            seed,
            round: 0,
        }
    }
}

impl Planner for TwoStagePlanner {
    fn name(&self) -> &str {
        if self.refine {
            "cmaes"
        } else {
            "lattice"
        }
    }

    fn plan(&mut self, map: &GridMap, start: &Pose, elapsed: f64) -> Result<Plan> {
        let first = next_trigger_delay(elapsed, self.sm.frequency_hz);
        let mut waypoints = greedy_lattice_plan(map, start, &self.cfg, &self.sm)?;
        if self.refine {
            let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(self.round);
            waypoints = refine_cmaes(&waypoints, map, &self.cfg, &self.sm, first, seed)?;
        }
        self.round += 1;
        let traj = plan_polynomial(&waypoints, &self.cfg.dynamics)?;
        Ok(Plan {
            measurements: plan_measurements(&traj, &map.geometry, &self.cfg, &self.sm, first),
            duration: traj.total_time(),
            waypoints,
        })
    }
}

/// Flies a budgeted mission over `gt` (values in percent), alternating
/// planning and full execution of each plan.
pub fn run_mission(
    gt: &GroundTruth,
    planner: &mut dyn Planner,
    cfg: &PlannerConfig,
    sm: &SensorModel,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<TrialRecord> {
    let prior = build_prior(&gt.geometry, hp, 50.0)?;
    run_mission_with_prior(gt, &prior, planner, cfg, sm, seed)
}

/// [`run_mission`] starting from an existing prior map (fractions).
pub fn run_mission_with_prior(
    gt: &GroundTruth,
    prior: &GridMap,
    planner: &mut dyn Planner,
    cfg: &PlannerConfig,
    sm: &SensorModel,
    seed: u64,
) -> Result<TrialRecord> {
    if prior.geometry != gt.geometry {
        return Err(Error::InvalidGeometry("prior and ground truth grids differ".into()));
    }
    cfg.validate(&gt.geometry)?;
    sm.validate()?;
    let truth = gt.scaled(0.01);
    let mut map = prior.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snapshots = vec![MetricSnapshot::capture(0.0, &map, &truth)];
    let mut planning_seconds = 0.0;
    let mut t = 0.0;
    let mut pose = cfg.start;
    // A plan ending on a tick hands that same tick to the next plan.
    let mut last_frame = f64::NEG_INFINITY;

    while t < cfg.budget_s {
        let clock = Instant::now();
        let plan = planner.plan(&map, &pose, t)?;
        let spent = clock.elapsed().as_secs_f64();
        planning_seconds += spent;
        if cfg.charge_planning_time {
            t += spent;
        }
        let mut frames: Vec<(f64, Pose)> = Vec::new();
        for m in &plan.measurements {
            let tm = t + m.t;
            if tm > cfg.budget_s {
                break;
            }
            if tm > last_frame + 1e-9 {
                frames.push((tm, *m));
            }
        }
        t += plan.duration;
        if frames.is_empty() {
            // Plan finished before the camera fired: hover at its end until the next tick.
            let mut tm = t + next_trigger_delay(t, sm.frequency_hz);
            if tm <= last_frame + 1e-9 {
                tm += 1.0 / sm.frequency_hz;
            }
            if tm <= cfg.budget_s {
                frames.push((tm, plan.end()));
            }
            t = t.max(tm);
        }
        for (tm, m) in frames {
            last_frame = tm;
            match sample_measurement(&truth, &m, sm, &mut rng) {
                Ok(meas) => {
                    fuse_in_place(&mut map, &meas)?;
                    snapshots.push(MetricSnapshot::capture(tm, &map, &truth));
                }
                Err(Error::EmptyFootprint) => {}
                Err(e) => return Err(e),
            }
        }
        pose = Pose { t: 0.0, ..plan.end() };
    }
    Ok(TrialRecord {
        trial: 0,
        seed,
        planner: planner.name().to_string(),
        snapshots,
        planning_seconds,
    })
}
