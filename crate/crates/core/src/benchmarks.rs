//! Baseline planners: a fixed-altitude lawnmower sweep and a simplified
//! information-gathering tree (RIG-tree).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fusion::{CovarianceOnlyFusion, Factor, SensorModel};
use crate::grid_map::{GridGeometry, GridMap};
use crate::planner::{frame_at, interesting_cells, plan_measurements, Plan, Planner, PlannerConfig};
use crate::trajectory::{next_trigger_delay, plan_polynomial};
use crate::world::Pose;

/// Sweep geometry: lane end points in flying order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveragePattern {
    pub corners: Vec<Pose>,
    pub length_m: f64,
    pub velocity: f64,
    /// Path time, at most the budget.
    pub duration: f64,
}

/// Boustrophedon lanes along the longer axis, one footprint side apart,
/// starting from the corner nearest `start`. The speed is chosen so that the
/// sweep takes the whole budget, capped at `v_max`.
pub fn coverage_pattern(
    geometry: &GridGeometry,
    altitude_m: f64,
    fov_deg: f64,
    budget_s: f64,
    v_max: f64,
    start: &Pose,
) -> Result<CoveragePattern> {
    let side = 2.0 * altitude_m * (0.5 * fov_deg).to_radians().tan();
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::InvalidPlannerConfig(format!(
            "altitude {altitude_m} m gives no footprint"
        )));
    }
    if !(budget_s > 0.0) {
        return Err(Error::InvalidPlannerConfig("budget must be positive".into()));
    }
    let along_x = geometry.width_m >= geometry.height_m;
    let (long, short) = if along_x {
        (geometry.width_m, geometry.height_m)
    } else {
        (geometry.height_m, geometry.width_m)
    };
    // Tolerate rounding in the footprint side so that 8.66 m covers 10 m.
    let lanes = ((short / side) - 1e-3).ceil().max(1.0) as usize;
    let spacing = short / lanes as f64;
    let flip_long = if along_x { start.x > 0.5 * long } else { start.y > 0.5 * long };
    let flip_short = if along_x { start.y > 0.5 * short } else { start.x > 0.5 * short };

    let mut corners = Vec::with_capacity(2 * lanes);
    for k in 0..lanes {
        let mut across = (k as f64 + 0.5) * spacing;
        if flip_short {
            across = short - across;
        }
        let (mut a, mut b) = (0.0, long);
        if (k % 2 == 1) != flip_long {
            std::mem::swap(&mut a, &mut b);
        }
        for along in [a, b] {
            corners.push(if along_x {
                Pose::new(along, across, altitude_m)
            } else {
                Pose::new(across, along, altitude_m)
            });
        }
    }
    let length_m = lanes as f64 * long + (lanes - 1) as f64 * spacing;
    let needed = length_m / budget_s;
    let velocity = if needed > v_max {
        log::warn!(
            "coverage needs {needed:.2} m/s but the limit is {v_max} m/s; the sweep will be cut short"
        );
        v_max
    } else {
        needed
    };
    Ok(CoveragePattern {
        corners,
        length_m,
        velocity,
        duration: (length_m / velocity).min(budget_s),
    })
}

impl CoveragePattern {
    /// Position after flying `s` metres along the sweep.
    pub fn at_distance(&self, s: f64) -> Pose {
        let mut left = s.max(0.0);
        for w in self.corners.windows(2) {
            let d = w[0].distance(&w[1]);
            if left <= d {
                let f = if d > 0.0 { left / d } else { 0.0 };
                return Pose::new(
                    w[0].x + f * (w[1].x - w[0].x),
                    w[0].y + f * (w[1].y - w[0].y),
                    w[0].h + f * (w[1].h - w[0].h),
                );
            }
            left -= d;
        }
        *self.corners.last().unwrap()
    }
}

/// Measurement poses of a full-coverage sweep: triggers every `1/f` seconds
/// from `t = 0` until the budget (or the end of the path).
pub fn coverage_plan(
    geometry: &GridGeometry,
    altitude_m: f64,
    fov_deg: f64,
    budget_s: f64,
    frequency_hz: f64,
) -> Result<Vec<Pose>> {
    let start = Pose::new(0.0, 0.0, altitude_m);
    let pattern = coverage_pattern(geometry, altitude_m, fov_deg, budget_s, f64::INFINITY, &start)?;
    Ok(sweep_triggers(&pattern, frequency_hz, 0.0))
}

fn sweep_triggers(pattern: &CoveragePattern, frequency_hz: f64, first_s: f64) -> Vec<Pose> {
    (0..)
        .map(|k| first_s + k as f64 / frequency_hz)
        .take_while(|&t| t <= pattern.duration + 1e-9)
        .map(|t| pattern.at_distance(pattern.velocity * t).at(t))
        .collect()
}

/// Flies one lawnmower sweep over the whole budget, then hovers.
#[derive(Debug, Clone)]
pub struct CoveragePlanner {
    pub altitude_m: f64,
    pub budget_s: f64,
    pub v_max: f64,
    pub sm: SensorModel,
    flown: bool,
}

impl CoveragePlanner {
    pub fn new(altitude_m: f64, budget_s: f64, v_max: f64, sm: SensorModel) -> Self {
        Self {
            altitude_m,
            budget_s,
            v_max,
            sm,
            flown: false,
        }
    }
}

impl Planner for CoveragePlanner {
    fn name(&self) -> &str {
        "coverage"
    }

    fn plan(&mut self, map: &GridMap, start: &Pose, elapsed: f64) -> Result<Plan> {
        let remaining = self.budget_s - elapsed;
        if self.flown || remaining <= 0.0 {
            return Ok(Plan {
                waypoints: vec![*start],
                measurements: Vec::new(),
                duration: remaining.max(0.0),
            });
        }
        self.flown = true;
        let pattern = coverage_pattern(&map.geometry, self.altitude_m, self.sm.fov_deg, remaining, self.v_max, start)?;
        let first = next_trigger_delay(elapsed, self.sm.frequency_hz);
        Ok(Plan {
            measurements: sweep_triggers(&pattern, self.sm.frequency_hz, first),
            duration: pattern.duration,
            waypoints: pattern.corners,
        })
    }
}

/// Tree vertex: a measurement site reached from its parent.
struct Vertex {
    pose: Pose,
    parent: Option<usize>,
    depth: usize,
    time: f64,
    gain: f64,
    factor: Option<Factor>,
}

/// Grows an information-gathering tree from `start` and returns the root
/// path to the vertex with the highest accumulated utility per travel time.
///
/// Each sample is steered at most `step_m` from its nearest vertex. Vertices
/// are measurement sites; a branch stops growing once it would exceed the
/// remaining budget or the per-plan measurement cap.
#[allow(clippy::too_many_arguments)]
pub fn rig_tree_plan(
    map: &GridMap,
    start: &Pose,
    step_m: f64,
    samples: usize,
    remaining_s: f64,
    cfg: &PlannerConfig,
    sm: &SensorModel,
    seed: u64,
) -> Result<Vec<Pose>> {
    if !(step_m > 0.0) {
        return Err(Error::InvalidPlannerConfig(format!("RIG step {step_m} m must be positive")));
    }
    let g = &map.geometry;
    let fusion = CovarianceOnlyFusion::all_cells(&map.covariance, interesting_cells(map, cfg.mu_threshold));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = vec![Vertex {
        pose: Pose { t: 0.0, ..*start },
        parent: None,
        depth: 0,
        time: 0.0,
        gain: 0.0,
        factor: None,
    }];

    for _ in 0..samples {
        let target = Pose::new(
            rng.random_range(0.0..=g.width_m),
            rng.random_range(0.0..=g.height_m),
            rng.random_range(cfg.altitude_min_m..=cfg.altitude_max_m),
        );
        let nearest = (0..tree.len())
            .min_by(|&a, &b| tree[a].pose.distance(&target).total_cmp(&tree[b].pose.distance(&target)))
            .unwrap();
        let from = tree[nearest].pose;
        let dist = from.distance(&target);
        if dist <= 0.0 {
            continue;
        }
        let f = (step_m / dist).min(1.0);
        let pose = Pose::new(
            from.x + f * (target.x - from.x),
            from.y + f * (target.y - from.y),
            from.h + f * (target.h - from.h),
        );
        let time = tree[nearest].time + from.distance(&pose) / cfg.dynamics.v_ref;
        let depth = tree[nearest].depth + 1;
        if time > remaining_s || depth > cfg.max_measurements {
            continue;
        }
        let mut chain = Vec::with_capacity(depth);
        let mut v = Some(nearest);
        while let Some(i) = v {
            if let Some(factor) = &tree[i].factor {
                chain.push(factor);
            }
            v = tree[i].parent;
        }
        chain.reverse();
        let (gain, factor) = match frame_at(&pose, g, sm)? {
            Some(obs) if depth < cfg.max_measurements => {
                let (gain, factor) = fusion.gain_and_factor(&chain, &obs)?;
                (gain, Some(factor))
            }
            Some(obs) => (fusion.gain(&chain, &obs)?, None),
            None => (0.0, None),
        };
        tree.push(Vertex {
            pose,
            parent: Some(nearest),
            depth,
            time,
            gain: tree[nearest].gain + gain,
            factor,
        });
    }

    let best = (1..tree.len()).fold(None::<(usize, f64)>, |best, i| {
        let score = tree[i].gain / tree[i].time;
        match best {
            Some((_, s)) if s >= score => best,
            _ => Some((i, score)),
        }
    });
    let mut path = Vec::new();
    let mut v = best.map(|(i, _)| i).or(Some(0));
    while let Some(i) = v {
        path.push(tree[i].pose);
        v = tree[i].parent;
    }
    path.reverse();
    Ok(path)
}

/// Replans with a fresh tree each round and flies the traced path as a
/// polynomial.
#[derive(Debug, Clone)]
pub struct RigTreePlanner {
    pub cfg: PlannerConfig,
    pub sm: SensorModel,
    pub step_m: f64,
    pub samples: usize,
    seed: u64,
    round: u64,
}

impl RigTreePlanner {
    pub fn new(cfg: PlannerConfig, sm: SensorModel, step_m: f64, samples: usize, seed: u64) -> Self {
        Self {
            cfg,
            sm,
            step_m,
            samples,
            seed,
            round: 0,
        }
    }
}

impl Planner for RigTreePlanner {
    fn name(&self) -> &str {
        "rig"
    }

    fn plan(&mut self, map: &GridMap, start: &Pose, elapsed: f64) -> Result<Plan> {
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(self.round);
        self.round += 1;
        let remaining = (self.cfg.budget_s - elapsed).max(0.0);
        let waypoints = rig_tree_plan(map, start, self.step_m, self.samples, remaining, &self.cfg, &self.sm, seed)?;
        let traj = plan_polynomial(&waypoints, &self.cfg.dynamics)?;
        let first = next_trigger_delay(elapsed, self.sm.frequency_hz);
        Ok(Plan {
            measurements: plan_measurements(&traj, &map.geometry, &self.cfg, &self.sm, first),
            duration: traj.total_time(),
            waypoints,
        })
    }
}
