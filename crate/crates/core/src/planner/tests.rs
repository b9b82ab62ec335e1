use super::*;
use crate::fusion::{fuse_in_place, Measurement};
use crate::grid_map::{build_prior, Hyperparameters};
use crate::trajectory::next_trigger_delay;
use nalgebra::{DMatrix, DVector};

fn geometry(side: f64) -> GridGeometry {
    GridGeometry::new(side, side, 0.75).unwrap()
}

fn prior(side: f64) -> GridMap {
    build_prior(&geometry(side), &Hyperparameters::default(), 50.0).unwrap()
}

/// Dense oracle: masked variance reduction after fusing every pose's frame
/// with the full Kalman update.
fn dense_reduction(map: &GridMap, poses: &[Pose], sm: &SensorModel, mu_threshold: f64) -> f64 {
    let scored = interesting_cells(map, mu_threshold);
    let mut post = map.clone();
    for p in poses {
        if let Some(obs) = frame_at(p, &map.geometry, sm).unwrap() {
            let values = vec![0.0; obs.len()];
            fuse_in_place(&mut post, &Measurement::new(obs, values).unwrap()).unwrap();
        }
    }
    scored.iter().map(|&c| map.covariance[(c, c)] - post.covariance[(c, c)]).sum()
}

fn config(g: &GridGeometry) -> PlannerConfig {
    PlannerConfig::default_for(g, &SensorModel::default())
}

#[test]
fn default_lattice() {
    let g = geometry(30.0);
    let lattice = Lattice::default_for(&g, 60.0);
    assert_eq!(lattice.points.len(), 30);
    let mut tiers: Vec<f64> = lattice.points.iter().map(|p| (p.h * 100.0).round() / 100.0).collect();
    tiers.dedup();
    assert_eq!(tiers, vec![6.5, 8.66, 12.99, 25.98]);
    lattice.validate(&g, (1.0, 26.0)).unwrap();
    assert!(Lattice { points: vec![] }.validate(&g, (1.0, 26.0)).is_err());
    config(&g).validate(&g).unwrap();
}

#[test]
fn config_validation() {
    let g = geometry(30.0);
    let ok = config(&g);
    let mut c = ok.clone();
    c.mu_threshold = 150.0;
    assert!(c.validate(&g).is_err());
    let mut c = ok.clone();
    c.num_waypoints = 1;
    assert!(c.validate(&g).is_err());
    let mut c = ok.clone();
    c.budget_s = 0.0;
    assert!(c.validate(&g).is_err());
    let mut c = ok;
    c.altitude_max_m = 20.0;
    assert!(c.validate(&g).is_err(), "lattice top tier is above 20 m");
}

#[test]
fn utility_of_nothing_is_zero() {
    let map = prior(6.0);
    assert_eq!(utility(&map, &[], &SensorModel::default(), 0.0).unwrap(), 0.0);
}

#[test]
fn one_cell_utility_is_scalar_kalman() {
    let g = GridGeometry::new(0.75, 0.75, 0.75).unwrap();
    let p = 0.8;
    let map = GridMap::from_parts(g, DVector::from_element(1, 0.5), DMatrix::from_element(1, 1, p)).unwrap();
    let sm = SensorModel::default();
    let pose = Pose::new(0.375, 0.375, 5.0);
    let r = sm.noise_variance(5.0);
    let u = utility(&map, &[pose], &sm, 0.0).unwrap();
    assert!((u - p * p / (p + r)).abs() < 1e-15);
}

#[test]
fn masked_out_map_has_no_utility() {
    let mut map = prior(6.0);
    map.mean.fill(0.3);
    let poses = [Pose::new(3.0, 3.0, 5.0)];
    assert_eq!(utility(&map, &poses, &SensorModel::default(), 40.0).unwrap(), 0.0);
    assert!(utility(&map, &poses, &SensorModel::default(), 0.0).unwrap() > 0.0);
}

#[test]
fn utility_matches_dense_update() {
    let mut map = prior(12.0);
    for i in 0..map.num_cells() {
        map.mean[i] = 0.2 + 0.5 * ((i * 7919) % 97) as f64 / 97.0;
    }
    let before = map.clone();
    let sm = SensorModel::default();
    let poses = [
        Pose::new(3.0, 4.0, 4.0),
        Pose::new(8.0, 8.0, 14.0),
        Pose::new(6.0, 2.0, 2.5),
        Pose::new(11.9, 0.1, 9.0),
    ];
    for thr in [0.0, 40.0, 55.0] {
        let fast = utility(&map, &poses, &sm, thr).unwrap();
        let dense = dense_reduction(&map, &poses, &sm, thr);
        assert!((fast - dense).abs() <= 1e-9 * dense, "threshold {thr}: {fast} vs {dense}");
        assert!(fast >= 0.0);
    }
    assert_eq!(map, before);
    let unmasked = before.trace() - {
        let mut post = before.clone();
        for p in &poses {
            let obs = frame_at(p, &map.geometry, &sm).unwrap().unwrap();
            let z = vec![0.0; obs.len()];
            fuse_in_place(&mut post, &Measurement::new(obs, z).unwrap()).unwrap();
        }
        post.trace()
    };
    assert!((utility(&map, &poses, &sm, 0.0).unwrap() - unmasked).abs() <= 1e-9 * unmasked);
}

#[test]
fn greedy_first_pick_matches_brute_force() {
    let map = prior(30.0);
    let sm = SensorModel::default();
    let mut cfg = config(&map.geometry);
    cfg.mu_threshold = 0.0;
    let start = cfg.start;
    let plan = greedy_lattice_plan(&map, &start, &cfg, &sm).unwrap();
    assert_eq!(plan.len(), cfg.num_waypoints);
    assert_eq!(plan[0], start);

    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, p) in cfg.lattice.points.iter().enumerate() {
        let rate = dense_reduction(&map, &[*p], &sm, 0.0) / (start.distance(p) / cfg.dynamics.v_ref);
        if rate > best.1 {
            best = (i, rate);
        }
    }
    assert_eq!(plan[1], cfg.lattice.points[best.0]);
    assert_ne!(plan[2], plan[1]);
}

#[test]
fn saturated_map_still_returns_n_waypoints() {
    let g = geometry(15.0);
    let n = g.num_cells();
    let map = GridMap::from_parts(g, DVector::from_element(n, 0.5), DMatrix::identity(n, n) * 1e-14).unwrap();
    let sm = SensorModel::default();
    let mut cfg = config(&g);
    cfg.lattice = Lattice::default_for(&g, sm.fov_deg);
    cfg.start = Pose::new(5.0, 5.0, 5.0);
    let plan = greedy_lattice_plan(&map, &cfg.start, &cfg, &sm).unwrap();
    assert_eq!(plan.len(), 5);
    assert!(utility(&map, &plan, &sm, 0.0).unwrap() < 1e-12);
}

#[test]
fn greedy_is_invariant_to_lattice_order() {
    let mut map = prior(15.0);
    let sm = SensorModel::default();
    // Break the prior's symmetry with one observed frame.
    let obs = frame_at(&Pose::new(4.0, 10.0, 3.0), &map.geometry, &sm).unwrap().unwrap();
    let z = vec![0.7; obs.len()];
    fuse_in_place(&mut map, &Measurement::new(obs, z).unwrap()).unwrap();
    let mut cfg = config(&map.geometry);
    cfg.lattice = Lattice::default_for(&map.geometry, sm.fov_deg);
    cfg.start = Pose::new(7.5, 7.5, 5.0);
    let forward = greedy_lattice_plan(&map, &cfg.start, &cfg, &sm).unwrap();
    cfg.lattice.points.reverse();
    let backward = greedy_lattice_plan(&map, &cfg.start, &cfg, &sm).unwrap();
    assert_eq!(forward, backward);
}

#[test]
fn refinement_is_never_worse() {
    let map = prior(15.0);
    let sm = SensorModel::default();
    let mut cfg = config(&map.geometry);
    cfg.lattice = Lattice::default_for(&map.geometry, sm.fov_deg);
    cfg.altitude_max_m = 13.0;
    cfg.start = Pose::new(7.5, 7.5, 4.33);
    cfg.cmaes.max_evaluations = 60;
    let initial = greedy_lattice_plan(&map, &cfg.start, &cfg, &sm).unwrap();
    for seed in 0..3 {
        for first in [0.0, 3.0] {
            let refined = refine_cmaes(&initial, &map, &cfg, &sm, first, seed).unwrap();
            assert_eq!(refined[0], initial[0]);
            assert_eq!(refined.len(), initial.len());
            let (r0, r1) = (
                plan_rate(&initial, &map, &cfg, &sm, first).unwrap(),
                plan_rate(&refined, &map, &cfg, &sm, first).unwrap(),
            );
            assert!(r1 >= r0, "{r1} < {r0}");
            for p in &refined {
                assert!(map.geometry.contains(p.x, p.y));
            }
        }
    }
}

#[test]
fn single_measurement_refinement_matches_grid_search() {
    let map = prior(15.0);
    let sm = SensorModel::default();
    let mut cfg = config(&map.geometry);
    cfg.lattice = Lattice::default_for(&map.geometry, sm.fov_deg);
    cfg.altitude_max_m = 15.0;
    cfg.num_waypoints = 2;
    cfg.max_measurements = 1;
    cfg.mu_threshold = 0.0;
    cfg.start = Pose::new(3.0, 3.0, 4.0);
    let first = 2.0;

    let mut oracle = 0.0f64;
    for ix in 0..=15 {
        for iy in 0..=15 {
            for ih in 1..=15 {
                let w = [cfg.start, Pose::new(ix as f64, iy as f64, ih as f64)];
                oracle = oracle.max(plan_rate(&w, &map, &cfg, &sm, first).unwrap());
            }
        }
    }
    let initial = greedy_lattice_plan(&map, &cfg.start, &cfg, &sm).unwrap();
    let refined = refine_cmaes(&initial, &map, &cfg, &sm, first, 11).unwrap();
    let got = plan_rate(&refined, &map, &cfg, &sm, first).unwrap();
    assert!(got >= 0.95 * oracle, "refined {got} vs oracle {oracle}");
}

#[test]
fn mission_is_deterministic_and_monotone() {
    let g = geometry(15.0);
    let gt = crate::world::generate_field(&g, 2.0, 5).unwrap();
    let sm = SensorModel::default();
    let hp = Hyperparameters::default();
    let mut cfg = config(&g);
    cfg.lattice = Lattice::default_for(&g, sm.fov_deg);
    cfg.altitude_max_m = 13.0;
    cfg.start = Pose::new(7.5, 7.5, 4.33);
    cfg.budget_s = 80.0;
    cfg.cmaes.max_evaluations = 30;
    let run = |refine| {
        let mut planner = TwoStagePlanner::new(cfg.clone(), sm, refine, 3);
        run_mission(&gt, &mut planner, &cfg, &sm, &hp, 3).unwrap()
    };
    for refine in [false, true] {
        let a = run(refine);
        let b = run(refine);
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.planner, if refine { "cmaes" } else { "lattice" });
        let s = &a.snapshots;
        assert_eq!(s[0].t, 0.0);
        assert!(s.len() >= 2);
        // At most one frame per camera tick within the budget.
        assert!(s.len() - 1 <= (cfg.budget_s * sm.frequency_hz) as usize + 1);
        for w in s[1..].windows(2) {
            assert!(w[1].t > w[0].t && w[1].t <= cfg.budget_s);
        }
        for w in s.windows(2) {
            assert!(w[1].trace <= w[0].trace);
            let ticks = w[1].t * sm.frequency_hz;
            assert!((ticks - ticks.round()).abs() < 1e-6, "frame off the camera clock at {}", w[1].t);
        }
    }
}

#[test]
fn first_plan_triggers_at_the_start() {
    let g = geometry(15.0);
    let map = prior(15.0);
    let sm = SensorModel::default();
    let mut cfg = config(&g);
    cfg.lattice = Lattice::default_for(&g, sm.fov_deg);
    cfg.altitude_max_m = 13.0;
    cfg.start = Pose::new(7.5, 7.5, 4.33);
    let mut planner = TwoStagePlanner::new(cfg.clone(), sm, false, 0);
    let plan = planner.plan(&map, &cfg.start, 0.0).unwrap();
    assert_eq!(plan.measurements[0].t, 0.0);
    assert_eq!(plan.measurements[0].position(), cfg.start.position());
    let later = planner.plan(&map, &cfg.start, 5.0).unwrap();
    assert!((later.measurements[0].t - next_trigger_delay(5.0, sm.frequency_hz)).abs() < 1e-12);
}

/// Returns the start pose with no trajectory and no triggers.
struct Stay;

impl Planner for Stay {
    fn name(&self) -> &str {
        "stay"
    }

    fn plan(&mut self, _map: &GridMap, start: &Pose, _elapsed: f64) -> Result<Plan> {
        Ok(Plan {
            waypoints: vec![*start],
            measurements: Vec::new(),
            duration: 0.0,
        })
    }
}

#[test]
fn hovering_still_uses_every_tick() {
    let g = geometry(15.0);
    let sm = SensorModel::default();
    let mut cfg = config(&g);
    cfg.lattice = Lattice::default_for(&g, sm.fov_deg);
    cfg.altitude_max_m = 13.0;
    cfg.start = Pose::new(7.5, 7.5, 4.33);
    cfg.budget_s = 40.0;
    let gt = crate::world::generate_field(&g, 2.0, 3).unwrap();
    let rec = run_mission_with_prior(&gt, &prior(15.0), &mut Stay, &cfg, &sm, 0).unwrap();
    let times: Vec<f64> = rec.snapshots.iter().map(|s| s.t).collect();
    let expected: Vec<f64> = (0..7).map(|k| k as f64 / sm.frequency_hz).collect();
    assert_eq!(times.len(), 1 + expected.len());
    for (t, e) in times[1..].iter().zip(&expected) {
        assert!((t - e).abs() < 1e-9);
    }
}
