use terrain_ipp::fusion::SensorModel;
use terrain_ipp::grid_map::{build_prior, GridGeometry, Hyperparameters};
use terrain_ipp::planner::{greedy_lattice_plan, plan_measurements, plan_rate, refine_cmaes, PlannerConfig};
use terrain_ipp::trajectory::plan_polynomial;
use terrain_ipp::world::Pose;

fn mean_altitude(poses: &[Pose]) -> f64 {
    let first = &poses[..poses.len().min(3)];
    first.iter().map(|p| p.h).sum::<f64>() / first.len() as f64
}

#[test]
fn refinement_lifts_early_measurements() {
    let g = GridGeometry::new(30.0, 30.0, 0.75).unwrap();
    let sm = SensorModel::default();
    let cfg = PlannerConfig::default_for(&g, &sm);
    let map = build_prior(&g, &Hyperparameters::default(), 50.0).unwrap();
    let initial = greedy_lattice_plan(&map, &cfg.start, &cfg, &sm).unwrap();
    let before = plan_measurements(&plan_polynomial(&initial, &cfg.dynamics).unwrap(), &g, &cfg, &sm, 0.0);
    let base_rate = plan_rate(&initial, &map, &cfg, &sm, 0.0).unwrap();

    let seeds = 20;
    let mut lifted = 0;
    for seed in 0..seeds {
        let refined = refine_cmaes(&initial, &map, &cfg, &sm, 0.0, seed).unwrap();
        assert!(plan_rate(&refined, &map, &cfg, &sm, 0.0).unwrap() >= base_rate);
        let after = plan_measurements(&plan_polynomial(&refined, &cfg.dynamics).unwrap(), &g, &cfg, &sm, 0.0);
        if mean_altitude(&after) > mean_altitude(&before) {
            lifted += 1;
        }
    }
    assert!(lifted * 10 >= seeds * 7, "only {lifted} of {seeds} refinements climbed");
}
