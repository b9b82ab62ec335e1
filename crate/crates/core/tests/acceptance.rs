//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! The process exits 0 unless a check could not run at all; set
//! `ACCEPTANCE_STRICT=1` to also fail on FAIL lines. `ACCEPTANCE_TRIALS`
//! overrides the number of benchmark trials (at least 10 for the ordering
//! criterion to count).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use terrain_ipp::cmaes::{minimize, CmaesConfig};
use terrain_ipp::experiment::{self, PlannerKind, RunConfig};
use terrain_ipp::fusion::{build_observation, kf_update, noise_variance, Measurement, SensorModel};
use terrain_ipp::grid_map::{build_prior, GridGeometry, GridMap, Hyperparameters};
use terrain_ipp::metrics::TrialRecord;
use terrain_ipp::trajectory::{plan_polynomial, segment_time, Dynamics};
use terrain_ipp::world::{footprint, sample_measurement_seeded, GroundTruth, Pose};

#[derive(Default)]
struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    max_abs(&d) / max_abs(b).max(f64::MIN_POSITIVE)
}

struct FusionCase {
    prior: GridMap,
    frames: Vec<Measurement>,
}

fn fusion_cases() -> Vec<FusionCase> {
    (0..20u64)
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
            let nx = rng.random_range(1..=5);
            let ny = rng.random_range(1..=5);
            let g = GridGeometry::new(0.75 * nx as f64, 0.75 * ny as f64, 0.75).unwrap();
            let hp = Hyperparameters {
                sigma_n_sq: rng.random_range(0.05..2.0),
                sigma_f_sq: rng.random_range(0.2..2.0),
                lengthscale_m: rng.random_range(0.3..3.0),
            };
            let prior = build_prior(&g, &hp, rng.random_range(0.0..100.0)).unwrap();
            let sm = SensorModel {
                scale_altitude_m: 1.2,
                fov_deg: rng.random_range(50.0..100.0),
                ..SensorModel::default()
            };
            let gt = GroundTruth {
                geometry: g,
                values: (0..g.num_cells()).map(|_| rng.random_range(0.0..1.0)).collect(),
                seed: case,
            };
            let count = rng.random_range(1..=10);
            let mut frames = Vec::with_capacity(count);
            while frames.len() < count {
                let pose = Pose::new(
                    rng.random_range(0.0..=g.width_m),
                    rng.random_range(0.0..=g.height_m),
                    rng.random_range(0.3..3.5),
                );
                if footprint(&pose, sm.fov_deg, &g).is_empty() {
                    continue;
                }
                frames.push(sample_measurement_seeded(&gt, &pose, &sm, rng.random()).unwrap());
            }
            FusionCase { prior, frames }
        })
        .collect()
}

fn sequential(prior: &GridMap, frames: &[&Measurement]) -> GridMap {
    frames.iter().fold(prior.clone(), |m, f| kf_update(&m, f).unwrap())
}

/// Joint linear-Gaussian conditioning on all frames at once.
fn batch(prior: &GridMap, frames: &[Measurement]) -> (DVector<f64>, DMatrix<f64>) {
    let n = prior.num_cells();
    let rows: Vec<_> = frames.iter().flat_map(|f| f.observation.rows.iter()).collect();
    let z: Vec<f64> = frames.iter().flat_map(|f| f.values.iter().copied()).collect();
    let m = rows.len();
    let mut h = DMatrix::zeros(m, n);
    let mut r = DMatrix::zeros(m, m);
    for (i, row) in rows.iter().enumerate() {
        for (c, w) in row.iter() {
            h[(i, c)] += w;
        }
        r[(i, i)] = row.noise_var;
    }
    let p = &prior.covariance;
    let s = &h * p * h.transpose() + r;
    let chol = nalgebra::Cholesky::new(s).expect("innovation covariance is positive definite");
    let hp = &h * p;
    let gain_t = chol.solve(&hp);
    let innovation = DVector::from_vec(z) - &h * &prior.mean;
    let mean = &prior.mean + gain_t.transpose() * innovation;
    let cov = p - gain_t.transpose() * hp;
    (mean, cov)
}

fn fusion_checks(report: &mut Report) {
    let cases = fusion_cases();
    let clock = Instant::now();
    let mut worst_oracle: f64 = 0.0;
    let mut worst_order: f64 = 0.0;
    for (k, case) in cases.iter().enumerate() {
        let forward: Vec<&Measurement> = case.frames.iter().collect();
        let seq = sequential(&case.prior, &forward);
        let (mean, cov) = batch(&case.prior, &case.frames);
        worst_oracle = worst_oracle
            .max(rel_diff(seq.mean.as_slice(), mean.as_slice()))
            .max(rel_diff(seq.covariance.as_slice(), cov.as_slice()));

        let mut rng = ChaCha8Rng::seed_from_u64(7 + k as u64);
        let mut reversed = forward.clone();
        reversed.reverse();
        let mut shuffled = forward.clone();
        shuffled.shuffle(&mut rng);
        for order in [reversed, shuffled] {
            let other = sequential(&case.prior, &order);
            worst_order = worst_order
                .max(rel_diff(other.mean.as_slice(), seq.mean.as_slice()))
                .max(rel_diff(other.covariance.as_slice(), seq.covariance.as_slice()));
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    report.check(
        "fusion oracle equivalence",
        worst_oracle < 1e-8 && elapsed < 1.0,
        format!("20 cases, max relative difference {worst_oracle:.2e} (< 1e-8), {elapsed:.3} s (< 1 s)"),
    );
    report.check(
        "order invariance",
        worst_order < 1e-8,
        format!("reversed and shuffled orders, max relative difference {worst_order:.2e} (< 1e-8)"),
    );
}

fn sensor_checks(report: &mut Report) {
    let sm = SensorModel::default();
    let at_zero = noise_variance(0.0, &sm);
    let at_ten = noise_variance(10.0, &sm);
    let closed_form = 0.2 * (1.0 - (-0.5f64).exp());
    // 0.078694 is printed to six decimals; compare it at that precision.
    let printed_ok = (at_ten - 0.078694).abs() <= 5e-7;

    let mut worst_row: f64 = 0.0;
    let mut rows = 0;
    let g = GridGeometry::new(30.0, 30.0, 0.75).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let pose = Pose::new(rng.random_range(0.0..30.0), rng.random_range(0.0..30.0), rng.random_range(0.5..26.0));
        let cells = footprint(&pose, sm.fov_deg, &g);
        if cells.is_empty() {
            continue;
        }
        let obs = build_observation(&cells, &g, pose.h, &sm).unwrap();
        for row in &obs.rows {
            worst_row = worst_row.max((row.weights.iter().sum::<f64>() - 1.0).abs());
            rows += 1;
        }
    }
    report.check(
        "sensor model",
        at_zero == 0.0 && (at_ten - closed_form).abs() <= 1e-9 && printed_ok && worst_row <= 1e-12,
        format!(
            "noise_variance(0) = {at_zero}, noise_variance(10) = {at_ten:.9} (0.2(1 - e^-0.5) to 1e-9, 0.078694 to 6 decimals), \
             {rows} rows sum to 1 within {worst_row:.1e}"
        ),
    );
}

fn trajectory_checks(report: &mut Report) {
    let dynamics = Dynamics::default();
    let mut worst_interp: f64 = 0.0;
    let mut worst_cont: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=7);
        let waypoints: Vec<Pose> = (0..n)
            .map(|_| Pose::new(rng.random_range(0.0..30.0), rng.random_range(0.0..30.0), rng.random_range(1.0..26.0)))
            .collect();
        let traj = plan_polynomial(&waypoints, &dynamics).unwrap();
        let times = traj.segment_times();
        let mut t = 0.0;
        for (k, w) in waypoints.iter().enumerate() {
            let p = if k == 0 { traj.segment_derivative(0, 0.0, 0) } else { traj.segment_derivative(k - 1, 1.0, 0) };
            let err = (0..3).map(|i| (p[i] - w.position()[i]).abs()).fold(0.0, f64::max);
            worst_interp = worst_interp.max(err);
            let q = traj.position(t);
            worst_interp = worst_interp.max((0..3).map(|i| (q[i] - w.position()[i]).abs()).fold(0.0, f64::max));
            if k < times.len() {
                t += times[k];
            }
        }
        for j in 0..traj.num_segments().saturating_sub(1) {
            for r in 1..=4 {
                let a = traj.segment_derivative(j, 1.0, r);
                let b = traj.segment_derivative(j + 1, 0.0, r);
                worst_cont = worst_cont.max((0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max));
            }
        }
    }
    let ten = segment_time(10.0, 5.0, 2.0);
    let flown = plan_polynomial(&[Pose::new(0.0, 0.0, 5.0), Pose::new(10.0, 0.0, 5.0)], &dynamics)
        .unwrap()
        .total_time();
    let exact = 20f64.sqrt();
    report.check(
        "trajectory contracts",
        worst_interp <= 1e-9 && worst_cont <= 1e-6 && (ten - exact).abs() <= 1e-6 && (flown - exact).abs() <= 1e-6 && (ten - 4.472).abs() <= 5e-4,
        format!(
            "waypoint error {worst_interp:.1e} (<= 1e-9), derivative 1..4 jump {worst_cont:.1e} (<= 1e-6), \
             10 m rest-to-rest {ten:.7} s (2*sqrt(5) to 1e-6, 4.472 to 3 decimals)"
        ),
    );
}

fn cmaes_checks(report: &mut Report) {
    let config = |n: usize, mean: f64, step: f64, evals: usize, seed: u64| CmaesConfig {
        initial_mean: vec![mean; n],
        initial_step_sizes: vec![step; n],
        population: None,
        max_evaluations: evals,
        lower: vec![-10.0; n],
        upper: vec![10.0; n],
        seed,
    };
    let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let rosenbrock = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
    let s = minimize(sphere, &config(12, 3.0, 2.0, 5000, 11)).unwrap();
    let r = minimize(rosenbrock, &config(2, -1.2, 1.0, 20000, 12)).unwrap();
    let a = minimize(rosenbrock, &config(2, -1.2, 1.0, 2000, 13)).unwrap();
    let b = minimize(rosenbrock, &config(2, -1.2, 1.0, 2000, 13)).unwrap();
    let bits = |r: &terrain_ipp::cmaes::CmaesResult| {
        let mut v: Vec<u64> = r.best.iter().map(|x| x.to_bits()).collect();
        v.push(r.best_cost.to_bits());
        v.extend(r.history.iter().map(|x| x.to_bits()));
        v
    };
    let same = bits(&a) == bits(&b) && a.evaluations == b.evaluations;
    report.check(
        "CMA-ES sanity",
        s.best_cost < 1e-6 && s.evaluations <= 5000 && r.best_cost < 1e-4 && r.evaluations <= 20000 && same,
        format!(
            "12-D sphere {:.1e} in {} evaluations, 2-D Rosenbrock {:.1e} in {} evaluations, seeded rerun identical: {same}",
            s.best_cost, s.evaluations, r.best_cost, r.evaluations
        ),
    );
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism_check(report: &mut Report, scratch: &Path) -> Vec<TrialRecord> {
    let mut cfg = RunConfig::default();
    cfg.environment.width_m = 15.0;
    cfg.environment.height_m = 15.0;
    cfg.environment.trials = 2;
    cfg.environment.base_seed = 40;
    cfg.planner.budget_s = 60.0;
    cfg.rig.samples = 60;
    cfg.output.export_ground_truth = true;
    let config_path = scratch.join("determinism.toml");
    fs::write(&config_path, cfg.to_toml()).unwrap();

    let exe = env!("CARGO_BIN_EXE_terrain-ipp");
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = scratch.join(name);
        let status = Command::new(exe)
            .args(["run", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out)
            .args(["--jobs", jobs])
            .env("RUST_LOG", "warn")
            .output()
            .expect("binary runs");
        assert!(status.status.success(), "run failed: {}", String::from_utf8_lossy(&status.stderr));
        outputs.push(read_dir_bytes(&out));
    }
    let files = outputs[0].len();
    let identical = outputs.iter().all(|o| *o == outputs[0]);
    report.check(
        "determinism",
        identical && files == 2 * 4 + 2 + 1,
        format!("{files} files byte-identical across two runs with --jobs 1 and one with --jobs 3: {identical}"),
    );

    cfg.output.dir = scratch.join("records");
    experiment::run(&cfg, 1).unwrap().records
}

fn mean_of<'a>(records: impl Iterator<Item = &'a TrialRecord>, f: fn(&TrialRecord) -> f64) -> f64 {
    let v: Vec<f64> = records.map(f).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn benchmark_checks(report: &mut Report, scratch: &Path, mut records: Vec<TrialRecord>) {
    let trials: usize = std::env::var("ACCEPTANCE_TRIALS").ok().and_then(|v| v.parse().ok()).unwrap_or(10);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut cfg = RunConfig::default();
    cfg.environment.trials = trials;
    cfg.output.dir = scratch.join("benchmark");
    let clock = Instant::now();
    let run = experiment::run(&cfg, jobs).unwrap();
    let minutes = clock.elapsed().as_secs_f64() / 60.0;

    let final_of = |kind: PlannerKind, f: fn(&TrialRecord) -> f64| {
        mean_of(run.records.iter().filter(|r| r.planner == kind.name()), f)
    };
    let trace = |r: &TrialRecord| r.last().unwrap().trace;
    let rmse = |r: &TrialRecord| r.last().unwrap().rmse;
    let order = [PlannerKind::Cmaes, PlannerKind::Lattice, PlannerKind::Rig, PlannerKind::Coverage];
    let traces: Vec<f64> = order.iter().map(|&k| final_of(k, trace)).collect();
    let rmses: Vec<f64> = order.iter().map(|&k| final_of(k, rmse)).collect();
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
    let reduction = 1.0 - rmses[0] / rmses[3];
    let fmt = |v: &[f64], p: usize| {
        order
            .iter()
            .zip(v)
            .map(|(k, x)| format!("{k} {x:.p$}"))
            .collect::<Vec<_>>()
            .join(" < ")
    };
    report.check(
        "planner ordering",
        trials >= 10 && increasing(&traces) && increasing(&rmses) && reduction >= 0.30 && minutes <= 30.0,
        format!(
            "{trials} trials, {minutes:.1} min; trace {}; RMSE {}; CMA-ES RMSE {:.1}% below coverage (>= 30%)",
            fmt(&traces, 3),
            fmt(&rmses, 4),
            100.0 * reduction
        ),
    );

    let mut worst_cv: f64 = 0.0;
    let mut coverage_monotone = true;
    for r in run.records.iter().filter(|r| r.planner == "coverage") {
        let traces: Vec<f64> = r.snapshots.iter().map(|s| s.trace).collect();
        coverage_monotone &= traces.windows(2).all(|w| w[1] <= w[0]);
        // Decrements of frames 4, 5, ...; snapshot 0 is the prior.
        let d: Vec<f64> = traces.windows(2).skip(3).map(|w| w[0] - w[1]).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
        worst_cv = worst_cv.max(var.sqrt() / mean);
    }
    report.check(
        "coverage uniformity",
        coverage_monotone && worst_cv < 0.5,
        format!("trace monotone: {coverage_monotone}; largest per-frame decrement CV after 3 frames {worst_cv:.3} (< 0.5)"),
    );

    records.extend(run.records);
    let mut worst_rise = f64::NEG_INFINITY;
    for r in &records {
        for w in r.snapshots.windows(2) {
            worst_rise = worst_rise.max(w[1].trace - w[0].trace);
        }
    }
    report.check(
        "trace monotonicity",
        worst_rise <= 0.0,
        format!("{} mission logs over all planners, largest step change {worst_rise:.3e} (<= 0)", records.len()),
    );
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let mut report = Report::default();
    fusion_checks(&mut report);
    sensor_checks(&mut report);
    trajectory_checks(&mut report);
    cmaes_checks(&mut report);
    let records = determinism_check(&mut report, scratch.path());
    benchmark_checks(&mut report, scratch.path(), records);
    println!("acceptance: {} passed, {} failed", report.passed, report.failed);
    if report.failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
