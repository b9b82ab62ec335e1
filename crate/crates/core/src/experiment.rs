//! Monte-Carlo harness: configuration, trial execution and CSV output.
//!
//! Every trial draws a field from `base_seed + trial`, runs each selected
//! planner on that same field and seed, and writes `trial_<id>_<planner>.csv`.
//! `summary.csv` holds per-planner means of the final snapshot and is only
//! written once every trial has finished.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{CoveragePlanner, RigTreePlanner};
use crate::error::{Error, Result};
use crate::fusion::SensorModel;
use crate::grid_map::{build_prior, GridGeometry, GridMap, Hyperparameters};
use crate::metrics::{TrialRecord, CSV_HEADER};
use crate::planner::{run_mission_with_prior, CmaesSettings, Lattice, Planner, PlannerConfig, TwoStagePlanner};
use crate::trajectory::Dynamics;
use crate::world::{generate_field, GroundTruth, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Cmaes,
    Lattice,
    Rig,
    Coverage,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [Self::Cmaes, Self::Lattice, Self::Rig, Self::Coverage];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cmaes => "cmaes",
            Self::Lattice => "lattice",
            Self::Rig => "rig",
            Self::Coverage => "coverage",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::config("planners", format!("unknown planner `{s}` (expected cmaes, lattice, rig or coverage)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub width_m: f64,
    pub height_m: f64,
    pub resolution_m: f64,
    /// Cluster radius is drawn uniformly from this range per trial.
    pub cluster_radius_m: [f64; 2],
    pub trials: usize,
    pub base_seed: u64,
    pub prior_mean_percent: f64,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self {
            width_m: 30.0,
            height_m: 30.0,
            resolution_m: 0.75,
            cluster_radius_m: [1.0, 3.0],
            trials: 10,
            base_seed: 0,
            prior_mean_percent: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub planners: Vec<PlannerKind>,
    pub budget_s: f64,
    pub num_waypoints: usize,
    pub mu_threshold_percent: f64,
    pub max_measurements: usize,
    pub altitude_min_m: f64,
    pub altitude_max_m: f64,
    pub start: [f64; 3],
    pub charge_planning_time: bool,
    /// Explicit `[x, y, h]` viewpoints; empty means the default lattice.
    pub lattice: Vec<[f64; 3]>,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            planners: PlannerKind::ALL.to_vec(),
            budget_s: 200.0,
            num_waypoints: 5,
            mu_threshold_percent: 40.0,
            max_measurements: 10,
            altitude_min_m: 1.0,
            altitude_max_m: 26.0,
            start: [7.5, 7.5, 8.66],
            charge_planning_time: false,
            lattice: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesSection {
    pub step_planar_m: f64,
    pub step_altitude_m: f64,
    pub max_evaluations: usize,
    /// Zero selects the default `4 + ⌊3 ln n⌋`.
    pub population: usize,
}

impl Default for CmaesSection {
    fn default() -> Self {
        let d = CmaesSettings::default();
        Self {
            step_planar_m: d.step_planar_m,
            step_altitude_m: d.step_altitude_m,
            max_evaluations: d.max_evaluations,
            population: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSection {
    pub step_m: f64,
    pub samples: usize,
}

impl Default for RigSection {
    fn default() -> Self {
        Self {
            step_m: 10.0,
            samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    pub altitude_m: f64,
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self { altitude_m: 8.66 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub v_ref: f64,
    pub a_ref: f64,
    pub order: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        let d = Dynamics::default();
        Self {
            v_ref: d.v_ref,
            a_ref: d.a_ref,
            order: d.order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write `ground_truth_<id>.csv` per trial.
    pub export_ground_truth: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            export_ground_truth: false,
        }
    }
}

/// Whole run configuration, read from TOML. Missing keys take their defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvironmentSection,
    pub gp: Hyperparameters,
    pub sensor: SensorModel,
    pub planner: PlannerSection,
    pub cmaes: CmaesSection,
    pub rig: RigSection,
    pub coverage: CoverageSection,
    pub dynamics: DynamicsSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        let e = &self.environment;
        GridGeometry::new(e.width_m, e.height_m, e.resolution_m).map_err(|err| Error::config("environment", err.to_string()))
    }

    pub fn planner_config(&self) -> Result<PlannerConfig> {
        let g = self.geometry()?;
        let p = &self.planner;
        let c = &self.cmaes;
        let mut cfg = PlannerConfig::default_for(&g, &self.sensor);
        cfg.budget_s = p.budget_s;
        cfg.num_waypoints = p.num_waypoints;
        cfg.mu_threshold = p.mu_threshold_percent;
        cfg.max_measurements = p.max_measurements;
        cfg.altitude_min_m = p.altitude_min_m;
        cfg.altitude_max_m = p.altitude_max_m;
        cfg.start = Pose::new(p.start[0], p.start[1], p.start[2]);
        cfg.charge_planning_time = p.charge_planning_time;
        if !p.lattice.is_empty() {
            cfg.lattice = Lattice {
                points: p.lattice.iter().map(|q| Pose::new(q[0], q[1], q[2])).collect(),
            };
        }
        cfg.cmaes = CmaesSettings {
            step_planar_m: c.step_planar_m,
            step_altitude_m: c.step_altitude_m,
            max_evaluations: c.max_evaluations,
            population: (c.population > 0).then_some(c.population),
        };
        cfg.dynamics = Dynamics {
            v_ref: self.dynamics.v_ref,
            a_ref: self.dynamics.a_ref,
            order: self.dynamics.order,
        };
        Ok(cfg)
    }

    /// Checks every key and lists the violations together with derived
    /// quantities. Never fails.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        macro_rules! bad {
            ($key:expr, $msg:expr $(,)?) => {
                v.push(($key.to_string(), $msg))
            };
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();

        let e = &self.environment;
        for (key, x) in [
            ("environment.width_m", e.width_m),
            ("environment.height_m", e.height_m),
            ("environment.resolution_m", e.resolution_m),
        ] {
            if !positive(x) {
                bad!(key, format!("must be positive, got {x}"));
            }
        }
        if positive(e.width_m) && positive(e.height_m) && positive(e.resolution_m) {
            if let Err(err) = self.geometry() {
                bad!("environment", err.to_string());
            }
        }
        let [lo, hi] = e.cluster_radius_m;
        if !(0.5..=10.0).contains(&lo) || !(0.5..=10.0).contains(&hi) || lo > hi {
            bad!("environment.cluster_radius_m", format!("[{lo}, {hi}] must be an ordered range within [0.5, 10]"));
        }
        if e.trials == 0 {
            bad!("environment.trials", "at least one trial is needed".into());
        }
        if !(0.0..=100.0).contains(&e.prior_mean_percent) {
            bad!("environment.prior_mean_percent", format!("{} outside [0, 100]", e.prior_mean_percent));
        }

        let gp = &self.gp;
        for (key, x) in [
            ("gp.sigma_n_sq", gp.sigma_n_sq),
            ("gp.sigma_f_sq", gp.sigma_f_sq),
            ("gp.lengthscale_m", gp.lengthscale_m),
        ] {
            if !positive(x) {
                bad!(key, format!("must be positive, got {x}"));
            }
        }

        let s = &self.sensor;
        for (key, x) in [
            ("sensor.a", s.a),
            ("sensor.b", s.b),
            ("sensor.scale_altitude_m", s.scale_altitude_m),
            ("sensor.frequency_hz", s.frequency_hz),
        ] {
            if !positive(x) {
                bad!(key, format!("must be positive, got {x}"));
            }
        }
        if !(s.fov_deg > 0.0 && s.fov_deg < 180.0) {
            bad!("sensor.fov_deg", format!("{} outside (0, 180)", s.fov_deg));
        }
        if !(s.scale_factor > 0.0 && s.scale_factor <= 1.0) || (1.0 / s.scale_factor).fract().abs() > 1e-9 {
            bad!("sensor.scale_factor", format!("{} must be 1/k for a whole k", s.scale_factor));
        }

        let p = &self.planner;
        if p.planners.is_empty() {
            bad!("planner.planners", "no planner selected".into());
        }
        if !positive(p.budget_s) {
            bad!("planner.budget_s", format!("must be positive, got {}", p.budget_s));
        }
        if p.num_waypoints < 2 {
            bad!("planner.num_waypoints", format!("{} is below 2", p.num_waypoints));
        }
        if !(0.0..=100.0).contains(&p.mu_threshold_percent) {
            bad!("planner.mu_threshold_percent", format!("{} outside [0, 100]", p.mu_threshold_percent));
        }
        if p.max_measurements == 0 {
            bad!("planner.max_measurements", "must be at least 1".into());
        }
        if !(p.altitude_min_m >= 0.0 && p.altitude_min_m < p.altitude_max_m) {
            bad!(
                "planner.altitude_min_m",
                format!("altitude range [{}, {}] is empty", p.altitude_min_m, p.altitude_max_m),
            );
        }
        let [sx, sy, sh] = p.start;
        if !(0.0..=e.width_m).contains(&sx) || !(0.0..=e.height_m).contains(&sy) || sh < 0.0 {
            bad!("planner.start", format!("({sx}, {sy}, {sh}) outside the workspace"));
        }
        for (i, q) in p.lattice.iter().enumerate() {
            let inside = (0.0..=e.width_m).contains(&q[0])
                && (0.0..=e.height_m).contains(&q[1])
                && (p.altitude_min_m..=p.altitude_max_m).contains(&q[2]);
            if !inside {
                bad!("planner.lattice", format!("point {i} ({}, {}, {}) outside the workspace", q[0], q[1], q[2]));
            }
        }

        let c = &self.cmaes;
        if !positive(c.step_planar_m) {
            bad!("cmaes.step_planar_m", format!("must be positive, got {}", c.step_planar_m));
        }
        if !positive(c.step_altitude_m) {
            bad!("cmaes.step_altitude_m", format!("must be positive, got {}", c.step_altitude_m));
        }
        if c.max_evaluations == 0 {
            bad!("cmaes.max_evaluations", "must be at least 1".into());
        }
        if c.population == 1 {
            bad!("cmaes.population", "needs at least 2 samples".into());
        }
        if !positive(self.rig.step_m) {
            bad!("rig.step_m", format!("must be positive, got {}", self.rig.step_m));
        }
        if !positive(self.coverage.altitude_m) {
            bad!("coverage.altitude_m", format!("must be positive, got {}", self.coverage.altitude_m));
        }
        let d = &self.dynamics;
        if !positive(d.v_ref) {
            bad!("dynamics.v_ref", format!("must be positive, got {}", d.v_ref));
        }
        if !positive(d.a_ref) {
            bad!("dynamics.a_ref", format!("must be positive, got {}", d.a_ref));
        }
        if d.order < 9 {
            bad!("dynamics.order", format!("{} is below 9", d.order));
        }

        // Anything the per-key checks missed.
        if v.is_empty() {
            let built = self
                .geometry()
                .and_then(|g| Ok((g, self.planner_config()?)))
                .and_then(|(g, cfg)| cfg.validate(&g))
                .and_then(|_| self.sensor.validate())
                .and_then(|_| self.gp.validate());
            if let Err(err) = built {
                bad!("config", err.to_string());
            }
        }

        let tan = (0.5 * s.fov_deg).to_radians().tan();
        let mut derived = vec![
            (
                "coverage footprint side (m)".to_string(),
                format!("{:.1}", 2.0 * self.coverage.altitude_m * tan),
            ),
            (
                "start footprint side (m)".to_string(),
                format!("{:.1}", 2.0 * sh * tan),
            ),
        ];
        if positive(p.budget_s) && positive(s.frequency_hz) {
            let frames = (p.budget_s * s.frequency_hz + 1e-9).floor() as usize + 1;
            derived.push(("expected frames per mission".into(), frames.to_string()));
        }
        derived.push(("missions".into(), (e.trials * p.planners.len()).to_string()));
        if p.charge_planning_time {
            derived.push(("note".into(), "charging planning time makes results depend on the machine".into()));
        }
        ValidationReport { violations: v, derived }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `(key, message)` pairs.
    pub violations: Vec<(String, String)>,
    pub derived: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// First violation as an error.
    pub fn into_result(self) -> Result<()> {
        match self.violations.into_iter().next() {
            Some((key, message)) => Err(Error::Config { key, message }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            writeln!(f, "valid")?;
        } else {
            for (key, msg) in &self.violations {
                writeln!(f, "invalid: {key}: {msg}")?;
            }
        }
        for (name, value) in &self.derived {
            writeln!(f, "{name}: {value}")?;
        }
        Ok(())
    }
}

/// Seed of trial `trial`.
pub fn trial_seed(cfg: &RunConfig, trial: usize) -> u64 {
    cfg.environment.base_seed.wrapping_add(trial as u64)
}

/// Field for one trial, with the cluster radius drawn from the configured range.
pub fn trial_field(cfg: &RunConfig, geometry: &GridGeometry, trial: usize) -> Result<GroundTruth> {
    let seed = trial_seed(cfg, trial);
    let [lo, hi] = cfg.environment.cluster_radius_m;
    let radius = if hi > lo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1e1d);
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    generate_field(geometry, radius, seed)
}

pub fn make_planner(kind: PlannerKind, cfg: &RunConfig, planner_cfg: &PlannerConfig, seed: u64) -> Box<dyn Planner> {
    let sm = cfg.sensor;
    match kind {
        PlannerKind::Cmaes => Box::new(TwoStagePlanner::new(planner_cfg.clone(), sm, true, seed)),
        PlannerKind::Lattice => Box::new(TwoStagePlanner::new(planner_cfg.clone(), sm, false, seed)),
        PlannerKind::Rig => Box::new(RigTreePlanner::new(planner_cfg.clone(), sm, cfg.rig.step_m, cfg.rig.samples, seed)),
        PlannerKind::Coverage => Box::new(CoveragePlanner::new(
            cfg.coverage.altitude_m,
            planner_cfg.budget_s,
            planner_cfg.dynamics.v_ref,
            sm,
        )),
    }
}

/// Runs one planner on one trial's field.
pub fn run_trial(
    cfg: &RunConfig,
    planner_cfg: &PlannerConfig,
    prior: &GridMap,
    gt: &GroundTruth,
    trial: usize,
    kind: PlannerKind,
) -> Result<TrialRecord> {
    let seed = trial_seed(cfg, trial);
    let mut planner = make_planner(kind, cfg, planner_cfg, seed);
    let mut rec = run_mission_with_prior(gt, prior, planner.as_mut(), planner_cfg, &cfg.sensor, seed)?;
    rec.trial = trial;
    Ok(rec)
}

/// Mean of the final snapshot over the trials of one planner.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub planner: String,
    pub trials: usize,
    pub trace: f64,
    pub rmse: f64,
    pub wrmse: f64,
    pub mll: f64,
    pub wmll: f64,
}

pub const SUMMARY_HEADER: [&str; 7] = ["planner", "trials", "trace", "rmse", "wrmse", "mll", "wmll"];

/// Aggregates records in the given order; planners keep their first
/// appearance order.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.planner.as_str()) {
            names.push(&r.planner);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let finals: Vec<_> = records
                .iter()
                .filter(|r| r.planner == name)
                .filter_map(|r| r.last())
                .collect();
            let n = finals.len();
            let mean = |f: fn(&crate::metrics::MetricSnapshot) -> f64| finals.iter().map(|s| f(s)).sum::<f64>() / n as f64;
            SummaryRow {
                planner: name.to_string(),
                trials: n,
                trace: mean(|s| s.trace),
                rmse: mean(|s| s.rmse),
                wrmse: mean(|s| s.wrmse),
                mll: mean(|s| s.mll),
                wmll: mean(|s| s.wmll),
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        let mut rec = vec![r.planner.clone(), r.trials.to_string()];
        rec.extend([r.trace, r.rmse, r.wrmse, r.mll, r.wmll].map(|v| format!("{v:?}")));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trial_file_name(trial: usize, planner: &str) -> String {
    format!("trial_{trial}_{planner}.csv")
}

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub dir: PathBuf,
}

/// Executes every (trial, planner) pair on up to `jobs` threads and writes
/// the CSVs into `cfg.output.dir`.
pub fn run(cfg: &RunConfig, jobs: usize) -> Result<RunOutput> {
    cfg.validate().into_result()?;
    let geometry = cfg.geometry()?;
    let planner_cfg = cfg.planner_config()?;
    let prior = build_prior(&geometry, &cfg.gp, cfg.environment.prior_mean_percent)?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir)?;

    let trials = cfg.environment.trials;
    let kinds = &cfg.planner.planners;
    let fields: Vec<Mutex<Option<Arc<GroundTruth>>>> = (0..trials).map(|_| Mutex::new(None)).collect();
    let field = |trial: usize| -> Result<Arc<GroundTruth>> {
        let mut slot = fields[trial].lock().unwrap();
        if let Some(gt) = slot.as_ref() {
            return Ok(gt.clone());
        }
        let gt = Arc::new(trial_field(cfg, &geometry, trial)?);
        if cfg.output.export_ground_truth {
            gt.write_csv(BufWriter::new(File::create(dir.join(format!("ground_truth_{trial}.csv")))?))?;
        }
        *slot = Some(gt.clone());
        Ok(gt)
    };

    let tasks: Vec<(usize, PlannerKind)> = (0..trials).flat_map(|t| kinds.iter().map(move |&k| (t, k))).collect();
    let results: Vec<Mutex<Option<Result<TrialRecord>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(trial, kind)) = tasks.get(i) else { break };
        let outcome = field(trial).and_then(|gt| {
            let rec = run_trial(cfg, &planner_cfg, &prior, &gt, trial, kind)?;
            rec.write_csv(BufWriter::new(File::create(dir.join(trial_file_name(trial, kind.name())))?))?;
            log::info!(
                "trial {trial} {kind}: rmse {:.4}, trace {:.3}",
                rec.last().map_or(f64::NAN, |s| s.rmse),
                rec.last().map_or(f64::NAN, |s| s.trace)
            );
            Ok(rec)
        });
        let failed = outcome.is_err();
        *results[i].lock().unwrap() = Some(outcome);
        if failed {
            // Stop handing out work.
            next.store(tasks.len(), Ordering::SeqCst);
        }
    };
    let jobs = jobs.clamp(1, tasks.len().max(1));
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }

    let mut records = Vec::with_capacity(tasks.len());
    for slot in results {
        match slot.into_inner().unwrap() {
            Some(Ok(rec)) => records.push(rec),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    if records.len() != tasks.len() {
        return Err(Error::InvalidPlannerConfig("a trial was skipped after an earlier failure".into()));
    }
    let summary = summarize(&records);
    write_summary(&summary, &dir.join("summary.csv"))?;
    Ok(RunOutput { records, summary, dir })
}

/// Reads a trial CSV written by [`TrialRecord::write_csv`].
pub fn read_trial_csv(path: &Path) -> Result<Vec<[f64; 6]>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidMeasurement(format!("{} has an unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut row = [0.0; 6];
        for (slot, v) in row.iter_mut().zip(rec.iter()) {
            *slot = v
                .parse()
                .map_err(|_| Error::InvalidMeasurement(format!("{}: bad number `{v}`", path.display())))?;
        }
        rows.push(row);
    }
    Ok(rows)
}
