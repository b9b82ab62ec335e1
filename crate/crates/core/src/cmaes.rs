//! Bounded CMA-ES with the standard (μ/μ_w, λ) update rules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const MAX_RESAMPLES: usize = 100;
const MIN_STEP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesConfig {
    pub initial_mean: Vec<f64>,
    /// Per-coordinate initial standard deviations.
    pub initial_step_sizes: Vec<f64>,
    /// Population size λ; `None` picks `4 + ⌊3 ln n⌋`.
    pub population: Option<usize>,
    pub max_evaluations: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub seed: u64,
}

impl CmaesConfig {
    pub fn dimension(&self) -> usize {
        self.initial_mean.len()
    }

    pub fn lambda(&self) -> usize {
        self.population
            .unwrap_or_else(|| 4 + (3.0 * (self.dimension() as f64).ln()).floor() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension();
        let bad = |msg: String| Err(Error::InvalidCmaesConfig(msg));
        if n == 0 {
            return bad("dimension must be at least 1".into());
        }
        if self.initial_step_sizes.len() != n || self.lower.len() != n || self.upper.len() != n {
            return bad(format!("step sizes and bounds must all have length {n}"));
        }
        if self.lambda() < 4 {
            return bad(format!("population {} below 4", self.lambda()));
        }
        for i in 0..n {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("coordinate {i}: bounds [{lo}, {hi}] are not a finite interval"));
            }
            if !(self.initial_step_sizes[i] > 0.0 && self.initial_step_sizes[i].is_finite()) {
                return bad(format!("coordinate {i}: step size must be positive"));
            }
            if !self.initial_mean[i].is_finite() {
                return bad(format!("coordinate {i}: initial mean is not finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    pub evaluations: usize,
    /// Best cost seen so far after each generation.
    pub history: Vec<f64>,
}

/// Minimises `objective` over the box `[lower, upper]`.
///
/// Candidates leaving the box are resampled, then clipped after 100 failed
/// tries; the clipped point is what gets evaluated and recombined. Non-finite
/// costs count as `+∞`.
pub fn minimize<F>(mut objective: F, cfg: &CmaesConfig) -> Result<CmaesResult>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    let n = cfg.dimension();
    let nf = n as f64;
    let lambda = cfg.lambda();
    let mu = lambda / 2;

    let raw: Vec<f64> = (1..=mu)
        .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let cs = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    // Internal coordinates are scaled by the initial step sizes, so the
    // search starts isotropic with σ = 1.
    let scale = &cfg.initial_step_sizes;
    let to_x = |y: &DVector<f64>| -> Vec<f64> { (0..n).map(|i| y[i] * scale[i]).collect() };
    let lo = DVector::from_fn(n, |i, _| cfg.lower[i] / scale[i]);
    let hi = DVector::from_fn(n, |i, _| cfg.upper[i] / scale[i]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = DVector::from_fn(n, |i, _| (cfg.initial_mean[i] / scale[i]).clamp(lo[i], hi[i]));
    let mut sigma = 1.0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut ps = DVector::<f64>::zeros(n);
    let mut pc = DVector::<f64>::zeros(n);

    let mut evaluations = 0;
    let mut best = to_x(&mean);
    let mut best_cost = f64::INFINITY;
    let mut history = Vec::new();
    let mut generation = 0;

    while evaluations < cfg.max_evaluations {
        let eig = SymmetricEigen::new(cov.clone());
        let b = eig.eigenvectors;
        let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let bd = &b * DMatrix::from_diagonal(&d);

        let batch = lambda.min(cfg.max_evaluations - evaluations);
        let mut steps: Vec<DVector<f64>> = Vec::with_capacity(batch);
        let mut costs: Vec<f64> = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut x = None;
            for _ in 0..MAX_RESAMPLES {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let cand = &mean + &bd * z * sigma;
                if (0..n).all(|i| cand[i] >= lo[i] && cand[i] <= hi[i]) {
                    x = Some(cand);
                    break;
                }
            }
            let x = x.unwrap_or_else(|| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let cand = &mean + &bd * z * sigma;
                DVector::from_fn(n, |i, _| cand[i].clamp(lo[i], hi[i]))
            });
            let point = to_x(&x);
            let c = objective(&point);
            let c = if c.is_finite() { c } else { f64::INFINITY };
            evaluations += 1;
            if c < best_cost {
                best_cost = c;
                best = point;
            }
            steps.push((x - &mean) / sigma);
            costs.push(c);
        }
        history.push(best_cost);
        generation += 1;
        if batch < lambda {
            break;
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
        let mut y_w = DVector::<f64>::zeros(n);
        for (w, &k) in weights.iter().zip(&order) {
            y_w.axpy(*w, &steps[k], 1.0);
        }
        mean += &y_w * sigma;

        let inv_sqrt = &b * DMatrix::from_diagonal(&d.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 })) * b.transpose();
        ps = &ps * (1.0 - cs) + &inv_sqrt * &y_w * (cs * (2.0 - cs) * mu_eff).sqrt();
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - cs).powi(2 * generation as i32)).sqrt() < (1.4 + 2.0 / (nf + 1.0)) * chi_n;
        let hsig = if hsig { 1.0 } else { 0.0 };
        pc = &pc * (1.0 - cc) + &y_w * (hsig * (cc * (2.0 - cc) * mu_eff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &k) in weights.iter().zip(&order) {
            rank_mu.ger(*w, &steps[k], &steps[k], 1.0);
        }
        cov *= 1.0 - c1 - cmu + (1.0 - hsig) * c1 * cc * (2.0 - cc);
        cov.ger(c1, &pc, &pc, 1.0);
        cov += rank_mu * cmu;
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();
        let spread = (0..n).map(|i| cov[(i, i)].sqrt()).fold(0.0, f64::max) * sigma;
        if !(spread >= MIN_STEP) {
            break;
        }
    }
    Ok(CmaesResult {
        best,
        best_cost,
        evaluations,
        history,
    })
}
