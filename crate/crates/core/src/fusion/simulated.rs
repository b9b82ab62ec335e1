//! Covariance-only fusion for planning.
//!
//! The covariance update does not depend on measured values, so the expected
//! uncertainty reduction of a candidate frame sequence can be evaluated before
//! flying it. Rather than copying and updating the dense map covariance per
//! candidate, the posterior after frames `1..k` is kept as a low-rank
//! correction of the prior,
//!
//! ```text
//! P_k = P_0 − Σ_j U_jᵀ U_j,     U_j = L_j⁻¹ H_j P_{j−1}
//! ```
//!
//! restricted to a tracked subset of cells. Because marginals of a Gaussian
//! are closed under linear conditioning, tracking only the scored cells and
//! the cells any frame touches gives the exact reduction for those cells.

use nalgebra::DMatrix;

use super::Observation;
use crate::error::{Error, Result};
use crate::linalg;

const UNTRACKED: usize = usize::MAX;

/// Low-rank factor `U_j` of one fused frame (rows × tracked cells).
#[derive(Debug, Clone)]
pub struct Factor(DMatrix<f64>);

impl Factor {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }
}

/// Conditioning context over a fixed prior covariance.
#[derive(Debug, Clone)]
pub struct CovarianceOnlyFusion<'a> {
    prior: &'a DMatrix<f64>,
    cells: Vec<usize>,
    slot: Vec<usize>,
    scored: Vec<usize>,
}

impl<'a> CovarianceOnlyFusion<'a> {
    /// `tracked` must contain every cell a later observation touches;
    /// `scored` cells contribute to the reported gain and are tracked
    /// implicitly.
    pub fn new(
        prior: &'a DMatrix<f64>,
        tracked: impl IntoIterator<Item = usize>,
        scored: impl IntoIterator<Item = usize>,
    ) -> Self {
        let n = prior.nrows();
        let scored: Vec<usize> = scored.into_iter().collect();
        let mut in_set = vec![false; n];
        for c in tracked.into_iter().chain(scored.iter().copied()) {
            in_set[c] = true;
        }
        let cells: Vec<usize> = (0..n).filter(|&c| in_set[c]).collect();
        let mut slot = vec![UNTRACKED; n];
        for (i, &c) in cells.iter().enumerate() {
            slot[c] = i;
        }
        let mut scored: Vec<usize> = scored.into_iter().map(|c| slot[c]).collect();
        scored.sort_unstable();
        scored.dedup();
        Self {
            prior,
            cells,
            slot,
            scored,
        }
    }

    /// Tracks all cells and scores the given ones.
    pub fn all_cells(prior: &'a DMatrix<f64>, scored: impl IntoIterator<Item = usize>) -> Self {
        let n = prior.nrows();
        Self::new(prior, 0..n, scored)
    }

    pub fn tracked_cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn num_scored(&self) -> usize {
        self.scored.len()
    }

    /// Reduction of the scored variance sum when `obs` is fused after the
    /// frames in `chain`.
    pub fn gain(&self, chain: &[&Factor], obs: &Observation) -> Result<f64> {
        if obs.is_empty() || self.scored.is_empty() {
            return Ok(0.0);
        }
        let (gain, _) = self.condition(chain, obs, false)?;
        Ok(gain)
    }

    /// Like [`gain`](Self::gain) but also returns the frame's factor so that
    /// later frames can be conditioned on it.
    pub fn gain_and_factor(&self, chain: &[&Factor], obs: &Observation) -> Result<(f64, Factor)> {
        let (gain, factor) = self.condition(chain, obs, true)?;
        Ok((gain, factor.expect("factor requested")))
    }

    /// Total scored reduction of fusing `frames` in sequence.
    pub fn sequence_gain(&self, frames: &[Observation]) -> Result<f64> {
        let mut chain: Vec<Factor> = Vec::with_capacity(frames.len());
        let mut total = 0.0;
        for (k, obs) in frames.iter().enumerate() {
            if obs.is_empty() {
                continue;
            }
            if k + 1 == frames.len() {
                let refs: Vec<&Factor> = chain.iter().collect();
                total += self.gain(&refs, obs)?;
            } else {
                let refs: Vec<&Factor> = chain.iter().collect();
                let (g, f) = self.gain_and_factor(&refs, obs)?;
                total += g;
                chain.push(f);
            }
        }
        Ok(total)
    }

    fn condition(
        &self,
        chain: &[&Factor],
        obs: &Observation,
        keep_factor: bool,
    ) -> Result<(f64, Option<Factor>)> {
        let m = obs.len();
        let tracked = self.cells.len();
        let n = self.prior.nrows();

        // Row entries as (tracked slot, weight).
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        for row in &obs.rows {
            let mut entries = Vec::with_capacity(row.cells.len());
            for (c, w) in row.iter() {
                let s = self.slot.get(c).copied().unwrap_or(UNTRACKED);
                if s == UNTRACKED {
                    return Err(Error::InvalidMeasurement(format!(
                        "cell {c} is observed but not tracked (grid has {n} cells)"
                    )));
                }
                entries.push((s, w));
            }
            rows.push(entries);
        }

        // Columns of the tracked set that must be materialised.
        let columns: Vec<usize> = if keep_factor {
            (0..tracked).collect()
        } else {
            let mut need = vec![false; tracked];
            for &s in &self.scored {
                need[s] = true;
            }
            for entries in &rows {
                for &(s, _) in entries {
                    need[s] = true;
                }
            }
            (0..tracked).filter(|&s| need[s]).collect()
        };
        let all_columns = columns.len() == tracked;
        let mut local = vec![UNTRACKED; tracked];
        for (j, &s) in columns.iter().enumerate() {
            local[s] = j;
        }

        // A = H P_{k-1}[:, columns], starting from the prior.
        let width = columns.len();
        let mut at = DMatrix::<f64>::zeros(width, m);
        {
            let prior = self.prior.as_slice();
            let data = at.as_mut_slice();
            for (r, entries) in rows.iter().enumerate() {
                let dst = &mut data[r * width..(r + 1) * width];
                for &(s, w) in entries {
                    let c = self.cells[s];
                    let src = &prior[c * n..(c + 1) * n];
                    for (d, &col) in dst.iter_mut().zip(&columns) {
                        *d += w * src[self.cells[col]];
                    }
                }
            }
        }
        let mut a = at.transpose();
        for factor in chain {
            let u = &factor.0;
            let y = DMatrix::from_fn(m, u.nrows(), |r, q| {
                rows[r].iter().map(|&(s, w)| w * u[(q, s)]).sum::<f64>()
            });
            if all_columns {
                a.gemm(-1.0, &y, u, 1.0);
            } else {
                let sub = u.select_columns(&columns);
                a.gemm(-1.0, &y, &sub, 1.0);
            }
        }

        let mut s = DMatrix::from_fn(m, m, |r, q| {
            rows[q].iter().map(|&(slot, w)| w * a[(r, local[slot])]).sum::<f64>()
        });
        linalg::symmetrize(&mut s);
        for (r, row) in obs.rows.iter().enumerate() {
            s[(r, r)] += row.noise_var;
        }
        linalg::cholesky_in_place(&mut s).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot, value } => Error::DegenerateMeasurement { pivot, value },
            other => other,
        })?;
        linalg::solve_lower_in_place(&s, &mut a);

        let gain: f64 = self
            .scored
            .iter()
            .map(|&slot| a.column(local[slot]).norm_squared())
            .sum();
        Ok((gain, keep_factor.then_some(Factor(a))))
    }
}
