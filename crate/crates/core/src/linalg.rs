//! Blocked dense kernels built on `gemm`.
//!
//! nalgebra's own Cholesky and triangular solves are unblocked; at the map
//! sizes used here (n = 1600) they are an order of magnitude slower than the
//! gemm-based versions below, which push almost all flops through
//! `matrixmultiply`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const BLOCK: usize = 64;

/// In-place lower Cholesky factorisation `A = L Lᵀ`.
///
/// Only the lower triangle of `a` is read. On success the lower triangle holds
/// `L` and the strict upper triangle is zeroed.
pub fn cholesky_in_place(a: &mut DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky of a non-square matrix");
    let mut k = 0;
    while k < n {
        let b = BLOCK.min(n - k);
        factor_diagonal_block(a, k, b)?;
        let rest = n - k - b;
        if rest > 0 {
            let mut panel = a.view((k + b, k), (rest, b)).into_owned();
            let diag = a.view((k, k), (b, b)).into_owned();
            solve_panel_against_lower_transpose(&mut panel, &diag);
            a.view_mut((k + b, k), (rest, b)).copy_from(&panel);
            let panel_t = panel.transpose();
            a.view_mut((k + b, k + b), (rest, rest))
                .gemm(-1.0, &panel, &panel_t, 1.0);
        }
        k += b;
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

fn factor_diagonal_block(a: &mut DMatrix<f64>, k: usize, b: usize) -> Result<()> {
    for j in 0..b {
        let jj = k + j;
        let mut d = a[(jj, jj)];
        for p in 0..j {
            let l = a[(jj, k + p)];
            d -= l * l;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: jj, value: d });
        }
        let ljj = d.sqrt();
        a[(jj, jj)] = ljj;
        for i in (j + 1)..b {
            let ii = k + i;
            let mut s = a[(ii, jj)];
            for p in 0..j {
                s -= a[(ii, k + p)] * a[(jj, k + p)];
            }
            a[(ii, jj)] = s / ljj;
        }
    }
    Ok(())
}

/// `X := X L⁻ᵀ` for a small lower-triangular `l`, column by column.
fn solve_panel_against_lower_transpose(x: &mut DMatrix<f64>, l: &DMatrix<f64>) {
    let rows = x.nrows();
    let b = l.nrows();
    let data = x.as_mut_slice();
    for j in 0..b {
        for p in 0..j {
            let f = l[(j, p)];
            if f != 0.0 {
                let (head, tail) = data.split_at_mut(j * rows);
                let src = &head[p * rows..(p + 1) * rows];
                let dst = &mut tail[..rows];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= f * s;
                }
            }
        }
        let inv = 1.0 / l[(j, j)];
        for v in &mut data[j * rows..(j + 1) * rows] {
            *v *= inv;
        }
    }
}

/// Solves `L X = B` in place (`b` becomes `X`) for lower-triangular `l`.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let m = l.nrows();
    assert_eq!(m, b.nrows(), "dimension mismatch in triangular solve");
    let k = b.ncols();
    if m == 0 || k == 0 {
        return;
    }
    let mut s = 0;
    while s < m {
        let bs = BLOCK.min(m - s);
        {
            let nrows = b.nrows();
            let data = b.as_mut_slice();
            for c in 0..k {
                let col = &mut data[c * nrows + s..c * nrows + s + bs];
                for p in 0..bs {
                    let mut v = col[p];
                    for q in 0..p {
                        v -= l[(s + p, s + q)] * col[q];
                    }
                    col[p] = v / l[(s + p, s + p)];
                }
            }
        }
        let rest = m - s - bs;
        if rest > 0 {
            let lblock = l.view((s + bs, s), (rest, bs)).into_owned();
            let solved = b.view((s, 0), (bs, k)).into_owned();
            b.view_mut((s + bs, 0), (rest, k))
                .gemm(-1.0, &lblock, &solved, 1.0);
        }
        s += bs;
    }
}

/// Replaces `p` by `(P + Pᵀ) / 2`.
pub fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}
