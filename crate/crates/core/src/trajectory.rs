//! Minimum-snap polynomial trajectories through 3-D waypoints.
//!
//! Each segment is a polynomial of order `k` in normalised time
//! `s = τ / T_j ∈ [0, 1]`; all three axes share one constraint system and are
//! solved together.

use std::io::Write;

use nalgebra::{DMatrix, LU};

use crate::error::{Error, Result};
use crate::world::Pose;

/// Floor on a segment's duration, used for coincident waypoints.
pub const MIN_SEGMENT_TIME: f64 = 0.1;

const SNAP: usize = 4;

/// Reference dynamics for time allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dynamics {
    pub v_ref: f64,
    pub a_ref: f64,
    pub order: usize,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            v_ref: 5.0,
            a_ref: 2.0,
            order: 12,
        }
    }
}

impl Dynamics {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_ref > 0.0 && self.v_ref.is_finite()) || !(self.a_ref > 0.0 && self.a_ref.is_finite()) {
            return Err(Error::InvalidTrajectory(format!(
                "reference velocity {} and acceleration {} must be positive",
                self.v_ref, self.a_ref
            )));
        }
        if self.order < 9 {
            return Err(Error::InvalidTrajectory(format!(
                "polynomial order {} below 9",
                self.order
            )));
        }
        Ok(())
    }
}

/// Rest-to-rest time to cover `length` metres with a trapezoidal (or, for
/// short segments, triangular) velocity profile.
pub fn segment_time(length: f64, v_ref: f64, a_ref: f64) -> f64 {
    let t = if length >= v_ref * v_ref / a_ref {
        length / v_ref + v_ref / a_ref
    } else {
        2.0 * (length / a_ref).sqrt()
    };
    t.max(MIN_SEGMENT_TIME)
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    duration: f64,
    /// `coeffs[axis][i]` multiplies `s^i`.
    coeffs: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Pose>,
    segments: Vec<Segment>,
    order: usize,
}

impl Trajectory {
    pub fn waypoints(&self) -> &[Pose] {
        &self.waypoints
    }

    pub fn segment_times(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.duration).collect()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Position at mission-relative time `t`, clamped to `[0, total_time]`.
    pub fn position(&self, t: f64) -> [f64; 3] {
        self.derivative(t, 0)
    }

    /// `r`-th time derivative at `t`.
    pub fn derivative(&self, t: f64, r: usize) -> [f64; 3] {
        if self.segments.is_empty() {
            let w = &self.waypoints[0];
            return if r == 0 { [w.x, w.y, w.h] } else { [0.0; 3] };
        }
        let mut start = 0.0;
        let last = self.segments.len() - 1;
        for (j, seg) in self.segments.iter().enumerate() {
            if t < start + seg.duration || j == last {
                let s = ((t - start) / seg.duration).clamp(0.0, 1.0);
                return self.segment_derivative(j, s, r);
            }
            start += seg.duration;
        }
        unreachable!()
    }

    /// `r`-th time derivative of segment `j` at normalised time `s`.
    pub fn segment_derivative(&self, j: usize, s: f64, r: usize) -> [f64; 3] {
        let seg = &self.segments[j];
        let basis = basis_row(self.order, s, r);
        let scale = seg.duration.powi(-(r as i32));
        let mut out = [0.0; 3];
        for (o, c) in out.iter_mut().zip(&seg.coeffs) {
            *o = scale * basis.iter().zip(c).map(|(b, c)| b * c).sum::<f64>();
        }
        out
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// Integrated squared snap summed over axes.
    pub fn snap_cost(&self) -> f64 {
        let q = snap_gram(self.order);
        self.segments
            .iter()
            .map(|seg| {
                let w = seg.duration.powi(-7);
                seg.coeffs
                    .iter()
                    .map(|c| w * quad_form(&q, c))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Samples the trajectory at 50 Hz (plus the final instant) as CSV with
    /// header `t,x,y,h`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "h"])?;
        let total = self.total_time();
        let mut times: Vec<f64> = (0..).map(|i| i as f64 / 50.0).take_while(|&t| t < total).collect();
        times.push(total);
        for t in times {
            let p = self.position(t);
            w.write_record([t, p[0], p[1], p[2]].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    fn with_coefficients(waypoints: Vec<Pose>, times: &[f64], order: usize, sol: &DMatrix<f64>) -> Self {
        let per = order + 1;
        let segments = times
            .iter()
            .enumerate()
            .map(|(j, &duration)| Segment {
                duration,
                coeffs: std::array::from_fn(|axis| (0..per).map(|i| sol[(j * per + i, axis)]).collect()),
            })
            .collect();
        Self {
            waypoints,
            segments,
            order,
        }
    }
}

/// Derivative `r` of the monomials `s^0..s^order` at `s`.
fn basis_row(order: usize, s: f64, r: usize) -> Vec<f64> {
    (0..=order)
        .map(|i| {
            if i < r {
                0.0
            } else {
                falling(i, r) * s.powi((i - r) as i32)
            }
        })
        .collect()
}

fn falling(i: usize, r: usize) -> f64 {
    (0..r).map(|m| (i - m) as f64).product()
}

/// `∫₀¹ p''''(s)² ds = cᵀ Q c` for the monomial basis.
fn snap_gram(order: usize) -> DMatrix<f64> {
    DMatrix::from_fn(order + 1, order + 1, |a, b| {
        if a < SNAP || b < SNAP {
            0.0
        } else {
            falling(a, SNAP) * falling(b, SNAP) / (a + b - 2 * SNAP + 1) as f64
        }
    })
}

fn quad_form(q: &DMatrix<f64>, c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for a in 0..c.len() {
        for b in 0..c.len() {
            acc += c[a] * q[(a, b)] * c[b];
        }
    }
    acc
}

/// Equality constraints `A c = b` of the minimum-snap problem, shared by the
/// three axes (`b` has one column per axis).
fn constraints(waypoints: &[Pose], times: &[f64], order: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = times.len();
    let per = order + 1;
    let rows = 2 * m + 2 * SNAP + SNAP * (m - 1);
    let mut a = DMatrix::zeros(rows, m * per);
    let mut b = DMatrix::zeros(rows, 3);
    let mut row = 0;
    let put = |a: &mut DMatrix<f64>, row: usize, seg: usize, s: f64, r: usize, scale: f64| {
        for (i, v) in basis_row(order, s, r).into_iter().enumerate() {
            a[(row, seg * per + i)] += scale * v;
        }
    };
    for j in 0..m {
        for (s, w) in [(0.0, &waypoints[j]), (1.0, &waypoints[j + 1])] {
            put(&mut a, row, j, s, 0, 1.0);
            b.row_mut(row).copy_from_slice(&[w.x, w.y, w.h]);
            row += 1;
        }
    }
    for r in 1..=SNAP {
        put(&mut a, row, 0, 0.0, r, 1.0);
        put(&mut a, row + 1, m - 1, 1.0, r, 1.0);
        row += 2;
    }
    for j in 0..m - 1 {
        for r in 1..=SNAP {
            put(&mut a, row, j, 1.0, r, times[j].powi(-(r as i32)));
            put(&mut a, row, j + 1, 0.0, r, -times[j + 1].powi(-(r as i32)));
            row += 1;
        }
    }
    (a, b)
}

/// Plans a minimum-snap trajectory through `waypoints`, starting and ending
/// at rest, with segment times from the rest-to-rest profile.
///
/// A single waypoint yields a stationary trajectory of zero duration.
pub fn plan_polynomial(waypoints: &[Pose], dynamics: &Dynamics) -> Result<Trajectory> {
    dynamics.validate()?;
    if waypoints.is_empty() {
        return Err(Error::InvalidTrajectory("no waypoints".into()));
    }
    if let Some(bad) = waypoints.iter().find(|w| !w.position().iter().all(|v| v.is_finite()) || w.h < 0.0) {
        return Err(Error::InvalidTrajectory(format!("invalid waypoint {bad:?}")));
    }
    let order = dynamics.order;
    if waypoints.len() == 1 {
        return Ok(Trajectory {
            waypoints: waypoints.to_vec(),
            segments: Vec::new(),
            order,
        });
    }
    let times: Vec<f64> = waypoints
        .windows(2)
        .map(|w| segment_time(w[0].distance(&w[1]), dynamics.v_ref, dynamics.a_ref))
        .collect();

    let m = times.len();
    let per = order + 1;
    let n = m * per;
    let (a, b) = constraints(waypoints, &times, order);
    let q = snap_gram(order);
    // Relative weights T_j⁻⁷ normalised so the shortest segment has weight 1.
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let rows = a.nrows();
    let mut kkt = DMatrix::zeros(n + rows, n + rows);
    for (j, &t) in times.iter().enumerate() {
        let w = (t_min / t).powi(7);
        kkt.view_mut((j * per, j * per), (per, per)).copy_from(&(&q * w));
    }
    kkt.view_mut((n, 0), (rows, n)).copy_from(&a);
    kkt.view_mut((0, n), (n, rows)).copy_from(&a.transpose());
    let mut rhs = DMatrix::zeros(n + rows, 3);
    rhs.view_mut((n, 0), (rows, 3)).copy_from(&b);
    let sol = LU::new(kkt)
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::InvalidTrajectory("singular minimum-snap system".into()))?;
    Ok(Trajectory::with_coefficients(waypoints.to_vec(), &times, order, &sol))
}

/// Σ segment times.
pub fn travel_time(traj: &Trajectory) -> f64 {
    traj.total_time()
}

/// Poses at the trigger times `0, 1/f, 2/f, … ≤ total_time`, at most
/// `max_poses` of them. Each pose's `t` is relative to the trajectory start.
pub fn measurement_poses(traj: &Trajectory, frequency_hz: f64, max_poses: usize) -> Vec<Pose> {
    measurement_poses_from(traj, frequency_hz, 0.0, max_poses)
}

/// Like [`measurement_poses`] with the first trigger at `first_s` instead of
/// 0, for a camera whose clock keeps running across trajectories.
pub fn measurement_poses_from(traj: &Trajectory, frequency_hz: f64, first_s: f64, max_poses: usize) -> Vec<Pose> {
    if !(frequency_hz > 0.0) {
        return Vec::new();
    }
    let total = traj.total_time();
    (0..max_poses)
        .map(|i| first_s + i as f64 / frequency_hz)
        .take_while(|&t| t <= total + 1e-9)
        .map(|t| {
            let [x, y, h] = traj.position(t);
            Pose { x, y, h, t }
        })
        .collect()
}

/// Delay from mission time `elapsed` to the next tick of a camera that
/// fires at `0, 1/f, 2/f, …` (zero when `elapsed` is on a tick).
pub fn next_trigger_delay(elapsed: f64, frequency_hz: f64) -> f64 {
    let ticks = elapsed * frequency_hz;
    let next = (ticks - 1e-9).ceil().max(0.0);
    (next / frequency_hz - elapsed).max(0.0)
}
