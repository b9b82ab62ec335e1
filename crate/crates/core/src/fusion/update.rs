use nalgebra::{DMatrix, DVector};

use super::{Measurement, Observation};
use crate::error::{Error, Result};
use crate::grid_map::GridMap;
use crate::linalg;

/// Kalman update of `map` with one frame, returning the posterior map.
pub fn kf_update(map: &GridMap, meas: &Measurement) -> Result<GridMap> {
    let mut out = map.clone();
    fuse_in_place(&mut out, meas)?;
    Ok(out)
}

/// In-place Kalman update.
///
/// With `S = H P Hᵀ + R = L Lᵀ` and `U = L⁻¹ H P`, the gain terms collapse to
/// `K H P = Uᵀ U` and `K v = Uᵀ L⁻¹ v`. The cost depends only on the map size
/// and the frame's row count, never on how many frames were fused before.
pub fn fuse_in_place(map: &mut GridMap, meas: &Measurement) -> Result<()> {
    meas.validate(&map.geometry)?;
    let obs = &meas.observation;
    if obs.is_empty() {
        return Ok(());
    }
    let p = &map.covariance;
    let ph = cross_covariance(p, obs);
    let mut s = innovation_covariance(&ph, obs);
    linalg::cholesky_in_place(&mut s).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::DegenerateMeasurement { pivot, value },
        other => other,
    })?;

    let mut innovation = DMatrix::from_fn(obs.len(), 1, |r, _| {
        meas.values[r] - obs.rows[r].iter().map(|(c, w)| w * map.mean[c]).sum::<f64>()
    });
    linalg::solve_lower_in_place(&s, &mut innovation);

    let mut u = ph.transpose();
    linalg::solve_lower_in_place(&s, &mut u);
    let ut = u.transpose();

    map.mean += &ut * DVector::from_column_slice(innovation.as_slice());
    map.covariance.gemm(-1.0, &ut, &u, 1.0);
    linalg::symmetrize(&mut map.covariance);
    for i in 0..map.covariance.nrows() {
        if map.covariance[(i, i)] < 0.0 {
            map.covariance[(i, i)] = 0.0;
        }
    }
    Ok(())
}

/// `P Hᵀ` (n × m), using the symmetry of `P` to read whole columns.
fn cross_covariance(p: &DMatrix<f64>, obs: &Observation) -> DMatrix<f64> {
    let n = p.nrows();
    let mut ph = DMatrix::zeros(n, obs.len());
    for (r, row) in obs.rows.iter().enumerate() {
        let mut dst = ph.column_mut(r);
        for (c, w) in row.iter() {
            dst.axpy(w, &p.column(c), 1.0);
        }
    }
    ph
}

fn innovation_covariance(ph: &DMatrix<f64>, obs: &Observation) -> DMatrix<f64> {
    let m = obs.len();
    let mut s = DMatrix::from_fn(m, m, |r, q| obs.rows[r].iter().map(|(c, w)| w * ph[(c, q)]).sum());
    linalg::symmetrize(&mut s);
    for (r, row) in obs.rows.iter().enumerate() {
        s[(r, r)] += row.noise_var;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::ObservationRow;
    use crate::grid_map::{build_prior, GridGeometry, Hyperparameters};
    use approx::assert_relative_eq;

    fn single(cells: Vec<usize>, noise_var: f64, value: f64) -> Measurement {
        let w = 1.0 / cells.len() as f64;
        Measurement::new(
            Observation {
                rows: vec![ObservationRow {
                    weights: vec![w; cells.len()],
                    cells,
                    noise_var,
                }],
            },
            vec![value],
        )
        .unwrap()
    }

    fn one_cell_map() -> GridMap {
        let g = GridGeometry::new(0.75, 0.75, 0.75).unwrap();
        GridMap::from_parts(g, DVector::from_element(1, 50.0), DMatrix::from_element(1, 1, 1.82)).unwrap()
    }

    #[test]
    fn scalar_kalman_example() {
        let post = kf_update(&one_cell_map(), &single(vec![0], 0.078694, 60.0)).unwrap();
        let k = 1.82 / (1.82 + 0.078694);
        assert_relative_eq!(post.mean[0], 50.0 + k * 10.0, max_relative = 1e-12);
        assert_relative_eq!(post.mean[0], 59.5855, epsilon = 1e-4);
        assert_relative_eq!(post.covariance[(0, 0)], 1.82 * (1.0 - k), max_relative = 1e-10);
        assert_relative_eq!(post.covariance[(0, 0)], 0.07543, epsilon = 1e-5);
    }

    #[test]
    fn uninformative_measurement_changes_nothing() {
        let g = GridGeometry::new(3.0, 3.0, 0.75).unwrap();
        let prior = build_prior(&g, &Hyperparameters::default(), 50.0).unwrap();
        let post = kf_update(&prior, &single(vec![3, 4], 1e12, 90.0)).unwrap();
        for (a, b) in post.covariance.iter().zip(prior.covariance.iter()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-6);
        }
        for (a, b) in post.mean.iter().zip(prior.mean.iter()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-6);
        }
    }

    #[test]
    fn repeated_frame_has_diminishing_returns() {
        let g = GridGeometry::new(3.0, 3.0, 0.75).unwrap();
        let prior = build_prior(&g, &Hyperparameters::default(), 50.0).unwrap();
        let m = single(vec![5, 6, 9, 10], 0.05, 55.0);
        let once = kf_update(&prior, &m).unwrap();
        let twice = kf_update(&once, &m).unwrap();
        let d1 = prior.trace() - once.trace();
        let d2 = once.trace() - twice.trace();
        assert!(d1 > 0.0 && d2 > 0.0 && d2 < d1, "d1={d1} d2={d2}");
    }

    #[test]
    fn duplicate_noiseless_rows_are_degenerate() {
        let g = GridGeometry::new(1.5, 0.75, 0.75).unwrap();
        let map = GridMap::from_parts(g, DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let row = ObservationRow {
            cells: vec![0],
            weights: vec![1.0],
            noise_var: 1e-300,
        };
        let obs = Observation {
            rows: vec![row.clone(), row],
        };
        let meas = Measurement {
            observation: obs,
            values: vec![1.0, 1.0],
        };
        assert!(matches!(
            kf_update(&map, &meas),
            Err(Error::DegenerateMeasurement { .. })
        ));
    }

    #[test]
    fn rejects_out_of_grid_cells() {
        assert!(matches!(
            kf_update(&one_cell_map(), &single(vec![1], 0.1, 0.0)),
            Err(Error::InvalidMeasurement(_))
        ));
    }
}
