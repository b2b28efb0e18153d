//! Off-surface field evaluation from boundary density histories, and
//! error norms between discrete fields.
//!
//! The exterior value at a point is the single layer applied to the time
//! derivative of the flux density plus the double layer applied to the
//! trace density. Both potentials are discretized with the same
//! convolution quadrature as the boundary operators: the row transfer
//! functions s S(s) and D(s) are sampled on the contour and their weights
//! convolved against the midpoint density history, so values come out at
//! the half steps t_{j+1/2}.

use nalgebra::{DMatrix, DVector, Point3};

use crate::calderon::{bdf2_cq_weights, CqContour};
use crate::error::{Error, Result};
use crate::linalg::{dot, CsrMatrix};
use crate::mesh::{SurfaceMesh, VolumeMesh};

/// Exterior evaluation points with their per-step values at t_{j+1/2}.
#[derive(Debug, Clone)]
pub struct ExteriorProbe {
    pub points: Vec<Point3<f64>>,
    /// values[p][j] is the field at points[p] and time (j + 1/2) dt.
    pub values: Vec<Vec<f64>>,
}

/// Evaluates the exterior field at the given points from the boundary
/// density histories: phi_hist holds the flux densities at half steps,
/// psi_hist the trace densities at integer steps (one entry longer).
pub fn eval_exterior(
    points: &[Point3<f64>],
    phi_hist: &[Vec<f64>],
    psi_hist: &[Vec<f64>],
    dt: f64,
    surf: &SurfaceMesh,
    potential_order: usize,
    contour: &CqContour,
) -> Result<ExteriorProbe> {
    let n_hist = phi_hist.len();
    if psi_hist.len() != n_hist + 1 {
        return Err(Error::Dimension(format!(
            "{} trace entries cannot bracket {} flux entries",
            psi_hist.len(),
            n_hist
        )));
    }
    let mut probe = ExteriorProbe {
        points: points.to_vec(),
        values: vec![Vec::with_capacity(n_hist); points.len()],
    };
    if n_hist == 0 || points.is_empty() {
        return Ok(probe);
    }
    let nt = surf.triangles.len();
    let nv = surf.vertices.len();
    let weights = bdf2_cq_weights(dt, n_hist - 1, contour, |s| {
        let rows = crate::bem::potential_matrices(s, points, surf, potential_order)?;
        let mut combined = DMatrix::zeros(points.len(), nt + nv);
        for p in 0..points.len() {
            for b in 0..nt {
                combined[(p, b)] = s * rows.s_rows[(p, b)];
            }
            for l in 0..nv {
                combined[(p, nt + l)] = rows.d_rows[(p, l)];
            }
        }
        Ok(combined)
    })?;
    for j in 0..n_hist {
        let mut vals = DVector::zeros(points.len());
        for m in 0..=j {
            if phi_hist[m].len() != nt || psi_hist[m].len() != nv {
                return Err(Error::Dimension(format!(
                    "history entry {m} sized {} and {}, surface has {nt} and {nv}",
                    phi_hist[m].len(),
                    psi_hist[m].len()
                )));
            }
            let mut z = DVector::zeros(nt + nv);
            for (i, &p) in phi_hist[m].iter().enumerate() {
                z[i] = p;
            }
            for i in 0..nv {
                z[nt + i] = 0.5 * (psi_hist[m + 1][i] + psi_hist[m][i]);
            }
            vals += &weights[j - m] * z;
        }
        for p in 0..points.len() {
            probe.values[p].push(vals[p]);
        }
    }
    Ok(probe)
}

/// Mass-weighted and max-norm differences between two coefficient vectors.
#[derive(Debug, Clone, Copy)]
pub struct FieldError {
    pub l2_error: f64,
    pub linf_error: f64,
}

/// Compares two fields on the same mesh in the given mass inner product.
pub fn compare_fields(a: &[f64], b: &[f64], mass: &CsrMatrix) -> Result<FieldError> {
    if a.len() != b.len() || a.len() != mass.nrows() {
        return Err(Error::Dimension(format!(
            "field sizes {} and {} against mass of size {}",
            a.len(),
            b.len(),
            mass.nrows()
        )));
    }
    let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
    let md = mass.apply(&diff);
    let l2 = dot(&diff, &md).max(0.0).sqrt();
    let linf = diff.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    Ok(FieldError {
        l2_error: l2,
        linf_error: linf,
    })
}

/// Evaluates a piecewise-linear field from one mesh at the vertices of
/// another; every target vertex must lie inside the source mesh.
pub fn interpolate_onto(
    source: &VolumeMesh,
    coeffs: &[f64],
    target: &VolumeMesh,
) -> Result<Vec<f64>> {
    if coeffs.len() != source.vertices.len() {
        return Err(Error::Dimension(format!(
            "{} coefficients for a mesh with {} vertices",
            coeffs.len(),
            source.vertices.len()
        )));
    }
    let mut out = Vec::with_capacity(target.vertices.len());
    for (i, p) in target.vertices.iter().enumerate() {
        match source.eval_p1(coeffs, p) {
            Some(v) => out.push(v),
            None => {
                return Err(Error::Configuration(format!(
                    "target vertex {i} at ({}, {}, {}) lies outside the source mesh",
                    p.x, p.y, p.z
                )))
            }
        }
    }
    Ok(out)
}

/// Relative discrete L2 difference of two equally long time series.
pub fn relative_l2_series(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "series lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let num: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::InvalidParameter(
            "reference series is identically zero".into(),
        ));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, interpolate, CoupledSpace};
    use crate::mesh::{make_cube_mesh, make_icosphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere_history(
        n: usize,
        seed: u64,
        surf: &SurfaceMesh,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nt = surf.triangles.len();
        let nv = surf.vertices.len();
        let phi: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..nt).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        let psi: Vec<Vec<f64>> = (0..=n)
            .map(|_| (0..nv).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        (phi, psi)
    }

    #[test]
    fn zero_densities_give_zero_values() {
        let surf = make_icosphere(0, 1.0).unwrap();
        let nt = surf.triangles.len();
        let nv = surf.vertices.len();
        let phi = vec![vec![0.0; nt]; 5];
        let psi = vec![vec![0.0; nv]; 6];
        let pts = [Point3::new(0.0, 0.0, 3.0)];
        let probe = eval_exterior(
            &pts,
            &phi,
            &psi,
            0.1,
            &surf,
            3,
            &CqContour::default(),
        )
        .unwrap();
        assert_eq!(probe.values[0].len(), 5);
        assert!(probe.values[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn convolution_is_causal() {
        let surf = make_icosphere(0, 1.0).unwrap();
        let (phi, psi) = sphere_history(6, 4, &surf);
        let pts = [Point3::new(2.5, 0.0, 0.0), Point3::new(0.0, -3.0, 0.5)];
        // A coarse step keeps the contour frequencies moderate so the
        // potentials carry visible magnitude at these distances.
        let dt = 0.5;
        let contour = CqContour::default();
        let base = eval_exterior(&pts, &phi, &psi, dt, &surf, 3, &contour).unwrap();
        // Perturb the history from step 4 onward.
        let mut phi_b = phi.clone();
        let mut psi_b = psi.clone();
        for j in 4..6 {
            for x in phi_b[j].iter_mut() {
                *x += 1.0;
            }
            for x in psi_b[j + 1].iter_mut() {
                *x -= 2.0;
            }
        }
        let other = eval_exterior(&pts, &phi_b, &psi_b, dt, &surf, 3, &contour).unwrap();
        for p in 0..pts.len() {
            for j in 0..4 {
                assert_eq!(base.values[p][j], other.values[p][j], "point {p} step {j}");
            }
            assert!((base.values[p][4] - other.values[p][4]).abs() > 1e-12);
        }
    }

    #[test]
    fn evaluation_is_linear_in_the_histories() {
        let surf = make_icosphere(0, 1.0).unwrap();
        let (phi_a, psi_a) = sphere_history(4, 10, &surf);
        let (phi_b, psi_b) = sphere_history(4, 11, &surf);
        let phi_sum: Vec<Vec<f64>> = phi_a
            .iter()
            .zip(phi_b.iter())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x + y).collect())
            .collect();
        let psi_sum: Vec<Vec<f64>> = psi_a
            .iter()
            .zip(psi_b.iter())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x + y).collect())
            .collect();
        let pts = [Point3::new(0.0, 2.0, 2.0)];
        let contour = CqContour::default();
        let ea = eval_exterior(&pts, &phi_a, &psi_a, 0.05, &surf, 3, &contour).unwrap();
        let eb = eval_exterior(&pts, &phi_b, &psi_b, 0.05, &surf, 3, &contour).unwrap();
        let es = eval_exterior(&pts, &phi_sum, &psi_sum, 0.05, &surf, 3, &contour).unwrap();
        let scale = es.values[0]
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs()))
            .max(1e-30);
        for j in 0..4 {
            let lin = ea.values[0][j] + eb.values[0][j];
            assert!(
                (es.values[0][j] - lin).abs() < 1e-10 * scale,
                "step {j}: {} vs {lin}",
                es.values[0][j]
            );
        }
    }

    #[test]
    fn rejects_inconsistent_histories_and_near_points() {
        let surf = make_icosphere(0, 1.0).unwrap();
        let nt = surf.triangles.len();
        let nv = surf.vertices.len();
        let phi = vec![vec![0.0; nt]; 3];
        let psi = vec![vec![0.0; nv]; 3];
        let pts = [Point3::new(0.0, 0.0, 3.0)];
        let contour = CqContour::default();
        assert!(matches!(
            eval_exterior(&pts, &phi, &psi, 0.1, &surf, 3, &contour),
            Err(Error::Dimension(_))
        ));
        let psi = vec![vec![0.0; nv]; 4];
        let near = [Point3::new(1.01, 0.0, 0.0)];
        assert!(matches!(
            eval_exterior(&near, &phi, &psi, 0.1, &surf, 3, &contour),
            Err(Error::Proximity(_))
        ));
    }

    #[test]
    fn field_error_reference_values() {
        let space = CoupledSpace::new(make_cube_mesh(2, 1.0).unwrap()).unwrap();
        let mats = assemble(&space).unwrap();
        let a = interpolate(&space.volume, |p| p.x + 0.5 * p.y);
        let same = compare_fields(&a, &a, &mats.m0).unwrap();
        assert_eq!(same.l2_error, 0.0);
        assert_eq!(same.linf_error, 0.0);
        // Against zero the l2 error is the mass norm of the field itself;
        // scale a constant field so its squared norm is 4.
        let ones = vec![1.0; space.n_u()];
        let m1 = mats.m0.apply(&ones);
        let vol: f64 = dot(&ones, &m1);
        let scaled: Vec<f64> = ones.iter().map(|x| x * (4.0 / vol).sqrt()).collect();
        let zero = vec![0.0; space.n_u()];
        let err = compare_fields(&scaled, &zero, &mats.m0).unwrap();
        assert!((err.l2_error - 2.0).abs() < 1e-12, "l2 {}", err.l2_error);
        assert!(matches!(
            compare_fields(&a, &zero[..5], &mats.m0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cross_mesh_interpolation_reproduces_affine_fields() {
        let coarse = make_cube_mesh(2, 1.0).unwrap();
        let fine = make_cube_mesh(3, 1.0).unwrap();
        let f = |p: &Point3<f64>| 1.0 + 2.0 * p.x - 0.7 * p.y + 0.3 * p.z;
        let coeffs: Vec<f64> = coarse.vertices.iter().map(f).collect();
        let onto = interpolate_onto(&coarse, &coeffs, &fine).unwrap();
        for (i, p) in fine.vertices.iter().enumerate() {
            assert!((onto[i] - f(p)).abs() < 1e-11, "vertex {i}");
        }
        // A target outside the source domain is refused.
        let shifted = make_cube_mesh(2, 2.0).unwrap();
        assert!(matches!(
            interpolate_onto(&coarse, &coeffs, &shifted),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn series_error_reference_values() {
        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 3.0];
        assert_eq!(relative_l2_series(&a, &b).unwrap(), 0.0);
        let c = [2.0, 2.0, 3.0];
        let r = relative_l2_series(&c, &b).unwrap();
        assert!((r - 1.0 / 14.0f64.sqrt()).abs() < 1e-15);
        assert!(relative_l2_series(&a, &[1.0]).is_err());
        assert!(relative_l2_series(&[0.0], &[0.0]).is_err());
    }
}
