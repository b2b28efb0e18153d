//! Interior P1 finite elements for the first-order wave system.
//!
//! The scalar field u and the three components of the flux v all live on
//! the volume mesh vertices. The coupling operator pair (D, D^T) uses the
//! half-and-half integration by parts that makes the semi-discrete system
//! skew, so the interior energy is conserved exactly and the only energy
//! flux goes through the boundary matrices C0 and C1.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::Result;
use crate::linalg::CsrMatrix;
use crate::mesh::{extract_boundary, SurfaceMesh, TraceMap, VolumeMesh};

/// Volume mesh plus its extracted boundary and trace map; owns the index
/// spaces of the four coupled fields.
#[derive(Debug, Clone)]
pub struct CoupledSpace {
    pub volume: VolumeMesh,
    pub surface: SurfaceMesh,
    pub trace: TraceMap,
}

impl CoupledSpace {
    pub fn new(volume: VolumeMesh) -> Result<Self> {
        let (surface, trace) = extract_boundary(&volume)?;
        Ok(CoupledSpace {
            volume,
            surface,
            trace,
        })
    }

    /// Scalar field unknowns (volume vertices).
    pub fn n_u(&self) -> usize {
        self.volume.vertices.len()
    }

    /// Flux unknowns: three components per vertex, component-major.
    pub fn n_v(&self) -> usize {
        3 * self.n_u()
    }

    /// Boundary flux density unknowns (one per boundary triangle).
    pub fn n_phi(&self) -> usize {
        self.surface.triangles.len()
    }

    /// Boundary trace unknowns (one per boundary vertex).
    pub fn n_psi(&self) -> usize {
        self.surface.vertices.len()
    }

    /// Trace of a scalar field onto the boundary vertices.
    pub fn boundary_trace(&self, u: &[f64]) -> Vec<f64> {
        self.trace.vertex_trace.iter().map(|&vi| u[vi]).collect()
    }
}

/// Index of flux component c at vertex m in the component-major layout.
pub fn v_index(c: usize, m: usize, n_u: usize) -> usize {
    c * n_u + m
}

/// Assembled interior and coupling matrices.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    /// Scalar P1 mass, n_u x n_u. The flux mass is block diagonal with
    /// three copies of this.
    pub m0: CsrMatrix,
    /// Skew-split gradient: maps scalar coefficients to flux moments,
    /// n_v x n_u.
    pub d: CsrMatrix,
    /// Boundary flux coupling into the scalar equation, n_u x n_phi.
    pub c0: CsrMatrix,
    /// Boundary trace coupling into the flux equation, n_v x n_psi.
    pub c1: CsrMatrix,
}

impl FemMatrices {
    /// M1 x for the block-diagonal flux mass.
    pub fn m1_apply(&self, x: &[f64]) -> Vec<f64> {
        let n_u = self.m0.nrows();
        let mut y = vec![0.0; 3 * n_u];
        for c in 0..3 {
            self.m0
                .matvec(&x[c * n_u..(c + 1) * n_u], &mut y[c * n_u..(c + 1) * n_u]);
        }
        y
    }
}

/// Constant gradients of the four P1 basis functions on a tet.
fn tet_gradients(p: &[Point3<f64>; 4]) -> Option<[Vector3<f64>; 4]> {
    let m = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let inv = m.try_inverse()?;
    // Barycentric lambda_i for i>=1 has gradient = row i-1 of M^{-1}.
    let g1 = Vector3::new(inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]);
    let g2 = Vector3::new(inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]);
    let g3 = Vector3::new(inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]);
    Some([-(g1 + g2 + g3), g1, g2, g3])
}

/// Assembles the mass, gradient, and boundary coupling matrices.
pub fn assemble(space: &CoupledSpace) -> Result<FemMatrices> {
    let mesh = &space.volume;
    let n_u = space.n_u();
    let mut m0_trips = Vec::new();
    let mut d_trips = Vec::new();
    for (ti, t) in mesh.tets.iter().enumerate() {
        let p = [
            mesh.vertices[t[0]],
            mesh.vertices[t[1]],
            mesh.vertices[t[2]],
            mesh.vertices[t[3]],
        ];
        let vol = mesh.tet_volume(ti);
        let grads = tet_gradients(&p).expect("validated tet");
        for a in 0..4 {
            for b in 0..4 {
                let mass = if a == b { vol / 10.0 } else { vol / 20.0 };
                m0_trips.push((t[a], t[b], mass));
                if a != b {
                    // Row (c, m = t[a]), column i = t[b]: the entry is the
                    // split form (1/2) int(b_m grad b_i - b_i grad b_m),
                    // which is (vol/8) (grad b_i - grad b_m) per component.
                    let diff = grads[b] - grads[a];
                    for c in 0..3 {
                        d_trips.push((v_index(c, t[a], n_u), t[b], vol / 8.0 * diff[c]));
                    }
                }
            }
        }
    }
    let m0 = CsrMatrix::from_triplets(n_u, n_u, &m0_trips)?;
    drop(m0_trips);
    let d = CsrMatrix::from_triplets(3 * n_u, n_u, &d_trips)?;
    drop(d_trips);

    // Boundary couplings. Both carry the factor 1/2 from the symmetric
    // splitting of the boundary terms. The signs are pinned by two
    // exactness identities (tested below): for affine u with psi its
    // trace, M1^{-1}(D u - C1 psi) is the exact constant gradient, and
    // for constant v with phi its negated normal trace, D^T v + C0 phi
    // vanishes.
    let surf = &space.surface;
    let trace = &space.trace;
    let mut c0_trips = Vec::new();
    let mut c1_trips = Vec::new();
    for (k, tri) in surf.triangles.iter().enumerate() {
        let area = surf.triangle_area(k);
        let n = surf.normals[k];
        let g = [
            trace.vertex_trace[tri[0]],
            trace.vertex_trace[tri[1]],
            trace.vertex_trace[tri[2]],
        ];
        for a in 0..3 {
            c0_trips.push((g[a], k, area / 6.0));
            for b in 0..3 {
                let w = if a == b { area / 6.0 } else { area / 12.0 };
                for c in 0..3 {
                    c1_trips.push((v_index(c, g[a], n_u), tri[b], -0.5 * n[c] * w));
                }
            }
        }
    }
    let c0 = CsrMatrix::from_triplets(n_u, space.n_phi(), &c0_trips)?;
    let c1 = CsrMatrix::from_triplets(3 * n_u, space.n_psi(), &c1_trips)?;
    Ok(FemMatrices { m0, d, c0, c1 })
}

/// Degree-2 tet quadrature points (barycentric) and the common weight 1/4.
const TET_QUAD_A: f64 = 0.585_410_196_624_968_5;
const TET_QUAD_B: f64 = 0.138_196_601_125_010_5;

/// Integrates f against every P1 basis function: b_i = integral of b_i * f.
/// Each tet is uniformly subdivided `refine` times (8-way) before applying
/// a degree-2 rule, so sharp but smooth data is captured accurately.
pub fn p1_moments<F>(mesh: &VolumeMesh, f: F, refine: usize) -> Vec<f64>
where
    F: Fn(&Point3<f64>) -> f64 + Sync,
{
    let n_u = mesh.vertices.len();
    let mut out = vec![0.0; n_u];
    for t in &mesh.tets {
        let p = [
            mesh.vertices[t[0]],
            mesh.vertices[t[1]],
            mesh.vertices[t[2]],
            mesh.vertices[t[3]],
        ];
        let mut acc = [0.0; 4];
        quad_subdivided(&p, refine, &mut |x, bary, w| {
            let fx = f(x);
            for i in 0..4 {
                acc[i] += w * fx * bary[i];
            }
        });
        for i in 0..4 {
            out[t[i]] += acc[i];
        }
    }
    out
}

/// Integrates f over the whole mesh with the same subdivided rule.
pub fn integrate<F>(mesh: &VolumeMesh, f: F, refine: usize) -> f64
where
    F: Fn(&Point3<f64>) -> f64,
{
    let mut total = 0.0;
    for t in &mesh.tets {
        let p = [
            mesh.vertices[t[0]],
            mesh.vertices[t[1]],
            mesh.vertices[t[2]],
            mesh.vertices[t[3]],
        ];
        quad_subdivided(&p, refine, &mut |x, _, w| total += w * f(x));
    }
    total
}

/// Nodal interpolation of a function.
pub fn interpolate<F>(mesh: &VolumeMesh, f: F) -> Vec<f64>
where
    F: Fn(&Point3<f64>) -> f64,
{
    mesh.vertices.iter().map(|v| f(v)).collect()
}

/// Visits quadrature nodes of the degree-2 rule on a tet subdivided
/// `refine` times; callback gets the point, its barycentric coordinates
/// with respect to the ORIGINAL tet, and the weight.
fn quad_subdivided(
    p: &[Point3<f64>; 4],
    refine: usize,
    visit: &mut impl FnMut(&Point3<f64>, &[f64; 4], f64),
) {
    // Work in barycentric coordinates of the original tet so the callback
    // can evaluate the parent P1 basis directly.
    let corners = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    subdivide_visit(p, &corners, refine, visit);
}

fn subdivide_visit(
    p: &[Point3<f64>; 4],
    bary: &[[f64; 4]; 4],
    level: usize,
    visit: &mut impl FnMut(&Point3<f64>, &[f64; 4], f64),
) {
    if level == 0 {
        let at = |b: &[f64; 4]| -> Point3<f64> {
            Point3::from(
                p[0].coords * b[0] + p[1].coords * b[1] + p[2].coords * b[2] + p[3].coords * b[3],
            )
        };
        let v0 = at(&bary[0]);
        let v1 = at(&bary[1]);
        let v2 = at(&bary[2]);
        let v3 = at(&bary[3]);
        let vol = ((v1 - v0).cross(&(v2 - v0)).dot(&(v3 - v0)) / 6.0).abs();
        for i in 0..4 {
            let mut b = [TET_QUAD_B; 4];
            b[i] = TET_QUAD_A;
            // Barycentric w.r.t. the parent tet and the physical point.
            let mut pb = [0.0; 4];
            for k in 0..4 {
                for (j, bj) in b.iter().enumerate() {
                    pb[k] += bj * bary[j][k];
                }
            }
            let x = at(&pb);
            visit(&x, &pb, vol / 4.0);
        }
        return;
    }
    let mid = |a: &[f64; 4], b: &[f64; 4]| -> [f64; 4] {
        [
            (a[0] + b[0]) / 2.0,
            (a[1] + b[1]) / 2.0,
            (a[2] + b[2]) / 2.0,
            (a[3] + b[3]) / 2.0,
        ]
    };
    let m01 = mid(&bary[0], &bary[1]);
    let m02 = mid(&bary[0], &bary[2]);
    let m03 = mid(&bary[0], &bary[3]);
    let m12 = mid(&bary[1], &bary[2]);
    let m13 = mid(&bary[1], &bary[3]);
    let m23 = mid(&bary[2], &bary[3]);
    let subs: [[[f64; 4]; 4]; 8] = [
        [bary[0], m01, m02, m03],
        [m01, bary[1], m12, m13],
        [m02, m12, bary[2], m23],
        [m03, m13, m23, bary[3]],
        [m01, m02, m13, m03],
        [m01, m02, m12, m13],
        [m02, m03, m13, m23],
        [m02, m12, m13, m23],
    ];
    for s in &subs {
        subdivide_visit(p, s, level - 1, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdSolver;
    use crate::mesh::make_cube_mesh;

    fn cube_space(n: usize, side: f64) -> CoupledSpace {
        CoupledSpace::new(make_cube_mesh(n, side).unwrap()).unwrap()
    }

    #[test]
    fn single_tet_mass_entries() {
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let mesh = crate::mesh::VolumeMesh::from_parts(verts, vec![[0, 1, 2, 3]]).unwrap();
        let space = CoupledSpace::new(mesh).unwrap();
        let mats = assemble(&space).unwrap();
        let m = mats.m0.to_dense();
        // Reference tet volume 1/6: diagonal V/10, off-diagonal V/20.
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 / 60.0 } else { 1.0 / 120.0 };
                assert!((m[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_total_equals_volume() {
        let space = cube_space(3, 1.0);
        let mats = assemble(&space).unwrap();
        let ones = vec![1.0; space.n_u()];
        let total: f64 = mats.m0.apply(&ones).iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        // Positive definite.
        assert!(SpdSolver::new(&mats.m0, false).is_ok());
    }

    #[test]
    fn gradient_rows_are_skew_pairs() {
        let space = cube_space(2, 1.0);
        let n_u = space.n_u();
        let mats = assemble(&space).unwrap();
        let dd = mats.d.to_dense();
        for c in 0..3 {
            for m in 0..n_u {
                for i in 0..n_u {
                    let a = dd[(v_index(c, m, n_u), i)];
                    let b = dd[(v_index(c, i, n_u), m)];
                    assert!((a + b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gradient_consistency_for_affine_fields() {
        // For affine u and psi equal to its boundary trace, the flux
        // moment Du - C1 psi is exactly M1 times the constant gradient.
        let space = cube_space(3, 1.0);
        let n_u = space.n_u();
        let mats = assemble(&space).unwrap();
        let grad = Vector3::new(2.0, -1.0, 0.5);
        let u: Vec<f64> = space
            .volume
            .vertices
            .iter()
            .map(|p| grad.dot(&p.coords) + 0.7)
            .collect();
        let psi = space.boundary_trace(&u);
        let mut rhs = mats.d.apply(&u);
        let c1psi = mats.c1.apply(&psi);
        for i in 0..rhs.len() {
            rhs[i] -= c1psi[i];
        }
        let solver = SpdSolver::new(&mats.m0, false).unwrap();
        for c in 0..3 {
            let g = solver.solve(&rhs[c * n_u..(c + 1) * n_u]);
            for &gi in &g {
                assert!((gi - grad[c]).abs() < 1e-10, "component {c}: {gi}");
            }
        }
    }

    #[test]
    fn divergence_consistency_for_constant_flux() {
        // A constant flux is divergence free, so with phi equal to its
        // negated normal trace the scalar-equation flux terms cancel
        // exactly: D^T v + C0 phi = 0.
        let space = cube_space(3, 1.0);
        let n_u = space.n_u();
        let mats = assemble(&space).unwrap();
        let cvec = Vector3::new(0.3, -1.1, 0.8);
        let mut v = vec![0.0; 3 * n_u];
        for c in 0..3 {
            for m in 0..n_u {
                v[v_index(c, m, n_u)] = cvec[c];
            }
        }
        let phi: Vec<f64> = space
            .surface
            .normals
            .iter()
            .map(|n| -cvec.dot(n))
            .collect();
        let dtv = mats.d.apply_transpose(&v);
        let c0phi = mats.c0.apply(&phi);
        for i in 0..n_u {
            assert!((dtv[i] + c0phi[i]).abs() < 1e-13, "row {i}");
        }
    }

    #[test]
    fn boundary_coupling_column_sums() {
        let space = cube_space(2, 1.0);
        let mats = assemble(&space).unwrap();
        // Each column k of C0 sums to half the triangle area.
        let dense = mats.c0.to_dense();
        for k in 0..space.n_phi() {
            let sum: f64 = (0..space.n_u()).map(|i| dense[(i, k)]).sum();
            assert!(
                (sum - space.surface.triangle_area(k) / 2.0).abs() < 1e-14,
                "column {k}"
            );
        }
    }

    #[test]
    fn trace_coupling_matches_normal_moments() {
        // Summing C1 over all vertices in one component recovers minus
        // half the outward normal moment of each boundary basis function,
        // which is sign-sensitive in both the normal and the trace map.
        let space = cube_space(2, 1.0);
        let n_u = space.n_u();
        let mats = assemble(&space).unwrap();
        let surf = &space.surface;
        for c in 0..3 {
            let mut ones_c = vec![0.0; 3 * n_u];
            for m in 0..n_u {
                ones_c[v_index(c, m, n_u)] = 1.0;
            }
            let col = mats.c1.apply_transpose(&ones_c);
            for l in 0..space.n_psi() {
                let mut expect = 0.0;
                for (k, tri) in surf.triangles.iter().enumerate() {
                    if tri.contains(&l) {
                        expect += surf.triangle_area(k) * surf.normals[k][c] / 3.0;
                    }
                }
                assert!((2.0 * col[l] + expect).abs() < 1e-13, "c={c} l={l}");
            }
        }
    }

    #[test]
    fn subdivided_quadrature_weights_and_moments() {
        let verts = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        for refine in 0..3 {
            let mut total = 0.0;
            let mut xx = 0.0;
            quad_subdivided(&verts, refine, &mut |x, _, w| {
                total += w;
                xx += w * x.x * x.x;
            });
            assert!((total - 1.0 / 6.0).abs() < 1e-14, "refine {refine}");
            // Exact second moment of x^2 over the reference tet.
            assert!((xx - 1.0 / 60.0).abs() < 1e-14, "refine {refine}");
        }
    }

    #[test]
    fn projection_reproduces_affine_data() {
        let mesh = make_cube_mesh(3, 1.0).unwrap();
        let space = CoupledSpace::new(mesh).unwrap();
        let mats = assemble(&space).unwrap();
        let f = |p: &Point3<f64>| 1.5 * p.x - 0.25 * p.y + 2.0 * p.z - 0.3;
        let b = p1_moments(&space.volume, f, 1);
        let solver = SpdSolver::new(&mats.m0, false).unwrap();
        let proj = solver.solve(&b);
        for (i, v) in space.volume.vertices.iter().enumerate() {
            assert!((proj[i] - f(v)).abs() < 1e-11);
        }
    }

    #[test]
    fn smooth_bump_integral_converges_with_refinement() {
        let mesh = make_cube_mesh(2, 1.0).unwrap();
        let f = |p: &Point3<f64>| {
            let r2 = (p - Point3::new(0.5, 0.5, 0.5)).norm_squared();
            (-r2 / 0.04).exp()
        };
        let coarse = integrate(&mesh, f, 0);
        let fine = integrate(&mesh, f, 3);
        let finer = integrate(&mesh, f, 4);
        assert!((fine - finer).abs() < (coarse - finer).abs() * 0.1);
        // Product of one-dimensional Gaussian integrals over the cube.
        assert!((finer - 0.044_492_261_088_252_646).abs() < 1e-6);
    }
}
