//! Galerkin boundary-element matrices for the Helmholtz kernel at complex
//! frequency, plus off-surface layer-potential evaluation.
//!
//! The four operators act between piecewise-constant densities (one per
//! triangle) and piecewise-linear densities (one per surface vertex):
//! the single layer form V, the double layer form K, its dual KT, and the
//! hypersingular form W realized through the integration-by-parts identity
//! with surface curls, so only weakly singular kernels are ever evaluated.
//! Each unordered triangle pair is visited once with a shared node set and
//! scattered to both orientations, which makes V and W exactly symmetric
//! and KT exactly the transpose of K by construction; independent
//! quadrature routes are compared in the tests.

use nalgebra::{DMatrix, Point3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;
use crate::quadrature::{
    coincident_nodes, edge_nodes, far_nodes, gauss_legendre, vertex_nodes, PairNode,
    QuadratureConfig,
};

/// Dense boundary operator blocks at one complex frequency.
#[derive(Debug, Clone)]
pub struct BoundaryOps {
    /// Single layer, piecewise-constant test and trial.
    pub v: DMatrix<Complex64>,
    /// Double layer, piecewise-constant test, piecewise-linear trial.
    pub k: DMatrix<Complex64>,
    /// Dual double layer, transpose block of k.
    pub kt: DMatrix<Complex64>,
    /// Hypersingular form, piecewise-linear test and trial.
    pub w: DMatrix<Complex64>,
}

/// Helmholtz kernel e^{-s r} / (4 pi r).
pub fn helmholtz_kernel(s: Complex64, x: &Point3<f64>, y: &Point3<f64>) -> Result<Complex64> {
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::InvalidParameter(
            "kernel evaluated at coincident points".into(),
        ));
    }
    Ok((-s * r).exp() / (4.0 * std::f64::consts::PI * r))
}

/// Radial factor of the kernel gradient: grad_y G = g1(r) (y - x) and
/// grad_x G = g1(r) (x - y), with g1 = -(1 + s r) e^{-s r} / (4 pi r^3).
fn grad_factor(s: Complex64, r: f64) -> Complex64 {
    -(Complex64::new(1.0, 0.0) + s * r) * (-s * r).exp()
        / (4.0 * std::f64::consts::PI * r * r * r)
}

struct TriGeo {
    p: [Point3<f64>; 3],
    verts: [usize; 3],
    area: f64,
    normal: Vector3<f64>,
    centroid: Point3<f64>,
    diam: f64,
    curls: [Vector3<f64>; 3],
}

fn tri_geometry(surf: &SurfaceMesh) -> Vec<TriGeo> {
    (0..surf.triangles.len())
        .map(|t| {
            let tri = surf.triangles[t];
            let p = [
                surf.vertices[tri[0]],
                surf.vertices[tri[1]],
                surf.vertices[tri[2]],
            ];
            let diam = (p[0] - p[1])
                .norm()
                .max((p[1] - p[2]).norm())
                .max((p[2] - p[0]).norm());
            let area = surf.triangle_area(t);
            TriGeo {
                p,
                verts: tri,
                area,
                normal: surf.normals[t],
                centroid: surf.centroid(t),
                diam,
                curls: surface_curls(&p, area),
            }
        })
        .collect()
}

/// Surface curl of the three P1 basis functions on a flat triangle: the
/// negated opposite edge over twice the area. The sign depends on the
/// vertex orientation, so these are computed once in the stored order and
/// only reindexed when a pair rule permutes the vertices.
fn surface_curls(p: &[Point3<f64>; 3], area: f64) -> [Vector3<f64>; 3] {
    let mut c = [Vector3::zeros(); 3];
    for i in 0..3 {
        let e = p[(i + 2) % 3] - p[(i + 1) % 3];
        c[i] = -e / (2.0 * area);
    }
    c
}

enum PairKind {
    Separated(bool),
    Vertex,
    Edge,
    Coincident,
}

/// Classifies a pair and picks vertex orderings that put shared vertices
/// first, as the singular rules require: shared edge at local (0,1) of
/// both triangles in the same global order, shared vertex at local 0.
fn arrange(ta: &TriGeo, tb: &TriGeo, near_ratio: f64) -> (PairKind, [usize; 3], [usize; 3]) {
    let ident = [0usize, 1, 2];
    let shared: Vec<(usize, usize)> = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .filter(|&(i, j)| ta.verts[i] == tb.verts[j])
        .collect();
    match shared.len() {
        3 => (PairKind::Coincident, ident, ident),
        2 => {
            let (a0, b0) = shared[0];
            let (a1, b1) = shared[1];
            // Rotate triangle a so the shared pair sits at (0, 1) in a's
            // cyclic order; triangle b then follows a's global order.
            let (pa, pb) = if (a0 + 1) % 3 == a1 {
                ([a0, a1, (a1 + 1) % 3], [b0, b1, 3 - b0 - b1])
            } else {
                ([a1, a0, (a0 + 1) % 3], [b1, b0, 3 - b0 - b1])
            };
            (PairKind::Edge, pa, pb)
        }
        1 => {
            let (a0, b0) = shared[0];
            (
                PairKind::Vertex,
                [a0, (a0 + 1) % 3, (a0 + 2) % 3],
                [b0, (b0 + 1) % 3, (b0 + 2) % 3],
            )
        }
        _ => {
            let near = (ta.centroid - tb.centroid).norm() < near_ratio * ta.diam.max(tb.diam);
            (PairKind::Separated(near), ident, ident)
        }
    }
}

/// Raw pair integrals from a shared node set with x on triangle a and y on
/// triangle b, in the permuted local frames:
/// iv = int int G; ik[j] = int int (dG/dn_y) lam_j(y);
/// ikt[i] = int int (dG/dn_x) lam_i(x); iw[i][j] = int int G lam_i lam_j.
#[allow(clippy::type_complexity)]
pub(crate) fn pair_integrals(
    s: Complex64,
    pa: &[Point3<f64>; 3],
    pb: &[Point3<f64>; 3],
    na: &Vector3<f64>,
    nb: &Vector3<f64>,
    nodes: &[PairNode],
) -> (Complex64, [Complex64; 3], [Complex64; 3], [[Complex64; 3]; 3]) {
    let zero = Complex64::new(0.0, 0.0);
    let mut iv = zero;
    let mut ik = [zero; 3];
    let mut ikt = [zero; 3];
    let mut iw = [[zero; 3]; 3];
    for n in nodes {
        let x = Point3::from(
            pa[0].coords * n.bx[0] + pa[1].coords * n.bx[1] + pa[2].coords * n.bx[2],
        );
        let y = Point3::from(
            pb[0].coords * n.by[0] + pb[1].coords * n.by[1] + pb[2].coords * n.by[2],
        );
        let rv = y - x;
        let r = rv.norm();
        let g = (-s * r).exp() / (4.0 * std::f64::consts::PI * r);
        let g1 = grad_factor(s, r);
        let wg = n.w * g;
        iv += wg;
        let kfac = n.w * g1 * nb.dot(&rv);
        let ktfac = -n.w * g1 * na.dot(&rv);
        for j in 0..3 {
            ik[j] += kfac * n.by[j];
            ikt[j] += ktfac * n.bx[j];
        }
        for i in 0..3 {
            for j in 0..3 {
                iw[i][j] += wg * n.bx[i] * n.by[j];
            }
        }
    }
    (iv, ik, ikt, iw)
}

struct RuleSet {
    far: Vec<PairNode>,
    near: Vec<PairNode>,
    coincident: Vec<PairNode>,
    edge: Vec<PairNode>,
    vertex: Vec<PairNode>,
}

impl RuleSet {
    fn new(q: &QuadratureConfig) -> Self {
        RuleSet {
            far: far_nodes(q.q_far),
            near: far_nodes(q.q_near),
            coincident: coincident_nodes(q.q_singular),
            edge: edge_nodes(q.q_singular),
            vertex: vertex_nodes(q.q_singular),
        }
    }
}

struct TaskOut {
    v: Vec<(usize, Complex64)>,
    k: Vec<(usize, usize, Complex64)>,
    kt: Vec<(usize, usize, Complex64)>,
    w: Vec<(usize, usize, Complex64)>,
}

/// Assembles the four boundary operator blocks at frequency s.
pub fn assemble_boundary_ops(
    s: Complex64,
    surf: &SurfaceMesh,
    q: &QuadratureConfig,
) -> Result<BoundaryOps> {
    if s.re <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "boundary operators need Re s > 0, got {s}"
        )));
    }
    q.validate()?;
    let geo = tri_geometry(surf);
    let nt = geo.len();
    let nv = surf.vertices.len();
    let rules = RuleSet::new(q);

    let tasks: Vec<TaskOut> = (0..nt)
        .into_par_iter()
        .map(|a| {
            let mut out = TaskOut {
                v: Vec::new(),
                k: Vec::new(),
                kt: Vec::new(),
                w: Vec::new(),
            };
            let ta = &geo[a];
            for b in a..nt {
                let tb = &geo[b];
                let (kind, perm_a, perm_b) = arrange(ta, tb, q.near_ratio);
                let nodes = match kind {
                    PairKind::Coincident => &rules.coincident,
                    PairKind::Edge => &rules.edge,
                    PairKind::Vertex => &rules.vertex,
                    PairKind::Separated(true) => &rules.near,
                    PairKind::Separated(false) => &rules.far,
                };
                let pa = [ta.p[perm_a[0]], ta.p[perm_a[1]], ta.p[perm_a[2]]];
                let pb = [tb.p[perm_b[0]], tb.p[perm_b[1]], tb.p[perm_b[2]]];
                let ga = [
                    ta.verts[perm_a[0]],
                    ta.verts[perm_a[1]],
                    ta.verts[perm_a[2]],
                ];
                let gb = [
                    tb.verts[perm_b[0]],
                    tb.verts[perm_b[1]],
                    tb.verts[perm_b[2]],
                ];
                let (iv, ik, ikt, iw) =
                    pair_integrals(s, &pa, &pb, &ta.normal, &tb.normal, nodes);
                let f = 4.0 * ta.area * tb.area;
                let ca = [
                    ta.curls[perm_a[0]],
                    ta.curls[perm_a[1]],
                    ta.curls[perm_a[2]],
                ];
                let cb = [
                    tb.curls[perm_b[0]],
                    tb.curls[perm_b[1]],
                    tb.curls[perm_b[2]],
                ];
                let nn = s * s * ta.normal.dot(&tb.normal);

                out.v.push((b, f * iv));
                if a == b {
                    for j in 0..3 {
                        out.k.push((a, ga[j], f * ik[j]));
                        out.kt.push((ga[j], a, f * ik[j]));
                    }
                    // Symmetrize the diagonal block so w is exactly
                    // symmetric despite summation-order differences.
                    let mut vals = [[Complex64::new(0.0, 0.0); 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            vals[i][j] = f * (ca[i].dot(&cb[j]) * iv + nn * iw[i][j]);
                        }
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            let sym = (vals[i][j] + vals[j][i]) / 2.0;
                            out.w.push((ga[i], gb[j], sym));
                        }
                    }
                } else {
                    for j in 0..3 {
                        out.k.push((a, gb[j], f * ik[j]));
                        out.kt.push((gb[j], a, f * ik[j]));
                        out.k.push((b, ga[j], f * ikt[j]));
                        out.kt.push((ga[j], b, f * ikt[j]));
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            let val = f * (ca[i].dot(&cb[j]) * iv + nn * iw[i][j]);
                            out.w.push((ga[i], gb[j], val));
                            out.w.push((gb[j], ga[i], val));
                        }
                    }
                }
            }
            out
        })
        .collect();

    let zero = Complex64::new(0.0, 0.0);
    let mut v = DMatrix::from_element(nt, nt, zero);
    let mut k = DMatrix::from_element(nt, nv, zero);
    let mut kt = DMatrix::from_element(nv, nt, zero);
    let mut w = DMatrix::from_element(nv, nv, zero);
    // Serial merge in triangle order keeps the result independent of the
    // parallel schedule.
    for (a, t) in tasks.iter().enumerate() {
        for &(b, val) in &t.v {
            v[(a, b)] = val;
            v[(b, a)] = val;
        }
        for &(i, j, val) in &t.k {
            k[(i, j)] += val;
        }
        for &(i, j, val) in &t.kt {
            kt[(i, j)] += val;
        }
        for &(i, j, val) in &t.w {
            w[(i, j)] += val;
        }
    }
    Ok(BoundaryOps { v, k, kt, w })
}

/// Nodes of a single-triangle rule on the reference simplex, weights
/// summing to 1/2; physical integrals scale by 2 * area.
fn tri_nodes(q: usize) -> Vec<([f64; 3], f64)> {
    let (xs, ws) = gauss_legendre(q);
    let mut out = Vec::with_capacity(q * q);
    for i in 0..q {
        for j in 0..q {
            let t = [xs[i], xs[i] * xs[j]];
            out.push(([1.0 - t[0], t[0] - t[1], t[1]], ws[i] * ws[j] * xs[i]));
        }
    }
    out
}

/// Exact distance from a point to a triangle.
pub(crate) fn point_triangle_distance(p: &Point3<f64>, tri: &[Point3<f64>; 3]) -> f64 {
    let ab = tri[1] - tri[0];
    let ac = tri[2] - tri[0];
    let ap = p - tri[0];
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - tri[1];
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (ap - ab * t).norm();
    }
    let cp = p - tri[2];
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (ap - ac * t).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (tri[2] - tri[1]) * t).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm()
}

/// Rows of the single and double layer potentials at off-surface points:
/// s_rows maps piecewise-constant densities to point values, d_rows maps
/// piecewise-linear densities.
#[derive(Debug, Clone)]
pub struct PotentialRows {
    pub s_rows: DMatrix<Complex64>,
    pub d_rows: DMatrix<Complex64>,
}

/// Evaluates layer-potential rows; every point must be at least the
/// shortest surface edge length away from the surface.
pub fn potential_matrices(
    s: Complex64,
    points: &[Point3<f64>],
    surf: &SurfaceMesh,
    q: usize,
) -> Result<PotentialRows> {
    if q < 2 {
        return Err(Error::InvalidParameter(
            "potential quadrature order must be at least 2".into(),
        ));
    }
    let geo = tri_geometry(surf);
    let (_, h_min) = surf.edge_range();
    for (pi, p) in points.iter().enumerate() {
        let dist = geo
            .iter()
            .map(|t| point_triangle_distance(p, &t.p))
            .fold(f64::INFINITY, f64::min);
        if dist < h_min {
            return Err(Error::Proximity(format!(
                "evaluation point {pi} is {dist:.3e} from the surface, below the mesh scale {h_min:.3e}"
            )));
        }
    }
    let nodes = tri_nodes(q);
    let zero = Complex64::new(0.0, 0.0);
    let mut s_rows = DMatrix::from_element(points.len(), geo.len(), zero);
    let mut d_rows = DMatrix::from_element(points.len(), surf.vertices.len(), zero);
    for (pi, p) in points.iter().enumerate() {
        for (b, tb) in geo.iter().enumerate() {
            let mut acc_s = zero;
            let mut acc_d = [zero; 3];
            for (bary, w) in &nodes {
                let y = Point3::from(
                    tb.p[0].coords * bary[0] + tb.p[1].coords * bary[1] + tb.p[2].coords * bary[2],
                );
                let rv = y - p;
                let r = rv.norm();
                let g = (-s * r).exp() / (4.0 * std::f64::consts::PI * r);
                acc_s += *w * g;
                let dfac = *w * grad_factor(s, r) * tb.normal.dot(&rv);
                for j in 0..3 {
                    acc_d[j] += dfac * bary[j];
                }
            }
            let f = 2.0 * tb.area;
            s_rows[(pi, b)] += f * acc_s;
            for j in 0..3 {
                d_rows[(pi, tb.verts[j])] += f * acc_d[j];
            }
        }
    }
    Ok(PotentialRows { s_rows, d_rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{extract_boundary, make_cube_mesh, make_icosphere};

    const PI: f64 = std::f64::consts::PI;

    fn near_zero_s() -> Complex64 {
        Complex64::new(1e-8, 0.0)
    }

    #[test]
    fn kernel_reference_values() {
        let o = Point3::origin();
        let ex = Point3::new(1.0, 0.0, 0.0);
        let v = helmholtz_kernel(Complex64::new(0.0, 0.0), &o, &ex).unwrap();
        assert!((v.re - 1.0 / (4.0 * PI)).abs() < 1e-15 && v.im == 0.0);
        let v = helmholtz_kernel(Complex64::new(1.0, 0.0), &o, &ex).unwrap();
        assert!((v.re - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-15);
        let v = helmholtz_kernel(Complex64::new(0.0, 1.0), &o, &Point3::new(PI, 0.0, 0.0))
            .unwrap();
        assert!((v.re + 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        assert!(v.im.abs() < 1e-15);
        assert!(helmholtz_kernel(Complex64::new(1.0, 0.0), &o, &o).is_err());
    }

    #[test]
    fn rejects_nonpositive_frequency() {
        let surf = make_icosphere(0, 1.0).unwrap();
        let q = QuadratureConfig::default();
        assert!(assemble_boundary_ops(Complex64::new(0.0, 1.0), &surf, &q).is_err());
        assert!(assemble_boundary_ops(Complex64::new(-1.0, 0.0), &surf, &q).is_err());
    }

    #[test]
    fn operators_have_exact_block_symmetry() {
        let surf = make_icosphere(1, 1.0).unwrap();
        let q = QuadratureConfig::default();
        let ops = assemble_boundary_ops(Complex64::new(1.0, 0.7), &surf, &q).unwrap();
        let vd = (&ops.v - ops.v.transpose()).map(|c| c.norm()).max();
        assert!(vd == 0.0, "v asymmetry {vd}");
        let wd = (&ops.w - ops.w.transpose()).map(|c| c.norm()).max();
        assert!(wd == 0.0, "w asymmetry {wd}");
        let kd = (&ops.kt - ops.k.transpose()).map(|c| c.norm()).max();
        assert!(kd == 0.0, "kt/k mismatch {kd}");
    }

    #[test]
    fn dual_routes_agree_for_separated_pair() {
        // The same double-layer entry computed from both pair
        // orientations with independent node sets.
        let surf = make_icosphere(1, 1.0).unwrap();
        let geo = tri_geometry(&surf);
        // Triangles 0 and 40 share no vertices on this mesh.
        let (a, b) = (0usize, 40usize);
        assert!(geo[a].verts.iter().all(|v| !geo[b].verts.contains(v)));
        let s = Complex64::new(1.0, 0.5);
        let nodes = far_nodes(10);
        let (_, _, ikt_ab, _) =
            pair_integrals(s, &geo[a].p, &geo[b].p, &geo[a].normal, &geo[b].normal, &nodes);
        let (_, ik_ba, _, _) =
            pair_integrals(s, &geo[b].p, &geo[a].p, &geo[b].normal, &geo[a].normal, &nodes);
        for j in 0..3 {
            let diff = (ikt_ab[j] - ik_ba[j]).norm();
            assert!(diff < 1e-10 * ik_ba[j].norm().max(1e-12), "entry {j}");
        }
    }

    #[test]
    fn single_layer_sphere_oracle() {
        // Uniform unit density on the unit sphere: the static single layer
        // equals 1 on the surface, so the bilinear form approaches the
        // sphere area 4 pi under refinement, and the mass-normalized
        // Rayleigh quotient approaches 1.
        let q = QuadratureConfig::default();
        let mut errs = Vec::new();
        for level in [1usize, 2] {
            let surf = make_icosphere(level, 1.0).unwrap();
            let ops = assemble_boundary_ops(near_zero_s(), &surf, &q).unwrap();
            let nt = surf.triangles.len();
            let mut form = 0.0;
            for a in 0..nt {
                for b in 0..nt {
                    form += ops.v[(a, b)].re;
                }
            }
            let rayleigh = form / surf.total_area();
            assert!(
                (rayleigh - 1.0).abs() < 0.05,
                "level {level} rayleigh {rayleigh}"
            );
            errs.push((form - 4.0 * PI).abs() / (4.0 * PI));
        }
        assert!(errs[1] < errs[0], "errors {errs:?}");
        assert!(errs[1] < 0.05, "level 2 error {}", errs[1]);
    }

    #[test]
    fn double_layer_row_sums_on_cube() {
        // The static double layer of the constant density equals -1/2
        // almost everywhere on the boundary of a polyhedron, so each row
        // of K applied to the constant-one vertex vector gives minus half
        // the triangle area. On the cube all touching pairs are coplanar
        // and contribute zero, isolating the separated-pair quadrature.
        let vol = make_cube_mesh(2, 1.0).unwrap();
        let (surf, _) = extract_boundary(&vol).unwrap();
        let q = QuadratureConfig::default();
        let ops = assemble_boundary_ops(near_zero_s(), &surf, &q).unwrap();
        let ones = DMatrix::from_element(surf.vertices.len(), 1, Complex64::new(1.0, 0.0));
        let rows = &ops.k * &ones;
        for a in 0..surf.triangles.len() {
            let expect = -surf.triangle_area(a) / 2.0;
            let got = rows[(a, 0)].re;
            assert!(
                (got - expect).abs() < 2e-3 * expect.abs(),
                "row {a}: {got} vs {expect}"
            );
            assert!(rows[(a, 0)].im.abs() < 1e-12);
        }
    }

    #[test]
    fn double_layer_row_sums_on_sphere() {
        // Same identity on the icosphere, now exercising the edge- and
        // vertex-adjacent singular rules.
        let surf = make_icosphere(1, 1.0).unwrap();
        let q = QuadratureConfig::default();
        let ops = assemble_boundary_ops(near_zero_s(), &surf, &q).unwrap();
        let ones = DMatrix::from_element(surf.vertices.len(), 1, Complex64::new(1.0, 0.0));
        let rows = &ops.k * &ones;
        let mut total = 0.0;
        for a in 0..surf.triangles.len() {
            total += rows[(a, 0)].re;
        }
        // Summed over all triangles the identity gives -area/2.
        let expect = -surf.total_area() / 2.0;
        assert!(
            (total - expect).abs() < 0.02 * expect.abs(),
            "{total} vs {expect}"
        );
    }

    #[test]
    fn hypersingular_annihilates_constants() {
        let surf = make_icosphere(1, 1.0).unwrap();
        let q = QuadratureConfig::default();
        let s = near_zero_s();
        let ops = assemble_boundary_ops(s, &surf, &q).unwrap();
        let ones = DMatrix::from_element(surf.vertices.len(), 1, Complex64::new(1.0, 0.0));
        let w1 = &ops.w * &ones;
        let scale = ops.w.map(|c| c.norm()).max();
        // The curl term vanishes identically on constants; only the s^2
        // mass-like term survives, which is tiny at near-zero frequency.
        let residual = w1.map(|c| c.norm()).max();
        assert!(residual < 1e-10 * scale.max(1.0), "residual {residual}");
    }

    #[test]
    fn hypersingular_sphere_rayleigh() {
        // On the unit sphere the static hypersingular operator maps the
        // linear coordinate function to 2/3 times itself; the Galerkin
        // Rayleigh quotient against the surface mass matrix approaches
        // that eigenvalue.
        let surf = make_icosphere(2, 1.0).unwrap();
        let q = QuadratureConfig::default();
        let ops = assemble_boundary_ops(near_zero_s(), &surf, &q).unwrap();
        let nv = surf.vertices.len();
        let z: Vec<f64> = surf.vertices.iter().map(|v| v.z).collect();
        let mut num = 0.0;
        for i in 0..nv {
            for j in 0..nv {
                num += z[i] * ops.w[(i, j)].re * z[j];
            }
        }
        // P1 surface mass matrix action on the same coefficients.
        let mut den = 0.0;
        for (t, tri) in surf.triangles.iter().enumerate() {
            let area = surf.triangle_area(t);
            for a in 0..3 {
                for b in 0..3 {
                    let m = if a == b { area / 6.0 } else { area / 12.0 };
                    den += z[tri[a]] * m * z[tri[b]];
                }
            }
        }
        let rayleigh = num / den;
        assert!(
            (rayleigh - 2.0 / 3.0).abs() < 0.05,
            "rayleigh {rayleigh} vs 2/3"
        );
    }

    #[test]
    fn frequency_continuity() {
        let surf = make_icosphere(0, 1.0).unwrap();
        let q = QuadratureConfig::default();
        let base = assemble_boundary_ops(Complex64::new(1.0, 0.0), &surf, &q).unwrap();
        let d1 = assemble_boundary_ops(Complex64::new(1.001, 0.0), &surf, &q).unwrap();
        let d2 = assemble_boundary_ops(Complex64::new(1.002, 0.0), &surf, &q).unwrap();
        let n1 = (&d1.v - &base.v).map(|c| c.norm()).max();
        let n2 = (&d2.v - &base.v).map(|c| c.norm()).max();
        assert!(n1 > 0.0);
        let ratio = n2 / n1;
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn potentials_match_sphere_identities() {
        let surf = make_icosphere(2, 1.0).unwrap();
        let s = near_zero_s();
        let pts = [Point3::new(0.0, 0.0, 2.0), Point3::new(0.1, 0.05, 0.2)];
        let rows = potential_matrices(s, &pts, &surf, 3).unwrap();
        // Uniform density: exterior static single layer = 1/|x|.
        let sval: Complex64 = (0..surf.triangles.len()).map(|b| rows.s_rows[(0, b)]).sum();
        assert!((sval.re - 0.5).abs() < 0.01, "single layer {sval}");
        // Constant double layer: 0 outside, -1 inside.
        let dout: Complex64 = (0..surf.vertices.len()).map(|l| rows.d_rows[(0, l)]).sum();
        let din: Complex64 = (0..surf.vertices.len()).map(|l| rows.d_rows[(1, l)]).sum();
        assert!(dout.norm() < 0.01, "exterior double layer {dout}");
        assert!((din.re + 1.0).abs() < 0.01, "interior double layer {din}");
    }

    #[test]
    fn potential_proximity_guard() {
        let surf = make_icosphere(1, 1.0).unwrap();
        let s = Complex64::new(1.0, 0.0);
        let near = [Point3::new(0.0, 0.0, 1.0001)];
        match potential_matrices(s, &near, &surf, 3) {
            Err(Error::Proximity(_)) => {}
            other => panic!("expected proximity error, got {other:?}"),
        }
    }

    #[test]
    fn point_triangle_distance_cases() {
        let tri = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        // Above the interior, beyond a vertex, beside an edge.
        assert!((point_triangle_distance(&Point3::new(0.2, 0.2, 0.5), &tri) - 0.5).abs() < 1e-14);
        assert!(
            (point_triangle_distance(&Point3::new(2.0, 0.0, 0.0), &tri) - 1.0).abs() < 1e-14
        );
        assert!(
            (point_triangle_distance(&Point3::new(0.5, -1.0, 0.0), &tri) - 1.0).abs() < 1e-14
        );
        assert!(point_triangle_distance(&Point3::new(0.2, 0.2, 0.0), &tri) < 1e-14);
    }
}
