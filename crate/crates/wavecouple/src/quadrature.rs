//! Quadrature rules for double integrals over triangle pairs.
//!
//! All rules produce nodes on the reference simplex T = {0 <= x2 <= x1 <= 1}
//! (area 1/2) for each triangle, with weights normalized so the total over
//! a pair is |T|^2 = 1/4. Physical integrals pick up the factor
//! 4 * area_a * area_b. Separated pairs use a tensorized Gauss rule with a
//! Duffy collapse; pairs sharing a vertex, an edge, or the whole triangle
//! use relative-coordinate transforms that cancel the kernel singularity,
//! so weakly singular kernels become smooth integrands on [0,1]^4.

use crate::error::{Error, Result};

/// Quadrature orders and the near-field switch.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Gauss order per dimension for well-separated pairs.
    pub q_far: usize,
    /// Gauss order for close but non-touching pairs.
    pub q_near: usize,
    /// Gauss order for touching pairs (vertex, edge, coincident).
    pub q_singular: usize,
    /// Pairs closer than this multiple of the larger diameter count as near.
    pub near_ratio: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            q_far: 3,
            q_near: 4,
            q_singular: 4,
            near_ratio: 2.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q_far < 2 || self.q_near < 2 || self.q_singular < 2 {
            return Err(Error::InvalidParameter(
                "quadrature orders must be at least 2".into(),
            ));
        }
        if !(self.near_ratio >= 0.0) {
            return Err(Error::InvalidParameter(
                "near-field ratio must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One node of a triangle-pair rule: barycentric coordinates on each
/// triangle plus the reference-measure weight.
#[derive(Debug, Clone, Copy)]
pub struct PairNode {
    pub bx: [f64; 3],
    pub by: [f64; 3],
    pub w: f64,
}

/// Gauss-Legendre nodes and weights on [0,1].
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..q {
        // Chebyshev initial guess on [-1,1], then Newton on P_q.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(q, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(q, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[q - 1 - i] = (x + 1.0) / 2.0;
        weights[q - 1 - i] = w / 2.0;
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn bary(t: [f64; 2]) -> [f64; 3] {
    [1.0 - t[0], t[0] - t[1], t[1]]
}

/// Tensor rule for separated pairs: Duffy collapse (u, uv) on each
/// triangle, q^4 nodes total.
pub fn far_nodes(q: usize) -> Vec<PairNode> {
    let (xs, ws) = gauss_legendre(q);
    let mut tri = Vec::with_capacity(q * q);
    for i in 0..q {
        for j in 0..q {
            // x1 = u, x2 = u v, Jacobian u.
            tri.push(([xs[i], xs[i] * xs[j]], ws[i] * ws[j] * xs[i]));
        }
    }
    let mut out = Vec::with_capacity(tri.len() * tri.len());
    for &(tx, wx) in &tri {
        for &(ty, wy) in &tri {
            out.push(PairNode {
                bx: bary(tx),
                by: bary(ty),
                w: wx * wy,
            });
        }
    }
    out
}

type RegionMap = fn(f64, f64, f64, f64) -> ([f64; 2], [f64; 2], f64);

fn tensor4(q: usize, regions: &[RegionMap]) -> Vec<PairNode> {
    let (xs, ws) = gauss_legendre(q);
    let mut out = Vec::with_capacity(regions.len() * q * q * q * q);
    for region in regions {
        for (&xi, &wxi) in xs.iter().zip(&ws) {
            for (&e1, &w1) in xs.iter().zip(&ws) {
                for (&e2, &w2) in xs.iter().zip(&ws) {
                    for (&e3, &w3) in xs.iter().zip(&ws) {
                        let (tx, ty, jac) = region(xi, e1, e2, e3);
                        out.push(PairNode {
                            bx: bary(tx),
                            by: bary(ty),
                            w: wxi * w1 * w2 * w3 * jac,
                        });
                    }
                }
            }
        }
    }
    out
}

fn co_r1(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    (
        [xi, xi * (1.0 - e1 + e1 * e2)],
        [xi * (1.0 - e1 * e2 * e3), xi * (1.0 - e1)],
        xi * xi * xi * e1 * e1 * e2,
    )
}
fn co_r2(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    let (a, b, j) = co_r1(xi, e1, e2, e3);
    (b, a, j)
}
fn co_r3(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    (
        [xi, xi * e1 * (1.0 - e2 + e2 * e3)],
        [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
        xi * xi * xi * e1 * e1 * e2,
    )
}
fn co_r4(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    let (a, b, j) = co_r3(xi, e1, e2, e3);
    (b, a, j)
}
fn co_r5(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    (
        [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)],
        [xi, xi * e1 * (1.0 - e2)],
        xi * xi * xi * e1 * e1 * e2,
    )
}
fn co_r6(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    let (a, b, j) = co_r5(xi, e1, e2, e3);
    (b, a, j)
}

fn ed_r1(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    (
        [xi, xi * e1 * e3],
        [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
        xi * xi * xi * e1 * e1,
    )
}
fn ed_r2(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    (
        [xi, xi * e1],
        [xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)],
        xi * xi * xi * e1 * e1 * e2,
    )
}
fn ed_r3(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    (
        [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
        [xi, xi * e1 * e2 * e3],
        xi * xi * xi * e1 * e1 * e2,
    )
}
fn ed_r4(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    (
        [xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)],
        [xi, xi * e1],
        xi * xi * xi * e1 * e1 * e2,
    )
}
fn ed_r5(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    (
        [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)],
        [xi, xi * e1 * e2],
        xi * xi * xi * e1 * e1 * e2,
    )
}

fn vx_r1(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    ([xi, xi * e1], [xi * e2, xi * e2 * e3], xi * xi * xi * e2)
}
fn vx_r2(xi: f64, e1: f64, e2: f64, e3: f64) -> ([f64; 2], [f64; 2], f64) {
    let (a, b, j) = vx_r1(xi, e1, e2, e3);
    (b, a, j)
}

pub(crate) const COINCIDENT_REGIONS: [RegionMap; 6] = [co_r1, co_r2, co_r3, co_r4, co_r5, co_r6];
pub(crate) const EDGE_REGIONS: [RegionMap; 5] = [ed_r1, ed_r2, ed_r3, ed_r4, ed_r5];
pub(crate) const VERTEX_REGIONS: [RegionMap; 2] = [vx_r1, vx_r2];

/// Rule for a triangle paired with itself (6 regions).
pub fn coincident_nodes(q: usize) -> Vec<PairNode> {
    tensor4(q, &COINCIDENT_REGIONS)
}

/// Rule for two triangles sharing the edge (v0, v1), in the same order on
/// both (5 regions).
pub fn edge_nodes(q: usize) -> Vec<PairNode> {
    tensor4(q, &EDGE_REGIONS)
}

/// Rule for two triangles sharing only the vertex v0 (2 regions).
pub fn vertex_nodes(q: usize) -> Vec<PairNode> {
    tensor4(q, &VERTEX_REGIONS)
}
