//! Tetrahedral volume meshes, boundary surfaces, and the trace map between
//! them.
//!
//! Volume meshes are P1-ready: straight tets with positive orientation and a
//! conforming, closed boundary. Surface meshes carry per-triangle outward
//! unit normals. The `wcmesh` plain-text format round-trips volume meshes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

/// One boundary face of a volume mesh, oriented outward.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    /// Volume vertex indices, ordered so the right-hand normal points out.
    pub verts: [usize; 3],
    /// Owning tet.
    pub tet: usize,
    /// Local face index within the tet (0..4, face i is opposite vertex i).
    pub local_face: usize,
}

/// Structured-grid metadata kept by generated cube meshes for O(1) point
/// location.
#[derive(Debug, Clone, Copy)]
pub struct StructuredGrid {
    pub n: usize,
    pub side: f64,
    pub origin: Point3<f64>,
}

/// Conforming tetrahedral mesh of a bounded domain.
#[derive(Debug, Clone)]
pub struct VolumeMesh {
    pub vertices: Vec<Point3<f64>>,
    pub tets: Vec<[usize; 4]>,
    /// Outward-oriented faces of the domain boundary.
    pub boundary_faces: Vec<BoundaryFace>,
    grid: Option<StructuredGrid>,
}

/// Triangulated closed surface with outward unit normals.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Per-triangle outward unit normal.
    pub normals: Vec<Vector3<f64>>,
}

/// Links a boundary surface back to its parent volume mesh.
#[derive(Debug, Clone)]
pub struct TraceMap {
    /// Surface vertex index -> volume vertex index.
    pub vertex_trace: Vec<usize>,
    /// Surface triangle index -> (tet, local face) in the volume mesh.
    pub face_trace: Vec<(usize, usize)>,
}

/// Size and shape summary of a volume mesh.
#[derive(Debug, Clone, Copy)]
pub struct MeshStats {
    /// Longest edge.
    pub h_max: f64,
    /// Shortest edge.
    pub h_min: f64,
    /// Worst tet shape measure, 1 for equilateral, -> 0 for slivers.
    pub quality: f64,
}

/// Local faces of tet (v0,v1,v2,v3), each oriented outward for a positively
/// oriented tet; face i is opposite vertex i.
const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

fn tet_volume(p: &[Point3<f64>], t: &[usize; 4]) -> f64 {
    let e1 = p[t[1]] - p[t[0]];
    let e2 = p[t[2]] - p[t[0]];
    let e3 = p[t[3]] - p[t[0]];
    e1.cross(&e2).dot(&e3) / 6.0
}

impl VolumeMesh {
    /// Builds a mesh from raw arrays, validating orientation, conformity,
    /// and boundary closedness.
    pub fn from_parts(vertices: Vec<Point3<f64>>, tets: Vec<[usize; 4]>) -> Result<Self> {
        Self::build(vertices, tets, None)
    }

    fn build(
        vertices: Vec<Point3<f64>>,
        tets: Vec<[usize; 4]>,
        grid: Option<StructuredGrid>,
    ) -> Result<Self> {
        if vertices.is_empty() || tets.is_empty() {
            return Err(Error::MeshIntegrity("empty mesh".into()));
        }
        for (i, t) in tets.iter().enumerate() {
            for &v in t {
                if v >= vertices.len() {
                    return Err(Error::MeshIntegrity(format!(
                        "tet {i} references vertex {v} out of range"
                    )));
                }
            }
        }
        let h = mesh_scale(&vertices);
        for (i, t) in tets.iter().enumerate() {
            let vol = tet_volume(&vertices, t);
            if vol <= 1e-14 * h * h * h {
                return Err(Error::MeshIntegrity(format!(
                    "tet {i} has nonpositive volume {vol:.3e}"
                )));
            }
        }

        // Face incidence: interior faces belong to exactly two tets, boundary
        // faces to one.
        let mut incidence: BTreeMap<[usize; 3], Vec<(usize, usize)>> = BTreeMap::new();
        for (ti, t) in tets.iter().enumerate() {
            for (fi, f) in TET_FACES.iter().enumerate() {
                let mut key = [t[f[0]], t[f[1]], t[f[2]]];
                key.sort_unstable();
                incidence.entry(key).or_default().push((ti, fi));
            }
        }
        let mut boundary_faces = Vec::new();
        for (key, owners) in &incidence {
            match owners.len() {
                1 => {
                    let (ti, fi) = owners[0];
                    let t = &tets[ti];
                    let f = &TET_FACES[fi];
                    boundary_faces.push(BoundaryFace {
                        verts: [t[f[0]], t[f[1]], t[f[2]]],
                        tet: ti,
                        local_face: fi,
                    });
                }
                2 => {}
                n => {
                    return Err(Error::MeshIntegrity(format!(
                        "face {key:?} shared by {n} tets"
                    )))
                }
            }
        }
        // Iteration over the BTreeMap makes the boundary face order
        // deterministic (sorted by vertex triple).

        // The boundary must be a closed oriented manifold: every directed
        // edge appears exactly once.
        let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for bf in &boundary_faces {
            let v = bf.verts;
            for e in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                *edges.entry(e).or_insert(0) += 1;
            }
        }
        for (&(a, b), &cnt) in &edges {
            if cnt != 1 || edges.get(&(b, a)) != Some(&1) {
                return Err(Error::MeshIntegrity(format!(
                    "boundary is not a closed oriented manifold at edge ({a},{b})"
                )));
            }
        }

        Ok(VolumeMesh {
            vertices,
            tets,
            boundary_faces,
            grid,
        })
    }

    pub fn grid(&self) -> Option<StructuredGrid> {
        self.grid
    }

    /// Total meshed volume.
    pub fn volume(&self) -> f64 {
        self.tets.iter().map(|t| tet_volume(&self.vertices, t)).sum()
    }

    pub fn tet_volume(&self, i: usize) -> f64 {
        tet_volume(&self.vertices, &self.tets[i])
    }

    /// Locates the tet containing `p` and its barycentric coordinates.
    /// Points within `tol` of a face are accepted.
    pub fn locate(&self, p: &Point3<f64>, tol: f64) -> Option<(usize, [f64; 4])> {
        if let Some(g) = self.grid {
            let cell = |x: f64, o: f64| -> usize {
                let t = ((x - o) / g.side * g.n as f64).floor() as i64;
                t.clamp(0, g.n as i64 - 1) as usize
            };
            let (i, j, k) = (cell(p.x, g.origin.x), cell(p.y, g.origin.y), cell(p.z, g.origin.z));
            let base = 6 * (i + g.n * (j + g.n * k));
            for ti in base..base + 6 {
                if let Some(b) = self.barycentric(ti, p, tol) {
                    return Some((ti, b));
                }
            }
            return None;
        }
        for ti in 0..self.tets.len() {
            if let Some(b) = self.barycentric(ti, p, tol) {
                return Some((ti, b));
            }
        }
        None
    }

    fn barycentric(&self, ti: usize, p: &Point3<f64>, tol: f64) -> Option<[f64; 4]> {
        let t = &self.tets[ti];
        let v0 = self.vertices[t[0]];
        let m = Matrix3::from_columns(&[
            self.vertices[t[1]] - v0,
            self.vertices[t[2]] - v0,
            self.vertices[t[3]] - v0,
        ]);
        let inv = m.try_inverse()?;
        let c = inv * (p - v0);
        let b = [1.0 - c.x - c.y - c.z, c.x, c.y, c.z];
        if b.iter().all(|&x| x >= -tol) {
            Some(b)
        } else {
            None
        }
    }

    /// Evaluates a P1 nodal field at a point. Returns None outside the mesh.
    pub fn eval_p1(&self, coeffs: &[f64], p: &Point3<f64>) -> Option<f64> {
        let (ti, b) = self.locate(p, 1e-10)?;
        let t = &self.tets[ti];
        Some((0..4).map(|i| b[i] * coeffs[t[i]]).sum())
    }
}

fn mesh_scale(vertices: &[Point3<f64>]) -> f64 {
    let mut lo = vertices[0];
    let mut hi = vertices[0];
    for v in vertices {
        lo = Point3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
        hi = Point3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
    }
    (hi - lo).norm().max(1e-300)
}

/// Meshes the cube [0,side]^3 with n subdivisions per axis, six tets per
/// cell sharing the cell diagonal; diagonals line up across cells so the
/// mesh conforms.
pub fn make_cube_mesh(n: usize, side: f64) -> Result<VolumeMesh> {
    make_cube_mesh_at(n, side, Point3::origin())
}

/// Same as [`make_cube_mesh`] but with the cube anchored at `origin`.
pub fn make_cube_mesh_at(n: usize, side: f64, origin: Point3<f64>) -> Result<VolumeMesh> {
    if n == 0 {
        return Err(Error::InvalidParameter("cube mesh needs n >= 1".into()));
    }
    if !(side > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cube side must be positive, got {side}"
        )));
    }
    let np = n + 1;
    let h = side / n as f64;
    let mut vertices = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                vertices.push(Point3::new(
                    origin.x + i as f64 * h,
                    origin.y + j as f64 * h,
                    origin.z + k as f64 * h,
                ));
            }
        }
    }
    // Vertices are numbered x-fastest, so index = i + np*(j + np*k).
    let idx = |i: usize, j: usize, k: usize| i + np * (j + np * k);
    // Cell corners in bit order (dx, dy, dz); the six tets share the 0-7
    // diagonal, all positively oriented.
    const CELL_TETS: [[usize; 4]; 6] = [
        [0, 1, 3, 7],
        [0, 3, 2, 7],
        [0, 2, 6, 7],
        [0, 6, 4, 7],
        [0, 4, 5, 7],
        [0, 5, 1, 7],
    ];
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let c = [
                    idx(i, j, k),
                    idx(i + 1, j, k),
                    idx(i, j + 1, k),
                    idx(i + 1, j + 1, k),
                    idx(i, j, k + 1),
                    idx(i + 1, j, k + 1),
                    idx(i, j + 1, k + 1),
                    idx(i + 1, j + 1, k + 1),
                ];
                for t in &CELL_TETS {
                    tets.push([c[t[0]], c[t[1]], c[t[2]], c[t[3]]]);
                }
            }
        }
    }
    VolumeMesh::build(
        vertices,
        tets,
        Some(StructuredGrid {
            n,
            side,
            origin,
        }),
    )
}

/// Triangulated sphere: icosahedron refined `level` times by edge midpoint
/// subdivision, vertices projected to radius.
pub fn make_icosphere(level: usize, radius: f64) -> Result<SurfaceMesh> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "icosphere radius must be positive, got {radius}"
        )));
    }
    if level > 7 {
        return Err(Error::InvalidParameter(format!(
            "icosphere level {level} exceeds the supported maximum of 7"
        )));
    }
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let mut vertices: Vec<Point3<f64>> = raw
        .iter()
        .map(|&(x, y, z)| {
            let v = Vector3::new(x, y, z).normalize() * radius;
            Point3::from(v)
        })
        .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = cache.get(&key) {
                return m;
            }
            let mid = Point3::from(
                ((verts[a].coords + verts[b].coords) / 2.0).normalize() * radius,
            );
            verts.push(mid);
            let m = verts.len() - 1;
            cache.insert(key, m);
            m
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for t in &triangles {
            let ab = midpoint(t[0], t[1], &mut vertices);
            let bc = midpoint(t[1], t[2], &mut vertices);
            let ca = midpoint(t[2], t[0], &mut vertices);
            next.push([t[0], ab, ca]);
            next.push([t[1], bc, ab]);
            next.push([t[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    // Orient every triangle so its normal points away from the center.
    for t in &mut triangles {
        let n = triangle_normal_raw(&vertices, t);
        let c = (vertices[t[0]].coords + vertices[t[1]].coords + vertices[t[2]].coords) / 3.0;
        if n.dot(&c) < 0.0 {
            t.swap(1, 2);
        }
    }
    let normals = triangles
        .iter()
        .map(|t| triangle_normal_raw(&vertices, t).normalize())
        .collect();
    let surf = SurfaceMesh {
        vertices,
        triangles,
        normals,
    };
    surf.validate()?;
    Ok(surf)
}

fn triangle_normal_raw(v: &[Point3<f64>], t: &[usize; 3]) -> Vector3<f64> {
    (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]]))
}

impl SurfaceMesh {
    pub fn triangle_area(&self, i: usize) -> f64 {
        triangle_normal_raw(&self.vertices, &self.triangles[i]).norm() / 2.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn centroid(&self, i: usize) -> Point3<f64> {
        let t = &self.triangles[i];
        Point3::from(
            (self.vertices[t[0]].coords
                + self.vertices[t[1]].coords
                + self.vertices[t[2]].coords)
                / 3.0,
        )
    }

    /// Signed enclosed volume; positive when normals point outward.
    pub fn enclosed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0]].coords;
                let b = self.vertices[t[1]].coords;
                let c = self.vertices[t[2]].coords;
                a.cross(&b).dot(&c) / 6.0
            })
            .sum()
    }

    /// Longest and shortest edge.
    pub fn edge_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let l = (self.vertices[a] - self.vertices[b]).norm();
                lo = lo.min(l);
                hi = hi.max(l);
            }
        }
        (hi, lo)
    }

    pub fn validate(&self) -> Result<()> {
        let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in &self.triangles {
            for &v in t {
                if v >= self.vertices.len() {
                    return Err(Error::MeshIntegrity(format!(
                        "triangle references vertex {v} out of range"
                    )));
                }
            }
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edges.entry(e).or_insert(0) += 1;
            }
        }
        for (&(a, b), &cnt) in &edges {
            if cnt != 1 || edges.get(&(b, a)) != Some(&1) {
                return Err(Error::MeshIntegrity(format!(
                    "surface is not a closed oriented manifold at edge ({a},{b})"
                )));
            }
        }
        let mean_area = self.total_area() / self.triangles.len() as f64;
        for i in 0..self.triangles.len() {
            if self.triangle_area(i) < 1e-12 * mean_area {
                return Err(Error::MeshIntegrity(format!("triangle {i} is degenerate")));
            }
            let n = triangle_normal_raw(&self.vertices, &self.triangles[i]).normalize();
            if (n - self.normals[i]).norm() > 1e-10 {
                return Err(Error::MeshIntegrity(format!(
                    "triangle {i} normal disagrees with its orientation"
                )));
            }
        }
        if self.enclosed_volume() <= 0.0 {
            return Err(Error::MeshIntegrity(
                "surface normals do not point out of the enclosed volume".into(),
            ));
        }
        Ok(())
    }
}

/// Extracts the boundary of a volume mesh as a surface mesh plus the trace
/// map back into volume indexing. Surface vertices keep the volume mesh's
/// relative order.
pub fn extract_boundary(mesh: &VolumeMesh) -> Result<(SurfaceMesh, TraceMap)> {
    let mut used: Vec<usize> = mesh
        .boundary_faces
        .iter()
        .flat_map(|f| f.verts.iter().copied())
        .collect();
    used.sort_unstable();
    used.dedup();
    let mut vol_to_surf = BTreeMap::new();
    for (si, &vi) in used.iter().enumerate() {
        vol_to_surf.insert(vi, si);
    }
    let vertices: Vec<Point3<f64>> = used.iter().map(|&vi| mesh.vertices[vi]).collect();
    let mut triangles = Vec::with_capacity(mesh.boundary_faces.len());
    let mut face_trace = Vec::with_capacity(mesh.boundary_faces.len());
    for bf in &mesh.boundary_faces {
        triangles.push([
            vol_to_surf[&bf.verts[0]],
            vol_to_surf[&bf.verts[1]],
            vol_to_surf[&bf.verts[2]],
        ]);
        face_trace.push((bf.tet, bf.local_face));
    }
    let normals = triangles
        .iter()
        .map(|t| triangle_normal_raw(&vertices, t).normalize())
        .collect();
    let surf = SurfaceMesh {
        vertices,
        triangles,
        normals,
    };
    surf.validate()?;
    Ok((
        surf,
        TraceMap {
            vertex_trace: used,
            face_trace,
        },
    ))
}

impl TraceMap {
    /// Inverse vertex map: volume vertex -> surface vertex, None off the
    /// boundary.
    pub fn volume_to_surface(&self, n_volume_vertices: usize) -> Vec<Option<usize>> {
        let mut inv = vec![None; n_volume_vertices];
        for (si, &vi) in self.vertex_trace.iter().enumerate() {
            inv[vi] = Some(si);
        }
        inv
    }
}

/// Edge lengths and worst shape measure over all tets.
pub fn mesh_stats(mesh: &VolumeMesh) -> MeshStats {
    let mut h_max: f64 = 0.0;
    let mut h_min = f64::INFINITY;
    let mut quality = f64::INFINITY;
    for t in &mesh.tets {
        let p: Vec<Point3<f64>> = t.iter().map(|&v| mesh.vertices[v]).collect();
        for a in 0..4 {
            for b in a + 1..4 {
                let l = (p[a] - p[b]).norm();
                h_max = h_max.max(l);
                h_min = h_min.min(l);
            }
        }
        quality = quality.min(tet_quality(&p));
    }
    MeshStats {
        h_max,
        h_min,
        quality,
    }
}

/// Normalized radius ratio 3*r_in/R_circ, 1 for the equilateral tet.
fn tet_quality(p: &[Point3<f64>]) -> f64 {
    let vol = (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0;
    let area = |a: usize, b: usize, c: usize| (p[b] - p[a]).cross(&(p[c] - p[a])).norm() / 2.0;
    let total_area = area(1, 2, 3) + area(0, 2, 3) + area(0, 1, 3) + area(0, 1, 2);
    let r_in = 3.0 * vol / total_area;
    // Circumcenter from |x - v_i|^2 = |x - v_0|^2.
    let m = Matrix3::from_rows(&[
        (p[1] - p[0]).transpose(),
        (p[2] - p[0]).transpose(),
        (p[3] - p[0]).transpose(),
    ]);
    let rhs = Vector3::new(
        (p[1] - p[0]).norm_squared() / 2.0,
        (p[2] - p[0]).norm_squared() / 2.0,
        (p[3] - p[0]).norm_squared() / 2.0,
    );
    match m.try_inverse() {
        Some(inv) => {
            let c = inv * rhs;
            let r_circ = c.norm();
            3.0 * r_in / r_circ
        }
        None => 0.0,
    }
}

/// Writes a volume mesh in the `wcmesh` plain-text format (version 1).
pub fn save_wcmesh(mesh: &VolumeMesh, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "wcmesh 1");
    let _ = writeln!(s, "vertices {}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    let _ = writeln!(s, "tets {}", mesh.tets.len());
    for t in &mesh.tets {
        let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads a `wcmesh` file, validating structure and mesh integrity.
pub fn load_wcmesh(path: &Path) -> Result<VolumeMesh> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, &str)> {
        for (i, raw) in lines.by_ref() {
            let s = raw.trim();
            if !s.is_empty() && !s.starts_with('#') {
                return Ok((i + 1, s));
            }
        }
        Err(Error::Config {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };

    let (ln, header) = next_line("header")?;
    if header != "wcmesh 1" {
        return Err(Error::Config {
            line: ln,
            msg: format!("expected 'wcmesh 1', got '{header}'"),
        });
    }
    let (ln, vc) = next_line("vertex count")?;
    let nv: usize = match vc.strip_prefix("vertices ") {
        Some(n) => n.trim().parse().map_err(|_| Error::Config {
            line: ln,
            msg: format!("bad vertex count '{vc}'"),
        })?,
        None => {
            return Err(Error::Config {
                line: ln,
                msg: format!("expected 'vertices N', got '{vc}'"),
            })
        }
    };
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, s) = next_line("vertex coordinates")?;
        let nums: Vec<f64> = s
            .split_whitespace()
            .map(|w| w.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config {
                line: ln,
                msg: format!("bad vertex line '{s}'"),
            })?;
        if nums.len() != 3 {
            return Err(Error::Config {
                line: ln,
                msg: format!("expected 3 coordinates, got {}", nums.len()),
            });
        }
        vertices.push(Point3::new(nums[0], nums[1], nums[2]));
    }
    let (ln, tc) = next_line("tet count")?;
    let nt: usize = match tc.strip_prefix("tets ") {
        Some(n) => n.trim().parse().map_err(|_| Error::Config {
            line: ln,
            msg: format!("bad tet count '{tc}'"),
        })?,
        None => {
            return Err(Error::Config {
                line: ln,
                msg: format!("expected 'tets M', got '{tc}'"),
            })
        }
    };
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, s) = next_line("tet indices")?;
        let nums: Vec<usize> = s
            .split_whitespace()
            .map(|w| w.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config {
                line: ln,
                msg: format!("bad tet line '{s}'"),
            })?;
        if nums.len() != 4 {
            return Err(Error::Config {
                line: ln,
                msg: format!("expected 4 indices, got {}", nums.len()),
            });
        }
        tets.push([nums[0], nums[1], nums[2], nums[3]]);
    }
    VolumeMesh::from_parts(vertices, tets)
}
