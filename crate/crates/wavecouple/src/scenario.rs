//! Scenario configuration, end-to-end runs, enlarged-domain reference
//! solutions, refinement studies, and the built-in verification suite.
//!
//! A [`Scenario`] describes one transparent-boundary experiment: the interior
//! domain, a Gaussian initial bump, optional forcing, the time grid, and
//! output options. [`execute`] runs it, [`write_artifacts`] emits the energy
//! and probe CSVs plus a metadata JSON, [`run_reference`] solves the same
//! problem on an enlarged domain with pure interior elements (valid while no
//! wave reaches the far boundary), and [`convergence_study`] compares the two
//! under refinement. [`oracle_suite`] bundles the analytic and property
//! checks behind the `verify` command.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, Point3};
use num_complex::Complex64;
use serde_json::json;

use crate::bem::{assemble_boundary_ops, point_triangle_distance, potential_matrices};
use crate::calderon::{bdf2_cq_weights, calderon_cq_weights, coercivity_probe, CqContour};
use crate::error::{Error, Result};
use crate::fem::{assemble, interpolate, CoupledSpace, FemMatrices};
use crate::linalg::{dot, power_iteration, solve_cg, SpdSolver};
use crate::mesh::{
    load_wcmesh, make_cube_mesh_at, make_icosphere, mesh_stats, VolumeMesh,
};
use crate::postprocess::{compare_fields, eval_exterior, interpolate_onto, ExteriorProbe};
use crate::quadrature::QuadratureConfig;
use crate::stepper::{
    estimate_d_norm, resolve_time_grid, CoupledStepper, EnergyTrace, Forcing, SimConfig,
};

/// Relative boundary-trace energy above which an enlarged-domain reference
/// is declared too small: the outgoing wave has reached its boundary in bulk
/// and the free-space assumption no longer holds. Consistent-mass tails and
/// dispersive precursors put a slowly growing floor under this ratio well
/// below the threshold; domain-doubling experiments show their effect on
/// interior fields stays under 10^-3 while bulk arrival shoots past 10^-1
/// almost immediately. The guard is causal: contamination is only fatal when
/// it appears early enough to travel back (at unit speed) and reach a probe
/// or the comparison domain before the final time.
const REFERENCE_TRACE_TOL: f64 = 0.1;

/// Relative boundary value above which initial or forcing data is considered
/// to leak onto the coupling boundary. One percent keeps the exterior
/// consistent with the zero-history assumption without rejecting bumps that
/// merely brush the walls with exponentially small tails.
const SUPPORT_TOL: f64 = 1e-2;

/// Gaussian profile `amplitude * exp(-|x - center|^2 / width^2)`.
#[derive(Debug, Clone, Copy)]
pub struct BumpSpec {
    pub center: Point3<f64>,
    pub width: f64,
    pub amplitude: f64,
}

impl BumpSpec {
    pub fn eval(&self, p: &Point3<f64>) -> f64 {
        let r2 = (p - self.center).norm_squared();
        self.amplitude * (-r2 / (self.width * self.width)).exp()
    }

    /// Profile value at distance d, relative to the peak.
    fn relative_at(&self, d: f64) -> f64 {
        (-(d / self.width).powi(2)).exp()
    }
}

/// Volume forcing for the flux-divergence equation. A pulse is a spatial
/// Gaussian modulated by `sin(2 pi frequency t)`; the induced source of the
/// second-order wave equation is its time derivative. A positive `ramp`
/// fades the modulation in over that duration with a quintic smoothstep,
/// which keeps the signal band-limited; a hard sine turn-on radiates a
/// broadband edge.
#[derive(Debug, Clone)]
pub enum ForcingSpec {
    None,
    Pulse {
        bump: BumpSpec,
        frequency: f64,
        ramp: f64,
    },
}

/// Where the interior domain comes from.
#[derive(Debug, Clone)]
pub enum DomainSpec {
    Cube {
        side: f64,
        subdivisions: usize,
        origin: Point3<f64>,
    },
    External { path: PathBuf },
}

/// Time-grid controls. `dt` and `steps` are alternatives; when neither is
/// given the grid is derived from the measured flux norm and `cfl_safety`.
#[derive(Debug, Clone, Copy)]
pub struct TimeSpec {
    pub t_final: f64,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub cfl_safety: f64,
    pub alpha: f64,
    pub allow_unstable: bool,
}

/// Enlarged cube domain for reference runs; `substeps` refines the coupled
/// time grid so half-step samples land on reference steps.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceSpec {
    pub side: f64,
    pub origin: Point3<f64>,
    pub subdivisions: usize,
    pub substeps: usize,
}

/// One complete experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub domain: DomainSpec,
    pub initial: BumpSpec,
    pub forcing: ForcingSpec,
    pub time: TimeSpec,
    pub quadrature: QuadratureConfig,
    pub contour: CqContour,
    pub probes: Vec<Point3<f64>>,
    pub output_dir: PathBuf,
    /// Quadrature order for exterior potential rows.
    pub potential_order: usize,
    pub reference: Option<ReferenceSpec>,
}

impl Default for Scenario {
    /// Unit cube, centered Gaussian bump of width 0.1, no forcing, run to
    /// t = 1.5 at 0.9 of the stability limit.
    fn default() -> Self {
        Scenario {
            domain: DomainSpec::Cube {
                side: 1.0,
                subdivisions: 4,
                origin: Point3::origin(),
            },
            initial: BumpSpec {
                center: Point3::new(0.5, 0.5, 0.5),
                width: 0.1,
                amplitude: 1.0,
            },
            forcing: ForcingSpec::None,
            time: TimeSpec {
                t_final: 1.5,
                dt: None,
                steps: None,
                cfl_safety: 0.9,
                alpha: 1.0,
                allow_unstable: false,
            },
            quadrature: QuadratureConfig::default(),
            contour: CqContour::default(),
            probes: Vec::new(),
            output_dir: PathBuf::from("out"),
            potential_order: 3,
            reference: None,
        }
    }
}

impl Scenario {
    /// Builds the interior volume mesh.
    pub fn build_domain(&self) -> Result<VolumeMesh> {
        match &self.domain {
            DomainSpec::Cube {
                side,
                subdivisions,
                origin,
            } => make_cube_mesh_at(*subdivisions, *side, *origin),
            DomainSpec::External { path } => load_wcmesh(path),
        }
    }

    /// Nodal initial data on a mesh.
    pub fn initial_data(&self, mesh: &VolumeMesh) -> Vec<f64> {
        interpolate(mesh, |p| self.initial.eval(p))
    }


    /// Instantiates the forcing as a nodal time closure on a mesh.
    pub fn forcing_closure(&self, mesh: &VolumeMesh) -> Option<Forcing> {
        match &self.forcing {
            ForcingSpec::None => None,
            ForcingSpec::Pulse {
                bump,
                frequency,
                ramp,
            } => {
                let profile = interpolate(mesh, |p| bump.eval(p));
                let omega = 2.0 * std::f64::consts::PI * *frequency;
                let ramp = *ramp;
                Some(Box::new(move |t: f64| {
                    let m = (omega * t).sin() * smoothstep(t, ramp);
                    profile.iter().map(|&p| p * m).collect()
                }))
            }
        }
    }
}

/// Quintic fade from 0 at t <= 0 to 1 at t >= ramp; constant 1 for
/// nonpositive ramps.
fn smoothstep(t: f64, ramp: f64) -> f64 {
    if ramp <= 0.0 || t >= ramp {
        return 1.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    let x = t / ramp;
    x * x * x * (10.0 + x * (6.0 * x - 15.0))
}

// ---------------------------------------------------------------------------
// Config files: flat key = value lines under [section] headers.

struct ConfigEntry {
    line: usize,
    key: String,
    value: String,
    used: bool,
}

struct ConfigMap {
    entries: Vec<ConfigEntry>,
}

impl ConfigMap {
    fn parse(text: &str) -> Result<ConfigMap> {
        let mut entries = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let s = stripped.trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                    line,
                    msg: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(Error::Config {
                        line,
                        msg: "empty section name".into(),
                    });
                }
                continue;
            }
            let eq = s.find('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected key = value, got '{s}'"),
            })?;
            let key = s[..eq].trim();
            let value = s[eq + 1..].trim();
            if key.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: "empty key".into(),
                });
            }
            if section.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: format!("key '{key}' appears before any [section]"),
                });
            }
            entries.push(ConfigEntry {
                line,
                key: format!("{section}.{key}"),
                value: value.to_string(),
                used: false,
            });
        }
        Ok(ConfigMap { entries })
    }

    /// Consumes a single-valued key; duplicate occurrences are an error.
    fn take(&mut self, key: &str) -> Result<Option<(usize, String)>> {
        let mut found: Option<(usize, String)> = None;
        for e in self.entries.iter_mut().filter(|e| e.key == key) {
            if found.is_some() {
                return Err(Error::Config {
                    line: e.line,
                    msg: format!("duplicate key '{key}'"),
                });
            }
            e.used = true;
            found = Some((e.line, e.value.clone()));
        }
        Ok(found)
    }

    /// Consumes every occurrence of a repeatable key, in file order.
    fn take_all(&mut self, key: &str) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for e in self.entries.iter_mut().filter(|e| e.key == key) {
            e.used = true;
            out.push((e.line, e.value.clone()));
        }
        out
    }

    fn check_consumed(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.used) {
            Some(e) => Err(Error::Config {
                line: e.line,
                msg: format!("unknown key '{}'", e.key),
            }),
            None => Ok(()),
        }
    }
}

fn parse_f64(line: usize, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::Config {
        line,
        msg: format!("expected a number, got '{v}'"),
    })
}

fn parse_usize(line: usize, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Config {
        line,
        msg: format!("expected a nonnegative integer, got '{v}'"),
    })
}

fn parse_bool(line: usize, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config {
            line,
            msg: format!("expected true or false, got '{v}'"),
        }),
    }
}

fn parse_point(line: usize, v: &str) -> Result<Point3<f64>> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::Config {
            line,
            msg: format!("expected three coordinates, got '{v}'"),
        });
    }
    Ok(Point3::new(
        parse_f64(line, parts[0])?,
        parse_f64(line, parts[1])?,
        parse_f64(line, parts[2])?,
    ))
}

fn opt_f64(map: &mut ConfigMap, key: &str) -> Result<Option<f64>> {
    map.take(key)?
        .map(|(l, v)| parse_f64(l, &v))
        .transpose()
}

fn opt_usize(map: &mut ConfigMap, key: &str) -> Result<Option<usize>> {
    map.take(key)?
        .map(|(l, v)| parse_usize(l, &v))
        .transpose()
}

fn opt_bool(map: &mut ConfigMap, key: &str) -> Result<Option<bool>> {
    map.take(key)?
        .map(|(l, v)| parse_bool(l, &v))
        .transpose()
}

fn opt_point(map: &mut ConfigMap, key: &str) -> Result<Option<Point3<f64>>> {
    map.take(key)?
        .map(|(l, v)| parse_point(l, &v))
        .transpose()
}

/// Parses a scenario from config text. Missing keys keep their defaults, so
/// the empty string yields the default scenario.
pub fn parse_config(text: &str) -> Result<Scenario> {
    let mut map = ConfigMap::parse(text)?;
    let mut scn = Scenario::default();

    // [domain]
    let kind = map.take("domain.kind")?;
    let kind_name = kind.as_ref().map(|(_, v)| v.as_str()).unwrap_or("cube");
    match kind_name {
        "cube" => {
            if let Some((l, _)) = map.take("domain.path")? {
                return Err(Error::Config {
                    line: l,
                    msg: "path only applies to kind = mesh".into(),
                });
            }
            let mut side = 1.0;
            let mut subdivisions = 4;
            let mut origin = Point3::origin();
            if let Some(v) = opt_f64(&mut map, "domain.side")? {
                side = v;
            }
            if let Some(v) = opt_usize(&mut map, "domain.subdivisions")? {
                subdivisions = v;
            }
            if let Some(v) = opt_point(&mut map, "domain.origin")? {
                origin = v;
            }
            scn.domain = DomainSpec::Cube {
                side,
                subdivisions,
                origin,
            };
        }
        "mesh" => {
            let (kl, _) = kind.as_ref().expect("mesh kind was explicit");
            for forbidden in ["domain.side", "domain.subdivisions", "domain.origin"] {
                if let Some((l, _)) = map.take(forbidden)? {
                    return Err(Error::Config {
                        line: l,
                        msg: format!("{forbidden} only applies to kind = cube"),
                    });
                }
            }
            let path = map.take("domain.path")?.ok_or(Error::Config {
                line: *kl,
                msg: "kind = mesh needs a path".into(),
            })?;
            scn.domain = DomainSpec::External {
                path: PathBuf::from(path.1),
            };
        }
        other => {
            let (l, _) = kind.as_ref().expect("kind was explicit");
            return Err(Error::Config {
                line: *l,
                msg: format!("unknown domain kind '{other}'"),
            });
        }
    }

    // [initial]
    if let Some(v) = opt_point(&mut map, "initial.center")? {
        scn.initial.center = v;
    }
    if let Some(v) = opt_f64(&mut map, "initial.width")? {
        scn.initial.width = v;
    }
    if let Some(v) = opt_f64(&mut map, "initial.amplitude")? {
        scn.initial.amplitude = v;
    }

    // [forcing]
    let fkind = map.take("forcing.kind")?;
    let fkind_name = fkind.as_ref().map(|(_, v)| v.as_str()).unwrap_or("none");
    match fkind_name {
        "none" => {
            for forbidden in [
                "forcing.center",
                "forcing.width",
                "forcing.amplitude",
                "forcing.frequency",
                "forcing.ramp",
            ] {
                if let Some((l, _)) = map.take(forbidden)? {
                    return Err(Error::Config {
                        line: l,
                        msg: format!("{forbidden} only applies to kind = pulse"),
                    });
                }
            }
            scn.forcing = ForcingSpec::None;
        }
        "pulse" => {
            let bump = BumpSpec {
                center: opt_point(&mut map, "forcing.center")?
                    .unwrap_or(scn.initial.center),
                width: opt_f64(&mut map, "forcing.width")?.unwrap_or(0.1),
                amplitude: opt_f64(&mut map, "forcing.amplitude")?.unwrap_or(1.0),
            };
            let frequency = opt_f64(&mut map, "forcing.frequency")?.unwrap_or(1.0);
            let ramp = opt_f64(&mut map, "forcing.ramp")?.unwrap_or(0.0);
            scn.forcing = ForcingSpec::Pulse {
                bump,
                frequency,
                ramp,
            };
        }
        other => {
            let (l, _) = fkind.as_ref().expect("kind was explicit");
            return Err(Error::Config {
                line: *l,
                msg: format!("unknown forcing kind '{other}'"),
            });
        }
    }

    // [time]
    if let Some(v) = opt_f64(&mut map, "time.t_final")? {
        scn.time.t_final = v;
    }
    let dt = map.take("time.dt")?;
    let steps = map.take("time.steps")?;
    if let (Some((l, _)), Some(_)) = (&dt, &steps) {
        return Err(Error::Config {
            line: *l,
            msg: "dt and steps are mutually exclusive".into(),
        });
    }
    if let Some((l, v)) = dt {
        scn.time.dt = Some(parse_f64(l, &v)?);
    }
    if let Some((l, v)) = steps {
        scn.time.steps = Some(parse_usize(l, &v)?);
    }
    if let Some(v) = opt_f64(&mut map, "time.cfl_safety")? {
        scn.time.cfl_safety = v;
    }
    if let Some(v) = opt_f64(&mut map, "time.alpha")? {
        scn.time.alpha = v;
    }
    if let Some(v) = opt_bool(&mut map, "time.allow_unstable")? {
        scn.time.allow_unstable = v;
    }

    // [quadrature]
    if let Some(v) = opt_usize(&mut map, "quadrature.far")? {
        scn.quadrature.q_far = v;
    }
    if let Some(v) = opt_usize(&mut map, "quadrature.near")? {
        scn.quadrature.q_near = v;
    }
    if let Some(v) = opt_usize(&mut map, "quadrature.singular")? {
        scn.quadrature.q_singular = v;
    }
    if let Some(v) = opt_f64(&mut map, "quadrature.near_ratio")? {
        scn.quadrature.near_ratio = v;
    }

    // [cq]
    if let Some(v) = opt_f64(&mut map, "cq.eps")? {
        scn.contour.eps = v;
    }

    // [probes]
    for (l, v) in map.take_all("probes.point") {
        scn.probes.push(parse_point(l, &v)?);
    }

    // [output]
    if let Some((_, v)) = map.take("output.dir")? {
        scn.output_dir = PathBuf::from(v);
    }
    if let Some(v) = opt_usize(&mut map, "output.potential_order")? {
        scn.potential_order = v;
    }

    // [reference]
    let rside = map.take("reference.side")?;
    let rorigin = map.take("reference.origin")?;
    let rsubs = map.take("reference.subdivisions")?;
    let rsteps = map.take("reference.substeps")?;
    if rside.is_some() || rorigin.is_some() || rsubs.is_some() || rsteps.is_some() {
        let anchor = [&rside, &rorigin, &rsubs, &rsteps]
            .iter()
            .filter_map(|o| o.as_ref().map(|(l, _)| *l))
            .min()
            .expect("some reference key is present");
        let side = match &rside {
            Some((l, v)) => parse_f64(*l, v)?,
            None => {
                return Err(Error::Config {
                    line: anchor,
                    msg: "[reference] needs a side".into(),
                })
            }
        };
        let subdivisions = match &rsubs {
            Some((l, v)) => parse_usize(*l, v)?,
            None => {
                return Err(Error::Config {
                    line: anchor,
                    msg: "[reference] needs subdivisions".into(),
                })
            }
        };
        let origin = match &rorigin {
            Some((l, v)) => parse_point(*l, v)?,
            None => Point3::from(scn_domain_origin(&scn.domain)),
        };
        let substeps = match &rsteps {
            Some((l, v)) => parse_usize(*l, v)?,
            None => 4,
        };
        scn.reference = Some(ReferenceSpec {
            side,
            origin,
            subdivisions,
            substeps,
        });
    }

    map.check_consumed()?;
    validate_scenario(&scn)?;
    Ok(scn)
}

fn scn_domain_origin(domain: &DomainSpec) -> [f64; 3] {
    match domain {
        DomainSpec::Cube { origin, .. } => [origin.x, origin.y, origin.z],
        DomainSpec::External { .. } => [0.0, 0.0, 0.0],
    }
}

fn validate_scenario(scn: &Scenario) -> Result<()> {
    if !(scn.initial.width > 0.0) || !scn.initial.width.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bump width must be positive, got {}",
            scn.initial.width
        )));
    }
    if let ForcingSpec::Pulse { bump, ramp, .. } = &scn.forcing {
        if !(bump.width > 0.0) || !bump.width.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "forcing width must be positive, got {}",
                bump.width
            )));
        }
        if !(*ramp >= 0.0) || !ramp.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "forcing ramp must be nonnegative, got {ramp}"
            )));
        }
    }
    if !(scn.time.t_final >= 0.0) || !scn.time.t_final.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_final must be nonnegative, got {}",
            scn.time.t_final
        )));
    }
    if !(scn.time.cfl_safety > 0.0 && scn.time.cfl_safety <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "cfl_safety must lie in (0, 1], got {}",
            scn.time.cfl_safety
        )));
    }
    if scn.potential_order < 2 {
        return Err(Error::InvalidParameter(
            "potential_order must be at least 2".into(),
        ));
    }
    if let Some(r) = &scn.reference {
        if r.substeps < 2 || r.substeps % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "reference substeps must be even and at least 2, got {}",
                r.substeps
            )));
        }
    }
    scn.quadrature.validate()?;
    Ok(())
}

/// Parses a scenario from a config file.
pub fn load_config(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// Running a scenario.

/// Wall-clock breakdown of one run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunTimings {
    pub assembly_s: f64,
    pub weights_s: f64,
    pub stepping_s: f64,
    pub probes_s: f64,
    pub total_s: f64,
}

/// Everything a finished run exposes for postprocessing.
pub struct RunOutput {
    pub space: CoupledSpace,
    /// Present unless the run had zero steps.
    pub stepper: Option<CoupledStepper>,
    pub trace: EnergyTrace,
    pub probe: Option<ExteriorProbe>,
    pub d_norm: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub timings: RunTimings,
}

fn min_boundary_distance(p: &Point3<f64>, space: &CoupledSpace) -> f64 {
    let surf = &space.surface;
    let mut dmin = f64::INFINITY;
    for t in &surf.triangles {
        let tri = [
            surf.vertices[t[0]],
            surf.vertices[t[1]],
            surf.vertices[t[2]],
        ];
        dmin = dmin.min(point_triangle_distance(p, &tri));
    }
    dmin
}

fn check_support(label: &str, bump: &BumpSpec, space: &CoupledSpace) -> Result<()> {
    if space.volume.locate(&bump.center, 1e-9).is_none() {
        return Err(Error::Configuration(format!(
            "{label} center ({}, {}, {}) lies outside the domain",
            bump.center.x, bump.center.y, bump.center.z
        )));
    }
    let d = min_boundary_distance(&bump.center, space);
    let ratio = bump.relative_at(d);
    if ratio > SUPPORT_TOL {
        return Err(Error::Configuration(format!(
            "{label} leaks onto the boundary: relative trace {ratio:.2e} exceeds {SUPPORT_TOL:.0e} \
             (width {} against boundary distance {d:.3})",
            bump.width
        )));
    }
    Ok(())
}

fn check_probes(scn: &Scenario, space: &CoupledSpace) -> Result<()> {
    for p in &scn.probes {
        if space.volume.locate(p, 1e-9).is_some() {
            return Err(Error::Configuration(format!(
                "probe point ({}, {}, {}) lies inside the domain",
                p.x, p.y, p.z
            )));
        }
    }
    Ok(())
}

fn resolve_grid(time: &TimeSpec, d_norm: f64) -> Result<(f64, usize)> {
    if time.t_final == 0.0 {
        return Ok((0.0, 0));
    }
    if let Some(n) = time.steps {
        if n == 0 {
            return Ok((0.0, 0));
        }
        return Ok((time.t_final / n as f64, n));
    }
    if let Some(dt) = time.dt {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let n = (time.t_final / dt).ceil().max(1.0) as usize;
        return Ok((time.t_final / n as f64, n));
    }
    resolve_time_grid(time.t_final, d_norm, time.cfl_safety)
}

/// Runs a scenario end to end: assembles the interior and boundary systems,
/// integrates, and evaluates any exterior probes.
pub fn execute(scn: &Scenario) -> Result<RunOutput> {
    let t_start = Instant::now();
    let volume = scn.build_domain()?;
    let space = CoupledSpace::new(volume)?;
    check_support("initial bump", &scn.initial, &space)?;
    if let ForcingSpec::Pulse { bump, .. } = &scn.forcing {
        check_support("forcing pulse", bump, &space)?;
    }
    check_probes(scn, &space)?;

    let mats = assemble(&space)?;
    let m0_solver = SpdSolver::new(&mats.m0, true)?;
    let d_norm = estimate_d_norm(&mats, &m0_solver)?;
    drop(m0_solver);
    let assembly_s = t_start.elapsed().as_secs_f64();

    let (dt, n_steps) = resolve_grid(&scn.time, d_norm)?;
    let mut timings = RunTimings {
        assembly_s,
        ..RunTimings::default()
    };
    if n_steps == 0 {
        timings.total_s = t_start.elapsed().as_secs_f64();
        return Ok(RunOutput {
            space,
            stepper: None,
            trace: EnergyTrace::default(),
            probe: None,
            d_norm,
            dt,
            n_steps: 0,
            timings,
        });
    }

    let t_weights = Instant::now();
    let weights = calderon_cq_weights(dt, n_steps, &space.surface, &scn.quadrature, &scn.contour)?;
    timings.weights_s = t_weights.elapsed().as_secs_f64();

    let u0 = scn.initial_data(&space.volume);
    let v0 = vec![0.0; space.n_v()];
    let forcing = scn.forcing_closure(&space.volume);
    let mut cfg = SimConfig::new(dt, n_steps);
    cfg.alpha = scn.time.alpha;
    cfg.allow_unstable = scn.time.allow_unstable;

    let t_step = Instant::now();
    let mut stepper = CoupledStepper::new(mats, weights, cfg, u0, v0, forcing)?;
    let trace = stepper.run()?;
    timings.stepping_s = t_step.elapsed().as_secs_f64();

    let probe = if scn.probes.is_empty() {
        None
    } else {
        let t_probe = Instant::now();
        let state = stepper.state();
        let values = eval_exterior(
            &scn.probes,
            &state.phi_hist,
            &state.psi_hist,
            dt,
            &space.surface,
            scn.potential_order,
            &scn.contour,
        )?;
        timings.probes_s = t_probe.elapsed().as_secs_f64();
        Some(values)
    };

    timings.total_s = t_start.elapsed().as_secs_f64();
    Ok(RunOutput {
        space,
        stepper: Some(stepper),
        trace,
        probe,
        d_norm,
        dt,
        n_steps,
        timings,
    })
}

fn point_json(p: &Point3<f64>) -> serde_json::Value {
    json!([p.x, p.y, p.z])
}

/// Audit record of a run: every parameter, the mesh, the measured flux norm
/// with its step-size product, energy summary, and wall times.
pub fn metadata_json(scn: &Scenario, out: &RunOutput) -> serde_json::Value {
    let stats = mesh_stats(&out.space.volume);
    let domain = match &scn.domain {
        DomainSpec::Cube {
            side,
            subdivisions,
            origin,
        } => json!({
            "kind": "cube",
            "side": side,
            "subdivisions": subdivisions,
            "origin": point_json(origin),
        }),
        DomainSpec::External { path } => json!({
            "kind": "mesh",
            "path": path.display().to_string(),
        }),
    };
    let forcing = match &scn.forcing {
        ForcingSpec::None => json!({ "kind": "none" }),
        ForcingSpec::Pulse {
            bump,
            frequency,
            ramp,
        } => json!({
            "kind": "pulse",
            "center": point_json(&bump.center),
            "width": bump.width,
            "amplitude": bump.amplitude,
            "frequency": frequency,
            "ramp": ramp,
        }),
    };
    let energy = if out.trace.rows.is_empty() {
        serde_json::Value::Null
    } else {
        let rows = &out.trace.rows;
        let e0 = rows[0].energy;
        let emax = rows.iter().map(|r| r.energy).fold(f64::MIN, f64::max);
        let rmax = rows
            .iter()
            .map(|r| r.solve_residual)
            .fold(0.0_f64, f64::max);
        json!({
            "initial": e0,
            "final": rows[rows.len() - 1].energy,
            "max": emax,
            "max_over_initial": emax / e0.max(f64::MIN_POSITIVE),
            "max_solve_residual": rmax,
        })
    };
    let reference = match &scn.reference {
        Some(r) => json!({
            "side": r.side,
            "origin": point_json(&r.origin),
            "subdivisions": r.subdivisions,
            "substeps": r.substeps,
        }),
        None => serde_json::Value::Null,
    };
    json!({
        "scenario": {
            "domain": domain,
            "initial": {
                "center": point_json(&scn.initial.center),
                "width": scn.initial.width,
                "amplitude": scn.initial.amplitude,
            },
            "forcing": forcing,
            "time": {
                "t_final": scn.time.t_final,
                "cfl_safety": scn.time.cfl_safety,
                "alpha": scn.time.alpha,
                "allow_unstable": scn.time.allow_unstable,
            },
            "quadrature": {
                "far": scn.quadrature.q_far,
                "near": scn.quadrature.q_near,
                "singular": scn.quadrature.q_singular,
                "near_ratio": scn.quadrature.near_ratio,
            },
            "cq": { "eps": scn.contour.eps },
            "probes": scn.probes.iter().map(point_json).collect::<Vec<_>>(),
            "output_dir": scn.output_dir.display().to_string(),
            "potential_order": scn.potential_order,
            "reference": reference,
        },
        "mesh": {
            "vertices": out.space.volume.vertices.len(),
            "tets": out.space.volume.tets.len(),
            "boundary_triangles": out.space.surface.triangles.len(),
            "boundary_vertices": out.space.surface.vertices.len(),
            "h_min": stats.h_min,
            "h_max": stats.h_max,
            "quality": stats.quality,
        },
        "discretization": {
            "dt": out.dt,
            "n_steps": out.n_steps,
            "flux_norm": out.d_norm,
            "dt_flux_norm": out.dt * out.d_norm,
            "alpha": scn.time.alpha,
            "dofs": {
                "u": out.space.n_u(),
                "v": out.space.n_v(),
                "phi": out.space.n_phi(),
                "psi": out.space.n_psi(),
            },
        },
        "energy": energy,
        "boundary_norm": "fractional trace norms reported as L2 surface proxies",
        "timings_s": {
            "assembly": out.timings.assembly_s,
            "weights": out.timings.weights_s,
            "stepping": out.timings.stepping_s,
            "probes": out.timings.probes_s,
            "total": out.timings.total_s,
        },
        "threads": rayon::current_num_threads(),
    })
}

/// Writes energy.csv, probes.csv, and metadata.json into the scenario's
/// output directory. The CSVs are deterministic; metadata carries wall
/// times and so differs between runs.
pub fn write_artifacts(scn: &Scenario, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(&scn.output_dir)?;
    fs::write(
        scn.output_dir.join("energy.csv"),
        out.trace.to_csv_string(),
    )?;

    let mut probes = String::from("point_id,step,time,value\n");
    if let Some(probe) = &out.probe {
        for (pid, vals) in probe.values.iter().enumerate() {
            for (j, v) in vals.iter().enumerate() {
                let time = (j as f64 + 0.5) * out.dt;
                writeln!(probes, "{pid},{j},{time},{v}").expect("string write");
            }
        }
    }
    fs::write(scn.output_dir.join("probes.csv"), probes)?;

    let meta = metadata_json(scn, out);
    let mut text = serde_json::to_string_pretty(&meta).expect("json serialization");
    text.push('\n');
    fs::write(scn.output_dir.join("metadata.json"), text)?;
    Ok(())
}

/// Loads a config, runs it, and writes artifacts.
pub fn run_scenario(config_path: &Path) -> Result<(Scenario, RunOutput)> {
    let scn = load_config(config_path)?;
    let out = execute(&scn)?;
    write_artifacts(&scn, &out)?;
    Ok((scn, out))
}

// ---------------------------------------------------------------------------
// Enlarged-domain reference runs.

/// Free-space reference solution on an enlarged domain.
pub struct ReferenceSolution {
    pub mesh: VolumeMesh,
    /// Interior field at the final time.
    pub final_u: Vec<f64>,
    /// Per-probe values sampled at the coupled run's half steps.
    pub probe_series: Vec<Vec<f64>>,
    pub fine_dt: f64,
}

/// Spectral norm of the flux operator using iterative mass solves, for
/// meshes too large to factorize directly.
fn reference_flux_norm(mats: &FemMatrices) -> Result<f64> {
    let n = mats.m0.nrows();
    let mut failed = false;
    let m0 = &mats.m0;
    let msolve = |b: &[f64], failed: &mut bool| -> Vec<f64> {
        match solve_cg(m0, b, None, 1e-10, 4000) {
            Ok((x, _)) => x,
            Err(_) => {
                *failed = true;
                vec![0.0; b.len()]
            }
        }
    };
    let apply = |x: &[f64]| -> Vec<f64> {
        let dx = mats.d.apply(x);
        let mut w = vec![0.0; dx.len()];
        for c in 0..3 {
            let sol = msolve(&dx[c * n..(c + 1) * n], &mut failed);
            w[c * n..(c + 1) * n].copy_from_slice(&sol);
        }
        let y = mats.d.apply_transpose(&w);
        msolve(&y, &mut failed)
    };
    let metric = |a: &[f64], b: &[f64]| dot(a, &m0.apply(b));
    let lambda = power_iteration(n, apply, metric, 1e-3, 500, 90210)?;
    if failed {
        return Err(Error::NonConvergence(
            "mass solves during the reference norm estimate".into(),
        ));
    }
    Ok(lambda.max(0.0).sqrt())
}

/// Solves the same initial-value problem on an enlarged domain with pure
/// interior elements and no boundary coupling, exploiting finite propagation
/// speed: the result is the free-space solution until the wave reaches the
/// enlarged boundary, which a trace-energy guard enforces. Interior fields
/// are advanced on a grid `substeps` times finer than the coupled one so the
/// coupled half steps land on reference steps exactly.
/// Shortest distance from the comparison region (the coupled domain plus any
/// probe points) to the walls of the reference box. Boundary contamination
/// appearing later than the final time minus this distance cannot propagate
/// back to anything that is compared, so the trace guard ignores it.
fn reference_return_distance(scn: &Scenario, rspec: &ReferenceSpec) -> f64 {
    let lo = rspec.origin;
    let hi = [
        lo.x + rspec.side,
        lo.y + rspec.side,
        lo.z + rspec.side,
    ];
    let mut dist = f64::INFINITY;
    {
        let mut wall = |p_lo: &Point3<f64>, p_hi: &Point3<f64>| {
            for d in 0..3 {
                dist = dist.min(p_lo[d] - lo[d]).min(hi[d] - p_hi[d]);
            }
        };
        match &scn.domain {
            DomainSpec::Cube { side, origin, .. } => {
                let c_hi = Point3::new(origin.x + side, origin.y + side, origin.z + side);
                wall(origin, &c_hi);
            }
            DomainSpec::External { .. } => return 0.0,
        }
        for p in &scn.probes {
            wall(p, p);
        }
    }
    dist.max(0.0)
}

pub fn run_reference(
    scn: &Scenario,
    rspec: &ReferenceSpec,
    dt: f64,
    n_steps: usize,
) -> Result<ReferenceSolution> {
    if rspec.substeps < 2 || rspec.substeps % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "reference substeps must be even and at least 2, got {}",
            rspec.substeps
        )));
    }
    if !(dt > 0.0) || n_steps == 0 {
        return Err(Error::InvalidParameter(
            "reference runs need a positive step and at least one step".into(),
        ));
    }
    let volume = make_cube_mesh_at(rspec.subdivisions, rspec.side, rspec.origin)?;
    let space = CoupledSpace::new(volume)?;
    check_support("initial bump", &scn.initial, &space).map_err(|_| {
        Error::Configuration(
            "reference domain too small: it does not contain the initial data".into(),
        )
    })?;
    let mats = assemble(&space)?;
    let n_u = space.n_u();

    let mut probe_cache = Vec::with_capacity(scn.probes.len());
    for p in &scn.probes {
        match space.volume.locate(p, 1e-9) {
            Some(hit) => probe_cache.push(hit),
            None => {
                return Err(Error::Configuration(format!(
                    "probe point ({}, {}, {}) lies outside the reference domain",
                    p.x, p.y, p.z
                )))
            }
        }
    }
    let v2s = space.trace.volume_to_surface(n_u);
    let bdry: Vec<usize> = v2s
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|_| i))
        .collect();

    let tau = dt / rspec.substeps as f64;
    let t_total = n_steps as f64 * dt;
    let return_dist = reference_return_distance(scn, rspec);
    let d_ref = reference_flux_norm(&mats)?;
    if tau * d_ref > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "reference step {tau:.3e} exceeds the stability limit {:.3e}; raise substeps",
            1.0 / d_ref
        )));
    }

    let forcing = scn.forcing_closure(&space.volume);
    let mut u = scn.initial_data(&space.volume);
    let e0 = dot(&u, &u);
    let mut failed = false;
    let m0 = &mats.m0;
    let msolve = |b: &[f64], failed: &mut bool| -> Vec<f64> {
        match solve_cg(m0, b, None, 1e-10, 4000) {
            Ok((x, _)) => x,
            Err(_) => {
                *failed = true;
                vec![0.0; b.len()]
            }
        }
    };

    // Staggered start: half kick of the flux, then leapfrog.
    let mut v_half = vec![0.0; 3 * n_u];
    let du = mats.d.apply(&u);
    for c in 0..3 {
        let sol = msolve(&du[c * n_u..(c + 1) * n_u], &mut failed);
        for (i, s) in sol.into_iter().enumerate() {
            v_half[c * n_u + i] = 0.5 * tau * s;
        }
    }

    let half = rspec.substeps / 2;
    let n_fine = n_steps * rspec.substeps;
    let mut probe_series = vec![Vec::with_capacity(n_steps); scn.probes.len()];
    for m in 0..n_fine {
        let dtv = mats.d.apply_transpose(&v_half);
        let lap = msolve(&dtv, &mut failed);
        if let Some(f) = &forcing {
            let fv = f((m as f64 + 0.5) * tau);
            for i in 0..n_u {
                u[i] += tau * (fv[i] - lap[i]);
            }
        } else {
            for i in 0..n_u {
                u[i] -= tau * lap[i];
            }
        }
        if failed {
            return Err(Error::NonConvergence(
                "mass solve during the reference run".into(),
            ));
        }

        let su = dot(&u, &u);
        if !su.is_finite() {
            return Err(Error::Instability {
                step: m + 1,
                energy: su,
            });
        }
        let sb: f64 = bdry.iter().map(|&i| u[i] * u[i]).sum();
        let scale = e0.max(su).max(f64::MIN_POSITIVE);
        let t_now = (m + 1) as f64 * tau;
        if sb > REFERENCE_TRACE_TOL * scale && t_now + return_dist < t_total {
            return Err(Error::Configuration(format!(
                "reference domain too small: boundary trace energy ratio {:.2e} at t = {:.4}",
                sb / scale,
                t_now
            )));
        }

        if (m + 1) % rspec.substeps == half {
            let j = (m + 1 - half) / rspec.substeps;
            if j < n_steps {
                for (series, (tet, bary)) in probe_series.iter_mut().zip(&probe_cache) {
                    let vs = &space.volume.tets[*tet];
                    let val: f64 = (0..4).map(|i| bary[i] * u[vs[i]]).sum();
                    series.push(val);
                }
            }
        }

        if m + 1 < n_fine {
            let du = mats.d.apply(&u);
            for c in 0..3 {
                let sol = msolve(&du[c * n_u..(c + 1) * n_u], &mut failed);
                for (i, s) in sol.into_iter().enumerate() {
                    v_half[c * n_u + i] += tau * s;
                }
            }
            if failed {
                return Err(Error::NonConvergence(
                    "mass solve during the reference run".into(),
                ));
            }
        }
    }

    Ok(ReferenceSolution {
        mesh: space.volume,
        final_u: u,
        probe_series,
        fine_dt: tau,
    })
}

// ---------------------------------------------------------------------------
// Convergence studies.

/// Which discretization parameter a study refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    /// Halve the mesh width and the time step together.
    Combined,
    /// Fixed mesh, halve the time step.
    Temporal,
    /// Fixed small time step, halve the mesh width.
    Spatial,
}

/// One refinement level: mesh width, step, interior error at the final time.
#[derive(Debug, Clone, Copy)]
pub struct StudyRow {
    pub level: usize,
    pub h: f64,
    pub dt: f64,
    pub error: f64,
    /// Observed order against the previous row; None when undefined.
    pub order: Option<f64>,
}

/// Error table of a refinement study.
#[derive(Debug, Clone)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

/// Fills the order column from consecutive error ratios. Rows with identical
/// discretization parameters, or non-decreasing error pairs of zero, get an
/// undefined order.
pub fn attach_orders(rows: &mut [StudyRow]) {
    for k in 1..rows.len() {
        let p = rows[k - 1];
        let c = rows[k];
        let identical = p.h == c.h && p.dt == c.dt;
        rows[k].order = if identical || !(p.error > 0.0) || !(c.error > 0.0) {
            None
        } else {
            Some((p.error / c.error).log2())
        };
    }
}

impl StudyTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,h,dt,error,order\n");
        for r in &self.rows {
            let order = r
                .order
                .map(|o| format!("{o}"))
                .unwrap_or_else(|| "undefined".into());
            writeln!(s, "{},{},{},{},{}", r.level, r.h, r.dt, r.error, order)
                .expect("string write");
        }
        s
    }

    /// Terminal-friendly aligned table.
    pub fn render(&self) -> String {
        let mut s = String::from("level  h          dt         error        order\n");
        for r in &self.rows {
            let order = r
                .order
                .map(|o| format!("{o:.2}"))
                .unwrap_or_else(|| "undefined".into());
            writeln!(
                s,
                "{:<5}  {:<9.4}  {:<9.5}  {:<11.4e}  {}",
                r.level, r.h, r.dt, r.error, order
            )
            .expect("string write");
        }
        s
    }
}

fn cube_flux_norm(side: f64, subdivisions: usize, origin: Point3<f64>) -> Result<f64> {
    let space = CoupledSpace::new(make_cube_mesh_at(subdivisions, side, origin)?)?;
    let mats = assemble(&space)?;
    let solver = SpdSolver::new(&mats.m0, true)?;
    estimate_d_norm(&mats, &solver)
}

/// Default reference domain: pad the cube by the run time plus slack and
/// match its grid to the finest coupled level so shared vertices coincide.
fn derive_reference(
    side: f64,
    origin: Point3<f64>,
    h_finest: f64,
    t_final: f64,
) -> ReferenceSpec {
    let pad_cells = ((t_final + 0.25 * side) / h_finest).ceil();
    let pad = pad_cells * h_finest;
    ReferenceSpec {
        side: side + 2.0 * pad,
        origin: Point3::new(origin.x - pad, origin.y - pad, origin.z - pad),
        subdivisions: ((side + 2.0 * pad) / h_finest).round() as usize,
        substeps: 4,
    }
}

/// Runs the coupled solver at a ladder of refinement levels and compares
/// each against one enlarged-domain reference in the interior mass norm at
/// the final time.
pub fn convergence_study(scn: &Scenario, levels: usize, mode: StudyMode) -> Result<StudyTable> {
    if levels < 2 {
        return Err(Error::InvalidParameter(format!(
            "a study needs at least two levels, got {levels}"
        )));
    }
    let (side, n0, origin) = match &scn.domain {
        DomainSpec::Cube {
            side,
            subdivisions,
            origin,
        } => (*side, *subdivisions, *origin),
        DomainSpec::External { .. } => {
            return Err(Error::Configuration(
                "convergence studies need a generated cube domain".into(),
            ))
        }
    };
    if scn.time.t_final <= 0.0 {
        return Err(Error::InvalidParameter(
            "a study needs a positive final time".into(),
        ));
    }

    // Per-level (subdivisions, steps).
    let base_steps = |d_norm: f64| -> Result<usize> {
        let (_, n) = resolve_grid(&scn.time, d_norm)?;
        Ok(n)
    };
    let level_grids: Vec<(usize, usize)> = match mode {
        StudyMode::Combined => {
            let d0 = cube_flux_norm(side, n0, origin)?;
            let s0 = base_steps(d0)?;
            (0..levels).map(|k| (n0 << k, s0 << k)).collect()
        }
        StudyMode::Temporal => {
            let d0 = cube_flux_norm(side, n0, origin)?;
            let s0 = base_steps(d0)?;
            (0..levels).map(|k| (n0, s0 << k)).collect()
        }
        StudyMode::Spatial => {
            let n_fin = n0 << (levels - 1);
            let d_fin = cube_flux_norm(side, n_fin, origin)?;
            let s = base_steps(d_fin)?;
            (0..levels).map(|k| (n0 << k, s)).collect()
        }
    };

    let steps_max = level_grids.iter().map(|g| g.1).max().expect("levels >= 2");
    let n_finest = level_grids.iter().map(|g| g.0).max().expect("levels >= 2");
    let dt_min = scn.time.t_final / steps_max as f64;
    let h_finest = side / n_finest as f64;
    let rspec = scn
        .reference
        .unwrap_or_else(|| derive_reference(side, origin, h_finest, scn.time.t_final));

    let mut ref_scn = scn.clone();
    ref_scn.probes.clear();
    let reference = run_reference(&ref_scn, &rspec, dt_min, steps_max)?;

    let mut rows = Vec::with_capacity(levels);
    for (k, (n, steps)) in level_grids.into_iter().enumerate() {
        let mut level = scn.clone();
        level.domain = DomainSpec::Cube {
            side,
            subdivisions: n,
            origin,
        };
        level.time.steps = Some(steps);
        level.time.dt = None;
        level.probes.clear();
        level.reference = None;
        let out = execute(&level)?;
        let stepper = out.stepper.as_ref().expect("nonzero steps");
        let ref_on = interpolate_onto(&reference.mesh, &reference.final_u, &out.space.volume)?;
        let err = compare_fields(&stepper.state().u, &ref_on, &stepper.matrices().m0)?;
        rows.push(StudyRow {
            level: k,
            h: mesh_stats(&out.space.volume).h_max,
            dt: out.dt,
            error: err.l2_error,
            order: None,
        });
    }
    attach_orders(&mut rows);
    Ok(StudyTable { rows })
}

// ---------------------------------------------------------------------------
// Verification suite.

/// Outcome of one named verification check.
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Results of the whole verification suite.
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "[PASS]" } else { "[FAIL]" };
            writeln!(s, "{tag} {} ({:.2}s): {}", c.name, c.seconds, c.detail)
                .expect("string write");
        }
        let n_pass = self.checks.iter().filter(|c| c.passed).count();
        writeln!(s, "{n_pass} of {} checks passed", self.checks.len()).expect("string write");
        s
    }
}

fn run_check<F>(name: &str, f: F) -> OracleCheck
where
    F: FnOnce() -> Result<(bool, String)>,
{
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok((p, d)) => (p, d),
        Err(e) => (false, format!("error: {e}")),
    };
    OracleCheck {
        name: name.to_string(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn seeded_unit_vector(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = crate::linalg::norm2(&v).max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x / norm).collect()
}

struct CubeSystem {
    space: CoupledSpace,
    mats: FemMatrices,
    d_norm: f64,
}

fn cube_system(subdivisions: usize) -> Result<CubeSystem> {
    let space = CoupledSpace::new(make_cube_mesh_at(subdivisions, 1.0, Point3::origin())?)?;
    let mats = assemble(&space)?;
    let solver = SpdSolver::new(&mats.m0, true)?;
    let d_norm = estimate_d_norm(&mats, &solver)?;
    Ok(CubeSystem {
        space,
        mats,
        d_norm,
    })
}

fn default_bump_data(space: &CoupledSpace) -> Vec<f64> {
    let scn = Scenario::default();
    scn.initial_data(&space.volume)
}

/// Runs every built-in analytic and property oracle and reports one line per
/// check. Heavy reference-based comparisons live in the acceptance tests;
/// this suite covers the checks that finish in seconds to a couple of
/// minutes.
pub fn oracle_suite() -> OracleReport {
    let q = QuadratureConfig::default();
    let mut checks = Vec::new();

    checks.push(run_check("icosphere_area", || {
        let surf = make_icosphere(2, 1.0)?;
        let area = surf.total_area();
        let exact = 4.0 * std::f64::consts::PI;
        let rel = (area - exact).abs() / exact;
        Ok((rel < 0.02, format!("level-2 area off by {rel:.2e} relative")))
    }));

    checks.push(run_check("mass_solve_residual", || {
        let sys = cube_system(2)?;
        let n = sys.mats.m0.nrows();
        let b = seeded_unit_vector(n, 11);
        let solver = SpdSolver::new(&sys.mats.m0, true)?;
        let x = solver.solve(&b);
        let mut r = sys.mats.m0.apply(&x);
        for (ri, bi) in r.iter_mut().zip(&b) {
            *ri -= bi;
        }
        let rel = crate::linalg::norm2(&r) / crate::linalg::norm2(&b);
        Ok((rel <= 1e-10, format!("residual {rel:.2e} relative")))
    }));

    checks.push(run_check("flux_norm_vs_dense_eigen", || {
        let sys = cube_system(2)?;
        let n = sys.mats.m0.nrows();
        let m0d = sys.mats.m0.to_dense();
        let dd = sys.mats.d.to_dense();
        let chol = m0d
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Factorization("dense mass".into()))?;
        let x = chol.solve(&dd.transpose());
        let s = &dd * &x;
        let mut m1d = DMatrix::zeros(3 * n, 3 * n);
        for c in 0..3 {
            for i in 0..n {
                for j in 0..n {
                    m1d[(c * n + i, c * n + j)] = m0d[(i, j)];
                }
            }
        }
        let l = m1d
            .cholesky()
            .ok_or_else(|| Error::Factorization("dense flux mass".into()))?
            .l();
        let a = l.clone().solve_lower_triangular(&s).expect("triangular solve");
        let b = l
            .solve_lower_triangular(&a.transpose())
            .expect("triangular solve");
        let sym = 0.5 * (&b + b.transpose());
        let lambda = sym
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::MIN, |m, &x| m.max(x));
        let exact = lambda.max(0.0).sqrt();
        let rel = (sys.d_norm - exact).abs() / exact;
        Ok((rel <= 1e-3, format!("power iteration off by {rel:.2e}")))
    }));

    checks.push(run_check("single_layer_sphere", || {
        let s = Complex64::new(1e-8, 0.0);
        let exact = 4.0 * std::f64::consts::PI;
        let mut errs = Vec::new();
        let mut rayleigh = 0.0;
        for level in [1, 2] {
            let surf = make_icosphere(level, 1.0)?;
            let ops = assemble_boundary_ops(s, &surf, &q)?;
            let form: Complex64 = ops.v.iter().sum();
            errs.push((form.re - exact).abs() / exact);
            if level == 2 {
                rayleigh = form.re / surf.total_area();
            }
        }
        let passed = errs[1] < errs[0] && errs[1] < 0.05 && (rayleigh - 1.0).abs() < 0.05;
        Ok((
            passed,
            format!(
                "form errors {:.2e} -> {:.2e}, unit-density quotient {rayleigh:.4}",
                errs[0], errs[1]
            ),
        ))
    }));

    checks.push(run_check("sphere_potentials", || {
        let surf = make_icosphere(2, 1.0)?;
        let s = Complex64::new(1e-8, 0.0);
        let pts = [Point3::new(0.0, 0.0, 2.0), Point3::new(0.1, 0.05, 0.2)];
        let rows = potential_matrices(s, &pts, &surf, 3)?;
        let sval: Complex64 = (0..surf.triangles.len()).map(|b| rows.s_rows[(0, b)]).sum();
        let dout: Complex64 = (0..surf.vertices.len()).map(|l| rows.d_rows[(0, l)]).sum();
        let din: Complex64 = (0..surf.vertices.len()).map(|l| rows.d_rows[(1, l)]).sum();
        let passed =
            (sval.re - 0.5).abs() < 0.025 && dout.norm() < 0.01 && (din.re + 1.0).abs() < 0.05;
        Ok((
            passed,
            format!(
                "single layer {:.4}, double layer outside {:.1e}, inside {:.4}",
                sval.re,
                dout.norm(),
                din.re
            ),
        ))
    }));

    checks.push(run_check("calderon_coercivity", || {
        let surf = make_icosphere(1, 1.0)?;
        let freqs = [
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 2.0),
            Complex64::new(1.0, -2.0),
            Complex64::new(0.5, 5.0),
        ];
        let mut worst: f64 = f64::INFINITY;
        for (i, s) in freqs.iter().enumerate() {
            let block = crate::calderon::calderon_block(*s, &surf, &q)?;
            let norm_max = block.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
            let min = coercivity_probe(&block, 1000 + i as u64, 100);
            worst = worst.min(min / norm_max);
        }
        Ok((
            worst >= -1e-6,
            format!("worst probe / max entry = {worst:.2e}"),
        ))
    }));

    checks.push(run_check("cq_scalar_order", || {
        let f_inv = |s: Complex64| Ok(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0) / s));
        let contour = CqContour::default();
        let run = |dt: f64| -> Result<f64> {
            let n = (1.0 / dt).round() as usize;
            let w = bdf2_cq_weights(dt, n, &contour, f_inv)?;
            let y: f64 = (0..=n).map(|j| w[n - j][(0, 0)] * (j as f64) * dt).sum();
            Ok((y - 0.5).abs())
        };
        let e1 = run(0.1)?;
        let e2 = run(0.05)?;
        let order = (e1 / e2).log2();
        Ok((
            e1 <= 1e-2 && order >= 1.9,
            format!("errors {e1:.2e} -> {e2:.2e}, order {order:.2}"),
        ))
    }));

    checks.push(run_check("herglotz_positivity", || {
        let surf = make_icosphere(1, 1.0)?;
        let contour = CqContour { eps: 1e-16 };
        let n_steps = 7;
        let weights = calderon_cq_weights(0.2, n_steps, &surf, &q, &contour)?;
        let k = weights[0].nrows();
        let rho = (-0.1_f64).exp();
        let max_w = weights
            .iter()
            .flat_map(|w| w.iter())
            .fold(0.0_f64, |m, &x| m.max(x.abs()));
        let mut worst: f64 = f64::INFINITY;
        for trial in 0..5 {
            let seq: Vec<Vec<f64>> = (0..=n_steps)
                .map(|n| seeded_unit_vector(k, 300 + 16 * trial + n as u64))
                .collect();
            let mut form = 0.0;
            let mut scale = 0.0;
            for n in 0..=n_steps {
                let damp = rho.powi(2 * n as i32);
                let mut conv = vec![0.0; k];
                for j in 0..=n {
                    let wv = &weights[n - j] * DMatrix::from_column_slice(k, 1, &seq[j]);
                    for (c, w) in conv.iter_mut().zip(wv.iter()) {
                        *c += w;
                    }
                }
                form += damp * dot(&seq[n], &conv);
                scale += damp * dot(&seq[n], &seq[n]);
            }
            worst = worst.min(form / (max_w * scale));
        }
        Ok((
            worst >= -1e-6,
            format!("worst damped quadratic form / scale = {worst:.2e}"),
        ))
    }));

    checks.push(run_check("boundary_system_solvable", || {
        let sys = cube_system(4)?;
        let (dt, _) = resolve_time_grid(1.5, sys.d_norm, 0.9)?;
        let contour = CqContour::default();
        let weights = calderon_cq_weights(dt, 1, &sys.space.surface, &q, &contour)?;
        let u0 = default_bump_data(&sys.space);
        let v0 = vec![0.0; sys.space.n_v()];
        let stepper = CoupledStepper::new(
            sys.mats,
            weights,
            SimConfig::new(dt, 1),
            u0,
            v0,
            None,
        )?;
        let b = stepper.boundary_matrix();
        let mut min_probe = f64::INFINITY;
        for i in 0..50 {
            let z = seeded_unit_vector(b.nrows(), 500 + i);
            let bz = b * DMatrix::from_column_slice(b.nrows(), 1, &z);
            min_probe = min_probe.min(dot(&z, bz.as_slice()));
        }
        Ok((
            min_probe > 0.0,
            format!("factorized; min symmetric probe {min_probe:.3e}"),
        ))
    }));

    checks.push(run_check("bump_run_residuals", || {
        let sys = cube_system(4)?;
        let dt = 0.9 / sys.d_norm;
        let n_steps = 50;
        let contour = CqContour::default();
        let weights = calderon_cq_weights(dt, n_steps, &sys.space.surface, &q, &contour)?;
        let u0 = default_bump_data(&sys.space);
        let v0 = vec![0.0; sys.space.n_v()];
        let mut stepper = CoupledStepper::new(
            sys.mats,
            weights,
            SimConfig::new(dt, n_steps),
            u0,
            v0,
            None,
        )?;
        let trace = stepper.run()?;
        let rmax = trace
            .rows
            .iter()
            .map(|r| r.solve_residual)
            .fold(0.0_f64, f64::max);
        let finite = trace.rows.iter().all(|r| r.energy.is_finite());
        Ok((
            rmax <= 1e-9 && finite,
            format!("max boundary solve residual {rmax:.2e} over {n_steps} steps"),
        ))
    }));

    checks.push(run_check("energy_bound_200_steps", || {
        let sys = cube_system(4)?;
        let dt = 0.9 / sys.d_norm;
        let n_steps = 200;
        let contour = CqContour::default();
        let weights = calderon_cq_weights(dt, n_steps, &sys.space.surface, &q, &contour)?;
        let u0 = default_bump_data(&sys.space);
        let v0 = vec![0.0; sys.space.n_v()];
        let mut stepper = CoupledStepper::new(
            sys.mats,
            weights,
            SimConfig::new(dt, n_steps),
            u0,
            v0,
            None,
        )?;
        let trace = stepper.run()?;
        let e0 = trace.rows[0].energy;
        let emax = trace.rows.iter().map(|r| r.energy).fold(f64::MIN, f64::max);
        let monotone = trace.rows.iter().enumerate().all(|(i, r)| r.step == i);
        Ok((
            emax <= 3.0 * e0 && monotone && emax.is_finite(),
            format!("max energy / initial = {:.4}", emax / e0),
        ))
    }));

    checks.push(run_check("cfl_blowup_contrapositive", || {
        let sys = cube_system(2)?;
        let dt = 2.5 / sys.d_norm;
        let cap = 500;
        let contour = CqContour::default();
        let weights = calderon_cq_weights(dt, cap, &sys.space.surface, &q, &contour)?;
        let u0 = default_bump_data(&sys.space);
        let v0 = vec![0.0; sys.space.n_v()];
        let mut cfg = SimConfig::new(dt, cap);
        cfg.allow_unstable = true;
        let mut stepper = CoupledStepper::new(sys.mats, weights, cfg, u0, v0, None)?;
        let e0 = stepper.energy();
        for step in 0..cap {
            match stepper.step() {
                Ok(_) => {}
                Err(Error::Instability { energy, .. }) => {
                    let grew = energy > 1e3 * e0 || !energy.is_finite();
                    return Ok((grew, format!("diverged at step {}", step + 1)));
                }
                Err(e) => return Err(e),
            }
            let e = stepper.energy();
            if e > 1e3 * e0 {
                return Ok((
                    true,
                    format!("energy ratio {:.1e} at step {}", e / e0, step + 1),
                ));
            }
        }
        Ok((false, "energy stayed bounded past the step limit".into()))
    }));

    checks.push(run_check("coupling_identity", || {
        // For an affine field with a matching boundary trace, the flux
        // moment Du - C1 psi equals the flux mass times the constant
        // gradient, so the mass solve recovers that gradient nodally.
        let sys = cube_system(3)?;
        let n_u = sys.space.n_u();
        let grad = [2.0, -1.0, 0.5];
        let u = interpolate(&sys.space.volume, |p| {
            grad[0] * p.x + grad[1] * p.y + grad[2] * p.z + 0.7
        });
        let psi = sys.space.boundary_trace(&u);
        let mut rhs = sys.mats.d.apply(&u);
        let cpsi = sys.mats.c1.apply(&psi);
        for (r, c) in rhs.iter_mut().zip(&cpsi) {
            *r -= c;
        }
        let solver = SpdSolver::new(&sys.mats.m0, false)?;
        let mut worst: f64 = 0.0;
        for c in 0..3 {
            let g = solver.solve(&rhs[c * n_u..(c + 1) * n_u]);
            for gi in g {
                worst = worst.max((gi - grad[c]).abs());
            }
        }
        Ok((
            worst <= 1e-10,
            format!("worst nodal gradient defect {worst:.2e}"),
        ))
    }));

    checks.push(run_check("coupling_identity_detects_sign_flip", || {
        // The same identity with the trace coupling sign flipped must
        // fail loudly, pinning the relative orientation of the matrices.
        let sys = cube_system(3)?;
        let n_u = sys.space.n_u();
        let grad = [2.0, -1.0, 0.5];
        let u = interpolate(&sys.space.volume, |p| {
            grad[0] * p.x + grad[1] * p.y + grad[2] * p.z + 0.7
        });
        let psi = sys.space.boundary_trace(&u);
        let mut rhs = sys.mats.d.apply(&u);
        let cpsi = sys.mats.c1.apply(&psi);
        for (r, c) in rhs.iter_mut().zip(&cpsi) {
            *r += c;
        }
        let solver = SpdSolver::new(&sys.mats.m0, false)?;
        let mut worst: f64 = 0.0;
        for c in 0..3 {
            let g = solver.solve(&rhs[c * n_u..(c + 1) * n_u]);
            for gi in g {
                worst = worst.max((gi - grad[c]).abs());
            }
        }
        Ok((
            worst > 1e-4,
            format!("flipped-sign gradient defect {worst:.2e} is far above the pass tolerance"),
        ))
    }));

    checks.push(run_check("contour_guard_rejects_flat_radius", || {
        let surf = make_icosphere(0, 1.0)?;
        let n_steps = 8;
        let good = calderon_cq_weights(0.3, n_steps, &surf, &q, &CqContour::default());
        let lam: f64 = 0.999999;
        let eps_mut = lam.powi(2 * (n_steps as i32 + 1));
        let bad = calderon_cq_weights(0.3, n_steps, &surf, &q, &CqContour { eps: eps_mut });
        let passed = good.is_ok() && matches!(bad, Err(Error::Contour(_)));
        let detail = match &bad {
            Err(e) => format!("near-unit radius rejected: {e}"),
            Ok(_) => "near-unit radius was not rejected".into(),
        };
        Ok((passed, detail))
    }));

    checks.push(run_check("interior_recursion_identity", || {
        let sys = cube_system(2)?;
        let dt = 0.8 / sys.d_norm;
        let contour = CqContour::default();
        let weights = calderon_cq_weights(dt, 2, &sys.space.surface, &q, &contour)?;
        let u0 = default_bump_data(&sys.space);
        let v0 = vec![0.0; sys.space.n_v()];
        let mut stepper = CoupledStepper::new(
            sys.mats,
            weights,
            SimConfig::new(dt, 2),
            u0.clone(),
            v0,
            None,
        )?;
        stepper.step()?;
        let u1 = stepper.state().u.clone();
        stepper.step()?;
        let u2 = stepper.state().u.clone();
        let state = stepper.state();
        let mats = stepper.matrices();
        let n_u = mats.m0.nrows();
        let m0s = SpdSolver::new(&mats.m0, true)?;
        let mut inner = mats.d.apply(&u1);
        let cpsi = mats.c1.apply(&state.psi_hist[1]);
        for (r, c) in inner.iter_mut().zip(&cpsi) {
            *r -= c;
        }
        let mut m1inv = vec![0.0; 3 * n_u];
        for c in 0..3 {
            let sol = m0s.solve(&inner[c * n_u..(c + 1) * n_u]);
            m1inv[c * n_u..(c + 1) * n_u].copy_from_slice(&sol);
        }
        let t1 = m0s.solve(&mats.d.apply_transpose(&m1inv));
        let dphi: Vec<f64> = state.phi_hist[1]
            .iter()
            .zip(&state.phi_hist[0])
            .map(|(a, b)| a - b)
            .collect();
        let t2 = m0s.solve(&mats.c0.apply(&dphi));
        let mut resid: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for i in 0..n_u {
            let lhs = u2[i] - 2.0 * u1[i] + u0[i];
            let rhs = -dt * dt * t1[i] - dt * t2[i];
            resid = resid.max((lhs - rhs).abs());
            scale = scale.max(u1[i].abs());
        }
        Ok((
            resid <= 1e-12 * scale,
            format!("flux-eliminated recursion defect {resid:.2e}"),
        ))
    }));

    OracleReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_empty_config_gives_defaults() {
        let scn = parse_config("").unwrap();
        match scn.domain {
            DomainSpec::Cube {
                side,
                subdivisions,
                origin,
            } => {
                assert_eq!(side, 1.0);
                assert_eq!(subdivisions, 4);
                assert_eq!(origin, Point3::origin());
            }
            _ => panic!("default domain should be a cube"),
        }
        assert_eq!(scn.initial.center, Point3::new(0.5, 0.5, 0.5));
        assert_eq!(scn.initial.width, 0.1);
        assert_eq!(scn.initial.amplitude, 1.0);
        assert!(matches!(scn.forcing, ForcingSpec::None));
        assert_eq!(scn.time.t_final, 1.5);
        assert_eq!(scn.time.cfl_safety, 0.9);
        assert_eq!(scn.time.alpha, 1.0);
        assert!(scn.time.dt.is_none() && scn.time.steps.is_none());
        assert!(scn.probes.is_empty());
        assert_eq!(scn.output_dir, PathBuf::from("out"));
        assert_eq!(scn.potential_order, 3);
        assert!(scn.reference.is_none());
    }

    #[test]
    fn parse_full_config_roundtrip() {
        let text = "\
# full experiment\n\
[domain]\n\
kind = cube\n\
side = 2.0\n\
subdivisions = 3\n\
origin = -1 -1 -1\n\
\n\
[initial]\n\
center = 0 0 0\n\
width = 0.2\n\
amplitude = 2.5\n\
\n\
[forcing]\n\
kind = pulse\n\
center = 0.1 0 0\n\
width = 0.15\n\
amplitude = 0.5\n\
frequency = 2.0\n\
ramp = 0.25\n\
\n\
[time]\n\
t_final = 0.8\n\
steps = 16\n\
cfl_safety = 0.8\n\
alpha = 1.5\n\
allow_unstable = true\n\
\n\
[quadrature]\n\
far = 3\n\
near = 4\n\
singular = 5\n\
near_ratio = 2.5\n\
\n\
[cq]\n\
eps = 1e-14\n\
\n\
[probes]\n\
point = 0 0 3   # above\n\
point = 3 0 0\n\
\n\
[output]\n\
dir = results/run1\n\
potential_order = 4\n\
\n\
[reference]\n\
side = 6\n\
origin = -3 -3 -3\n\
subdivisions = 12\n\
substeps = 2\n";
        let scn = parse_config(text).unwrap();
        match scn.domain {
            DomainSpec::Cube {
                side,
                subdivisions,
                origin,
            } => {
                assert_eq!(side, 2.0);
                assert_eq!(subdivisions, 3);
                assert_eq!(origin, Point3::new(-1.0, -1.0, -1.0));
            }
            _ => panic!("expected a cube domain"),
        }
        assert_eq!(scn.initial.center, Point3::origin());
        assert_eq!(scn.initial.width, 0.2);
        assert_eq!(scn.initial.amplitude, 2.5);
        match &scn.forcing {
            ForcingSpec::Pulse {
                bump,
                frequency,
                ramp,
            } => {
                assert_eq!(bump.center, Point3::new(0.1, 0.0, 0.0));
                assert_eq!(bump.width, 0.15);
                assert_eq!(bump.amplitude, 0.5);
                assert_eq!(*frequency, 2.0);
                assert_eq!(*ramp, 0.25);
            }
            _ => panic!("expected pulse forcing"),
        }
        assert_eq!(scn.time.t_final, 0.8);
        assert_eq!(scn.time.steps, Some(16));
        assert_eq!(scn.time.cfl_safety, 0.8);
        assert_eq!(scn.time.alpha, 1.5);
        assert!(scn.time.allow_unstable);
        assert_eq!(scn.quadrature.q_far, 3);
        assert_eq!(scn.quadrature.q_near, 4);
        assert_eq!(scn.quadrature.q_singular, 5);
        assert_eq!(scn.quadrature.near_ratio, 2.5);
        assert_eq!(scn.contour.eps, 1e-14);
        assert_eq!(
            scn.probes,
            vec![Point3::new(0.0, 0.0, 3.0), Point3::new(3.0, 0.0, 0.0)]
        );
        assert_eq!(scn.output_dir, PathBuf::from("results/run1"));
        assert_eq!(scn.potential_order, 4);
        let r = scn.reference.unwrap();
        assert_eq!(r.side, 6.0);
        assert_eq!(r.origin, Point3::new(-3.0, -3.0, -3.0));
        assert_eq!(r.subdivisions, 12);
        assert_eq!(r.substeps, 2);
    }

    fn config_line(err: Error) -> usize {
        match err {
            Error::Config { line, .. } => line,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(config_line(parse_config("x = 1").unwrap_err()), 1);
        assert_eq!(config_line(parse_config("[domain]\nkind\n").unwrap_err()), 2);
        assert_eq!(config_line(parse_config("[domain\n").unwrap_err()), 1);
        assert_eq!(
            config_line(parse_config("[time]\ndt = 0.1\nsteps = 5\n").unwrap_err()),
            2
        );
        assert_eq!(
            config_line(parse_config("[time]\ndt = 0.1\ndt = 0.2\n").unwrap_err()),
            3
        );
        assert_eq!(
            config_line(parse_config("[time]\nfoo = 1\n").unwrap_err()),
            2
        );
        assert_eq!(
            config_line(parse_config("[time]\nt_final = abc\n").unwrap_err()),
            2
        );
        assert_eq!(
            config_line(parse_config("[initial]\ncenter = 1 2\n").unwrap_err()),
            2
        );
        assert_eq!(
            config_line(parse_config("[reference]\nsubdivisions = 4\n").unwrap_err()),
            2
        );
    }

    #[test]
    fn bump_support_guard_rejects_wide_bumps() {
        let mut scn = Scenario::default();
        scn.domain = DomainSpec::Cube {
            side: 1.0,
            subdivisions: 2,
            origin: Point3::origin(),
        };
        scn.initial.width = 0.4;
        match execute(&scn) {
            Err(Error::Configuration(msg)) => {
                assert!(msg.contains("leaks onto the boundary"), "{msg}")
            }
            other => panic!("expected a configuration error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn probe_inside_domain_rejected() {
        let mut scn = Scenario::default();
        scn.domain = DomainSpec::Cube {
            side: 1.0,
            subdivisions: 2,
            origin: Point3::origin(),
        };
        scn.probes.push(Point3::new(0.5, 0.5, 0.5));
        match execute(&scn) {
            Err(Error::Configuration(msg)) => {
                assert!(msg.contains("inside the domain"), "{msg}")
            }
            other => panic!("expected a configuration error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn zero_step_run_writes_metadata_and_empty_traces() {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("artifacts");
        let config = format!(
            "[domain]\nsubdivisions = 2\n\n[time]\nsteps = 0\n\n\
             [probes]\npoint = 0.5 0.5 2.0\n\n[output]\ndir = {}\n",
            out_dir.display()
        );
        let cfg_path = dir.path().join("scenario.cfg");
        fs::write(&cfg_path, config).unwrap();
        let (_, out) = run_scenario(&cfg_path).unwrap();
        assert_eq!(out.n_steps, 0);
        assert!(out.stepper.is_none());
        let energy = fs::read_to_string(out_dir.join("energy.csv")).unwrap();
        assert_eq!(energy, "step,time,energy,solve_residual\n");
        let probes = fs::read_to_string(out_dir.join("probes.csv")).unwrap();
        assert_eq!(probes, "point_id,step,time,value\n");
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join("metadata.json")).unwrap())
                .unwrap();
        assert_eq!(meta["discretization"]["n_steps"], 0);
        assert!(meta["discretization"]["flux_norm"].as_f64().unwrap() > 0.0);
        assert!(meta["energy"].is_null());
    }

    #[test]
    fn runs_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut scn = Scenario::default();
        scn.domain = DomainSpec::Cube {
            side: 1.0,
            subdivisions: 2,
            origin: Point3::origin(),
        };
        scn.time.t_final = 0.3;
        scn.time.steps = Some(3);
        scn.probes.push(Point3::new(0.5, 0.5, 2.0));
        let mut texts = Vec::new();
        for run in 0..2 {
            let mut pass = scn.clone();
            pass.output_dir = dir.path().join(format!("run{run}"));
            let out = execute(&pass).unwrap();
            write_artifacts(&pass, &out).unwrap();
            let energy = fs::read_to_string(pass.output_dir.join("energy.csv")).unwrap();
            let probes = fs::read_to_string(pass.output_dir.join("probes.csv")).unwrap();
            assert!(probes.lines().count() > 1, "probe rows were written");
            texts.push((energy, probes));
            if run == 0 {
                let meta: serde_json::Value = serde_json::from_str(
                    &fs::read_to_string(pass.output_dir.join("metadata.json")).unwrap(),
                )
                .unwrap();
                for key in ["dt", "dt_flux_norm", "flux_norm", "alpha"] {
                    assert!(
                        meta["discretization"][key].is_number(),
                        "metadata records {key}"
                    );
                }
                assert!(meta["threads"].is_number());
                assert!(meta["boundary_norm"].is_string());
            }
        }
        assert_eq!(texts[0], texts[1]);
    }

    #[test]
    fn reference_guard_detects_small_domain() {
        let scn = Scenario::default();
        let small = ReferenceSpec {
            side: 1.2,
            origin: Point3::new(-0.1, -0.1, -0.1),
            subdivisions: 6,
            substeps: 2,
        };
        match run_reference(&scn, &small, 0.1, 10) {
            Err(Error::Configuration(msg)) => {
                assert!(msg.contains("reference domain too small"), "{msg}")
            }
            other => panic!("expected a configuration error, got {:?}", other.is_ok()),
        }

        let mut with_probe = scn.clone();
        with_probe.probes.push(Point3::new(5.0, 5.0, 5.0));
        match run_reference(&with_probe, &small, 0.1, 2) {
            Err(Error::Configuration(msg)) => {
                assert!(msg.contains("outside the reference domain"), "{msg}")
            }
            other => panic!("expected a configuration error, got {:?}", other.is_ok()),
        }
    }

    #[test]
    fn reference_probe_series_alignment() {
        let mut scn = Scenario::default();
        scn.probes.push(Point3::new(0.5, 0.5, 0.5));
        let rspec = ReferenceSpec {
            side: 3.0,
            origin: Point3::new(-1.0, -1.0, -1.0),
            subdivisions: 6,
            substeps: 2,
        };

        let silent = {
            let mut s = scn.clone();
            s.initial.amplitude = 0.0;
            run_reference(&s, &rspec, 0.2, 3).unwrap()
        };
        assert_eq!(silent.probe_series.len(), 1);
        assert_eq!(silent.probe_series[0].len(), 3);
        assert!(silent.probe_series[0].iter().all(|v| v.abs() < 1e-14));
        assert_eq!(silent.fine_dt, 0.1);

        // A live bump must be resolved by the grid: near-delta nodal data
        // leaks through the mass solve to the boundary and trips the guard.
        let fine = ReferenceSpec {
            subdivisions: 12,
            ..rspec
        };
        let mut resolved = scn.clone();
        resolved.initial.width = 0.25;
        let live = run_reference(&resolved, &fine, 0.1, 6).unwrap();
        assert_eq!(live.probe_series[0].len(), 6);
        assert!(live.probe_series[0].iter().all(|v| v.is_finite()));
        assert!(
            live.probe_series[0][0].abs() > 1e-6,
            "the field near the bump center is visible at the first half step"
        );
    }

    #[test]
    fn convergence_orders_flag_identical_levels() {
        let mut rows = vec![
            StudyRow {
                level: 0,
                h: 0.5,
                dt: 0.1,
                error: 4e-2,
                order: None,
            },
            StudyRow {
                level: 1,
                h: 0.5,
                dt: 0.1,
                error: 4e-2,
                order: None,
            },
            StudyRow {
                level: 2,
                h: 0.25,
                dt: 0.05,
                error: 1e-2,
                order: None,
            },
        ];
        attach_orders(&mut rows);
        assert!(rows[0].order.is_none());
        assert!(rows[1].order.is_none(), "identical levels have no order");
        assert!((rows[2].order.unwrap() - 2.0).abs() < 1e-12);
        let table = StudyTable { rows };
        assert!(table.to_csv().contains("undefined"));
    }

    #[test]
    fn study_rejects_bad_levels() {
        let scn = Scenario::default();
        assert!(matches!(
            convergence_study(&scn, 1, StudyMode::Combined),
            Err(Error::InvalidParameter(_))
        ));
        let mut external = scn;
        external.domain = DomainSpec::External {
            path: PathBuf::from("missing.wcmesh"),
        };
        assert!(matches!(
            convergence_study(&external, 2, StudyMode::Combined),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn verification_suite_passes() {
        let report = oracle_suite();
        println!("{}", report.render());
        assert!(report.all_passed(), "\n{}", report.render());
    }
}
