//! Coupled interior leapfrog with the stabilized boundary density solve.
//!
//! Each step advances the interior scalar and flux fields with a
//! staggered kick-drift-kick update while the two boundary densities are
//! produced by a convolution-quadrature equation: the current right-hand
//! side couples the midpoint interior state, the discrete history enters
//! through the tail of weight matrices, and a stabilization block keeps
//! the one-matrix solve positive definite. The boundary solve matrix
//! (zeroth weight plus dt times the stabilization) is factorized once
//! with partial-pivoting LU after a positive-definiteness check of its
//! symmetric part.

use std::io::Write as IoWrite;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::linalg::{dot, power_iteration, SpdSolver};

/// Time-integration parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Boundary stabilization weight; at least 1 unless overridden.
    pub alpha: f64,
    /// Permit alpha < 1 or a step beyond the stability limit for
    /// instability experiments.
    pub allow_unstable: bool,
}

impl SimConfig {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        SimConfig {
            dt,
            n_steps,
            alpha: 1.0,
            allow_unstable: false,
        }
    }
}

/// Dynamic state of the coupled scheme at an integer step.
#[derive(Debug, Clone)]
pub struct SimState {
    pub n: usize,
    /// Scalar field coefficients at t_n.
    pub u: Vec<f64>,
    /// Flux coefficients at t_n, component major.
    pub v: Vec<f64>,
    /// Boundary flux densities at half steps j+1/2 for j < n.
    pub phi_hist: Vec<Vec<f64>>,
    /// Boundary trace densities at integer steps j <= n.
    pub psi_hist: Vec<Vec<f64>>,
}

impl SimState {
    /// Current trace density psi^n.
    pub fn psi(&self) -> &[f64] {
        self.psi_hist.last().expect("psi history is never empty")
    }
}

/// One energy-trace record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub solve_residual: f64,
}

/// Per-step energies and boundary solve residuals of a run.
#[derive(Debug, Clone, Default)]
pub struct EnergyTrace {
    pub rows: Vec<TraceRow>,
}

impl EnergyTrace {
    pub fn write_csv<W: IoWrite>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,time,energy,solve_residual")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.step, r.time, r.energy, r.solve_residual)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Discrete field energy from the scalar coefficients and the two
/// staggered flux values, in the mass inner products.
pub fn field_energy(mats: &FemMatrices, u: &[f64], v_minus: &[f64], v_plus: &[f64]) -> f64 {
    let mu = mats.m0.apply(u);
    let m_minus = mats.m1_apply(v_minus);
    let m_plus = mats.m1_apply(v_plus);
    0.5 * dot(u, &mu) + 0.25 * (dot(v_minus, &m_minus) + dot(v_plus, &m_plus))
}

/// Spectral norm of the gradient map in the mass metrics: the square root
/// of the largest eigenvalue of M1^{-1} D M0^{-1} D^T. The stability limit
/// of the interior scheme is dt times this at most 1.
pub fn estimate_d_norm(mats: &FemMatrices, m0_solver: &SpdSolver) -> Result<f64> {
    if mats.d.nnz() == 0 {
        return Ok(0.0);
    }
    let n_u = mats.m0.nrows();
    let n_v = 3 * n_u;
    let apply = |x: &[f64]| -> Vec<f64> {
        let dtx = mats.d.apply_transpose(x);
        let m0i = m0_solver.solve(&dtx);
        let dx = mats.d.apply(&m0i);
        let mut out = vec![0.0; n_v];
        for c in 0..3 {
            let sol = m0_solver.solve(&dx[c * n_u..(c + 1) * n_u]);
            out[c * n_u..(c + 1) * n_u].copy_from_slice(&sol);
        }
        out
    };
    let metric = |x: &[f64], y: &[f64]| dot(x, &mats.m1_apply(y));
    let lam = power_iteration(n_v, apply, metric, 1e-4, 10_000, 12345)?;
    Ok(lam.max(0.0).sqrt())
}

/// Time grid for a target horizon: the smallest step count keeping
/// dt * d_norm at or below the requested fraction of the stability limit.
pub fn resolve_time_grid(t_final: f64, d_norm: f64, cfl_safety: f64) -> Result<(f64, usize)> {
    if t_final <= 0.0 || cfl_safety <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "horizon {t_final} and cfl fraction {cfl_safety} must be positive"
        )));
    }
    let n = ((t_final * d_norm / cfl_safety).ceil() as usize).max(1);
    Ok((t_final / n as f64, n))
}

/// Nodal forcing sampled at a given time.
pub type Forcing = Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// The assembled coupled integrator.
pub struct CoupledStepper {
    cfg: SimConfig,
    mats: FemMatrices,
    m0_solver: SpdSolver,
    weights: Vec<DMatrix<f64>>,
    /// Boundary solve matrix: zeroth weight plus dt times stabilization.
    sys: DMatrix<f64>,
    sys_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Trace stabilization block including its 2 alpha factor.
    h_psi: DMatrix<f64>,
    forcing: Option<Forcing>,
    d_norm: f64,
    state: SimState,
    n_phi: usize,
    n_psi: usize,
}

/// The two stabilization blocks: the flux-density block
/// C0^T M0^{-1} C0 / 2 and the trace block 2 alpha C1^T M1^{-1} C1.
pub(crate) fn stabilization_blocks(
    mats: &FemMatrices,
    m0_solver: &SpdSolver,
    alpha: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n_u = mats.m0.nrows();
    let c0d = mats.c0.to_dense();
    let mut m0inv_c0 = DMatrix::zeros(c0d.nrows(), c0d.ncols());
    for j in 0..c0d.ncols() {
        let col: Vec<f64> = (0..c0d.nrows()).map(|i| c0d[(i, j)]).collect();
        let sol = m0_solver.solve(&col);
        for i in 0..c0d.nrows() {
            m0inv_c0[(i, j)] = sol[i];
        }
    }
    let h_phi = 0.5 * c0d.transpose() * m0inv_c0;

    let c1d = mats.c1.to_dense();
    let mut m1inv_c1 = DMatrix::zeros(c1d.nrows(), c1d.ncols());
    for j in 0..c1d.ncols() {
        for c in 0..3 {
            let col: Vec<f64> = (0..n_u).map(|i| c1d[(c * n_u + i, j)]).collect();
            let sol = m0_solver.solve(&col);
            for i in 0..n_u {
                m1inv_c1[(c * n_u + i, j)] = sol[i];
            }
        }
    }
    let h_psi = 2.0 * alpha * c1d.transpose() * m1inv_c1;
    (h_phi, h_psi)
}

impl CoupledStepper {
    /// Builds the integrator: validates shapes and stability guards,
    /// factorizes the masses and the boundary solve matrix.
    pub fn new(
        mats: FemMatrices,
        weights: Vec<DMatrix<f64>>,
        cfg: SimConfig,
        u0: Vec<f64>,
        v0: Vec<f64>,
        forcing: Option<Forcing>,
    ) -> Result<Self> {
        let n_u = mats.m0.nrows();
        let n_phi = mats.c0.ncols();
        let n_psi = mats.c1.ncols();
        if u0.len() != n_u || v0.len() != 3 * n_u {
            return Err(Error::Dimension(format!(
                "initial data sized {} and {}, expected {} and {}",
                u0.len(),
                v0.len(),
                n_u,
                3 * n_u
            )));
        }
        if cfg.dt <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {}",
                cfg.dt
            )));
        }
        if weights.len() < cfg.n_steps.max(1) {
            return Err(Error::Dimension(format!(
                "{} weight matrices cannot cover {} steps",
                weights.len(),
                cfg.n_steps
            )));
        }
        let k = n_phi + n_psi;
        if weights[0].nrows() != k || weights[0].ncols() != k {
            return Err(Error::Dimension(format!(
                "weights are {}x{}, boundary space has dimension {k}",
                weights[0].nrows(),
                weights[0].ncols()
            )));
        }
        if cfg.alpha < 1.0 && !cfg.allow_unstable {
            return Err(Error::InvalidParameter(format!(
                "stabilization alpha {} is below 1; set allow_unstable to experiment",
                cfg.alpha
            )));
        }
        let m0_solver = SpdSolver::new(&mats.m0, true)?;
        let d_norm = estimate_d_norm(&mats, &m0_solver)?;
        if cfg.dt * d_norm > 1.0 && !cfg.allow_unstable {
            return Err(Error::InvalidParameter(format!(
                "dt {} exceeds the stability limit {:.6e}; set allow_unstable to experiment",
                cfg.dt,
                1.0 / d_norm
            )));
        }

        let (h_phi, h_psi) = stabilization_blocks(&mats, &m0_solver, cfg.alpha);
        let mut sys = weights[0].clone();
        for i in 0..n_phi {
            for j in 0..n_phi {
                sys[(i, j)] += cfg.dt * h_phi[(i, j)];
            }
        }
        for i in 0..n_psi {
            for j in 0..n_psi {
                sys[(n_phi + i, n_phi + j)] += cfg.dt * h_psi[(i, j)];
            }
        }
        let sym = (&sys + sys.transpose()) * 0.5;
        if k > 0 && Cholesky::new(sym).is_none() {
            return Err(Error::Configuration(
                "the symmetric part of the boundary solve matrix is not positive definite"
                    .into(),
            ));
        }
        let sys_lu = sys.clone().lu();
        if k > 0 && !sys_lu.is_invertible() {
            return Err(Error::Configuration(
                "the boundary solve matrix is singular".into(),
            ));
        }
        let state = SimState {
            n: 0,
            u: u0,
            v: v0,
            phi_hist: Vec::new(),
            psi_hist: vec![vec![0.0; n_psi]],
        };
        Ok(CoupledStepper {
            cfg,
            mats,
            m0_solver,
            weights,
            sys,
            sys_lu,
            h_psi,
            forcing,
            d_norm,
            state,
            n_phi,
            n_psi,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn d_norm(&self) -> f64 {
        self.d_norm
    }

    /// The assembled interior and coupling matrices the integrator owns.
    pub fn matrices(&self) -> &FemMatrices {
        &self.mats
    }

    /// The factorized boundary solve matrix.
    pub fn boundary_matrix(&self) -> &DMatrix<f64> {
        &self.sys
    }

    fn m1_solve(&self, x: &[f64]) -> Vec<f64> {
        let n_u = self.mats.m0.nrows();
        let mut out = vec![0.0; 3 * n_u];
        for c in 0..3 {
            let sol = self.m0_solver.solve(&x[c * n_u..(c + 1) * n_u]);
            out[c * n_u..(c + 1) * n_u].copy_from_slice(&sol);
        }
        out
    }

    /// Flux acceleration M1^{-1} (D u - C1 psi) at the current state.
    fn acceleration(&self) -> Vec<f64> {
        let mut rhs = self.mats.d.apply(&self.state.u);
        let cpsi = self.mats.c1.apply(self.state.psi());
        for (r, c) in rhs.iter_mut().zip(cpsi.iter()) {
            *r -= c;
        }
        self.m1_solve(&rhs)
    }

    /// Discrete field energy at the current step.
    pub fn energy(&self) -> f64 {
        let a = self.acceleration();
        let half = 0.5 * self.cfg.dt;
        let vm: Vec<f64> = self
            .state
            .v
            .iter()
            .zip(a.iter())
            .map(|(v, a)| v - half * a)
            .collect();
        let vp: Vec<f64> = self
            .state
            .v
            .iter()
            .zip(a.iter())
            .map(|(v, a)| v + half * a)
            .collect();
        field_energy(&self.mats, &self.state.u, &vm, &vp)
    }

    /// Convolution tail sum_{j<n} B_{n-j} (phi_half_j; psi_bar_j), in a
    /// fixed chunked order independent of the thread count.
    fn history_tail(&self) -> DVector<f64> {
        let n = self.state.n;
        let k = self.n_phi + self.n_psi;
        let mut total = DVector::zeros(k);
        if n == 0 {
            return total;
        }
        let idx: Vec<usize> = (0..n).collect();
        let partials: Vec<DVector<f64>> = idx
            .chunks(32)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|chunk| {
                let mut acc = DVector::zeros(k);
                for &j in chunk {
                    let mut z = DVector::zeros(k);
                    for (i, &p) in self.state.phi_hist[j].iter().enumerate() {
                        z[i] = p;
                    }
                    for i in 0..self.n_psi {
                        z[self.n_phi + i] =
                            0.5 * (self.state.psi_hist[j + 1][i] + self.state.psi_hist[j][i]);
                    }
                    acc += &self.weights[n - j] * z;
                }
                acc
            })
            .collect();
        for p in partials {
            total += p;
        }
        total
    }

    /// Advances one step; returns the boundary solve residual.
    pub fn step(&mut self) -> Result<f64> {
        let dt = self.cfg.dt;
        let n = self.state.n;
        let t_half = (n as f64 + 0.5) * dt;
        let n_u = self.mats.m0.nrows();

        let a = self.acceleration();
        let v_half: Vec<f64> = self
            .state
            .v
            .iter()
            .zip(a.iter())
            .map(|(v, a)| v + 0.5 * dt * a)
            .collect();

        let f_half = match &self.forcing {
            Some(f) => {
                let fv = f(t_half);
                if fv.len() != n_u {
                    return Err(Error::Dimension(format!(
                        "forcing returned {} values for {} nodes",
                        fv.len(),
                        n_u
                    )));
                }
                fv
            }
            None => vec![0.0; n_u],
        };

        // Midpoint scalar data, with the unknown flux-density term kept on
        // the left of the boundary system.
        let dtv = self.mats.d.apply_transpose(&v_half);
        let m0inv_dtv = self.m0_solver.solve(&dtv);
        let mut u_mid = self.state.u.clone();
        for i in 0..n_u {
            u_mid[i] += 0.5 * dt * (f_half[i] - m0inv_dtv[i]);
        }
        let chi_phi = self.mats.c0.apply_transpose(&u_mid);
        let mut chi_psi = self.mats.c1.apply_transpose(&v_half);
        let psi_n = self.state.psi().to_vec();
        if self.n_psi > 0 {
            let hp = &self.h_psi * DVector::from_column_slice(&psi_n);
            for i in 0..self.n_psi {
                chi_psi[i] += dt * hp[i];
            }
        }
        let mut rhs = DVector::zeros(self.n_phi + self.n_psi);
        for (i, &c) in chi_phi.iter().enumerate() {
            rhs[i] = c;
        }
        for (i, &c) in chi_psi.iter().enumerate() {
            rhs[self.n_phi + i] = c;
        }
        rhs -= self.history_tail();

        let sol = self
            .sys_lu
            .solve(&rhs)
            .ok_or_else(|| Error::NonConvergence("boundary solve failed".into()))?;
        let phi_half: Vec<f64> = (0..self.n_phi).map(|i| sol[i]).collect();
        let psi_bar: Vec<f64> = (0..self.n_psi).map(|i| sol[self.n_phi + i]).collect();
        let psi_next: Vec<f64> = psi_bar
            .iter()
            .zip(psi_n.iter())
            .map(|(b, p)| 2.0 * b - p)
            .collect();

        let cphi = self.mats.c0.apply(&phi_half);
        let m0inv_cphi = self.m0_solver.solve(&cphi);
        let mut u_next = self.state.u.clone();
        for i in 0..n_u {
            u_next[i] += dt * (f_half[i] - m0inv_dtv[i] - m0inv_cphi[i]);
        }

        let mut kick = self.mats.d.apply(&u_next);
        let cpsi = self.mats.c1.apply(&psi_next);
        for (k, c) in kick.iter_mut().zip(cpsi.iter()) {
            *k -= c;
        }
        let kick = self.m1_solve(&kick);
        let v_next: Vec<f64> = v_half
            .iter()
            .zip(kick.iter())
            .map(|(v, k)| v + 0.5 * dt * k)
            .collect();

        let finite = u_next.iter().chain(v_next.iter()).chain(psi_next.iter());
        if !finite.clone().all(|x| x.is_finite()) {
            let energy = self.energy();
            return Err(Error::Instability {
                step: n + 1,
                energy,
            });
        }

        let resid_vec = &self.sys * &sol - &rhs;
        let rhs_norm = rhs.norm();
        let residual = if rhs_norm > 0.0 {
            resid_vec.norm() / rhs_norm
        } else {
            resid_vec.norm()
        };
        if residual > 1e-9 {
            return Err(Error::NonConvergence(format!(
                "boundary solve residual {residual:.3e} at step {n}"
            )));
        }

        self.state.u = u_next;
        self.state.v = v_next;
        self.state.phi_hist.push(phi_half);
        self.state.psi_hist.push(psi_next);
        self.state.n = n + 1;
        Ok(residual)
    }

    /// Runs the configured number of steps, producing the energy trace.
    /// Row n records the energy at step n and the residual of the solve
    /// that advanced it; the final row has no solve and records zero.
    pub fn run(&mut self) -> Result<EnergyTrace> {
        let mut trace = EnergyTrace::default();
        for n in self.state.n..self.cfg.n_steps {
            let energy = self.energy();
            if !energy.is_finite() {
                return Err(Error::Instability { step: n, energy });
            }
            let residual = self.step()?;
            trace.rows.push(TraceRow {
                step: n,
                time: n as f64 * self.cfg.dt,
                energy,
                solve_residual: residual,
            });
        }
        let energy = self.energy();
        if !energy.is_finite() {
            return Err(Error::Instability {
                step: self.cfg.n_steps,
                energy,
            });
        }
        trace.rows.push(TraceRow {
            step: self.cfg.n_steps,
            time: self.cfg.n_steps as f64 * self.cfg.dt,
            energy,
            solve_residual: 0.0,
        });
        Ok(trace)
    }
}
