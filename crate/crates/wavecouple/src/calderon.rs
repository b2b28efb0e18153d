//! The coupled boundary operator block at one frequency and its
//! convolution-quadrature time discretization.
//!
//! At a complex frequency s with positive real part the block couples the
//! two boundary densities through
//!
//! ```text
//!   B(s) = [ s V(s)    K(s)   ]
//!          [ -K(s)^T   W(s)/s ]
//! ```
//!
//! whose Hermitian part is positive semidefinite. The time-domain operator
//! is discretized with second-order backward differentiation: weights come
//! from trapezoidal contour quadrature of the generating function on a
//! scaled circle, sampling only half the frequencies and folding conjugate
//! pairs so the accumulated weights are exactly real. Two runtime checks
//! guard the contour: a sampled imaginary-part bound on the unfolded
//! Fourier sums, and agreement of the zeroth weight with the operator
//! evaluated directly at the leading BDF2 frequency.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bem::assemble_boundary_ops;
use crate::error::{Error, Result};
use crate::mesh::SurfaceMesh;
use crate::quadrature::QuadratureConfig;

/// BDF2 generating polynomial delta(z) = (1 - z) + (1 - z)^2 / 2.
pub fn bdf2_delta(z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    (one - z) + (one - z) * (one - z) * 0.5
}

/// Assembles the coupled boundary block at frequency s, ordered with the
/// piecewise-constant density first and the piecewise-linear one second.
pub fn calderon_block(
    s: Complex64,
    surf: &SurfaceMesh,
    q: &QuadratureConfig,
) -> Result<DMatrix<Complex64>> {
    let ops = assemble_boundary_ops(s, surf, q)?;
    let nt = ops.v.nrows();
    let nv = ops.w.nrows();
    let mut block = DMatrix::from_element(nt + nv, nt + nv, Complex64::new(0.0, 0.0));
    let sinv = Complex64::new(1.0, 0.0) / s;
    for i in 0..nt {
        for j in 0..nt {
            block[(i, j)] = s * ops.v[(i, j)];
        }
        for j in 0..nv {
            block[(i, nt + j)] = ops.k[(i, j)];
        }
    }
    for i in 0..nv {
        for j in 0..nt {
            block[(nt + i, j)] = -ops.kt[(i, j)];
        }
        for j in 0..nv {
            block[(nt + i, nt + j)] = sinv * ops.w[(i, j)];
        }
    }
    Ok(block)
}

/// Smallest real part of z^H M z over seeded random unit probe vectors.
pub fn coercivity_probe(m: &DMatrix<Complex64>, seed: u64, n_probes: usize) -> f64 {
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..n_probes {
        let mut z: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm: f64 = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in &mut z {
            *c /= norm;
        }
        let mut quad = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += m[(i, j)] * z[j];
            }
            quad += z[i].conj() * row;
        }
        worst = worst.min(quad.re);
    }
    worst
}

/// Contour parameters for the convolution-quadrature weights. The sample
/// circle radius is eps^(1/(2(n+1))), balancing aliasing against roundoff
/// amplification.
#[derive(Debug, Clone, Copy)]
pub struct CqContour {
    pub eps: f64,
}

impl Default for CqContour {
    fn default() -> Self {
        CqContour { eps: 1e-12 }
    }
}

/// How many frequency samples a weight computation will assemble after
/// conjugate-pair folding: one more than half the number of weights.
pub fn cq_sample_count(n_steps: usize) -> usize {
    (n_steps + 1) / 2 + 1
}

/// Computes the convolution-quadrature weight matrices W_0 .. W_n for the
/// transfer function evaluated by `assemble`, on a time grid of spacing
/// dt. The closure is called only in the open right half plane; samples
/// run in parallel within bounded chunks and accumulate in a fixed order.
pub fn bdf2_cq_weights<F>(
    dt: f64,
    n_steps: usize,
    contour: &CqContour,
    assemble: F,
) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(Complex64) -> Result<DMatrix<Complex64>> + Sync,
{
    if dt <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !(contour.eps > 0.0 && contour.eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "contour eps must lie in (0, 1), got {}",
            contour.eps
        )));
    }
    let np = n_steps + 1;
    let lambda = contour.eps.powf(1.0 / (2.0 * np as f64));
    let theta = 2.0 * std::f64::consts::PI / np as f64;
    let phases: Vec<(f64, f64)> = (0..np)
        .map(|k| {
            let a = theta * k as f64;
            (a.cos(), a.sin())
        })
        .collect();

    // Frequencies come in conjugate pairs; sample the closed upper half.
    let m_half = np / 2;
    let freqs: Vec<Complex64> = (0..=m_half)
        .map(|l| {
            let zeta = Complex64::new(phases[l].0, phases[l].1);
            bdf2_delta(lambda * zeta) / dt
        })
        .collect();
    for (l, s) in freqs.iter().enumerate() {
        if s.re <= 0.0 {
            return Err(Error::Contour(format!(
                "contour sample {l} has nonpositive real part {}",
                s.re
            )));
        }
    }

    let mut weights: Vec<DMatrix<f64>> = Vec::new();
    let mut shape = (0usize, 0usize);
    // Sampled entries for the imaginary-part check on the unfolded sums.
    let mut check: Vec<(usize, usize, usize, Complex64)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let chunk_size = 8usize;
    let idx: Vec<usize> = (0..=m_half).collect();
    for chunk in idx.chunks(chunk_size) {
        let samples: Vec<(usize, DMatrix<Complex64>)> = chunk
            .par_iter()
            .map(|&l| assemble(freqs[l]).map(|m| (l, m)))
            .collect::<Result<Vec<_>>>()?;
        for (l, sample) in &samples {
            if weights.is_empty() {
                shape = (sample.nrows(), sample.ncols());
                weights =
                    vec![DMatrix::zeros(shape.0, shape.1); np];
                for _ in 0..8.min(shape.0 * shape.1) {
                    check.push((
                        rng.gen_range(0..shape.0),
                        rng.gen_range(0..shape.1),
                        rng.gen_range(0..np),
                        Complex64::new(0.0, 0.0),
                    ));
                }
            }
            if (sample.nrows(), sample.ncols()) != shape {
                return Err(Error::Dimension(format!(
                    "transfer function changed shape at sample {l}: {}x{} vs {}x{}",
                    sample.nrows(),
                    sample.ncols(),
                    shape.0,
                    shape.1
                )));
            }
            // A sample is its own conjugate at the real frequencies.
            let self_conj = *l == 0 || (np % 2 == 0 && *l == np / 2);
            let mult = if self_conj { 1.0 } else { 2.0 };
            for (n, w) in weights.iter_mut().enumerate() {
                let (c, sn) = phases[(l * n) % np];
                for i in 0..shape.0 {
                    for j in 0..shape.1 {
                        let b = sample[(i, j)];
                        w[(i, j)] += mult * (b.re * c + b.im * sn);
                    }
                }
            }
            for (i, j, n, acc) in check.iter_mut() {
                let b = sample[(*i, *j)];
                let (c, sn) = phases[(*l * *n) % np];
                *acc += b * Complex64::new(c, -sn);
                if !self_conj {
                    let lp = np - *l;
                    let (cp, snp) = phases[(lp * *n) % np];
                    *acc += b.conj() * Complex64::new(cp, -snp);
                }
            }
        }
    }

    let mut max_w: f64 = 0.0;
    for (n, w) in weights.iter_mut().enumerate() {
        let scale = lambda.powi(-(n as i32)) / np as f64;
        for e in w.iter_mut() {
            *e *= scale;
            max_w = max_w.max(e.abs());
        }
    }
    let max_im = check
        .iter()
        .map(|&(_, _, n, acc)| (acc.im * lambda.powi(-(n as i32)) / np as f64).abs())
        .fold(0.0f64, f64::max);
    if max_im > 1e-8 * max_w.max(f64::MIN_POSITIVE) {
        return Err(Error::Contour(format!(
            "weights are not real: sampled imaginary part {max_im:.3e} vs magnitude {max_w:.3e}"
        )));
    }
    Ok(weights)
}

/// Convolution-quadrature weights of the coupled boundary operator block.
///
/// Beyond the generic contour checks this verifies that the zeroth weight
/// equals the block at the leading BDF2 frequency 3/(2 dt): the block's
/// zeroth weight always carries order-one self-interaction signal, so a
/// wrong contour radius or folding fault shows up here far above the
/// aliasing floor.
pub fn calderon_cq_weights(
    dt: f64,
    n_steps: usize,
    surf: &SurfaceMesh,
    q: &QuadratureConfig,
    contour: &CqContour,
) -> Result<Vec<DMatrix<f64>>> {
    let weights = bdf2_cq_weights(dt, n_steps, contour, |s| calderon_block(s, surf, q))?;
    let direct = calderon_block(Complex64::new(1.5 / dt, 0.0), surf, q)?;
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..direct.nrows() {
        for j in 0..direct.ncols() {
            diff = diff.max((weights[0][(i, j)] - direct[(i, j)].re).abs());
            scale = scale.max(direct[(i, j)].norm());
        }
    }
    if diff > 1e-4 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Contour(format!(
            "zeroth weight deviates from the direct block by {diff:.3e} against scale {scale:.3e}"
        )));
    }
    Ok(weights)
}
