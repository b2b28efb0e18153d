//! Scalar convolution-quadrature demo: integrate g(t) = t with the
//! transfer function 1/s and watch the second-order error decay.

use nalgebra::{Complex, DMatrix};
use wavecouple::calderon::{bdf2_cq_weights, CqContour};
use wavecouple::Result;

/// Convolution error at t = 1 for F(s) = 1/s applied to g(t) = t.
fn endpoint_error(n_steps: usize) -> Result<f64> {
    let dt = 1.0 / n_steps as f64;
    let contour = CqContour::default();
    let weights = bdf2_cq_weights(dt, n_steps, &contour, |s| {
        Ok(DMatrix::from_element(1, 1, Complex::new(1.0, 0.0) / s))
    })?;
    let mut y = 0.0;
    for (j, w) in weights.iter().take(n_steps + 1).enumerate() {
        let g = (n_steps - j) as f64 * dt;
        y += w[(0, 0)] * g;
    }
    Ok((y - 0.5).abs())
}

fn main() -> Result<()> {
    println!("integrating g(t) = t up to t = 1 through the 1/s symbol:");
    println!("{:>8} {:>12} {:>8}", "steps", "error", "order");
    let mut prev: Option<f64> = None;
    for n_steps in [5, 10, 20, 40, 80] {
        let err = endpoint_error(n_steps)?;
        match prev {
            Some(p) => println!("{:>8} {:>12.4e} {:>8.3}", n_steps, err, (p / err).log2()),
            None => println!("{:>8} {:>12.4e} {:>8}", n_steps, err, "-"),
        }
        prev = Some(err);
    }
    println!("the limit of err * steps^2 is 1/4, the local second-order constant");
    Ok(())
}
