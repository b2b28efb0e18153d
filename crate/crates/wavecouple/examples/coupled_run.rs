//! Run the coupled interior/exterior time stepper programmatically on a
//! small cube and print the energy history as radiation carries it away.

use wavecouple::calderon::{calderon_cq_weights, CqContour};
use wavecouple::fem::{assemble, interpolate, CoupledSpace};
use wavecouple::mesh::make_cube_mesh;
use wavecouple::quadrature::QuadratureConfig;
use wavecouple::stepper::{resolve_time_grid, CoupledStepper, SimConfig};
use wavecouple::Result;

fn main() -> Result<()> {
    let space = CoupledSpace::new(make_cube_mesh(3, 1.0)?)?;
    let mats = assemble(&space)?;
    let u0 = interpolate(&space.volume, |p| {
        let r2 = (p - nalgebra::Point3::new(0.5, 0.5, 0.5)).norm_squared();
        (-r2 / 0.01).exp()
    });

    let m0_solver = wavecouple::linalg::SpdSolver::new(&mats.m0, true)?;
    let d_norm = wavecouple::stepper::estimate_d_norm(&mats, &m0_solver)?;
    let (dt, n_steps) = resolve_time_grid(1.0, d_norm, 0.9)?;
    println!("flux norm {d_norm:.3}, dt {dt:.4}, {n_steps} steps");

    let weights = calderon_cq_weights(
        dt,
        n_steps,
        &space.surface,
        &QuadratureConfig::default(),
        &CqContour::default(),
    )?;
    let config = SimConfig::new(dt, n_steps);
    let v0 = vec![0.0; 3 * u0.len()];
    let mut stepper = CoupledStepper::new(mats, weights, config, u0, v0, None)?;
    let trace = stepper.run()?;

    println!("{:>6} {:>10} {:>12}", "step", "time", "energy");
    for row in trace.rows.iter().step_by(4) {
        println!("{:>6} {:>10.4} {:>12.5e}", row.step, row.time, row.energy);
    }
    let first = trace.rows.first().expect("nonempty trace").energy;
    let last = trace.rows.last().expect("nonempty trace").energy;
    println!("energy ratio over the run: {:.4}", last / first);
    Ok(())
}
