//! Throwaway diagnostic: coupled run with a band-limited driven source at
//! default resolution against an enlarged-domain reference, longer window.

use nalgebra::Point3;
use wavecouple::postprocess::relative_l2_series;
use wavecouple::scenario::{execute, run_reference, BumpSpec, ForcingSpec, ReferenceSpec, Scenario};
use wavecouple::Result;

fn main() -> Result<()> {
    let mut scn = Scenario::default();
    scn.initial.amplitude = 0.0;
    scn.forcing = ForcingSpec::Pulse {
        bump: BumpSpec {
            center: Point3::new(0.5, 0.5, 0.5),
            width: 0.2,
            amplitude: 1.0,
        },
        frequency: 0.2,
        ramp: 2.0,
    };
    scn.time.t_final = 4.0;
    let probe = Point3::new(0.5, 0.5, 2.0);
    scn.probes.push(probe);

    let out = execute(&scn)?;
    let coupled = &out.probe.as_ref().expect("probe requested").values[0];
    println!(
        "coupled: {} steps at dt = {:.5} (weights {:.1}s, stepping {:.1}s)",
        out.n_steps, out.dt, out.timings.weights_s, out.timings.stepping_s
    );

    let fine = run_reference(
        &scn,
        &ReferenceSpec {
            side: 5.2,
            origin: Point3::new(-1.6, -1.6, -1.6),
            subdivisions: 42,
            substeps: 4,
        },
        out.dt,
        out.n_steps,
    )?;

    println!("probe series:");
    for j in (0..out.n_steps).step_by(3) {
        println!(
            "  t={:6.3}  coupled={:+.5e}  ref={:+.5e}",
            (j as f64 + 0.5) * out.dt,
            coupled[j],
            fine.probe_series[0][j],
        );
    }
    println!(
        "relative L2 vs fine ref: {:.4}",
        relative_l2_series(coupled, &fine.probe_series[0])?
    );
    Ok(())
}
