//! Tiny temporal convergence study against a free-space reference run on
//! an enlarged domain, printing errors and observed orders.

use nalgebra::Point3;
use wavecouple::scenario::{convergence_study, BumpSpec, DomainSpec, ReferenceSpec, Scenario, StudyMode};
use wavecouple::Result;

fn main() -> Result<()> {
    let mut scn = Scenario::default();
    scn.domain = DomainSpec::Cube {
        side: 2.0,
        subdivisions: 3,
        origin: Point3::new(-1.0, -1.0, -1.0),
    };
    scn.initial = BumpSpec {
        center: Point3::origin(),
        width: 0.2,
        amplitude: 1.0,
    };
    scn.time.t_final = 0.75;
    scn.time.steps = Some(12);
    scn.reference = Some(ReferenceSpec {
        side: 6.0,
        origin: Point3::new(-3.0, -3.0, -3.0),
        subdivisions: 9,
        substeps: 4,
    });

    println!("halving dt on a fixed mesh, error against a fine reference:");
    let table = convergence_study(&scn, 2, StudyMode::Temporal)?;
    println!("{}", table.render());
    println!("csv form:\n{}", table.to_csv());
    Ok(())
}
