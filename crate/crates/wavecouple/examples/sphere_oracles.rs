//! Check the boundary operators against closed-form values on the unit
//! sphere: the static single-layer form of the constant density and the
//! interior/exterior layer potentials of a uniform charge.

use nalgebra::{Complex, DVector, Point3};
use wavecouple::bem::{assemble_boundary_ops, potential_matrices};
use wavecouple::mesh::make_icosphere;
use wavecouple::quadrature::QuadratureConfig;
use wavecouple::Result;

fn main() -> Result<()> {
    let q = QuadratureConfig::default();
    let s_static = Complex::new(1e-8, 0.0);

    // <1, V 1> over the unit sphere is 4 pi for the Laplace kernel; the
    // all-ones density has coefficient 1 on every triangle, so the Galerkin
    // form is the plain sum of matrix entries.
    println!("single layer form vs 4 pi:");
    for level in 1..=3 {
        let sphere = make_icosphere(level, 1.0)?;
        let ops = assemble_boundary_ops(s_static, &sphere, &q)?;
        let form: Complex<f64> = ops.v.iter().sum();
        let exact = 4.0 * std::f64::consts::PI;
        println!(
            "  level {level}: {:.6} (relative error {:.2e})",
            form.re,
            (form.re - exact).abs() / exact
        );
    }

    // A uniform single-layer density on the sphere gives potential 1 inside
    // and 1/r outside; the double layer of a constant jumps from -1 to 0.
    let sphere = make_icosphere(2, 1.0)?;
    let inside = Point3::new(0.3, -0.2, 0.1);
    let outside = Point3::new(0.0, 0.0, 2.0);
    let rows = potential_matrices(s_static, &[inside, outside], &sphere, 4)?;
    let ones_tri = DVector::from_element(sphere.triangles.len(), Complex::new(1.0, 0.0));
    let ones_vtx = DVector::from_element(sphere.vertices.len(), Complex::new(1.0, 0.0));
    let single = &rows.s_rows * &ones_tri;
    let double = &rows.d_rows * &ones_vtx;
    println!("single layer of density 1: inside {:.5} (exact 1), outside {:.5} (exact 0.5)",
        single[0].re, single[1].re);
    println!("double layer of density 1: inside {:.5} (exact -1), outside {:.5} (exact 0)",
        double[0].re, double[1].re);
    Ok(())
}
