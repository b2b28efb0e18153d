//! Transparent-boundary wave propagation on bounded 3D domains.
//!
//! The interior acoustic field is discretized with P1 finite elements and
//! advanced by a leapfrog scheme; the unbounded exterior is represented
//! exactly through a boundary-element Calderon operator discretized in time
//! by BDF2 convolution quadrature. The coupled update stays explicit in the
//! interior and solves one small dense boundary system per step.
//!
//! Modules follow the pipeline:
//! - [`mesh`]: tetrahedral volume meshes, boundary extraction, surface meshes
//! - [`fem`]: interior mass/coupling matrices, CFL norm estimation
//! - [`quadrature`]: Gauss rules and singular triangle-pair quadrature
//! - [`bem`]: boundary operators for the Laplace-domain kernel
//! - [`calderon`]: the coupled Calderon block and convolution quadrature
//! - [`stepper`]: the coupled time integrator
//! - [`postprocess`]: exterior field evaluation and field comparison
//! - [`scenario`]: end-to-end runs, convergence studies, verification suite

pub mod bem;
pub mod calderon;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod postprocess;
pub mod quadrature;
pub mod scenario;
pub mod stepper;

pub use error::{Error, Result};
