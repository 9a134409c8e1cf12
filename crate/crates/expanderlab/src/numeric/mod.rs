//! Generic numeric kernels: steppers, stencils, root finders, tridiagonal
//! pencils, and small least squares.
//!
//! Everything here is generic over [`scalar::Scalar`] and free of domain
//! knowledge; the geometry and spectral layers instantiate the kernels at
//! the crate-level `Real` type.

pub mod fit;
pub mod ode;
pub mod roots;
pub mod scalar;
pub mod stencil;
pub mod tridiag;
