//! Numerical laboratory for rotationally symmetric self-expanders of mean
//! curvature flow.
//!
//! The library is organized in two layers. `numeric` holds generic kernels
//! (ODE steppers, difference stencils, root finders, tridiagonal pencil
//! eigensolves, small least squares) usable at any float width. On top of
//! them, the domain modules work at the fixed width [`Real`]:
//!
//! * `geometry`: profile curves, curvature, the expander and shrinker
//!   residuals, Gaussian-weighted measures and norms, cone-scale
//!   diagnostics.
//! * `shooting`: the radial shooting method, asymptotic cone slopes, the
//!   slope-versus-neck map and its fold, branch solves.
//! * `spectral`: weighted Jacobi operators by rotational mode, Morse index
//!   and nullity, decay and concentration diagnostics, the conditioning
//!   probe for the linearized equation.
//! * `forms`: the weighted bilinear forms, their pullback and transversal
//!   variants, variation and perturbation checks, weighted Poincare
//!   ratios.
//! * `torus`: the closed rotationally symmetric shrinker, cone avoidance,
//!   and the expander barrier field.
//! * `degree`: signed counts of expanders over the cone-slope parameter.
//! * `cli`: the batch front door behind the `expanderlab` binary.

pub mod numeric;

pub mod cli;
pub mod degree;
pub mod forms;
pub mod geometry;

pub mod shooting;

pub mod spectral;
pub mod torus;

/// Working precision of the domain layer. The numeric kernels stay generic;
/// every default tolerance in the domain modules assumes this is `f64`.
pub type Real = f64;
