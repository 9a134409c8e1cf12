//! Scalar abstraction for the numeric kernels.
//!
//! Everything under `numeric` (ODE stepping, root finding, tridiagonal
//! eigensolves, least squares, difference stencils) is generic over the
//! floating type so the kernels can be instantiated at `f32` or `f64`.
//! The domain layer pins `Real = f64` at the crate root; the default
//! tolerances there assume double precision.

use num_traits::float::FloatConst;
use num_traits::{Float, FromPrimitive};

/// Floating scalar with the conversions and bounds the kernels need.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for non-representable values,
    /// which cannot happen for the fixed literals used by the kernels.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    fn two() -> Self {
        Self::lit(2.0)
    }

    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + core::fmt::Debug
        + core::fmt::Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine_eps<S: Scalar>() -> S {
        S::epsilon()
    }

    #[test]
    fn instantiates_at_both_widths() {
        assert!(machine_eps::<f32>() > f32::lit(1e-9));
        assert!(machine_eps::<f64>() < f64::lit(1e-15));
        assert_eq!(f64::two(), 2.0);
        assert_eq!(f32::half(), 0.5);
    }
}
