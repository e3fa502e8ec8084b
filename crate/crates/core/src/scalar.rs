//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// A real floating-point type usable for models, solvers and audits.
///
/// Implemented for `f32` and `f64`. Tolerances throughout the crate are
/// written as `f64` literals and pass through [`Scalar::tol`], which clamps
/// them to something the type can actually resolve.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Machine epsilon of the type, widened to `f64`.
    const EPSILON: f64;

    /// Converts an `f64` literal into this type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Tolerance `v`, floored at one hundred machine epsilons.
    fn tol(v: f64) -> Self {
        Self::lit(v.max(100.0 * Self::EPSILON))
    }

    /// Widens to `f64` (used for printing and for building expression literals).
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const EPSILON: f64 = f32::EPSILON as f64;
}

impl Scalar for f64 {
    const EPSILON: f64 = f64::EPSILON;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(f64::tol(1e-12), 1e-12);
        assert!(f32::tol(1e-12) > 1e-6);
        assert_eq!(f32::lit(0.5), 0.5f32);
    }
}
