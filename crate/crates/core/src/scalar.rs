//! The scalar abstraction shared by the plain `f64` pipeline and the
//! taped reverse-mode pipeline.
//!
//! Every numerical stage (forward kinematics, finite differences, RNEA,
//! filtering, the refinement loss) is written once against [`Scalar`].
//! Instantiated with `f64` it is the ordinary pipeline; instantiated with
//! [`crate::ad::Var`] every primitive is recorded on a tape so that the
//! gradient of a scalar output can be pulled back to the inputs.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    /// True when operations on this type are recorded for differentiation.
    const TAPED: bool;

    /// Lifts a constant. Constants carry no derivative.
    fn cst(v: f64) -> Self;

    /// The primal value.
    fn value(self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn acos(self) -> Self;
    /// `self.atan2(x)` is the angle of the point `(x, self)`.
    fn atan2(self, x: Self) -> Self;

    /// Euclidean norm of a 3-vector. The derivative at the origin is taken
    /// as zero.
    fn norm3(x: Self, y: Self, z: Self) -> Self;

    /// `max(self, 0)` with subgradient 0 at exactly 0.
    fn relu(self) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::cst(1.0)
    }
}

impl Scalar for f64 {
    const TAPED: bool = false;

    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn acos(self) -> Self {
        f64::acos(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn norm3(x: Self, y: Self, z: Self) -> Self {
        (x * x + y * y + z * z).sqrt()
    }
    #[inline]
    fn relu(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
}
