//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Real scalar used by tensors, geometry and statistics: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64` constants.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Rounds half away from zero (the `f64::round` convention) for any scalar.
#[inline]
pub fn round_half_away<T: Scalar>(x: T) -> T {
    x.round()
}

/// Folds an axial angle in degrees into `[0, 180)`.
pub fn fold_axial_deg<T: Scalar>(deg: T) -> T {
    let half_turn = T::lit(180.0);
    let mut a = deg % half_turn;
    if a < T::zero() {
        a += half_turn;
    }
    // -0.0 % 180 and values like 179.99999999999997 + 180 can land on 180.
    if a >= half_turn {
        a -= half_turn;
    }
    a
}
