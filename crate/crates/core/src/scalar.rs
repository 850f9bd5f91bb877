use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating-point scalar used throughout the crate.
///
/// Implemented for `f32` and `f64`. Every numeric routine is generic over
/// this trait; the concrete aliases at the crate root pick `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Literal conversion; exact for every value representable in `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal fits in scalar")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits in scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Normalized sinc, `sin(pi x) / (pi x)`.
    fn sinc(self) -> Self {
        if self.abs() < Self::lit(1e-12) {
            Self::one()
        } else {
            let px = Self::PI() * self;
            px.sin() / px
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
