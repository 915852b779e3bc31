//! Scalar abstraction for the grid, dynamics and classical layers.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Real scalar usable by the spectral kernels: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or parameter.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Complex<T> = num_complex::Complex<T>;

#[inline]
pub(crate) fn cis<T: Real>(phase: T) -> Complex<T> {
    Complex::new(phase.cos(), phase.sin())
}
