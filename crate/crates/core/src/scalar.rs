//! Floating-point abstraction shared by every numeric module.

use ndarray::NdFloat;
use num_traits::FromPrimitive;
use std::iter::Sum;

/// Real scalar type the library computes in (`f32` or `f64`).
pub trait Scalar: NdFloat + FromPrimitive + Default + Sum + 'static {
    /// Converts an `f64` constant into this scalar type.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
