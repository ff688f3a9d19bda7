use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point element type: `f32` for training and inference, `f64` for
/// gradient checks.
pub trait Scalar:
    Float + Debug + Display + Default + Sum + Send + Sync + 'static
{
    fn erf(self) -> Self;

    /// Converts an `f64` constant, rounding when `Self` is narrower.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }
    fn lit(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }
    fn lit(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}
