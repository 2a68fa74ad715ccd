//! Scalar abstraction for the numeric kernels.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + 'static {
    /// Shorthand for lossy conversion from `f64` literals.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("literal conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
