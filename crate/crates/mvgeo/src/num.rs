//! Scalar abstraction over the floating-point types the library supports.

use num_traits::FromPrimitive;

/// Floating-point scalar usable throughout the library: `f32` or `f64`.
///
/// All internal math is written against this trait; concrete aliases for the
/// common `f64` instantiation live at the crate root.
pub trait Scalar: nalgebra::RealField + FromPrimitive + Copy + Send + Sync {
    /// Shorthand for converting an `f64` literal into the scalar type.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Lossy conversion back to `f64` (exact for `f32`/`f64`).
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
