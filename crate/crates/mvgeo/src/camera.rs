//! Pinhole camera intrinsics and perspective projection.

use nalgebra::{Matrix3, Vector3};

use crate::error::{GeomError, Result};
use crate::num::Scalar;

/// Minimum projected depth treated as "in front of the camera".
pub const MIN_PROJECTIVE_DEPTH: f64 = 1e-9;

/// Real-valued image coordinates in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord<T> {
    pub u: T,
    pub v: T,
}

impl<T: Scalar> PixelCoord<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    /// Homogeneous lift `(u, v, 1)`.
    pub fn homogeneous(&self) -> Vector3<T> {
        Vector3::new(self.u, self.v, T::one())
    }
}

/// Pinhole intrinsics without skew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Scalar> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Result<Self> {
        if fx <= T::zero() || fy <= T::zero() {
            return Err(GeomError::InvalidArgument(
                "focal lengths must be positive".into(),
            ));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn to_matrix(&self) -> Matrix3<T> {
        Matrix3::new(
            self.fx,
            T::zero(),
            self.cx,
            T::zero(),
            self.fy,
            self.cy,
            T::zero(),
            T::zero(),
            T::one(),
        )
    }

    pub fn to_inverse_matrix(&self) -> Matrix3<T> {
        let ifx = T::one() / self.fx;
        let ify = T::one() / self.fy;
        Matrix3::new(
            ifx,
            T::zero(),
            -self.cx * ifx,
            T::zero(),
            ify,
            -self.cy * ify,
            T::zero(),
            T::zero(),
            T::one(),
        )
    }

    /// Unit-depth ray through a pixel: `K^-1 (u, v, 1)`.
    #[inline]
    pub fn ray(&self, p: PixelCoord<T>) -> Vector3<T> {
        Vector3::new(
            (p.u - self.cx) / self.fx,
            (p.v - self.cy) / self.fy,
            T::one(),
        )
    }
}

/// Perspective projection of a camera-frame point.
pub fn project<T: Scalar>(point: Vector3<T>, k: &Intrinsics<T>) -> Result<PixelCoord<T>> {
    if point.z <= T::of(MIN_PROJECTIVE_DEPTH) {
        return Err(GeomError::BehindCamera {
            z: point.z.to_f64(),
        });
    }
    Ok(PixelCoord::new(
        k.fx * point.x / point.z + k.cx,
        k.fy * point.y / point.z + k.cy,
    ))
}

/// Back-projection of a pixel at a given depth: `depth * K^-1 (u, v, 1)`.
pub fn backproject<T: Scalar>(p: PixelCoord<T>, depth: T, k: &Intrinsics<T>) -> Result<Vector3<T>> {
    if depth <= T::zero() {
        return Err(GeomError::NonPositiveDepth);
    }
    Ok(k.ray(p) * depth)
}
