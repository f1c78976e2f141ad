//! SE(3) rigid transforms and their minimal 6-DoF parameterization.
//!
//! Rotations are parameterized by axis-angle vectors (Rodrigues exponential
//! map), which stays singularity-free below an angle of pi and has a simple
//! analytic Jacobian for chaining gradients through warped coordinates.

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::error::{GeomError, Result};
use crate::num::Scalar;

/// Orthonormality drift above which `compose` re-projects the rotation.
const ORTHONORMALITY_DRIFT: f64 = 1e-12;

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

/// Axis-angle rotation vector plus translation; the 6-vector layout is
/// `[r0, r1, r2, t0, t1, t2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams<T> {
    pub rotation_vector: Vector3<T>,
    pub translation: Vector3<T>,
}

/// Skew-symmetric cross-product matrix `[v]_x`.
pub fn skew<T: Scalar>(v: Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -v.z,
        v.y,
        v.z,
        T::zero(),
        -v.x,
        -v.y,
        v.x,
        T::zero(),
    )
}

/// Rodrigues rotation: `exp([r]_x)`.
pub fn so3_exp<T: Scalar>(r: Vector3<T>) -> Matrix3<T> {
    let theta2 = r.norm_squared();
    let hat = skew(r);
    if theta2 < T::of(1e-16) {
        // second-order series is exact to machine precision here
        return Matrix3::identity() + hat + hat * hat * T::of(0.5);
    }
    let theta = theta2.sqrt();
    let a = theta.sin() / theta;
    let b = (T::one() - theta.cos()) / theta2;
    Matrix3::identity() + hat * a + hat * hat * b
}

/// Log map of a rotation matrix to an axis-angle vector.
///
/// Fails with [`GeomError::AngleAtPi`] when the angle is within 1e-9 of pi,
/// where the axis sign is ambiguous.
pub fn so3_log<T: Scalar>(rot: &Matrix3<T>) -> Result<Vector3<T>> {
    let trace = rot.m11 + rot.m22 + rot.m33;
    let cos = ((trace - T::one()) * T::of(0.5)).clamp(-T::one(), T::one());
    let theta = cos.acos();
    if (T::pi() - theta).abs() < T::of(1e-9) {
        return Err(GeomError::AngleAtPi);
    }
    let vee = Vector3::new(
        rot.m32 - rot.m23,
        rot.m13 - rot.m31,
        rot.m21 - rot.m12,
    );
    if theta < T::of(1e-6) {
        // vee(R - R^T)/2 ~= r (1 - theta^2/6)
        return Ok(vee * T::of(0.5) * (T::one() + theta * theta / T::of(6.0)));
    }
    Ok(vee * (theta / (T::of(2.0) * theta.sin())))
}

/// Left Jacobian of the SO(3) exponential map:
/// `exp(r + d) ~= exp(J_l(r) d) exp(r)` for small `d`.
pub fn so3_left_jacobian<T: Scalar>(r: Vector3<T>) -> Matrix3<T> {
    let theta2 = r.norm_squared();
    let hat = skew(r);
    if theta2 < T::of(1e-16) {
        return Matrix3::identity() + hat * T::of(0.5) + hat * hat * T::of(1.0 / 6.0);
    }
    let theta = theta2.sqrt();
    let a = (T::one() - theta.cos()) / theta2;
    let b = (theta - theta.sin()) / (theta2 * theta);
    Matrix3::identity() + hat * a + hat * hat * b
}

impl<T: Scalar> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation built from XYZ Euler angles (roll, pitch, yaw), used when
    /// ingesting externally supplied pose tables.
    pub fn from_euler(roll: T, pitch: T, yaw: T, translation: Vector3<T>) -> Self {
        let rx = so3_exp(Vector3::new(roll, T::zero(), T::zero()));
        let ry = so3_exp(Vector3::new(T::zero(), pitch, T::zero()));
        let rz = so3_exp(Vector3::new(T::zero(), T::zero(), yaw));
        Self {
            rotation: rz * ry * rx,
            translation,
        }
    }

    /// Apply the transform to a point.
    #[inline]
    pub fn apply(&self, x: Vector3<T>) -> Vector3<T> {
        self.rotation * x + self.translation
    }

    /// Frobenius distance of `R^T R` from the identity.
    pub fn orthonormality_drift(&self) -> T {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    pub fn rotation_determinant(&self) -> T {
        self.rotation.determinant()
    }

    pub fn is_valid(&self, tol: T) -> bool {
        self.orthonormality_drift() <= tol && (self.rotation_determinant() - T::one()).abs() <= tol
    }

    /// Nearest rotation matrix by SVD projection.
    fn reorthonormalized(&self) -> Self {
        let svd = self.rotation.svd(true, true);
        let u = svd.u.expect("svd of 3x3 computes u");
        let vt = svd.v_t.expect("svd of 3x3 computes v_t");
        let det = (u * vt).determinant();
        let flip = Matrix3::from_diagonal(&Vector3::new(T::one(), T::one(), det.signum()));
        Self {
            rotation: u * flip * vt,
            translation: self.translation,
        }
    }
}

/// Transform applying `b` first, then `a`.
pub fn compose<T: Scalar>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    let out = Pose {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    };
    if out.orthonormality_drift() > T::of(ORTHONORMALITY_DRIFT) {
        out.reorthonormalized()
    } else {
        out
    }
}

/// Inverse transform `(R^T, -R^T t)`.
pub fn invert<T: Scalar>(p: &Pose<T>) -> Pose<T> {
    let rt = p.rotation.transpose();
    Pose {
        rotation: rt,
        translation: -(rt * p.translation),
    }
}

impl<T: Scalar> PoseParams<T> {
    pub fn new(rotation_vector: Vector3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation_vector,
            translation,
        }
    }

    pub fn zeros() -> Self {
        Self {
            rotation_vector: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Self {
            rotation_vector: Vector3::new(v[0], v[1], v[2]),
            translation: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.rotation_vector.x,
            self.rotation_vector.y,
            self.rotation_vector.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        )
    }
}

/// Exponential map of the 6-DoF parameters to a pose.
pub fn params_to_pose<T: Scalar>(params: &PoseParams<T>) -> Pose<T> {
    Pose {
        rotation: so3_exp(params.rotation_vector),
        translation: params.translation,
    }
}

/// Log map of a pose back to 6-DoF parameters (rotation angle must be
/// strictly below pi).
pub fn pose_to_params<T: Scalar>(pose: &Pose<T>) -> Result<PoseParams<T>> {
    Ok(PoseParams {
        rotation_vector: so3_log(&pose.rotation)?,
        translation: pose.translation,
    })
}
