//! Sparse geometric losses over ingested feature matches: symmetric
//! epipolar distance and re-projection error.
//!
//! Matches are consumed as given (detection, matching and multi-view
//! verification happen offline); coordinates are in pixels and converted to
//! calibrated coordinates internally where needed.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::camera::{Intrinsics, PixelCoord, MIN_PROJECTIVE_DEPTH};
use crate::error::{GeomError, Result};
use crate::grid::ScalarGrid;
use crate::losses::LossValue;
use crate::num::Scalar;
use crate::pose::{params_to_pose, skew, so3_left_jacobian, Pose, PoseParams};
use crate::view_synthesis::bilinear_at_with_grad;

/// Guard added inside the square-root denominators of the epipolar distance
/// so points at an epipole do not divide by zero.
const EPIPOLAR_EPS: f64 = 1e-12;

/// Pixel-coordinate correspondences between a target and a source view.
#[derive(Debug, Clone, Default)]
pub struct MatchSet<T> {
    matches: Vec<(PixelCoord<T>, PixelCoord<T>)>,
}

impl<T: Scalar> MatchSet<T> {
    pub fn new(matches: Vec<(PixelCoord<T>, PixelCoord<T>)>) -> Self {
        Self { matches }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn pairs(&self) -> &[(PixelCoord<T>, PixelCoord<T>)] {
        &self.matches
    }

    /// Check that every coordinate lies inside the given image bounds.
    pub fn validate_in_bounds(&self, width: usize, height: usize) -> Result<()> {
        let (w, h) = (T::of(width as f64 - 1.0), T::of(height as f64 - 1.0));
        for (i, (p, q)) in self.matches.iter().enumerate() {
            let ok = |c: &PixelCoord<T>| {
                c.is_finite() && c.u >= T::zero() && c.u <= w && c.v >= T::zero() && c.v <= h
            };
            if !ok(p) || !ok(q) {
                return Err(GeomError::MalformedLine {
                    line: i,
                    reason: "match coordinate outside image bounds".into(),
                });
            }
        }
        Ok(())
    }
}

/// Essential matrix `[t]_x R` of a relative pose.
#[derive(Debug, Clone, Copy)]
pub struct EssentialMatrix<T> {
    pub e: Matrix3<T>,
}

pub fn essential_from_pose<T: Scalar>(pose: &Pose<T>) -> Result<EssentialMatrix<T>> {
    if pose.translation.norm() <= T::of(1e-12) {
        return Err(GeomError::DegenerateTranslation);
    }
    Ok(EssentialMatrix {
        e: skew(pose.translation) * pose.rotation,
    })
}

impl<T: Scalar> EssentialMatrix<T> {
    /// Smallest singular value relative to the largest; an essential matrix
    /// built from a valid pose is rank 2 so this stays at numerical zero.
    pub fn rank_deficiency(&self) -> T {
        let sv = self.e.svd(false, false).singular_values;
        let max = sv.max();
        if max == T::zero() {
            T::zero()
        } else {
            sv.min() / max
        }
    }
}

/// Residual convention for the symmetric epipolar distance. The printed
/// expression uses signed numerators; absolute values avoid cancellation
/// between matches and are the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpipolarResidual {
    #[default]
    Absolute,
    Signed,
}

/// Loss value of a term that depends only on the pose parameters.
#[derive(Debug, Clone)]
pub struct PoseLoss<T> {
    pub value: T,
    pub grad_pose: Vec<T>,
}

/// Symmetric epipolar distance of a match set under a parameterized pose,
/// in calibrated coordinates, with gradients against the pose parameters.
pub fn epipolar_loss<T: Scalar>(
    matches: &MatchSet<T>,
    params: &PoseParams<T>,
    k_t: &Intrinsics<T>,
    k_s: &Intrinsics<T>,
    residual: EpipolarResidual,
) -> Result<PoseLoss<T>> {
    if matches.is_empty() {
        return Err(GeomError::EmptyMatchSet);
    }
    let pose = params_to_pose(params);
    if pose.translation.norm() <= T::of(1e-12) {
        return Err(GeomError::DegenerateTranslation);
    }
    let r = pose.rotation;
    let t = pose.translation;
    let e_mat = skew(t) * r;

    // dE/dtheta_k as six 3x3 matrices: rotation entries use the left
    // Jacobian of the exponential map, translation entries are [e_k]_x R.
    let jl = so3_left_jacobian(params.rotation_vector);
    let mut de = Vec::with_capacity(6);
    for k in 0..3 {
        let mut ek = Vector3::zeros();
        ek[k] = T::one();
        // dR/dr_k = [J_l e_k]_x R
        de.push(skew(t) * skew(jl * ek) * r);
    }
    for k in 0..3 {
        let mut ek = Vector3::zeros();
        ek[k] = T::one();
        de.push(skew(ek) * r);
    }

    let kt_inv = k_t.to_inverse_matrix();
    let ks_inv = k_s.to_inverse_matrix();
    let eps = T::of(EPIPOLAR_EPS);
    let mut value = T::zero();
    let mut grad = vec![T::zero(); 6];
    for (p_pix, q_pix) in matches.pairs() {
        let p = kt_inv * p_pix.homogeneous();
        let q = ks_inv * q_pix.homogeneous();
        let ep = e_mat * p;
        let etq = e_mat.transpose() * q;
        let e_scalar = q.dot(&ep);
        let n1 = (ep.x * ep.x + ep.y * ep.y + eps).sqrt();
        let n2 = (etq.x * etq.x + etq.y * etq.y + eps).sqrt();
        let (sig, mag) = match residual {
            EpipolarResidual::Absolute => (crate::losses::sign_of(e_scalar), e_scalar.abs()),
            EpipolarResidual::Signed => (T::one(), e_scalar),
        };
        value += mag / n1 + mag / n2;

        // d value / dE, assembled from the numerator and both denominators
        let qpt = q * p.transpose();
        let dn1 = Vector3::new(ep.x, ep.y, T::zero()) * p.transpose() / n1;
        let dn2 = q * Vector3::new(etq.x, etq.y, T::zero()).transpose() / n2;
        let dvalue_de = qpt * (sig * (T::one() / n1 + T::one() / n2))
            - dn1 * (mag / (n1 * n1))
            - dn2 * (mag / (n2 * n2));
        for k in 0..6 {
            grad[k] += dvalue_de.component_mul(&de[k]).sum();
        }
    }
    Ok(PoseLoss {
        value,
        grad_pose: grad,
    })
}

/// Re-projection error: each match's target depth is bilinearly sampled,
/// back-projected, transformed and projected into the source view; the loss
/// is the sum of pixel distances to the matched source coordinates.
///
/// Matches whose transformed point falls behind the camera contribute the
/// fixed `behind_penalty` (no gradient) instead of aborting, since
/// optimization can transiently push points behind the camera.
pub fn reprojection_loss<T: Scalar>(
    matches: &MatchSet<T>,
    params: &PoseParams<T>,
    depth_t: &ScalarGrid<T>,
    k_t: &Intrinsics<T>,
    k_s: &Intrinsics<T>,
    behind_penalty: T,
) -> Result<LossValue<T>> {
    if matches.is_empty() {
        return Err(GeomError::EmptyMatchSet);
    }
    if !depth_t.all_positive() {
        return Err(GeomError::NonPositiveDepth);
    }
    let pose = params_to_pose(params);
    let r = pose.rotation;
    let t = pose.translation;
    let jl = so3_left_jacobian(params.rotation_vector);
    let zmin = T::of(MIN_PROJECTIVE_DEPTH);
    let (w, h) = (depth_t.width(), depth_t.height());

    let mut out = LossValue::zero(w, h, 6);
    for (p_pix, q_pix) in matches.pairs() {
        let (d_hat, _, _) = bilinear_at_with_grad(depth_t, p_pix.u, p_pix.v);
        let ray = k_t.ray(*p_pix);
        let x_t = ray * d_hat;
        let y = r * x_t + t;
        if y.z <= zmin {
            out.value += behind_penalty;
            continue;
        }
        let iz = T::one() / y.z;
        let proj = Vector2::new(k_s.fx * y.x * iz + k_s.cx, k_s.fy * y.y * iz + k_s.cy);
        let resid = proj - Vector2::new(q_pix.u, q_pix.v);
        let dist = resid.norm();
        out.value += dist;
        if dist <= T::of(1e-12) {
            continue;
        }
        let dir = resid / dist;
        // d proj / d Y
        let jp_u = Vector3::new(k_s.fx * iz, T::zero(), -k_s.fx * y.x * iz * iz);
        let jp_v = Vector3::new(T::zero(), k_s.fy * iz, -k_s.fy * y.y * iz * iz);
        // d dist / d Y
        let ddist_dy = jp_u * dir.x + jp_v * dir.y;

        // depth path: dY/d d_hat = R ray, then scatter over the stencil
        let ddist_ddhat = ddist_dy.dot(&(r * ray));
        scatter_bilinear(depth_t, p_pix, ddist_ddhat, out.grad_depth.values_mut());

        // pose path
        let rx_hat = skew(r * x_t);
        for k in 0..3 {
            let mut ek = Vector3::zeros();
            ek[k] = T::one();
            out.grad_pose[k] += ddist_dy.dot(&(-(rx_hat * (jl * ek))));
            out.grad_pose[3 + k] += ddist_dy[k];
        }
    }
    Ok(out)
}

/// Scatter a derivative against a bilinearly sampled value into the four
/// stencil pixels of the sampled grid.
fn scatter_bilinear<T: Scalar>(grid: &ScalarGrid<T>, at: &PixelCoord<T>, g: T, out: &mut [T]) {
    let (w, h) = (grid.width(), grid.height());
    let x0 = (at.u.floor().to_f64() as isize).clamp(0, w as isize - 1) as usize;
    let y0 = (at.v.floor().to_f64() as isize).clamp(0, h as isize - 1) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let wx = (at.u - T::of(x0 as f64)).clamp(T::zero(), T::one());
    let wy = (at.v - T::of(y0 as f64)).clamp(T::zero(), T::one());
    let one = T::one();
    out[y0 * w + x0] += g * (one - wx) * (one - wy);
    out[y0 * w + x1] += g * wx * (one - wy);
    out[y1 * w + x0] += g * (one - wx) * wy;
    out[y1 * w + x1] += g * wx * wy;
}
