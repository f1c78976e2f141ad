//! Inverse warping and differentiable bilinear sampling.
//!
//! For every target pixel the warp computes the source-image coordinate
//! implied by the target depth and the relative pose, together with a
//! validity mask. Sampling interpolates the source grid at those coordinates
//! and exposes the analytic spatial derivative of the interpolant, so losses
//! can chain gradients back to depth values and pose parameters.

use nalgebra::{Matrix3, Vector3};

use crate::camera::{Intrinsics, PixelCoord, MIN_PROJECTIVE_DEPTH};
use crate::error::{GeomError, Result};
use crate::grid::{Mask, ScalarGrid};
use crate::num::Scalar;
use crate::pose::{params_to_pose, skew, so3_left_jacobian, Pose, PoseParams};

/// Per-target-pixel source coordinates and validity.
///
/// A pixel is valid exactly when its projected depth is positive and its
/// warped coordinate lands inside `[0, W-1] x [0, H-1]`; pixels behind the
/// camera are invalid rather than an error since optimization can push
/// points there transiently.
#[derive(Debug, Clone)]
pub struct WarpField<T> {
    width: usize,
    height: usize,
    coords: Vec<PixelCoord<T>>,
    valid: Mask,
    jac: Option<WarpJacobian<T>>,
}

/// Derivatives of the warped coordinates with respect to the target depth
/// at the same pixel and to the pose parameters of the warp.
#[derive(Debug, Clone)]
pub struct WarpJacobian<T> {
    n_params: usize,
    /// `[du/dD, dv/dD]` per pixel.
    d_depth: Vec<[T; 2]>,
    /// `[du/dtheta_k, dv/dtheta_k]`, flattened as `pixel * n_params + k`.
    d_pose: Vec<[T; 2]>,
}

impl<T: Scalar> WarpField<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coord(&self, x: usize, y: usize) -> PixelCoord<T> {
        self.coords[y * self.width + x]
    }

    pub fn coords(&self) -> &[PixelCoord<T>] {
        &self.coords
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn jacobian(&self) -> Option<&WarpJacobian<T>> {
        self.jac.as_ref()
    }

    /// Number of pose parameters the jacobian was computed against
    /// (6 for a single pose, 12 for a chained pair).
    pub fn n_pose_params(&self) -> usize {
        self.jac.as_ref().map_or(0, |j| j.n_params)
    }
}

/// Pose input of a warp: either one parameterized pose or a chain through a
/// common center frame.
///
/// `ChainThroughCenter { a, b }` is the transform from the view reached by
/// `a` to the view reached by `b`, when both are expressed from the same
/// center frame: points are first mapped back to the center by `inv(a)` and
/// then forward by `b`. Coordinate gradients are reported against the 6
/// parameters of the direct pose, or the stacked 12 parameters `[a; b]` of
/// the chain.
#[derive(Debug, Clone, Copy)]
pub enum WarpPose<'a, T> {
    Direct(&'a PoseParams<T>),
    ChainThroughCenter {
        a: &'a PoseParams<T>,
        b: &'a PoseParams<T>,
    },
}

/// Columns `b_k`, `c_k` such that d X_s / d theta_k = [X_s]_x b_k + c_k.
struct PoseDerivColumns<T> {
    b: Vec<Vector3<T>>,
    c: Vec<Vector3<T>>,
}

impl<'a, T: Scalar> WarpPose<'a, T> {
    pub fn pose(&self) -> Pose<T> {
        match self {
            WarpPose::Direct(p) => params_to_pose(p),
            WarpPose::ChainThroughCenter { a, b } => {
                let pa = params_to_pose(a);
                let pb = params_to_pose(b);
                crate::pose::compose(&pb, &crate::pose::invert(&pa))
            }
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            WarpPose::Direct(_) => 6,
            WarpPose::ChainThroughCenter { .. } => 12,
        }
    }

    fn deriv_columns(&self) -> PoseDerivColumns<T> {
        let unit = |k: usize| {
            let mut e = Vector3::zeros();
            e[k] = T::one();
            e
        };
        match self {
            WarpPose::Direct(p) => {
                let jl = so3_left_jacobian(p.rotation_vector);
                let t_hat = skew(p.translation);
                let mut b = Vec::with_capacity(6);
                let mut c = Vec::with_capacity(6);
                for k in 0..3 {
                    let col = jl * unit(k);
                    b.push(-col);
                    c.push(t_hat * col);
                }
                for k in 0..3 {
                    b.push(Vector3::zeros());
                    c.push(unit(k));
                }
                PoseDerivColumns { b, c }
            }
            WarpPose::ChainThroughCenter { a, b: bp } => {
                // X_s = R_b R_a^T (X_t - t_a) + t_b
                let rb_rat = crate::pose::so3_exp(bp.rotation_vector)
                    * crate::pose::so3_exp(a.rotation_vector).transpose();
                let jla = so3_left_jacobian(a.rotation_vector);
                let jlb = so3_left_jacobian(bp.rotation_vector);
                let tb_hat = skew(bp.translation);
                let mut b = Vec::with_capacity(12);
                let mut c = Vec::with_capacity(12);
                for k in 0..3 {
                    let col = rb_rat * (jla * unit(k));
                    b.push(col);
                    c.push(-(tb_hat * col));
                }
                for k in 0..3 {
                    b.push(Vector3::zeros());
                    c.push(-(rb_rat * unit(k)));
                }
                for k in 0..3 {
                    let col = jlb * unit(k);
                    b.push(-col);
                    c.push(tb_hat * col);
                }
                for k in 0..3 {
                    b.push(Vector3::zeros());
                    c.push(unit(k));
                }
                PoseDerivColumns { b, c }
            }
        }
    }
}

fn warp_impl<T: Scalar>(
    depth_t: &ScalarGrid<T>,
    pose: &Pose<T>,
    derivs: Option<PoseDerivColumns<T>>,
    k_t: &Intrinsics<T>,
    k_s: &Intrinsics<T>,
) -> Result<WarpField<T>> {
    if !depth_t.all_positive() {
        return Err(GeomError::NonPositiveDepth);
    }
    let (w, h) = (depth_t.width(), depth_t.height());
    let zmin = T::of(MIN_PROJECTIVE_DEPTH);
    let u_max = T::of((w - 1) as f64);
    let v_max = T::of((h - 1) as f64);
    let r: Matrix3<T> = pose.rotation;
    let t = pose.translation;

    let n_params = derivs.as_ref().map_or(0, |d| d.b.len());
    let mut coords = Vec::with_capacity(w * h);
    let mut valid = Mask::filled(w, h, false);
    let mut jac = derivs.as_ref().map(|_| WarpJacobian {
        n_params,
        d_depth: Vec::with_capacity(w * h),
        d_pose: Vec::with_capacity(w * h * n_params),
    });

    for y in 0..h {
        for x in 0..w {
            let ray = k_t.ray(PixelCoord::new(T::of(x as f64), T::of(y as f64)));
            let d = depth_t.at(x, y);
            let xs = r * (ray * d) + t;
            if xs.z < zmin {
                coords.push(PixelCoord::new(-T::one(), -T::one()));
                if let Some(j) = jac.as_mut() {
                    j.d_depth.push([T::zero(); 2]);
                    for _ in 0..n_params {
                        j.d_pose.push([T::zero(); 2]);
                    }
                }
                continue;
            }
            let iz = T::one() / xs.z;
            let u = k_s.fx * xs.x * iz + k_s.cx;
            let v = k_s.fy * xs.y * iz + k_s.cy;
            coords.push(PixelCoord::new(u, v));
            let inside =
                u >= T::zero() && u <= u_max && v >= T::zero() && v <= v_max;
            valid.set(x, y, inside);

            if let Some(j) = jac.as_mut() {
                // d pixel / d X_s rows
                let jp_u = Vector3::new(k_s.fx * iz, T::zero(), -k_s.fx * xs.x * iz * iz);
                let jp_v = Vector3::new(T::zero(), k_s.fy * iz, -k_s.fy * xs.y * iz * iz);
                let dxs_dd = r * ray;
                j.d_depth.push([jp_u.dot(&dxs_dd), jp_v.dot(&dxs_dd)]);
                let d = derivs.as_ref().expect("derivs present when jac is");
                let xs_hat = skew(xs);
                for k in 0..n_params {
                    let dxs = xs_hat * d.b[k] + d.c[k];
                    j.d_pose.push([jp_u.dot(&dxs), jp_v.dot(&dxs)]);
                }
            }
        }
    }

    Ok(WarpField {
        width: w,
        height: h,
        coords,
        valid,
        jac,
    })
}

/// Warp field without derivatives (value-only path).
pub fn compute_warp<T: Scalar>(
    depth_t: &ScalarGrid<T>,
    pose_t_to_s: &Pose<T>,
    k_t: &Intrinsics<T>,
    k_s: &Intrinsics<T>,
) -> Result<WarpField<T>> {
    warp_impl(depth_t, pose_t_to_s, None, k_t, k_s)
}

/// Warp field with coordinate derivatives against depth and pose parameters.
pub fn compute_warp_with_grad<T: Scalar>(
    depth_t: &ScalarGrid<T>,
    pose: WarpPose<'_, T>,
    k_t: &Intrinsics<T>,
    k_s: &Intrinsics<T>,
) -> Result<WarpField<T>> {
    warp_impl(depth_t, &pose.pose(), Some(pose.deriv_columns()), k_t, k_s)
}

/// Result of sampling one source grid through a warp field.
#[derive(Debug, Clone)]
pub struct SampleResult<T> {
    values: ScalarGrid<T>,
    valid: Mask,
    /// `[d value / du, d value / dv]` per output pixel (piecewise within a
    /// bilinear cell).
    jac_coords: Vec<[T; 2]>,
    /// Per-pixel interpolation stencil for scattering gradients back to the
    /// source grid: base corner plus fractional weights.
    stencil: Vec<Stencil<T>>,
    source_width: usize,
    source_height: usize,
}

#[derive(Debug, Clone, Copy)]
struct Stencil<T> {
    x0: u32,
    y0: u32,
    wx: T,
    wy: T,
}

impl<T: Scalar> SampleResult<T> {
    pub fn values(&self) -> &ScalarGrid<T> {
        &self.values
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn jac_coords(&self) -> &[[T; 2]] {
        &self.jac_coords
    }

    /// Scatter an upstream per-output-pixel derivative into a gradient
    /// buffer for the sampled source grid.
    pub fn scatter_source_grad(&self, upstream: &[T], grad_source: &mut [T]) {
        debug_assert_eq!(grad_source.len(), self.source_width * self.source_height);
        let w = self.source_width;
        for (i, st) in self.stencil.iter().enumerate() {
            let g = upstream[i];
            if g == T::zero() || !self.valid.bits()[i] {
                continue;
            }
            let x0 = st.x0 as usize;
            let y0 = st.y0 as usize;
            let x1 = (x0 + 1).min(self.source_width - 1);
            let y1 = (y0 + 1).min(self.source_height - 1);
            let (wx, wy) = (st.wx, st.wy);
            let one = T::one();
            grad_source[y0 * w + x0] += g * (one - wx) * (one - wy);
            grad_source[y0 * w + x1] += g * wx * (one - wy);
            grad_source[y1 * w + x0] += g * (one - wx) * wy;
            grad_source[y1 * w + x1] += g * wx * wy;
        }
    }
}

#[inline]
fn bilinear_parts<T: Scalar>(source: &ScalarGrid<T>, u: T, v: T) -> (T, T, T, Stencil<T>) {
    let (sw, sh) = (source.width(), source.height());
    let fx = u.floor();
    let fy = v.floor();
    let x0 = (fx.to_f64() as isize).clamp(0, sw as isize - 1) as usize;
    let y0 = (fy.to_f64() as isize).clamp(0, sh as isize - 1) as usize;
    let x1 = (x0 + 1).min(sw - 1);
    let y1 = (y0 + 1).min(sh - 1);
    let wx = (u - T::of(x0 as f64)).clamp(T::zero(), T::one());
    let wy = (v - T::of(y0 as f64)).clamp(T::zero(), T::one());
    let i00 = source.at(x0, y0);
    let i10 = source.at(x1, y0);
    let i01 = source.at(x0, y1);
    let i11 = source.at(x1, y1);
    let one = T::one();
    let value = i00 * (one - wx) * (one - wy)
        + i10 * wx * (one - wy)
        + i01 * (one - wx) * wy
        + i11 * wx * wy;
    let du = (i10 - i00) * (one - wy) + (i11 - i01) * wy;
    let dv = (i01 - i00) * (one - wx) + (i11 - i10) * wx;
    (
        value,
        du,
        dv,
        Stencil {
            x0: x0 as u32,
            y0: y0 as u32,
            wx,
            wy,
        },
    )
}

/// Bilinear interpolation of a grid at an arbitrary in-bounds coordinate.
pub fn bilinear_at<T: Scalar>(source: &ScalarGrid<T>, u: T, v: T) -> T {
    bilinear_parts(source, u, v).0
}

/// Bilinear interpolation value plus its spatial derivative `(du, dv)`.
pub fn bilinear_at_with_grad<T: Scalar>(source: &ScalarGrid<T>, u: T, v: T) -> (T, T, T) {
    let (value, du, dv, _) = bilinear_parts(source, u, v);
    (value, du, dv)
}

/// Sample a source grid at every valid warp coordinate.
///
/// Invalid pixels produce value 0 with a cleared validity flag and do not
/// contribute to any downstream sum.
pub fn bilinear_sample<T: Scalar>(source: &ScalarGrid<T>, warp: &WarpField<T>) -> SampleResult<T> {
    let (w, h) = (warp.width, warp.height);
    let (sw, sh) = (source.width(), source.height());
    let u_max = T::of((sw - 1) as f64);
    let v_max = T::of((sh - 1) as f64);
    let mut values = Vec::with_capacity(w * h);
    let mut valid = Mask::filled(w, h, false);
    let mut jac = Vec::with_capacity(w * h);
    let mut stencil = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let c = warp.coords[i];
            let inside = warp.valid.bits()[i]
                && c.u >= T::zero()
                && c.u <= u_max
                && c.v >= T::zero()
                && c.v <= v_max;
            if !inside {
                values.push(T::zero());
                jac.push([T::zero(); 2]);
                stencil.push(Stencil {
                    x0: 0,
                    y0: 0,
                    wx: T::zero(),
                    wy: T::zero(),
                });
                continue;
            }
            valid.set(x, y, true);
            let (value, du, dv, st) = bilinear_parts(source, c.u, c.v);
            values.push(value);
            jac.push([du, dv]);
            stencil.push(st);
        }
    }
    SampleResult {
        values: ScalarGrid::from_fn(w, h, |x, y| values[y * w + x]),
        valid,
        jac_coords: jac,
        stencil,
        source_width: sw,
        source_height: sh,
    }
}

/// Value-only sampling into a caller-provided buffer (fast path for
/// finite-difference evaluation). Returns the values in row-major order;
/// invalid pixels are 0.
pub fn sample_values_into<T: Scalar>(
    source: &ScalarGrid<T>,
    warp: &WarpField<T>,
    out: &mut Vec<T>,
) {
    out.clear();
    let u_max = T::of((source.width() - 1) as f64);
    let v_max = T::of((source.height() - 1) as f64);
    for (i, c) in warp.coords.iter().enumerate() {
        let inside = warp.valid.bits()[i]
            && c.u >= T::zero()
            && c.u <= u_max
            && c.v >= T::zero()
            && c.v <= v_max;
        if inside {
            out.push(bilinear_parts(source, c.u, c.v).0);
        } else {
            out.push(T::zero());
        }
    }
}

/// Accumulate upstream derivatives (per output pixel, w.r.t. the sampled
/// value) into gradients for the warp's depth input and pose parameters.
pub fn backprop_through_warp<T: Scalar>(
    warp: &WarpField<T>,
    sample: &SampleResult<T>,
    upstream: &[T],
    grad_depth: Option<&mut [T]>,
    grad_pose: Option<&mut [T]>,
) {
    let jac = warp
        .jac
        .as_ref()
        .expect("warp must be computed with gradients to backprop");
    let n = jac.n_params;
    let zero = T::zero();
    let mut gd = grad_depth;
    let mut gp = grad_pose;
    for i in 0..upstream.len() {
        let g = upstream[i];
        if g == zero || !sample.valid.bits()[i] {
            continue;
        }
        let [du, dv] = sample.jac_coords[i];
        if let Some(gd) = gd.as_deref_mut() {
            let [dud, dvd] = jac.d_depth[i];
            gd[i] += g * (du * dud + dv * dvd);
        }
        if let Some(gp) = gp.as_deref_mut() {
            for k in 0..n {
                let [dup, dvp] = jac.d_pose[i * n + k];
                gp[k] += g * (du * dup + dv * dvp);
            }
        }
    }
}

/// Warp plus per-channel sampling: the synthesized view of a source image
/// in the target frame.
pub fn synthesize_view<T: Scalar>(
    source_channels: &[ScalarGrid<T>],
    depth_t: &ScalarGrid<T>,
    pose_t_to_s: &Pose<T>,
    k_t: &Intrinsics<T>,
    k_s: &Intrinsics<T>,
) -> Result<(Vec<SampleResult<T>>, WarpField<T>)> {
    let warp = compute_warp(depth_t, pose_t_to_s, k_t, k_s)?;
    let channels = source_channels
        .iter()
        .map(|ch| bilinear_sample(ch, &warp))
        .collect();
    Ok((channels, warp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k64() -> Intrinsics<f64> {
        Intrinsics::new(60.0, 60.0, 31.5, 31.5).unwrap()
    }

    fn smooth_grid(w: usize, h: usize, seed: f64) -> ScalarGrid<f64> {
        ScalarGrid::from_fn(w, h, |x, y| {
            0.5 + 0.3 * ((x as f64) * 0.21 + seed).sin() * ((y as f64) * 0.17 - seed).cos()
        })
    }

    #[test]
    fn identity_pose_warp_is_identity_map() {
        let depth = ScalarGrid::filled(16, 12, 4.0);
        let k = Intrinsics::new(20.0, 20.0, 7.5, 5.5).unwrap();
        let warp = compute_warp(&depth, &Pose::identity(), &k, &k).unwrap();
        assert_eq!(warp.valid().count(), 16 * 12);
        for y in 0..12 {
            for x in 0..16 {
                let c = warp.coord(x, y);
                assert!((c.u - x as f64).abs() < 1e-12);
                assert!((c.v - y as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn approach_by_half_depth_doubles_offsets_from_principal_point() {
        // Fronto-parallel plane at depth d, camera moved forward by d/2:
        // remaining depth d/2, so offsets from the principal point double.
        let d = 4.0;
        let depth = ScalarGrid::filled(64, 64, d);
        let k = k64();
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, -d / 2.0));
        let warp = compute_warp(&depth, &pose, &k, &k).unwrap();
        for &(x, y) in &[(0usize, 0usize), (63, 0), (0, 63), (63, 63)] {
            let c = warp.coord(x, y);
            let eu = k.cx + 2.0 * (x as f64 - k.cx);
            let ev = k.cy + 2.0 * (y as f64 - k.cy);
            assert!((c.u - eu).abs() < 1e-9, "({x},{y}): {} vs {eu}", c.u);
            assert!((c.v - ev).abs() < 1e-9);
        }
    }

    #[test]
    fn large_translation_invalidates_every_pixel() {
        let depth = ScalarGrid::filled(32, 32, 2.0);
        let k = k64();
        let pose = Pose::from_translation(Vector3::new(500.0, 0.0, 0.0));
        let warp = compute_warp(&depth, &pose, &k, &k).unwrap();
        assert_eq!(warp.valid().count(), 0);
    }

    #[test]
    fn non_positive_depth_is_rejected() {
        let mut depth = ScalarGrid::filled(4, 4, 1.0);
        *depth.at_mut(2, 2) = 0.0;
        let k = k64();
        assert!(matches!(
            compute_warp(&depth, &Pose::identity(), &k, &k),
            Err(GeomError::NonPositiveDepth)
        ));
    }

    #[test]
    fn integer_coordinates_reproduce_source_exactly() {
        let src = smooth_grid(16, 16, 0.3);
        let depth = ScalarGrid::filled(16, 16, 2.0);
        let k = Intrinsics::new(20.0, 20.0, 7.5, 7.5).unwrap();
        let warp = compute_warp(&depth, &Pose::identity(), &k, &k).unwrap();
        let sample = bilinear_sample(&src, &warp);
        for y in 0..16 {
            for x in 0..16 {
                assert!((sample.values().at(x, y) - src.at(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn midpoint_between_constant_rows_averages() {
        let src: ScalarGrid<f64> =
            ScalarGrid::from_fn(4, 4, |x, _| if x < 2 { 1.0 } else { 3.0 });
        assert!((bilinear_at(&src, 1.5, 2.0) - 2.0).abs() < 1e-15);
        assert!((bilinear_at(&src, 0.5, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interpolant_jacobian_matches_finite_differences() {
        let src = smooth_grid(32, 32, 1.7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..100 {
            let u: f64 = rng.gen_range(1.0..30.0);
            let v: f64 = rng.gen_range(1.0..30.0);
            // keep the probe strictly inside one bilinear cell
            let u = u.floor() + rng.gen_range(0.1..0.9);
            let v = v.floor() + rng.gen_range(0.1..0.9);
            let (_, du, dv) = bilinear_at_with_grad(&src, u, v);
            let fdu = (bilinear_at(&src, u + h, v) - bilinear_at(&src, u - h, v)) / (2.0 * h);
            let fdv = (bilinear_at(&src, u, v + h) - bilinear_at(&src, u, v - h)) / (2.0 * h);
            assert!((du - fdu).abs() / fdu.abs().max(1e-9) < 1e-6);
            assert!((dv - fdv).abs() / fdv.abs().max(1e-9) < 1e-6);
        }
    }

    #[test]
    fn synthesized_view_under_identity_pose_equals_source() {
        let src = vec![smooth_grid(24, 20, 0.1), smooth_grid(24, 20, 2.0)];
        let depth = ScalarGrid::filled(24, 20, 3.0);
        let k = Intrinsics::new(25.0, 25.0, 11.5, 9.5).unwrap();
        let (chs, warp) = synthesize_view(&src, &depth, &Pose::identity(), &k, &k).unwrap();
        assert_eq!(warp.valid().count(), 24 * 20);
        for (ch, s) in chs.iter().zip(&src) {
            for (a, b) in ch.values().values().iter().zip(s.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_invalid_warp_yields_empty_sample_mask() {
        let depth = ScalarGrid::filled(8, 8, 1.0);
        let k = k64();
        let pose = Pose::from_translation(Vector3::new(1000.0, 0.0, 0.0));
        let (chs, warp) = synthesize_view(
            &[ScalarGrid::filled(8, 8, 0.5)],
            &depth,
            &pose,
            &k,
            &k,
        )
        .unwrap();
        assert_eq!(warp.valid().count(), 0);
        assert_eq!(chs[0].valid().count(), 0);
        assert!(chs[0].values().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampled_value_gradients_match_finite_differences() {
        // d(sampled value)/d(depth pixel) and /d(pose params) through the
        // full warp chain, checked against central differences.
        let src = smooth_grid(64, 64, 0.9);
        let k = k64();
        let depth = ScalarGrid::from_fn(64, 64, |x, y| {
            4.0 + 0.01 * x as f64 + 0.007 * y as f64
        });
        let params = PoseParams::new(
            Vector3::new(0.004, -0.006, 0.003),
            Vector3::new(0.05, -0.03, 0.04),
        );
        let warp = compute_warp_with_grad(&depth, WarpPose::Direct(&params), &k, &k).unwrap();
        let sample = bilinear_sample(&src, &warp);

        // pick interior pixels away from bilinear lattice lines
        let mut checked = 0;
        for y in (5..60).step_by(7) {
            for x in (5..60).step_by(7) {
                let i = y * 64 + x;
                if !sample.valid().bits()[i] {
                    continue;
                }
                let c = warp.coord(x, y);
                let fr_u = c.u - c.u.floor();
                let fr_v = c.v - c.v.floor();
                if fr_u < 1e-3 || fr_u > 1.0 - 1e-3 || fr_v < 1e-3 || fr_v > 1.0 - 1e-3 {
                    continue;
                }
                checked += 1;

                let mut upstream = vec![0.0; 64 * 64];
                upstream[i] = 1.0;
                let mut gd = vec![0.0; 64 * 64];
                let mut gp = vec![0.0; 6];
                backprop_through_warp(
                    &warp,
                    &sample,
                    &upstream,
                    Some(&mut gd),
                    Some(&mut gp),
                );

                // depth finite difference
                let h = 1e-6 * depth.at(x, y);
                let mut dp = depth.clone();
                *dp.at_mut(x, y) += h;
                let mut dm = depth.clone();
                *dm.at_mut(x, y) -= h;
                let vp = sample_at(&src, &dp, &params, &k, i);
                let vm = sample_at(&src, &dm, &params, &k, i);
                let fd = (vp - vm) / (2.0 * h);
                let denom = fd.abs().max(gd[i].abs()).max(1e-8);
                assert!(
                    ((gd[i] - fd) / denom).abs() < 1e-4,
                    "depth grad at ({x},{y}): {} vs {fd}",
                    gd[i]
                );

                // pose finite differences
                let vec0 = params.to_vector();
                for kparam in 0..6 {
                    let h = 1e-6;
                    let mut vp_ = vec0;
                    vp_[kparam] += h;
                    let mut vm_ = vec0;
                    vm_[kparam] -= h;
                    let fp = sample_at(&src, &depth, &PoseParams::from_vector(&vp_), &k, i);
                    let fm = sample_at(&src, &depth, &PoseParams::from_vector(&vm_), &k, i);
                    let fd = (fp - fm) / (2.0 * h);
                    let denom = fd.abs().max(gp[kparam].abs()).max(1e-8);
                    assert!(
                        ((gp[kparam] - fd) / denom).abs() < 1e-4,
                        "pose grad {kparam} at ({x},{y}): {} vs {fd}",
                        gp[kparam]
                    );
                }
            }
        }
        assert!(checked > 20, "only {checked} pixels checked");
    }

    fn sample_at(
        src: &ScalarGrid<f64>,
        depth: &ScalarGrid<f64>,
        params: &PoseParams<f64>,
        k: &Intrinsics<f64>,
        i: usize,
    ) -> f64 {
        let warp = compute_warp(depth, &params_to_pose(params), k, k).unwrap();
        let sample = bilinear_sample(src, &warp);
        sample.values().values()[i]
    }

    #[test]
    fn chained_pose_warp_matches_composed_direct_pose() {
        let depth: ScalarGrid<f64> = ScalarGrid::filled(16, 16, 3.0);
        let k = Intrinsics::new(20.0, 20.0, 7.5, 7.5).unwrap();
        let a = PoseParams::new(Vector3::new(0.01, 0.02, -0.01), Vector3::new(0.1, 0.0, 0.02));
        let b = PoseParams::new(Vector3::new(-0.02, 0.01, 0.015), Vector3::new(0.0, -0.1, 0.01));
        let chained =
            compute_warp_with_grad(&depth, WarpPose::ChainThroughCenter { a: &a, b: &b }, &k, &k)
                .unwrap();
        let composed = crate::pose::compose(
            &params_to_pose(&b),
            &crate::pose::invert(&params_to_pose(&a)),
        );
        let direct = compute_warp(&depth, &composed, &k, &k).unwrap();
        for i in 0..16 * 16 {
            assert!((chained.coords()[i].u - direct.coords()[i].u).abs() < 1e-12);
            assert!((chained.coords()[i].v - direct.coords()[i].v).abs() < 1e-12);
        }
    }

    #[test]
    fn chained_pose_gradients_match_finite_differences() {
        let src = smooth_grid(48, 48, 0.4);
        let k = Intrinsics::new(45.0, 45.0, 23.5, 23.5).unwrap();
        let depth = ScalarGrid::from_fn(48, 48, |x, _| 5.0 + 0.01 * x as f64);
        let a = PoseParams::new(
            Vector3::new(0.01, -0.015, 0.02),
            Vector3::new(0.08, 0.02, -0.05),
        );
        let b = PoseParams::new(
            Vector3::new(-0.012, 0.08, 0.01),
            Vector3::new(-0.06, 0.01, 0.07),
        );
        let warp =
            compute_warp_with_grad(&depth, WarpPose::ChainThroughCenter { a: &a, b: &b }, &k, &k)
                .unwrap();
        let sample = bilinear_sample(&src, &warp);

        let eval = |av: &PoseParams<f64>, bv: &PoseParams<f64>, i: usize| -> f64 {
            let composed = crate::pose::compose(
                &params_to_pose(bv),
                &crate::pose::invert(&params_to_pose(av)),
            );
            let warp = compute_warp(&depth, &composed, &k, &k).unwrap();
            bilinear_sample(&src, &warp).values().values()[i]
        };

        let mut checked = 0;
        for y in (8..40).step_by(9) {
            for x in (8..40).step_by(9) {
                let i = y * 48 + x;
                if !sample.valid().bits()[i] {
                    continue;
                }
                let c = warp.coord(x, y);
                let fr_u = c.u - c.u.floor();
                let fr_v = c.v - c.v.floor();
                if fr_u < 1e-3 || fr_u > 1.0 - 1e-3 || fr_v < 1e-3 || fr_v > 1.0 - 1e-3 {
                    continue;
                }
                checked += 1;
                let mut upstream = vec![0.0; 48 * 48];
                upstream[i] = 1.0;
                let mut gp = vec![0.0; 12];
                backprop_through_warp(&warp, &sample, &upstream, None, Some(&mut gp));

                let av = a.to_vector();
                let bv = b.to_vector();
                let h = 1e-6;
                for kparam in 0..12 {
                    let (mut ap, mut am, mut bp, mut bm) = (av, av, bv, bv);
                    if kparam < 6 {
                        ap[kparam] += h;
                        am[kparam] -= h;
                    } else {
                        bp[kparam - 6] += h;
                        bm[kparam - 6] -= h;
                    }
                    let fp = eval(
                        &PoseParams::from_vector(&ap),
                        &PoseParams::from_vector(&bp),
                        i,
                    );
                    let fm = eval(
                        &PoseParams::from_vector(&am),
                        &PoseParams::from_vector(&bm),
                        i,
                    );
                    let fd = (fp - fm) / (2.0 * h);
                    let denom = fd.abs().max(gp[kparam].abs()).max(1e-8);
                    assert!(
                        ((gp[kparam] - fd) / denom).abs() < 1e-4,
                        "chained pose grad {kparam}: {} vs {fd}",
                        gp[kparam]
                    );
                }
            }
        }
        assert!(checked > 5);
    }
}
