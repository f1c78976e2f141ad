//! Photometric losses: masked mean absolute pixel error, patch SSIM and
//! edge-aware depth smoothness, plus their weighted baseline combination.
//!
//! Image intensities are assumed normalized to [0, 1]; the SSIM stabilizers
//! default to `0.01^2` and `0.03^2` on that range.

use crate::error::{GeomError, Result};
use crate::grid::{Mask, ScalarGrid};
use crate::losses::{sign_of, LossValue};
use crate::num::Scalar;
use crate::view_synthesis::{backprop_through_warp, SampleResult, WarpField};

/// SSIM patch configuration.
#[derive(Debug, Clone, Copy)]
pub struct SsimConfig<T> {
    pub c1: T,
    pub c2: T,
    pub patch: usize,
}

impl<T: Scalar> Default for SsimConfig<T> {
    fn default() -> Self {
        Self {
            c1: T::of(1e-4),
            c2: T::of(9e-4),
            patch: 3,
        }
    }
}

impl<T: Scalar> SsimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.c1 <= T::zero() || self.c2 <= T::zero() {
            return Err(GeomError::InvalidArgument(
                "SSIM stabilizers must be positive".into(),
            ));
        }
        if self.patch < 3 || self.patch % 2 == 0 {
            return Err(GeomError::InvalidArgument(
                "SSIM patch size must be odd and at least 3".into(),
            ));
        }
        Ok(())
    }
}

/// Masked mean absolute error core: value plus the derivative against each
/// synthesized value. Shared by the pairwise loss and the three-view loss.
pub(crate) fn pixel_core<T: Scalar>(
    target: &[ScalarGrid<T>],
    synth_values: &[&ScalarGrid<T>],
    mask: &Mask,
) -> Result<(T, Vec<Vec<T>>)> {
    let m = mask.count();
    if m == 0 {
        return Err(GeomError::EmptyMask);
    }
    let channels = target.len();
    let norm = T::one() / (T::of(channels as f64) * T::of(m as f64));
    let mut value = T::zero();
    let mut upstream = Vec::with_capacity(channels);
    for (t, s) in target.iter().zip(synth_values) {
        let mut up = vec![T::zero(); t.len()];
        for i in 0..t.len() {
            if mask.bits()[i] {
                let diff = s.values()[i] - t.values()[i];
                value += diff.abs() * norm;
                up[i] = sign_of(diff) * norm;
            }
        }
        upstream.push(up);
    }
    Ok((value, upstream))
}

/// Mean absolute photometric error over valid pixels, Eq.-style normalized
/// by the mask population, with gradients against target depth and pose.
pub fn pixel_loss<T: Scalar>(
    target: &[ScalarGrid<T>],
    synthesized: &[SampleResult<T>],
    warp: &WarpField<T>,
    mask: &Mask,
) -> Result<LossValue<T>> {
    let eff = effective_mask(synthesized, mask);
    let synth_values: Vec<&ScalarGrid<T>> =
        synthesized.iter().map(|s| s.values()).collect();
    let (value, upstream) = pixel_core(target, &synth_values, &eff)?;
    let mut out = LossValue::zero(
        warp.width(),
        warp.height(),
        warp.n_pose_params(),
    );
    out.value = value;
    for (s, up) in synthesized.iter().zip(&upstream) {
        backprop_through_warp(
            warp,
            s,
            up,
            Some(out.grad_depth.values_mut()),
            Some(&mut out.grad_pose),
        );
    }
    Ok(out)
}

/// Intersection of the sample validity mask with a caller-provided mask.
pub fn effective_mask<T: Scalar>(synthesized: &[SampleResult<T>], mask: &Mask) -> Mask {
    let mut eff = synthesized
        .first()
        .map(|s| s.valid().clone())
        .unwrap_or_else(|| mask.clone());
    eff = eff.and(mask);
    eff
}

/// Sliding window sum with an odd window size; entries whose window is not
/// fully inside the grid are zero.
fn box_sum<T: Scalar>(src: &[T], w: usize, h: usize, patch: usize, out: &mut Vec<T>) {
    let r = patch / 2;
    out.clear();
    out.resize(w * h, T::zero());
    // horizontal pass
    let mut row_sum = vec![T::zero(); w * h];
    for y in 0..h {
        let base = y * w;
        let mut acc = T::zero();
        for x in 0..patch.min(w) {
            acc += src[base + x];
        }
        if w >= patch {
            row_sum[base + r] = acc;
            for x in r + 1..w - r {
                acc += src[base + x + r] - src[base + x - r - 1];
                row_sum[base + x] = acc;
            }
        }
    }
    // vertical pass over the horizontal sums
    if h >= patch {
        for x in 0..w {
            let mut acc = T::zero();
            for y in 0..patch {
                acc += row_sum[y * w + x];
            }
            out[r * w + x] = acc;
            for y in r + 1..h - r {
                acc += row_sum[(y + r) * w + x] - row_sum[(y - r - 1) * w + x];
                out[y * w + x] = acc;
            }
        }
        // zero out columns whose horizontal window clips the border
        for y in r..h - r {
            for x in 0..r.min(w) {
                out[y * w + x] = T::zero();
            }
            for x in (w.saturating_sub(r))..w {
                out[y * w + x] = T::zero();
            }
        }
    }
}

struct SsimPlan<T> {
    /// patch centers with a full in-bounds, fully-masked window
    centers: Vec<u32>,
    sx: Vec<T>,
    sy: Vec<T>,
    sxx: Vec<T>,
    syy: Vec<T>,
    sxy: Vec<T>,
}

fn ssim_stats<T: Scalar>(
    x: &ScalarGrid<T>,
    y: &ScalarGrid<T>,
    mask: &Mask,
    patch: usize,
) -> SsimPlan<T> {
    let (w, h) = (x.width(), x.height());
    let n = w * h;
    let mut buf = vec![T::zero(); n];
    let mut masked_x = vec![T::zero(); n];
    let mut masked_y = vec![T::zero(); n];
    let mut counts = vec![T::zero(); n];
    for i in 0..n {
        if mask.bits()[i] {
            masked_x[i] = x.values()[i];
            masked_y[i] = y.values()[i];
            counts[i] = T::one();
        }
    }
    let mut plan = SsimPlan {
        centers: Vec::new(),
        sx: Vec::new(),
        sy: Vec::new(),
        sxx: Vec::new(),
        syy: Vec::new(),
        sxy: Vec::new(),
    };
    let mut count_sum = vec![T::zero(); n];
    box_sum(&counts, w, h, patch, &mut count_sum);
    let full = T::of((patch * patch) as f64);
    let r = patch / 2;
    if w < patch || h < patch {
        return plan;
    }
    // the window is fully masked only when the count sum hits patch^2
    let mut centers = Vec::new();
    for yy in r..h - r {
        for xx in r..w - r {
            let i = yy * w + xx;
            if (count_sum[i] - full).abs() < T::of(0.5) {
                centers.push(i as u32);
            }
        }
    }
    plan.centers = centers;

    let gather = |sums: &mut Vec<T>, field: &[T], buf: &mut Vec<T>| {
        box_sum(field, w, h, patch, buf);
        sums.extend(plan.centers.iter().map(|&i| buf[i as usize]));
    };
    gather(&mut plan.sx, &masked_x, &mut buf);
    gather(&mut plan.sy, &masked_y, &mut buf);
    let xx: Vec<T> = masked_x.iter().map(|&v| v * v).collect();
    gather(&mut plan.sxx, &xx, &mut buf);
    let yy: Vec<T> = masked_y.iter().map(|&v| v * v).collect();
    gather(&mut plan.syy, &yy, &mut buf);
    let xy: Vec<T> = masked_x
        .iter()
        .zip(&masked_y)
        .map(|(&a, &b)| a * b)
        .collect();
    gather(&mut plan.sxy, &xy, &mut buf);
    plan
}

/// SSIM core over one channel pair: per-patch indices and, on request, the
/// per-pixel derivative of the summed SSIM against the synthesized image.
/// Returns `(sum of patch SSIM, number of patches)`.
pub(crate) fn ssim_core<T: Scalar>(
    synth: &ScalarGrid<T>,
    target: &ScalarGrid<T>,
    mask: &Mask,
    cfg: &SsimConfig<T>,
    mut d_synth: Option<&mut [T]>,
) -> (T, usize) {
    let plan = ssim_stats(synth, target, mask, cfg.patch);
    let n_patches = plan.centers.len();
    if n_patches == 0 {
        return (T::zero(), 0);
    }
    let w = synth.width();
    let inv_n = T::one() / T::of((cfg.patch * cfg.patch) as f64);
    let r = cfg.patch / 2;
    let mut total = T::zero();
    for (pi, &center) in plan.centers.iter().enumerate() {
        let mx = plan.sx[pi] * inv_n;
        let my = plan.sy[pi] * inv_n;
        let vx = plan.sxx[pi] * inv_n - mx * mx;
        let vy = plan.syy[pi] * inv_n - my * my;
        let cxy = plan.sxy[pi] * inv_n - mx * my;
        let a1 = T::of(2.0) * mx * my + cfg.c1;
        let a2 = T::of(2.0) * cxy + cfg.c2;
        let b1 = mx * mx + my * my + cfg.c1;
        let b2 = vx + vy + cfg.c2;
        let ssim = a1 * a2 / (b1 * b2);
        total += ssim;
        if let Some(d) = d_synth.as_deref_mut() {
            let c = center as usize;
            let cx = c % w;
            let cy = c / w;
            let scale = T::of(2.0) * inv_n / (b1 * b2);
            for dy in 0..cfg.patch {
                for dx in 0..cfg.patch {
                    let i = (cy + dy - r) * w + (cx + dx - r);
                    let xi = synth.values()[i];
                    let yi = target.values()[i];
                    d[i] += scale
                        * (my * a2 + (yi - my) * a1
                            - ssim * (mx * b2 + (xi - mx) * b1));
                }
            }
        }
    }
    (total, n_patches)
}

/// Structured-similarity loss `(1 - mean patch SSIM) / 2` over patches that
/// lie fully inside the mask, with gradients against depth and pose.
pub fn ssim_loss<T: Scalar>(
    target: &[ScalarGrid<T>],
    synthesized: &[SampleResult<T>],
    warp: &WarpField<T>,
    mask: &Mask,
    cfg: &SsimConfig<T>,
) -> Result<LossValue<T>> {
    cfg.validate()?;
    let eff = effective_mask(synthesized, mask);
    if eff.count() == 0 {
        return Err(GeomError::EmptyMask);
    }
    let mut out = LossValue::zero(warp.width(), warp.height(), warp.n_pose_params());
    let mut total = T::zero();
    let mut patches = 0usize;
    let mut per_channel: Vec<Vec<T>> = Vec::with_capacity(target.len());
    for (t, s) in target.iter().zip(synthesized) {
        let mut d = vec![T::zero(); t.len()];
        let (sum, n) = ssim_core(s.values(), t, &eff, cfg, Some(&mut d));
        total += sum;
        patches += n;
        per_channel.push(d);
    }
    if patches == 0 {
        return Err(GeomError::EmptyMask);
    }
    let inv = T::one() / T::of(patches as f64);
    out.value = T::of(0.5) * (T::one() - total * inv);
    // d loss / d ssim_sum = -0.5 / patches
    let up_scale = -T::of(0.5) * inv;
    for (s, mut d) in synthesized.iter().zip(per_channel) {
        for g in d.iter_mut() {
            *g *= up_scale;
        }
        backprop_through_warp(
            warp,
            s,
            &d,
            Some(out.grad_depth.values_mut()),
            Some(&mut out.grad_pose),
        );
    }
    Ok(out)
}

/// Value-only SSIM loss over already-sampled values (fast path for
/// finite-difference evaluation). Returns `None` when no patch is valid.
pub(crate) fn ssim_value<T: Scalar>(
    target: &[ScalarGrid<T>],
    synth_values: &[&ScalarGrid<T>],
    mask: &Mask,
    cfg: &SsimConfig<T>,
) -> Option<T> {
    let mut total = T::zero();
    let mut patches = 0usize;
    for (t, s) in target.iter().zip(synth_values) {
        let (sum, n) = ssim_core(s, t, mask, cfg, None);
        total += sum;
        patches += n;
    }
    if patches == 0 {
        None
    } else {
        let inv = T::one() / T::of(patches as f64);
        Some(T::of(0.5) * (T::one() - total * inv))
    }
}

/// Edge-aware smoothness: forward-difference depth gradients weighted by
/// `exp(-|image gradient|)` per direction, gradients of the last row and
/// column defined as zero. The image gradient magnitude is averaged over
/// channels.
pub fn smoothness_loss<T: Scalar>(
    depth: &ScalarGrid<T>,
    target_img: &[ScalarGrid<T>],
) -> Result<LossValue<T>> {
    let (w, h) = (depth.width(), depth.height());
    if w < 2 || h < 2 {
        return Err(GeomError::InvalidArgument(
            "smoothness needs at least a 2x2 grid".into(),
        ));
    }
    let inv_c = T::one() / T::of(target_img.len().max(1) as f64);
    let mut out = LossValue::zero(w, h, 0);
    let mut value = T::zero();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let dgrad = depth.at(x + 1, y) - depth.at(x, y);
                let mut ig = T::zero();
                for ch in target_img {
                    ig += (ch.at(x + 1, y) - ch.at(x, y)).abs();
                }
                let weight = (-(ig * inv_c)).exp();
                value += dgrad.abs() * weight;
                let g = sign_of(dgrad) * weight;
                *out.grad_depth.at_mut(x, y) -= g;
                *out.grad_depth.at_mut(x + 1, y) += g;
            }
            if y + 1 < h {
                let dgrad = depth.at(x, y + 1) - depth.at(x, y);
                let mut ig = T::zero();
                for ch in target_img {
                    ig += (ch.at(x, y + 1) - ch.at(x, y)).abs();
                }
                let weight = (-(ig * inv_c)).exp();
                value += dgrad.abs() * weight;
                let g = sign_of(dgrad) * weight;
                *out.grad_depth.at_mut(x, y) -= g;
                *out.grad_depth.at_mut(x, y + 1) += g;
            }
        }
    }
    out.value = value;
    Ok(out)
}

/// Weighted combination `alpha * pixel + (1 - alpha) * ssim + beta * smooth`.
#[allow(clippy::too_many_arguments)]
pub fn baseline_loss<T: Scalar>(
    target: &[ScalarGrid<T>],
    synthesized: &[SampleResult<T>],
    warp: &WarpField<T>,
    mask: &Mask,
    depth: &ScalarGrid<T>,
    alpha: T,
    beta: T,
    cfg: &SsimConfig<T>,
) -> Result<LossValue<T>> {
    if alpha < T::zero() || alpha > T::one() || beta < T::zero() {
        return Err(GeomError::InvalidArgument(
            "require 0 <= alpha <= 1 and beta >= 0".into(),
        ));
    }
    let px = pixel_loss(target, synthesized, warp, mask)?;
    let ss = ssim_loss(target, synthesized, warp, mask, cfg)?;
    let sm = smoothness_loss(depth, target)?;
    let mut out = LossValue::zero(warp.width(), warp.height(), warp.n_pose_params());
    out.accumulate(&px, alpha);
    out.accumulate(&ss, T::one() - alpha);
    out.accumulate(&sm, beta);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{params_to_pose, PoseParams};
    use crate::synthetic::SyntheticScene;
    use crate::view_synthesis::{bilinear_sample, compute_warp_with_grad, WarpPose};
    use nalgebra::Vector3;

    fn full_mask(w: usize, h: usize) -> Mask {
        Mask::filled(w, h, true)
    }

    fn identity_setup(
        img: Vec<ScalarGrid<f64>>,
    ) -> (Vec<SampleResult<f64>>, WarpField<f64>) {
        let (w, h) = (img[0].width(), img[0].height());
        let k = crate::camera::Intrinsics::new(
            0.9 * w as f64,
            0.9 * w as f64,
            (w as f64 - 1.0) / 2.0,
            (h as f64 - 1.0) / 2.0,
        )
        .unwrap();
        let depth = ScalarGrid::filled(w, h, 5.0);
        let params = PoseParams::zeros();
        let warp = compute_warp_with_grad(&depth, WarpPose::Direct(&params), &k, &k).unwrap();
        let samples = img.iter().map(|ch| bilinear_sample(ch, &warp)).collect();
        (samples, warp)
    }

    fn texture(w: usize, h: usize, s: f64) -> ScalarGrid<f64> {
        ScalarGrid::from_fn(w, h, |x, y| {
            0.5 + 0.3 * ((x as f64) * 0.4 + s).sin() * ((y as f64) * 0.3 - s).cos()
        })
    }

    #[test]
    fn pixel_loss_zero_when_identical() {
        let img = vec![texture(16, 16, 0.2)];
        let (samples, warp) = identity_setup(img.clone());
        let l = pixel_loss(&img, &samples, &warp, &full_mask(16, 16)).unwrap();
        assert!(l.value.abs() < 1e-12);
    }

    #[test]
    fn pixel_loss_constant_difference() {
        let target = vec![ScalarGrid::filled(8, 8, 0.0)];
        let synth_img = vec![ScalarGrid::filled(8, 8, 0.5)];
        let (samples, warp) = identity_setup(synth_img);
        let l = pixel_loss(&target, &samples, &warp, &full_mask(8, 8)).unwrap();
        assert!((l.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pixel_loss_empty_mask_errors() {
        let img = vec![texture(8, 8, 0.0)];
        let (samples, warp) = identity_setup(img.clone());
        assert!(matches!(
            pixel_loss(&img, &samples, &warp, &Mask::filled(8, 8, false)),
            Err(GeomError::EmptyMask)
        ));
    }

    #[test]
    fn ssim_zero_for_identical_images() {
        let img = vec![texture(20, 20, 1.0)];
        let (samples, warp) = identity_setup(img.clone());
        let l = ssim_loss(
            &img,
            &samples,
            &warp,
            &full_mask(20, 20),
            &SsimConfig::default(),
        )
        .unwrap();
        assert!(l.value.abs() < 1e-12);
    }

    /// Direct evaluation of the SSIM index on a single 3x3 patch pair,
    /// independent of the box-filter implementation.
    fn ssim_patch_direct(x: &[f64; 9], y: &[f64; 9], c1: f64, c2: f64) -> f64 {
        let mx = x.iter().sum::<f64>() / 9.0;
        let my = y.iter().sum::<f64>() / 9.0;
        let vx = x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / 9.0;
        let vy = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / 9.0;
        let cxy = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>()
            / 9.0;
        ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2))
    }

    #[test]
    fn ssim_against_negative_image_exceeds_half() {
        // a 3x3 grid holding a strong gradient patch vs its negative
        let vals = [0.1, 0.3, 0.5, 0.3, 0.5, 0.7, 0.5, 0.7, 0.9];
        let img = vec![ScalarGrid::from_fn(3, 3, |x, y| vals[y * 3 + x])];
        let neg = vec![img[0].map(|v| 1.0 - v)];
        let (samples, warp) = identity_setup(neg.clone());
        let l = ssim_loss(
            &img,
            &samples,
            &warp,
            &full_mask(3, 3),
            &SsimConfig::default(),
        )
        .unwrap();
        assert!(l.value > 0.5, "loss {}", l.value);

        // cross-check against the direct per-patch formula
        let mut x = [0.0; 9];
        let mut y = [0.0; 9];
        for i in 0..9 {
            x[i] = 1.0 - vals[i];
            y[i] = vals[i];
        }
        let direct = 0.5 * (1.0 - ssim_patch_direct(&x, &y, 1e-4, 9e-4));
        assert!((l.value - direct).abs() < 1e-12);
    }

    #[test]
    fn ssim_blend_toward_target_is_monotone() {
        let w = 12;
        let target: ScalarGrid<f64> = ScalarGrid::from_fn(w, w, |x, y| {
            if (x + y) % 2 == 0 {
                0.25
            } else {
                0.75
            }
        });
        let uniform = ScalarGrid::filled(w, w, 0.5);
        let mut last = f64::INFINITY;
        for step in 0..=4 {
            let lambda = step as f64 / 4.0;
            let blended =
                ScalarGrid::from_fn(w, w, |x, y| {
                    (1.0 - lambda) * uniform.at(x, y) + lambda * target.at(x, y)
                });
            let (samples, warp) = identity_setup(vec![blended.clone()]);
            let l = ssim_loss(
                &[target.clone()],
                &samples,
                &warp,
                &full_mask(w, w),
                &SsimConfig::default(),
            )
            .unwrap();
            assert!(l.value <= last + 1e-12, "not monotone at {lambda}");
            assert!(l.value >= 0.0 && l.value <= 1.0);

            // brute-force per-patch oracle
            let mut sum = 0.0;
            let mut n = 0;
            for cy in 1..w - 1 {
                for cx in 1..w - 1 {
                    let mut xs = [0.0; 9];
                    let mut ys = [0.0; 9];
                    for dy in 0..3 {
                        for dx in 0..3 {
                            xs[dy * 3 + dx] = blended.at(cx + dx - 1, cy + dy - 1);
                            ys[dy * 3 + dx] = target.at(cx + dx - 1, cy + dy - 1);
                        }
                    }
                    sum += ssim_patch_direct(&xs, &ys, 1e-4, 9e-4);
                    n += 1;
                }
            }
            let brute = 0.5 * (1.0 - sum / n as f64);
            assert!((l.value - brute).abs() < 1e-12);
            last = l.value;
        }
        assert!(last.abs() < 1e-12);
    }

    #[test]
    fn ssim_invariant_under_common_constant_shift() {
        // construct a pair with exactly equal per-patch means: the offset
        // pattern sums to zero over every 3-pixel window
        let w = 18;
        let base = texture(w, w, 0.7);
        let offs = [0.06, -0.02, -0.04];
        let shifted = ScalarGrid::from_fn(w, w, |x, y| base.at(x, y) + offs[x % 3]);
        let cfg = SsimConfig::default();
        let eval = |c: f64| {
            let a = vec![base.map(|v| v + c)];
            let b = vec![shifted.map(|v| v + c)];
            let (samples, warp) = identity_setup(b);
            ssim_loss(&a, &samples, &warp, &full_mask(w, w), &cfg)
                .unwrap()
                .value
        };
        let l0 = eval(0.0);
        let l1 = eval(0.05);
        assert!(l0 > 0.0);
        assert!((l0 - l1).abs() < 1e-9, "{l0} vs {l1}");
    }

    #[test]
    fn smoothness_zero_for_constant_depth() {
        let depth = ScalarGrid::filled(10, 10, 3.0);
        let img = vec![texture(10, 10, 0.5)];
        let l = smoothness_loss(&depth, &img).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad_depth.values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn smoothness_of_linear_ramp_over_constant_image() {
        let (w, h) = (9, 7);
        let s = 0.25;
        let depth = ScalarGrid::from_fn(w, h, |x, _| 1.0 + s * x as f64);
        let img = vec![ScalarGrid::filled(w, h, 0.4)];
        let l = smoothness_loss(&depth, &img).unwrap();
        // s per pixel per direction; only x-direction terms are nonzero
        let expected = s * ((w - 1) * h) as f64;
        assert!((l.value - expected).abs() < 1e-12);
    }

    #[test]
    fn smoothness_attenuated_by_image_edges() {
        let (w, h) = (6, 5);
        let s = 0.5;
        let depth = ScalarGrid::from_fn(w, h, |x, _| 1.0 + s * x as f64);
        // image with |gradient| = 10 between every horizontal neighbor
        let img = vec![ScalarGrid::from_fn(w, h, |x, _| 10.0 * x as f64)];
        let flat = vec![ScalarGrid::filled(w, h, 0.3)];
        let edgy = smoothness_loss(&depth, &img).unwrap();
        let plain = smoothness_loss(&depth, &flat).unwrap();
        assert!((edgy.value / plain.value - (-10.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn smoothness_invariant_under_depth_offset() {
        // dyadic values keep the forward differences bit-exact under offset
        let depth =
            ScalarGrid::from_fn(8, 8, |x, y| 2.0 + 0.125 * x as f64 + 0.0625 * y as f64);
        let img = vec![texture(8, 8, 0.1)];
        let a = smoothness_loss(&depth, &img).unwrap().value;
        let b = smoothness_loss(&depth.map(|v| v + 8.0), &img).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_reduces_to_pixel_loss_and_is_linear() {
        let scene = SyntheticScene::<f64>::scenario("plane", 5, 32, 32).unwrap();
        let target = scene.render(1).unwrap();
        let source = scene.render(0).unwrap();
        let params = crate::pose::pose_to_params(&scene.relative_pose(1, 0)).unwrap();
        let warp = compute_warp_with_grad(
            &target.depth,
            WarpPose::Direct(&params),
            &scene.intrinsics,
            &scene.intrinsics,
        )
        .unwrap();
        let samples: Vec<_> = source
            .channels
            .iter()
            .map(|ch| bilinear_sample(ch, &warp))
            .collect();
        let mask = full_mask(32, 32);
        let cfg = SsimConfig::default();

        let px = pixel_loss(&target.channels, &samples, &warp, &mask).unwrap();
        let ss = ssim_loss(&target.channels, &samples, &warp, &mask, &cfg).unwrap();
        let sm = smoothness_loss(&target.depth, &target.channels).unwrap();

        let only_pixel = baseline_loss(
            &target.channels,
            &samples,
            &warp,
            &mask,
            &target.depth,
            1.0,
            0.0,
            &cfg,
        )
        .unwrap();
        assert!((only_pixel.value - px.value).abs() < 1e-15);

        let (alpha, beta) = (0.15, 0.1);
        let combo = baseline_loss(
            &target.channels,
            &samples,
            &warp,
            &mask,
            &target.depth,
            alpha,
            beta,
            &cfg,
        )
        .unwrap();
        let expected = alpha * px.value + (1.0 - alpha) * ss.value + beta * sm.value;
        assert!((combo.value - expected).abs() < 1e-15);
    }

    #[test]
    fn synthetic_scene_pixel_loss_below_interpolation_floor() {
        let scene = SyntheticScene::<f64>::scenario("plane", 11, 64, 64).unwrap();
        let target = scene.render(1).unwrap();
        let source = scene.render(2).unwrap();
        let pose = scene.relative_pose(1, 2);
        let (samples, warp) = crate::view_synthesis::synthesize_view(
            &source.channels,
            &target.depth,
            &pose,
            &scene.intrinsics,
            &scene.intrinsics,
        )
        .unwrap();
        let params = crate::pose::pose_to_params(&pose).unwrap();
        let gwarp = compute_warp_with_grad(
            &target.depth,
            WarpPose::Direct(&params),
            &scene.intrinsics,
            &scene.intrinsics,
        )
        .unwrap();
        let mask = full_mask(64, 64);
        let at_truth = pixel_loss(&target.channels, &samples, &gwarp, &mask)
            .unwrap()
            .value;
        assert!(at_truth < 0.01, "interpolation floor exceeded: {at_truth}");
        assert!(warp.valid().count() > 3000);

        // perturbing the pose translation by 10% must strictly increase it
        let mut perturbed = params;
        perturbed.translation *= 1.1;
        let pwarp = compute_warp_with_grad(
            &target.depth,
            WarpPose::Direct(&perturbed),
            &scene.intrinsics,
            &scene.intrinsics,
        )
        .unwrap();
        let psamples: Vec<_> = source
            .channels
            .iter()
            .map(|ch| bilinear_sample(ch, &pwarp))
            .collect();
        let at_perturbed = pixel_loss(&target.channels, &psamples, &pwarp, &mask)
            .unwrap()
            .value;
        assert!(at_perturbed > at_truth);
    }

    #[test]
    fn pixel_loss_minimized_at_true_translation() {
        let scene = SyntheticScene::<f64>::scenario("plane", 13, 48, 48).unwrap();
        let target = scene.render(1).unwrap();
        let source = scene.render(0).unwrap();
        let true_params = crate::pose::pose_to_params(&scene.relative_pose(1, 0)).unwrap();
        let mask = full_mask(48, 48);
        let mut losses = Vec::new();
        for step in -5i32..=5 {
            let mut p = true_params;
            p.translation.x += 0.01 * step as f64 * p.translation.norm();
            let warp = compute_warp_with_grad(
                &target.depth,
                WarpPose::Direct(&p),
                &scene.intrinsics,
                &scene.intrinsics,
            )
            .unwrap();
            let samples: Vec<_> = source
                .channels
                .iter()
                .map(|ch| bilinear_sample(ch, &warp))
                .collect();
            losses.push(
                pixel_loss(&target.channels, &samples, &warp, &mask)
                    .unwrap()
                    .value,
            );
        }
        let argmin = losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmin, 5, "losses: {losses:?}");
    }

    #[test]
    fn photometric_gradients_match_finite_differences() {
        let scene = SyntheticScene::<f64>::scenario("slant", 3, 32, 32).unwrap();
        let target = scene.render(1).unwrap();
        let source = scene.render(0).unwrap();
        let mut params = crate::pose::pose_to_params(&scene.relative_pose(1, 0)).unwrap();
        // evaluate away from the ground truth so the losses are not at kinks
        params.translation += Vector3::new(0.012, -0.008, 0.01);
        params.rotation_vector += Vector3::new(0.002, 0.001, -0.002);
        let depth = target.depth.clone();
        let mask = full_mask(32, 32);
        let cfg = SsimConfig::default();

        // value-only evaluation path for the finite differences
        let eval = |d: &ScalarGrid<f64>, p: &PoseParams<f64>, which: usize| -> f64 {
            let warp = crate::view_synthesis::compute_warp(
                d,
                &params_to_pose(p),
                &scene.intrinsics,
                &scene.intrinsics,
            )
            .unwrap();
            let samples: Vec<_> = source
                .channels
                .iter()
                .map(|ch| bilinear_sample(ch, &warp))
                .collect();
            let eff = effective_mask(&samples, &mask);
            let values: Vec<&ScalarGrid<f64>> = samples.iter().map(|s| s.values()).collect();
            match which {
                0 => pixel_core(&target.channels, &values, &eff).unwrap().0,
                _ => ssim_value(&target.channels, &values, &eff, &cfg).unwrap(),
            }
        };

        let warp = compute_warp_with_grad(
            &depth,
            WarpPose::Direct(&params),
            &scene.intrinsics,
            &scene.intrinsics,
        )
        .unwrap();
        let samples: Vec<_> = source
            .channels
            .iter()
            .map(|ch| bilinear_sample(ch, &warp))
            .collect();

        for which in 0..2 {
            let loss = if which == 0 {
                pixel_loss(&target.channels, &samples, &warp, &mask).unwrap()
            } else {
                ssim_loss(&target.channels, &samples, &warp, &mask, &cfg).unwrap()
            };
            // depth gradients at scattered interior pixels
            let h = 1e-5 * depth.mean();
            for &(x, y) in &[(8usize, 9usize), (15, 17), (22, 11), (9, 23), (18, 18)] {
                let mut dp = depth.clone();
                *dp.at_mut(x, y) += h;
                let mut dm = depth.clone();
                *dm.at_mut(x, y) -= h;
                let fd = (eval(&dp, &params, which) - eval(&dm, &params, which)) / (2.0 * h);
                let g = loss.grad_depth.at(x, y);
                let denom = fd.abs().max(g.abs()).max(1e-7);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "loss {which} depth grad at ({x},{y}): {g} vs {fd}"
                );
            }
            // pose gradients: small step keeps bilinear cell crossings,
            // which contribute an error linear in h, below tolerance
            let v0 = params.to_vector();
            for kp in 0..6 {
                let h = 1e-7;
                let mut vp = v0;
                vp[kp] += h;
                let mut vm = v0;
                vm[kp] -= h;
                let fd = (eval(&depth, &PoseParams::from_vector(&vp), which)
                    - eval(&depth, &PoseParams::from_vector(&vm), which))
                    / (2.0 * h);
                let g = loss.grad_pose[kp];
                let denom = fd.abs().max(g.abs()).max(1e-7);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "loss {which} pose grad {kp}: {g} vs {fd}"
                );
            }
        }

        // smoothness gradient against finite differences
        let sm = smoothness_loss(&depth, &target.channels).unwrap();
        let h = 1e-5 * depth.mean();
        for &(x, y) in &[(4usize, 4usize), (20, 13), (31, 0), (0, 31), (16, 16)] {
            let mut dp = depth.clone();
            *dp.at_mut(x, y) += h;
            let mut dm = depth.clone();
            *dm.at_mut(x, y) -= h;
            let fd = (smoothness_loss(&dp, &target.channels).unwrap().value
                - smoothness_loss(&dm, &target.channels).unwrap().value)
                / (2.0 * h);
            let g = sm.grad_depth.at(x, y);
            let denom = fd.abs().max(g.abs()).max(1e-7);
            assert!(
                ((g - fd) / denom).abs() < 1e-4,
                "smoothness grad at ({x},{y}): {g} vs {fd}"
            );
        }
    }
}
