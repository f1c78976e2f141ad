//! Depth-consistency losses: mean normalization, scale-aligned
//! forward-backward depth discrepancy, and the three-view loss that chains
//! both relative poses through the center frame.
//!
//! The scale ratio that aligns a synthesized depth map to the target is
//! differentiated through rather than treated as a constant, so its
//! gradients reach every input that influenced the masked means.

use crate::camera::Intrinsics;
use crate::error::{GeomError, Result};
use crate::grid::{Mask, ScalarGrid};
use crate::losses::photometric::{pixel_core, ssim_core, SsimConfig};
use crate::losses::sign_of;
use crate::num::Scalar;
use crate::pose::PoseParams;
use crate::view_synthesis::{
    backprop_through_warp, bilinear_sample, compute_warp_with_grad, SampleResult, WarpField,
    WarpPose,
};

/// Depth map rescaled to unit mean.
#[derive(Debug, Clone)]
pub struct NormalizedDepth<T> {
    pub depth: ScalarGrid<T>,
    pub applied_scale: T,
}

/// Divide a depth map by its mean. `applied_scale` is the factor that was
/// multiplied in (the reciprocal mean).
pub fn mean_normalize<T: Scalar>(depth: &ScalarGrid<T>) -> Result<NormalizedDepth<T>> {
    if !depth.all_positive() {
        return Err(GeomError::NonPositiveDepth);
    }
    let scale = T::one() / depth.mean();
    Ok(NormalizedDepth {
        depth: depth.map(|v| v * scale),
        applied_scale: scale,
    })
}

/// Chain a gradient taken against the normalized depth back to the raw map.
pub fn mean_normalize_backprop<T: Scalar>(
    normalized: &NormalizedDepth<T>,
    grad_normalized: &[T],
    grad_raw: &mut [T],
) {
    let n = T::of(grad_normalized.len() as f64);
    let mut weighted = T::zero();
    for (g, d) in grad_normalized.iter().zip(normalized.depth.values()) {
        weighted += *g * *d;
    }
    let correction = weighted / n;
    for (out, g) in grad_raw.iter_mut().zip(grad_normalized) {
        *out += normalized.applied_scale * (*g - correction);
    }
}

/// Ratio of masked means `mean(target | mask) / mean(synth | mask)` used to
/// align a synthesized depth map to the target scale.
pub fn aligned_scale_ratio<T: Scalar>(
    target_depth: &ScalarGrid<T>,
    synth_depth: &SampleResult<T>,
    mask: &Mask,
) -> Result<T> {
    let eff = synth_depth.valid().and(mask);
    let a = target_depth.masked_mean(&eff).ok_or(GeomError::EmptyMask)?;
    let b = synth_depth
        .values()
        .masked_mean(&eff)
        .ok_or(GeomError::EmptyMask)?;
    if b <= T::of(1e-12) {
        return Err(GeomError::ZeroSynthMean);
    }
    Ok(a / b)
}

/// Forward-backward depth consistency with gradients to both depth maps and
/// the pose of the warp that synthesized the neighbor depth.
#[derive(Debug, Clone)]
pub struct DepthConsistencyLoss<T> {
    pub value: T,
    pub grad_target_depth: ScalarGrid<T>,
    pub grad_source_depth: ScalarGrid<T>,
    pub grad_pose: Vec<T>,
}

/// Mean absolute difference between the target depth and the scale-aligned
/// synthesized depth over the valid mask.
///
/// The synthesized map must have been produced by sampling the source depth
/// through `warp` (computed with gradients); gradients flow into the target
/// depth (directly, through the scale ratio and through the warp
/// coordinates), into the source depth (through the bilinear stencils) and
/// into the warp's pose parameters.
pub fn depth_consistency_loss<T: Scalar>(
    target_depth: &ScalarGrid<T>,
    synth_depth: &SampleResult<T>,
    warp: &WarpField<T>,
    mask: &Mask,
) -> Result<DepthConsistencyLoss<T>> {
    let eff = synth_depth.valid().and(mask);
    let m = eff.count();
    if m == 0 {
        return Err(GeomError::EmptyMask);
    }
    let inv_m = T::one() / T::of(m as f64);
    let a = target_depth.masked_mean(&eff).unwrap();
    let b = synth_depth.values().masked_mean(&eff).unwrap();
    if b <= T::of(1e-12) {
        return Err(GeomError::ZeroSynthMean);
    }
    let s = a / b;

    let n = target_depth.len();
    let mut value = T::zero();
    let mut sigma = vec![T::zero(); n];
    // dL/ds accumulated over the residuals
    let mut grad_s = T::zero();
    for i in 0..n {
        if !eff.bits()[i] {
            continue;
        }
        let synth = synth_depth.values().values()[i];
        let r = s * synth - target_depth.values()[i];
        value += r.abs() * inv_m;
        let sg = sign_of(r);
        sigma[i] = sg;
        grad_s += sg * synth * inv_m;
    }

    let mut out = DepthConsistencyLoss {
        value,
        grad_target_depth: ScalarGrid::zeros(target_depth.width(), target_depth.height()),
        grad_source_depth: ScalarGrid::zeros(target_depth.width(), target_depth.height()),
        grad_pose: vec![T::zero(); warp.n_pose_params()],
    };

    // upstream on the synthesized depth values, including the scale path
    let ds_db = -s / b;
    let ds_da = T::one() / b;
    let mut upstream = vec![T::zero(); n];
    for i in 0..n {
        if !eff.bits()[i] {
            continue;
        }
        // direct residual path plus d value / dB through the masked mean
        upstream[i] = s * sigma[i] * inv_m + grad_s * ds_db * inv_m;
        // target depth: direct residual path plus d value / dA
        out.grad_target_depth.values_mut()[i] += -sigma[i] * inv_m + grad_s * ds_da * inv_m;
    }
    backprop_through_warp(
        warp,
        synth_depth,
        &upstream,
        Some(out.grad_target_depth.values_mut()),
        Some(&mut out.grad_pose),
    );
    synth_depth.scatter_source_grad(&upstream, out.grad_source_depth.values_mut());
    Ok(out)
}

/// Value-only variant over already-sampled values (used by fast
/// finite-difference evaluation). `None` when the mask is empty.
pub(crate) fn depth_consistency_value<T: Scalar>(
    target_depth: &ScalarGrid<T>,
    synth_values: &[T],
    valid: &Mask,
    mask: &Mask,
) -> Option<T> {
    let eff = valid.and(mask);
    let m = eff.count();
    if m == 0 {
        return None;
    }
    let inv_m = T::one() / T::of(m as f64);
    let mut a = T::zero();
    let mut b = T::zero();
    for i in 0..target_depth.len() {
        if eff.bits()[i] {
            a += target_depth.values()[i];
            b += synth_values[i];
        }
    }
    if b <= T::zero() {
        return None;
    }
    let s = a / b;
    let mut value = T::zero();
    for i in 0..target_depth.len() {
        if eff.bits()[i] {
            value += (s * synth_values[i] - target_depth.values()[i]).abs() * inv_m;
        }
    }
    Some(value)
}

/// Three-view consistency loss value and gradients.
#[derive(Debug, Clone)]
pub struct MultiviewLoss<T> {
    pub value: T,
    pub grad_depths: [ScalarGrid<T>; 3],
    /// Gradients against the two 6-DoF pose parameter vectors
    /// (center-to-backward, center-to-forward).
    pub grad_poses: [Vec<T>; 2],
    /// Set when a direction was skipped because its validity mask was empty.
    pub degraded: bool,
}

/// Three-view consistency: photometric agreement and depth agreement between
/// the outer frames under the chained pose, evaluated in both directions and
/// averaged. The outer depth maps are first aligned to the center frame's
/// scale through the masked mean ratios.
///
/// An empty validity mask in one direction degrades that direction to zero
/// contribution (flagged) instead of aborting, since the mask can be
/// legitimately empty under large motion.
pub fn multiview_loss<T: Scalar>(
    frames: [&[ScalarGrid<T>]; 3],
    depths: [&ScalarGrid<T>; 3],
    pose_2to1: &PoseParams<T>,
    pose_2to3: &PoseParams<T>,
    intrinsics: &Intrinsics<T>,
    alpha: T,
    ssim_cfg: &SsimConfig<T>,
) -> Result<MultiviewLoss<T>> {
    ssim_cfg.validate()?;
    if alpha < T::zero() || alpha > T::one() {
        return Err(GeomError::InvalidArgument("require 0 <= alpha <= 1".into()));
    }
    let (w, h) = (depths[1].width(), depths[1].height());
    let n = w * h;

    let mut out = MultiviewLoss {
        value: T::zero(),
        grad_depths: [
            ScalarGrid::zeros(w, h),
            ScalarGrid::zeros(w, h),
            ScalarGrid::zeros(w, h),
        ],
        grad_poses: [vec![T::zero(); 6], vec![T::zero(); 6]],
        degraded: false,
    };

    // scale ratios through the center frame: warp the center depth toward
    // each outer frame and compare masked means
    struct Ratio<T> {
        warp: WarpField<T>,
        sample: SampleResult<T>,
        mask: Mask,
        b_mean: T,
        s: T,
        grad_s: T,
    }
    let make_ratio = |pose: &PoseParams<T>, outer: &ScalarGrid<T>| -> Result<Option<Ratio<T>>> {
        let warp =
            compute_warp_with_grad(depths[1], WarpPose::Direct(pose), intrinsics, intrinsics)?;
        let sample = bilinear_sample(outer, &warp);
        let mask = sample.valid().clone();
        if mask.count() == 0 {
            return Ok(None);
        }
        let a = depths[1].masked_mean(&mask).unwrap();
        let b = sample.values().masked_mean(&mask).unwrap();
        if b <= T::of(1e-12) {
            return Ok(None);
        }
        Ok(Some(Ratio {
            warp,
            sample,
            mask,
            b_mean: b,
            s: a / b,
            grad_s: T::zero(),
        }))
    };
    let Some(mut ratio_back) = make_ratio(pose_2to1, depths[0])? else {
        out.degraded = true;
        return Ok(out);
    };
    let Some(mut ratio_fwd) = make_ratio(pose_2to3, depths[2])? else {
        out.degraded = true;
        return Ok(out);
    };

    let dbar = [
        depths[0].map(|v| v * ratio_back.s),
        depths[2].map(|v| v * ratio_fwd.s),
    ];

    // direction 0: target = backward frame, source = forward frame;
    // direction 1 is the mirror; both contribute half weight
    let half = T::of(0.5);
    for dir in 0..2 {
        let (t_slot, s_slot) = if dir == 0 { (0usize, 1usize) } else { (1, 0) };
        let t_frame = if dir == 0 { 0 } else { 2 };
        let s_frame = if dir == 0 { 2 } else { 0 };
        let (pose_a, pose_b) = if dir == 0 {
            (pose_2to1, pose_2to3)
        } else {
            (pose_2to3, pose_2to1)
        };
        let warp = compute_warp_with_grad(
            &dbar[t_slot],
            WarpPose::ChainThroughCenter {
                a: pose_a,
                b: pose_b,
            },
            intrinsics,
            intrinsics,
        )?;
        let synth: Vec<SampleResult<T>> = frames[s_frame]
            .iter()
            .map(|ch| bilinear_sample(ch, &warp))
            .collect();
        let samp_depth = bilinear_sample(&dbar[s_slot], &warp);
        let mask = samp_depth.valid().clone();
        let m = mask.count();
        if m == 0 {
            out.degraded = true;
            continue;
        }

        let mut grad_dbar_t = vec![T::zero(); n];
        let mut grad_dbar_s = vec![T::zero(); n];
        let mut grad_chain = vec![T::zero(); 12];

        // photometric terms
        let synth_values: Vec<&ScalarGrid<T>> = synth.iter().map(|s| s.values()).collect();
        let (px_value, px_up) = pixel_core(frames[t_frame], &synth_values, &mask)?;
        let mut ssim_total = T::zero();
        let mut ssim_patches = 0usize;
        let mut ssim_up: Vec<Vec<T>> = Vec::with_capacity(synth.len());
        for (t, s) in frames[t_frame].iter().zip(&synth_values) {
            let mut d = vec![T::zero(); n];
            let (sum, np) = ssim_core(s, t, &mask, ssim_cfg, Some(&mut d));
            ssim_total += sum;
            ssim_patches += np;
            ssim_up.push(d);
        }
        if ssim_patches == 0 {
            out.degraded = true;
            continue;
        }
        let inv_patches = T::one() / T::of(ssim_patches as f64);
        let ssim_value = T::of(0.5) * (T::one() - ssim_total * inv_patches);

        // depth agreement term
        let inv_m = T::one() / T::of(m as f64);
        let mut depth_value = T::zero();
        let mut depth_up = vec![T::zero(); n];
        for i in 0..n {
            if !mask.bits()[i] {
                continue;
            }
            let r = dbar[t_slot].values()[i] - samp_depth.values().values()[i];
            depth_value += r.abs() * inv_m;
            let sg = sign_of(r);
            grad_dbar_t[i] += half * sg * inv_m;
            depth_up[i] = -half * sg * inv_m;
        }

        out.value += half * (alpha * px_value + (T::one() - alpha) * ssim_value + depth_value);

        // reverse pass, all upstreams scaled by the direction weight
        for (s, up) in synth.iter().zip(&px_up) {
            let scaled: Vec<T> = up.iter().map(|&g| g * half * alpha).collect();
            backprop_through_warp(
                &warp,
                s,
                &scaled,
                Some(&mut grad_dbar_t),
                Some(&mut grad_chain),
            );
        }
        let ssim_scale = -half * (T::one() - alpha) * T::of(0.5) * inv_patches;
        for (s, mut up) in synth.iter().zip(ssim_up) {
            for g in up.iter_mut() {
                *g *= ssim_scale;
            }
            backprop_through_warp(
                &warp,
                s,
                &up,
                Some(&mut grad_dbar_t),
                Some(&mut grad_chain),
            );
        }
        backprop_through_warp(
            &warp,
            &samp_depth,
            &depth_up,
            Some(&mut grad_dbar_t),
            Some(&mut grad_chain),
        );
        samp_depth.scatter_source_grad(&depth_up, &mut grad_dbar_s);

        // chain parameters [a; b] back to the two pose vectors
        let (slot_a, slot_b) = if dir == 0 { (0usize, 1usize) } else { (1, 0) };
        for k in 0..6 {
            out.grad_poses[slot_a][k] += grad_chain[k];
            out.grad_poses[slot_b][k] += grad_chain[6 + k];
        }

        // rescaled outer depths back to raw depths and scale ratios
        let (ratio_t, ratio_s) = if dir == 0 {
            (&mut ratio_back, &mut ratio_fwd)
        } else {
            (&mut ratio_fwd, &mut ratio_back)
        };
        for i in 0..n {
            if grad_dbar_t[i] != T::zero() {
                out.grad_depths[t_frame].values_mut()[i] += ratio_t.s * grad_dbar_t[i];
                ratio_t.grad_s += grad_dbar_t[i] * depths[t_frame].values()[i];
            }
            if grad_dbar_s[i] != T::zero() {
                out.grad_depths[s_frame].values_mut()[i] += ratio_s.s * grad_dbar_s[i];
                ratio_s.grad_s += grad_dbar_s[i] * depths[s_frame].values()[i];
            }
        }
    }

    // distribute the accumulated scale-ratio gradients: each ratio depends
    // on the center depth (numerator mean and warp coordinates), on the
    // outer depth (sampled values) and on the pair pose
    for (ratio, outer_frame, pose_slot) in
        [(&ratio_back, 0usize, 0usize), (&ratio_fwd, 2usize, 1usize)]
    {
        if ratio.grad_s == T::zero() {
            continue;
        }
        let mcount = T::of(ratio.mask.count() as f64);
        let da = ratio.grad_s / ratio.b_mean / mcount;
        let db_coeff = -ratio.grad_s * ratio.s / ratio.b_mean / mcount;
        let mut upstream = vec![T::zero(); n];
        for i in 0..n {
            if ratio.mask.bits()[i] {
                out.grad_depths[1].values_mut()[i] += da;
                upstream[i] = db_coeff;
            }
        }
        backprop_through_warp(
            &ratio.warp,
            &ratio.sample,
            &upstream,
            Some(out.grad_depths[1].values_mut()),
            Some(&mut out.grad_poses[pose_slot]),
        );
        ratio
            .sample
            .scatter_source_grad(&upstream, out.grad_depths[outer_frame].values_mut());
    }

    Ok(out)
}
