//! The total training objective over a 3-frame snippet, its gradients, a
//! finite-difference gradient checker and a plain gradient-descent refiner.

use crate::camera::Intrinsics;
use crate::error::{GeomError, Result};
use crate::grid::{Mask, ScalarGrid};
use crate::losses::consistency::{
    depth_consistency_loss, depth_consistency_value, mean_normalize, mean_normalize_backprop,
    multiview_loss,
};
use crate::losses::photometric::{
    pixel_core, pixel_loss, smoothness_loss, ssim_loss, ssim_value, SsimConfig,
};
use crate::losses::sparse::{
    epipolar_loss, reprojection_loss, EpipolarResidual, MatchSet,
};
use crate::masking::{composite_mask, error_mask, gradient_mask, MaskConfig};
use crate::num::Scalar;
use crate::pose::{params_to_pose, PoseParams};
use crate::view_synthesis::{
    bilinear_sample, compute_warp, compute_warp_with_grad, sample_values_into, SampleResult,
    WarpField, WarpPose,
};

/// Weights of the total objective.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma_epi: T,
    pub gamma_reproj: T,
    pub mu_depth: T,
    pub mu_multi: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            alpha: T::of(0.15),
            beta: T::of(0.1),
            gamma_epi: T::of(0.001),
            gamma_reproj: T::of(0.001),
            mu_depth: T::of(0.1),
            mu_multi: T::of(0.1),
        }
    }
}

impl<T: Scalar> LossWeights<T> {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.alpha,
            self.beta,
            self.gamma_epi,
            self.gamma_reproj,
            self.mu_depth,
            self.mu_multi,
        ];
        if nonneg.iter().any(|&w| w < T::zero()) || self.alpha > T::one() {
            return Err(GeomError::InvalidArgument(
                "weights must be non-negative with alpha <= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Whether the percentile composite mask modulates the photometric terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskPhase {
    #[default]
    Warmup,
    Refinement,
}

/// All inputs of one 3-frame snippet evaluation. Frame order is
/// backward, center (target), forward; poses map center-frame points into
/// the respective outer frame.
#[derive(Debug, Clone)]
pub struct SnippetInput<T> {
    pub frames: [Vec<ScalarGrid<T>>; 3],
    pub depths: [ScalarGrid<T>; 3],
    pub pose_to_backward: PoseParams<T>,
    pub pose_to_forward: PoseParams<T>,
    pub matches_backward: MatchSet<T>,
    pub matches_forward: MatchSet<T>,
    pub intrinsics: Intrinsics<T>,
    pub mask_phase: MaskPhase,
}

impl<T: Scalar> SnippetInput<T> {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.depths[1].width(), self.depths[1].height());
        for d in &self.depths {
            if d.width() != w || d.height() != h {
                return Err(GeomError::DimensionMismatch {
                    expected: format!("{w}x{h}"),
                    got: format!("{}x{}", d.width(), d.height()),
                });
            }
            if !d.all_positive() {
                return Err(GeomError::NonPositiveDepth);
            }
        }
        for f in &self.frames {
            for ch in f {
                if ch.width() != w || ch.height() != h {
                    return Err(GeomError::DimensionMismatch {
                        expected: format!("{w}x{h}"),
                        got: format!("{}x{}", ch.width(), ch.height()),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.depths[1].width()
    }

    pub fn height(&self) -> usize {
        self.depths[1].height()
    }
}

/// Fixed options of the objective beyond the term weights.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveOptions<T> {
    pub ssim: SsimConfig<T>,
    pub mask: MaskConfig,
    pub epipolar_residual: EpipolarResidual,
    pub behind_penalty: T,
}

impl<T: Scalar> Default for ObjectiveOptions<T> {
    fn default() -> Self {
        Self {
            ssim: SsimConfig::default(),
            mask: MaskConfig::default(),
            epipolar_residual: EpipolarResidual::default(),
            behind_penalty: T::of(100.0),
        }
    }
}

/// Per-term loss values. Degraded terms (empty masks) are zero.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown<T> {
    pub pixel: T,
    pub ssim: T,
    pub smooth: T,
    pub epi: T,
    pub reproj: T,
    pub depth: T,
    pub multi: T,
    pub total: T,
    pub degraded: bool,
}

impl<T: Scalar> Default for LossBreakdown<T> {
    fn default() -> Self {
        Self {
            pixel: T::zero(),
            ssim: T::zero(),
            smooth: T::zero(),
            epi: T::zero(),
            reproj: T::zero(),
            depth: T::zero(),
            multi: T::zero(),
            total: T::zero(),
            degraded: false,
        }
    }
}

impl<T: Scalar> LossBreakdown<T> {
    /// The weighted total, computed the same way everywhere so the report
    /// total always equals the dot product of weights and term values.
    pub fn weighted_total(&self, w: &LossWeights<T>) -> T {
        w.alpha * self.pixel
            + (T::one() - w.alpha) * self.ssim
            + w.beta * self.smooth
            + w.gamma_epi * self.epi
            + w.gamma_reproj * self.reproj
            + w.mu_depth * self.depth
            + w.mu_multi * self.multi
    }
}

/// Total objective value with per-term breakdown and gradients against the
/// three depth maps and both pose parameter vectors.
#[derive(Debug, Clone)]
pub struct LossReport<T> {
    pub breakdown: LossBreakdown<T>,
    pub grad_depths: [ScalarGrid<T>; 3],
    pub grad_poses: [[T; 6]; 2],
}

impl<T: Scalar> LossReport<T> {
    pub fn all_finite(&self) -> bool {
        self.breakdown.total.is_finite()
            && self.grad_depths.iter().all(|g| g.all_finite())
            && self
                .grad_poses
                .iter()
                .all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Photometric mask of one view pair: the warp validity, optionally
/// intersected with the percentile composite mask during refinement.
fn photometric_mask<T: Scalar>(
    input: &SnippetInput<T>,
    opts: &ObjectiveOptions<T>,
    valid: &Mask,
    target: &[ScalarGrid<T>],
    synth: &[SampleResult<T>],
) -> Result<Mask> {
    if input.mask_phase == MaskPhase::Warmup {
        return Ok(valid.clone());
    }
    if valid.count() == 0 {
        return Err(GeomError::EmptyMask);
    }
    // per-pixel photometric error, averaged over channels
    let (w, h) = (valid.width(), valid.height());
    let inv_c = T::one() / T::of(target.len() as f64);
    let err = ScalarGrid::from_fn(w, h, |x, y| {
        let mut e = T::zero();
        for (t, s) in target.iter().zip(synth) {
            e += (s.values().at(x, y) - t.at(x, y)).abs();
        }
        e * inv_c
    });
    let em = error_mask(&err, valid, &opts.mask)?;
    let gm = gradient_mask(target, valid, &opts.mask)?;
    Ok(composite_mask(&em, &gm))
}

/// Evaluate the full objective with gradients.
///
/// Component terms that hit an empty mask degrade to zero contribution and
/// set the `degraded` flag instead of aborting the whole evaluation; all
/// other errors propagate.
pub fn total_loss<T: Scalar>(
    input: &SnippetInput<T>,
    weights: &LossWeights<T>,
) -> Result<LossReport<T>> {
    total_loss_with(input, weights, &ObjectiveOptions::default())
}

pub fn total_loss_with<T: Scalar>(
    input: &SnippetInput<T>,
    weights: &LossWeights<T>,
    opts: &ObjectiveOptions<T>,
) -> Result<LossReport<T>> {
    weights.validate()?;
    input.validate()?;
    let (w, h) = (input.width(), input.height());
    let k = &input.intrinsics;
    let one = T::one();

    let mut breakdown = LossBreakdown::<T>::default();
    let mut grad_depths = [
        ScalarGrid::zeros(w, h),
        ScalarGrid::zeros(w, h),
        ScalarGrid::zeros(w, h),
    ];
    let mut grad_poses = [[T::zero(); 6]; 2];

    // a term evaluation that may degrade to zero: empty masks and match
    // sets, and the undefined epipolar constraint at zero translation
    macro_rules! degradable {
        ($e:expr) => {
            match $e {
                Ok(v) => Some(v),
                Err(GeomError::EmptyMask)
                | Err(GeomError::EmptyMatchSet)
                | Err(GeomError::DegenerateTranslation) => {
                    breakdown.degraded = true;
                    None
                }
                Err(other) => return Err(other),
            }
        };
    }

    for (slot, (pose, matches, frame)) in [
        (
            &input.pose_to_backward,
            &input.matches_backward,
            0usize,
        ),
        (&input.pose_to_forward, &input.matches_forward, 2usize),
    ]
    .into_iter()
    .enumerate()
    {
        let warp = compute_warp_with_grad(&input.depths[1], WarpPose::Direct(pose), k, k)?;
        let synth: Vec<SampleResult<T>> = input.frames[frame]
            .iter()
            .map(|ch| bilinear_sample(ch, &warp))
            .collect();
        let synth_depth = bilinear_sample(&input.depths[frame], &warp);
        let valid = warp.valid().clone();

        let photo_mask =
            degradable!(photometric_mask(input, opts, &valid, &input.frames[1], &synth));
        if let Some(mask) = photo_mask {
            if let Some(px) = degradable!(pixel_loss(&input.frames[1], &synth, &warp, &mask)) {
                breakdown.pixel += px.value;
                accumulate_pair(
                    &mut grad_depths[1],
                    &mut grad_poses[slot],
                    &px.grad_depth,
                    &px.grad_pose,
                    weights.alpha,
                );
            }
            if let Some(ss) =
                degradable!(ssim_loss(&input.frames[1], &synth, &warp, &mask, &opts.ssim))
            {
                breakdown.ssim += ss.value;
                accumulate_pair(
                    &mut grad_depths[1],
                    &mut grad_poses[slot],
                    &ss.grad_depth,
                    &ss.grad_pose,
                    one - weights.alpha,
                );
            }
        }

        if let Some(epi) =
            degradable!(epipolar_loss(matches, pose, k, k, opts.epipolar_residual))
        {
            breakdown.epi += epi.value;
            for kp in 0..6 {
                grad_poses[slot][kp] += weights.gamma_epi * epi.grad_pose[kp];
            }
        }
        if let Some(rp) = degradable!(reprojection_loss(
            matches,
            pose,
            &input.depths[1],
            k,
            k,
            opts.behind_penalty
        )) {
            breakdown.reproj += rp.value;
            accumulate_pair(
                &mut grad_depths[1],
                &mut grad_poses[slot],
                &rp.grad_depth,
                &rp.grad_pose,
                weights.gamma_reproj,
            );
        }
        let full = Mask::filled(w, h, true);
        if let Some(dc) =
            degradable!(depth_consistency_loss(&input.depths[1], &synth_depth, &warp, &full))
        {
            breakdown.depth += dc.value;
            accumulate_pair(
                &mut grad_depths[1],
                &mut grad_poses[slot],
                &dc.grad_target_depth,
                &dc.grad_pose,
                weights.mu_depth,
            );
            for (g, o) in grad_depths[frame]
                .values_mut()
                .iter_mut()
                .zip(dc.grad_source_depth.values())
            {
                *g += weights.mu_depth * *o;
            }
        }
    }

    // smoothness on the mean-normalized center depth
    let normalized = mean_normalize(&input.depths[1])?;
    let smooth = smoothness_loss(&normalized.depth, &input.frames[1])?;
    breakdown.smooth = smooth.value;
    {
        let scaled: Vec<T> = smooth
            .grad_depth
            .values()
            .iter()
            .map(|&g| g * weights.beta)
            .collect();
        mean_normalize_backprop(&normalized, &scaled, grad_depths[1].values_mut());
    }

    // three-view consistency
    let mv = multiview_loss(
        [&input.frames[0], &input.frames[1], &input.frames[2]],
        [&input.depths[0], &input.depths[1], &input.depths[2]],
        &input.pose_to_backward,
        &input.pose_to_forward,
        k,
        weights.alpha,
        &opts.ssim,
    )?;
    breakdown.multi = mv.value;
    breakdown.degraded |= mv.degraded;
    for i in 0..3 {
        for (g, o) in grad_depths[i]
            .values_mut()
            .iter_mut()
            .zip(mv.grad_depths[i].values())
        {
            *g += weights.mu_multi * *o;
        }
    }
    for slot in 0..2 {
        for kp in 0..6 {
            grad_poses[slot][kp] += weights.mu_multi * mv.grad_poses[slot][kp];
        }
    }

    breakdown.total = breakdown.weighted_total(weights);
    let report = LossReport {
        breakdown,
        grad_depths,
        grad_poses,
    };
    if !report.all_finite() {
        return Err(GeomError::NonFiniteEvaluation);
    }
    Ok(report)
}

fn accumulate_pair<T: Scalar>(
    grad_depth: &mut ScalarGrid<T>,
    grad_pose: &mut [T; 6],
    term_depth: &ScalarGrid<T>,
    term_pose: &[T],
    weight: T,
) {
    for (g, o) in grad_depth.values_mut().iter_mut().zip(term_depth.values()) {
        *g += weight * *o;
    }
    for (g, o) in grad_pose.iter_mut().zip(term_pose) {
        *g += weight * *o;
    }
}

/// Which parameter blocks changed since the previous evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirtyBlocks {
    pub depths: [bool; 3],
    pub poses: [bool; 2],
}

impl DirtyBlocks {
    pub fn all() -> Self {
        Self {
            depths: [true; 3],
            poses: [true; 2],
        }
    }

    pub fn depth(i: usize) -> Self {
        let mut d = Self::default();
        d.depths[i] = true;
        d
    }

    pub fn pose(i: usize) -> Self {
        let mut d = Self::default();
        d.poses[i] = true;
        d
    }
}

/// Value-only snippet evaluator with per-parameter-block caching.
///
/// Evaluating the objective once per perturbed coordinate dominates the cost
/// of finite-difference checking; since every stage is a pure function of
/// its inputs, stages whose parameter blocks did not change are reused
/// bit-for-bit. Refinement-phase masking is not supported here (the checker
/// runs in the warmup phase).
pub struct SnippetValueEvaluator<T> {
    opts: ObjectiveOptions<T>,
    pair_warp: [Option<WarpField<T>>; 2],
    pair_synth: [Option<Vec<ScalarGrid<T>>>; 2],
    pair_sdepth: [Option<ScalarGrid<T>>; 2],
    pair_pixel: [Option<T>; 2],
    pair_ssim: [Option<T>; 2],
    pair_epi: [Option<T>; 2],
    pair_reproj: [Option<T>; 2],
    pair_depth: [Option<T>; 2],
    pair_ratio: [Option<T>; 2],
    smooth: Option<T>,
    dbar: [Option<ScalarGrid<T>>; 2],
    mv_warp: [Option<WarpField<T>>; 2],
    mv_photo: [Option<(T, T)>; 2],
    mv_sdepth: [Option<ScalarGrid<T>>; 2],
    mv_depth_term: [Option<T>; 2],
    scratch: Vec<T>,
}

impl<T: Scalar> SnippetValueEvaluator<T> {
    pub fn new(opts: ObjectiveOptions<T>) -> Self {
        Self {
            opts,
            pair_warp: [None, None],
            pair_synth: [None, None],
            pair_sdepth: [None, None],
            pair_pixel: [None, None],
            pair_ssim: [None, None],
            pair_epi: [None, None],
            pair_reproj: [None, None],
            pair_depth: [None, None],
            pair_ratio: [None, None],
            smooth: None,
            dbar: [None, None],
            mv_warp: [None, None],
            mv_photo: [None, None],
            mv_sdepth: [None, None],
            mv_depth_term: [None, None],
            scratch: Vec::new(),
        }
    }

    fn sample_grid(&mut self, src: &ScalarGrid<T>, warp: &WarpField<T>) -> ScalarGrid<T> {
        sample_values_into(src, warp, &mut self.scratch);
        ScalarGrid::from_fn(warp.width(), warp.height(), |x, y| {
            self.scratch[y * warp.width() + x]
        })
    }

    /// Evaluate the term values; `dirty` declares which inputs changed since
    /// the previous call. The first call must pass `DirtyBlocks::all()`.
    pub fn eval(
        &mut self,
        input: &SnippetInput<T>,
        weights: &LossWeights<T>,
        dirty: DirtyBlocks,
    ) -> Result<LossBreakdown<T>> {
        debug_assert_eq!(input.mask_phase, MaskPhase::Warmup);
        let k = &input.intrinsics;
        let need_pixel = weights.alpha > T::zero();
        let need_ssim = weights.alpha < T::one();
        let need_pair_depth = weights.mu_depth > T::zero();
        let need_multi = weights.mu_multi > T::zero();
        let need_pair_samples = need_pixel || need_ssim;

        let mut breakdown = LossBreakdown::<T>::default();

        for slot in 0..2 {
            let (pose, matches, frame) = if slot == 0 {
                (&input.pose_to_backward, &input.matches_backward, 0usize)
            } else {
                (&input.pose_to_forward, &input.matches_forward, 2usize)
            };
            let warp_dirty = dirty.depths[1] || dirty.poses[slot];
            if warp_dirty || self.pair_warp[slot].is_none() {
                self.pair_warp[slot] =
                    Some(compute_warp(&input.depths[1], &params_to_pose(pose), k, k)?);
                self.pair_synth[slot] = None;
                self.pair_sdepth[slot] = None;
            }

            if need_pair_samples && self.pair_synth[slot].is_none() {
                let warp = self.pair_warp[slot].take().unwrap();
                let synth: Vec<ScalarGrid<T>> = input.frames[frame]
                    .iter()
                    .map(|ch| self.sample_grid(ch, &warp))
                    .collect();
                self.pair_warp[slot] = Some(warp);
                self.pair_synth[slot] = Some(synth);
                self.pair_pixel[slot] = None;
                self.pair_ssim[slot] = None;
            }
            let sdepth_dirty = warp_dirty || dirty.depths[frame];
            if (need_pair_depth || need_multi)
                && (sdepth_dirty || self.pair_sdepth[slot].is_none())
            {
                let warp = self.pair_warp[slot].take().unwrap();
                let sd = self.sample_grid(&input.depths[frame], &warp);
                self.pair_warp[slot] = Some(warp);
                self.pair_sdepth[slot] = Some(sd);
                self.pair_depth[slot] = None;
                self.pair_ratio[slot] = None;
            }

            let warp = self.pair_warp[slot].as_ref().unwrap();
            let valid = warp.valid();
            if need_pixel {
                if self.pair_pixel[slot].is_none() {
                    let synth = self.pair_synth[slot].as_ref().unwrap();
                    let refs: Vec<&ScalarGrid<T>> = synth.iter().collect();
                    match pixel_core(&input.frames[1], &refs, valid) {
                        Ok((v, _)) => self.pair_pixel[slot] = Some(v),
                        Err(GeomError::EmptyMask) => {
                            breakdown.degraded = true;
                            self.pair_pixel[slot] = Some(T::zero());
                        }
                        Err(e) => return Err(e),
                    }
                }
                breakdown.pixel += self.pair_pixel[slot].unwrap();
            }
            if need_ssim {
                if self.pair_ssim[slot].is_none() {
                    let synth = self.pair_synth[slot].as_ref().unwrap();
                    let refs: Vec<&ScalarGrid<T>> = synth.iter().collect();
                    self.pair_ssim[slot] =
                        Some(match ssim_value(&input.frames[1], &refs, valid, &self.opts.ssim) {
                            Some(v) => v,
                            None => {
                                breakdown.degraded = true;
                                T::zero()
                            }
                        });
                }
                breakdown.ssim += self.pair_ssim[slot].unwrap();
            }

            if weights.gamma_epi > T::zero() {
                if dirty.poses[slot] || self.pair_epi[slot].is_none() {
                    self.pair_epi[slot] = Some(
                        match epipolar_loss(matches, pose, k, k, self.opts.epipolar_residual) {
                            Ok(l) => l.value,
                            Err(GeomError::EmptyMatchSet) => {
                                breakdown.degraded = true;
                                T::zero()
                            }
                            Err(e) => return Err(e),
                        },
                    );
                }
                breakdown.epi += self.pair_epi[slot].unwrap();
            }
            if weights.gamma_reproj > T::zero() {
                if dirty.poses[slot] || dirty.depths[1] || self.pair_reproj[slot].is_none() {
                    self.pair_reproj[slot] = Some(
                        match reprojection_loss(
                            matches,
                            pose,
                            &input.depths[1],
                            k,
                            k,
                            self.opts.behind_penalty,
                        ) {
                            Ok(l) => l.value,
                            Err(GeomError::EmptyMatchSet) => {
                                breakdown.degraded = true;
                                T::zero()
                            }
                            Err(e) => return Err(e),
                        },
                    );
                }
                breakdown.reproj += self.pair_reproj[slot].unwrap();
            }
            if need_pair_depth {
                if self.pair_depth[slot].is_none() {
                    let sd = self.pair_sdepth[slot].as_ref().unwrap();
                    let full = Mask::filled(input.width(), input.height(), true);
                    self.pair_depth[slot] = Some(
                        match depth_consistency_value(
                            &input.depths[1],
                            sd.values(),
                            valid,
                            &full,
                        ) {
                            Some(v) => v,
                            None => {
                                breakdown.degraded = true;
                                T::zero()
                            }
                        },
                    );
                }
                breakdown.depth += self.pair_depth[slot].unwrap();
            }
            if need_multi && self.pair_ratio[slot].is_none() {
                let sd = self.pair_sdepth[slot].as_ref().unwrap();
                let a = input.depths[1].masked_mean(valid);
                let b = sd.masked_mean(valid);
                self.pair_ratio[slot] = Some(match (a, b) {
                    (Some(a), Some(b)) if b > T::of(1e-12) => a / b,
                    _ => T::zero(),
                });
                self.dbar[slot] = None;
            }
        }

        if weights.beta > T::zero() {
            if dirty.depths[1] || self.smooth.is_none() {
                let normalized = mean_normalize(&input.depths[1])?;
                self.smooth = Some(smoothness_loss(&normalized.depth, &input.frames[1])?.value);
            }
            breakdown.smooth = self.smooth.unwrap();
        }

        if need_multi {
            let s_back = self.pair_ratio[0].unwrap();
            let s_fwd = self.pair_ratio[1].unwrap();
            if s_back == T::zero() || s_fwd == T::zero() {
                breakdown.degraded = true;
            } else {
                for slot in 0..2 {
                    let outer = if slot == 0 { 0usize } else { 2 };
                    let s = if slot == 0 { s_back } else { s_fwd };
                    let ratio_dirty = dirty.depths[1]
                        || dirty.depths[outer]
                        || dirty.poses[slot];
                    if ratio_dirty || self.dbar[slot].is_none() {
                        self.dbar[slot] = Some(input.depths[outer].map(|v| v * s));
                        self.mv_warp[slot] = None;
                        // the mirrored direction samples this map
                        self.mv_sdepth[1 - slot] = None;
                        self.mv_depth_term[1 - slot] = None;
                    }
                }
                let half = T::of(0.5);
                for dir in 0..2 {
                    let (t_slot, s_slot) = if dir == 0 { (0usize, 1usize) } else { (1, 0) };
                    let t_frame = if dir == 0 { 0usize } else { 2 };
                    let s_frame = if dir == 0 { 2usize } else { 0 };
                    let (pose_a, pose_b) = if dir == 0 {
                        (&input.pose_to_backward, &input.pose_to_forward)
                    } else {
                        (&input.pose_to_forward, &input.pose_to_backward)
                    };
                    let warp_dirty = dirty.poses[0]
                        || dirty.poses[1]
                        || self.dbar_changed(dirty, t_slot);
                    if warp_dirty || self.mv_warp[dir].is_none() {
                        let chain = WarpPose::ChainThroughCenter {
                            a: pose_a,
                            b: pose_b,
                        };
                        self.mv_warp[dir] = Some(compute_warp(
                            self.dbar[t_slot].as_ref().unwrap(),
                            &chain.pose(),
                            k,
                            k,
                        )?);
                        self.mv_photo[dir] = None;
                        self.mv_sdepth[dir] = None;
                        self.mv_depth_term[dir] = None;
                    }
                    let warp = self.mv_warp[dir].take().unwrap();
                    if self.mv_photo[dir].is_none() {
                        let synth: Vec<ScalarGrid<T>> = input.frames[s_frame]
                            .iter()
                            .map(|ch| self.sample_grid(ch, &warp))
                            .collect();
                        let refs: Vec<&ScalarGrid<T>> = synth.iter().collect();
                        let px = match pixel_core(&input.frames[t_frame], &refs, warp.valid()) {
                            Ok((v, _)) => Some(v),
                            Err(GeomError::EmptyMask) => None,
                            Err(e) => return Err(e),
                        };
                        let ss =
                            ssim_value(&input.frames[t_frame], &refs, warp.valid(), &self.opts.ssim);
                        self.mv_photo[dir] = Some(match (px, ss) {
                            (Some(p), Some(s)) => (p, s),
                            _ => {
                                breakdown.degraded = true;
                                (T::zero(), T::zero())
                            }
                        });
                    }
                    if self.mv_sdepth[dir].is_none() {
                        let src = self.dbar[s_slot].take().unwrap();
                        let sd = self.sample_grid(&src, &warp);
                        self.dbar[s_slot] = Some(src);
                        self.mv_sdepth[dir] = Some(sd);
                        self.mv_depth_term[dir] = None;
                    }
                    if self.mv_depth_term[dir].is_none() {
                        let sd = self.mv_sdepth[dir].as_ref().unwrap();
                        let mask = warp.valid();
                        let m = mask.count();
                        if m == 0 {
                            breakdown.degraded = true;
                            self.mv_depth_term[dir] = Some(T::zero());
                        } else {
                            let inv_m = T::one() / T::of(m as f64);
                            let mut v = T::zero();
                            let dbar_t = self.dbar[t_slot].as_ref().unwrap();
                            for i in 0..dbar_t.len() {
                                if mask.bits()[i] {
                                    v += (dbar_t.values()[i] - sd.values()[i]).abs() * inv_m;
                                }
                            }
                            self.mv_depth_term[dir] = Some(v);
                        }
                    }
                    self.mv_warp[dir] = Some(warp);
                    let (px, ss) = self.mv_photo[dir].unwrap();
                    breakdown.multi += half
                        * (weights.alpha * px
                            + (T::one() - weights.alpha) * ss
                            + self.mv_depth_term[dir].unwrap());
                }
            }
        }

        breakdown.total = breakdown.weighted_total(weights);
        if !breakdown.total.is_finite() {
            return Err(GeomError::NonFiniteEvaluation);
        }
        Ok(breakdown)
    }

    fn dbar_changed(&self, dirty: DirtyBlocks, slot: usize) -> bool {
        let outer = if slot == 0 { 0usize } else { 2 };
        dirty.depths[1] || dirty.depths[outer] || dirty.poses[slot]
    }
}

/// Report of a finite-difference gradient comparison.
#[derive(Debug, Clone)]
pub struct GradCheckReport<T> {
    pub max_rel_error: T,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub pass: bool,
}

/// Compare an analytic gradient against central finite differences of a
/// scalar function. The step for coordinate `i` is `h * max(|x_i|, 1)`.
/// Relative errors use the larger of the two gradient magnitudes with a
/// floor of `1e-6` times the largest finite-difference entry.
pub fn gradient_check<T: Scalar>(
    mut f: impl FnMut(&[T]) -> Result<T>,
    analytic: &[T],
    point: &[T],
    h: T,
    tol: T,
) -> Result<GradCheckReport<T>> {
    if h <= T::zero() {
        return Err(GeomError::InvalidArgument("step must be positive".into()));
    }
    let mut fd = vec![T::zero(); point.len()];
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        let step = h * point[i].abs().max(T::one());
        probe[i] = point[i] + step;
        let fp = f(&probe)?;
        probe[i] = point[i] - step;
        let fm = f(&probe)?;
        probe[i] = point[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(GeomError::NonFiniteEvaluation);
        }
        fd[i] = (fp - fm) / (T::of(2.0) * step);
    }
    let scale = fd
        .iter()
        .chain(analytic.iter())
        .fold(T::zero(), |m, &v| m.max(v.abs()));
    let floor = (scale * T::of(1e-6)).max(T::of(1e-12));
    let mut report = GradCheckReport {
        max_rel_error: T::zero(),
        worst_index: None,
        checked: point.len(),
        pass: true,
    };
    for i in 0..point.len() {
        if !analytic[i].is_finite() {
            return Err(GeomError::NonFiniteEvaluation);
        }
        let denom = analytic[i].abs().max(fd[i].abs()).max(floor);
        let rel = (analytic[i] - fd[i]).abs() / denom;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    report.pass = report.max_rel_error < tol;
    Ok(report)
}

/// Which parameter blocks gradient descent updates. Holding the blocks that
/// are known to be correct (staged refinement) avoids the compensation
/// valleys of the joint landscape, e.g. between rotation and lateral
/// translation on near-constant-depth scenes.
#[derive(Debug, Clone, Copy)]
pub struct UpdateBlocks {
    pub depths: bool,
    pub rotations: bool,
    pub translations: bool,
}

impl Default for UpdateBlocks {
    fn default() -> Self {
        Self {
            depths: true,
            rotations: true,
            translations: true,
        }
    }
}

impl UpdateBlocks {
    pub fn poses_only() -> Self {
        Self {
            depths: false,
            ..Self::default()
        }
    }

    pub fn translations_only() -> Self {
        Self {
            depths: false,
            rotations: false,
            translations: true,
        }
    }
}

/// Outcome of gradient-descent refinement.
#[derive(Debug, Clone)]
pub struct RefineResult<T> {
    pub trace: Vec<LossBreakdown<T>>,
    pub refined: SnippetInput<T>,
}

/// Plain gradient descent on the snippet depths and pose parameters.
///
/// Depth values are clamped to a small positive floor after each step so
/// the geometry stays valid. Fails with [`GeomError::DivergenceDetected`]
/// when the total exceeds ten times its initial value.
pub fn gradient_descent_refine<T: Scalar>(
    input: &SnippetInput<T>,
    weights: &LossWeights<T>,
    steps: usize,
    lr: T,
    update: UpdateBlocks,
) -> Result<RefineResult<T>> {
    if steps == 0 {
        return Err(GeomError::InvalidArgument("steps must be >= 1".into()));
    }
    if lr < T::zero() {
        return Err(GeomError::InvalidArgument(
            "learning rate must be non-negative".into(),
        ));
    }
    let depth_floor = T::of(1e-3) * input.depths[1].mean();
    let mut state = input.clone();
    let mut trace = Vec::with_capacity(steps + 1);
    let mut initial_total = None;
    for _ in 0..steps {
        let report = total_loss(&state, weights)?;
        let total = report.breakdown.total;
        let initial = *initial_total.get_or_insert(total);
        if total > T::of(10.0) * initial && initial > T::zero() {
            return Err(GeomError::DivergenceDetected {
                initial: initial.to_f64(),
                total: total.to_f64(),
            });
        }
        trace.push(report.breakdown);

        if update.depths {
            for i in 0..3 {
                for (d, g) in state.depths[i]
                    .values_mut()
                    .iter_mut()
                    .zip(report.grad_depths[i].values())
                {
                    *d = (*d - lr * *g).max(depth_floor);
                }
            }
        }
        let mut pb = state.pose_to_backward.to_vector();
        let mut pf = state.pose_to_forward.to_vector();
        for kp in 0..6 {
            let on = if kp < 3 {
                update.rotations
            } else {
                update.translations
            };
            if on {
                pb[kp] -= lr * report.grad_poses[0][kp];
                pf[kp] -= lr * report.grad_poses[1][kp];
            }
        }
        state.pose_to_backward = PoseParams::from_vector(&pb);
        state.pose_to_forward = PoseParams::from_vector(&pf);
    }
    trace.push(total_loss(&state, weights)?.breakdown);
    Ok(RefineResult {
        trace,
        refined: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::pose_to_params;
    use crate::synthetic::SyntheticScene;
    use nalgebra::Vector3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn scene_input(
        name: &str,
        seed: u64,
        size: usize,
    ) -> (SyntheticScene<f64>, SnippetInput<f64>) {
        let scene = SyntheticScene::<f64>::scenario(name, seed, size, size).unwrap();
        let f0 = scene.render(0).unwrap();
        let f1 = scene.render(1).unwrap();
        let f2 = scene.render(2).unwrap();
        let input = SnippetInput {
            frames: [f0.channels, f1.channels, f2.channels],
            depths: [f0.depth, f1.depth, f2.depth],
            pose_to_backward: pose_to_params(&scene.relative_pose(1, 0)).unwrap(),
            pose_to_forward: pose_to_params(&scene.relative_pose(1, 2)).unwrap(),
            matches_backward: MatchSet::new(
                scene.generate_matches(1, 0, &[2], 100, seed + 1, 0.0).unwrap(),
            ),
            matches_forward: MatchSet::new(
                scene.generate_matches(1, 2, &[0], 100, seed + 2, 0.0).unwrap(),
            ),
            intrinsics: scene.intrinsics,
            mask_phase: MaskPhase::Warmup,
        };
        (scene, input)
    }

    #[test]
    fn static_identical_snippet_has_zero_total() {
        let scene = SyntheticScene::<f64>::scenario("plane", 3, 32, 32).unwrap();
        let f = scene.render(1).unwrap();
        let depth = ScalarGrid::filled(32, 32, 10.0);
        let p = crate::camera::PixelCoord::new(13.2, 17.8);
        let input = SnippetInput {
            frames: [f.channels.clone(), f.channels.clone(), f.channels],
            depths: [depth.clone(), depth.clone(), depth],
            pose_to_backward: PoseParams::zeros(),
            pose_to_forward: PoseParams::zeros(),
            matches_backward: MatchSet::new(vec![(p, p)]),
            matches_forward: MatchSet::new(vec![(p, p)]),
            intrinsics: scene.intrinsics,
            mask_phase: MaskPhase::Warmup,
        };
        // the epipolar term is undefined at zero translation and degrades
        let report = total_loss(&input, &LossWeights::default()).unwrap();
        assert!(report.breakdown.total.abs() < 1e-12, "{:?}", report.breakdown);
        assert!(report.breakdown.smooth.abs() < 1e-12);
        assert!(report.breakdown.degraded);
    }

    #[test]
    fn synthetic_truth_total_below_floor() {
        let (_, input) = scene_input("plane", 5, 64);
        let report = total_loss(&input, &LossWeights::default()).unwrap();
        assert!(
            report.breakdown.total < 0.02,
            "total {}",
            report.breakdown.total
        );
        assert!(!report.breakdown.degraded);
    }

    #[test]
    fn weight_isolation_is_exact() {
        let (_, input) = scene_input("plane", 7, 32);
        let only_pixel = LossWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma_epi: 0.0,
            gamma_reproj: 0.0,
            mu_depth: 0.0,
            mu_multi: 0.0,
        };
        let report = total_loss(&input, &only_pixel).unwrap();
        assert_eq!(report.breakdown.total, report.breakdown.pixel);
    }

    #[test]
    fn total_equals_weighted_sum_of_terms() {
        let (_, input) = scene_input("sphere", 9, 32);
        let w = LossWeights::default();
        let report = total_loss(&input, &w).unwrap();
        let dot = report.breakdown.weighted_total(&w);
        assert!((report.breakdown.total - dot).abs() < 1e-12);
        assert_eq!(report.breakdown.total, dot);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (_, input) = scene_input("slant", 11, 32);
        let w = LossWeights::default();
        let a = total_loss(&input, &w).unwrap();
        let b = total_loss(&input, &w).unwrap();
        assert_eq!(a.breakdown.total, b.breakdown.total);
        assert_eq!(a.grad_depths[1].values(), b.grad_depths[1].values());
        assert_eq!(a.grad_poses, b.grad_poses);
    }

    #[test]
    fn term_superposition_holds() {
        let (_, input) = scene_input("plane", 13, 32);
        let w = LossWeights::default();
        let full = total_loss(&input, &w).unwrap();
        let zeroed = LossWeights {
            mu_depth: 0.0,
            ..w
        };
        let without = total_loss(&input, &zeroed).unwrap();
        // removing one weight removes exactly that term's contribution
        let expected = full.breakdown.total - w.mu_depth * full.breakdown.depth;
        assert!((without.breakdown.total - expected).abs() < 1e-12);
        for i in 0..3 {
            for (a, b) in full.grad_depths[i]
                .values()
                .iter()
                .zip(without.grad_depths[i].values())
            {
                // gradients may differ only by the depth-consistency part
                let diff: f64 = a - b;
                if diff != 0.0 {
                    continue;
                }
            }
        }
    }

    #[test]
    fn gradient_entries_outside_all_masks_are_zero() {
        let (_, mut input) = scene_input("plane", 15, 48);
        // no smoothness so only masked terms touch the depth gradient
        let w = LossWeights {
            beta: 0.0,
            ..LossWeights::default()
        };
        // push both warps in the same lateral direction so a border band is
        // invalid in every mask
        input.pose_to_backward.translation = Vector3::new(2.0, 0.3, -0.36);
        input.pose_to_forward.translation = Vector3::new(2.2, 0.35, 0.37);
        let report = total_loss(&input, &w).unwrap();

        let warp_b = compute_warp(
            &input.depths[1],
            &params_to_pose(&input.pose_to_backward),
            &input.intrinsics,
            &input.intrinsics,
        )
        .unwrap();
        let warp_f = compute_warp(
            &input.depths[1],
            &params_to_pose(&input.pose_to_forward),
            &input.intrinsics,
            &input.intrinsics,
        )
        .unwrap();
        // pixels valid in neither pair and away from any match stencil
        let mut outside = 0;
        for y in 0..48 {
            for x in 0..48 {
                if warp_b.valid().get(x, y) || warp_f.valid().get(x, y) {
                    continue;
                }
                let near_match = input
                    .matches_backward
                    .pairs()
                    .iter()
                    .chain(input.matches_forward.pairs())
                    .any(|(p, _)| {
                        (p.u - x as f64).abs() < 2.0 && (p.v - y as f64).abs() < 2.0
                    });
                if near_match {
                    continue;
                }
                outside += 1;
                assert_eq!(
                    report.grad_depths[1].at(x, y),
                    0.0,
                    "gradient leaked into unmasked pixel ({x},{y})"
                );
            }
        }
        assert!(outside > 10, "test scene produced no unmasked pixels");
    }

    #[test]
    fn value_evaluator_matches_total_loss_bit_for_bit() {
        let (_, input) = scene_input("sphere", 17, 32);
        let w = LossWeights::default();
        let report = total_loss(&input, &w).unwrap();
        let mut fast = SnippetValueEvaluator::new(ObjectiveOptions::default());
        let b = fast.eval(&input, &w, DirtyBlocks::all()).unwrap();
        assert_eq!(b.pixel, report.breakdown.pixel);
        assert_eq!(b.ssim, report.breakdown.ssim);
        assert_eq!(b.smooth, report.breakdown.smooth);
        assert_eq!(b.epi, report.breakdown.epi);
        assert_eq!(b.reproj, report.breakdown.reproj);
        assert_eq!(b.depth, report.breakdown.depth);
        assert_eq!(b.multi, report.breakdown.multi);
        assert_eq!(b.total, report.breakdown.total);
    }

    #[test]
    fn incremental_caching_is_bit_exact() {
        let (_, base) = scene_input("sphere", 19, 24);
        let w = LossWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut cached = SnippetValueEvaluator::new(ObjectiveOptions::default());
        cached.eval(&base, &w, DirtyBlocks::all()).unwrap();

        for trial in 0..20 {
            let mut input = base.clone();
            // perturb exactly one parameter block
            let block = rng.gen_range(0..5);
            let dirty = match block {
                0..=2 => {
                    let i = block;
                    let idx = rng.gen_range(0..input.depths[i].len());
                    input.depths[i].values_mut()[idx] += 0.01;
                    DirtyBlocks::depth(i)
                }
                3 => {
                    input.pose_to_backward.translation.x += 1e-4;
                    DirtyBlocks::pose(0)
                }
                _ => {
                    input.pose_to_forward.rotation_vector.y += 1e-5;
                    DirtyBlocks::pose(1)
                }
            };
            let incremental = cached.eval(&input, &w, dirty).unwrap();
            let mut fresh = SnippetValueEvaluator::new(ObjectiveOptions::default());
            let full = fresh.eval(&input, &w, DirtyBlocks::all()).unwrap();
            assert_eq!(incremental.total, full.total, "trial {trial} diverged");
            assert_eq!(incremental.pixel, full.pixel, "trial {trial} pixel");
            assert_eq!(incremental.multi, full.multi, "trial {trial} multi");
            assert_eq!(incremental.depth, full.depth, "trial {trial} depth");
            // return the evaluator to the base state
            cached.eval(&base, &w, dirty).unwrap();
        }
    }

    #[test]
    fn gradient_check_quadratic_and_negative_control() {
        let point = [1.5, -2.0, 0.7, 3.1];
        let analytic: Vec<f64> = point.iter().map(|&x| 2.0 * x).collect();
        let f = |x: &[f64]| Ok(x.iter().map(|v| v * v).sum());
        let report = gradient_check(f, &analytic, &point, 1e-6, 1e-9).unwrap();
        assert!(report.pass, "max rel {}", report.max_rel_error);

        let corrupted: Vec<f64> = analytic.iter().map(|g| g * 1.1).collect();
        let report = gradient_check(f, &corrupted, &point, 1e-6, 1e-4).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn gradient_check_against_the_snippet_objective() {
        let (_, mut input) = scene_input("sphere", 37, 24);
        input.pose_to_backward.translation.y += 0.01;
        input.pose_to_forward.rotation_vector.z += 0.001;
        let w = LossWeights::default();
        let report = total_loss(&input, &w).unwrap();
        let point: Vec<f64> = input
            .pose_to_backward
            .to_vector()
            .iter()
            .chain(input.pose_to_forward.to_vector().iter())
            .copied()
            .collect();
        let analytic: Vec<f64> = report.grad_poses[0]
            .iter()
            .chain(report.grad_poses[1].iter())
            .copied()
            .collect();
        let value = |x: &[f64]| {
            let mut probe = input.clone();
            probe.pose_to_backward =
                PoseParams::from_vector(&nalgebra::Vector6::from_row_slice(&x[..6]));
            probe.pose_to_forward =
                PoseParams::from_vector(&nalgebra::Vector6::from_row_slice(&x[6..]));
            Ok(total_loss(&probe, &w)?.breakdown.total)
        };
        let check = gradient_check(value, &analytic, &point, 1e-7, 1e-3).unwrap();
        assert!(check.pass, "max rel {}", check.max_rel_error);

        // corrupting one substantial entry must be caught
        let mut corrupted = analytic.clone();
        corrupted[0] *= 1.1;
        let check = gradient_check(value, &corrupted, &point, 1e-7, 1e-3).unwrap();
        assert!(!check.pass);
    }

    #[test]
    fn refine_with_zero_learning_rate_changes_nothing() {
        let (_, input) = scene_input("plane", 21, 24);
        let w = LossWeights::default();
        let result =
            gradient_descent_refine(&input, &w, 3, 0.0, UpdateBlocks::default()).unwrap();
        assert_eq!(
            result.refined.depths[1].values(),
            input.depths[1].values()
        );
        assert_eq!(
            result.refined.pose_to_backward.to_vector(),
            input.pose_to_backward.to_vector()
        );
        assert_eq!(result.trace.len(), 4);
    }

    #[test]
    fn refine_near_ground_truth_stays_put() {
        let (_, input) = scene_input("plane", 25, 32);
        let w = LossWeights::default();
        let result =
            gradient_descent_refine(&input, &w, 50, 1e-5, UpdateBlocks::poses_only()).unwrap();
        let before = input.pose_to_backward.to_vector();
        let after = result.refined.pose_to_backward.to_vector();
        let rel = (after - before).norm() / before.norm();
        assert!(rel < 1e-3, "moved {rel}");
    }

    #[test]
    fn refinement_phase_masks_change_the_photometric_terms() {
        let (_, mut input) = scene_input("sphere", 27, 48);
        let w = LossWeights::default();
        let warm = total_loss(&input, &w).unwrap();
        input.mask_phase = MaskPhase::Refinement;
        let refined = total_loss(&input, &w).unwrap();
        // percentile masking keeps only high-gradient pixels: values differ
        assert_ne!(warm.breakdown.pixel, refined.breakdown.pixel);
        // unmasked terms are untouched
        assert_eq!(warm.breakdown.epi, refined.breakdown.epi);
        assert_eq!(warm.breakdown.smooth, refined.breakdown.smooth);
    }

    #[test]
    fn pose_perturbation_recovery_by_descent() {
        // translation perturbed away from truth; depth and rotation are held
        // at their true values and descent runs on the perturbed block
        let (_, mut input) = scene_input("sphere", 29, 32);
        let truth_b = input.pose_to_backward.translation;
        let truth_f = input.pose_to_forward.translation;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut dir = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        dir /= dir.norm();
        input.pose_to_backward.translation += dir * 0.05 * truth_b.norm();
        input.pose_to_forward.translation -= dir * 0.05 * truth_f.norm();
        let initial_err = (input.pose_to_backward.translation - truth_b).norm()
            + (input.pose_to_forward.translation - truth_f).norm();

        let w = LossWeights::default();
        let result =
            gradient_descent_refine(&input, &w, 200, 1e-3, UpdateBlocks::translations_only())
                .unwrap();
        let final_err = (result.refined.pose_to_backward.translation - truth_b).norm()
            + (result.refined.pose_to_forward.translation - truth_f).norm();
        assert!(
            final_err <= 0.5 * initial_err,
            "error {initial_err} -> {final_err}"
        );
    }

    #[test]
    fn total_loss_gradients_match_finite_differences_spotwise() {
        let (_, mut input) = scene_input("sphere", 33, 32);
        // move off the ground truth to avoid kinks
        input.pose_to_backward.translation.x += 0.02;
        input.pose_to_forward.rotation_vector.z -= 0.002;
        for d in input.depths.iter_mut() {
            for (i, v) in d.values_mut().iter_mut().enumerate() {
                *v *= 1.0 + 1e-3 * ((i % 17) as f64 - 8.0) / 8.0;
            }
        }
        let w = LossWeights::default();
        let report = total_loss(&input, &w).unwrap();
        let mut fast = SnippetValueEvaluator::new(ObjectiveOptions::default());
        fast.eval(&input, &w, DirtyBlocks::all()).unwrap();

        // pose coordinates via the cached evaluator
        for slot in 0..2 {
            for kp in 0..6 {
                let h = 1e-7;
                let mut plus = input.clone();
                let mut minus = input.clone();
                if slot == 0 {
                    let mut v = plus.pose_to_backward.to_vector();
                    v[kp] += h;
                    plus.pose_to_backward = PoseParams::from_vector(&v);
                    let mut v = minus.pose_to_backward.to_vector();
                    v[kp] -= h;
                    minus.pose_to_backward = PoseParams::from_vector(&v);
                } else {
                    let mut v = plus.pose_to_forward.to_vector();
                    v[kp] += h;
                    plus.pose_to_forward = PoseParams::from_vector(&v);
                    let mut v = minus.pose_to_forward.to_vector();
                    v[kp] -= h;
                    minus.pose_to_forward = PoseParams::from_vector(&v);
                }
                let fp = fast.eval(&plus, &w, DirtyBlocks::pose(slot)).unwrap().total;
                let fm = fast
                    .eval(&minus, &w, DirtyBlocks::pose(slot))
                    .unwrap()
                    .total;
                fast.eval(&input, &w, DirtyBlocks::pose(slot)).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let g = report.grad_poses[slot][kp];
                let denom = fd.abs().max(g.abs()).max(1e-6);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "pose {slot} grad {kp}: {g} vs {fd}"
                );
            }
        }
    }
}
