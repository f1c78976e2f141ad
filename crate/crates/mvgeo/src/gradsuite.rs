//! Finite-difference verification of every loss term's analytic gradients
//! over a full snippet: all depth pixels of all three maps plus both 6-DoF
//! pose vectors, per term and for the weighted total.
//!
//! Full central differences need two objective evaluations per coordinate;
//! the cached [`SnippetValueEvaluator`] makes that feasible by recomputing
//! only the stages a perturbed parameter block actually touches.

use crate::error::Result;
use crate::grid::{Mask, ScalarGrid};
use crate::losses::consistency::{depth_consistency_loss, mean_normalize, mean_normalize_backprop, multiview_loss};
use crate::losses::photometric::{pixel_loss, smoothness_loss, ssim_loss};
use crate::losses::sparse::{epipolar_loss, reprojection_loss};
use crate::objective::{
    total_loss_with, DirtyBlocks, LossBreakdown, LossWeights, ObjectiveOptions, SnippetInput,
    SnippetValueEvaluator,
};
use crate::pose::PoseParams;
use crate::view_synthesis::{bilinear_sample, compute_warp_with_grad, WarpField, WarpPose};

/// Loss objects the suite verifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteTerm {
    Pixel,
    Ssim,
    Smooth,
    Epipolar,
    Reprojection,
    DepthConsistency,
    Multiview,
    Total,
}

impl SuiteTerm {
    pub const ALL: [SuiteTerm; 8] = [
        SuiteTerm::Pixel,
        SuiteTerm::Ssim,
        SuiteTerm::Smooth,
        SuiteTerm::Epipolar,
        SuiteTerm::Reprojection,
        SuiteTerm::DepthConsistency,
        SuiteTerm::Multiview,
        SuiteTerm::Total,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SuiteTerm::Pixel => "pixel",
            SuiteTerm::Ssim => "ssim",
            SuiteTerm::Smooth => "smooth",
            SuiteTerm::Epipolar => "epipolar",
            SuiteTerm::Reprojection => "reprojection",
            SuiteTerm::DepthConsistency => "depth-consistency",
            SuiteTerm::Multiview => "multiview",
            SuiteTerm::Total => "total",
        }
    }

    /// Parameter blocks the term depends on: depth map indices and whether
    /// the pose vectors participate.
    fn blocks(&self) -> (&'static [usize], bool) {
        match self {
            SuiteTerm::Pixel | SuiteTerm::Ssim | SuiteTerm::Reprojection => (&[1], true),
            SuiteTerm::Smooth => (&[1], false),
            SuiteTerm::Epipolar => (&[], true),
            SuiteTerm::DepthConsistency
            | SuiteTerm::Multiview
            | SuiteTerm::Total => (&[0, 1, 2], true),
        }
    }

    fn extract(&self, b: &LossBreakdown<f64>) -> f64 {
        match self {
            SuiteTerm::Pixel => b.pixel,
            SuiteTerm::Ssim => b.ssim,
            SuiteTerm::Smooth => b.smooth,
            SuiteTerm::Epipolar => b.epi,
            SuiteTerm::Reprojection => b.reproj,
            SuiteTerm::DepthConsistency => b.depth,
            SuiteTerm::Multiview => b.multi,
            SuiteTerm::Total => b.total,
        }
    }
}

/// Analytic gradients of one term, assembled from the individual loss APIs.
struct TermGradients {
    depths: [ScalarGrid<f64>; 3],
    poses: [[f64; 6]; 2],
}

fn pair_warps(input: &SnippetInput<f64>) -> Result<[WarpField<f64>; 2]> {
    let k = &input.intrinsics;
    Ok([
        compute_warp_with_grad(
            &input.depths[1],
            WarpPose::Direct(&input.pose_to_backward),
            k,
            k,
        )?,
        compute_warp_with_grad(
            &input.depths[1],
            WarpPose::Direct(&input.pose_to_forward),
            k,
            k,
        )?,
    ])
}

fn analytic_gradients(
    term: SuiteTerm,
    input: &SnippetInput<f64>,
    opts: &ObjectiveOptions<f64>,
    weights: &LossWeights<f64>,
) -> Result<TermGradients> {
    let (w, h) = (input.width(), input.height());
    let mut out = TermGradients {
        depths: [
            ScalarGrid::zeros(w, h),
            ScalarGrid::zeros(w, h),
            ScalarGrid::zeros(w, h),
        ],
        poses: [[0.0; 6]; 2],
    };
    let k = &input.intrinsics;
    let full = Mask::filled(w, h, true);
    match term {
        SuiteTerm::Pixel | SuiteTerm::Ssim => {
            let warps = pair_warps(input)?;
            for (slot, warp) in warps.iter().enumerate() {
                let frame = if slot == 0 { 0 } else { 2 };
                let synth: Vec<_> = input.frames[frame]
                    .iter()
                    .map(|ch| bilinear_sample(ch, warp))
                    .collect();
                let l = if term == SuiteTerm::Pixel {
                    pixel_loss(&input.frames[1], &synth, warp, &full)?
                } else {
                    ssim_loss(&input.frames[1], &synth, warp, &full, &opts.ssim)?
                };
                add_grid(&mut out.depths[1], &l.grad_depth, 1.0);
                add_pose(&mut out.poses[slot], &l.grad_pose, 1.0);
            }
        }
        SuiteTerm::Smooth => {
            let normalized = mean_normalize(&input.depths[1])?;
            let l = smoothness_loss(&normalized.depth, &input.frames[1])?;
            mean_normalize_backprop(
                &normalized,
                l.grad_depth.values(),
                out.depths[1].values_mut(),
            );
        }
        SuiteTerm::Epipolar => {
            for (slot, (pose, matches)) in [
                (&input.pose_to_backward, &input.matches_backward),
                (&input.pose_to_forward, &input.matches_forward),
            ]
            .into_iter()
            .enumerate()
            {
                let l = epipolar_loss(matches, pose, k, k, opts.epipolar_residual)?;
                add_pose(&mut out.poses[slot], &l.grad_pose, 1.0);
            }
        }
        SuiteTerm::Reprojection => {
            for (slot, (pose, matches)) in [
                (&input.pose_to_backward, &input.matches_backward),
                (&input.pose_to_forward, &input.matches_forward),
            ]
            .into_iter()
            .enumerate()
            {
                let l =
                    reprojection_loss(matches, pose, &input.depths[1], k, k, opts.behind_penalty)?;
                add_grid(&mut out.depths[1], &l.grad_depth, 1.0);
                add_pose(&mut out.poses[slot], &l.grad_pose, 1.0);
            }
        }
        SuiteTerm::DepthConsistency => {
            let warps = pair_warps(input)?;
            for (slot, warp) in warps.iter().enumerate() {
                let frame = if slot == 0 { 0 } else { 2 };
                let synth_depth = bilinear_sample(&input.depths[frame], warp);
                let l = depth_consistency_loss(&input.depths[1], &synth_depth, warp, &full)?;
                add_grid(&mut out.depths[1], &l.grad_target_depth, 1.0);
                add_grid(&mut out.depths[frame], &l.grad_source_depth, 1.0);
                add_pose(&mut out.poses[slot], &l.grad_pose, 1.0);
            }
        }
        SuiteTerm::Multiview => {
            let l = multiview_loss(
                [&input.frames[0], &input.frames[1], &input.frames[2]],
                [&input.depths[0], &input.depths[1], &input.depths[2]],
                &input.pose_to_backward,
                &input.pose_to_forward,
                k,
                weights.alpha,
                &opts.ssim,
            )?;
            for i in 0..3 {
                add_grid(&mut out.depths[i], &l.grad_depths[i], 1.0);
            }
            for slot in 0..2 {
                add_pose(&mut out.poses[slot], &l.grad_poses[slot], 1.0);
            }
        }
        SuiteTerm::Total => {
            let report = total_loss_with(input, weights, opts)?;
            out.depths = report.grad_depths;
            out.poses = report.grad_poses;
        }
    }
    Ok(out)
}

fn add_grid(acc: &mut ScalarGrid<f64>, other: &ScalarGrid<f64>, scale: f64) {
    for (a, b) in acc.values_mut().iter_mut().zip(other.values()) {
        *a += scale * *b;
    }
}

fn add_pose(acc: &mut [f64; 6], other: &[f64], scale: f64) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += scale * *b;
    }
}

/// Result of checking one term against one parameter block.
#[derive(Debug, Clone)]
pub struct SuiteBlockReport {
    pub term: &'static str,
    pub block: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Configuration of the finite-difference sweep.
#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    /// Relative depth step (scaled by the mean of each depth map).
    pub depth_step_rel: f64,
    /// Absolute pose parameter step.
    pub pose_step: f64,
    /// Maximum relative error accepted.
    pub tolerance: f64,
    /// Pixels whose warped coordinate lies within this margin of a bilinear
    /// lattice line are excluded; the interpolant is not differentiable on
    /// the lattice.
    pub lattice_margin: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            // small enough that interpolant truncation stays below
            // tolerance on near-floor gradient entries
            depth_step_rel: 5e-6,
            // bilinear cell crossings contribute an error linear in the
            // step while accumulation noise grows as 1/step; this sits
            // near the crossover
            pose_step: 1e-8,
            tolerance: 1e-4,
            lattice_margin: 1e-3,
        }
    }
}

fn near_lattice(warp: &WarpField<f64>, i: usize, margin: f64) -> bool {
    let c = warp.coords()[i];
    let fu = c.u - c.u.floor();
    let fv = c.v - c.v.floor();
    fu < margin || fu > 1.0 - margin || fv < margin || fv > 1.0 - margin
}

/// Mark the four bilinear stencil pixels of a sampled coordinate.
fn mark_stencil(mask: &mut [bool], w: usize, h: usize, u: f64, v: f64) {
    let x0 = (u.floor() as isize).clamp(0, w as isize - 1) as usize;
    let y0 = (v.floor() as isize).clamp(0, h as isize - 1) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    mask[y0 * w + x0] = true;
    mask[y0 * w + x1] = true;
    mask[y1 * w + x0] = true;
    mask[y1 * w + x1] = true;
}

/// Absolute-value terms are not differentiable where their residual is
/// zero; pixels whose residual sits within the margin of zero at the
/// evaluation point are excluded from the finite-difference comparison,
/// mapped back to the parameter pixels that move them.
fn kink_skip_masks(
    input: &SnippetInput<f64>,
    warps: &[WarpField<f64>; 2],
    opts: &ObjectiveOptions<f64>,
    photo_margin: f64,
    depth_margin: f64,
) -> Result<[Vec<bool>; 3]> {
    let (w, h) = (input.width(), input.height());
    let n = w * h;
    let mut skip = [vec![false; n], vec![false; n], vec![false; n]];

    for (slot, warp) in warps.iter().enumerate() {
        let frame = if slot == 0 { 0usize } else { 2 };
        // photometric difference kinks affect the center depth pixel
        for ch in 0..input.frames[1].len() {
            let synth = bilinear_sample(&input.frames[frame][ch], warp);
            for i in 0..n {
                if warp.valid().bits()[i]
                    && (synth.values().values()[i] - input.frames[1][ch].values()[i]).abs()
                        < photo_margin
                {
                    skip[1][i] = true;
                }
            }
        }
        // forward-backward depth residual kinks affect the center pixel and
        // the sampled source stencil
        let synth_depth = bilinear_sample(&input.depths[frame], warp);
        let mask = synth_depth.valid();
        if mask.count() > 0 {
            let a = input.depths[1].masked_mean(mask).unwrap();
            let b = synth_depth.values().masked_mean(mask).unwrap();
            if b > 0.0 {
                let s = a / b;
                for i in 0..n {
                    if !mask.bits()[i] {
                        continue;
                    }
                    let r = s * synth_depth.values().values()[i] - input.depths[1].values()[i];
                    if r.abs() < depth_margin {
                        skip[1][i] = true;
                        let c = warp.coords()[i];
                        mark_stencil(&mut skip[frame], w, h, c.u, c.v);
                    }
                }
            }
        }
        // matches whose reprojection residual is at the L2 kink
        let matches = if slot == 0 {
            &input.matches_backward
        } else {
            &input.matches_forward
        };
        let pose = if slot == 0 {
            &input.pose_to_backward
        } else {
            &input.pose_to_forward
        };
        let pose = crate::pose::params_to_pose(pose);
        for (p, q) in matches.pairs() {
            let d = crate::view_synthesis::bilinear_at(&input.depths[1], p.u, p.v);
            let x = input.intrinsics.ray(*p) * d;
            let y = pose.apply(x);
            if y.z > 1e-9 {
                let proj = crate::camera::project(y, &input.intrinsics)?;
                let dist = ((proj.u - q.u).powi(2) + (proj.v - q.v).powi(2)).sqrt();
                if dist < 1e-6 {
                    mark_stencil(&mut skip[1], w, h, p.u, p.v);
                }
            }
        }
    }

    // three-view depth-term kinks: residuals between the rescaled outer
    // depths under the chained warps
    let ratio = |slot: usize| -> Result<Option<f64>> {
        let frame = if slot == 0 { 0usize } else { 2 };
        let sd = bilinear_sample(&input.depths[frame], &warps[slot]);
        let mask = sd.valid();
        if mask.count() == 0 {
            return Ok(None);
        }
        let a = input.depths[1].masked_mean(mask).unwrap();
        let b = sd.values().masked_mean(mask).unwrap();
        Ok(if b > 0.0 { Some(a / b) } else { None })
    };
    if let (Some(s_b), Some(s_f)) = (ratio(0)?, ratio(1)?) {
        let dbar = [
            input.depths[0].map(|v| v * s_b),
            input.depths[2].map(|v| v * s_f),
        ];
        for dir in 0..2 {
            let (t_slot, s_slot) = if dir == 0 { (0usize, 1usize) } else { (1, 0) };
            let (t_frame, s_frame) = if dir == 0 { (0usize, 2usize) } else { (2, 0) };
            let (a, b) = if dir == 0 {
                (&input.pose_to_backward, &input.pose_to_forward)
            } else {
                (&input.pose_to_forward, &input.pose_to_backward)
            };
            let warp = compute_warp_with_grad(
                &dbar[t_slot],
                WarpPose::ChainThroughCenter { a, b },
                &input.intrinsics,
                &input.intrinsics,
            )?;
            let sd = bilinear_sample(&dbar[s_slot], &warp);
            for i in 0..n {
                if !sd.valid().bits()[i] {
                    continue;
                }
                let r = dbar[t_slot].values()[i] - sd.values().values()[i];
                if r.abs() < depth_margin {
                    skip[t_frame][i] = true;
                    let c = warp.coords()[i];
                    mark_stencil(&mut skip[s_frame], w, h, c.u, c.v);
                }
            }
            // photometric kinks of the chained pair affect the warp input
            // depth, i.e. the outer target frame
            for ch in 0..input.frames[t_frame].len() {
                let synth = bilinear_sample(&input.frames[s_frame][ch], &warp);
                for i in 0..n {
                    if warp.valid().bits()[i]
                        && (synth.values().values()[i]
                            - input.frames[t_frame][ch].values()[i])
                            .abs()
                            < photo_margin
                    {
                        skip[t_frame][i] = true;
                    }
                }
            }
        }
    }
    let _ = opts;
    Ok(skip)
}

/// Run the finite-difference gradient suite: one central-difference sweep
/// per parameter block evaluates every term at once (the evaluator reports
/// the full breakdown), and each term's analytic gradient is compared over
/// the blocks it depends on.
///
/// Every depth pixel is perturbed individually except pixels excluded for
/// sitting on a non-differentiable point at the evaluation state: warped
/// coordinates within `lattice_margin` of a bilinear cell boundary, and
/// absolute-value residuals within the kink margin of zero (both reported
/// as skipped).
pub fn run_gradient_suite(
    input: &SnippetInput<f64>,
    weights: &LossWeights<f64>,
    cfg: &SuiteConfig,
) -> Result<Vec<SuiteBlockReport>> {
    let opts = ObjectiveOptions::default();
    let n = input.width() * input.height();

    // lattice proximity per pixel, over the warps that move when a depth
    // pixel moves: both pair warps and both chained warps, the latter built
    // from the mean-ratio-scaled outer depths the three-view term uses
    let warps = pair_warps(input)?;
    let scale_ratio = |slot: usize| -> Result<f64> {
        let frame = if slot == 0 { 0usize } else { 2 };
        let sd = bilinear_sample(&input.depths[frame], &warps[slot]);
        let mask = sd.valid();
        if mask.count() == 0 {
            return Ok(1.0);
        }
        let a = input.depths[1].masked_mean(mask).unwrap();
        let b = sd.values().masked_mean(mask).unwrap();
        Ok(if b > 0.0 { a / b } else { 1.0 })
    };
    let dbar0 = input.depths[0].map({
        let s = scale_ratio(0)?;
        move |v| v * s
    });
    let dbar2 = input.depths[2].map({
        let s = scale_ratio(1)?;
        move |v| v * s
    });
    let chain_a = compute_warp_with_grad(
        &dbar0,
        WarpPose::ChainThroughCenter {
            a: &input.pose_to_backward,
            b: &input.pose_to_forward,
        },
        &input.intrinsics,
        &input.intrinsics,
    )?;
    let chain_b = compute_warp_with_grad(
        &dbar2,
        WarpPose::ChainThroughCenter {
            a: &input.pose_to_forward,
            b: &input.pose_to_backward,
        },
        &input.intrinsics,
        &input.intrinsics,
    )?;
    let lattice_skip: Vec<bool> = (0..n)
        .map(|i| {
            near_lattice(&warps[0], i, cfg.lattice_margin)
                || near_lattice(&warps[1], i, cfg.lattice_margin)
                || near_lattice(&chain_a, i, cfg.lattice_margin)
                || near_lattice(&chain_b, i, cfg.lattice_margin)
        })
        .collect();
    let mean_depth = input.depths[1].mean();
    let mut kink_skip = kink_skip_masks(
        input,
        &warps,
        &opts,
        // margins: a few times the largest residual change one step can
        // cause (sensitivities are bounded by ~0.1 intensity and ~1 depth
        // unit per depth unit respectively)
        4.0 * 0.1 * cfg.depth_step_rel * mean_depth,
        4.0 * cfg.depth_step_rel * mean_depth,
    )?;
    // smoothness kinks: near-zero forward differences of the normalized
    // center depth flip sign under perturbation of either endpoint
    {
        let normalized = mean_normalize(&input.depths[1])?.depth;
        let margin = 4.0 * cfg.depth_step_rel;
        let (w, h) = (input.width(), input.height());
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w && (normalized.at(x + 1, y) - normalized.at(x, y)).abs() < margin {
                    kink_skip[1][y * w + x] = true;
                    kink_skip[1][y * w + x + 1] = true;
                }
                if y + 1 < h && (normalized.at(x, y + 1) - normalized.at(x, y)).abs() < margin {
                    kink_skip[1][y * w + x] = true;
                    kink_skip[1][(y + 1) * w + x] = true;
                }
            }
        }
    }

    // analytic gradients per term, assembled through the individual APIs
    let analytic: Vec<TermGradients> = SuiteTerm::ALL
        .iter()
        .map(|t| analytic_gradients(*t, input, &opts, weights))
        .collect::<Result<_>>()?;

    struct BlockStats {
        max_rel: [f64; SuiteTerm::ALL.len()],
        checked: usize,
        skipped: usize,
    }
    let mut all_stats: Vec<(String, usize, BlockStats)> = Vec::new();

    let mut evaluator = SnippetValueEvaluator::new(opts);
    evaluator.eval(input, weights, DirtyBlocks::all())?;

    // gradient scale floors per term and block kind
    let depth_floor = |t: usize, di: usize| -> f64 {
        let peak = analytic[t].depths[di]
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        (peak * 3e-3).max(1e-12)
    };
    let pose_floor = |t: usize, slot: usize| -> f64 {
        let peak = analytic[t].poses[slot]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        (peak * 3e-3).max(1e-12)
    };

    for di in 0..3 {
        let h = cfg.depth_step_rel * input.depths[di].mean();
        let mut stats = BlockStats {
            max_rel: [0.0; SuiteTerm::ALL.len()],
            checked: 0,
            skipped: 0,
        };
        let mut state = input.clone();
        for i in 0..n {
            if lattice_skip[i] || kink_skip[di][i] {
                stats.skipped += 1;
                continue;
            }
            stats.checked += 1;
            let base = input.depths[di].values()[i];
            state.depths[di].values_mut()[i] = base + h;
            let bp = evaluator.eval(&state, weights, DirtyBlocks::depth(di))?;
            state.depths[di].values_mut()[i] = base - h;
            let bm = evaluator.eval(&state, weights, DirtyBlocks::depth(di))?;
            state.depths[di].values_mut()[i] = base;
            for (t, term) in SuiteTerm::ALL.iter().enumerate() {
                let (blocks, _) = term.blocks();
                if !blocks.contains(&di) && *term != SuiteTerm::Total {
                    continue;
                }
                let fd = (term.extract(&bp) - term.extract(&bm)) / (2.0 * h);
                let g = analytic[t].depths[di].values()[i];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(depth_floor(t, di));
                if rel > stats.max_rel[t] {
                    stats.max_rel[t] = rel;
                }
            }
        }
        evaluator.eval(input, weights, DirtyBlocks::depth(di))?;
        all_stats.push((format!("depth[{di}]"), di, stats));
    }

    // pose sweeps run per term family: terms dominated by absolute-value
    // and bilinear-cell crossing noise (linear in the step) want it small,
    // while smooth patch-statistics sums are roundoff limited (noise grows
    // as 1/step) and want it larger
    let chained_terms = [SuiteTerm::Pixel, SuiteTerm::Multiview, SuiteTerm::Total];
    for slot in 0..2 {
        let mut stats = BlockStats {
            max_rel: [0.0; SuiteTerm::ALL.len()],
            checked: 6,
            skipped: 0,
        };
        for (h, chained_pass) in [(10.0 * cfg.pose_step, false), (cfg.pose_step, true)] {
            for kp in 0..6 {
                let mut plus = input.clone();
                let mut minus = input.clone();
                {
                    let (p, m) = if slot == 0 {
                        (&mut plus.pose_to_backward, &mut minus.pose_to_backward)
                    } else {
                        (&mut plus.pose_to_forward, &mut minus.pose_to_forward)
                    };
                    let mut v = p.to_vector();
                    v[kp] += h;
                    *p = PoseParams::from_vector(&v);
                    let mut v = m.to_vector();
                    v[kp] -= h;
                    *m = PoseParams::from_vector(&v);
                }
                let bp = evaluator.eval(&plus, weights, DirtyBlocks::pose(slot))?;
                let bm = evaluator.eval(&minus, weights, DirtyBlocks::pose(slot))?;
                evaluator.eval(input, weights, DirtyBlocks::pose(slot))?;
                for (t, term) in SuiteTerm::ALL.iter().enumerate() {
                    let (_, poses) = term.blocks();
                    if !poses || chained_terms.contains(term) != chained_pass {
                        continue;
                    }
                    let fd = (term.extract(&bp) - term.extract(&bm)) / (2.0 * h);
                    let g = analytic[t].poses[slot][kp];
                    let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(pose_floor(t, slot));
                    if rel > stats.max_rel[t] {
                        stats.max_rel[t] = rel;
                    }
                }
            }
        }
        all_stats.push((format!("pose[{slot}]"), 10 + slot, stats));
    }

    let mut reports = Vec::new();
    for (block_name, block_id, stats) in &all_stats {
        for (t, term) in SuiteTerm::ALL.iter().enumerate() {
            let (blocks, poses) = term.blocks();
            let participates = if *block_id >= 10 {
                poses
            } else {
                blocks.contains(block_id) || *term == SuiteTerm::Total
            };
            if !participates {
                continue;
            }
            reports.push(SuiteBlockReport {
                term: term.name(),
                block: block_name.clone(),
                checked: stats.checked,
                skipped: stats.skipped,
                max_rel_error: stats.max_rel[t],
                pass: stats.max_rel[t] < cfg.tolerance,
            });
        }
    }
    Ok(reports)
}

/// The seeded snippet the gradient suite runs on: a scene with depth
/// variation, evaluated away from the ground truth so the losses sit away
/// from their kinks.
pub fn suite_snippet(scenario: &str, seed: u64, size: usize) -> Result<SnippetInput<f64>> {
    use crate::losses::sparse::MatchSet;
    use crate::objective::MaskPhase;
    let scene = crate::synthetic::SyntheticScene::<f64>::scenario(scenario, seed, size, size)?;
    let f0 = scene.render(0)?;
    let f1 = scene.render(1)?;
    let f2 = scene.render(2)?;
    let mut input = SnippetInput {
        frames: [f0.channels, f1.channels, f2.channels],
        depths: [f0.depth, f1.depth, f2.depth],
        pose_to_backward: crate::pose::pose_to_params(&scene.relative_pose(1, 0))?,
        pose_to_forward: crate::pose::pose_to_params(&scene.relative_pose(1, 2))?,
        matches_backward: MatchSet::new(scene.generate_matches(1, 0, &[2], 100, seed + 1, 0.0)?),
        matches_forward: MatchSet::new(scene.generate_matches(1, 2, &[0], 100, seed + 2, 0.0)?),
        intrinsics: scene.intrinsics,
        mask_phase: MaskPhase::Warmup,
    };
    // deterministic off-truth perturbation
    input.pose_to_backward.translation.x += 0.013;
    input.pose_to_backward.rotation_vector.y -= 0.0015;
    input.pose_to_forward.translation.z += 0.011;
    input.pose_to_forward.rotation_vector.x += 0.0012;
    for (i, d) in input.depths.iter_mut().enumerate() {
        for (j, v) in d.values_mut().iter_mut().enumerate() {
            let wob = ((j * 31 + i * 17) % 101) as f64 / 101.0 - 0.5;
            *v *= 1.0 + 0.004 * wob;
        }
    }
    Ok(input)
}
