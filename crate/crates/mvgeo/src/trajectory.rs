//! Trajectory assembly and evaluation: chaining overlapping snippet poses
//! into a full trajectory, closed-form similarity alignment, snippet ATE
//! with optimal scale, and median absolute position error.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{GeomError, Result};
use crate::num::Scalar;
use crate::pose::{compose, invert, Pose};

/// Reference values reported for fully trained models on the KITTI odometry
/// benchmark; kept as documentation targets, not reproducible at desk scale.
pub mod reference {
    /// Median absolute position error of chained 3-frame snippets, meters.
    pub const KITTI_SEQ09_MEDIAN_APE_M: f64 = 8.82;
    pub const KITTI_SEQ10_MEDIAN_APE_M: f64 = 23.09;
    /// Snippet ATE mean and standard deviation on sequence 09.
    pub const KITTI_SEQ09_SNIPPET_ATE: (f64, f64) = (0.009, 0.005);
    /// Single-view depth absolute relative error, KITTI Eigen split.
    pub const KITTI_DEPTH_ABS_REL: f64 = 0.140;
}

/// Camera-to-world poses indexed by frame number.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub poses: Vec<Pose<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(poses: Vec<Pose<T>>) -> Result<Self> {
        if poses.is_empty() {
            return Err(GeomError::InvalidArgument("trajectory is empty".into()));
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<T>> {
        self.poses.iter().map(|p| p.translation).collect()
    }
}

/// Poses of an N-frame snippet relative to its first frame (which is the
/// identity).
#[derive(Debug, Clone)]
pub struct Snippet<T> {
    pub poses: Vec<Pose<T>>,
}

impl<T: Scalar> Snippet<T> {
    pub fn new(poses: Vec<Pose<T>>) -> Result<Self> {
        if poses.is_empty() {
            return Err(GeomError::InvalidArgument("snippet is empty".into()));
        }
        let first = &poses[0];
        if (first.rotation - Matrix3::identity()).norm() > T::of(1e-12)
            || first.translation.norm() > T::of(1e-12)
        {
            return Err(GeomError::InvalidArgument(
                "snippet poses must be relative to the first frame".into(),
            ));
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Slice a trajectory into overlapping snippets of the given length.
    pub fn slice_trajectory(
        traj: &Trajectory<T>,
        len: usize,
        stride: usize,
    ) -> Result<Vec<Snippet<T>>> {
        if len < 2 || stride == 0 || traj.len() < len {
            return Err(GeomError::InvalidArgument(
                "invalid snippet length or stride".into(),
            ));
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start + len <= traj.len() {
            let base_inv = invert(&traj.poses[start]);
            let poses = (start..start + len)
                .map(|i| compose(&base_inv, &traj.poses[i]))
                .collect();
            out.push(Snippet { poses });
            start += stride;
        }
        Ok(out)
    }
}

/// Average two nearby rotations: quaternions brought into a common
/// hemisphere, averaged and renormalized.
fn average_rotations<T: Scalar>(a: &Matrix3<T>, b: &Matrix3<T>) -> Matrix3<T> {
    let qa = UnitQuaternion::from_matrix(a).into_inner();
    let mut qb = UnitQuaternion::from_matrix(b).into_inner();
    if qa.dot(&qb) < T::zero() {
        qb = -qb;
    }
    let q = Quaternion::from_vector((qa.coords + qb.coords) * T::of(0.5));
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// Chain 3-frame snippets with a 2-frame overlap into a full trajectory,
/// fixing frame 0 as the origin.
///
/// Interior frame steps are predicted twice (by the snippet ending there and
/// the one starting there); the two predictions are merged by averaging
/// translations arithmetically and rotations via quaternion normalization.
pub fn chain_snippets<T: Scalar>(snippets: &[Snippet<T>]) -> Result<Trajectory<T>> {
    if snippets.is_empty() {
        return Err(GeomError::InvalidArgument("no snippets to chain".into()));
    }
    if snippets.len() == 1 {
        return Trajectory::new(snippets[0].poses.clone());
    }
    for (i, s) in snippets.iter().enumerate() {
        if s.len() != 3 {
            return Err(GeomError::OverlapMismatch { index: i });
        }
    }

    // relative pose of step k -> k+1 as predicted by each snippet
    let step_from_first = |s: &Snippet<T>| s.poses[1];
    let step_between_last_two =
        |s: &Snippet<T>| compose(&invert(&s.poses[1]), &s.poses[2]);

    let n_frames = snippets.len() + 2;
    let mut steps: Vec<Pose<T>> = Vec::with_capacity(n_frames - 1);
    for k in 0..n_frames - 1 {
        // snippet k predicts the step from its first to its second frame;
        // snippet k-1 predicts the same step between its last two frames
        let from_current = if k < snippets.len() {
            Some(step_from_first(&snippets[k]))
        } else {
            None
        };
        let from_previous = if k >= 1 && k - 1 < snippets.len() {
            Some(step_between_last_two(&snippets[k - 1]))
        } else {
            None
        };
        let step = match (from_current, from_previous) {
            (Some(a), Some(b)) => Pose::new(
                average_rotations(&a.rotation, &b.rotation),
                (a.translation + b.translation) * T::of(0.5),
            ),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("step index out of range"),
        };
        steps.push(step);
    }

    let mut poses = Vec::with_capacity(n_frames);
    poses.push(Pose::identity());
    for step in steps {
        let last = *poses.last().unwrap();
        poses.push(compose(&last, &step));
    }
    Trajectory::new(poses)
}

/// Similarity transform recovered by least squares.
#[derive(Debug, Clone, Copy)]
pub struct SimilarityTransform<T> {
    pub scale: T,
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Scalar> SimilarityTransform<T> {
    pub fn apply(&self, x: Vector3<T>) -> Vector3<T> {
        self.rotation * x * self.scale + self.translation
    }
}

/// Closed-form least-squares similarity `min sum ||s R x_i + t - y_i||^2`
/// between the positions of two equal-length trajectories, with the
/// determinant correction for reflections.
pub fn umeyama_align<T: Scalar>(
    est: &Trajectory<T>,
    gt: &Trajectory<T>,
) -> Result<SimilarityTransform<T>> {
    if est.len() != gt.len() {
        return Err(GeomError::LengthMismatch {
            expected: gt.len(),
            got: est.len(),
        });
    }
    if est.len() < 3 {
        return Err(GeomError::DegenerateConfiguration);
    }
    let n = T::of(est.len() as f64);
    let xs = est.positions();
    let ys = gt.positions();
    let mean = |v: &[Vector3<T>]| v.iter().fold(Vector3::zeros(), |a, b| a + b) / n;
    let mx = mean(&xs);
    let my = mean(&ys);

    let mut cov = Matrix3::zeros();
    let mut var_x = T::zero();
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - mx;
        let dy = y - my;
        cov += dy * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n;
    var_x /= n;
    if var_x <= T::of(1e-15) {
        return Err(GeomError::DegenerateConfiguration);
    }

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or(GeomError::DegenerateConfiguration)?;
    let vt = svd.v_t.ok_or(GeomError::DegenerateConfiguration)?;
    let mut s_diag = Vector3::from_element(T::one());
    if (u * vt).determinant() < T::zero() {
        s_diag.z = -T::one();
    }
    let rotation = u * Matrix3::from_diagonal(&s_diag) * vt;
    let scale = svd.singular_values.dot(&s_diag) / var_x;
    let translation = my - rotation * mx * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

/// Absolute trajectory error over one snippet: positions are aligned by the
/// optimal scalar scale (first frames pinned at the origin) and the RMSE of
/// the position residuals is returned.
pub fn snippet_ate<T: Scalar>(est: &Snippet<T>, gt: &Snippet<T>) -> Result<T> {
    if est.len() != gt.len() {
        return Err(GeomError::LengthMismatch {
            expected: gt.len(),
            got: est.len(),
        });
    }
    let mut dot = T::zero();
    let mut norm = T::zero();
    for (e, g) in est.poses.iter().zip(&gt.poses) {
        dot += e.translation.dot(&g.translation);
        norm += e.translation.norm_squared();
    }
    let scale = if norm > T::zero() { dot / norm } else { T::one() };
    let mut sq = T::zero();
    for (e, g) in est.poses.iter().zip(&gt.poses) {
        sq += (e.translation * scale - g.translation).norm_squared();
    }
    Ok((sq / T::of(est.len() as f64)).sqrt())
}

/// Median absolute position error after full-trajectory similarity
/// alignment of the estimate onto the ground truth.
pub fn median_ape<T: Scalar>(est: &Trajectory<T>, gt: &Trajectory<T>) -> Result<T> {
    let sim = umeyama_align(est, gt)?;
    let mut errors: Vec<T> = est
        .positions()
        .iter()
        .zip(gt.positions())
        .map(|(e, g)| (sim.apply(*e) - g).norm())
        .collect();
    errors.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let n = errors.len();
    Ok(if n % 2 == 1 {
        errors[n / 2]
    } else {
        (errors[n / 2 - 1] + errors[n / 2]) * T::of(0.5)
    })
}
