//! Loss terms with analytic gradients.

pub mod consistency;
pub mod photometric;
pub mod sparse;

use crate::grid::ScalarGrid;
use crate::num::Scalar;

/// Value of a differentiable loss term together with its gradients.
///
/// `grad_depth` is the derivative against the target depth map of the view
/// pair; `grad_pose` against the pose parameters of the warp that produced
/// the synthesized inputs (6 entries for a single pose, 12 for a chained
/// pair, empty for terms with no pose dependence).
#[derive(Debug, Clone)]
pub struct LossValue<T> {
    pub value: T,
    pub grad_depth: ScalarGrid<T>,
    pub grad_pose: Vec<T>,
}

impl<T: Scalar> LossValue<T> {
    pub fn zero(width: usize, height: usize, n_pose: usize) -> Self {
        Self {
            value: T::zero(),
            grad_depth: ScalarGrid::zeros(width, height),
            grad_pose: vec![T::zero(); n_pose],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_depth.all_finite()
            && self.grad_pose.iter().all(|g| g.is_finite())
    }

    /// Accumulate `scale * other` into `self` (value and gradients).
    pub fn accumulate(&mut self, other: &LossValue<T>, scale: T) {
        self.value += scale * other.value;
        for (g, o) in self
            .grad_depth
            .values_mut()
            .iter_mut()
            .zip(other.grad_depth.values())
        {
            *g += scale * *o;
        }
        if self.grad_pose.len() < other.grad_pose.len() {
            self.grad_pose.resize(other.grad_pose.len(), T::zero());
        }
        for (g, o) in self.grad_pose.iter_mut().zip(&other.grad_pose) {
            *g += scale * *o;
        }
    }
}

#[inline]
pub(crate) fn sign_of<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
