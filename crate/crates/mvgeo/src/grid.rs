//! Dense scalar grids and binary masks.
//!
//! A [`ScalarGrid`] stores one channel of real values in row-major order and
//! backs images (per channel), depth maps, error maps and gradient buffers.

use crate::error::{GeomError, Result};
use crate::num::Scalar;

/// H x W grid of reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> ScalarGrid<T> {
    /// Grid filled with a constant value.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Grid of zeros.
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    /// Build from a closure of pixel coordinates `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Build from raw row-major values, validating length and finiteness.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height || width == 0 || height == 0 {
            return Err(GeomError::DimensionMismatch {
                expected: format!("{width}x{height}"),
                got: format!("{} values", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFiniteEvaluation);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut T {
        debug_assert!(x < self.width && y < self.height);
        &mut self.data[y * self.width + x]
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Mean over all pixels.
    pub fn mean(&self) -> T {
        let mut sum = T::zero();
        for &v in &self.data {
            sum += v;
        }
        sum / T::of(self.data.len() as f64)
    }

    /// Mean restricted to mask; `None` when the mask is empty.
    pub fn masked_mean(&self, mask: &Mask) -> Option<T> {
        debug_assert_eq!(self.data.len(), mask.bits.len());
        let mut sum = T::zero();
        let mut n = 0usize;
        for (&v, &m) in self.data.iter().zip(&mask.bits) {
            if m {
                sum += v;
                n += 1;
            }
        }
        if n == 0 {
            None
        } else {
            Some(sum / T::of(n as f64))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn all_positive(&self) -> bool {
        self.data.iter().all(|&v| v > T::zero())
    }

    /// Cast every value, e.g. for 32-bit file output.
    pub fn cast<U: Scalar>(&self) -> ScalarGrid<U> {
        ScalarGrid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::of(v.to_f64())).collect(),
        }
    }
}

/// H x W binary grid. Used for validity masks and percentile masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Element-wise AND.
    pub fn and(&self, other: &Mask) -> Mask {
        assert!(self.same_dims(other), "mask dimensions must match");
        Mask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }
}
