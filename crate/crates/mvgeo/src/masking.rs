//! Percentile-based pixel selection masks.
//!
//! The error mask suppresses pixels whose photometric error lands above a
//! percentile of the valid population; the gradient mask keeps only pixels
//! whose image gradient magnitude exceeds a percentile. Their product
//! filters out photometrically inconsistent regions while keeping the
//! informative ones. Thresholds are recomputed per call and act as
//! stop-gradient weights in the losses.

use crate::error::{GeomError, Result};
use crate::grid::{Mask, ScalarGrid};
use crate::num::Scalar;

/// Percentile configuration for both masks, in percent.
#[derive(Debug, Clone, Copy)]
pub struct MaskConfig {
    pub error_percentile: f64,
    pub gradient_percentile: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            error_percentile: 90.0,
            gradient_percentile: 90.0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| p > 0.0 && p < 100.0;
        if !ok(self.error_percentile) || !ok(self.gradient_percentile) {
            return Err(GeomError::InvalidArgument(
                "percentiles must lie strictly between 0 and 100".into(),
            ));
        }
        Ok(())
    }
}

/// Nearest-rank percentile over the values selected by `valid`.
///
/// The threshold is the value at 1-based rank `ceil(p/100 * n)` of the
/// ascending sorted population.
pub fn nearest_rank_percentile<T: Scalar>(
    values: &ScalarGrid<T>,
    valid: &Mask,
    percentile: f64,
) -> Result<T> {
    let mut pop: Vec<T> = values
        .values()
        .iter()
        .zip(valid.bits())
        .filter_map(|(&v, &m)| if m { Some(v) } else { None })
        .collect();
    if pop.is_empty() {
        return Err(GeomError::EmptyMask);
    }
    pop.sort_by(|a, b| a.partial_cmp(b).expect("grid values are finite"));
    let n = pop.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    Ok(pop[rank.clamp(1, n) - 1])
}

/// Keep pixels whose error is at or below the error percentile among valid
/// pixels; ties at the threshold are kept. Invalid pixels stay masked out.
pub fn error_mask<T: Scalar>(
    error_map: &ScalarGrid<T>,
    valid: &Mask,
    cfg: &MaskConfig,
) -> Result<Mask> {
    cfg.validate()?;
    let threshold = nearest_rank_percentile(error_map, valid, cfg.error_percentile)?;
    Ok(Mask::from_fn(valid.width(), valid.height(), |x, y| {
        valid.get(x, y) && error_map.at(x, y) <= threshold
    }))
}

/// Forward-difference gradient magnitude, per-channel magnitudes averaged;
/// the last row and column use a zero gradient, matching the smoothness
/// term's discrete operator.
pub fn image_gradient_magnitude<T: Scalar>(channels: &[ScalarGrid<T>]) -> ScalarGrid<T> {
    let (w, h) = (channels[0].width(), channels[0].height());
    let inv_c = T::one() / T::of(channels.len() as f64);
    ScalarGrid::from_fn(w, h, |x, y| {
        let mut gx = T::zero();
        let mut gy = T::zero();
        for ch in channels {
            if x + 1 < w {
                gx += (ch.at(x + 1, y) - ch.at(x, y)).abs();
            }
            if y + 1 < h {
                gy += (ch.at(x, y + 1) - ch.at(x, y)).abs();
            }
        }
        (gx * gx + gy * gy).sqrt() * inv_c
    })
}

/// Keep pixels whose image-gradient magnitude lies strictly above the
/// gradient percentile among valid pixels.
pub fn gradient_mask<T: Scalar>(
    target_img: &[ScalarGrid<T>],
    valid: &Mask,
    cfg: &MaskConfig,
) -> Result<Mask> {
    cfg.validate()?;
    let mag = image_gradient_magnitude(target_img);
    let threshold = nearest_rank_percentile(&mag, valid, cfg.gradient_percentile)?;
    Ok(Mask::from_fn(valid.width(), valid.height(), |x, y| {
        valid.get(x, y) && mag.at(x, y) > threshold
    }))
}

/// Element-wise AND of the two masks.
pub fn composite_mask(error_m: &Mask, gradient_m: &Mask) -> Mask {
    error_m.and(gradient_m)
}
