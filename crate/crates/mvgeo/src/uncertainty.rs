//! Line-camera triangulation-uncertainty model.
//!
//! A line camera projects 2-D plane points to 1-D image points through a
//! 2x3 matrix and a homogeneous division. Given two noisy 1-D observations
//! of the same plane point, the posterior over the point is the normalized
//! product of the two Gaussian likelihoods on a bounded grid. Sweeping the
//! ray-intersection angle shows how the positional uncertainty blows up as
//! the baseline narrows toward forward motion.

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GeomError, Result};
use crate::num::Scalar;

/// Largest boundary density allowed relative to the peak before the grid is
/// declared too small to hold the posterior mass.
const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

/// 2x3 projection from homogeneous plane points `(x, y, 1)` to a 1-D image
/// coordinate by the ratio of the two projected components.
#[derive(Debug, Clone, Copy)]
pub struct LineCamera<T> {
    pub p_matrix: Matrix2x3<T>,
}

impl<T: Scalar> LineCamera<T> {
    pub fn new(p_matrix: Matrix2x3<T>) -> Result<Self> {
        // rank 2: the two rows must be linearly independent
        let a = p_matrix.row(0);
        let b = p_matrix.row(1);
        let mut max_minor = T::zero();
        for i in 0..3 {
            for j in i + 1..3 {
                let det = a[i] * b[j] - a[j] * b[i];
                max_minor = max_minor.max(det.abs());
            }
        }
        let scale = p_matrix.norm();
        if max_minor <= T::of(1e-12) * scale * scale {
            return Err(GeomError::DegenerateConfiguration);
        }
        Ok(Self { p_matrix })
    }

    /// A camera at `position` looking along `direction` with unit focal
    /// length: image coordinate = lateral offset / depth along the axis.
    pub fn looking(position: Vector2<T>, direction: Vector2<T>) -> Result<Self> {
        let d = direction.normalize();
        let u = Vector2::new(-d.y, d.x);
        let p_matrix = Matrix2x3::new(
            u.x,
            u.y,
            -u.dot(&position),
            d.x,
            d.y,
            -d.dot(&position),
        );
        Self::new(p_matrix)
    }

    /// Noise-free projection of a plane point.
    pub fn project(&self, x: Vector2<T>) -> Result<T> {
        let h = self.p_matrix * Vector3::new(x.x, x.y, T::one());
        if h.y.abs() <= T::of(1e-12) {
            return Err(GeomError::ProjectionSingular);
        }
        Ok(h.x / h.y)
    }
}

/// Observation of a plane point with additive Gaussian noise, deterministic
/// given the seed.
pub fn observe<T: Scalar>(
    cam: &LineCamera<T>,
    x: Vector2<T>,
    sigma: T,
    rng_seed: u64,
) -> Result<T> {
    if sigma < T::zero() {
        return Err(GeomError::InvalidArgument("sigma must be >= 0".into()));
    }
    let exact = cam.project(x)?;
    if sigma == T::zero() {
        return Ok(exact);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, sigma.to_f64()).expect("positive sigma");
    Ok(exact + T::of(normal.sample(&mut rng)))
}

/// Rectangular grid specification for posterior evaluation.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec<T> {
    pub center: Vector2<T>,
    pub half_extent: Vector2<T>,
    pub cells_x: usize,
    pub cells_y: usize,
}

impl<T: Scalar> GridSpec<T> {
    pub fn square(center: Vector2<T>, half_extent: T, cells: usize) -> Self {
        Self {
            center,
            half_extent: Vector2::new(half_extent, half_extent),
            cells_x: cells,
            cells_y: cells,
        }
    }
}

/// Discretized, normalized posterior density over the plane.
#[derive(Debug, Clone)]
pub struct PosteriorGrid<T> {
    pub spec: GridSpec<T>,
    pub density: Vec<T>,
    pub cell_area: T,
}

impl<T: Scalar> PosteriorGrid<T> {
    pub fn cell_center(&self, ix: usize, iy: usize) -> Vector2<T> {
        let sx = self.spec.half_extent.x * T::of(2.0) / T::of(self.spec.cells_x as f64);
        let sy = self.spec.half_extent.y * T::of(2.0) / T::of(self.spec.cells_y as f64);
        Vector2::new(
            self.spec.center.x - self.spec.half_extent.x + sx * (T::of(ix as f64) + T::of(0.5)),
            self.spec.center.y - self.spec.half_extent.y + sy * (T::of(iy as f64) + T::of(0.5)),
        )
    }

    /// Total probability mass (should be 1 after normalization).
    pub fn total_mass(&self) -> T {
        let mut sum = T::zero();
        for &d in &self.density {
            sum += d;
        }
        sum * self.cell_area
    }

    /// Density-weighted mean.
    pub fn mean(&self) -> Vector2<T> {
        let mut m = Vector2::zeros();
        for iy in 0..self.spec.cells_y {
            for ix in 0..self.spec.cells_x {
                m += self.cell_center(ix, iy) * self.density[iy * self.spec.cells_x + ix];
            }
        }
        m * self.cell_area
    }

    /// Density-weighted covariance via grid moments.
    pub fn covariance(&self) -> Matrix2<T> {
        let mean = self.mean();
        let mut c = Matrix2::zeros();
        for iy in 0..self.spec.cells_y {
            for ix in 0..self.spec.cells_x {
                let d = self.cell_center(ix, iy) - mean;
                let w = self.density[iy * self.spec.cells_x + ix];
                c += d * d.transpose() * w;
            }
        }
        c * self.cell_area
    }

    /// Coordinates of the highest-density cell.
    pub fn mode(&self) -> Vector2<T> {
        let mut best = (T::zero(), 0usize, 0usize);
        for iy in 0..self.spec.cells_y {
            for ix in 0..self.spec.cells_x {
                let d = self.density[iy * self.spec.cells_x + ix];
                if d > best.0 {
                    best = (d, ix, iy);
                }
            }
        }
        self.cell_center(best.1, best.2)
    }

    pub fn cell_size(&self) -> Vector2<T> {
        Vector2::new(
            self.spec.half_extent.x * T::of(2.0) / T::of(self.spec.cells_x as f64),
            self.spec.half_extent.y * T::of(2.0) / T::of(self.spec.cells_y as f64),
        )
    }
}

/// Largest eigenvalue of a symmetric 2x2 matrix.
pub fn largest_eigenvalue<T: Scalar>(m: &Matrix2<T>) -> T {
    let tr = m.m11 + m.m22;
    let det = m.m11 * m.m22 - m.m12 * m.m21;
    let half = tr * T::of(0.5);
    half + (half * half - det).max(T::zero()).sqrt()
}

/// Posterior over the plane point given one observation from each camera,
/// assuming equal i.i.d. Gaussian noise and a uniform prior: the pointwise
/// product of the two likelihoods, normalized over the grid.
///
/// Fails with [`GeomError::GridTooSmall`] when the boundary carries more
/// than `1e-6` of the peak density, which signals truncated mass.
pub fn posterior<T: Scalar>(
    cams: [&LineCamera<T>; 2],
    obs: [T; 2],
    sigma: T,
    spec: GridSpec<T>,
) -> Result<PosteriorGrid<T>> {
    posterior_with_boundary_check(cams, obs, sigma, spec, true)
}

/// Like [`posterior`] but with the truncation check optional. Degenerate
/// setups (identical cameras) have a ridge of constant density along the
/// whole viewing ray, which no finite grid can contain; skipping the check
/// lets the grid moments of the truncated ridge be analyzed anyway.
pub fn posterior_with_boundary_check<T: Scalar>(
    cams: [&LineCamera<T>; 2],
    obs: [T; 2],
    sigma: T,
    spec: GridSpec<T>,
    check_boundary: bool,
) -> Result<PosteriorGrid<T>> {
    if sigma <= T::zero() {
        return Err(GeomError::InvalidArgument("sigma must be > 0".into()));
    }
    let two_sigma2 = T::of(2.0) * sigma * sigma;
    let nx = spec.cells_x;
    let ny = spec.cells_y;
    let mut density = vec![T::zero(); nx * ny];
    let mut grid = PosteriorGrid {
        spec,
        density: Vec::new(),
        cell_area: {
            let s = Vector2::new(
                spec.half_extent.x * T::of(2.0) / T::of(nx as f64),
                spec.half_extent.y * T::of(2.0) / T::of(ny as f64),
            );
            s.x * s.y
        },
    };
    // log-likelihoods first, shifted by the max for numerical stability
    let mut log_l = vec![T::zero(); nx * ny];
    let mut max_log = T::of(f64::NEG_INFINITY);
    for iy in 0..ny {
        for ix in 0..nx {
            let x = grid.cell_center(ix, iy);
            let mut ll = T::zero();
            let mut ok = true;
            for (cam, ob) in cams.iter().zip(obs.iter()) {
                match cam.project(x) {
                    Ok(p) => {
                        let r = p - *ob;
                        ll -= r * r / two_sigma2;
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            let v = if ok { ll } else { T::of(f64::NEG_INFINITY) };
            log_l[iy * nx + ix] = v;
            if v > max_log {
                max_log = v;
            }
        }
    }
    for i in 0..nx * ny {
        let v = log_l[i];
        density[i] = if v.is_finite() {
            (v - max_log).exp()
        } else {
            T::zero()
        };
    }
    // boundary truncation check before normalization: relative to the peak 1
    let mut boundary_max = T::zero();
    for ix in 0..nx {
        boundary_max = boundary_max.max(density[ix]).max(density[(ny - 1) * nx + ix]);
    }
    for iy in 0..ny {
        boundary_max = boundary_max
            .max(density[iy * nx])
            .max(density[iy * nx + nx - 1]);
    }
    if check_boundary && boundary_max > T::of(BOUNDARY_MASS_LIMIT) {
        return Err(GeomError::GridTooSmall {
            boundary: boundary_max.to_f64(),
            limit: BOUNDARY_MASS_LIMIT,
        });
    }
    let mut mass = T::zero();
    for &d in &density {
        mass += d;
    }
    mass *= grid.cell_area;
    for d in density.iter_mut() {
        *d /= mass;
    }
    grid.density = density;
    Ok(grid)
}

/// Canonical two-camera setup for a baseline angle: both cameras at distance
/// 1 from the origin observing the point at the origin, their viewing rays
/// intersecting at the given angle.
/// visible for the acceptance suite and CLI
pub fn canonical_pair_internal_doc_placeholder() {}
pub fn canonical_pair<T: Scalar>(angle_rad: T) -> Result<[LineCamera<T>; 2]> {
    let half = angle_rad * T::of(0.5);
    let pos_a = Vector2::new(-half.sin(), -half.cos());
    let pos_b = Vector2::new(half.sin(), -half.cos());
    Ok([
        LineCamera::looking(pos_a, -pos_a)?,
        LineCamera::looking(pos_b, -pos_b)?,
    ])
}

/// Sweep of ray-intersection angles: for each angle, the largest eigenvalue
/// of the posterior covariance at consistent noiseless observations of the
/// true point. The grid half-extent adapts to the expected ridge length.
pub fn uncertainty_vs_baseline<T: Scalar>(
    angles_deg: &[T],
    sigma: T,
    cells: usize,
) -> Result<Vec<(T, T)>> {
    let mut out = Vec::with_capacity(angles_deg.len());
    for &deg in angles_deg {
        if deg <= T::zero() || deg > T::of(90.0) {
            return Err(GeomError::InvalidArgument(
                "angles must lie in (0, 90] degrees".into(),
            ));
        }
        let angle = deg * T::pi() / T::of(180.0);
        let cams = canonical_pair(angle)?;
        let truth = Vector2::zeros();
        let obs = [cams[0].project(truth)?, cams[1].project(truth)?];
        // the ridge half-length scales with sigma / sin(angle/2); cap the
        // extent below the camera distance so the grid stays in front of
        // both cameras. Sigma must be small against tan(angle/2) or the
        // projection saturation leaves real mass beyond any finite grid.
        let extent = (sigma * T::of(12.0) / (angle * T::of(0.5)).sin()).min(T::of(0.75));
        let spec = GridSpec::square(truth, extent, cells);
        let grid = posterior([&cams[0], &cams[1]], obs, sigma, spec)?;
        let eig = largest_eigenvalue(&grid.covariance());
        out.push((deg, eig));
    }
    Ok(out)
}
