//! Synthetic scenes with analytic depth: the verification oracle.
//!
//! Scenes are built from textured planes and spheres observed by a pinhole
//! camera along a known path. Rendering intersects each pixel ray with the
//! geometry in closed form, so depth maps are exact and feature matches can
//! be projected without any estimation error. All randomness is seeded.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{Intrinsics, PixelCoord};
use crate::error::{GeomError, Result};
use crate::grid::{Mask, ScalarGrid};
use crate::num::Scalar;
use crate::pose::{compose, invert, Pose};

/// Scene geometry primitive.
#[derive(Debug, Clone)]
pub enum Surface<T> {
    Plane {
        point: Vector3<T>,
        normal: Vector3<T>,
        axis_u: Vector3<T>,
        axis_v: Vector3<T>,
    },
    Sphere { center: Vector3<T>, radius: T },
}

#[derive(Debug, Clone, Copy)]
struct SinusoidComponent<T> {
    freq_u: T,
    freq_v: T,
    phase: T,
    amplitude: T,
}

/// Smooth procedural texture: per channel, a seeded mixture of sinusoids in
/// the surface coordinates. Values stay inside (0, 1) without clamping so the
/// rendered images are smooth functions of the geometry.
#[derive(Debug, Clone)]
pub struct Texture<T> {
    channels: Vec<Vec<SinusoidComponent<T>>>,
}

impl<T: Scalar> Texture<T> {
    fn seeded(channels: usize, seed: u64, max_freq: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = [0.22, 0.13, 0.08];
        let channels = (0..channels)
            .map(|_| {
                amps.iter()
                    .map(|&a| {
                        let dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                        let f: f64 = rng.gen_range(0.3 * max_freq..max_freq);
                        SinusoidComponent {
                            freq_u: T::of(f * dir.cos()),
                            freq_v: T::of(f * dir.sin()),
                            phase: T::of(rng.gen_range(0.0..std::f64::consts::TAU)),
                            amplitude: T::of(a),
                        }
                    })
                    .collect()
            })
            .collect();
        Self { channels }
    }

    fn eval(&self, channel: usize, a: T, b: T) -> T {
        let mut v = T::of(0.5);
        for c in &self.channels[channel] {
            v += c.amplitude * (c.freq_u * a + c.freq_v * b + c.phase).sin();
        }
        v
    }
}

/// A fully specified synthetic sequence: geometry, texture, intrinsics and a
/// camera path (camera-to-world poses, one per frame).
#[derive(Debug, Clone)]
pub struct SyntheticScene<T> {
    pub surfaces: Vec<Surface<T>>,
    pub path: Vec<Pose<T>>,
    pub intrinsics: Intrinsics<T>,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    texture: Texture<T>,
}

/// One ray-geometry hit.
struct Hit<T> {
    depth: T,
    surface: usize,
    point: Vector3<T>,
}

impl<T: Scalar> SyntheticScene<T> {
    /// Named preset scenes. `plane` is a fronto-parallel textured plane,
    /// `slant` a tilted plane, `sphere` a tilted plane plus a sphere.
    pub fn scenario(name: &str, seed: u64, width: usize, height: usize) -> Result<Self> {
        let fx = 0.95 * width as f64;
        let intrinsics = Intrinsics::new(
            T::of(fx),
            T::of(fx),
            T::of(0.5 * (width as f64 - 1.0)),
            T::of(0.5 * (height as f64 - 1.0)),
        )?;
        let surfaces: Vec<Surface<T>> = match name {
            "plane" => vec![Surface::Plane {
                point: Vector3::new(T::zero(), T::zero(), T::of(10.0)),
                normal: Vector3::new(T::zero(), T::zero(), T::one()),
                axis_u: Vector3::new(T::one(), T::zero(), T::zero()),
                axis_v: Vector3::new(T::zero(), T::one(), T::zero()),
            }],
            "slant" => {
                let normal = Vector3::new(T::of(0.22), T::of(-0.13), T::one()).normalize();
                let axis_u = Vector3::new(T::one(), T::zero(), T::zero())
                    .cross(&normal)
                    .normalize();
                let axis_v = normal.cross(&axis_u);
                vec![Surface::Plane {
                    point: Vector3::new(T::zero(), T::zero(), T::of(10.0)),
                    normal,
                    axis_u,
                    axis_v,
                }]
            }
            "sphere" => {
                let normal = Vector3::new(T::of(0.18), T::of(-0.1), T::one()).normalize();
                let axis_u = Vector3::new(T::one(), T::zero(), T::zero())
                    .cross(&normal)
                    .normalize();
                let axis_v = normal.cross(&axis_u);
                vec![
                    Surface::Plane {
                        point: Vector3::new(T::zero(), T::zero(), T::of(12.0)),
                        normal,
                        axis_u,
                        axis_v,
                    },
                    Surface::Sphere {
                        center: Vector3::new(T::of(0.9), T::of(-0.6), T::of(8.0)),
                        radius: T::of(1.6),
                    },
                ]
            }
            other => {
                return Err(GeomError::InvalidArgument(format!(
                    "unknown scenario `{other}` (expected plane, slant or sphere)"
                )))
            }
        };
        Ok(Self {
            surfaces,
            path: default_snippet_path(),
            intrinsics,
            width,
            height,
            channels: 3,
            texture: Texture::seeded(3, seed, 2.0),
        })
    }

    pub fn frame_count(&self) -> usize {
        self.path.len()
    }

    /// Relative transform from frame `t` camera coordinates to frame `s`.
    pub fn relative_pose(&self, t: usize, s: usize) -> Pose<T> {
        compose(&invert(&self.path[s]), &self.path[t])
    }

    /// Nearest positive ray-geometry intersection. `dir` is expressed in
    /// world coordinates and is not required to be unit length; the returned
    /// depth is the ray parameter.
    fn raycast(&self, origin: Vector3<T>, dir: Vector3<T>) -> Option<Hit<T>> {
        let mut best: Option<Hit<T>> = None;
        let eps = T::of(1e-9);
        for (idx, s) in self.surfaces.iter().enumerate() {
            let d = match s {
                Surface::Plane { point, normal, .. } => {
                    let denom = normal.dot(&dir);
                    if denom.abs() < eps {
                        continue;
                    }
                    let d = normal.dot(&(point - origin)) / denom;
                    if d <= eps {
                        continue;
                    }
                    d
                }
                Surface::Sphere { center, radius } => {
                    let oc = origin - center;
                    let a = dir.norm_squared();
                    let b = T::of(2.0) * dir.dot(&oc);
                    let c = oc.norm_squared() - *radius * *radius;
                    let disc = b * b - T::of(4.0) * a * c;
                    if disc < T::zero() {
                        continue;
                    }
                    let sq = disc.sqrt();
                    let d0 = (-b - sq) / (T::of(2.0) * a);
                    let d1 = (-b + sq) / (T::of(2.0) * a);
                    let d = if d0 > eps { d0 } else { d1 };
                    if d <= eps {
                        continue;
                    }
                    d
                }
            };
            if best.as_ref().map_or(true, |h| d < h.depth) {
                best = Some(Hit {
                    depth: d,
                    surface: idx,
                    point: origin + dir * d,
                });
            }
        }
        best
    }

    fn texture_coords(&self, surface: usize, point: Vector3<T>) -> (T, T) {
        match &self.surfaces[surface] {
            Surface::Plane {
                point: p0,
                axis_u,
                axis_v,
                ..
            } => {
                let rel = point - p0;
                (axis_u.dot(&rel), axis_v.dot(&rel))
            }
            Surface::Sphere { center, radius } => {
                let rel = (point - center) / *radius;
                let az = rel.y.atan2(rel.x);
                let el = rel.z.clamp(-T::one(), T::one()).acos();
                // scale angles to roughly match the planar texel density
                (az * *radius, el * *radius)
            }
        }
    }

    /// Render one frame: per-channel image, exact depth map and hit mask.
    ///
    /// Rays that miss all geometry are flagged in the mask and given a
    /// positive sentinel depth of 1 so downstream code never sees a
    /// non-positive value.
    pub fn render(&self, frame: usize) -> Result<RenderedFrame<T>> {
        if frame >= self.path.len() {
            return Err(GeomError::InvalidArgument(format!(
                "frame {frame} out of range ({} frames)",
                self.path.len()
            )));
        }
        let cam = &self.path[frame];
        let origin = cam.translation;
        let mut channels =
            vec![ScalarGrid::zeros(self.width, self.height); self.channels];
        let mut depth = ScalarGrid::filled(self.width, self.height, T::one());
        let mut hit_mask = Mask::filled(self.width, self.height, false);
        for y in 0..self.height {
            for x in 0..self.width {
                let ray_cam = self
                    .intrinsics
                    .ray(PixelCoord::new(T::of(x as f64), T::of(y as f64)));
                let dir = cam.rotation * ray_cam;
                match self.raycast(origin, dir) {
                    Some(hit) => {
                        hit_mask.set(x, y, true);
                        *depth.at_mut(x, y) = hit.depth;
                        let (a, b) = self.texture_coords(hit.surface, hit.point);
                        for (c, img) in channels.iter_mut().enumerate() {
                            *img.at_mut(x, y) = self.texture.eval(c, a, b);
                        }
                    }
                    None => {
                        // NoIntersection: pixel marked invalid
                    }
                }
            }
        }
        Ok(RenderedFrame {
            channels,
            depth,
            hit_mask,
        })
    }

    /// Exact correspondences between two frames, confirmed visible in every
    /// frame listed in `confirm`. Optional Gaussian pixel noise is applied to
    /// both endpoints. Fails with [`GeomError::InsufficientVisibility`] when
    /// fewer than `count` co-visible samples are found in `10 * count` draws.
    pub fn generate_matches(
        &self,
        frame_a: usize,
        frame_b: usize,
        confirm: &[usize],
        count: usize,
        seed: u64,
        noise_sigma: f64,
    ) -> Result<Vec<(PixelCoord<T>, PixelCoord<T>)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
        let cam_a = &self.path[frame_a];
        let mut out = Vec::with_capacity(count);
        let margin = 1.0;
        for _ in 0..10 * count {
            if out.len() == count {
                break;
            }
            let px = rng.gen_range(margin..self.width as f64 - 1.0 - margin);
            let py = rng.gen_range(margin..self.height as f64 - 1.0 - margin);
            let ray_cam = self.intrinsics.ray(PixelCoord::new(T::of(px), T::of(py)));
            let dir = cam_a.rotation * ray_cam;
            let Some(hit) = self.raycast(cam_a.translation, dir) else {
                continue;
            };
            let mut frames: Vec<usize> = vec![frame_b];
            frames.extend(confirm.iter().copied().filter(|&f| f != frame_a && f != frame_b));
            if !frames
                .iter()
                .all(|&f| self.point_visible(f, hit.point))
            {
                continue;
            }
            let pb = self.project_point(frame_b, hit.point)?;
            let mut pa = PixelCoord::new(T::of(px), T::of(py));
            let mut pb = pb;
            if noise_sigma > 0.0 {
                pa.u += T::of(normal.sample(&mut rng));
                pa.v += T::of(normal.sample(&mut rng));
                pb.u += T::of(normal.sample(&mut rng));
                pb.v += T::of(normal.sample(&mut rng));
            }
            out.push((pa, pb));
        }
        if out.len() < count {
            return Err(GeomError::InsufficientVisibility {
                requested: count,
                found: out.len(),
            });
        }
        Ok(out)
    }

    /// Project a world point into a frame (exact).
    pub fn project_point(&self, frame: usize, point: Vector3<T>) -> Result<PixelCoord<T>> {
        let cam = invert(&self.path[frame]);
        crate::camera::project(cam.apply(point), &self.intrinsics)
    }

    /// A world point is visible in a frame when it projects inside the image
    /// with positive depth and is not occluded by other geometry.
    fn point_visible(&self, frame: usize, point: Vector3<T>) -> bool {
        let cam_inv = invert(&self.path[frame]);
        let local = cam_inv.apply(point);
        if local.z < T::of(0.1) {
            return false;
        }
        let Ok(p) = crate::camera::project(local, &self.intrinsics) else {
            return false;
        };
        let m = T::of(0.5);
        if p.u < m
            || p.u > T::of(self.width as f64 - 1.0) - m
            || p.v < m
            || p.v > T::of(self.height as f64 - 1.0) - m
        {
            return false;
        }
        // occlusion: the first hit along the ray must be this point
        let origin = self.path[frame].translation;
        let dir = point - origin;
        match self.raycast(origin, dir) {
            Some(hit) => (hit.depth - T::one()).abs() < T::of(1e-6),
            None => false,
        }
    }
}

/// Rendered output of one frame.
pub struct RenderedFrame<T> {
    pub channels: Vec<ScalarGrid<T>>,
    pub depth: ScalarGrid<T>,
    pub hit_mask: Mask,
}

/// Default 3-frame snippet path: the center frame at the origin, neighbors
/// displaced on both sides by forward-dominant translations and the small
/// per-frame rotations typical of driving sequences.
pub fn default_snippet_path<T: Scalar>() -> Vec<Pose<T>> {
    let back = crate::pose::params_to_pose(&crate::pose::PoseParams::new(
        Vector3::new(T::of(0.0008), T::of(-0.001), T::of(0.004)),
        Vector3::new(T::of(-0.09), T::of(-0.04), T::of(-0.36)),
    ));
    let fwd = crate::pose::params_to_pose(&crate::pose::PoseParams::new(
        Vector3::new(T::of(-0.0009), T::of(0.0011), T::of(-0.0035)),
        Vector3::new(T::of(0.10), T::of(0.05), T::of(0.37)),
    ));
    vec![back, Pose::identity(), fwd]
}

/// Camera-to-world poses along a circle in the ground plane, heading along
/// the tangent. Useful as a ground-truth trajectory for chaining tests.
pub fn circular_trajectory<T: Scalar>(frames: usize, radius: T, step_angle: T) -> Vec<Pose<T>> {
    (0..frames)
        .map(|i| {
            let a = step_angle * T::of(i as f64);
            // position on the circle, heading tangent (rotation about +y)
            let pos = Vector3::new(
                radius * (T::one() - a.cos()),
                T::zero(),
                radius * a.sin(),
            );
            let rot = crate::pose::so3_exp(Vector3::new(T::zero(), a, T::zero()));
            Pose::new(rot, pos)
        })
        .collect()
}
