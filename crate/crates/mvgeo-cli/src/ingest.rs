//! Snippet directory ingestion.
//!
//! Expected layout (written by `mvgeo synth`): `intrinsics.txt`,
//! `frame_{00..02}_c{N}.pfm` image channels, `depth_{00..02}.pfm` depth
//! maps, `poses.txt`, and optional `matches_1_0.txt` / `matches_1_2.txt`.
//!
//! Poses come either as KITTI camera-to-world lines (one per frame; the
//! relative center-to-neighbor transforms are derived) or as two Euler
//! lines `roll pitch yaw tx ty tz` giving the relative transforms directly.

use std::path::Path;

use anyhow::{bail, Context};

use mvgeo::io as geo_io;
use mvgeo::{
    compose, invert, pose_to_params, MaskPhase, MatchSet, Pose, PoseParamsF64, Real,
    ScalarGridF64, SnippetInput,
};
use nalgebra::Vector3;

/// Read the relative poses from a two-line Euler file.
fn euler_relative_poses(path: &Path) -> anyhow::Result<[PoseParamsF64; 2]> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("euler pose line {}", i + 1))?;
        if vals.len() != 6 {
            bail!("euler pose line {}: expected 6 values, got {}", i + 1, vals.len());
        }
        let pose = Pose::from_euler(
            vals[0],
            vals[1],
            vals[2],
            Vector3::new(vals[3], vals[4], vals[5]),
        );
        out.push(pose_to_params(&pose)?);
    }
    if out.len() != 2 {
        bail!("euler pose file must hold exactly 2 poses, found {}", out.len());
    }
    Ok([out[0], out[1]])
}

fn load_channels(dir: &Path, frame: usize) -> anyhow::Result<Vec<ScalarGridF64>> {
    let mut channels = Vec::new();
    for c in 0.. {
        let path = dir.join(format!("frame_{frame:02}_c{c}.pfm"));
        if !path.exists() {
            break;
        }
        channels.push(geo_io::read_pfm(&path)?);
    }
    if channels.is_empty() {
        bail!(
            "no image channels found for frame {frame} in {}",
            dir.display()
        );
    }
    Ok(channels)
}

fn load_matches(dir: &Path, name: &str) -> anyhow::Result<MatchSet<Real>> {
    let path = dir.join(name);
    if !path.exists() {
        bail!(
            "match file {} is missing; generate the snippet with matches or \
             set the sparse weights to zero",
            path.display()
        );
    }
    let record = geo_io::read_matches::<Real>(&path)?;
    Ok(MatchSet::new(record.pairs))
}

/// Load a 3-frame snippet directory into an evaluation input.
pub fn load_snippet(dir: &Path, pose_format: &str) -> anyhow::Result<SnippetInput<Real>> {
    let (intrinsics, width, height) = geo_io::read_intrinsics::<Real>(&dir.join("intrinsics.txt"))
        .with_context(|| format!("reading {}/intrinsics.txt", dir.display()))?;

    let frames = [
        load_channels(dir, 0)?,
        load_channels(dir, 1)?,
        load_channels(dir, 2)?,
    ];
    let depths = [
        geo_io::read_pfm(&dir.join("depth_00.pfm"))?,
        geo_io::read_pfm(&dir.join("depth_01.pfm"))?,
        geo_io::read_pfm(&dir.join("depth_02.pfm"))?,
    ];
    for d in &depths {
        if d.width() != width || d.height() != height {
            bail!(
                "depth dimensions {}x{} do not match intrinsics file ({}x{})",
                d.width(),
                d.height(),
                width,
                height
            );
        }
    }

    let (pose_to_backward, pose_to_forward) = match pose_format {
        "kitti" => {
            let poses = geo_io::read_kitti_poses::<Real>(&dir.join("poses.txt"))?;
            if poses.len() != 3 {
                bail!("poses.txt must hold 3 camera-to-world poses, found {}", poses.len());
            }
            // relative transform from the center frame into each neighbor
            let to_backward = compose(&invert(&poses[0]), &poses[1]);
            let to_forward = compose(&invert(&poses[2]), &poses[1]);
            (pose_to_params(&to_backward)?, pose_to_params(&to_forward)?)
        }
        "euler" => {
            let [b, f] = euler_relative_poses(&dir.join("poses.txt"))?;
            (b, f)
        }
        other => bail!("unknown pose format `{other}` (expected kitti or euler)"),
    };

    let matches_backward = load_matches(dir, "matches_1_0.txt")?;
    let matches_forward = load_matches(dir, "matches_1_2.txt")?;
    matches_backward
        .validate_in_bounds(width, height)
        .context("matches_1_0.txt")?;
    matches_forward
        .validate_in_bounds(width, height)
        .context("matches_1_2.txt")?;

    Ok(SnippetInput {
        frames,
        depths,
        pose_to_backward,
        pose_to_forward,
        matches_backward,
        matches_forward,
        intrinsics,
        mask_phase: MaskPhase::Warmup,
    })
}
