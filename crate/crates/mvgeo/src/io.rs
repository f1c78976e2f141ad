//! File formats: PFM (32-bit float, authoritative), PGM (8-bit preview),
//! KITTI odometry pose files and plain-text match files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::camera::PixelCoord;
use crate::error::{GeomError, Result};
use crate::grid::ScalarGrid;
use crate::num::Scalar;
use crate::pose::Pose;

/// Write a grid as a binary grayscale PFM (negative scale, little endian).
/// PFM stores rows bottom-to-top.
pub fn write_pfm<T: Scalar>(path: &Path, grid: &ScalarGrid<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    for y in (0..grid.height()).rev() {
        for x in 0..grid.width() {
            out.write_all(&(grid.at(x, y).to_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a binary grayscale PFM; handles both endiannesses via the scale
/// line's sign.
pub fn read_pfm<T: Scalar>(path: &Path) -> Result<ScalarGrid<T>> {
    let mut file = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    // three whitespace-terminated tokens: magic, "w h", scale
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        let mut byte = [0u8; 1];
        file.read_exact(&mut byte)?;
        if byte[0].is_ascii_whitespace() {
            if !header.is_empty() {
                tokens.push(String::from_utf8_lossy(&header).to_string());
                header.clear();
            }
        } else {
            header.push(byte[0]);
        }
    }
    if tokens[0] != "Pf" {
        return Err(GeomError::MalformedLine {
            line: 1,
            reason: format!("expected grayscale PFM magic `Pf`, got `{}`", tokens[0]),
        });
    }
    let parse = |s: &str, what: &str| -> Result<f64> {
        s.parse().map_err(|_| GeomError::MalformedLine {
            line: 1,
            reason: format!("bad {what}: `{s}`"),
        })
    };
    let width = parse(&tokens[1], "width")? as usize;
    let height = parse(&tokens[2], "height")? as usize;
    let scale = parse(&tokens[3], "scale")?;
    if width == 0 || height == 0 {
        return Err(GeomError::MalformedLine {
            line: 1,
            reason: "zero dimension".into(),
        });
    }
    let mut bytes = vec![0u8; width * height * 4];
    file.read_exact(&mut bytes)?;
    let little = scale < 0.0;
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(height);
    for row in 0..height {
        let mut r = Vec::with_capacity(width);
        for col in 0..width {
            let i = (row * width + col) * 4;
            let raw = [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
            r.push(if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            });
        }
        rows.push(r);
    }
    // bottom-to-top storage
    let data: Vec<T> = (0..height)
        .rev()
        .flat_map(|r| rows[r].iter().map(|&v| T::of(v as f64)).collect::<Vec<_>>())
        .collect();
    ScalarGrid::from_vec(width, height, data)
}

/// Write an 8-bit binary PGM preview; values are clamped to [0, 1] and
/// scaled to 255.
pub fn write_pgm<T: Scalar>(path: &Path, grid: &ScalarGrid<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", grid.width(), grid.height())?;
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let v = grid.at(x, y).to_f64().clamp(0.0, 1.0);
            out.write_all(&[(v * 255.0).round() as u8])?;
        }
    }
    Ok(())
}

/// Write camera-to-world poses in the KITTI odometry format: one line per
/// frame, twelve space-separated reals, the row-major 3x4 `[R | t]`.
pub fn write_kitti_poses<T: Scalar>(path: &Path, poses: &[Pose<T>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for pose in poses {
        let r = pose.rotation;
        let t = pose.translation;
        let row: [T; 12] = [
            r.m11, r.m12, r.m13, t.x, r.m21, r.m22, r.m23, t.y, r.m31, r.m32, r.m33, t.z,
        ];
        let line: Vec<String> = row.iter().map(|v| format!("{:.9e}", v.to_f64())).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Read a KITTI odometry pose file.
pub fn read_kitti_poses<T: Scalar>(path: &Path) -> Result<Vec<Pose<T>>> {
    let file = BufReader::new(File::open(path)?);
    let mut poses = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        poses.push(parse_kitti_line(&line, idx + 1)?);
    }
    if poses.is_empty() {
        return Err(GeomError::MalformedLine {
            line: 0,
            reason: "pose file contains no poses".into(),
        });
    }
    Ok(poses)
}

/// Parse one 12-real KITTI pose line (1-based line number for diagnostics).
pub fn parse_kitti_line<T: Scalar>(line: &str, line_no: usize) -> Result<Pose<T>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| GeomError::MalformedLine {
                line: line_no,
                reason: format!("not a number: `{tok}`"),
            })
        })
        .collect::<Result<_>>()?;
    if vals.len() != 12 {
        return Err(GeomError::MalformedLine {
            line: line_no,
            reason: format!("expected 12 values, got {}", vals.len()),
        });
    }
    let v: Vec<T> = vals.into_iter().map(T::of).collect();
    Ok(Pose::new(
        Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
        Vector3::new(v[3], v[7], v[11]),
    ))
}

/// A match file record: the frame pair and pixel correspondences.
#[derive(Debug, Clone)]
pub struct MatchFileRecord<T> {
    pub frame_a: usize,
    pub frame_b: usize,
    pub pairs: Vec<(PixelCoord<T>, PixelCoord<T>)>,
}

/// Write matches as plain text: a `# frames A B` header, then one
/// `u v u' v'` quadruple per line.
pub fn write_matches<T: Scalar>(path: &Path, record: &MatchFileRecord<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# frames {} {}", record.frame_a, record.frame_b)?;
    for (p, q) in &record.pairs {
        writeln!(
            out,
            "{:.9e} {:.9e} {:.9e} {:.9e}",
            p.u.to_f64(),
            p.v.to_f64(),
            q.u.to_f64(),
            q.v.to_f64()
        )?;
    }
    Ok(())
}

/// Read a match file written by [`write_matches`].
pub fn read_matches<T: Scalar>(path: &Path) -> Result<MatchFileRecord<T>> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines().enumerate();
    let (_, header) = lines.next().ok_or(GeomError::MalformedLine {
        line: 1,
        reason: "empty match file".into(),
    })?;
    let header = header?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "#" || toks[1] != "frames" {
        return Err(GeomError::MalformedLine {
            line: 1,
            reason: format!("expected `# frames A B` header, got `{header}`"),
        });
    }
    let parse_id = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| GeomError::MalformedLine {
            line: 1,
            reason: format!("bad frame id `{s}`"),
        })
    };
    let mut record = MatchFileRecord {
        frame_a: parse_id(toks[1 + 1])?,
        frame_b: parse_id(toks[3])?,
        pairs: Vec::new(),
    };
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| GeomError::MalformedLine {
                    line: idx + 1,
                    reason: format!("not a number: `{tok}`"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(GeomError::MalformedLine {
                line: idx + 1,
                reason: format!("expected 4 values, got {}", vals.len()),
            });
        }
        record.pairs.push((
            PixelCoord::new(T::of(vals[0]), T::of(vals[1])),
            PixelCoord::new(T::of(vals[2]), T::of(vals[3])),
        ));
    }
    Ok(record)
}

/// Simple text form of pinhole intrinsics plus image size.
pub fn write_intrinsics<T: Scalar>(
    path: &Path,
    k: &crate::camera::Intrinsics<T>,
    width: usize,
    height: usize,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "{:.9e} {:.9e} {:.9e} {:.9e} {} {}",
        k.fx.to_f64(),
        k.fy.to_f64(),
        k.cx.to_f64(),
        k.cy.to_f64(),
        width,
        height
    )?;
    Ok(())
}

pub fn read_intrinsics<T: Scalar>(
    path: &Path,
) -> Result<(crate::camera::Intrinsics<T>, usize, usize)> {
    let content = std::fs::read_to_string(path)?;
    let vals: Vec<f64> = content
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| GeomError::MalformedLine {
                line: 1,
                reason: format!("not a number: `{tok}`"),
            })
        })
        .collect::<Result<_>>()?;
    if vals.len() != 6 {
        return Err(GeomError::MalformedLine {
            line: 1,
            reason: format!("expected 6 values, got {}", vals.len()),
        });
    }
    Ok((
        crate::camera::Intrinsics::new(
            T::of(vals[0]),
            T::of(vals[1]),
            T::of(vals[2]),
            T::of(vals[3]),
        )?,
        vals[4] as usize,
        vals[5] as usize,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{params_to_pose, PoseParams};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn pfm_round_trip_is_f32_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("grid.pfm");
        let grid: ScalarGrid<f64> =
            ScalarGrid::from_fn(13, 7, |x, y| (x as f64 * 0.37 + y as f64 * 1.91).sin());
        write_pfm(&path, &grid).unwrap();
        let back: ScalarGrid<f64> = read_pfm(&path).unwrap();
        assert_eq!(back.width(), 13);
        assert_eq!(back.height(), 7);
        for (a, b) in grid.values().iter().zip(back.values()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn pgm_has_correct_header_and_size() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let grid: ScalarGrid<f64> = ScalarGrid::from_fn(5, 4, |x, _| x as f64 / 4.0);
        write_pgm(&path, &grid).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n5 4\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 20);
        assert_eq!(bytes[header.len()], 0);
        assert_eq!(bytes[header.len() + 4], 255);
    }

    #[test]
    fn identity_kitti_line_parses_to_identity() {
        let pose: Pose<f64> = parse_kitti_line("1 0 0 0 0 1 0 0 0 0 1 0", 1).unwrap();
        assert!((pose.rotation - Matrix3::identity()).norm() < 1e-15);
        assert!(pose.translation.norm() < 1e-15);
    }

    #[test]
    fn eleven_token_line_is_malformed() {
        assert!(matches!(
            parse_kitti_line::<f64>("1 0 0 0 0 1 0 0 0 0 1", 3),
            Err(GeomError::MalformedLine { line: 3, .. })
        ));
    }

    #[test]
    fn kitti_pose_file_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let poses: Vec<Pose<f64>> = (0..100)
            .map(|_| {
                params_to_pose(&PoseParams::new(
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ),
                    Vector3::new(
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                        rng.gen_range(-5.0..5.0),
                    ),
                ))
            })
            .collect();
        write_kitti_poses(&path, &poses).unwrap();
        let back: Vec<Pose<f64>> = read_kitti_poses(&path).unwrap();
        assert_eq!(back.len(), poses.len());
        let mut worst = 0.0f64;
        for (a, b) in poses.iter().zip(&back) {
            worst = worst
                .max((a.rotation - b.rotation).norm())
                .max((a.translation - b.translation).norm());
        }
        assert!(worst < 1e-8, "worst deviation {worst}");

        // write-read-write is byte stable at 9 significant digits
        let rewritten = dir.path().join("poses2.txt");
        write_kitti_poses(&rewritten, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&rewritten).unwrap()
        );
    }

    #[test]
    fn match_file_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("matches.txt");
        let record = MatchFileRecord::<f64> {
            frame_a: 1,
            frame_b: 0,
            pairs: vec![
                (PixelCoord::new(1.25, 2.5), PixelCoord::new(3.125, 4.75)),
                (PixelCoord::new(10.0, 20.0), PixelCoord::new(30.0, 40.5)),
            ],
        };
        write_matches(&path, &record).unwrap();
        let back: MatchFileRecord<f64> = read_matches(&path).unwrap();
        assert_eq!(back.frame_a, 1);
        assert_eq!(back.frame_b, 0);
        assert_eq!(back.pairs.len(), 2);
        for ((p, q), (bp, bq)) in record.pairs.iter().zip(&back.pairs) {
            assert!((p.u - bp.u).abs() < 1e-9);
            assert!((q.v - bq.v).abs() < 1e-9);
        }
    }

    #[test]
    fn malformed_match_lines_are_reported_with_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "# frames 0 1\n1.0 2.0 3.0\n").unwrap();
        assert!(matches!(
            read_matches::<f64>(&path),
            Err(GeomError::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn intrinsics_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("intrinsics.txt");
        let k = crate::camera::Intrinsics::new(60.8, 60.8, 31.5, 31.5).unwrap();
        write_intrinsics(&path, &k, 64, 64).unwrap();
        let (back, w, h) = read_intrinsics::<f64>(&path).unwrap();
        assert_eq!((w, h), (64, 64));
        assert!((back.fx - k.fx).abs() < 1e-9);
        assert!((back.cy - k.cy).abs() < 1e-9);
    }
}
