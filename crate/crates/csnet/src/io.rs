//! Point-cloud file formats and atomic file writing.
//!
//! - XYZL text: four whitespace-separated numbers per line (x y z label);
//!   plain XYZ with three numbers is accepted on read.
//! - PCSM binary: magic "PCSM", version u32 LE, n u32 LE, then n records
//!   of (x, y, z, label) f32 LE for the input cloud, then n * (x, y, z)
//!   f32 LE for the ground-truth complete cloud.

use crate::error::{CsError, Result};
use crate::geom::PointCloud;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const PCSM_MAGIC: &[u8; 4] = b"PCSM";
pub const PCSM_VERSION: u32 = 1;

/// Write via a temp file in the same directory, then rename. Output files
/// are either fully written or absent.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".to_string())
    ));
    let write = || -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    };
    write().inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// One dataset record: input (with labels) and ground-truth complete cloud.
pub fn write_pcsm(path: &Path, input: &PointCloud, gt_complete: &PointCloud) -> Result<()> {
    let labels = input
        .labels
        .as_ref()
        .ok_or_else(|| CsError::invalid("write_pcsm: input cloud has no labels"))?;
    if input.len() != gt_complete.len() {
        return Err(CsError::invalid(format!(
            "write_pcsm: input size {} != gt size {}",
            input.len(),
            gt_complete.len()
        )));
    }
    let n = input.len();
    let mut buf = Vec::with_capacity(8 + 4 + n * 28);
    buf.extend_from_slice(PCSM_MAGIC);
    buf.extend_from_slice(&PCSM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    for (p, &l) in input.points.iter().zip(labels) {
        for &v in p {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        buf.extend_from_slice(&(l as f32).to_le_bytes());
    }
    for p in &gt_complete.points {
        for &v in p {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    atomic_write(path, &buf)
}

pub fn read_pcsm(path: &Path) -> Result<(PointCloud, PointCloud)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |msg: &str| CsError::Parse {
        line: 0,
        message: format!("{}: {}", path.display(), msg),
    };
    if bytes.len() < 12 || &bytes[..4] != PCSM_MAGIC {
        return Err(fail("not a PCSM file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PCSM_VERSION {
        return Err(fail(&format!("unsupported PCSM version {}", version)));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + n * 16 + n * 12;
    if bytes.len() != expected {
        return Err(fail(&format!(
            "size {} does not match n={} (expected {})",
            bytes.len(),
            n,
            expected
        )));
    }
    let f32_at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let off = 12 + i * 16;
        points.push([f32_at(off), f32_at(off + 4), f32_at(off + 8)]);
        labels.push(f32_at(off + 12));
    }
    let mut gt = Vec::with_capacity(n);
    for i in 0..n {
        let off = 12 + n * 16 + i * 12;
        gt.push([f32_at(off), f32_at(off + 4), f32_at(off + 8)]);
    }
    Ok((
        PointCloud::with_labels(points, labels)?,
        PointCloud::new(gt),
    ))
}

/// Plain-text export: "x y z label" per line (label column only when the
/// cloud carries labels).
pub fn write_xyz_text(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::new();
    for (i, p) in cloud.points.iter().enumerate() {
        out.push_str(&format!("{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32));
        if let Some(labels) = &cloud.labels {
            out.push_str(&format!(" {}", labels[i] as f32));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Parse XYZ or XYZL text; errors carry the 1-based offending line number.
pub fn read_xyz_text(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut any_label = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(CsError::Parse {
                line: lineno + 1,
                message: format!("expected 3 or 4 numbers, got {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 4];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f.parse::<f64>().map_err(|_| CsError::Parse {
                line: lineno + 1,
                message: format!("invalid number '{}'", f),
            })?;
        }
        points.push([vals[0], vals[1], vals[2]]);
        if fields.len() == 4 {
            any_label = true;
            labels.push(vals[3]);
        } else {
            labels.push(0.0);
        }
    }
    if any_label {
        PointCloud::with_labels(points, labels)
    } else {
        Ok(PointCloud::new(points))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcsm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pcsm");
        let input = PointCloud::with_labels(
            vec![[0.125, -1.5, 3.25], [0.5, 0.5, 0.5]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let gt = PointCloud::new(vec![[1.0, 2.0, 3.0], [-0.25, 0.75, 0.0]]);
        write_pcsm(&path, &input, &gt).unwrap();
        let (ri, rg) = read_pcsm(&path).unwrap();
        // all values chosen exactly representable in f32
        assert_eq!(ri, input);
        assert_eq!(rg, gt);
    }

    #[test]
    fn pcsm_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pcsm");
        std::fs::write(&path, b"not a pcsm file").unwrap();
        assert!(read_pcsm(&path).is_err());
    }

    #[test]
    fn xyz_text_roundtrip_within_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyzl");
        let cloud = PointCloud::with_labels(
            vec![[0.1, 0.2, 0.3], [7.0, -2.0, 0.0]],
            vec![0.5, 1.0],
        )
        .unwrap();
        write_xyz_text(&path, &cloud).unwrap();
        let back = read_xyz_text(&path).unwrap();
        for (p, q) in back.points.iter().zip(&cloud.points) {
            for a in 0..3 {
                assert!((p[a] - q[a]).abs() <= f32::EPSILON as f64 * q[a].abs().max(1.0));
            }
        }
        assert!(back.labels.is_some());
    }

    #[test]
    fn xyz_text_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.xyz");
        let mut content = String::new();
        for _ in 0..16 {
            content.push_str("0 0 0\n");
        }
        content.push_str("0 zero 0\n"); // line 17
        std::fs::write(&path, content).unwrap();
        let err = read_xyz_text(&path).unwrap_err();
        assert!(err.to_string().contains("line 17"), "{}", err);
    }
}
