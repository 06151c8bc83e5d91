//! Binary depth maps (DPTH), binary feature clouds (FPCL), key=value
//! intrinsics, and whitespace-separated pose text.
//!
//! Binary formats are little-endian. Pose text writes f64 with Rust's
//! shortest round-trip formatting, so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::correspondence::FeaturePointcloud;
use crate::geometry::{CameraIntrinsics, DepthMap, RigidTransform};
use crate::synchronization::PoseGraph;

pub const DEPTH_MAGIC: &[u8; 4] = b"DPTH";
pub const CLOUD_MAGIC: &[u8; 4] = b"FPCL";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid content: {0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

fn read_magic(r: &mut impl Read, expected: &[u8; 4]) -> Result<(), FormatError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != expected {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(&found).into_owned(),
        });
    }
    Ok(())
}

pub fn write_depth_map(mut w: impl Write, depth: &DepthMap) -> Result<(), FormatError> {
    w.write_all(DEPTH_MAGIC)?;
    w.write_u32::<LittleEndian>(depth.width() as u32)?;
    w.write_u32::<LittleEndian>(depth.height() as u32)?;
    for &v in depth.values() {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn read_depth_map(mut r: impl Read) -> Result<DepthMap, FormatError> {
    read_magic(&mut r, DEPTH_MAGIC)?;
    let width = r.read_u32::<LittleEndian>()? as usize;
    let height = r.read_u32::<LittleEndian>()? as usize;
    let mut values = vec![0f32; width * height];
    r.read_f32_into::<LittleEndian>(&mut values)?;
    DepthMap::new(width, height, values).map_err(|e| FormatError::Invalid(e.to_string()))
}

/// Per point: xyz (f32 x3), pixel uv (f32 x2), descriptor (f32 x dim).
pub fn write_feature_cloud(
    mut w: impl Write,
    cloud: &FeaturePointcloud,
) -> Result<(), FormatError> {
    w.write_all(CLOUD_MAGIC)?;
    w.write_u32::<LittleEndian>(cloud.len() as u32)?;
    w.write_u32::<LittleEndian>(cloud.dim() as u32)?;
    for k in 0..cloud.len() {
        let p = cloud.points()[k];
        let px = cloud.pixels()[k];
        for v in [p.x, p.y, p.z, px.x, px.y] {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        for &d in cloud.descriptor(k) {
            w.write_f32::<LittleEndian>(d as f32)?;
        }
    }
    Ok(())
}

/// Descriptors are renormalized after the f32 round trip.
pub fn read_feature_cloud(mut r: impl Read) -> Result<FeaturePointcloud, FormatError> {
    read_magic(&mut r, CLOUD_MAGIC)?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let mut points = Vec::with_capacity(count);
    let mut pixels = Vec::with_capacity(count);
    let mut descriptors = Vec::with_capacity(count * dim);
    let mut head = [0f32; 5];
    let mut desc = vec![0f32; dim];
    for _ in 0..count {
        r.read_f32_into::<LittleEndian>(&mut head)?;
        points.push(Vector3::new(head[0] as f64, head[1] as f64, head[2] as f64));
        pixels.push(Vector2::new(head[3] as f64, head[4] as f64));
        r.read_f32_into::<LittleEndian>(&mut desc)?;
        descriptors.extend(desc.iter().map(|&d| d as f64));
    }
    FeaturePointcloud::new_normalized(points, pixels, descriptors, dim)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn format_intrinsics(k: &CameraIntrinsics) -> String {
    format!(
        "fx={}\nfy={}\ncx={}\ncy={}\nwidth={}\nheight={}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    )
}

pub fn parse_intrinsics(text: &str) -> Result<CameraIntrinsics, FormatError> {
    let mut fields: [Option<f64>; 6] = [None; 6];
    const KEYS: [&str; 6] = ["fx", "fy", "cx", "cy", "width", "height"];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(n + 1, format!("expected key=value, got '{line}'")))?;
        let slot = KEYS
            .iter()
            .position(|k| *k == key.trim())
            .ok_or_else(|| parse_err(n + 1, format!("unknown key '{}'", key.trim())))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(n + 1, format!("bad number '{}'", value.trim())))?;
        fields[slot] = Some(v);
    }
    let get = |k: usize| {
        fields[k].ok_or_else(|| FormatError::Invalid(format!("missing key '{}'", KEYS[k])))
    };
    let dim = |k: usize| -> Result<usize, FormatError> {
        let v = get(k)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(FormatError::Invalid(format!(
                "{} must be a non-negative integer",
                KEYS[k]
            )));
        }
        Ok(v as usize)
    };
    CameraIntrinsics::new(get(0)?, get(1)?, get(2)?, get(3)?, dim(4)?, dim(5)?)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

fn push_transform(out: &mut String, t: &RigidTransform) {
    let r = t.rotation();
    for row in 0..3 {
        for col in 0..3 {
            write!(out, " {}", r[(row, col)]).unwrap();
        }
    }
    let tr = t.translation();
    write!(out, " {} {} {}", tr.x, tr.y, tr.z).unwrap();
}

fn parse_transform(fields: &[&str], line: usize) -> Result<RigidTransform, FormatError> {
    if fields.len() != 12 {
        return Err(parse_err(
            line,
            format!("expected 12 transform values, got {}", fields.len()),
        ));
    }
    let mut v = [0f64; 12];
    for (slot, f) in v.iter_mut().zip(fields) {
        *slot = f
            .parse()
            .map_err(|_| parse_err(line, format!("bad number '{f}'")))?;
    }
    let r = Matrix3::from_row_slice(&v[..9]);
    RigidTransform::new(r, Vector3::new(v[9], v[10], v[11]))
        .map_err(|e| parse_err(line, e.to_string()))
}

fn parse_index(s: &str, line: usize) -> Result<usize, FormatError> {
    s.parse()
        .map_err(|_| parse_err(line, format!("bad index '{s}'")))
}

/// `N <count>`, then one `E i j c r00 .. r22 tx ty tz` line per stored edge.
pub fn format_pose_graph(graph: &PoseGraph) -> String {
    let mut out = format!("N {}\n", graph.n_frames());
    for ((i, j), e) in graph.edges() {
        write!(out, "E {i} {j} {}", e.confidence).unwrap();
        push_transform(&mut out, &e.transform);
        out.push('\n');
    }
    out
}

pub fn parse_pose_graph(text: &str) -> Result<PoseGraph, FormatError> {
    let mut graph: Option<PoseGraph> = None;
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            None | Some("#") => {}
            Some("N") if fields.len() == 2 => {
                graph = Some(PoseGraph::new(parse_index(fields[1], n + 1)?))
            }
            Some("E") if fields.len() == 16 => {
                let g = graph
                    .as_mut()
                    .ok_or_else(|| parse_err(n + 1, "edge before 'N' header"))?;
                let i = parse_index(fields[1], n + 1)?;
                let j = parse_index(fields[2], n + 1)?;
                let c: f64 = fields[3]
                    .parse()
                    .map_err(|_| parse_err(n + 1, "bad confidence"))?;
                let t = parse_transform(&fields[4..], n + 1)?;
                g.add_edge(i, j, t, c)
                    .map_err(|e| parse_err(n + 1, e.to_string()))?;
            }
            Some(_) => return Err(parse_err(n + 1, format!("unrecognized line '{line}'"))),
        }
    }
    graph.ok_or_else(|| FormatError::Invalid("missing 'N' header".into()))
}

/// `N <count>`, then `P i r00 .. r22 tx ty tz` per world-to-camera pose.
pub fn format_poses(poses: &[RigidTransform]) -> String {
    let mut out = format!("N {}\n", poses.len());
    for (i, p) in poses.iter().enumerate() {
        write!(out, "P {i}").unwrap();
        push_transform(&mut out, p);
        out.push('\n');
    }
    out
}

pub fn parse_poses(text: &str) -> Result<Vec<RigidTransform>, FormatError> {
    let mut expected: Option<usize> = None;
    let mut poses: Vec<Option<RigidTransform>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            None | Some("#") => {}
            Some("N") if fields.len() == 2 => expected = Some(parse_index(fields[1], n + 1)?),
            Some("P") if fields.len() == 14 => {
                let i = parse_index(fields[1], n + 1)?;
                if poses.len() <= i {
                    poses.resize(i + 1, None);
                }
                if poses[i].is_some() {
                    return Err(parse_err(n + 1, format!("pose {i} given twice")));
                }
                poses[i] = Some(parse_transform(&fields[2..], n + 1)?);
            }
            Some(_) => return Err(parse_err(n + 1, format!("unrecognized line '{line}'"))),
        }
    }
    if let Some(count) = expected {
        if count != poses.len() {
            return Err(FormatError::Invalid(format!(
                "header says {count} poses, found {}",
                poses.len()
            )));
        }
    }
    poses
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| FormatError::Invalid(format!("pose {i} missing"))))
        .collect()
}

pub fn save_depth_map(path: &Path, depth: &DepthMap) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_depth_map(&mut w, depth)?;
    w.flush()?;
    Ok(())
}

pub fn load_depth_map(path: &Path) -> Result<DepthMap, FormatError> {
    read_depth_map(BufReader::new(File::open(path)?))
}

pub fn save_feature_cloud(path: &Path, cloud: &FeaturePointcloud) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_feature_cloud(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn load_feature_cloud(path: &Path) -> Result<FeaturePointcloud, FormatError> {
    read_feature_cloud(BufReader::new(File::open(path)?))
}

pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics, FormatError> {
    parse_intrinsics(&std::fs::read_to_string(path)?)
}

pub fn load_poses(path: &Path) -> Result<Vec<RigidTransform>, FormatError> {
    parse_poses(&std::fs::read_to_string(path)?)
}

pub fn load_pose_graph(path: &Path) -> Result<PoseGraph, FormatError> {
    parse_pose_graph(&std::fs::read_to_string(path)?)
}
