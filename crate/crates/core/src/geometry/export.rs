//! Point-cloud and voxel file formats.
//!
//! * OBJ: one `v x y z` line per point, nothing else.
//! * Raw points: little-endian `f32` triples, no header.
//! * Voxels: magic `GFV1`, `u32` resolution, six `f64` bounds (min then
//!   max), then alternating `u32` run lengths over the cells in index order,
//!   starting with an empty run (which may be zero).

use std::fmt::Write as _;

use super::sample::PointCloud;
use super::voxel::{Aabb, VoxelGrid};
use super::GeometryError;

pub const VOXEL_MAGIC: &[u8; 4] = b"GFV1";

pub fn point_cloud_to_obj(pc: &PointCloud) -> String {
    let mut s = String::with_capacity(pc.len() * 32);
    for p in &pc.points {
        writeln!(s, "v {} {} {}", p[0], p[1], p[2]).expect("write to string");
    }
    s
}

pub fn point_cloud_from_obj(s: &str) -> Result<PointCloud, GeometryError> {
    let mut points = Vec::new();
    for (n, line) in s.lines().enumerate() {
        let mut it = line.split_whitespace();
        if it.next() != Some("v") {
            continue;
        }
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| GeometryError::Format(format!("bad vertex on line {}", n + 1)))?;
        }
        points.push(p);
    }
    Ok(PointCloud { points })
}

pub fn point_cloud_to_bytes(pc: &PointCloud) -> Vec<u8> {
    pc.points.iter().flatten().flat_map(|&c| (c as f32).to_le_bytes()).collect()
}

pub fn point_cloud_from_bytes(b: &[u8]) -> Result<PointCloud, GeometryError> {
    if b.len() % 12 != 0 {
        return Err(GeometryError::Format(format!("{} bytes is not a whole number of f32 triples", b.len())));
    }
    let f = |c: &[u8]| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
    let points = b.chunks_exact(12).map(|c| [f(&c[0..4]), f(&c[4..8]), f(&c[8..12])]).collect();
    Ok(PointCloud { points })
}

pub fn voxels_to_bytes(g: &VoxelGrid) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(VOXEL_MAGIC);
    out.extend_from_slice(&(g.resolution() as u32).to_le_bytes());
    let b = g.bounds();
    for v in b.min.iter().chain(&b.max) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut current = false;
    let mut run = 0u32;
    for i in 0..g.len() {
        let v = g.get_index(i);
        if v != current {
            out.extend_from_slice(&run.to_le_bytes());
            current = v;
            run = 0;
        }
        run += 1;
    }
    out.extend_from_slice(&run.to_le_bytes());
    out
}

pub fn voxels_from_bytes(bytes: &[u8]) -> Result<VoxelGrid, GeometryError> {
    let fmt = |m: &str| GeometryError::Format(m.to_string());
    let body = bytes.strip_prefix(VOXEL_MAGIC.as_slice()).ok_or_else(|| fmt("missing GFV1 magic"))?;
    if body.len() < 52 {
        return Err(fmt("truncated voxel header"));
    }
    let resolution = u32::from_le_bytes(body[..4].try_into().expect("4 bytes")) as usize;
    let mut vals = [0.0; 6];
    for (i, v) in vals.iter_mut().enumerate() {
        *v = f64::from_le_bytes(body[4 + 8 * i..12 + 8 * i].try_into().expect("8 bytes"));
    }
    let bounds = Aabb { min: [vals[0], vals[1], vals[2]], max: [vals[3], vals[4], vals[5]] };
    if resolution == 0 || resolution > 1024 || bounds.is_degenerate() {
        return Err(fmt("invalid voxel header"));
    }
    let runs = &body[52..];
    if runs.len() % 4 != 0 {
        return Err(fmt("truncated run-length data"));
    }
    let mut g = VoxelGrid::empty(resolution, bounds);
    let mut pos = 0usize;
    let mut value = false;
    for c in runs.chunks_exact(4) {
        let n = u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize;
        if pos + n > g.len() {
            return Err(fmt("runs overflow the grid"));
        }
        if value {
            for i in pos..pos + n {
                g.set_index(i, true);
            }
        }
        pos += n;
        value = !value;
    }
    if pos != g.len() {
        return Err(fmt("runs do not cover the grid"));
    }
    Ok(g)
}
