//! URFC cube files: a fixed header, f32 samples in `[l][n][e]` order and a
//! CRC32 trailer over everything before it.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, RfCube};

pub const MAGIC: &[u8; 4] = b"URFC";
pub const VERSION: u32 = 1;
/// Magic, version, three dimensions and four f64 parameters.
pub const HEADER_LEN: usize = 4 + 4 + 3 * 4 + 4 * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeHeader {
    pub lines: usize,
    pub depth: usize,
    pub elements: usize,
    pub sampling_freq: f64,
    pub center_freq: f64,
    pub sound_speed: f64,
    pub pitch: f64,
}

impl CubeHeader {
    /// Copies the stored acquisition parameters over `geom`; the aperture
    /// size and focal depth are not part of the file and come from `geom`.
    pub fn apply(&self, geom: &ArrayGeometry) -> Result<ArrayGeometry> {
        let g = ArrayGeometry {
            element_count: self.elements,
            pitch: self.pitch,
            sound_speed: self.sound_speed,
            sampling_freq: self.sampling_freq,
            center_freq: self.center_freq,
            scan_lines: self.lines,
            depth_samples: self.depth,
            ..geom.clone()
        };
        g.validate()?;
        Ok(g)
    }
}

pub fn write_cube(cube: &RfCube) -> Vec<u8> {
    let (l, n, e) = cube.dims();
    let g = &cube.geom;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * l * n * e + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [l, n, e] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in [g.sampling_freq, g.center_freq, g.sound_speed, g.pitch] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in cube.data.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptFile(msg.into())
}

/// Parses a cube; samples are widened from f32.
pub fn read_cube(bytes: &[u8]) -> Result<(CubeHeader, Array3<f64>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic, not a URFC cube"));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(corrupt("truncated cube header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(corrupt(format!("unsupported cube version {version}")));
    }
    let (l, n, e) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let payload = l
        .checked_mul(n)
        .and_then(|v| v.checked_mul(e))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| corrupt("cube dimensions overflow"))?;
    if bytes.len() != HEADER_LEN + payload + 4 {
        return Err(corrupt(format!(
            "cube of {l}x{n}x{e} needs {} bytes, file has {}",
            HEADER_LEN + payload + 4,
            bytes.len()
        )));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().expect("4 bytes")) {
        return Err(corrupt("cube checksum mismatch"));
    }
    let header = CubeHeader {
        lines: l,
        depth: n,
        elements: e,
        sampling_freq: f64_at(20),
        center_freq: f64_at(28),
        sound_speed: f64_at(36),
        pitch: f64_at(44),
    };
    let data: Vec<f64> = body[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let data = Array3::from_shape_vec((l, n, e), data).map_err(|err| corrupt(err.to_string()))?;
    Ok((header, data))
}

/// CRC32 trailer of a written cube, as printed by the CLI.
pub fn cube_checksum(bytes: &[u8]) -> Option<u32> {
    let t = bytes.len().checked_sub(4)?;
    Some(u32::from_le_bytes(bytes[t..].try_into().ok()?))
}
