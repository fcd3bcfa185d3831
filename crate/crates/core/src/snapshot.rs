//! Binary field snapshots.
//!
//! Layout (little-endian): magic `BIFL`, `u8` dim, three reserved zero bytes,
//! `u32` points per axis, `f32` box length, then `N^dim` `f64` samples in
//! row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{make_grid, Field};

pub const MAGIC: &[u8; 4] = b"BIFL";
pub const HEADER_LEN: usize = 16;

pub fn encode(field: &Field) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(MAGIC);
    out.push(grid.dim() as u8);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(grid.points_per_axis() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.box_length() as f32).to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode a snapshot. The grid length is the stored `f32`, widened.
pub fn decode(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("missing BIFL magic".into()));
    }
    let dim = bytes[4] as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let length = f32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as f64;
    let grid = make_grid(dim, n, length).map_err(|e| Error::Format(format!("invalid header: {e}")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Format(format!("expected {} sample bytes, found {}", 8 * grid.len(), body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Field::new(&grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write(path: &Path, field: &Field) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(field))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Field> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
