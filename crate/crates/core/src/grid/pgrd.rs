//! PGRD: the raw little-endian grid format shared by the CLI and the
//! denoiser bridge.
//!
//! ```text
//! "PGRD" | u32 height | u32 width | u8 dtype (0 = f64, 1 = f32) | row-major payload
//! ```

use std::fs;
use std::path::Path;

use super::Grid;
use crate::error::{PrismError, Result};

pub const MAGIC: &[u8; 4] = b"PGRD";
const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F64,
    F32,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::F32 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

pub fn encode(grid: &Grid, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    out.push(dtype.tag());
    match dtype {
        Dtype::F64 => grid
            .data()
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => grid
            .data()
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    out
}

/// Parses a PGRD buffer; `origin` only labels errors.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<Grid> {
    let bad = |reason: String| PrismError::format(origin, reason);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing PGRD magic".into()));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dtype = match bytes[12] {
        0 => Dtype::F64,
        1 => Dtype::F32,
        t => return Err(bad(format!("unknown dtype tag {t}"))),
    };
    let payload = &bytes[HEADER_LEN..];
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(dtype.width()))
        .ok_or_else(|| bad("shape overflows".into()))?;
    if payload.len() != expected {
        return Err(bad(format!(
            "payload is {} bytes, expected {expected} for {height}x{width}",
            payload.len()
        )));
    }
    let data = match dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect(),
    };
    Grid::new(height, width, data).map_err(|e| bad(e.to_string()))
}

pub fn read(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes =
        fs::read(path).map_err(|e| PrismError::io(format!("reading {}", path.display()), e))?;
    decode(&bytes, path)
}

/// Writes via a temporary sibling and a rename, so readers never observe a
/// partially written file.
pub fn write(path: impl AsRef<Path>, grid: &Grid, dtype: Dtype) -> Result<()> {
    write_atomic(path.as_ref(), &encode(grid, dtype))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| PrismError::format(path, "path has no file name"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| PrismError::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| {
        PrismError::io(
            format!("renaming {} to {}", tmp.display(), path.display()),
            e,
        )
    })
}
