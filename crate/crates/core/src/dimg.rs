//! `DIMG`: a batch of equally sized real-valued frames.
//!
//! ```text
//! "DIMG" | version: u16 = 1 | frames: u32 | height: u32 | width: u32 | f64 data
//! ```
//!
//! All integers and reals are little-endian; each frame is row-major.
//! A batch may hold zero frames, in which case the dimensions still travel.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

const FORMAT: &str = "DIMG";
pub const MAGIC: &[u8; 4] = b"DIMG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;

/// Upper bound on the total number of reals a decoded batch may hold.
pub const MAX_VALUES: usize = 1 << 27;

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    width: usize,
    height: usize,
    frames: Vec<Grid<f64>>,
}

impl Batch {
    pub fn new(width: usize, height: usize, frames: Vec<Grid<f64>>) -> Result<Self> {
        if let Some(bad) = frames.iter().find(|f| f.dims() != (width, height)) {
            return Err(Error::Shape(format!(
                "frame {}x{} in a {width}x{height} batch",
                bad.width(),
                bad.height()
            )));
        }
        Ok(Batch {
            width,
            height,
            frames,
        })
    }

    /// Batch of the given frames; fails on an empty or ragged list.
    pub fn from_frames(frames: Vec<Grid<f64>>) -> Result<Self> {
        let (w, h) = frames
            .first()
            .map(Grid::dims)
            .ok_or_else(|| Error::Shape("cannot infer dimensions of an empty batch".into()))?;
        Self::new(w, h, frames)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> &[Grid<f64>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Grid<f64>> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn encode(batch: &Batch) -> Result<Vec<u8>> {
    let as_u32 = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| Error::Shape(format!("{what} {n} exceeds u32")))
    };
    let count = as_u32(batch.len(), "frame count")?;
    let height = as_u32(batch.height, "height")?;
    let width = as_u32(batch.width, "width")?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * batch.len() * batch.width * batch.height);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    for frame in &batch.frames {
        for x in frame.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Batch> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(FORMAT, format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(FORMAT, "bad magic"));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::format(FORMAT, format!("unsupported version {version}")));
    }
    let count = u32_at(6) as usize;
    let height = u32_at(10) as usize;
    let width = u32_at(14) as usize;
    let per_frame = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(FORMAT, "frame size overflows"))?;
    // Zero-sized frames would let the count alone drive allocation.
    if per_frame == 0 && count > 0 {
        return Err(Error::format(FORMAT, format!("{count} frames of {width}x{height}")));
    }
    let total = per_frame
        .checked_mul(count)
        .filter(|&n| n <= MAX_VALUES)
        .ok_or_else(|| Error::format(FORMAT, format!("{count} frames of {width}x{height} too large")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != total * 8 {
        return Err(Error::format(
            FORMAT,
            format!("payload is {} bytes, header implies {}", body.len(), total * 8),
        ));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let frames = (0..count)
        .map(|_| {
            let data: Vec<f64> = values.by_ref().take(per_frame).collect();
            Grid::from_vec(width, height, data).expect("length checked above")
        })
        .collect();
    Ok(Batch {
        width,
        height,
        frames,
    })
}

pub fn read(path: &Path) -> Result<Batch> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: &Path, batch: &Batch) -> Result<()> {
    std::fs::write(path, encode(batch)?).map_err(|e| Error::io(path, e))
}
