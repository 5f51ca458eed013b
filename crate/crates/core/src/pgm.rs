//! Binary PGM (`P5`) depth images.
//!
//! Layout written by [`encode`]:
//!
//! ```text
//! P5
//! # {"u0":…,"v0":…,"fx":…,"fy":…,"z_min":…,"z_max":…,"b":…}
//! <width> <height>
//! <2^b - 1>
//! <samples>
//! ```
//!
//! Samples are one byte each when `maxval < 256`, otherwise two bytes
//! big-endian. The decoder accepts comments anywhere in the header and uses
//! the first one that parses as an intrinsics record.

use std::path::Path;

use crate::depthcam::{DepthImage, IntrinsicsRecord};
use crate::error::{Error, Result};
use crate::grid::Grid;

const FORMAT: &str = "PGM";

/// Upper bound on decoded pixel count; keeps hostile headers from
/// requesting absurd allocations.
pub const MAX_PIXELS: usize = 1 << 26;

/// A decoded PGM before intrinsics are attached.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
    pub comments: Vec<String>,
}

pub fn encode(img: &DepthImage) -> Vec<u8> {
    let intr = img.intrinsics();
    let record = serde_json::to_string(&intr.to_record()).expect("plain struct serializes");
    let maxval = intr.max_luminance();
    let mut out = format!(
        "P5\n# {record}\n{} {}\n{maxval}\n",
        intr.width(),
        intr.height()
    )
    .into_bytes();
    let wide = maxval > 255;
    out.reserve(img.pixels().len() * if wide { 2 } else { 1 });
    for &l in img.pixels().as_slice() {
        if wide {
            out.extend_from_slice(&l.to_be_bytes());
        } else {
            out.push(l as u8);
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<DepthImage> {
    let raw = decode_raw(bytes)?;
    let record = raw
        .comments
        .iter()
        .find_map(|c| serde_json::from_str::<IntrinsicsRecord>(c.trim()).ok())
        .ok_or_else(|| Error::format(FORMAT, "no intrinsics comment in header"))?;
    let expected = (1u32 << record.b.clamp(1, 16)) - 1;
    if u32::from(raw.maxval) != expected {
        return Err(Error::format(
            FORMAT,
            format!("maxval {} does not match bit depth {}", raw.maxval, record.b),
        ));
    }
    let intr = record.into_intrinsics(raw.width, raw.height)?;
    let pixels = Grid::from_vec(raw.width, raw.height, raw.samples)?;
    DepthImage::new(intr, pixels)
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawPgm> {
    let mut header = Header { bytes, pos: 0, comments: Vec::new() };
    if header.bytes.get(..2) != Some(b"P5") {
        return Err(Error::format(FORMAT, "missing P5 magic"));
    }
    header.pos = 2;
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    // Exactly one whitespace byte separates the header from the raster.
    match header.bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(Error::format(FORMAT, "missing whitespace after maxval")),
    }
    if width == 0 || height == 0 {
        return Err(Error::format(FORMAT, format!("empty image {width}x{height}")));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::format(FORMAT, format!("maxval {maxval} out of range")));
    }
    let count = width
        .checked_mul(height)
        .filter(|&n| n <= MAX_PIXELS)
        .ok_or_else(|| Error::format(FORMAT, format!("{width}x{height} too large")))?;
    let maxval = maxval as u16;
    let wide = maxval > 255;
    let raster = &header.bytes[header.pos..];
    let need = count * if wide { 2 } else { 1 };
    if raster.len() < need {
        return Err(Error::format(
            FORMAT,
            format!("raster truncated: {} of {need} bytes", raster.len()),
        ));
    }
    let samples: Vec<u16> = if wide {
        raster[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster[..need].iter().map(|&b| u16::from(b)).collect()
    };
    if let Some(&bad) = samples.iter().find(|&&s| s > maxval) {
        return Err(Error::format(FORMAT, format!("sample {bad} exceeds maxval {maxval}")));
    }
    Ok(RawPgm {
        width,
        height,
        maxval,
        samples,
        comments: header.comments,
    })
}

pub fn read(path: &Path) -> Result<DepthImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: &Path, img: &DepthImage) -> Result<()> {
    std::fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: Vec<String>,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                let start = self.pos + 1;
                let end = self.bytes[start..]
                    .iter()
                    .position(|&c| c == b'\n' || c == b'\r')
                    .map_or(self.bytes.len(), |i| start + i);
                self.comments
                    .push(String::from_utf8_lossy(&self.bytes[start..end]).into_owned());
                self.pos = end;
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(FORMAT, format!("expected {what}")));
        }
        // At most 10 digits keeps the value well inside usize.
        if self.pos - start > 10 {
            return Err(Error::format(FORMAT, format!("{what} too long")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse()
            .map_err(|_| Error::format(FORMAT, format!("bad {what} {text:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthcam::CameraIntrinsics;

    fn tiny(bits: u8) -> DepthImage {
        let intr = CameraIntrinsics::new(4, 3, bits, 2.0, 2.0, 100.0, 90.0, 0.3, 0.7).unwrap();
        let max = intr.max_luminance();
        let px = Grid::from_fn(4, 3, |u, v| ((u * 7 + v * 13) as u32 % (u32::from(max) + 1)) as u16);
        DepthImage::new(intr, px).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = encode(&tiny(16));
        let text = String::from_utf8_lossy(&bytes[..bytes.len() - 24]);
        assert_eq!(
            text,
            "P5\n# {\"u0\":2.0,\"v0\":2.0,\"fx\":100.0,\"fy\":90.0,\"z_min\":0.3,\"z_max\":0.7,\"b\":16}\n4 3\n65535\n"
        );
    }

    #[test]
    fn sixteen_bit_samples_are_big_endian() {
        let intr = CameraIntrinsics::new(1, 1, 16, 1.0, 1.0, 1.0, 1.0, 0.3, 0.7).unwrap();
        let img = DepthImage::new(intr, Grid::filled(1, 1, 0x1234)).unwrap();
        let bytes = encode(&img);
        assert_eq!(&bytes[bytes.len() - 2..], &[0x12, 0x34]);
    }

    #[test]
    fn roundtrip_8_and_16_bit() {
        for bits in [8, 12, 16] {
            let img = tiny(bits);
            assert_eq!(decode(&encode(&img)).unwrap(), img);
        }
    }

    #[test]
    fn comments_between_tokens_are_tolerated() {
        let body = b"P5 # first\n# {\"u0\":1.0,\"v0\":1.0,\"fx\":5.0,\"fy\":5.0,\"z_min\":0.3,\"z_max\":0.7,\"b\":8}\n2 # w\n1\n255\n\x01\x02";
        let img = decode(body).unwrap();
        assert_eq!(img.pixels().as_slice(), &[1, 2]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n1 1\n255\n\x00").is_err(), "no intrinsics comment");
        let truncated = &encode(&tiny(16))[..40];
        assert!(decode(truncated).is_err());
        let mut wrong_max = encode(&tiny(8));
        let pos = wrong_max.windows(3).position(|w| w == b"255").unwrap();
        wrong_max[pos..pos + 3].copy_from_slice(b"127");
        assert!(decode(&wrong_max).is_err());
        assert!(decode_raw(b"P5 99999999999 1 255 ").is_err());
        assert!(decode_raw(b"P5 100000 100000 255 ").is_err());
    }
}
