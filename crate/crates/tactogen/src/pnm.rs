//! Binary portable pixmap/graymap IO.
//!
//! P6 8-bit for RGB images, P5 8-bit for quantized heights, P5 16-bit
//! (big-endian, netpbm convention) for raw heights scaled by 65535.
//! Writers and readers round-trip 8-bit payloads bit-exactly.

use std::fs;
use std::path::Path;

use tactogen_core::heightmap::{HeightMap, ImageRgb};
use tactogen_core::real::round_half_up;

use crate::{format_err, io_err, Result};

fn header(magic: &str, width: usize, height: usize, maxval: u32) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes()
}

/// RGB image in [0, 1] to binary P6, one byte per channel, round half up.
pub fn write_ppm(path: &Path, image: &ImageRgb) -> Result<()> {
    let mut bytes = header("P6", image.width, image.height, 255);
    bytes.extend(image.data.iter().map(|&v| quantize_u8(v)));
    fs::write(path, bytes).map_err(io_err(path))
}

/// Height map to 8-bit P5 after min-max normalization (the grayscale
/// export format).
pub fn write_pgm8(path: &Path, map: &HeightMap) -> Result<()> {
    let mut bytes = header("P5", map.width, map.height, 255);
    bytes.extend(map.normalize_minmax_u8());
    fs::write(path, bytes).map_err(io_err(path))
}

/// Raw height map in [0, 1] to 16-bit P5, big-endian, scaled by 65535.
pub fn write_pgm16(path: &Path, map: &HeightMap) -> Result<()> {
    let mut bytes = header("P5", map.width, map.height, 65535);
    for &v in &map.values {
        let q = round_half_up(v.clamp(0.0, 1.0) as f64 * 65535.0).clamp(0.0, 65535.0) as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn quantize_u8(v: f32) -> u8 {
    round_half_up(v.clamp(0.0, 1.0) as f64 * 255.0).clamp(0.0, 255.0) as u8
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl std::fmt::Display) -> Result<T> {
        Err(format_err(self.path, Some(self.pos as u64), message))
    }

    /// Skip whitespace and `#` comments between header tokens.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<u32> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected decimal header field");
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| self.err("header field out of range"), Ok)
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        // exactly one whitespace byte after maxval
        if self.pos >= self.bytes.len() || !self.bytes[self.pos].is_ascii_whitespace() {
            return self.err("expected single whitespace before payload");
        }
        self.pos += 1;
        if self.bytes.len() - self.pos < len {
            self.pos = self.bytes.len();
            return self.err(format!(
                "truncated payload: want {len} bytes, have {}",
                self.bytes.len() - self.pos
            ));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }
}

/// (magic, width, height, maxval) without reading the payload.
pub fn read_dims(path: &Path) -> Result<(String, usize, usize, u32)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut p = Parser { bytes: &bytes, pos: 0, path };
    let magic = parse_magic(&mut p)?;
    let width = p.token()? as usize;
    let height = p.token()? as usize;
    let maxval = p.token()?;
    Ok((magic, width, height, maxval))
}

fn parse_magic(p: &mut Parser) -> Result<String> {
    if p.bytes.len() < 2 || p.bytes[0] != b'P' || !(p.bytes[1] == b'5' || p.bytes[1] == b'6') {
        return p.err("bad magic: expected P5 or P6");
    }
    p.pos = 2;
    Ok(String::from_utf8_lossy(&p.bytes[0..2]).into_owned())
}

pub fn read_ppm(path: &Path) -> Result<ImageRgb> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut p = Parser { bytes: &bytes, pos: 0, path };
    let magic = parse_magic(&mut p)?;
    if magic != "P6" {
        return p.err("expected P6 pixmap");
    }
    let width = p.token()? as usize;
    let height = p.token()? as usize;
    let maxval = p.token()?;
    if maxval != 255 {
        return p.err(format!("unsupported maxval {maxval} for P6"));
    }
    let payload = p.payload(width * height * 3)?;
    let data = payload.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(ImageRgb::new(width, height, data)?)
}

pub fn read_pgm(path: &Path) -> Result<HeightMap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut p = Parser { bytes: &bytes, pos: 0, path };
    let magic = parse_magic(&mut p)?;
    if magic != "P5" {
        return p.err("expected P5 graymap");
    }
    let width = p.token()? as usize;
    let height = p.token()? as usize;
    let maxval = p.token()?;
    let values: Vec<f32> = match maxval {
        255 => p.payload(width * height)?.iter().map(|&b| b as f32 / 255.0).collect(),
        65535 => p
            .payload(width * height * 2)?
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect(),
        other => return p.err(format!("unsupported maxval {other} for P5")),
    };
    Ok(HeightMap::new(width, height, values)?)
}
