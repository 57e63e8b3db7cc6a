//! Height maps, RGB images, and the normalization / crop / proxy ops.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::round_half_up;
use crate::{contract, Result};

/// H x W field of relative surface elevation, dimensionless, nominally [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, `values[y * width + x]`.
    pub values: Vec<f32>,
}

impl HeightMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(contract(format_args!(
                "height map {width}x{height} wants {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite { op: "height-map", index: i });
        }
        Ok(HeightMap { width, height, values })
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        HeightMap { width, height, values: vec![value; width * height] }
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Center-crop / reflect-pad to the target size. See [`crop_pad_plane`].
    pub fn crop_pad(&self, target_w: usize, target_h: usize) -> Result<Self> {
        let values = crop_pad_plane(&self.values, self.width, self.height, target_w, target_h)?;
        Ok(HeightMap { width: target_w, height: target_h, values })
    }

    /// Min-max normalize then quantize to u8, round half up. A constant map
    /// (max == min) maps to all zeros: no relief, no signal.
    pub fn normalize_minmax_u8(&self) -> Vec<u8> {
        let (lo, hi) = self.min_max();
        if hi <= lo {
            return vec![0; self.values.len()];
        }
        let range = (hi - lo) as f64;
        self.values
            .iter()
            .map(|&v| {
                let scaled = round_half_up((v as f64 - lo as f64) / range * 255.0);
                scaled.clamp(0.0, 255.0) as u8
            })
            .collect()
    }
}

/// H x W x 3 image, interleaved RGB, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    pub width: usize,
    pub height: usize,
    /// Row-major, `data[(y * width + x) * 3 + channel]`.
    pub data: Vec<f32>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(contract(format_args!(
                "image {width}x{height} wants {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(ImageRgb { width, height, data })
    }

    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        ImageRgb { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn crop_pad(&self, target_w: usize, target_h: usize) -> Result<Self> {
        let mut planes = Vec::with_capacity(3);
        for c in 0..3 {
            let plane: Vec<f32> = self.data.iter().skip(c).step_by(3).copied().collect();
            planes.push(crop_pad_plane(&plane, self.width, self.height, target_w, target_h)?);
        }
        let mut data = vec![0.0; target_w * target_h * 3];
        for i in 0..target_w * target_h {
            for c in 0..3 {
                data[i * 3 + c] = planes[c][i];
            }
        }
        ImageRgb::new(target_w, target_h, data)
    }
}

/// Reflect an index into [0, n): mirror about the edges, edge samples not
/// repeated (reflect-101), so padded borders mirror the interior.
fn mirror_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Center crop when shrinking, reflect-pad when growing; axes independent.
pub fn crop_pad_plane(
    values: &[f32],
    width: usize,
    height: usize,
    target_w: usize,
    target_h: usize,
) -> Result<Vec<f32>> {
    if target_w < 16 || target_h < 16 {
        return Err(contract(format_args!("crop_pad: target {target_w}x{target_h} below 16")));
    }
    if values.len() != width * height {
        return Err(contract("crop_pad: value count does not match dims"));
    }
    let map = |i: usize, target: usize, cur: usize| -> usize {
        if target <= cur {
            let offset = (cur - target) / 2;
            offset + i
        } else {
            let pad = (target - cur) / 2;
            mirror_index(i as isize - pad as isize, cur)
        }
    };
    let mut out = vec![0.0; target_w * target_h];
    for y in 0..target_h {
        let sy = map(y, target_h, height);
        for x in 0..target_w {
            let sx = map(x, target_w, width);
            out[y * target_w + x] = values[sy * width + sx];
        }
    }
    Ok(out)
}

/// Rec.601 luminance weights.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// The grayscale-proxy baseline: image luminance read directly as height.
/// Inputs are [0, 1] so the output already is too.
pub fn grayscale_proxy(image: &ImageRgb) -> HeightMap {
    let values = image
        .data
        .chunks_exact(3)
        .map(|px| (LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]).clamp(0.0, 1.0))
        .collect();
    HeightMap { width: image.width, height: image.height, values }
}
