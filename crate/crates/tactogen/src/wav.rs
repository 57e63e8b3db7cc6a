//! Waveform export: 16-bit little-endian PCM mono WAV plus a (time, value)
//! CSV alongside.

use std::fs;
use std::path::Path;

use tactogen_core::real::round_half_up;

use crate::{io_err, Result};

/// Samples are in [0, 1]; they map to [-32767, 32767] about the 0.5 midline.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes()); // PCM chunk size
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = round_half_up((s * 2.0 - 1.0) * 32767.0).clamp(-32767.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_csv(path: &Path, samples: &[f64], sample_rate: f64) -> Result<()> {
    let mut out = String::from("time,value\n");
    for (i, &v) in samples.iter().enumerate() {
        out.push_str(&format!("{:.6},{v}\n", i as f64 / sample_rate));
    }
    fs::write(path, out).map_err(io_err(path))
}
