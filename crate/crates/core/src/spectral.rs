//! 2D power-spectral-density texture metrics.
//!
//! The log-PSD MSE between generated and reference height maps is the
//! toolkit's primary quantitative metric; the FFT here is validated against
//! a naive DFT oracle in the test suite.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::heightmap::HeightMap;
use crate::{contract, Result};

/// Floor added before the log so empty bins stay finite.
pub const PSD_LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    pub fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }

    pub fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }

    pub fn norm_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

fn is_power_of_two(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

/// In-place iterative radix-2 Cooley-Tukey, forward (e^{-i...}), unnormalized.
pub fn fft_inplace(buf: &mut [Complex]) {
    let n = buf.len();
    debug_assert!(is_power_of_two(n));
    if n <= 1 {
        return;
    }
    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * core::f64::consts::PI / len as f64;
        let w_len = Complex::new(libm::cos(ang), libm::sin(ang));
        for start in (0..n).step_by(len) {
            let mut w = Complex::new(1.0, 0.0);
            for k in 0..len / 2 {
                let a = buf[start + k];
                let b = buf[start + k + len / 2].mul(w);
                buf[start + k] = a.add(b);
                buf[start + k + len / 2] = a.sub(b);
                w = w.mul(w_len);
            }
        }
        len <<= 1;
    }
}

/// Unnormalized forward 2D DFT of a real field via row-column FFTs.
/// Both dims must be powers of two.
pub fn dft2(field: &[f64], height: usize, width: usize) -> Result<Vec<Complex>> {
    if !is_power_of_two(height) || !is_power_of_two(width) {
        return Err(contract(format_args!("dft2: dims {height}x{width} must be powers of two")));
    }
    if field.len() != height * width {
        return Err(contract("dft2: field length does not match dims"));
    }
    let mut data: Vec<Complex> = field.iter().map(|&v| Complex::new(v, 0.0)).collect();
    // rows
    let mut row = vec![Complex::ZERO; width];
    for y in 0..height {
        row.copy_from_slice(&data[y * width..(y + 1) * width]);
        fft_inplace(&mut row);
        data[y * width..(y + 1) * width].copy_from_slice(&row);
    }
    // columns
    let mut col = vec![Complex::ZERO; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = data[y * width + x];
        }
        fft_inplace(&mut col);
        for y in 0..height {
            data[y * width + x] = col[y];
        }
    }
    Ok(data)
}

/// Power spectral density |X|^2 / (H*W) of the mean-subtracted field.
/// Subtracting the mean zeroes the DC bin and leaves all others untouched,
/// so min-max offsets between maps do not dominate the metric.
pub fn psd(field: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let centered: Vec<f64> = field.iter().map(|&v| v - mean).collect();
    let spec = dft2(&centered, height, width)?;
    let norm = 1.0 / (height * width) as f64;
    Ok(spec.iter().map(|c| c.norm_sq() * norm).collect())
}

/// ln(PSD + 1e-10) per bin.
pub fn log_psd(field: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
    Ok(psd(field, height, width)?
        .iter()
        .map(|&p| libm::log(p + PSD_LOG_FLOOR))
        .collect())
}

fn to_f64(h: &HeightMap) -> Vec<f64> {
    h.values.iter().map(|&v| v as f64).collect()
}

/// Mean over all bins of the squared log-PSD difference.
pub fn psd_mse(a: &HeightMap, b: &HeightMap) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(contract(format_args!(
            "psd_mse: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let la = log_psd(&to_f64(a), a.height, a.width)?;
    let lb = log_psd(&to_f64(b), b.height, b.width)?;
    let n = la.len() as f64;
    Ok(la.iter().zip(&lb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// Mean log-PSD over annuli of integer radius in frequency space.
/// Length is floor(min(H, W) / 2).
pub fn radial_psd(field: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
    let lp = log_psd(field, height, width)?;
    let n_bins = height.min(width) / 2;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for ky in 0..height {
        let fy = signed_freq(ky, height);
        for kx in 0..width {
            let fx = signed_freq(kx, width);
            let r = libm::round(libm::sqrt((fx * fx + fy * fy) as f64)) as usize;
            if r < n_bins {
                sums[r] += lp[ky * width + kx];
                counts[r] += 1;
            }
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { libm::log(PSD_LOG_FLOOR) })
        .collect())
}

/// Map a DFT bin index to its signed frequency.
pub fn signed_freq(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Bin (ky, kx) of the strongest non-DC PSD component.
pub fn dominant_peak(field: &[f64], height: usize, width: usize) -> Result<(usize, usize)> {
    let p = psd(field, height, width)?;
    let mut best = (0usize, 0usize);
    let mut best_v = f64::NEG_INFINITY;
    for ky in 0..height {
        for kx in 0..width {
            if ky == 0 && kx == 0 {
                continue;
            }
            let v = p[ky * width + kx];
            if v > best_v {
                best_v = v;
                best = (ky, kx);
            }
        }
    }
    Ok(best)
}

/// Number of histogram bins in a [`SpectralReport`].
pub const REPORT_BINS: usize = 20;

/// Aggregate per-sample log-PSD MSE scores.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// (id, score), in the order given.
    pub per_sample: Vec<(String, f64)>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Counts over `REPORT_BINS` equal bins spanning [0, max].
    pub histogram: [usize; REPORT_BINS],
}

impl SpectralReport {
    pub fn from_scores(per_sample: Vec<(String, f64)>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(contract("spectral report: no samples"));
        }
        let n = per_sample.len() as f64;
        let mean = per_sample.iter().map(|(_, v)| v).sum::<f64>() / n;
        let min = per_sample.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        let max = per_sample.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        let mut histogram = [0usize; REPORT_BINS];
        for (_, v) in &per_sample {
            let bin = if max > 0.0 {
                ((v / max * REPORT_BINS as f64) as usize).min(REPORT_BINS - 1)
            } else {
                0
            };
            histogram[bin] += 1;
        }
        Ok(SpectralReport { per_sample, mean, min, max, histogram })
    }

    /// Upper edges of the histogram bins.
    pub fn bin_edges(&self) -> [f64; REPORT_BINS] {
        let mut edges = [0.0; REPORT_BINS];
        for (i, e) in edges.iter_mut().enumerate() {
            *e = self.max * (i + 1) as f64 / REPORT_BINS as f64;
        }
        edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_is_pure_dc() {
        let n = 8;
        let field = vec![0.7; n * n];
        let spec = dft2(&field, n, n).unwrap();
        assert!((spec[0].re - 0.7 * (n * n) as f64).abs() < 1e-9);
        assert!(spec[0].im.abs() < 1e-9);
        for (i, c) in spec.iter().enumerate().skip(1) {
            assert!(c.norm_sq() < 1e-12, "bin {i} = {c:?}");
        }
    }

    #[test]
    fn cosine_hits_expected_bins() {
        // cos(2*pi*4*x/32): energy only at kx = +-4, magnitude N^2/2 each
        let n = 32;
        let mut field = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                field[y * n + x] = libm::cos(2.0 * core::f64::consts::PI * 4.0 * x as f64 / n as f64);
            }
        }
        let spec = dft2(&field, n, n).unwrap();
        let expected = (n * n) as f64 / 2.0;
        for ky in 0..n {
            for kx in 0..n {
                let mag = libm::sqrt(spec[ky * n + kx].norm_sq());
                if ky == 0 && (kx == 4 || kx == n - 4) {
                    assert!((mag - expected).abs() < 1e-6, "peak bin ({ky},{kx}) mag {mag}");
                } else {
                    assert!(mag < 1e-6, "leak at ({ky},{kx}) mag {mag}");
                }
            }
        }
    }

    #[test]
    fn zero_field_logs_at_floor() {
        let lp = log_psd(&vec![0.0; 16 * 16], 16, 16).unwrap();
        for v in lp {
            assert!((v - libm::log(PSD_LOG_FLOOR)).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_mse_identical_is_zero() {
        let h = HeightMap::new(16, 16, (0..256).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
        assert_eq!(psd_mse(&h, &h).unwrap(), 0.0);
    }

    #[test]
    fn psd_mse_rejects_dim_mismatch() {
        let a = HeightMap::constant(16, 16, 0.0);
        let b = HeightMap::constant(32, 32, 0.0);
        assert!(psd_mse(&a, &b).is_err());
    }

    #[test]
    fn non_power_of_two_rejected() {
        assert!(dft2(&vec![0.0; 12 * 16], 12, 16).is_err());
    }

    #[test]
    fn report_aggregation() {
        let r = SpectralReport::from_scores(vec![
            (String::from("a"), 1.0),
            (String::from("b"), 3.0),
        ])
        .unwrap();
        assert_eq!(r.mean, 2.0);
        assert_eq!(r.min, 1.0);
        assert_eq!(r.max, 3.0);
        assert_eq!(r.histogram.iter().sum::<usize>(), 2);
    }

    #[test]
    fn report_all_zero_scores() {
        let r = SpectralReport::from_scores(vec![
            (String::from("a"), 0.0),
            (String::from("b"), 0.0),
        ])
        .unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.histogram[0], 2);
    }

    #[test]
    fn radial_constant_field_at_floor() {
        let r = radial_psd(&vec![0.25; 32 * 32], 32, 32).unwrap();
        assert_eq!(r.len(), 16);
        for v in r {
            assert!((v - libm::log(PSD_LOG_FLOOR)).abs() < 1e-9);
        }
    }

    #[test]
    fn radial_cosine_peaks_at_radius_4() {
        let n = 32;
        let mut field = vec![0.0; n * n];
        for y in 0..n {
            for x in 0..n {
                field[y * n + x] = libm::cos(2.0 * core::f64::consts::PI * 4.0 * x as f64 / n as f64);
            }
        }
        let r = radial_psd(&field, n, n).unwrap();
        let best = r
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(best, 4);
    }
}
