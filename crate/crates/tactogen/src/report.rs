//! Spectral evaluation reports: CSV scores, a portable-pixmap histogram bar
//! chart, and a sidecar text file recording the exact bin edges.

use std::fs;
use std::path::Path;

use tactogen_core::heightmap::ImageRgb;
use tactogen_core::spectral::{SpectralReport, REPORT_BINS};

use crate::{io_err, pnm, Result};

pub fn write_report(dir: &Path, report: &SpectralReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut csv = String::from("id,psd_mse\n");
    for (id, score) in &report.per_sample {
        csv.push_str(&format!("{id},{score}\n"));
    }
    let csv_path = dir.join("report.csv");
    fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;

    let mut sidecar = String::from("# histogram bin edges over [0, max]\n");
    sidecar.push_str(&format!("mean {}\nmin {}\nmax {}\n", report.mean, report.min, report.max));
    for (i, edge) in report.bin_edges().iter().enumerate() {
        sidecar.push_str(&format!("bin {i} upper_edge {edge} count {}\n", report.histogram[i]));
    }
    let side_path = dir.join("bin_edges.txt");
    fs::write(&side_path, sidecar).map_err(io_err(&side_path))?;

    let chart = histogram_chart(&report.histogram);
    pnm::write_ppm(&dir.join("histogram.ppm"), &chart)
}

/// Simple bar chart: one 12 px column per bin, 100 px plot height, white
/// background, filled bars, baseline row.
fn histogram_chart(histogram: &[usize; REPORT_BINS]) -> ImageRgb {
    const BAR_W: usize = 12;
    const PLOT_H: usize = 100;
    const MARGIN: usize = 4;
    let width = REPORT_BINS * BAR_W + 2 * MARGIN;
    let height = PLOT_H + 2 * MARGIN;
    let mut img = ImageRgb::constant(width, height, [1.0, 1.0, 1.0]);
    let peak = histogram.iter().copied().max().unwrap_or(0).max(1);
    for (bin, &count) in histogram.iter().enumerate() {
        let bar_h = count * PLOT_H / peak;
        for dy in 0..bar_h {
            let y = MARGIN + PLOT_H - 1 - dy;
            for dx in 1..BAR_W - 1 {
                let x = MARGIN + bin * BAR_W + dx;
                let i = (y * width + x) * 3;
                img.data[i] = 0.15;
                img.data[i + 1] = 0.3;
                img.data[i + 2] = 0.65;
            }
        }
    }
    // baseline
    for x in 0..width {
        let i = ((MARGIN + PLOT_H) * width + x) * 3;
        img.data[i] = 0.0;
        img.data[i + 1] = 0.0;
        img.data[i + 2] = 0.0;
    }
    img
}
