//! PSNR and single-scale SSIM with the SR community's evaluation protocol
//! (Y channel, border shave, peak 255), plus directory-level benchmark
//! evaluation against ground-truth images.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{self, Image};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ChannelMode {
    /// Luma plane of a BT.601 conversion (the benchmark convention).
    Y,
    /// MSE pooled over all three RGB channels (PSNR only; SSIM stays on Y).
    RgbMean,
}

impl ChannelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Y => "y",
            ChannelMode::RgbMean => "rgb",
        }
    }
}

#[derive(Copy, Clone, Debug)]
pub struct EvalProtocol {
    pub channel: ChannelMode,
    /// Pixels removed from each border before comparison (convention: = upscale rate).
    pub shave: usize,
    pub peak: f64,
}

impl EvalProtocol {
    pub fn y_shave(shave: usize) -> Self {
        EvalProtocol { channel: ChannelMode::Y, shave, peak: 255.0 }
    }
}

fn shaved_plane(img: &Image, shave: usize) -> Result<(Vec<f64>, usize, usize)> {
    if 2 * shave >= img.width.min(img.height) {
        return Err(Error::invalid(
            "shave",
            format!("shave {shave} too large for {}x{} image", img.width, img.height),
        ));
    }
    let w = img.width - 2 * shave;
    let h = img.height - 2 * shave;
    let mut out = Vec::with_capacity(w * h * img.channels);
    for y in shave..shave + h {
        for x in shave..shave + w {
            for c in 0..img.channels {
                out.push(img.data[(y * img.width + x) * img.channels + c] as f64);
            }
        }
    }
    Ok((out, w, h))
}

fn check_extents(a: &Image, b: &Image) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DataMismatch(format!(
            "image extents differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)`; identical images give positive infinity.
pub fn psnr(a: &Image, b: &Image, protocol: &EvalProtocol) -> Result<f64> {
    check_extents(a, b)?;
    let (pa, pb) = match protocol.channel {
        ChannelMode::Y => (imaging::to_luma(a)?, imaging::to_luma(b)?),
        ChannelMode::RgbMean => (a.clone(), b.clone()),
    };
    if pa.channels != pb.channels {
        return Err(Error::DataMismatch("channel count differs".to_string()));
    }
    let (da, _, _) = shaved_plane(&pa, protocol.shave)?;
    let (db, _, _) = shaved_plane(&pb, protocol.shave)?;
    let mse: f64 = da.iter().zip(&db).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / da.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (protocol.peak * protocol.peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
pub fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in -half..=half {
        for x in -half..=half {
            let d2 = (x * x + y * y) as f64;
            w.push((-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Mean single-scale SSIM over all valid 11x11 windows of the shaved Y plane.
pub fn ssim(a: &Image, b: &Image, protocol: &EvalProtocol) -> Result<f64> {
    check_extents(a, b)?;
    let ya = imaging::to_luma(a)?;
    let yb = imaging::to_luma(b)?;
    let (pa, w, h) = shaved_plane(&ya, protocol.shave)?;
    let (pb, _, _) = shaved_plane(&yb, protocol.shave)?;
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("{w}x{h} region smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let window = gaussian_window();
    let c1 = (0.01 * protocol.peak) * (0.01 * protocol.peak);
    let c2 = (0.03 * protocol.peak) * (0.03 * protocol.peak);
    let mut total = 0.0;
    let mut count = 0usize;
    for wy in 0..=h - SSIM_WINDOW {
        for wx in 0..=w - SSIM_WINDOW {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            let mut wi = 0;
            for y in 0..SSIM_WINDOW {
                let row = (wy + y) * w + wx;
                for x in 0..SSIM_WINDOW {
                    let g = window[wi];
                    wi += 1;
                    let va = pa[row + x];
                    let vb = pb[row + x];
                    mu_a += g * va;
                    mu_b += g * vb;
                    aa += g * va * va;
                    bb += g * vb * vb;
                    ab += g * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let value = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += value;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Where the SR images for a benchmark run come from.
pub enum SrSource<'a> {
    /// Precomputed SR PNGs with filename stems matching the HR set.
    Dir(&'a Path),
    /// Bicubic baseline: downscale the modcropped HR by the rate, upscale back.
    Bicubic,
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub stem: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub scale: usize,
    pub channel: ChannelMode,
    pub shave: usize,
    pub rows: Vec<BenchRow>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("png")) == Some(true) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Deterministic per-image and mean PSNR/SSIM over a directory of ground-truth
/// images. HR images are modcropped by the rate before degradation/comparison.
pub fn evaluate_benchmark(
    hr_dir: &Path,
    source: &SrSource,
    scale: usize,
    protocol: &EvalProtocol,
) -> Result<BenchReport> {
    let hr_files = png_stems(hr_dir)?;
    let sr_files = match source {
        SrSource::Dir(dir) => Some(png_stems(dir)?),
        SrSource::Bicubic => None,
    };
    let mut rows = Vec::new();
    for (stem, hr_path) in &hr_files {
        let hr = imaging::modcrop(&imaging::load_png(hr_path)?, scale)?;
        let sr = match source {
            SrSource::Bicubic => {
                let lr = imaging::bicubic_resize(&hr, hr.width / scale, hr.height / scale)?;
                imaging::bicubic_resize(&lr, hr.width, hr.height)?
            }
            SrSource::Dir(_) => {
                let sr_path = sr_files
                    .as_ref()
                    .unwrap()
                    .get(stem)
                    .ok_or_else(|| Error::DataMismatch(format!("no SR counterpart for stem `{stem}`")))?;
                imaging::modcrop(&imaging::load_png(sr_path)?, scale)?
            }
        };
        rows.push(BenchRow {
            stem: stem.clone(),
            psnr_db: psnr(&sr, &hr, protocol)?,
            ssim: ssim(&sr, &hr, protocol)?,
        });
    }
    let n = rows.len().max(1) as f64;
    let mean_psnr_db = rows.iter().map(|r| r.psnr_db).sum::<f64>() / n;
    let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;
    Ok(BenchReport {
        scale,
        channel: protocol.channel,
        shave: protocol.shave,
        rows,
        mean_psnr_db,
        mean_ssim,
    })
}

/// `image,psnr_db,ssim` rows plus a trailing `mean` row; the protocol is
/// echoed as `#`-prefixed header comments so numbers are never ambiguous.
pub fn write_report_csv(report: &BenchReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "# scale={}", report.scale)?;
    writeln!(out, "# channel={}", report.channel.as_str())?;
    writeln!(out, "# shave={}", report.shave)?;
    writeln!(out, "image,psnr_db,ssim")?;
    for row in &report.rows {
        writeln!(out, "{},{:.4},{:.5}", row.stem, row.psnr_db, row.ssim)?;
    }
    writeln!(out, "mean,{:.4},{:.5}", report.mean_psnr_db, report.mean_ssim)
}
