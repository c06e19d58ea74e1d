//! Perceptual distance metrics between 8-bit image pairs and the aggregate
//! report produced by attack runs.
//!
//! Distance conventions: linf and l2 are computed on pixel differences
//! rescaled to [0, 1] (divide by 255); PSNR uses pixel-unit MSE over every
//! channel with peak 255; SSIM uses an 11x11 Gaussian window, sigma 1.5,
//! K1 = 0.01, K2 = 0.03, L = 255, averaged over channels. Identical images
//! give linf = l2 = 0, infinite PSNR, and SSIM exactly 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePairMetrics {
    /// Max absolute pixel difference, in [0, 1] units.
    pub linf: f64,
    /// Euclidean norm of the [0, 1]-scaled difference.
    pub l2: f64,
    /// Peak signal-to-noise ratio in dB; `f64::INFINITY` for identical images.
    pub psnr: f64,
    /// Mean structural similarity over channels, 1 for identical images.
    pub ssim: f64,
}

/// Compute all four metrics between two same-shape images.
pub fn pair_metrics(a: &ImageTensor, b: &ImageTensor) -> Result<ImagePairMetrics> {
    if !a.same_shape(b) {
        return Err(Error::rejected(format!(
            "metric operands have different shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut max_abs = 0.0_f64;
    let mut sum_sq_unit = 0.0_f64;
    let mut sum_sq_pixel = 0.0_f64;
    for (&x, &y) in a.pixels().iter().zip(b.pixels()) {
        let d = x - y;
        max_abs = max_abs.max(d.abs());
        sum_sq_pixel += d * d;
        let u = d / PEAK;
        sum_sq_unit += u * u;
    }
    let n = a.pixels().len() as f64;
    let mse = sum_sq_pixel / n;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    };
    let metrics = ImagePairMetrics {
        linf: max_abs / PEAK,
        l2: sum_sq_unit.sqrt(),
        psnr,
        ssim: ssim(a, b)?,
    };
    if metrics.linf.is_nan()
        || metrics.l2.is_nan()
        || metrics.psnr.is_nan()
        || metrics.ssim.is_nan()
    {
        return Err(Error::Numeric("NaN produced by image metrics".into()));
    }
    Ok(metrics)
}

/// Structural similarity averaged over channels. Images smaller than the
/// 11x11 window fall back to a single uniform window spanning the image.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::rejected(format!(
            "ssim operands have different shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (channels, height, width) = a.shape();
    let plane = height * width;
    let c1 = (SSIM_K1 * PEAK) * (SSIM_K1 * PEAK);
    let c2 = (SSIM_K2 * PEAK) * (SSIM_K2 * PEAK);

    let mut channel_sum = 0.0;
    for ch in 0..channels {
        let xa = &a.pixels()[ch * plane..(ch + 1) * plane];
        let xb = &b.pixels()[ch * plane..(ch + 1) * plane];
        channel_sum += if height < SSIM_WINDOW || width < SSIM_WINDOW {
            let weights = vec![1.0 / plane as f64; plane];
            windowed_ssim(xa, xb, &weights, c1, c2)
        } else {
            let weights = gaussian_window();
            let mut total = 0.0;
            let mut count = 0usize;
            for wy in 0..=(height - SSIM_WINDOW) {
                for wx in 0..=(width - SSIM_WINDOW) {
                    let mut px = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
                    let mut py = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
                    for dy in 0..SSIM_WINDOW {
                        let row = (wy + dy) * width + wx;
                        px.extend_from_slice(&xa[row..row + SSIM_WINDOW]);
                        py.extend_from_slice(&xb[row..row + SSIM_WINDOW]);
                    }
                    total += windowed_ssim(&px, &py, &weights, c1, c2);
                    count += 1;
                }
            }
            total / count as f64
        };
    }
    Ok(channel_sum / channels as f64)
}

/// SSIM of one window with normalized weights, centered moments.
fn windowed_ssim(x: &[f64], y: &[f64], weights: &[f64], c1: f64, c2: f64) -> f64 {
    let mut mu_x = 0.0;
    let mut mu_y = 0.0;
    for ((&w, &xv), &yv) in weights.iter().zip(x).zip(y) {
        mu_x += w * xv;
        mu_y += w * yv;
    }
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    let mut cov = 0.0;
    for ((&w, &xv), &yv) in weights.iter().zip(x).zip(y) {
        let dx = xv - mu_x;
        let dy = yv - mu_y;
        var_x += w * dx * dx;
        var_y += w * dy * dy;
        cov += w * dx * dy;
    }
    ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
        / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
}

fn gaussian_window() -> Vec<f64> {
    let center = (SSIM_WINDOW / 2) as f64;
    let mut weights = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let di = i as f64 - center;
            let dj = j as f64 - center;
            weights.push((-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    weights
}

/// One attacked sample's contribution to an aggregate report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleResult {
    pub success: bool,
    pub iterations: usize,
    pub metrics: ImagePairMetrics,
}

/// Aggregate over a set of attacked samples. Infinite-PSNR samples (image
/// unchanged) are excluded from the PSNR mean and counted separately;
/// `mean_psnr` is None when every sample was infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mode: String,
    /// Success rate in percent over the samples aggregated.
    pub asr: f64,
    pub mean_iterations: f64,
    pub mean_linf: f64,
    pub mean_l2: f64,
    pub mean_psnr: Option<f64>,
    pub mean_ssim: f64,
    pub psnr_inf_count: usize,
    pub n: usize,
}

pub const AGGREGATE_CSV_HEADER: &str = "asr,mean_iter,linf,l2,psnr,ssim,psnr_inf_count,n";

impl AggregateReport {
    pub fn csv_row(&self) -> String {
        let psnr = match self.mean_psnr {
            Some(v) => format!("{v:.6}"),
            None => "inf".to_string(),
        };
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{:.6},{},{}",
            self.asr,
            self.mean_iterations,
            self.mean_linf,
            self.mean_l2,
            psnr,
            self.mean_ssim,
            self.psnr_inf_count,
            self.n
        )
    }
}

pub fn aggregate(results: &[SampleResult], mode: &str) -> Result<AggregateReport> {
    if results.is_empty() {
        return Err(Error::rejected("cannot aggregate an empty result set"));
    }
    let n = results.len();
    let mut successes = 0usize;
    let mut iter_sum = 0.0;
    let mut linf_sum = 0.0;
    let mut l2_sum = 0.0;
    let mut ssim_sum = 0.0;
    let mut psnr_sum = 0.0;
    let mut psnr_finite = 0usize;
    for r in results {
        if r.metrics.linf.is_nan()
            || r.metrics.l2.is_nan()
            || r.metrics.psnr.is_nan()
            || r.metrics.ssim.is_nan()
        {
            return Err(Error::Numeric("NaN metric in aggregate input".into()));
        }
        if r.success {
            successes += 1;
        }
        iter_sum += r.iterations as f64;
        linf_sum += r.metrics.linf;
        l2_sum += r.metrics.l2;
        ssim_sum += r.metrics.ssim;
        if r.metrics.psnr.is_finite() {
            psnr_sum += r.metrics.psnr;
            psnr_finite += 1;
        }
    }
    let nf = n as f64;
    Ok(AggregateReport {
        mode: mode.to_string(),
        asr: 100.0 * successes as f64 / nf,
        mean_iterations: iter_sum / nf,
        mean_linf: linf_sum / nf,
        mean_l2: l2_sum / nf,
        mean_psnr: if psnr_finite > 0 {
            Some(psnr_sum / psnr_finite as f64)
        } else {
            None
        },
        mean_ssim: ssim_sum / nf,
        psnr_inf_count: n - psnr_finite,
        n,
    })
}
