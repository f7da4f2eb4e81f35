//! Reconstruction metrics and pixel-wise uncertainty statistics.

use std::f64::consts::PI;

use crate::error::{check_scale, PrismError, Result};
use crate::forward::Kernel;
use crate::grid::Grid;

/// Lower bound applied to per-pixel standard deviations.
pub const SD_FLOOR: f64 = 1e-6;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB; `+∞` when the grids are identical.
pub fn psnr(a: &Grid, b: &Grid, peak: f64) -> Result<f64> {
    let peak = check_scale("peak", peak)?;
    a.ensure_same_shape(b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gi in &g {
        for gj in &g {
            w.push(gi * gj / (total * total));
        }
    }
    w
}

/// Mean SSIM over all fully-contained 11×11 Gaussian (σ = 1.5) windows,
/// with `C1 = (0.01·peak)²` and `C2 = (0.03·peak)²`.
pub fn ssim(a: &Grid, b: &Grid, peak: f64) -> Result<f64> {
    let peak = check_scale("peak", peak)?;
    a.ensure_same_shape(b)?;
    let (h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(PrismError::TooSmall {
            height: h,
            width: w,
            min: SSIM_WINDOW,
        });
    }
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let window = gaussian_window();

    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=h - SSIM_WINDOW {
        for left in 0..=w - SSIM_WINDOW {
            let (mut mu_a, mut mu_b, mut e_aa, mut e_bb, mut e_ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let wt = window[i * SSIM_WINDOW + j];
                    let va = a[(top + i, left + j)];
                    let vb = b[(top + i, left + j)];
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    e_aa += wt * (va * va);
                    e_bb += wt * (vb * vb);
                    e_ab += wt * (va * vb);
                }
            }
            let var_a = e_aa - mu_a * mu_a;
            let var_b = e_bb - mu_b * mu_b;
            let cov = e_ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Root mean squared difference over the full grid.
pub fn kernel_rmse(k1: &Kernel, k2: &Kernel) -> Result<f64> {
    let d = k1.grid().distance(k2.grid())?;
    Ok(d / (k1.grid().len() as f64).sqrt())
}

/// Pixel-wise summary of a set of posterior draws against a ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub mean: Grid,
    /// Population standard deviation, floored at `sd_floor`.
    pub sd: Grid,
    /// Mean per-pixel Gaussian negative log-likelihood of the truth (nats).
    pub nll: f64,
    /// Fraction of pixels with `|truth − mean| ≤ 3·SD`.
    pub coverage3sd: f64,
    /// 1 where the truth falls outside the 3-SD interval.
    pub outlier_mask: Grid,
    pub mean_abs_error: f64,
    pub mean_sd: f64,
    pub sd_floor: f64,
}

/// Streaming per-pixel mean and variance (Welford), for sample sets too
/// large to hold in memory.
#[derive(Debug, Clone)]
pub struct PosteriorAccumulator {
    shape: (usize, usize),
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl PosteriorAccumulator {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            shape: (height, width),
            count: 0,
            mean: vec![0.0; height * width],
            m2: vec![0.0; height * width],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, sample: &Grid) -> Result<()> {
        sample.ensure_shape(self.shape)?;
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(sample.data()) {
            let delta = v - *mean;
            *mean += delta / n;
            *m2 += delta * (v - *mean);
        }
        Ok(())
    }

    pub fn finish(&self, truth: &Grid, sd_floor: f64) -> Result<PosteriorStats> {
        if self.count < 2 {
            return Err(PrismError::InsufficientSamples {
                needed: 2,
                got: self.count,
            });
        }
        let sd_floor = check_scale("sd_floor", sd_floor)?;
        truth.ensure_shape(self.shape)?;
        let n = self.count as f64;
        let (h, w) = self.shape;
        let sd: Vec<f64> = self
            .m2
            .iter()
            .map(|m2| (m2 / n).sqrt().max(sd_floor))
            .collect();

        let pixels = truth.len() as f64;
        let mut nll = 0.0;
        let mut abs_err = 0.0;
        let mut mask = Vec::with_capacity(truth.len());
        for ((&t, &mu), &s) in truth.data().iter().zip(&self.mean).zip(&sd) {
            let err = t - mu;
            nll += 0.5 * (2.0 * PI * s * s).ln() + err * err / (2.0 * s * s);
            abs_err += err.abs();
            mask.push(if err.abs() > 3.0 * s { 1.0 } else { 0.0 });
        }
        let outliers: f64 = mask.iter().sum();
        let mean_sd = sd.iter().sum::<f64>() / pixels;
        Ok(PosteriorStats {
            mean: Grid::from_raw(h, w, self.mean.clone()),
            sd: Grid::from_raw(h, w, sd),
            nll: nll / pixels,
            coverage3sd: 1.0 - outliers / pixels,
            outlier_mask: Grid::from_raw(h, w, mask),
            mean_abs_error: abs_err / pixels,
            mean_sd,
            sd_floor,
        })
    }
}

/// Pixel-wise mean, SD, NLL and 3-SD coverage of `samples` against `truth`.
pub fn posterior_stats(samples: &[Grid], truth: &Grid) -> Result<PosteriorStats> {
    posterior_stats_with_floor(samples, truth, SD_FLOOR)
}

pub fn posterior_stats_with_floor(
    samples: &[Grid],
    truth: &Grid,
    sd_floor: f64,
) -> Result<PosteriorStats> {
    if samples.len() < 2 {
        return Err(PrismError::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let (h, w) = truth.shape();
    let mut acc = PosteriorAccumulator::new(h, w);
    for s in samples {
        acc.push(s)?;
    }
    acc.finish(truth, sd_floor)
}

/// `|truth − mean| / SD` per pixel.
pub fn error_to_sd_map(stats: &PosteriorStats, truth: &Grid) -> Result<Grid> {
    let err = truth.zip_map(&stats.mean, |t, m| (t - m).abs())?;
    err.zip_map(&stats.sd, |e, s| e / s)
}

/// `|truth − mean|` per pixel.
pub fn abs_error_map(stats: &PosteriorStats, truth: &Grid) -> Result<Grid> {
    truth.zip_map(&stats.mean, |t, m| (t - m).abs())
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub noise_sigma: f64,
    pub mode: String,
    pub psnr: f64,
    pub ssim: f64,
    pub kernel_rmse: f64,
    pub nll: Option<f64>,
    pub coverage3sd: Option<f64>,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str =
        "run_id,noise_sigma,mode,psnr,ssim,kernel_rmse,nll,coverage3sd";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{},{}",
            self.run_id,
            self.noise_sigma,
            self.mode,
            self.psnr,
            self.ssim,
            self.kernel_rmse,
            opt(self.nll),
            opt(self.coverage3sd)
        )
    }
}
