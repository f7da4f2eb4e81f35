use num_complex::Complex64;

use super::{
    project_kernel, project_kernel_within, DenoisingPosteriorSampler, GaussianPrior,
    MeasurementConditionedSampler,
};
use crate::error::{check_scale, Result};
use crate::forward::Kernel;
use crate::grid::{fft2, ifft2, Grid, RngState, SpectralGrid};

/// Image proxy `x₀` against which the kernel is estimated from `y`.
#[derive(Debug, Clone)]
pub enum RecentringProxy {
    /// `x₀ = y`.
    Measurement,
    /// `x₀ = y` blurred by a Gaussian of standard deviation `sigma` pixels.
    Smoothed { sigma: f64 },
    /// A known image (oracle variant, for tests and calibration).
    Reference(Grid),
    /// Zero-phase estimate: `x̂₀ = √s(f)` from a stationary image prior's
    /// spectral variance, matched against `|ŷ|`. Recovers the magnitude of
    /// the kernel's transfer function from the measurement's power spectrum.
    PowerSpectrum { spectral_variance: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct RecentringConfig {
    /// When false the sampler is the unconditioned base prior.
    pub enabled: bool,
    pub proxy: RecentringProxy,
    /// Tikhonov term `λ` in `conj(x̂₀) ŷ / (|x̂₀|² + λ)`.
    pub regularization: f64,
    /// Nominal kernel window; the estimate is cropped to it before projection.
    pub support: Option<(usize, usize)>,
    /// Measurements whose (non-DC) power spectrum is flatter than this are
    /// treated as signal-free, and the base mean is kept.
    pub flatness_threshold: f64,
}

impl Default for RecentringConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            proxy: RecentringProxy::Smoothed { sigma: 1.0 },
            regularization: 1e-2,
            support: None,
            flatness_threshold: 0.4,
        }
    }
}

/// Geometric over arithmetic mean of a power spectrum; 1 for a flat one.
pub fn spectral_flatness(power: &[f64]) -> f64 {
    let n = power.len() as f64;
    let floor = f64::MIN_POSITIVE;
    let log_mean = power.iter().map(|p| p.max(floor).ln()).sum::<f64>() / n;
    let mean = power.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return 1.0;
    }
    log_mean.exp() / mean
}

fn smoothing_transfer(height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let two_pi_sq = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let mut out = Vec::with_capacity(height * width);
    for u in 0..height {
        let fu = crate::grid::signed_frequency(u, height) as f64 / height as f64;
        for v in 0..width {
            let fv = crate::grid::signed_frequency(v, width) as f64 / width as f64;
            out.push((-two_pi_sq * sigma * sigma * (fu * fu + fv * fv)).exp());
        }
    }
    out
}

/// Regularized inverse estimate of the blur kernel in `y`, projected to a
/// physical kernel. Returns `None` when `y` carries no usable signal.
pub fn estimate_kernel(y: &Grid, config: &RecentringConfig) -> Result<Option<Kernel>> {
    let lambda = check_scale("regularization", config.regularization)?;
    let (h, w) = y.shape();
    let y_hat = fft2(y);

    let ac: Vec<f64> = y_hat.coeffs()[1..].iter().map(|c| c.norm_sqr()).collect();
    if spectral_flatness(&ac) > config.flatness_threshold {
        return Ok(None);
    }

    // Proxy spectrum and the measurement spectrum it is matched against.
    let (proxy, target): (Vec<Complex64>, Vec<Complex64>) = match &config.proxy {
        RecentringProxy::Measurement => (y_hat.coeffs().to_vec(), y_hat.coeffs().to_vec()),
        RecentringProxy::Smoothed { sigma } => {
            let g = smoothing_transfer(h, w, check_scale("smoothing sigma", *sigma)?);
            (
                y_hat.coeffs().iter().zip(&g).map(|(c, g)| c * g).collect(),
                y_hat.coeffs().to_vec(),
            )
        }
        RecentringProxy::Reference(x) => {
            x.ensure_same_shape(y)?;
            (fft2(x).into_coeffs(), y_hat.coeffs().to_vec())
        }
        RecentringProxy::PowerSpectrum { spectral_variance } => {
            if spectral_variance.len() != y.len() {
                return Err(crate::PrismError::InvalidGrid(format!(
                    "{} spectral variances for a {h}x{w} measurement",
                    spectral_variance.len()
                )));
            }
            (
                spectral_variance
                    .iter()
                    .map(|s| Complex64::new(s.max(0.0).sqrt(), 0.0))
                    .collect(),
                y_hat
                    .coeffs()
                    .iter()
                    .map(|c| Complex64::new(c.norm(), 0.0))
                    .collect(),
            )
        }
    };

    let root_n = (y.len() as f64).sqrt();
    let mut spectrum: Vec<Complex64> = proxy
        .iter()
        .zip(&target)
        .map(|(p, t)| p.conj() * t / (p.norm_sqr() + lambda) / root_n)
        .collect();
    // Unit mass: the DC eigenvalue of a normalized kernel is exactly 1.
    spectrum[0] = Complex64::new(1.0 / root_n, 0.0);

    let raw = Kernel::new(ifft2(&SpectralGrid::new(h, w, spectrum)?)?);
    Ok(Some(match config.support {
        Some(s) => project_kernel_within(&raw, s),
        None => project_kernel(&raw),
    }))
}

/// Analytic stand-in for a measurement-conditioned kernel denoiser: a
/// Gaussian prior whose centre is re-estimated from the measurement.
#[derive(Debug, Clone)]
pub struct ConditionedKernelPrior {
    measurement: Grid,
    prior: GaussianPrior,
    recentred: bool,
}

impl ConditionedKernelPrior {
    /// The Gaussian prior actually sampled (after recentring).
    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    /// Whether the centre came from the measurement (false: base mean kept).
    pub fn is_recentred(&self) -> bool {
        self.recentred
    }
}

/// Builds the y-conditioned kernel sampler from `base_prior`.
pub fn conditioned_kernel_sampler(
    y: &Grid,
    config: &RecentringConfig,
    base_prior: &GaussianPrior,
) -> Result<ConditionedKernelPrior> {
    y.ensure_shape(base_prior.shape())?;
    let estimate = if config.enabled {
        estimate_kernel(y, config)?
    } else {
        None
    };
    let (prior, recentred) = match estimate {
        Some(k) => (base_prior.recentred(k.into_grid())?, true),
        None => (base_prior.clone(), false),
    };
    Ok(ConditionedKernelPrior {
        measurement: y.clone(),
        prior,
        recentred,
    })
}

impl DenoisingPosteriorSampler for ConditionedKernelPrior {
    fn sample(&self, noisy: &Grid, rho: f64, rng: &mut RngState) -> Result<Grid> {
        self.prior.sample(noisy, rho, rng)
    }
}

impl MeasurementConditionedSampler for ConditionedKernelPrior {
    fn measurement(&self) -> &Grid {
        &self.measurement
    }

    fn prior_center(&self) -> Option<&Grid> {
        Some(self.prior.mean())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::draw_standard_normal;

    fn delta_prior(n: usize) -> GaussianPrior {
        GaussianPrior::white(Kernel::delta(n, n).into_grid(), 1e-4).unwrap()
    }

    #[test]
    fn pure_noise_falls_back_to_base_mean() {
        let y = draw_standard_normal(&mut RngState::new(1), 32, 32);
        let s = conditioned_kernel_sampler(&y, &RecentringConfig::default(), &delta_prior(32))
            .unwrap();
        assert!(!s.is_recentred());
        assert_eq!(s.prior_center().unwrap(), Kernel::delta(32, 32).grid());
    }

    #[test]
    fn disabled_recentring_keeps_base() {
        let y = Grid::from_fn(16, 16, |r, c| ((r + c) as f64 * 0.3).sin());
        let config = RecentringConfig {
            enabled: false,
            ..Default::default()
        };
        let s = conditioned_kernel_sampler(&y, &config, &delta_prior(16)).unwrap();
        assert!(!s.is_recentred());
    }

    #[test]
    fn tiny_rho_returns_input() {
        let y = Grid::from_fn(16, 16, |r, c| ((r * c) as f64 * 0.1).cos());
        let s = conditioned_kernel_sampler(&y, &RecentringConfig::default(), &delta_prior(16))
            .unwrap();
        let m = draw_standard_normal(&mut RngState::new(2), 16, 16);
        let out = s.sample(&m, 1e-9, &mut RngState::new(3)).unwrap();
        assert!(out.distance(&m).unwrap() <= 1e-5 * m.norm());
    }

    #[test]
    fn estimates_are_physical() {
        let y = Grid::from_fn(16, 16, |r, c| ((r * 3 + c) as f64 * 0.2).sin() + 1.0);
        for proxy in [
            RecentringProxy::Measurement,
            RecentringProxy::Smoothed { sigma: 1.5 },
            RecentringProxy::PowerSpectrum {
                spectral_variance: crate::prior::power_law_spectrum(16, 16, 2.0),
            },
        ] {
            let config = RecentringConfig {
                proxy,
                support: Some((5, 5)),
                flatness_threshold: 1.1,
                ..Default::default()
            };
            let k = estimate_kernel(&y, &config).unwrap().unwrap();
            assert!(k.is_normalized());
            assert!(k.grid().min() >= 0.0);
            assert!((k.grid().sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flatness_of_constant_spectrum_is_one() {
        assert!((spectral_flatness(&[2.0; 10]) - 1.0).abs() < 1e-12);
        assert!(spectral_flatness(&[1.0, 0.0, 0.0, 0.0]) < 1e-10);
    }
}
