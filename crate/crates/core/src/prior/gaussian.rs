use super::DenoisingPosteriorSampler;
use crate::error::{check_scale, PrismError, Result};
use crate::grid::{fft2, signed_frequency, Grid, RngState, SpectralGrid};
use crate::likelihood::GaussianConditional;

/// Unnormalized power spectrum `(1 + |f|)^(−slope)` over the DFT grid, with
/// `|f|` measured in signed integer frequency units.
pub fn power_law_spectrum(height: usize, width: usize, slope: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(height * width);
    for u in 0..height {
        let fu = signed_frequency(u, height) as f64;
        for v in 0..width {
            let fv = signed_frequency(v, width) as f64;
            out.push((1.0 + (fu * fu + fv * fv).sqrt()).powf(-slope));
        }
    }
    out
}

/// Stationary Gaussian prior `N(mean, F⁻¹ diag(s) F)`: the unitary Fourier
/// coefficients of `u − mean` are independent with variances `s(f)`.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: Grid,
    spectral_variance: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Grid, spectral_variance: Vec<f64>) -> Result<Self> {
        if spectral_variance.len() != mean.len() {
            return Err(PrismError::InvalidGrid(format!(
                "{} spectral variances for a {:?} grid",
                spectral_variance.len(),
                mean.shape()
            )));
        }
        for &s in &spectral_variance {
            check_scale("spectral_variance", s)?;
        }
        Ok(Self {
            mean,
            spectral_variance,
        })
    }

    /// i.i.d. pixels with variance `pixel_variance` around `mean`.
    pub fn white(mean: Grid, pixel_variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, vec![pixel_variance; n])
    }

    /// Power-law texture prior scaled so each pixel has standard deviation
    /// `pixel_sd`.
    pub fn power_law(mean: Grid, slope: f64, pixel_sd: f64) -> Result<Self> {
        check_scale("pixel_sd", pixel_sd)?;
        let (h, w) = mean.shape();
        let mut s = power_law_spectrum(h, w, slope);
        // Per-pixel variance is the average spectral variance.
        let avg = s.iter().sum::<f64>() / s.len() as f64;
        let scale = pixel_sd * pixel_sd / avg;
        s.iter_mut().for_each(|v| *v *= scale);
        Self::new(mean, s)
    }

    pub fn mean(&self) -> &Grid {
        &self.mean
    }

    pub fn spectral_variance(&self) -> &[f64] {
        &self.spectral_variance
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mean.shape()
    }

    /// Same covariance, different centre.
    pub fn recentred(&self, mean: Grid) -> Result<Self> {
        mean.ensure_shape(self.shape())?;
        Ok(Self {
            mean,
            spectral_variance: self.spectral_variance.clone(),
        })
    }

    /// Conjugate posterior given `v = u + ρ n`: precision `1/s + 1/ρ²` per
    /// frequency, mean blending the prior mean and `v`.
    pub fn posterior(&self, noisy: &Grid, rho: f64) -> Result<GaussianConditional> {
        let rho = check_scale("rho", rho)?;
        noisy.ensure_shape(self.shape())?;
        let inv_coupling = 1.0 / (rho * rho);
        let m_hat = fft2(&self.mean);
        let v_hat = fft2(noisy);
        let mut precision = Vec::with_capacity(noisy.len());
        let mut mean = Vec::with_capacity(noisy.len());
        for ((s, m), v) in self
            .spectral_variance
            .iter()
            .zip(m_hat.coeffs())
            .zip(v_hat.coeffs())
        {
            let d = 1.0 / s + inv_coupling;
            precision.push(d);
            mean.push((m / s + v * inv_coupling) / d);
        }
        let (h, w) = self.shape();
        GaussianConditional::from_spectra(precision, SpectralGrid::new(h, w, mean)?)
    }

    /// Draws from the prior itself.
    pub fn sample_prior(&self, rng: &mut RngState) -> Result<Grid> {
        let precision = self.spectral_variance.iter().map(|s| 1.0 / s).collect();
        GaussianConditional::from_spectra(precision, fft2(&self.mean))?.sample(rng)
    }
}

/// Exact draw from the denoising posterior of a [`GaussianPrior`].
pub fn gaussian_denoise_sample(
    prior: &GaussianPrior,
    noisy: &Grid,
    rho: f64,
    rng: &mut RngState,
) -> Result<Grid> {
    prior.posterior(noisy, rho)?.sample(rng)
}

impl DenoisingPosteriorSampler for GaussianPrior {
    fn sample(&self, noisy: &Grid, rho: f64, rng: &mut RngState) -> Result<Grid> {
        gaussian_denoise_sample(self, noisy, rho, rng)
    }
}
