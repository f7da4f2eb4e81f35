//! Exact samplers for the two Gaussian likelihood conditionals.
//!
//! Both conditionals have the form
//!
//! ```text
//! Σ⁻¹ = AᵀA / σ_y² + I / ρ²,    μ = Σ (Aᵀy / σ_y² + a / ρ²)
//! ```
//!
//! where `A` is circulant (`H_φ` for the image step, `C_x` for the kernel
//! step) and `a` is the coupled point (`x` or `φ`). The DFT diagonalizes
//! `Σ⁻¹` into `d(f) = |λ(f)|²/σ_y² + 1/ρ²`, so the mean is a per-frequency
//! division and a draw is `μ + F⁻¹(F(w) / √d)` for white `w`.
//!
//! [`dense_oracle`] materializes the same system as dense matrices for
//! cross-checking on small grids.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_scale, PrismError, Result};
use crate::forward::{transfer_function, ForwardModel, Kernel};
use crate::grid::{draw_standard_normal, fft2, ifft2, Grid, RngState, SpectralGrid};

/// Gaussian with circulant covariance, stored in the Fourier domain.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    precision: Vec<f64>,
    mean_spectrum: SpectralGrid,
}

impl GaussianConditional {
    /// Builds from per-frequency precisions `d(f)` and the unitary spectrum
    /// of the mean.
    pub fn from_spectra(precision: Vec<f64>, mean_spectrum: SpectralGrid) -> Result<Self> {
        let n = mean_spectrum.coeffs().len();
        if precision.len() != n {
            return Err(PrismError::InvalidGrid(format!(
                "{} precisions for {n} frequencies",
                precision.len()
            )));
        }
        if let Some(&bad) = precision.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(PrismError::DegenerateScale {
                name: "precision",
                value: bad,
            });
        }
        Ok(Self {
            precision,
            mean_spectrum,
        })
    }

    /// `N(mean, ρ² I)`.
    pub fn isotropic(mean: &Grid, rho: f64) -> Result<Self> {
        let rho = check_scale("rho", rho)?;
        Self::from_spectra(vec![1.0 / (rho * rho); mean.len()], fft2(mean))
    }

    /// Conditional for `u` given `y = A u + σ_y n` and the coupling
    /// `‖u − anchor‖²/(2ρ²)`, where `transfer` holds the eigenvalues of `A`.
    pub fn from_operator(
        transfer: &SpectralGrid,
        y: &Grid,
        anchor: &Grid,
        rho: f64,
        sigma_y: f64,
    ) -> Result<Self> {
        let rho = check_scale("rho", rho)?;
        let sigma_y = check_scale("sigma_y", sigma_y)?;
        y.ensure_shape(transfer.shape())?;
        anchor.ensure_shape(transfer.shape())?;

        let inv_noise = 1.0 / (sigma_y * sigma_y);
        let inv_coupling = 1.0 / (rho * rho);
        let y_hat = fft2(y);
        let a_hat = fft2(anchor);

        let mut precision = Vec::with_capacity(y.len());
        let mut mean = Vec::with_capacity(y.len());
        for ((lambda, yh), ah) in transfer
            .coeffs()
            .iter()
            .zip(y_hat.coeffs())
            .zip(a_hat.coeffs())
        {
            let d = lambda.norm_sqr() * inv_noise + inv_coupling;
            precision.push(d);
            mean.push((lambda.conj() * yh * inv_noise + ah * inv_coupling) / d);
        }
        let (h, w) = y.shape();
        Self::from_spectra(precision, SpectralGrid::from_raw(h, w, mean))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mean_spectrum.shape()
    }

    /// Per-frequency precision `d(f)`.
    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    pub fn mean_spectrum(&self) -> &SpectralGrid {
        &self.mean_spectrum
    }

    pub fn mean(&self) -> Result<Grid> {
        ifft2(&self.mean_spectrum)
    }

    /// One exact draw by spectral whitening.
    pub fn sample(&self, rng: &mut RngState) -> Result<Grid> {
        let (h, w) = self.shape();
        let mut s = fft2(&draw_standard_normal(rng, h, w));
        for ((c, mu), d) in s
            .coeffs_mut()
            .iter_mut()
            .zip(self.mean_spectrum.coeffs())
            .zip(&self.precision)
        {
            *c = mu + *c / d.sqrt();
        }
        ifft2(&s)
    }
}

/// Image likelihood conditional `p(z | y, φ, x)` at coupling `ρ_x`.
pub fn build_image_conditional(
    model: &ForwardModel,
    y: &Grid,
    x: &Grid,
    rho_x: f64,
) -> Result<GaussianConditional> {
    GaussianConditional::from_operator(model.transfer(), y, x, rho_x, model.noise_sigma())
}

/// Kernel likelihood conditional `p(m | y, φ, x)` at coupling `ρ_φ`: the
/// image step with `x` in the kernel's role.
pub fn build_kernel_conditional(
    x: &Grid,
    y: &Grid,
    phi: &Kernel,
    rho_phi: f64,
    sigma_y: f64,
) -> Result<GaussianConditional> {
    x.ensure_same_shape(phi.grid())?;
    GaussianConditional::from_operator(&transfer_function(x), y, phi.grid(), rho_phi, sigma_y)
}

/// Largest problem [`dense_oracle`] will materialize.
pub const DENSE_ORACLE_MAX: usize = 144;

/// Mean and covariance of a likelihood conditional by dense linear algebra.
#[derive(Debug, Clone)]
pub struct DenseGaussian {
    pub mean: Grid,
    /// Row-major pixel ordering, matching [`Grid::data`].
    pub covariance: DMatrix<f64>,
}

/// Dense circulant matrix of "convolve with `g`".
pub fn convolution_matrix(g: &Grid) -> DMatrix<f64> {
    let (h, w) = g.shape();
    let n = h * w;
    DMatrix::from_fn(n, n, |i, j| {
        let (r, c) = (i / w, i % w);
        let (rr, cc) = (j / w, j % w);
        g[((r + h - rr) % h, (c + w - cc) % w)]
    })
}

/// Materializes `A` (convolution with `operator`), forms the precision
/// `AᵀA/σ_y² + I/ρ²`, and solves for mean and covariance by Cholesky.
///
/// Pass the kernel grid for the image step or the image for the kernel step.
pub fn dense_oracle(
    operator: &Grid,
    y: &Grid,
    anchor: &Grid,
    rho: f64,
    sigma_y: f64,
) -> Result<DenseGaussian> {
    let n = operator.len();
    if n > DENSE_ORACLE_MAX {
        return Err(PrismError::TooLarge(n));
    }
    let rho = check_scale("rho", rho)?;
    let sigma_y = check_scale("sigma_y", sigma_y)?;
    y.ensure_same_shape(operator)?;
    anchor.ensure_same_shape(operator)?;

    let a = convolution_matrix(operator);
    let precision = a.transpose() * &a / (sigma_y * sigma_y)
        + DMatrix::identity(n, n) / (rho * rho);
    let rhs = a.transpose() * DVector::from_column_slice(y.data()) / (sigma_y * sigma_y)
        + DVector::from_column_slice(anchor.data()) / (rho * rho);
    let chol = precision
        .cholesky()
        .ok_or_else(|| PrismError::InvalidGrid("precision is not positive definite".into()))?;
    let mean = chol.solve(&rhs);
    let (h, w) = operator.shape();
    Ok(DenseGaussian {
        mean: Grid::new(h, w, mean.as_slice().to_vec())?,
        covariance: chol.inverse(),
    })
}
