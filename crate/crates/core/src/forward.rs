//! Circular convolution `H_φ x = φ ⊛ x`, its adjoint and Fourier
//! diagonalization.
//!
//! Kernels live on the full image grid with their centre at the origin
//! (index `(0, 0)`) and wrap-around, so both `H_φ` and the role-swapped
//! operator `C_x` (with `H_m x = C_x m`) are circulant.

use num_complex::Complex64;

use crate::error::{PrismError, Result};
use crate::grid::{draw_standard_normal, fft2, ifft2, Grid, RngState, SpectralGrid};

/// Blur kernel embedded on the image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    grid: Grid,
    support: Option<(usize, usize)>,
    normalized: bool,
}

impl Kernel {
    /// Wraps an arbitrary grid; no physicality is assumed.
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            support: None,
            normalized: false,
        }
    }

    /// Identity kernel (unit mass at the origin).
    pub fn delta(height: usize, width: usize) -> Self {
        Self {
            grid: Grid::impulse(height, width, 0, 0),
            support: Some((1, 1)),
            normalized: true,
        }
    }

    /// Embeds a small `ph × pw` patch so its centre pixel `(ph/2, pw/2)`
    /// lands on the origin of a `height × width` grid.
    pub fn from_patch(patch: &Grid, height: usize, width: usize) -> Result<Self> {
        let (ph, pw) = patch.shape();
        if ph > height || pw > width {
            return Err(PrismError::ShapeMismatch {
                expected: (height, width),
                actual: (ph, pw),
            });
        }
        let mut grid = Grid::zeros(height, width);
        for r in 0..ph {
            for c in 0..pw {
                let gr = (r as isize - (ph / 2) as isize).rem_euclid(height as isize) as usize;
                let gc = (c as isize - (pw / 2) as isize).rem_euclid(width as isize) as usize;
                grid[(gr, gc)] = patch[(r, c)];
            }
        }
        Ok(Self {
            grid,
            support: Some((ph, pw)),
            normalized: false,
        })
    }

    /// Inverse of [`Kernel::from_patch`]: the centred `ph × pw` window.
    pub fn patch(&self, ph: usize, pw: usize) -> Grid {
        let (h, w) = self.grid.shape();
        Grid::from_fn(ph.min(h), pw.min(w), |r, c| {
            let gr = (r as isize - (ph / 2) as isize).rem_euclid(h as isize) as usize;
            let gc = (c as isize - (pw / 2) as isize).rem_euclid(w as isize) as usize;
            self.grid[(gr, gc)]
        })
    }

    pub fn with_support(mut self, support: Option<(usize, usize)>) -> Self {
        self.support = support;
        self
    }

    /// Flags the kernel as physical after checking nonnegativity and unit mass.
    pub fn into_normalized(mut self) -> Result<Self> {
        let sum = self.grid.sum();
        if self.grid.min() < 0.0 || (sum - 1.0).abs() > 1e-9 {
            return Err(PrismError::InvalidGrid(format!(
                "kernel is not normalized (min {}, sum {sum})",
                self.grid.min()
            )));
        }
        self.normalized = true;
        Ok(self)
    }

    pub(crate) fn from_parts(grid: Grid, support: Option<(usize, usize)>, normalized: bool) -> Self {
        Self {
            grid,
            support,
            normalized,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    pub fn support(&self) -> Option<(usize, usize)> {
        self.support
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

/// Eigenvalues of the circulant operator "convolve with `g`": the
/// unnormalized DFT of `g`, i.e. `√(HW) · fft2(g)`.
pub fn transfer_function(g: &Grid) -> SpectralGrid {
    let scale = (g.len() as f64).sqrt();
    let mut s = fft2(g);
    s.coeffs_mut().iter_mut().for_each(|c| *c *= scale);
    s
}

fn apply_transfer(transfer: &[Complex64], x: &Grid, conjugate: bool) -> Result<Grid> {
    let mut xs = fft2(x);
    for (c, t) in xs.coeffs_mut().iter_mut().zip(transfer) {
        *c = if conjugate { t.conj() * *c } else { *t * *c };
    }
    ifft2(&xs)
}

/// Circular convolution `a ⊛ b` computed spectrally.
pub fn circular_convolve(a: &Grid, b: &Grid) -> Result<Grid> {
    a.ensure_same_shape(b)?;
    apply_transfer(transfer_function(a).coeffs(), b, false)
}

/// `C_x m`: convolution with the image acting as the kernel. Identical to
/// `H_m x` because convolution commutes.
pub fn commute(x: &Grid, m: &Kernel) -> Result<Grid> {
    circular_convolve(x, m.grid())
}

/// The measurement operator `H_φ` with its noise level `σ_y`.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    kernel: Kernel,
    transfer: SpectralGrid,
    noise_sigma: f64,
}

impl ForwardModel {
    pub fn new(kernel: Kernel, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(PrismError::DegenerateScale {
                name: "sigma_y",
                value: noise_sigma,
            });
        }
        let transfer = transfer_function(kernel.grid());
        Ok(Self {
            kernel,
            transfer,
            noise_sigma,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Eigenvalues of `H_φ` (see [`transfer_function`]).
    pub fn transfer(&self) -> &SpectralGrid {
        &self.transfer
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn shape(&self) -> (usize, usize) {
        self.kernel.shape()
    }

    /// `H_φ x`.
    pub fn apply(&self, x: &Grid) -> Result<Grid> {
        x.ensure_shape(self.shape())?;
        apply_transfer(self.transfer.coeffs(), x, false)
    }

    /// `H_φᵀ y`: correlation with the kernel.
    pub fn adjoint(&self, y: &Grid) -> Result<Grid> {
        y.ensure_shape(self.shape())?;
        apply_transfer(self.transfer.coeffs(), y, true)
    }

    /// `y = H_φ x + σ_y n` with `n ~ N(0, I)`. The noise draw is skipped
    /// entirely when `σ_y = 0`.
    pub fn measure(&self, x: &Grid, rng: &mut RngState) -> Result<Grid> {
        let clean = self.apply(x)?;
        if self.noise_sigma == 0.0 {
            return Ok(clean);
        }
        let (h, w) = self.shape();
        let noise = draw_standard_normal(rng, h, w);
        clean.zip_map(&noise, |a, n| a + self.noise_sigma * n)
    }
}
