//! The 2D real array shared by every stage, plus its Fourier transform,
//! random source and on-disk format.

mod fft;
pub mod pgrd;
mod rng;

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{PrismError, Result};

pub use fft::{fft2, ifft2, signed_frequency};
pub use rng::{draw_standard_normal, RngState};

/// Row-major 2D grid of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    /// Builds a grid from row-major data, rejecting empty shapes, length
    /// mismatches and non-finite entries.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(PrismError::InvalidGrid(format!(
                "shape {height}x{width} must be positive"
            )));
        }
        if data.len() != height * width {
            return Err(PrismError::InvalidGrid(format!(
                "{} values for a {height}x{width} grid",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(PrismError::InvalidGrid(format!(
                "non-finite value at index {pos}"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Grid filled with `value`. Panics on an empty shape.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "grid shape must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    /// Unit impulse at `(row, col)`.
    pub fn impulse(height: usize, width: usize, row: usize, col: usize) -> Self {
        let mut g = Self::zeros(height, width);
        g[(row % height, col % width)] = 1.0;
        g
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "grid shape must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Crate-internal constructor for data produced by trusted arithmetic.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() == shape {
            Ok(())
        } else {
            Err(PrismError::ShapeMismatch {
                expected: shape,
                actual: self.shape(),
            })
        }
    }

    pub fn ensure_same_shape(&self, other: &Grid) -> Result<()> {
        other.ensure_shape(self.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid::from_raw(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Element-wise combination; shapes must already agree.
    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_same_shape(other)?;
        Ok(Grid::from_raw(
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scaled(&self, factor: f64) -> Grid {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &Grid) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance `‖self − other‖₂`.
    pub fn distance(&self, other: &Grid) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Circular shift so that entry `(r, c)` moves to `(r + dr, c + dc)`.
    pub fn rolled(&self, dr: isize, dc: isize) -> Grid {
        let (h, w) = (self.height as isize, self.width as isize);
        Grid::from_fn(self.height, self.width, |r, c| {
            let sr = (r as isize - dr).rem_euclid(h) as usize;
            let sc = (c as isize - dc).rem_euclid(w) as usize;
            self[(sr, sc)]
        })
    }

    /// Moves the origin to the grid centre (for display of origin-centred kernels).
    pub fn fftshift(&self) -> Grid {
        self.rolled((self.height / 2) as isize, (self.width / 2) as isize)
    }
}

impl Index<(usize, usize)> for Grid {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.width + c]
    }
}

impl IndexMut<(usize, usize)> for Grid {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.width + c]
    }
}

/// Fourier coefficients of a grid under the unitary 2D DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    height: usize,
    width: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralGrid {
    pub fn new(height: usize, width: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 || coeffs.len() != height * width {
            return Err(PrismError::InvalidGrid(format!(
                "{} coefficients for a {height}x{width} spectrum",
                coeffs.len()
            )));
        }
        Ok(Self {
            height,
            width,
            coeffs,
        })
    }

    pub(crate) fn from_raw(height: usize, width: usize, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), height * width);
        Self {
            height,
            width,
            coeffs,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.coeffs[u * self.width + v]
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest deviation from `X(u, v) = conj(X(−u, −v))`.
    pub fn hermitian_defect(&self) -> f64 {
        let (h, w) = self.shape();
        let mut worst: f64 = 0.0;
        for u in 0..h {
            for v in 0..w {
                let mirror = self.get((h - u) % h, (w - v) % w).conj();
                worst = worst.max((self.get(u, v) - mirror).norm());
            }
        }
        worst
    }
}
