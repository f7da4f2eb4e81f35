use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Grid, SpectralGrid};
use crate::error::{PrismError, Result};

/// Imaginary residue (relative to the total magnitude) tolerated by [`ifft2`].
const REALNESS_TOLERANCE: f64 = 1e-10;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Index `i` of an `n`-point DFT mapped to its signed frequency in `(-n/2, n/2]`.
pub fn signed_frequency(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Unnormalized in-place 2D transform over a row-major buffer.
fn transform(buf: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let (row_fft, col_fft) = if inverse {
            (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
        } else {
            (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
        };
        row_fft.process(buf);

        let mut column = vec![Complex64::new(0.0, 0.0); height];
        for c in 0..width {
            for r in 0..height {
                column[r] = buf[r * width + c];
            }
            col_fft.process(&mut column);
            for r in 0..height {
                buf[r * width + c] = column[r];
            }
        }
    });
}

/// Unitary 2D DFT: `X(u,v) = (HW)^{-1/2} Σ x(r,c) e^{-2πi(ur/H + vc/W)}`.
pub fn fft2(g: &Grid) -> SpectralGrid {
    let (h, w) = g.shape();
    let mut buf: Vec<Complex64> = g.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut buf, h, w, false);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    buf.iter_mut().for_each(|c| *c *= scale);
    SpectralGrid::from_raw(h, w, buf)
}

/// Inverse of [`fft2`]. Fails if the spectrum is not (numerically) Hermitian,
/// i.e. its inverse has an imaginary part above the realness tolerance.
pub fn ifft2(s: &SpectralGrid) -> Result<Grid> {
    let (h, w) = s.shape();
    let mut buf = s.coeffs().to_vec();
    transform(&mut buf, h, w, true);
    let scale = 1.0 / ((h * w) as f64).sqrt();

    let mut imag_sq = 0.0;
    let mut total_sq = 0.0;
    let data: Vec<f64> = buf
        .iter()
        .map(|c| {
            let c = c * scale;
            imag_sq += c.im * c.im;
            total_sq += c.norm_sqr();
            c.re
        })
        .collect();
    if total_sq > 0.0 {
        let residue = (imag_sq / total_sq).sqrt();
        if residue > REALNESS_TOLERANCE {
            return Err(PrismError::SymmetryViolation { residue });
        }
    }
    Ok(Grid::from_raw(h, w, data))
}
