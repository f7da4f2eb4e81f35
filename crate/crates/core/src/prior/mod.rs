//! Prior steps: samplers for denoising posteriors
//! `p(u | v) ∝ p(u) · N(v; u, ρ² I)`.
//!
//! Both prior updates of the chain only ever hand a sampler a noisy point
//! and a noise level, so any denoiser that can sample this posterior plugs
//! in here: the analytic [`GaussianPrior`], the y-conditioned
//! [`ConditionedKernelPrior`], or an out-of-process model behind
//! [`BridgeSampler`].

pub mod bridge;
mod conditioned;
mod gaussian;

use crate::error::Result;
use crate::forward::Kernel;
use crate::grid::{Grid, RngState};

pub use bridge::{bridge_sampler, BridgeSampler};
pub use conditioned::{
    conditioned_kernel_sampler, estimate_kernel, spectral_flatness, ConditionedKernelPrior,
    RecentringConfig, RecentringProxy,
};
pub use gaussian::{gaussian_denoise_sample, power_law_spectrum, GaussianPrior};

/// Draws from `p(u | v) ∝ p(u) · N(v; u, ρ² I)`.
///
/// Implementations must return a grid of the input's shape and concentrate
/// on `v` as `ρ → 0`.
pub trait DenoisingPosteriorSampler: Send + Sync {
    fn sample(&self, noisy: &Grid, rho: f64, rng: &mut RngState) -> Result<Grid>;
}

/// A denoising-posterior sampler additionally conditioned on a fixed
/// measurement.
pub trait MeasurementConditionedSampler: DenoisingPosteriorSampler {
    fn measurement(&self) -> &Grid;

    /// Centre of the conditioned prior, used to seed the chain's auxiliary
    /// kernel. `None` when the sampler cannot provide one.
    fn prior_center(&self) -> Option<&Grid> {
        None
    }
}

impl<T: DenoisingPosteriorSampler + ?Sized> DenoisingPosteriorSampler for Box<T> {
    fn sample(&self, noisy: &Grid, rho: f64, rng: &mut RngState) -> Result<Grid> {
        (**self).sample(noisy, rho, rng)
    }
}

impl<T: DenoisingPosteriorSampler + ?Sized> DenoisingPosteriorSampler for &T {
    fn sample(&self, noisy: &Grid, rho: f64, rng: &mut RngState) -> Result<Grid> {
        (**self).sample(noisy, rho, rng)
    }
}

impl<T: MeasurementConditionedSampler + ?Sized> MeasurementConditionedSampler for Box<T> {
    fn measurement(&self) -> &Grid {
        (**self).measurement()
    }

    fn prior_center(&self) -> Option<&Grid> {
        (**self).prior_center()
    }
}

impl<T: MeasurementConditionedSampler + ?Sized> MeasurementConditionedSampler for &T {
    fn measurement(&self) -> &Grid {
        (**self).measurement()
    }

    fn prior_center(&self) -> Option<&Grid> {
        (**self).prior_center()
    }
}

/// Positive mass below which a projected kernel degenerates to a delta.
const MIN_KERNEL_MASS: f64 = 1e-12;

/// Clips negative entries and renormalizes to unit mass. Kernels that are
/// already nonnegative with unit sum (to 1e-12) are returned unchanged, so
/// the projection is idempotent bit for bit.
pub fn project_kernel(k: &Kernel) -> Kernel {
    let g = k.grid();
    let sum = g.sum();
    if g.min() >= 0.0 && (sum - 1.0).abs() <= 1e-12 {
        return Kernel::from_parts(g.clone(), k.support(), true);
    }
    let clipped = g.map(|v| v.max(0.0));
    let mass = clipped.sum();
    if mass < MIN_KERNEL_MASS {
        let (h, w) = k.shape();
        return Kernel::delta(h, w).with_support(k.support());
    }
    Kernel::from_parts(clipped.scaled(1.0 / mass), k.support(), true)
}

/// [`project_kernel`] after zeroing everything outside the origin-centred
/// `sh × sw` window.
pub fn project_kernel_within(k: &Kernel, support: (usize, usize)) -> Kernel {
    let (h, w) = k.shape();
    let (sh, sw) = support;
    // Same window as `Kernel::from_patch`: offsets -s/2 ..= s-1-s/2.
    let inside = |i: usize, n: usize, s: usize| {
        let d = crate::grid::signed_frequency(i, n);
        let lo = -((s / 2) as i64);
        d >= lo && d < lo + s as i64
    };
    let masked = Grid::from_fn(h, w, |r, c| {
        if inside(r, h, sh) && inside(c, w, sw) {
            k.grid()[(r, c)]
        } else {
            0.0
        }
    });
    project_kernel(&Kernel::from_parts(masked, Some(support), false))
}
