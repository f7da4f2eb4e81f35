//! Joint posterior sampling of an image and an unknown blur kernel.
//!
//! The sampler alternates four conditional updates over an augmented
//! target with auxiliary copies of the image (`z`) and kernel (`m`):
//!
//! 1. kernel prior step: `φ ~ p(φ | m)` through a measurement-conditioned
//!    denoising-posterior sampler,
//! 2. image likelihood step: `z ~ N(μ_z, Σ_z)`, exact in the Fourier domain,
//! 3. image prior step: `x ~ p(x | z)` through a denoising-posterior sampler,
//! 4. kernel likelihood step: `m ~ N(μ_m, Σ_m)`, using `H_m x = C_x m`.
//!
//! The coupling standard deviations `ρ_x`, `ρ_φ` are annealed
//! exponentially over the run.
//!
//! Modules, bottom-up: [`grid`] (arrays, FFT, RNG, PGRD files),
//! [`forward`] (circular convolution), [`likelihood`] (Gaussian
//! conditionals), [`prior`] (denoising-posterior samplers and the external
//! bridge), [`sampler`] (the chain), [`analysis`] (metrics and UQ) and
//! [`datagen`] (synthetic problems).

pub mod analysis;
pub mod datagen;
pub mod error;
pub mod forward;
pub mod grid;
pub mod likelihood;
pub mod manifest;
pub mod prior;
pub mod sampler;

pub use error::{PrismError, Result};
pub use forward::{ForwardModel, Kernel};
pub use grid::{Grid, RngState, SpectralGrid};
