use prism_core::datagen::{make_instance, ImageSource, KernelParams};
use prism_core::forward::{commute, transfer_function, ForwardModel};
use prism_core::grid::{draw_standard_normal, fft2, ifft2};
use prism_core::likelihood::{
    build_image_conditional, build_kernel_conditional, dense_oracle, GaussianConditional,
};
use prism_core::prior::{DenoisingPosteriorSampler, GaussianPrior, MeasurementConditionedSampler};
use prism_core::sampler::{
    estimate, run_chain, AnnealingSchedule, ChainConfig, ChainModel, EstimationMode,
    GaussianLikelihood, RunOptions,
};
use prism_core::{Grid, Kernel, Result, RngState, SpectralGrid};
use rand::Rng;

use super::Verdict;

fn random_kernel(rng: &mut RngState, h: usize, w: usize) -> Kernel {
    let g = draw_standard_normal(rng, h, w).map(f64::abs);
    let total = g.sum();
    Kernel::new(g.scaled(1.0 / total))
}

fn uniform(rng: &mut RngState, h: usize, w: usize) -> Grid {
    Grid::from_fn(h, w, |_, _| rng.random::<f64>())
}

/// Max entry error between the sample covariance of `draws` from `cond`
/// and `dense`.
fn covariance_error(
    cond: &GaussianConditional,
    dense: &nalgebra::DMatrix<f64>,
    draws: usize,
    rng: &mut RngState,
) -> f64 {
    let n = dense.nrows();
    let mut sum = vec![0.0; n];
    let mut outer = vec![0.0; n * (n + 1) / 2];
    for _ in 0..draws {
        let u = cond.sample(rng).unwrap();
        let d = u.data();
        let mut idx = 0;
        for i in 0..n {
            sum[i] += d[i];
            let di = d[i];
            for dj in &d[i..] {
                outer[idx] += di * dj;
                idx += 1;
            }
        }
    }
    let m = draws as f64;
    let mut worst = 0.0f64;
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let c = outer[idx] / m - sum[i] * sum[j] / (m * m);
            worst = worst.max((c - dense[(i, j)]).abs());
            idx += 1;
        }
    }
    worst
}

fn relative(a: &Grid, b: &Grid) -> f64 {
    a.distance(b).unwrap() / b.norm()
}

pub fn spectral_sampler() -> Verdict {
    let (rho, sigma) = (0.5, 0.5);
    let draws = 200_000;
    let mut rng = RngState::new(2024);
    let mut worst_mean = 0.0f64;
    let mut worst_cov = 0.0f64;
    let mut sizes = Vec::new();
    for problem in 0..10 {
        let (h, w) = if problem == 9 {
            (12, 12)
        } else {
            (rng.random_range(3..=12), rng.random_range(3..=12))
        };
        sizes.push(format!("{h}x{w}"));
        let x = uniform(&mut rng, h, w);
        let phi = random_kernel(&mut rng, h, w);
        let y = uniform(&mut rng, h, w);
        let model = ForwardModel::new(phi.clone(), sigma).unwrap();

        // Image path: operator is the kernel, anchor the current image.
        let image = build_image_conditional(&model, &y, &x, rho).unwrap();
        let image_dense = dense_oracle(phi.grid(), &y, &x, rho, sigma).unwrap();
        // Kernel path: operator is the image, anchor the current kernel.
        let kernel = build_kernel_conditional(&x, &y, &phi, rho, sigma).unwrap();
        let kernel_dense = dense_oracle(&x, &y, phi.grid(), rho, sigma).unwrap();

        for (cond, dense) in [(&image, &image_dense), (&kernel, &kernel_dense)] {
            worst_mean = worst_mean.max(relative(&cond.mean().unwrap(), &dense.mean));
            worst_cov = worst_cov.max(covariance_error(cond, &dense.covariance, draws, &mut rng));
        }
    }
    let detail = format!(
        "sizes [{}], max relative mean error {worst_mean:.2e} (tol 1e-10), \
         max covariance entry error {worst_cov:.2e} (tol 5e-3) over {draws} draws",
        sizes.join(" ")
    );
    if worst_mean <= 1e-10 && worst_cov <= 5e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn direct_convolution(kernel: &Grid, x: &Grid) -> Grid {
    let (h, w) = x.shape();
    Grid::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for i in 0..h {
            for j in 0..w {
                acc += kernel[(i, j)] * x[((r + h - i) % h, (c + w - j) % w)];
            }
        }
        acc
    })
}

pub fn commutation() -> Verdict {
    let mut rng = RngState::new(7);
    let mut worst = 0.0f64;
    let mut worst_direct = 0.0f64;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(2..=16), rng.random_range(2..=16));
        let x = uniform(&mut rng, h, w);
        let m = Kernel::new(draw_standard_normal(&mut rng, h, w));
        let hx = ForwardModel::new(m.clone(), 0.1).unwrap().apply(&x).unwrap();
        let cm = commute(&x, &m).unwrap();
        let direct = direct_convolution(m.grid(), &x);
        let diff = |a: &Grid, b: &Grid| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max)
        };
        worst = worst.max(diff(&hx, &cm));
        worst_direct = worst_direct.max(diff(&hx, &direct));
    }
    let detail = format!(
        "100 pairs, max |H_m x - C_x m| {worst:.2e}, max deviation from direct sum {worst_direct:.2e} (tol 1e-12)"
    );
    if worst <= 1e-12 && worst_direct <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Kernel prior that always returns the true kernel.
struct TruthKernel {
    kernel: Grid,
    y: Grid,
}

impl DenoisingPosteriorSampler for TruthKernel {
    fn sample(&self, _noisy: &Grid, _rho: f64, _rng: &mut RngState) -> Result<Grid> {
        Ok(self.kernel.clone())
    }
}

impl MeasurementConditionedSampler for TruthKernel {
    fn measurement(&self) -> &Grid {
        &self.y
    }
}

pub fn conjugate_chain() -> Verdict {
    let n = 32;
    let sigma = 0.05;
    let rho_x = 0.01;
    let (count, thin, burn_in) = (200, 200, 2000);
    let inst = make_instance(
        ImageSource::Texture {
            height: n,
            width: n,
            slope: 2.0,
        },
        KernelParams {
            support: 5,
            intensity: 0.5,
        },
        sigma,
        0,
    )
    .unwrap();
    let prior = GaussianPrior::power_law(Grid::filled(n, n, 0.5), 2.0, 0.157).unwrap();
    let kernel_prior = TruthKernel {
        kernel: inst.truth_kernel.grid().clone(),
        y: inst.y.clone(),
    };
    let likelihood = GaussianLikelihood { sigma_y: sigma };
    let model = ChainModel {
        kernel_prior: &kernel_prior,
        image_prior: &prior,
        likelihood: &likelihood,
        y: &inst.y,
    };
    let iterations = burn_in + thin * (count - 1) + 1;
    let mut config = ChainConfig::new(iterations, 1).unwrap();
    config.rho_x = AnnealingSchedule::constant(rho_x, iterations).unwrap();
    config.project_kernel = false;
    config.mode = EstimationMode::PosteriorMean { count };
    config.thin = thin;
    config.burn_in = burn_in;
    let out = run_chain(&config, &model, &RunOptions::default()).unwrap();
    let (sample_mean, _) = estimate(&out.samples).unwrap();

    // Closed-form posterior with the kernel known: per frequency, precision
    // 1/s + |λ|²/σ² and mean (m̂/s + conj(λ) ŷ/σ²)/precision.
    let lambda = transfer_function(inst.truth_kernel.grid());
    let y_hat = fft2(&inst.y);
    let m_hat = fft2(prior.mean());
    let mut precision = Vec::new();
    let mut mean = Vec::new();
    for (((l, y), m), s) in lambda
        .coeffs()
        .iter()
        .zip(y_hat.coeffs())
        .zip(m_hat.coeffs())
        .zip(prior.spectral_variance())
    {
        let d = 1.0 / s + l.norm_sqr() / (sigma * sigma);
        precision.push(d);
        mean.push((m / s + l.conj() * y / (sigma * sigma)) / d);
    }
    let exact = ifft2(&SpectralGrid::new(n, n, mean).unwrap()).unwrap();
    let pixel_sd = (precision.iter().map(|d| 1.0 / d).sum::<f64>() / (n * n) as f64).sqrt();
    let band = 4.0 * pixel_sd / (count as f64).sqrt();
    let inside = sample_mean
        .data()
        .iter()
        .zip(exact.data())
        .filter(|(a, b)| (*a - *b).abs() <= band)
        .count();
    let fraction = inside as f64 / (n * n) as f64;
    let detail = format!(
        "{inside}/{} pixels within 4-sigma band {band:.4} of the closed-form mean ({:.2}%, need 99%), \
         {count} samples, rho_x {rho_x}",
        n * n,
        100.0 * fraction
    );
    if fraction >= 0.99 {
        Ok(detail)
    } else {
        Err(detail)
    }
}
