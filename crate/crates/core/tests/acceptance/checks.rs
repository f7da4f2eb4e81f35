use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::Instant;

use prism_core::analysis::{
    kernel_rmse, posterior_stats, psnr, ssim, PosteriorAccumulator, SD_FLOOR,
};
use prism_core::datagen::{make_instance, ImageSource, KernelParams};
use prism_core::grid::draw_standard_normal;
use prism_core::prior::bridge::serve;
use prism_core::prior::{
    bridge_sampler, conditioned_kernel_sampler, DenoisingPosteriorSampler, GaussianPrior,
    RecentringConfig,
};
use prism_core::sampler::{
    resume_chain, run_chain, AnnealingSchedule, ChainConfig, ChainModel, CheckpointPolicy,
    EstimationMode, GaussianLikelihood, RunOptions,
};
use prism_core::{Grid, Kernel, PrismError, RngState};
use rand::{Rng, RngCore};

use super::Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn uq_calibration() -> Verdict {
    let s = 0.04;
    let draws = 100_000;
    let (h, w) = (32, 32);
    let mut rng = RngState::new(6);
    let centre = draw_standard_normal(&mut rng, h, w).map(|v| 0.5 + 0.1 * v);
    let mut acc = PosteriorAccumulator::new(h, w);
    for _ in 0..draws {
        let e = draw_standard_normal(&mut rng, h, w);
        acc.push(&centre.zip_map(&e, |c, e| c + s * e).unwrap())
            .unwrap();
    }
    let log_term = 0.5 * (2.0 * PI * s * s).ln();

    // Truth at the sampling centre: the error term vanishes.
    let centred = acc.finish(&centre, SD_FLOOR).unwrap();
    let centred_err = (centred.nll - log_term).abs() / log_term.abs();

    // Truth drawn from the same predictive distribution: the error term
    // contributes its expectation, 1/2.
    let truth = centre
        .zip_map(&draw_standard_normal(&mut rng, h, w), |c, e| c + s * e)
        .unwrap();
    let calibrated = acc.finish(&truth, SD_FLOOR).unwrap();
    let expected = log_term + 0.5;
    let calibrated_err = (calibrated.nll - expected).abs() / expected.abs();

    // Closed-form cases.
    let flat = Grid::filled(4, 4, 0.3);
    let degenerate = posterior_stats(&[flat.clone(), flat.clone(), flat.clone()], &flat).unwrap();
    let degenerate_ok = degenerate.sd.data().iter().all(|&v| v == SD_FLOOR)
        && (degenerate.nll - 0.5 * (2.0 * PI * SD_FLOOR * SD_FLOOR).ln()).abs() < 1e-12
        && degenerate.coverage3sd == 1.0;
    let two = posterior_stats(
        &[Grid::zeros(4, 4), Grid::filled(4, 4, 1.0)],
        &Grid::filled(4, 4, 0.5),
    )
    .unwrap();
    let two_ok = two.mean.data().iter().all(|&v| v == 0.5)
        && two.sd.data().iter().all(|&v| v == 0.5)
        && (two.nll - 0.5 * (2.0 * PI * 0.25).ln()).abs() < 1e-12;

    let coverage_ok = |c: f64| (0.995..=1.0).contains(&c);
    let detail = format!(
        "centred truth: NLL {:.4} vs {log_term:.4} ({:.2}% off), coverage {:.4}; \
         calibrated truth: NLL {:.4} vs {expected:.4} ({:.2}% off), coverage {:.4}; \
         degenerate case {}, two-point case {}",
        centred.nll,
        100.0 * centred_err,
        centred.coverage3sd,
        calibrated.nll,
        100.0 * calibrated_err,
        calibrated.coverage3sd,
        if degenerate_ok { "exact" } else { "WRONG" },
        if two_ok { "exact" } else { "WRONG" },
    );
    verdict(
        centred_err <= 0.02
            && calibrated_err <= 0.02
            && coverage_ok(centred.coverage3sd)
            && coverage_ok(calibrated.coverage3sd)
            && degenerate_ok
            && two_ok,
        detail,
    )
}

pub fn metrics() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let mut rng = RngState::new(8);
    let a = Grid::from_fn(32, 32, |_, _| rng.random::<f64>());

    check("psnr a=a", psnr(&a, &a, 1.0).unwrap() == f64::INFINITY);
    check(
        "psnr 0 dB",
        psnr(&Grid::zeros(8, 8), &Grid::filled(8, 8, 1.0), 1.0).unwrap() == 0.0,
    );
    check(
        "psnr 20 dB",
        (psnr(&Grid::zeros(8, 8), &Grid::filled(8, 8, 0.1), 1.0).unwrap() - 20.0).abs() < 1e-12,
    );
    check(
        "psnr shape",
        matches!(
            psnr(&Grid::zeros(8, 8), &Grid::zeros(8, 9), 1.0),
            Err(PrismError::ShapeMismatch { .. })
        ),
    );

    check("ssim a=a", (ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
    let inverted = a.map(|v| 1.0 - v);
    check("ssim 1-a", ssim(&a, &inverted, 1.0).unwrap() < 0.5);
    let b = Grid::from_fn(32, 32, |_, _| rng.random::<f64>());
    check(
        "ssim symmetry",
        (ssim(&a, &b, 1.0).unwrap() - ssim(&b, &a, 1.0).unwrap()).abs() < 1e-12,
    );
    let (ma, mb) = (0.3, 0.7);
    let c1 = 0.01f64.powi(2);
    let closed = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    check(
        "ssim constants",
        (ssim(&Grid::filled(16, 16, ma), &Grid::filled(16, 16, mb), 1.0).unwrap() - closed).abs()
            < 1e-12,
    );
    check(
        "ssim too small",
        matches!(
            ssim(&Grid::zeros(10, 10), &Grid::zeros(10, 10), 1.0),
            Err(PrismError::TooSmall { .. })
        ),
    );

    let delta = Kernel::delta(64, 64);
    check("rmse identical", kernel_rmse(&delta, &delta).unwrap() == 0.0);
    let shifted = Kernel::new(Grid::impulse(64, 64, 0, 1));
    check(
        "rmse shifted delta",
        (kernel_rmse(&delta, &shifted).unwrap() - (2.0f64 / 4096.0).sqrt()).abs() < 1e-15,
    );
    let k1 = Kernel::new(Grid::from_fn(9, 9, |_, _| rng.random::<f64>()));
    let k2 = Kernel::new(Grid::from_fn(9, 9, |_, _| rng.random::<f64>()));
    let mut sq = 0.0;
    for r in 0..9 {
        for c in 0..9 {
            sq += (k1.grid()[(r, c)] - k2.grid()[(r, c)]).powi(2);
        }
    }
    check(
        "rmse loop oracle",
        (kernel_rmse(&k1, &k2).unwrap() - (sq / 81.0).sqrt()).abs() < 1e-12,
    );

    if failures.is_empty() {
        Ok("PSNR, SSIM and kernel RMSE cases all exact".into())
    } else {
        Err(format!("failed: {}", failures.join(", ")))
    }
}

pub fn determinism() -> Verdict {
    let inst = make_instance(
        ImageSource::Texture {
            height: 32,
            width: 32,
            slope: 2.0,
        },
        KernelParams {
            support: 5,
            intensity: 0.5,
        },
        0.02,
        42,
    )
    .unwrap();
    let image_prior = GaussianPrior::power_law(Grid::filled(32, 32, 0.5), 2.0, 0.157).unwrap();
    let base = GaussianPrior::white(Kernel::delta(32, 32).into_grid(), 1e-3).unwrap();
    let kernel_prior =
        conditioned_kernel_sampler(&inst.y, &RecentringConfig::default(), &base).unwrap();
    let likelihood = GaussianLikelihood { sigma_y: 0.02 };
    let model = ChainModel {
        kernel_prior: &kernel_prior,
        image_prior: &image_prior,
        likelihood: &likelihood,
        y: &inst.y,
    };
    let mut config = ChainConfig::new(200, 3).unwrap();
    config.kernel_support = Some((5, 5));
    config.mode = EstimationMode::PosteriorMean { count: 20 };
    config.thin = 5;
    config.burn_in = 200 - 5 * 19 - 1;

    let reference = RunOptions {
        reference: Some(&inst.truth_x),
        ..RunOptions::default()
    };
    let first = run_chain(&config, &model, &reference).unwrap();
    let second = run_chain(&config, &model, &reference).unwrap();
    let repeat_ok = first == second;

    let dir = tempfile::tempdir().unwrap();
    let mut resumes = Vec::new();
    for stop in [1, 57, 150, 199] {
        let ckpt = dir.path().join(format!("stop{stop}"));
        let interrupted = RunOptions {
            checkpoint: Some(CheckpointPolicy {
                dir: ckpt.clone(),
                every: 25,
            }),
            interrupt_after: Some(stop),
            ..reference.clone()
        };
        let halted = matches!(
            run_chain(&config, &model, &interrupted),
            Err(PrismError::ChainHalted { k, .. }) if k == stop
        );
        let resumed = resume_chain(&ckpt, &config, &model, &reference).unwrap();
        resumes.push(halted && resumed == first);
    }
    let resume_ok = resumes.iter().all(|&ok| ok);
    let detail = format!(
        "repeat run {}, resume after 1/57/150/199 iterations {:?}",
        if repeat_ok { "bit-identical" } else { "DIFFERS" },
        resumes
    );
    verdict(repeat_ok && resume_ok, detail)
}

pub fn schedule_law() -> Verdict {
    let mut rng = RngState::new(9);
    let mut worst_formula = 0.0f64;
    let mut monotone = true;
    let mut endpoints = true;
    for _ in 0..100 {
        let rho_max = 10f64.powf(rng.random_range(-3.0..1.0));
        let rho_min = rho_max * 10f64.powf(-rng.random_range(0.05..4.0));
        let k = rng.random_range(2..=5000usize);
        let s = AnnealingSchedule::exponential(rho_max, rho_min, k).unwrap();
        let v = s.values();
        endpoints &= v.len() == k && v[0] == rho_max && v[k - 1] == rho_min;
        for (i, &rho) in v.iter().enumerate() {
            let t = i as f64 / (k - 1) as f64;
            let expected = ((1.0 - t) * rho_max.ln() + t * rho_min.ln()).exp();
            worst_formula = worst_formula.max((rho - expected).abs() / expected);
        }
        monotone &= v.windows(2).all(|p| p[1] < p[0]);
    }
    let detail = format!(
        "100 random (rho_max, rho_min, K), max relative deviation {worst_formula:.2e} (tol 1e-12), \
         strictly decreasing {monotone}, exact endpoints {endpoints}"
    );
    verdict(worst_formula <= 1e-12 && monotone && endpoints, detail)
}

struct Echo;

impl DenoisingPosteriorSampler for Echo {
    fn sample(&self, noisy: &Grid, _rho: f64, _rng: &mut RngState) -> prism_core::Result<Grid> {
        Ok(noisy.clone())
    }
}

fn with_responder<T>(
    dir: &std::path::Path,
    sampler: &dyn DenoisingPosteriorSampler,
    body: impl FnOnce() -> T,
) -> T {
    let stop = AtomicBool::new(false);
    thread::scope(|s| {
        let handle = s.spawn(|| serve(dir, sampler, &stop));
        let out = body();
        stop.store(true, Ordering::Relaxed);
        handle.join().unwrap().unwrap();
        out
    })
}

pub fn bridge() -> Verdict {
    let (h, w) = (16, 16);

    let dir = tempfile::tempdir().unwrap();
    let client = bridge_sampler(dir.path(), 10.0).unwrap();
    let v = draw_standard_normal(&mut RngState::new(1), h, w);
    let echoed = with_responder(dir.path(), &Echo, || {
        client.sample(&v, 0.2, &mut RngState::new(2)).unwrap()
    });
    let loopback_ok = echoed == v;

    let dir = tempfile::tempdir().unwrap();
    let client = bridge_sampler(dir.path(), 10.0).unwrap();
    let prior = GaussianPrior::power_law(Grid::filled(h, w, 0.5), 2.0, 0.2).unwrap();
    let inputs: Vec<Grid> = (0..50)
        .map(|i| draw_standard_normal(&mut RngState::new(100 + i), h, w))
        .collect();
    let mut rng_bridge = RngState::new(3);
    let bridged: Vec<Grid> = with_responder(dir.path(), &prior, || {
        inputs
            .iter()
            .map(|v| client.sample(v, 0.1, &mut rng_bridge).unwrap())
            .collect()
    });
    let mut rng_local = RngState::new(3);
    let gaussian_ok = inputs.iter().zip(&bridged).all(|(v, b)| {
        let seed = rng_local.next_u64();
        prior.sample(v, 0.1, &mut RngState::new(seed)).unwrap() == *b
    });

    let dir = tempfile::tempdir().unwrap();
    let timeout = 1.0;
    let client = bridge_sampler(dir.path(), timeout).unwrap();
    let start = Instant::now();
    let result = client.sample(&v, 0.1, &mut RngState::new(0));
    let elapsed = start.elapsed().as_secs_f64();
    let timeout_ok = matches!(result, Err(PrismError::BridgeTimeout { .. }))
        && (elapsed - timeout).abs() <= 0.1 * timeout;

    let detail = format!(
        "loopback {}, Gaussian responder {} over 50 requests, dead endpoint timed out after \
         {elapsed:.3}s (configured {timeout}s, tolerance 10%)",
        if loopback_ok { "identical" } else { "DIFFERS" },
        if gaussian_ok {
            "bit-identical to in-process draws"
        } else {
            "DIFFERS from in-process draws"
        },
    );
    verdict(loopback_ok && gaussian_ok && timeout_ok, detail)
}
