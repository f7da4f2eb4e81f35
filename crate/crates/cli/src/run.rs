use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use prism_core::analysis::{
    abs_error_map, error_to_sd_map, kernel_rmse, posterior_stats, psnr, ssim, MetricsRow,
    PosteriorStats,
};
use prism_core::datagen::ProblemInstance;
use prism_core::grid::pgrd::{self, Dtype};
use prism_core::manifest::Manifest;
use prism_core::prior::{
    bridge_sampler, conditioned_kernel_sampler, DenoisingPosteriorSampler, GaussianPrior,
    MeasurementConditionedSampler, RecentringConfig, RecentringProxy,
};
use prism_core::sampler::{
    estimate, resume_chain, run_chain, AnnealingSchedule, ChainConfig, ChainModel, ChainOutput,
    CheckpointPolicy, EstimationMode, GaussianLikelihood, RunOptions, TraceRow,
    DEFAULT_CHECKPOINT_EVERY, DEFAULT_RHO_MAX, DEFAULT_RHO_MIN,
};
use prism_core::{Grid, Kernel, PrismError};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::export::{write_kernel_png, write_png};

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Instance directory written by `simulate`.
    #[arg(long)]
    pub instance: PathBuf,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub rho_x_max: Option<f64>,
    #[arg(long)]
    pub rho_x_min: Option<f64>,
    #[arg(long)]
    pub rho_phi_max: Option<f64>,
    #[arg(long)]
    pub rho_phi_min: Option<f64>,
    /// `single` or `mean:<N>`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// `analytic` or `bridge:<dir>` (with `<dir>/image` and `<dir>/kernel`).
    #[arg(long)]
    pub prior: Option<String>,
    /// `on` or `off`.
    #[arg(long)]
    pub project_kernel: Option<String>,
    /// Measurement-conditioned recentring of the kernel prior, `on` or `off`.
    #[arg(long)]
    pub recentring: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains, seeded `seed`, `seed + 1`, ...
    #[arg(long)]
    pub trials: Option<usize>,
    /// Analytic image prior: power-law slope (defaults to the instance's).
    #[arg(long)]
    pub image_slope: Option<f64>,
    /// Analytic image prior: pixel standard deviation.
    #[arg(long)]
    pub image_sd: Option<f64>,
    /// Analytic kernel prior: per-pixel variance around its centre.
    #[arg(long)]
    pub kernel_var: Option<f64>,
    #[arg(long)]
    pub bridge_timeout: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint directory of an interrupted run with the same settings.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also write 8-bit PNG previews.
    #[arg(long)]
    pub png: bool,
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorChoice {
    Analytic,
    Bridge(PathBuf),
}

impl FromStr for PriorChoice {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "analytic" => Ok(PriorChoice::Analytic),
            _ => s
                .strip_prefix("bridge:")
                .filter(|d| !d.is_empty())
                .map(|d| PriorChoice::Bridge(PathBuf::from(d)))
                .ok_or_else(|| {
                    CliError::Input(format!("prior `{s}`: expected analytic or bridge:<dir>"))
                }),
        }
    }
}

impl std::fmt::Display for PriorChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PriorChoice::Analytic => write!(f, "analytic"),
            PriorChoice::Bridge(d) => write!(f, "bridge:{}", d.display()),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub iters: usize,
    pub rho_x_max: f64,
    pub rho_x_min: f64,
    pub rho_phi_max: f64,
    pub rho_phi_min: f64,
    pub mode: EstimationMode,
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub prior: PriorChoice,
    pub project_kernel: bool,
    pub recentring: bool,
    pub seed: u64,
    pub trials: usize,
    pub image_slope: Option<f64>,
    pub image_sd: f64,
    pub kernel_var: f64,
    pub bridge_timeout: f64,
    pub checkpoint_every: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            iters: 500,
            rho_x_max: DEFAULT_RHO_MAX,
            rho_x_min: DEFAULT_RHO_MIN,
            rho_phi_max: DEFAULT_RHO_MAX,
            rho_phi_min: DEFAULT_RHO_MIN,
            mode: EstimationMode::Single,
            burn_in: None,
            thin: 1,
            prior: PriorChoice::Analytic,
            project_kernel: true,
            recentring: true,
            seed: 0,
            trials: 1,
            image_slope: None,
            image_sd: 0.157,
            kernel_var: 1e-3,
            bridge_timeout: 60.0,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
        }
    }
}

fn on_off(key: &str, s: &str) -> CliResult<bool> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(CliError::Input(format!("{key} `{s}`: expected on or off"))),
    }
}

fn parse_value<T: FromStr>(key: &str, s: &str) -> CliResult<T> {
    s.parse()
        .map_err(|_| CliError::Input(format!("{key}: cannot parse `{s}`")))
}

impl RunSettings {
    /// Applies one `key=value` setting (keys are the flag names with `_`).
    pub fn apply(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "iters" => self.iters = parse_value(key, value)?,
            "rho_x_max" => self.rho_x_max = parse_value(key, value)?,
            "rho_x_min" => self.rho_x_min = parse_value(key, value)?,
            "rho_phi_max" => self.rho_phi_max = parse_value(key, value)?,
            "rho_phi_min" => self.rho_phi_min = parse_value(key, value)?,
            "mode" => self.mode = EstimationMode::parse(value)?,
            "burn_in" => self.burn_in = Some(parse_value(key, value)?),
            "thin" => self.thin = parse_value(key, value)?,
            "prior" => self.prior = value.parse()?,
            "project_kernel" => self.project_kernel = on_off(key, value)?,
            "recentring" => self.recentring = on_off(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "trials" => self.trials = parse_value(key, value)?,
            "image_slope" => self.image_slope = Some(parse_value(key, value)?),
            "image_sd" => self.image_sd = parse_value(key, value)?,
            "kernel_var" => self.kernel_var = parse_value(key, value)?,
            "bridge_timeout" => self.bridge_timeout = parse_value(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_value(key, value)?,
            _ => return Err(CliError::Input(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(args: &RunArgs) -> CliResult<Self> {
        let mut s = Self::default();
        if let Some(path) = &args.config {
            let file = Manifest::read(path)?;
            for (k, v) in file.entries() {
                s.apply(k, v)?;
            }
        }
        let flags: [(&str, Option<String>); 18] = [
            ("iters", args.iters.map(|v| v.to_string())),
            ("rho_x_max", args.rho_x_max.map(|v| v.to_string())),
            ("rho_x_min", args.rho_x_min.map(|v| v.to_string())),
            ("rho_phi_max", args.rho_phi_max.map(|v| v.to_string())),
            ("rho_phi_min", args.rho_phi_min.map(|v| v.to_string())),
            ("mode", args.mode.clone()),
            ("burn_in", args.burn_in.map(|v| v.to_string())),
            ("thin", args.thin.map(|v| v.to_string())),
            ("prior", args.prior.clone()),
            ("project_kernel", args.project_kernel.clone()),
            ("recentring", args.recentring.clone()),
            ("seed", args.seed.map(|v| v.to_string())),
            ("trials", args.trials.map(|v| v.to_string())),
            ("image_slope", args.image_slope.map(|v| v.to_string())),
            ("image_sd", args.image_sd.map(|v| v.to_string())),
            ("kernel_var", args.kernel_var.map(|v| v.to_string())),
            ("bridge_timeout", args.bridge_timeout.map(|v| v.to_string())),
            ("checkpoint_every", args.checkpoint_every.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.apply(k, &v)?;
            }
        }
        if s.trials == 0 {
            return Err(CliError::Input("trials must be >= 1".into()));
        }
        Ok(s)
    }

    pub fn chain_config(&self, seed: u64, support: usize) -> CliResult<ChainConfig> {
        let mut c = ChainConfig::new(self.iters, seed)?;
        c.rho_x = AnnealingSchedule::exponential(self.rho_x_max, self.rho_x_min, self.iters)?;
        c.rho_phi =
            AnnealingSchedule::exponential(self.rho_phi_max, self.rho_phi_min, self.iters)?;
        c.mode = self.mode;
        c.thin = self.thin;
        c.burn_in = match (self.burn_in, self.mode) {
            (Some(b), _) => b,
            (None, EstimationMode::PosteriorMean { count }) => self
                .iters
                .saturating_sub(self.thin * count.saturating_sub(1) + 1),
            (None, EstimationMode::Single) => self.iters.saturating_sub(20),
        };
        c.project_kernel = self.project_kernel;
        c.kernel_support = Some((support, support));
        c.validate()?;
        Ok(c)
    }
}

struct Priors {
    image: Box<dyn DenoisingPosteriorSampler>,
    kernel: Box<dyn MeasurementConditionedSampler>,
}

fn build_priors(
    settings: &RunSettings,
    inst: &ProblemInstance,
    instance_dir: &Path,
) -> CliResult<Priors> {
    let y = &inst.y;
    let (h, w) = y.shape();
    let s = inst.kernel.support;
    match &settings.prior {
        PriorChoice::Analytic => {
            let slope = settings.image_slope.or(inst.image_slope).unwrap_or(2.0);
            let image = GaussianPrior::power_law(Grid::filled(h, w, y.mean()), slope, settings.image_sd)?;
            let base = GaussianPrior::white(Kernel::delta(h, w).into_grid(), settings.kernel_var)?;
            let recentring = RecentringConfig {
                enabled: settings.recentring,
                proxy: RecentringProxy::PowerSpectrum {
                    spectral_variance: image.spectral_variance().to_vec(),
                },
                support: Some((s, s)),
                ..Default::default()
            };
            let kernel = conditioned_kernel_sampler(y, &recentring, &base)?;
            log::info!("kernel prior recentred from y: {}", kernel.is_recentred());
            Ok(Priors {
                image: Box::new(image),
                kernel: Box::new(kernel),
            })
        }
        PriorChoice::Bridge(dir) => {
            let image = bridge_sampler(dir.join("image"), settings.bridge_timeout)?;
            let kernel = bridge_sampler(dir.join("kernel"), settings.bridge_timeout)?
                .with_measurement(instance_dir.join("y.pgrd"), y.clone())?;
            Ok(Priors {
                image: Box::new(image),
                kernel: Box::new(kernel),
            })
        }
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn run_manifest(
    settings: &RunSettings,
    config: &ChainConfig,
    instance_dir: &Path,
    trial: usize,
) -> Manifest {
    let mut m = config.to_manifest();
    m.set("kind", "run")
        .set("version", env!("CARGO_PKG_VERSION"))
        .set("config_hash", config.hash())
        .set("instance", instance_dir.display())
        .set("trial", trial)
        .set("prior", &settings.prior)
        .set("recentring", settings.recentring)
        .set("image_sd", settings.image_sd)
        .set("kernel_var", settings.kernel_var);
    if let Some(slope) = settings.image_slope {
        m.set("image_slope", slope);
    }
    m
}

pub fn metrics_row(
    run_id: &str,
    mode: &str,
    x: &Grid,
    phi: &Kernel,
    inst: &ProblemInstance,
    stats: Option<&PosteriorStats>,
) -> CliResult<MetricsRow> {
    let ssim = match ssim(x, &inst.truth_x, 1.0) {
        Ok(v) => v,
        Err(PrismError::TooSmall { .. }) => f64::NAN,
        Err(e) => return Err(e.into()),
    };
    Ok(MetricsRow {
        run_id: run_id.to_string(),
        noise_sigma: inst.noise_sigma,
        mode: mode.to_string(),
        psnr: psnr(x, &inst.truth_x, 1.0)?,
        ssim,
        kernel_rmse: kernel_rmse(phi, &inst.truth_kernel)?,
        nll: stats.map(|s| s.nll),
        coverage3sd: stats.map(|s| s.coverage3sd),
    })
}

fn write_outputs(
    dir: &Path,
    run_id: &str,
    output: &ChainOutput,
    config: &ChainConfig,
    inst: &ProblemInstance,
    manifest: &Manifest,
    png: bool,
) -> CliResult<MetricsRow> {
    let (x, phi) = estimate(&output.samples)?;
    pgrd::write(dir.join("x.pgrd"), &x, Dtype::F64)?;
    pgrd::write(dir.join("phi.pgrd"), phi.grid(), Dtype::F64)?;

    let mut trace = String::from(TraceRow::CSV_HEADER);
    trace.push('\n');
    for row in &output.trace {
        trace.push_str(&row.to_csv());
        trace.push('\n');
    }
    write_text(&dir.join("trace.csv"), &trace)?;

    let stats = match config.mode {
        EstimationMode::PosteriorMean { .. } => {
            let samples_dir = dir.join("samples");
            create_dir(&samples_dir)?;
            for (i, (xs, _)) in output.samples.iter().enumerate() {
                pgrd::write(samples_dir.join(format!("x_{i}.pgrd")), xs, Dtype::F64)?;
            }
            let xs: Vec<Grid> = output.samples.iter().map(|(x, _)| x.clone()).collect();
            match posterior_stats(&xs, &inst.truth_x) {
                Ok(stats) => Some(stats),
                Err(PrismError::InsufficientSamples { .. }) => None,
                Err(e) => return Err(e.into()),
            }
        }
        EstimationMode::Single => None,
    };

    if let Some(stats) = &stats {
        let stats_dir = dir.join("stats");
        create_dir(&stats_dir)?;
        let maps = [
            ("mean", stats.mean.clone(), 1.0),
            ("sd", stats.sd.clone(), stats.sd.max()),
            ("abs_error", abs_error_map(stats, &inst.truth_x)?, 1.0),
            ("outlier_mask", stats.outlier_mask.clone(), 1.0),
            ("error_to_sd", error_to_sd_map(stats, &inst.truth_x)?, 3.0),
        ];
        for (name, grid, peak) in &maps {
            pgrd::write(stats_dir.join(format!("{name}.pgrd")), grid, Dtype::F64)?;
            if png {
                write_png(&stats_dir.join(format!("{name}.png")), grid, *peak)?;
            }
        }
    }

    if png {
        write_png(&dir.join("x.png"), &x, 1.0)?;
        write_kernel_png(&dir.join("phi.png"), phi.grid())?;
    }

    let row = metrics_row(run_id, &config.mode.label(), &x, &phi, inst, stats.as_ref())?;
    write_text(
        &dir.join("metrics.csv"),
        &format!("{}\n{}\n", MetricsRow::CSV_HEADER, row.to_csv()),
    )?;
    let mut manifest = manifest.clone();
    manifest.set("samples", output.samples.len());
    manifest.write(dir.join("manifest.txt"))?;
    Ok(row)
}

fn run_trial(
    args: &RunArgs,
    settings: &RunSettings,
    inst: &ProblemInstance,
    trial: usize,
    dir: &Path,
) -> CliResult<MetricsRow> {
    create_dir(dir)?;
    let seed = settings.seed.wrapping_add(trial as u64);
    let config = settings.chain_config(seed, inst.kernel.support)?;
    let manifest = run_manifest(settings, &config, &args.instance, trial);
    // Written first so an interrupted run still records how to resume it.
    manifest.write(dir.join("manifest.txt"))?;

    let priors = build_priors(settings, inst, &args.instance)?;
    let likelihood = GaussianLikelihood {
        sigma_y: inst.noise_sigma,
    };
    let model = ChainModel {
        kernel_prior: priors.kernel.as_ref(),
        image_prior: priors.image.as_ref(),
        likelihood: &likelihood,
        y: &inst.y,
    };
    let options = RunOptions {
        reference: Some(&inst.truth_x),
        checkpoint: Some(CheckpointPolicy {
            dir: dir.join("checkpoint"),
            every: settings.checkpoint_every,
        }),
        start: None,
        interrupt_after: args.stop_after,
    };
    let output = match &args.resume {
        Some(ckpt) => resume_chain(ckpt, &config, &model, &options)?,
        None => run_chain(&config, &model, &options)?,
    };
    let run_id = dir
        .file_name()
        .map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned());
    let row = write_outputs(dir, &run_id, &output, &config, inst, &manifest, args.png)?;
    log::info!(
        "{run_id}: psnr {:.3} dB, kernel rmse {:.6}",
        row.psnr,
        row.kernel_rmse
    );
    Ok(row)
}

pub fn run(args: &RunArgs) -> CliResult<()> {
    let settings = RunSettings::resolve(args)?;
    let inst = ProblemInstance::load(&args.instance)?;
    if settings.trials > 1 && args.resume.is_some() {
        return Err(CliError::Input(
            "--resume applies to a single trial; point it at that trial's checkpoint".into(),
        ));
    }
    create_dir(&args.out)?;

    if settings.trials == 1 {
        let row = run_trial(args, &settings, &inst, 0, &args.out)?;
        println!("{}\n{}", MetricsRow::CSV_HEADER, row.to_csv());
        return Ok(());
    }

    let trial = |i: usize| run_trial(args, &settings, &inst, i, &args.out.join(format!("trial_{i}")));
    // Bridge responders see one request stream per endpoint, so bridged
    // trials run one after another.
    let rows: Vec<CliResult<MetricsRow>> = match settings.prior {
        PriorChoice::Analytic => (0..settings.trials).into_par_iter().map(trial).collect(),
        PriorChoice::Bridge(_) => (0..settings.trials).map(trial).collect(),
    };
    let rows = rows.into_iter().collect::<CliResult<Vec<_>>>()?;
    let mut csv = format!("{}\n", MetricsRow::CSV_HEADER);
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    write_text(&args.out.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
