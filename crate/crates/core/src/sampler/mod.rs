//! The split Gibbs chain over `(x, z, φ, m)`.
//!
//! Each iteration `k` runs, in order:
//!
//! 1. `φ^k ~ p(φ | m^{k-1})`: kernel prior step at `ρ_φ^k`, conditioned on `y`,
//! 2. `z^k ~ p(z | y, φ^k, x^{k-1})`: image likelihood step at `ρ_x^k`,
//! 3. `x^k ~ p(x | z^k)`: image prior step at `ρ_x^k`,
//! 4. `m^k ~ p(m | y, φ^k, x^k)`: kernel likelihood step at `ρ_φ^k`.

mod checkpoint;
mod schedule;

use std::path::{Path, PathBuf};

use crate::analysis::psnr;
use crate::error::{PrismError, Result};
use crate::forward::{ForwardModel, Kernel};
use crate::grid::{draw_standard_normal, Grid, RngState};
use crate::likelihood::{build_image_conditional, build_kernel_conditional};
use crate::manifest::Manifest;
use crate::prior::{
    project_kernel, project_kernel_within, DenoisingPosteriorSampler,
    MeasurementConditionedSampler,
};

pub use checkpoint::Checkpoint;
pub use schedule::AnnealingSchedule;

/// How retained samples become the reported estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    /// Report the final draw `(x^K, φ^K)`.
    Single,
    /// Average `count` draws from the tail of the chain.
    PosteriorMean { count: usize },
}

impl EstimationMode {
    /// `single` or `mean<count>`, as used in metric rows.
    pub fn label(&self) -> String {
        match self {
            EstimationMode::Single => "single".into(),
            EstimationMode::PosteriorMean { count } => format!("mean{count}"),
        }
    }

    /// Parses `single` or `mean:<count>`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "single" {
            return Ok(EstimationMode::Single);
        }
        s.strip_prefix("mean:")
            .and_then(|n| n.parse().ok())
            .filter(|&count| count > 0)
            .map(|count| EstimationMode::PosteriorMean { count })
            .ok_or_else(|| {
                PrismError::InvalidConfig(format!("mode `{s}`: expected single or mean:<N>"))
            })
    }
}

/// Distribution of the random starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainInit {
    /// `x⁰ = image_mean + image_sd · w`.
    pub image_mean: f64,
    pub image_sd: f64,
    /// `m⁰ = (δ + c)/2 + kernel_noise · w`, where `c` is the kernel prior's centre.
    pub kernel_noise: f64,
}

impl Default for ChainInit {
    fn default() -> Self {
        Self {
            image_mean: 0.5,
            image_sd: 0.2,
            kernel_noise: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub rho_x: AnnealingSchedule,
    pub rho_phi: AnnealingSchedule,
    pub burn_in: usize,
    pub thin: usize,
    pub mode: EstimationMode,
    pub seed: u64,
    /// Project `φ` onto nonnegative unit-mass kernels after each prior step.
    pub project_kernel: bool,
    /// Window used by the projection, when known.
    pub kernel_support: Option<(usize, usize)>,
    pub init: ChainInit,
}

pub const DEFAULT_RHO_MAX: f64 = 1.0;
pub const DEFAULT_RHO_MIN: f64 = 0.01;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 50;

impl ChainConfig {
    /// Defaults: both schedules anneal 1.0 → 0.01, single-sample mode,
    /// projection on, burn-in `K − 20`.
    pub fn new(iterations: usize, seed: u64) -> Result<Self> {
        let schedule = AnnealingSchedule::exponential(DEFAULT_RHO_MAX, DEFAULT_RHO_MIN, iterations)?;
        Ok(Self {
            iterations,
            rho_x: schedule.clone(),
            rho_phi: schedule,
            burn_in: iterations.saturating_sub(20),
            thin: 1,
            mode: EstimationMode::Single,
            seed,
            project_kernel: true,
            kernel_support: None,
            init: ChainInit::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.iterations;
        if k == 0 {
            return Err(PrismError::InvalidConfig("iterations must be positive".into()));
        }
        if self.rho_x.len() != k || self.rho_phi.len() != k {
            return Err(PrismError::InvalidConfig(format!(
                "schedules have {} and {} entries for K = {k}",
                self.rho_x.len(),
                self.rho_phi.len()
            )));
        }
        if let EstimationMode::PosteriorMean { count } = self.mode {
            if count == 0 || self.thin == 0 {
                return Err(PrismError::InvalidConfig(
                    "posterior-mean mode needs count >= 1 and thin >= 1".into(),
                ));
            }
            if self.burn_in + self.thin * (count - 1) >= k {
                return Err(PrismError::InvalidConfig(format!(
                    "burn_in {} + thin {} x (count {count} - 1) must be < K = {k}",
                    self.burn_in, self.thin
                )));
            }
        }
        Ok(())
    }

    /// Whether the draw at 1-based iteration `k` is kept.
    pub fn retains(&self, k: usize) -> bool {
        match self.mode {
            EstimationMode::Single => k == self.iterations,
            EstimationMode::PosteriorMean { count } => {
                k > self.burn_in
                    && (k - self.burn_in - 1).is_multiple_of(self.thin)
                    && (k - self.burn_in - 1) / self.thin < count
            }
        }
    }

    /// Every setting, as `key=value` pairs.
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("iterations", self.iterations)
            .set("rho_x_max", self.rho_x.rho_max())
            .set("rho_x_min", self.rho_x.rho_min())
            .set("rho_phi_max", self.rho_phi.rho_max())
            .set("rho_phi_min", self.rho_phi.rho_min())
            .set("burn_in", self.burn_in)
            .set("thin", self.thin)
            .set("mode", self.mode.label())
            .set("seed", self.seed)
            .set("project_kernel", self.project_kernel)
            .set("kernel_support", format_support(self.kernel_support))
            .set("init_image_mean", self.init.image_mean)
            .set("init_image_sd", self.init.image_sd)
            .set("init_kernel_noise", self.init.kernel_noise);
        m
    }

    pub fn hash(&self) -> String {
        self.to_manifest().digest()
    }
}

pub(crate) fn format_support(s: Option<(usize, usize)>) -> String {
    s.map_or_else(|| "none".into(), |(h, w)| format!("{h}x{w}"))
}

pub(crate) fn parse_support(s: &str) -> Result<Option<(usize, usize)>> {
    if s == "none" {
        return Ok(None);
    }
    let parsed = s
        .split_once('x')
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)));
    parsed
        .map(Some)
        .ok_or_else(|| PrismError::InvalidConfig(format!("support `{s}`: expected HxW or none")))
}

/// The Gaussian likelihood steps, behind a trait so alternative (or
/// instrumented) implementations can be injected.
pub trait LikelihoodSteps: Send + Sync {
    /// `z ~ p(z | y, φ, x)`.
    fn image_step(
        &self,
        y: &Grid,
        x: &Grid,
        phi: &Kernel,
        rho_x: f64,
        rng: &mut RngState,
    ) -> Result<Grid>;

    /// `m ~ p(m | y, φ, x)`.
    fn kernel_step(
        &self,
        y: &Grid,
        x: &Grid,
        phi: &Kernel,
        rho_phi: f64,
        rng: &mut RngState,
    ) -> Result<Grid>;
}

/// Exact spectral samplers for additive white Gaussian noise of level `σ_y`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianLikelihood {
    pub sigma_y: f64,
}

impl LikelihoodSteps for GaussianLikelihood {
    fn image_step(
        &self,
        y: &Grid,
        x: &Grid,
        phi: &Kernel,
        rho_x: f64,
        rng: &mut RngState,
    ) -> Result<Grid> {
        let model = ForwardModel::new(phi.clone(), self.sigma_y)?;
        build_image_conditional(&model, y, x, rho_x)?.sample(rng)
    }

    fn kernel_step(
        &self,
        y: &Grid,
        x: &Grid,
        phi: &Kernel,
        rho_phi: f64,
        rng: &mut RngState,
    ) -> Result<Grid> {
        build_kernel_conditional(x, y, phi, rho_phi, self.sigma_y)?.sample(rng)
    }
}

/// Everything the chain samples against: priors, likelihood and data.
#[derive(Clone, Copy)]
pub struct ChainModel<'a> {
    pub kernel_prior: &'a dyn MeasurementConditionedSampler,
    pub image_prior: &'a dyn DenoisingPosteriorSampler,
    pub likelihood: &'a dyn LikelihoodSteps,
    pub y: &'a Grid,
}

/// Full Markov state: the four variables, the iteration count and the RNG.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Grid,
    pub z: Grid,
    pub phi: Kernel,
    pub m: Kernel,
    /// Completed iterations.
    pub k: usize,
    pub rng: RngState,
}

impl ChainState {
    /// Random start drawn from the chain's own RNG stream.
    pub fn initialize(config: &ChainConfig, model: &ChainModel<'_>) -> Self {
        let (h, w) = model.y.shape();
        let mut rng = RngState::new(config.seed);
        let x = draw_standard_normal(&mut rng, h, w)
            .map(|v| config.init.image_mean + config.init.image_sd * v);
        let delta = Kernel::delta(h, w).into_grid();
        let center = model
            .kernel_prior
            .prior_center()
            .cloned()
            .unwrap_or_else(|| delta.clone());
        let noise = draw_standard_normal(&mut rng, h, w);
        let m = Grid::from_fn(h, w, |r, c| {
            0.5 * (delta[(r, c)] + center[(r, c)]) + config.init.kernel_noise * noise[(r, c)]
        });
        Self::from_start(x, Kernel::new(m), rng)
    }

    /// Start from explicit `x⁰`, `m⁰`.
    pub fn from_start(x: Grid, m: Kernel, rng: RngState) -> Self {
        Self {
            z: x.clone(),
            phi: m.clone(),
            x,
            m,
            k: 0,
            rng,
        }
    }
}

/// One full sweep of the four conditional updates.
pub fn prism_step(
    state: &ChainState,
    config: &ChainConfig,
    model: &ChainModel<'_>,
) -> Result<ChainState> {
    let k = state.k + 1;
    if k > config.iterations {
        return Err(PrismError::InvalidConfig(format!(
            "chain already completed {} iterations",
            state.k
        )));
    }
    let rho_x = config.rho_x.at(k);
    let rho_phi = config.rho_phi.at(k);
    let mut rng = state.rng.clone();

    let phi_raw = model
        .kernel_prior
        .sample(state.m.grid(), rho_phi, &mut rng)?;
    phi_raw.ensure_same_shape(state.m.grid())?;
    let phi = Kernel::new(phi_raw).with_support(config.kernel_support);
    let phi = match (config.project_kernel, config.kernel_support) {
        (false, _) => phi,
        (true, Some(s)) => project_kernel_within(&phi, s),
        (true, None) => project_kernel(&phi),
    };

    let z = model
        .likelihood
        .image_step(model.y, &state.x, &phi, rho_x, &mut rng)?;
    let x = model.image_prior.sample(&z, rho_x, &mut rng)?;
    x.ensure_same_shape(&z)?;
    let m = model
        .likelihood
        .kernel_step(model.y, &x, &phi, rho_phi, &mut rng)?;

    Ok(ChainState {
        x,
        z,
        phi,
        m: Kernel::new(m),
        k,
        rng,
    })
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub rho_x: f64,
    pub rho_phi: f64,
    /// `‖H_φ x − y‖₂`.
    pub residual: f64,
    /// PSNR of `x` against a supplied ground truth (peak 1).
    pub psnr: Option<f64>,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "iteration,rho_x,rho_phi,residual,psnr";

    pub fn to_csv(&self) -> String {
        let psnr = self.psnr.map_or_else(String::new, |p| p.to_string());
        format!(
            "{},{},{},{},{}",
            self.k, self.rho_x, self.rho_phi, self.residual, psnr
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let bad = || PrismError::InvalidConfig(format!("trace row `{line}`"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad());
        }
        Ok(Self {
            k: fields[0].parse().map_err(|_| bad())?,
            rho_x: fields[1].parse().map_err(|_| bad())?,
            rho_phi: fields[2].parse().map_err(|_| bad())?,
            residual: fields[3].parse().map_err(|_| bad())?,
            psnr: if fields[4].is_empty() {
                None
            } else {
                Some(fields[4].parse().map_err(|_| bad())?)
            },
        })
    }
}

fn trace_row(state: &ChainState, config: &ChainConfig, model: &ChainModel<'_>, reference: Option<&Grid>) -> Result<TraceRow> {
    let fitted = ForwardModel::new(state.phi.clone(), 0.0)?.apply(&state.x)?;
    Ok(TraceRow {
        k: state.k,
        rho_x: config.rho_x.at(state.k),
        rho_phi: config.rho_phi.at(state.k),
        residual: fitted.distance(model.y)?,
        psnr: reference.map(|t| psnr(&state.x, t, 1.0)).transpose()?,
    })
}

/// Where and how often to write checkpoints.
#[derive(Debug, Clone)]
pub struct CheckpointPolicy {
    pub dir: PathBuf,
    pub every: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Ground truth for the PSNR column of the trace.
    pub reference: Option<&'a Grid>,
    pub checkpoint: Option<CheckpointPolicy>,
    /// Explicit `(x⁰, m⁰)` instead of the random start.
    pub start: Option<(Grid, Kernel)>,
    /// Stop (with a checkpoint) once this many iterations are complete.
    pub interrupt_after: Option<usize>,
}

/// Result of a completed chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub final_x: Grid,
    pub final_phi: Kernel,
    /// Retained `(x, φ)` draws, per the estimation mode.
    pub samples: Vec<(Grid, Kernel)>,
    pub trace: Vec<TraceRow>,
    pub final_state: ChainState,
}

/// Runs a fresh chain for `config.iterations` sweeps.
pub fn run_chain(
    config: &ChainConfig,
    model: &ChainModel<'_>,
    options: &RunOptions<'_>,
) -> Result<ChainOutput> {
    config.validate()?;
    let state = match &options.start {
        Some((x, m)) => {
            x.ensure_same_shape(model.y)?;
            m.grid().ensure_same_shape(model.y)?;
            ChainState::from_start(x.clone(), m.clone(), RngState::new(config.seed))
        }
        None => ChainState::initialize(config, model),
    };
    let progress = Checkpoint {
        state,
        samples: Vec::new(),
        trace: Vec::new(),
        config_hash: config.hash(),
    };
    drive(progress, config, model, options)
}

/// Continues a chain from a checkpoint written by an earlier run with the
/// same configuration.
pub fn resume_chain(
    checkpoint_dir: &Path,
    config: &ChainConfig,
    model: &ChainModel<'_>,
    options: &RunOptions<'_>,
) -> Result<ChainOutput> {
    config.validate()?;
    let progress = Checkpoint::load(checkpoint_dir)?;
    if progress.config_hash != config.hash() {
        return Err(PrismError::InvalidConfig(format!(
            "checkpoint {} was written by a different configuration",
            checkpoint_dir.display()
        )));
    }
    progress.state.x.ensure_same_shape(model.y)?;
    drive(progress, config, model, options)
}

fn drive(
    mut progress: Checkpoint,
    config: &ChainConfig,
    model: &ChainModel<'_>,
    options: &RunOptions<'_>,
) -> Result<ChainOutput> {
    let halt = |progress: &Checkpoint, source: PrismError| -> PrismError {
        match &options.checkpoint {
            Some(policy) => match progress.save(&policy.dir) {
                Ok(()) => PrismError::ChainHalted {
                    k: progress.state.k,
                    checkpoint: policy.dir.clone(),
                    source: Box::new(source),
                },
                Err(save_err) => save_err,
            },
            None => source,
        }
    };

    while progress.state.k < config.iterations {
        if options.interrupt_after.is_some_and(|n| progress.state.k >= n) {
            return Err(halt(&progress, PrismError::Interrupted));
        }
        let next = match prism_step(&progress.state, config, model) {
            Ok(next) => next,
            Err(e) => return Err(halt(&progress, e)),
        };
        progress.state = next;
        let k = progress.state.k;
        progress
            .trace
            .push(trace_row(&progress.state, config, model, options.reference)?);
        if config.retains(k) {
            progress
                .samples
                .push((progress.state.x.clone(), progress.state.phi.clone()));
        }
        if let Some(policy) = &options.checkpoint {
            if policy.every > 0 && k.is_multiple_of(policy.every) {
                progress.save(&policy.dir)?;
            }
        }
        log::debug!(
            "iteration {k}: residual {:.6}",
            progress.trace.last().map_or(f64::NAN, |t| t.residual)
        );
    }

    let state = progress.state;
    Ok(ChainOutput {
        final_x: state.x.clone(),
        final_phi: state.phi.clone(),
        samples: progress.samples,
        trace: progress.trace,
        final_state: state,
    })
}

/// Element-wise average of retained draws. A single draw is returned as is.
pub fn estimate(samples: &[(Grid, Kernel)]) -> Result<(Grid, Kernel)> {
    let (first_x, first_phi) = samples.first().ok_or(PrismError::EmptySampleSet)?;
    if samples.len() == 1 {
        return Ok((first_x.clone(), first_phi.clone()));
    }
    let (h, w) = first_x.shape();
    let mut x_acc = vec![0.0; h * w];
    let mut phi_acc = vec![0.0; h * w];
    for (x, phi) in samples {
        x.ensure_shape((h, w))?;
        phi.grid().ensure_shape((h, w))?;
        x_acc.iter_mut().zip(x.data()).for_each(|(a, v)| *a += v);
        phi_acc
            .iter_mut()
            .zip(phi.grid().data())
            .for_each(|(a, v)| *a += v);
    }
    let n = samples.len() as f64;
    let normalized = samples.iter().all(|(_, p)| p.is_normalized());
    Ok((
        Grid::from_raw(h, w, x_acc.into_iter().map(|v| v / n).collect()),
        Kernel::from_parts(
            Grid::from_raw(h, w, phi_acc.into_iter().map(|v| v / n).collect()),
            first_phi.support(),
            normalized,
        ),
    ))
}
