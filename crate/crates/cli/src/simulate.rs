use std::path::PathBuf;

use clap::Args;
use prism_core::datagen::{make_instance, measure_instance, ImageSource, KernelParams, ProblemInstance};

use crate::error::{CliError, CliResult};
use crate::export::{read_luminance, read_rgb};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Side length of the square synthetic image.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Odd side length of the kernel support window.
    #[arg(long, default_value_t = 31)]
    pub kernel_support: usize,
    /// Trajectory curvature in [0, 1]; 0 gives straight motion.
    #[arg(long, default_value_t = 0.5)]
    pub intensity: f64,
    /// Measurement noise standard deviation.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Power-law slope of the synthetic texture.
    #[arg(long, default_value_t = 2.0)]
    pub slope: f64,
    /// Use this PNG as the ground-truth image instead of a texture.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// With --image: one instance per colour channel instead of luminance.
    #[arg(long, requires = "image")]
    pub rgb: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn summary(inst: &ProblemInstance, dir: &std::path::Path) -> String {
    let (h, w) = inst.shape();
    let source = match inst.image_slope {
        Some(s) => format!("texture slope {s}"),
        None => "provided image".into(),
    };
    format!(
        "{}: {h}x{w} {source}, kernel {k}x{k} intensity {}, sigma {}, seed {}",
        dir.display(),
        inst.kernel.intensity,
        inst.noise_sigma,
        inst.seed,
        k = inst.kernel.support,
    )
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.intensity) {
        return Err(CliError::Input(format!(
            "--intensity {} outside [0, 1]",
            args.intensity
        )));
    }
    if !(args.sigma.is_finite() && args.sigma >= 0.0) {
        return Err(CliError::Input(format!("--sigma {} must be >= 0", args.sigma)));
    }
    let params = KernelParams {
        support: args.kernel_support,
        intensity: args.intensity,
    };

    let sources: Vec<(PathBuf, ImageSource, u64)> = match (&args.image, args.rgb) {
        (None, _) => vec![(
            args.out.clone(),
            ImageSource::Texture {
                height: args.size,
                width: args.size,
                slope: args.slope,
            },
            args.seed,
        )],
        (Some(path), false) => vec![(
            args.out.clone(),
            ImageSource::Provided(read_luminance(path)?),
            args.seed,
        )],
        (Some(path), true) => {
            read_rgb(path)?
                .into_iter()
                .zip(["r", "g", "b"])
                .map(|(g, name)| {
                    (
                        args.out.join(format!("channel_{name}")),
                        ImageSource::Provided(g),
                        args.seed,
                    )
                })
                .collect()
        }
    };

    for (i, (dir, source, seed)) in sources.into_iter().enumerate() {
        let mut inst = make_instance(source, params, args.sigma, seed)?;
        if i > 0 {
            // Same kernel stream, fresh noise stream per channel.
            inst.seed = seed.wrapping_add(i as u64);
            inst.y = measure_instance(&inst.truth_x, &inst.truth_kernel, inst.noise_sigma, inst.seed)?;
        }
        inst.save(&dir)?;
        println!("{}", summary(&inst, &dir));
    }
    Ok(())
}
