//! Synthetic problem generation: motion-blur kernels, stationary Gaussian
//! textures and complete (truth, kernel, measurement) instances.

use std::fs;
use std::path::Path;

use rand::RngCore;

use crate::error::{PrismError, Result};
use crate::forward::{ForwardModel, Kernel};
use crate::grid::pgrd::{self, Dtype};
use crate::grid::{Grid, RngState};
use crate::manifest::Manifest;
use crate::prior::{project_kernel, GaussianPrior};

const SMOOTHING_SIGMA: f64 = 0.5;
const STEPS_PER_PIXEL: usize = 4;

pub const STREAM_IMAGE: u64 = 1;
pub const STREAM_KERNEL: u64 = 2;
pub const STREAM_NOISE: u64 = 3;

/// Checks `3 ≤ s ≤ min(H, W)/2` with `s` odd.
pub fn check_support(support: usize, height: usize, width: usize) -> Result<()> {
    if support < 3 || support.is_multiple_of(2) || support > height.min(width) / 2 {
        return Err(PrismError::BadSupport {
            support,
            height,
            width,
        });
    }
    Ok(())
}

/// Random smooth path with unit-length steps. The heading follows a random
/// walk whose velocity increments are Gaussian with scale `intensity`; at
/// intensity 0 the path is a straight line.
pub fn motion_trajectory(steps: usize, intensity: f64, rng: &mut RngState) -> Vec<(f64, f64)> {
    let intensity = intensity.clamp(0.0, 1.0);
    let theta = std::f64::consts::TAU * (rng.next_u64() as f64 / u64::MAX as f64);
    let mut v = (theta.cos(), theta.sin());
    let mut p = (0.0, 0.0);
    let mut path = Vec::with_capacity(steps + 1);
    path.push(p);
    for _ in 0..steps {
        let (gx, gy) = (rng.standard_normal(), rng.standard_normal());
        let nx = v.0 + intensity * gx;
        let ny = v.1 + intensity * gy;
        let len = (nx * nx + ny * ny).sqrt();
        if len > 1e-12 {
            v = (nx / len, ny / len);
        }
        p = (p.0 + v.0, p.1 + v.1);
        path.push(p);
    }
    path
}

fn rasterize(path: &[(f64, f64)], support: usize) -> Grid {
    let mut patch = Grid::zeros(support, support);
    let centre = (support - 1) as f64 / 2.0;
    let splat = |patch: &mut Grid, r: f64, c: f64, w: f64| {
        let (r0, c0) = (r.floor(), c.floor());
        let (fr, fc) = (r - r0, c - c0);
        for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
            for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
                let (rr, cc) = (r0 + dr, c0 + dc);
                if rr >= 0.0 && cc >= 0.0 && rr < support as f64 && cc < support as f64 {
                    patch[(rr as usize, cc as usize)] += w * wr * wc;
                }
            }
        }
    };
    for seg in path.windows(2) {
        let ((r0, c0), (r1, c1)) = (seg[0], seg[1]);
        for i in 0..STEPS_PER_PIXEL {
            let t = i as f64 / STEPS_PER_PIXEL as f64;
            splat(
                &mut patch,
                centre + r0 + t * (r1 - r0),
                centre + c0 + t * (c1 - c0),
                1.0,
            );
        }
    }
    if let Some(&(r, c)) = path.last() {
        splat(&mut patch, centre + r, centre + c, 1.0);
    }
    patch
}

fn smooth(patch: &Grid, sigma: f64) -> Grid {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let (h, w) = patch.shape();
    let pass = |src: &Grid, rows: bool| {
        Grid::from_fn(h, w, |r, c| {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let d = i as isize - radius;
                let (rr, cc) = if rows {
                    (r as isize + d, c as isize)
                } else {
                    (r as isize, c as isize + d)
                };
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    acc += t * src[(rr as usize, cc as usize)];
                }
            }
            acc / norm
        })
    };
    pass(&pass(patch, true), false)
}

/// Motion-blur kernel with an `s × s` support embedded centred on a
/// `height × width` grid.
pub fn generate_motion_kernel(
    height: usize,
    width: usize,
    support: usize,
    intensity: f64,
    rng: &mut RngState,
) -> Result<Kernel> {
    check_support(support, height, width)?;
    let mut path = motion_trajectory(2 * support, intensity, rng);

    // Centre the bounding box and shrink to a random fraction of the window.
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(r, c) in &path {
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        cmin = cmin.min(c);
        cmax = cmax.max(c);
    }
    let half_extent = ((rmax - rmin).max(cmax - cmin) / 2.0).max(1e-12);
    let reach = (support - 1) as f64 / 2.0 - SMOOTHING_SIGMA;
    let fraction = 0.6 + 0.4 * (rng.next_u64() as f64 / u64::MAX as f64);
    let scale = reach * fraction / half_extent;
    let (rmid, cmid) = ((rmin + rmax) / 2.0, (cmin + cmax) / 2.0);
    for p in &mut path {
        *p = ((p.0 - rmid) * scale, (p.1 - cmid) * scale);
    }

    let patch = smooth(&rasterize(&path, support), SMOOTHING_SIGMA);
    let kernel = Kernel::from_patch(&patch, height, width)?;
    Ok(project_kernel(&kernel).with_support(Some((support, support))))
}

/// Stationary Gaussian field with power spectrum `(1 + |f|)^(−slope)`,
/// min-max rescaled to `[0, 1]`.
pub fn generate_texture_image(
    height: usize,
    width: usize,
    slope: f64,
    rng: &mut RngState,
) -> Result<Grid> {
    if !(0.0..=4.0).contains(&slope) {
        return Err(PrismError::InvalidConfig(format!(
            "spectral slope {slope} outside [0, 4]"
        )));
    }
    let prior = GaussianPrior::power_law(Grid::zeros(height, width), slope, 1.0)?;
    let field = prior.sample_prior(rng)?;
    Ok(rescale_unit(&field))
}

fn rescale_unit(g: &Grid) -> Grid {
    let (lo, hi) = (g.min(), g.max());
    if hi - lo <= 0.0 {
        return Grid::filled(g.height(), g.width(), 0.5);
    }
    g.map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Texture {
        height: usize,
        width: usize,
        slope: f64,
    },
    Provided(Grid),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub support: usize,
    pub intensity: f64,
}

/// A blind-deblurring problem with its generating provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub truth_x: Grid,
    pub truth_kernel: Kernel,
    pub y: Grid,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Texture slope, or `None` for a user-supplied image.
    pub image_slope: Option<f64>,
    pub kernel: KernelParams,
}

/// Noise draw used for every instance: stream 3 of `seed`.
pub fn measure_instance(
    truth_x: &Grid,
    truth_kernel: &Kernel,
    noise_sigma: f64,
    seed: u64,
) -> Result<Grid> {
    let model = ForwardModel::new(truth_kernel.clone(), noise_sigma)?;
    model.measure(truth_x, &mut RngState::with_stream(seed, STREAM_NOISE))
}

pub fn make_instance(
    source: ImageSource,
    kernel: KernelParams,
    noise_sigma: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    let (truth_x, image_slope) = match source {
        ImageSource::Texture {
            height,
            width,
            slope,
        } => (
            generate_texture_image(
                height,
                width,
                slope,
                &mut RngState::with_stream(seed, STREAM_IMAGE),
            )?,
            Some(slope),
        ),
        ImageSource::Provided(g) => (g, None),
    };
    let (h, w) = truth_x.shape();
    let truth_kernel = generate_motion_kernel(
        h,
        w,
        kernel.support,
        kernel.intensity,
        &mut RngState::with_stream(seed, STREAM_KERNEL),
    )?;
    let y = measure_instance(&truth_x, &truth_kernel, noise_sigma, seed)?;
    Ok(ProblemInstance {
        truth_x,
        truth_kernel,
        y,
        noise_sigma,
        seed,
        image_slope,
        kernel,
    })
}

impl ProblemInstance {
    pub fn shape(&self) -> (usize, usize) {
        self.truth_x.shape()
    }

    pub fn manifest(&self) -> Manifest {
        let (h, w) = self.shape();
        let mut m = Manifest::new();
        m.set("kind", "instance")
            .set("version", env!("CARGO_PKG_VERSION"))
            .set("height", h)
            .set("width", w)
            .set("seed", self.seed)
            .set("noise_sigma", self.noise_sigma)
            .set(
                "image_source",
                if self.image_slope.is_some() {
                    "texture"
                } else {
                    "provided"
                },
            )
            .set("kernel_support", self.kernel.support)
            .set("intensity", self.kernel.intensity);
        if let Some(slope) = self.image_slope {
            m.set("slope", slope);
        }
        m
    }

    /// Writes `manifest.txt`, `truth.pgrd`, `kernel.pgrd` and `y.pgrd`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)
            .map_err(|e| PrismError::io(format!("creating {}", dir.display()), e))?;
        pgrd::write(dir.join("truth.pgrd"), &self.truth_x, Dtype::F64)?;
        pgrd::write(dir.join("kernel.pgrd"), self.truth_kernel.grid(), Dtype::F64)?;
        pgrd::write(dir.join("y.pgrd"), &self.y, Dtype::F64)?;
        self.manifest().write(dir.join("manifest.txt"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = Manifest::read(dir.join("manifest.txt"))?;
        let truth_x = pgrd::read(dir.join("truth.pgrd"))?;
        let y = pgrd::read(dir.join("y.pgrd"))?;
        let support: usize = m.parse("kernel_support")?;
        let truth_kernel = Kernel::new(pgrd::read(dir.join("kernel.pgrd"))?)
            .with_support(Some((support, support)))
            .into_normalized()?;
        truth_x.ensure_same_shape(&y)?;
        truth_x.ensure_same_shape(truth_kernel.grid())?;
        let image_slope = match m.get("slope") {
            Some(_) => Some(m.parse("slope")?),
            None => None,
        };
        Ok(Self {
            truth_x,
            truth_kernel,
            y,
            noise_sigma: m.parse("noise_sigma")?,
            seed: m.parse("seed")?,
            image_slope,
            kernel: KernelParams {
                support,
                intensity: m.parse("intensity")?,
            },
        })
    }
}
