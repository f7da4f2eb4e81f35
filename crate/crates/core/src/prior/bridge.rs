//! File-exchange bridge to an out-of-process denoiser.
//!
//! One exchange directory per endpoint. For request number `n` the client
//! writes `req_n.pgrd` (the noisy grid) and then `req_n.meta`:
//!
//! ```text
//! rho=<float>
//! seed=<u64>
//! measurement=<path>      (optional)
//! ```
//!
//! and waits for the responder to publish `resp_n.pgrd`. Every file is
//! written under a temporary name and renamed into place, so the presence
//! of a name implies complete contents. `seed` lets a deterministic
//! responder reproduce the in-process random stream.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::RngCore;

use super::{DenoisingPosteriorSampler, MeasurementConditionedSampler};
use crate::error::{PrismError, Result};
use crate::grid::pgrd::{self, Dtype};
use crate::grid::{Grid, RngState};
use crate::manifest::Manifest;

const POLL_INTERVAL: Duration = Duration::from_millis(2);

pub fn request_grid_path(dir: &Path, n: u64) -> PathBuf {
    dir.join(format!("req_{n}.pgrd"))
}

pub fn request_meta_path(dir: &Path, n: u64) -> PathBuf {
    dir.join(format!("req_{n}.meta"))
}

pub fn response_path(dir: &Path, n: u64) -> PathBuf {
    dir.join(format!("resp_{n}.pgrd"))
}

/// Request counters with a `req_<n>.meta` file present, ascending.
fn request_counters(dir: &Path) -> Result<Vec<u64>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| PrismError::io(format!("listing {}", dir.display()), e))?;
    let mut out: Vec<u64> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_prefix("req_")?
                .strip_suffix(".meta")?
                .parse()
                .ok()
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Client side of the exchange.
#[derive(Debug)]
pub struct BridgeSampler {
    dir: PathBuf,
    timeout: Duration,
    next: Mutex<u64>,
    measurement: Option<(PathBuf, Grid)>,
}

/// Attaches to an existing exchange directory.
pub fn bridge_sampler(endpoint: impl Into<PathBuf>, timeout_secs: f64) -> Result<BridgeSampler> {
    let dir = endpoint.into();
    if !dir.is_dir() {
        return Err(PrismError::io(
            format!("bridge endpoint {}", dir.display()),
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
        return Err(PrismError::DegenerateScale {
            name: "bridge timeout",
            value: timeout_secs,
        });
    }
    // Continue numbering after any earlier session in the same directory.
    let next = request_counters(&dir)?.last().map_or(0, |n| n + 1);
    Ok(BridgeSampler {
        dir,
        timeout: Duration::from_secs_f64(timeout_secs),
        next: Mutex::new(next),
        measurement: None,
    })
}

impl BridgeSampler {
    /// Attaches a conditioning measurement; its path is sent with every
    /// request. The grid is written there if the file does not exist yet.
    pub fn with_measurement(mut self, path: impl Into<PathBuf>, y: Grid) -> Result<Self> {
        let path = path.into();
        if !path.exists() {
            pgrd::write(&path, &y, Dtype::F64)?;
        }
        self.measurement = Some((path, y));
        Ok(self)
    }

    pub fn endpoint(&self) -> &Path {
        &self.dir
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn exchange(&self, noisy: &Grid, rho: f64, seed: u64) -> Result<Grid> {
        let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
        let n = *next;
        *next += 1;

        pgrd::write(request_grid_path(&self.dir, n), noisy, Dtype::F64)?;
        let mut meta = Manifest::new();
        meta.set("rho", rho).set("seed", seed);
        if let Some((path, _)) = &self.measurement {
            meta.set("measurement", path.display());
        }
        meta.write(request_meta_path(&self.dir, n))?;

        let resp = response_path(&self.dir, n);
        let start = Instant::now();
        while !resp.exists() {
            if start.elapsed() >= self.timeout {
                return Err(PrismError::BridgeTimeout {
                    dir: self.dir.clone(),
                    file: format!("resp_{n}.pgrd"),
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
            thread::sleep(POLL_INTERVAL.min(self.timeout.saturating_sub(start.elapsed())));
        }
        let bytes = fs::read(&resp)
            .map_err(|e| PrismError::io(format!("reading {}", resp.display()), e))?;
        let grid = pgrd::decode(&bytes, &resp).map_err(|e| PrismError::MalformedResponse {
            path: resp.clone(),
            reason: e.to_string(),
        })?;
        if grid.shape() != noisy.shape() {
            return Err(PrismError::MalformedResponse {
                path: resp,
                reason: format!(
                    "shape {:?} does not match request {:?}",
                    grid.shape(),
                    noisy.shape()
                ),
            });
        }
        Ok(grid)
    }
}

impl DenoisingPosteriorSampler for BridgeSampler {
    fn sample(&self, noisy: &Grid, rho: f64, rng: &mut RngState) -> Result<Grid> {
        let seed = rng.next_u64();
        self.exchange(noisy, rho, seed)
    }
}

impl MeasurementConditionedSampler for BridgeSampler {
    /// Panics if no measurement was attached with
    /// [`BridgeSampler::with_measurement`].
    fn measurement(&self) -> &Grid {
        &self
            .measurement
            .as_ref()
            .expect("bridge sampler has no measurement attached")
            .1
    }
}

/// A request as seen by a responder.
#[derive(Debug, Clone)]
pub struct BridgeRequest {
    pub counter: u64,
    pub noisy: Grid,
    pub rho: f64,
    pub seed: u64,
    pub measurement: Option<PathBuf>,
}

pub fn read_request(dir: &Path, n: u64) -> Result<BridgeRequest> {
    let meta = Manifest::read(request_meta_path(dir, n))?;
    Ok(BridgeRequest {
        counter: n,
        noisy: pgrd::read(request_grid_path(dir, n))?,
        rho: meta.parse("rho")?,
        seed: meta.parse("seed")?,
        measurement: meta.get("measurement").map(PathBuf::from),
    })
}

/// Answers every pending request (meta present, response absent) in
/// counter order with `handler`. Returns how many were answered.
pub fn serve_pending(
    dir: &Path,
    handler: &mut dyn FnMut(&BridgeRequest) -> Result<Grid>,
) -> Result<usize> {
    let mut answered = 0;
    for n in request_counters(dir)? {
        if response_path(dir, n).exists() {
            continue;
        }
        let request = read_request(dir, n)?;
        let out = handler(&request)?;
        pgrd::write(response_path(dir, n), &out, Dtype::F64)?;
        answered += 1;
    }
    Ok(answered)
}

/// Responder loop around an in-process sampler, seeded from each request.
/// Runs until `stop` is set.
pub fn serve(
    dir: &Path,
    sampler: &dyn DenoisingPosteriorSampler,
    stop: &AtomicBool,
) -> Result<usize> {
    let mut total = 0;
    let mut handler =
        |req: &BridgeRequest| sampler.sample(&req.noisy, req.rho, &mut RngState::new(req.seed));
    while !stop.load(Ordering::Relaxed) {
        let n = serve_pending(dir, &mut handler)?;
        total += n;
        if n == 0 {
            thread::sleep(POLL_INTERVAL);
        }
    }
    Ok(total)
}
