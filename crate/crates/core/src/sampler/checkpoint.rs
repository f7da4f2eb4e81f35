use std::fs;
use std::path::{Path, PathBuf};

use super::{format_support, parse_support, ChainState, TraceRow};
use crate::error::{PrismError, Result};
use crate::forward::Kernel;
use crate::grid::pgrd::{self, Dtype};
use crate::grid::{Grid, RngState};
use crate::manifest::Manifest;

/// Everything needed to continue a chain bit-identically: the Markov state
/// (including the RNG position), the draws retained so far and the trace.
///
/// On disk:
///
/// ```text
/// <dir>/manifest.txt          k, rng seed/stream/word position, config hash, kernel flags
/// <dir>/{x,z,phi,m}.pgrd
/// <dir>/samples/{x,phi}_<i>.pgrd
/// <dir>/trace.csv
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ChainState,
    pub samples: Vec<(Grid, Kernel)>,
    pub trace: Vec<TraceRow>,
    pub config_hash: String,
}

fn io_err(path: &Path, what: &str, e: std::io::Error) -> PrismError {
    PrismError::io(format!("{what} {}", path.display()), e)
}

fn write_kernel_flags(m: &mut Manifest, prefix: &str, k: &Kernel) {
    m.set(&format!("{prefix}_support"), format_support(k.support()))
        .set(&format!("{prefix}_normalized"), k.is_normalized());
}

fn read_kernel(dir: &Path, file: &str, m: &Manifest, prefix: &str) -> Result<Kernel> {
    let grid = pgrd::read(dir.join(file))?;
    let support = parse_support(m.get(&format!("{prefix}_support")).unwrap_or("none"))?;
    let normalized: bool = m.parse(&format!("{prefix}_normalized"))?;
    Ok(Kernel::from_parts(grid, support, normalized))
}

impl Checkpoint {
    /// Writes to a sibling staging directory and swaps it into place, so an
    /// existing checkpoint is only replaced by a complete one.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let staging = staging_path(dir);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, "clearing", e))?;
        }
        fs::create_dir_all(staging.join("samples"))
            .map_err(|e| io_err(&staging, "creating", e))?;

        let s = &self.state;
        pgrd::write(staging.join("x.pgrd"), &s.x, Dtype::F64)?;
        pgrd::write(staging.join("z.pgrd"), &s.z, Dtype::F64)?;
        pgrd::write(staging.join("phi.pgrd"), s.phi.grid(), Dtype::F64)?;
        pgrd::write(staging.join("m.pgrd"), s.m.grid(), Dtype::F64)?;

        let mut m = Manifest::new();
        m.set("k", s.k)
            .set("rng_seed", s.rng.seed())
            .set("rng_stream", s.rng.stream())
            .set("rng_word_pos", s.rng.position())
            .set("config_hash", &self.config_hash)
            .set("samples", self.samples.len());
        write_kernel_flags(&mut m, "phi", &s.phi);
        write_kernel_flags(&mut m, "m", &s.m);
        for (i, (x, phi)) in self.samples.iter().enumerate() {
            pgrd::write(staging.join(format!("samples/x_{i}.pgrd")), x, Dtype::F64)?;
            pgrd::write(
                staging.join(format!("samples/phi_{i}.pgrd")),
                phi.grid(),
                Dtype::F64,
            )?;
            write_kernel_flags(&mut m, &format!("sample_{i}_phi"), phi);
        }

        let mut trace = String::from(TraceRow::CSV_HEADER);
        trace.push('\n');
        for row in &self.trace {
            trace.push_str(&row.to_csv());
            trace.push('\n');
        }
        fs::write(staging.join("trace.csv"), trace)
            .map_err(|e| io_err(&staging, "writing trace in", e))?;
        m.write(staging.join("manifest.txt"))?;

        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| io_err(dir, "replacing", e))?;
        }
        fs::rename(&staging, dir).map_err(|e| io_err(dir, "publishing", e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = Manifest::read(dir.join("manifest.txt"))?;
        let rng = RngState::restore(
            m.parse("rng_seed")?,
            m.parse("rng_stream")?,
            m.parse("rng_word_pos")?,
        );
        let state = ChainState {
            x: pgrd::read(dir.join("x.pgrd"))?,
            z: pgrd::read(dir.join("z.pgrd"))?,
            phi: read_kernel(dir, "phi.pgrd", &m, "phi")?,
            m: read_kernel(dir, "m.pgrd", &m, "m")?,
            k: m.parse("k")?,
            rng,
        };
        let count: usize = m.parse("samples")?;
        let samples = (0..count)
            .map(|i| {
                Ok((
                    pgrd::read(dir.join(format!("samples/x_{i}.pgrd")))?,
                    read_kernel(
                        dir,
                        &format!("samples/phi_{i}.pgrd"),
                        &m,
                        &format!("sample_{i}_phi"),
                    )?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let trace_path = dir.join("trace.csv");
        let text =
            fs::read_to_string(&trace_path).map_err(|e| io_err(&trace_path, "reading", e))?;
        let trace = text
            .lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(TraceRow::from_csv)
            .collect::<Result<Vec<_>>>()?;
        if trace.len() != state.k {
            return Err(PrismError::format(
                &trace_path,
                format!("{} trace rows for k = {}", trace.len(), state.k),
            ));
        }

        Ok(Self {
            state,
            samples,
            trace,
            config_hash: m.parse("config_hash")?,
        })
    }
}

fn staging_path(dir: &Path) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    dir.with_file_name(format!(".{name}.staging"))
}
