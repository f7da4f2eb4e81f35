use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use prism_core::analysis::{posterior_stats, MetricsRow};
use prism_core::datagen::ProblemInstance;
use prism_core::grid::pgrd;
use prism_core::manifest::Manifest;
use prism_core::{Grid, Kernel, PrismError};

use crate::error::{CliError, CliResult};
use crate::run::metrics_row;

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// A run directory, or a directory of run directories.
    #[arg(long)]
    pub recon: PathBuf,
    /// An instance directory, or a directory of instances named like the runs.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output directory for metrics.csv and summary.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub const SUMMARY_HEADER: &str = "count,psnr,ssim,kernel_rmse,nll,coverage3sd";

fn is_run(dir: &Path) -> bool {
    dir.join("x.pgrd").is_file()
}

fn run_dirs(recon: &Path) -> CliResult<Vec<PathBuf>> {
    if is_run(recon) {
        return Ok(vec![recon.to_path_buf()]);
    }
    let entries = fs::read_dir(recon)
        .map_err(|e| CliError::io(format!("listing {}", recon.display()), e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::io(format!("listing {}", recon.display()), e))?
            .path();
        if path.is_dir() && is_run(&path) {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn name_of(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned())
}

fn truth_for(truth: &Path, run: &Path, manifest: &Manifest) -> PathBuf {
    if truth.join("truth.pgrd").is_file() {
        return truth.to_path_buf();
    }
    let named = truth.join(name_of(run));
    if named.join("truth.pgrd").is_file() {
        return named;
    }
    manifest
        .get("instance")
        .map(PathBuf::from)
        .filter(|p| p.join("truth.pgrd").is_file())
        .unwrap_or(named)
}

fn read_samples(run: &Path) -> CliResult<Vec<Grid>> {
    let dir = run.join("samples");
    let mut out = Vec::new();
    while dir.join(format!("x_{}.pgrd", out.len())).is_file() {
        out.push(pgrd::read(dir.join(format!("x_{}.pgrd", out.len())))?);
    }
    Ok(out)
}

fn evaluate(run: &Path, truth: &Path) -> CliResult<MetricsRow> {
    let manifest = Manifest::read(run.join("manifest.txt")).unwrap_or_default();
    let inst = ProblemInstance::load(&truth_for(truth, run, &manifest))?;
    let x = pgrd::read(run.join("x.pgrd"))?;
    let phi = Kernel::new(pgrd::read(run.join("phi.pgrd"))?);
    x.ensure_same_shape(&inst.truth_x)?;
    phi.grid().ensure_same_shape(&inst.truth_x)?;
    let samples = read_samples(run)?;
    let stats = match posterior_stats(&samples, &inst.truth_x) {
        Ok(s) => Some(s),
        Err(PrismError::InsufficientSamples { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let mode = manifest.get("mode").unwrap_or("unknown").to_string();
    metrics_row(&name_of(run), &mode, &x, &phi, &inst, stats.as_ref())
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    if v.is_empty() {
        return None;
    }
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summary_row(rows: &[MetricsRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    format!(
        "{},{},{},{},{},{}",
        rows.len(),
        opt(mean_of(rows.iter().map(|r| Some(r.psnr)))),
        opt(mean_of(rows.iter().map(|r| Some(r.ssim)))),
        opt(mean_of(rows.iter().map(|r| Some(r.kernel_rmse)))),
        opt(mean_of(rows.iter().map(|r| r.nll))),
        opt(mean_of(rows.iter().map(|r| r.coverage3sd))),
    )
}

/// Returns the number of runs that had to be skipped.
pub fn run(args: &MetricsArgs) -> CliResult<usize> {
    let runs = run_dirs(&args.recon)?;
    if runs.is_empty() {
        return Err(CliError::Input(format!(
            "no reconstructions found in {}",
            args.recon.display()
        )));
    }

    let mut rows = Vec::new();
    let mut skipped = 0;
    for run in &runs {
        match evaluate(run, &args.truth) {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!("skipping {}: {e}", run.display());
                skipped += 1;
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Input("no reconstruction could be evaluated".into()));
    }

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(format!("creating {}", args.out.display()), e))?;
    let mut csv = format!("{}\n", MetricsRow::CSV_HEADER);
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    let summary = format!("{SUMMARY_HEADER}\n{}\n", summary_row(&rows));
    for (name, text) in [("metrics.csv", &csv), ("summary.csv", &summary)] {
        let path = args.out.join(name);
        fs::write(&path, text)
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    print!("{csv}{summary}");
    Ok(skipped)
}
