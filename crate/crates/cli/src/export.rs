use std::path::Path;

use image::{DynamicImage, GrayImage, Luma};
use prism_core::Grid;

use crate::error::{CliError, CliResult};

/// 8-bit grayscale export; values are clamped to `[0, 1]` after dividing by
/// `peak`.
pub fn write_png(path: &Path, grid: &Grid, peak: f64) -> CliResult<()> {
    let (h, w) = grid.shape();
    let peak = if peak > 0.0 { peak } else { 1.0 };
    let img = GrayImage::from_fn(w as u32, h as u32, |c, r| {
        let v = (grid[(r as usize, c as usize)] / peak).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    });
    img.save(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Kernels are tiny in absolute value, so they are shown scaled to their
/// maximum and shifted so the origin sits in the middle.
pub fn write_kernel_png(path: &Path, kernel: &Grid) -> CliResult<()> {
    write_png(path, &kernel.fftshift(), kernel.max())
}

fn open(path: &Path) -> CliResult<DynamicImage> {
    image::open(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn to_grid(width: u32, height: u32, values: impl Fn(u32, u32) -> f32) -> CliResult<Grid> {
    let grid = Grid::from_fn(height as usize, width as usize, |r, c| {
        values(c as u32, r as u32) as f64
    });
    if grid.is_empty() {
        return Err(CliError::Input("image has no pixels".into()));
    }
    Ok(grid)
}

/// Grayscale `[0, 1]` by luminance.
pub fn read_luminance(path: &Path) -> CliResult<Grid> {
    let img = open(path)?.to_luma32f();
    to_grid(img.width(), img.height(), |c, r| img.get_pixel(c, r)[0])
}

/// The three colour channels, each in `[0, 1]`.
pub fn read_rgb(path: &Path) -> CliResult<[Grid; 3]> {
    let img = open(path)?.to_rgb32f();
    let channel = |i: usize| to_grid(img.width(), img.height(), |c, r| img.get_pixel(c, r)[i]);
    Ok([channel(0)?, channel(1)?, channel(2)?])
}
