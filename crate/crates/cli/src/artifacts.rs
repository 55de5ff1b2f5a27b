//! Run-directory artifacts: CSV metrics, config snapshots, sample dumps.

use anyhow::{Context, Result};
use bgan_core::tensor::Tensor;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;

/// Comma-separated, header row, UTF-8, LF line endings.
pub struct CsvWriter {
    file: std::fs::File,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut file = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        file.write_all(header.join(",").as_bytes())?;
        file.write_all(b"\n")?;
        Ok(CsvWriter { file })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.file.write_all(fields.join(",").as_bytes())?;
        self.file.write_all(b"\n")?;
        Ok(())
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Create the run directory and archive the configuration beside the
/// outputs: the resolved config, a verbatim copy of the source file when one
/// was given, and an environment/seed record.
pub fn prepare_run_dir(
    config: &ExperimentConfig,
    source_config: Option<&Path>,
    argv: &[String],
) -> Result<PathBuf> {
    let dir = config.out.clone();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    std::fs::write(dir.join("config_resolved.txt"), config.to_text())?;
    if let Some(src) = source_config {
        std::fs::copy(src, dir.join("config_source.txt"))
            .with_context(|| format!("archiving config file {}", src.display()))?;
    }
    let mut info = String::new();
    let _ = writeln!(info, "binary_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(info, "seed = {}", config.seed);
    let _ = writeln!(info, "experiment = {}", config.experiment);
    let _ = writeln!(info, "argv = {}", argv.join(" "));
    std::fs::write(dir.join("run_info.txt"), info)?;
    Ok(dir)
}

/// Dump 2-d samples as a `x,y` CSV.
pub fn write_samples_csv(path: &Path, samples: &Tensor) -> Result<()> {
    let mut w = CsvWriter::create(path, &["x", "y"])?;
    for i in 0..samples.rows() {
        w.row(&[fmt_f64(samples.get2(i, 0)), fmt_f64(samples.get2(i, 1))])?;
    }
    Ok(())
}

/// Tile image-shaped rows in [0,1] into a PGM grid file.
pub fn write_sample_grid(path: &Path, samples: &Tensor, h: usize, w: usize) -> Result<()> {
    let cols = (samples.rows() as f64).sqrt().ceil() as usize;
    let (gw, gh, pixels) = bgan_core::io::tile_grid(samples, h, w, cols.max(1));
    bgan_core::io::write_pgm(path, gw, gh, &pixels)?;
    Ok(())
}
