//! `eval`: load a checkpoint, draw samples, and score them against the
//! configured dataset's ground truth where one exists.

use anyhow::{Context, Result};
use bgan_core::io::load_generator;
use bgan_core::oracle::{exact_marginal, EnumerableSpace};
use bgan_core::rng::seeded;

use std::fmt::Write as _;
use std::path::Path;

use crate::artifacts::{write_sample_grid, write_samples_csv};
use crate::config::ExperimentConfig;
use crate::experiments::build_dataset;

pub fn cmd_eval(config: &ExperimentConfig, checkpoint: &Path, dir: &Path) -> Result<()> {
    let gen = load_generator(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let data = build_dataset(config)?;
    let mut rng = seeded(config.seed.wrapping_add(0xE7A1));
    let (_, params, samples) = gen.sample(2000, 1, &mut rng)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "checkpoint = {}", checkpoint.display());
    if let Some((h, w)) = data.image_shape {
        write_sample_grid(&dir.join("eval_centers.pgm"), &params, h, w)?;
        let _ = writeln!(summary, "grid = eval_centers.pgm");
    } else if samples.cols() == 2 {
        write_samples_csv(&dir.join("eval_samples.csv"), &params)?;
        let _ = writeln!(summary, "samples = eval_samples.csv");
    }
    if let Some(target) = &data.exact_distribution {
        let space = EnumerableSpace::categorical(config.grid_positions, config.grid_classes)?;
        let rep = exact_marginal(&gen, &space)?;
        let tv: f64 = 0.5
            * rep
                .q
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        let _ = writeln!(summary, "tv_to_target = {tv}");
        println!("tv_to_target={tv}");
    }
    if let Some(cov) = &data.coverage {
        let covered = cov.count_covered(&params);
        let _ = writeln!(summary, "modes_covered = {covered}");
        println!("modes_covered={covered}");
    }
    std::fs::write(dir.join("eval_report.txt"), summary)?;
    Ok(())
}
