//! `train-discrete` and `train-continuous` subcommands.

use anyhow::{bail, Result};
use bgan_core::continuous::train_continuous;
use bgan_core::discrete::train_discrete;
use bgan_core::io::save_models;
use bgan_core::oracle::{exact_marginal, EnumerableSpace};
use bgan_core::rng::seeded;

use std::path::Path;

use crate::artifacts::{fmt_f64, write_sample_grid, write_samples_csv, CsvWriter};
use crate::config::ExperimentConfig;
use crate::experiments::{build_dataset, build_models, BuiltData};

pub fn cmd_train_discrete(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let data = build_dataset(config)?;
    if matches!(
        data.dataset.kind,
        bgan_core::data::ObservationKind::Real
    ) {
        bail!("train-discrete needs a discrete dataset; use train-continuous for {:?}", config.dataset);
    }
    let (mut gen, mut stat) = build_models(config, &data);

    emit_center_grid(config, &data, &gen, &dir.join("centers_initial.pgm"))?;

    let mut csv = CsvWriter::create(
        &dir.join("metrics.csv"),
        &[
            "iteration",
            "bound_estimate",
            "beta_hat",
            "grad_norm_g",
            "grad_norm_d",
            "baseline",
            "wall_ms",
        ],
    )?;
    let log_every = config.log_every;
    let mut write_err = None;
    train_discrete(
        &config.train_config(),
        &mut gen,
        &mut stat,
        &data.dataset,
        config.iters,
        |m| {
            if m.iteration % log_every == 0 && write_err.is_none() {
                if let Err(e) = csv.row(&[
                    m.iteration.to_string(),
                    fmt_f64(m.bound_estimate),
                    fmt_f64(m.beta_hat),
                    fmt_f64(m.grad_norm_g),
                    fmt_f64(m.grad_norm_d),
                    fmt_f64(m.baseline),
                    m.wall_ms.to_string(),
                ]) {
                    write_err = Some(e);
                }
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e);
    }

    save_models(&dir.join("final.ckpt"), Some(&gen), Some(&stat))?;
    emit_center_grid(config, &data, &gen, &dir.join("centers_final.pgm"))?;

    if let Some(target) = &data.exact_distribution {
        let space =
            EnumerableSpace::categorical(config.grid_positions, config.grid_classes)?;
        let rep = exact_marginal(&gen, &space)?;
        let tv: f64 = 0.5
            * rep
                .q
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        let mut table = CsvWriter::create(&dir.join("marginal.csv"), &["outcome", "target", "generator"])?;
        for (i, (t, q)) in target.iter().zip(&rep.q).enumerate() {
            table.row(&[i.to_string(), fmt_f64(*t), fmt_f64(*q)])?;
        }
        println!("final_tv={tv}");
        std::fs::write(dir.join("summary.txt"), format!("final_tv = {tv}\n"))?;
    }
    Ok(())
}

/// Render Bernoulli centers (image data) or conditional parameters for a
/// fixed latent panel.
fn emit_center_grid(
    config: &ExperimentConfig,
    data: &BuiltData,
    gen: &bgan_core::models::GeneratorModel,
    path: &Path,
) -> Result<()> {
    let Some((h, w)) = data.image_shape else {
        return Ok(());
    };
    let mut rng = seeded(config.seed.wrapping_add(0xBEEF));
    let (_, centers, _) = gen.sample(64, 1, &mut rng)?;
    write_sample_grid(path, &centers, h, w)?;
    Ok(())
}

pub fn cmd_train_continuous(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let data = build_dataset(config)?;
    if !matches!(data.dataset.kind, bgan_core::data::ObservationKind::Real) {
        bail!(
            "train-continuous needs real-valued data; use train-discrete for {:?}",
            config.dataset
        );
    }
    let (mut gen, mut stat) = build_models(config, &data);

    let mut csv = CsvWriter::create(
        &dir.join("metrics.csv"),
        &[
            "iteration",
            "gen_loss",
            "disc_bound",
            "penalty",
            "modes_covered",
            "wall_ms",
        ],
    )?;
    let mut write_err = None;
    train_continuous(
        &config.train_config(),
        &mut gen,
        &mut stat,
        &data.dataset,
        config.loss,
        config.gen_steps_per_disc,
        config.iters,
        config.disc_warmup,
        config.log_every,
        data.coverage.as_ref(),
        |m| {
            if write_err.is_none() {
                if let Err(e) = csv.row(&[
                    m.iteration.to_string(),
                    fmt_f64(m.gen_loss),
                    fmt_f64(m.disc_bound),
                    fmt_f64(m.penalty),
                    m.modes_covered.to_string(),
                    m.wall_ms.to_string(),
                ]) {
                    write_err = Some(e);
                }
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e);
    }

    save_models(&dir.join("final.ckpt"), Some(&gen), Some(&stat))?;
    let mut rng = seeded(config.seed.wrapping_add(0xBEEF));
    let (_, samples, _) = gen.sample(2000, 1, &mut rng)?;
    write_samples_csv(&dir.join("samples_final.csv"), &samples)?;
    if let Some(cov) = &data.coverage {
        let covered = cov.count_covered(&samples);
        println!("modes_covered={covered}");
        std::fs::write(dir.join("summary.txt"), format!("modes_covered = {covered}\n"))?;
    }
    Ok(())
}
