//! `exp-pixel-descent`: train a proxy-loss GAN, over-train the
//! discriminator on the frozen generator, then descend generated samples
//! directly under each generator loss.

use anyhow::Result;
use bgan_core::continuous::{pixel_descent, train_continuous, GeneratorLossKind};
use bgan_core::discrete::{discriminator_step, train_discrete};
use bgan_core::graph::Graph;
use bgan_core::rng::seeded;
use bgan_core::tensor::Tensor;

use std::fmt::Write as _;
use std::path::Path;

use crate::artifacts::{fmt_f64, write_sample_grid, write_samples_csv, CsvWriter};
use crate::config::ExperimentConfig;
use crate::experiments::{build_dataset, build_models};

const FINETUNE_STEPS: usize = 1000;

pub fn cmd_experiment_pixel_descent(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let data = build_dataset(config)?;
    let (mut gen, mut stat) = build_models(config, &data);

    // proxy-loss pre-training
    let continuous = matches!(data.dataset.kind, bgan_core::data::ObservationKind::Real);
    if continuous {
        train_continuous(
            &config.train_config(),
            &mut gen,
            &mut stat,
            &data.dataset,
            GeneratorLossKind::Proxy,
            1,
            config.iters,
            config.disc_warmup,
            config.iters.max(1),
            None,
            |_| {},
        )?;
    } else {
        train_discrete(
            &config.train_config(),
            &mut gen,
            &mut stat,
            &data.dataset,
            config.iters,
            |_| {},
        )?;
    }

    // over-train the discriminator against the frozen generator
    let tc = config.train_config();
    let mut opt_d = tc.disc_rule.optimizer(tc.gamma_d);
    let mut rng = seeded(config.seed.wrapping_add(101));
    for _ in 0..FINETUNE_STEPS {
        let real = data.dataset.sample_batch(config.n_prior, &mut rng)?;
        let (_, params, x) = gen.sample(config.n_prior, 1, &mut rng)?;
        let fake = if continuous { params } else { x };
        discriminator_step(
            config.divergence,
            &mut stat,
            &mut opt_d,
            &real,
            &fake,
            config.penalty,
            config.clamp,
            config.penalty_on_fake,
        )?;
    }

    // starting batch of generated samples
    let (_, params, x) = gen.sample(64, 1, &mut rng)?;
    let x_init = if continuous { params } else { x };
    dump_samples(config, &data, &x_init, dir, "descent_initial")?;

    let mut summary = String::new();
    for kind in [
        GeneratorLossKind::BoundarySeeking,
        GeneratorLossKind::Minimax,
        GeneratorLossKind::Proxy,
    ] {
        let (losses, x_final) = pixel_descent(
            config.divergence,
            &stat,
            &x_init,
            kind,
            config.descent_steps,
            config.descent_step_size,
        )?;
        let mut csv = CsvWriter::create(
            &dir.join(format!("descent_{}.csv", kind.name())),
            &["step", "loss"],
        )?;
        for (i, l) in losses.iter().enumerate() {
            csv.row(&[i.to_string(), fmt_f64(*l)])?;
        }
        dump_samples(
            config,
            &data,
            &x_final,
            dir,
            &format!("descent_final_{}", kind.name()),
        )?;

        let median_abs_f = |x: &Tensor| -> f64 {
            let mut g = Graph::new();
            let vars = stat.net.bind_frozen(&mut g);
            let xv = g.constant(x.clone());
            let f = stat.forward(&mut g, &vars, xv).unwrap();
            let mut vals: Vec<f64> = g.value(f).data().iter().map(|v| v.abs()).collect();
            vals.sort_by(f64::total_cmp);
            vals[vals.len() / 2]
        };
        let _ = writeln!(
            summary,
            "{}: loss {} -> {}; median |F| {} -> {}",
            kind.name(),
            losses[0],
            losses[losses.len() - 1],
            median_abs_f(&x_init),
            median_abs_f(&x_final),
        );
    }
    std::fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn dump_samples(
    _config: &ExperimentConfig,
    data: &crate::experiments::BuiltData,
    samples: &Tensor,
    dir: &Path,
    stem: &str,
) -> Result<()> {
    if let Some((h, w)) = data.image_shape {
        write_sample_grid(&dir.join(format!("{stem}.pgm")), samples, h, w)?;
    } else if samples.cols() == 2 {
        write_samples_csv(&dir.join(format!("{stem}.csv")), samples)?;
    }
    Ok(())
}
