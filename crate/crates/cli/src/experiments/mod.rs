//! Experiment implementations behind the CLI subcommands.

pub mod advclass;
pub mod eval;
pub mod oracle_report;
pub mod overtrain;
pub mod pixel;
pub mod train;
pub mod variance;

use anyhow::{bail, Context, Result};
use bgan_core::continuous::CoverageSpec;
use bgan_core::data::{
    binarize, downsample, read_idx, ring_centers, synth_blobs, synth_categorical_grid,
    synth_gaussian_ring, Binarize, Dataset,
};
use bgan_core::models::{
    Activation, ConditionalFamily, GeneratorModel, Mlp, Prior, StatisticNetwork,
};
use bgan_core::rng::seeded;

use crate::config::ExperimentConfig;

/// A dataset plus the side information experiments need about it.
pub struct BuiltData {
    pub dataset: Dataset,
    /// Exact outcome distribution (synthetic grids).
    pub exact_distribution: Option<Vec<f64>>,
    /// Mode-coverage probe (ring data).
    pub coverage: Option<CoverageSpec>,
    /// Image height/width (binarized image data).
    pub image_shape: Option<(usize, usize)>,
}

pub fn build_dataset(config: &ExperimentConfig) -> Result<BuiltData> {
    match config.dataset.as_str() {
        "toy-grid" => {
            let grid = synth_categorical_grid(
                config.grid_positions,
                config.grid_classes,
                &config.grid_pattern,
                config.dataset_size,
                77,
            )?;
            Ok(BuiltData {
                dataset: grid.dataset,
                exact_distribution: Some(grid.distribution),
                coverage: None,
                image_shape: None,
            })
        }
        "ring" => {
            let ds = synth_gaussian_ring(
                config.ring_modes,
                config.ring_radius,
                config.ring_sigma,
                config.dataset_size.max(1000),
                55,
            )?;
            Ok(BuiltData {
                coverage: Some(CoverageSpec {
                    centers: ring_centers(config.ring_modes, config.ring_radius),
                    radius: 3.0 * config.ring_sigma,
                    min_share: 0.02,
                    n_samples: 2000,
                }),
                dataset: ds,
                exact_distribution: None,
                image_shape: None,
            })
        }
        "blobs" => Ok(BuiltData {
            dataset: synth_blobs(200, 0.5, 4.0, 42)?,
            exact_distribution: None,
            coverage: None,
            image_shape: None,
        }),
        "mnist14" | "mnist28" => {
            let dir = config.resolve_data_dir();
            let path = dir.join("train-images-idx3-ubyte");
            if !path.exists() {
                bail!(
                    "MNIST file {} not found; set BGAN_DATA_DIR or --data-dir",
                    path.display()
                );
            }
            let imgs = read_idx(&path)
                .with_context(|| format!("parsing {}", path.display()))?
                .to_images()?;
            let (imgs, side) = if config.dataset == "mnist14" {
                (downsample(&imgs, 2)?, 14)
            } else {
                (imgs, 28)
            };
            let ds = binarize(&imgs, Binarize::Stochastic { seed: 5 })?
                .take(config.dataset_size.max(1000));
            Ok(BuiltData {
                dataset: ds,
                exact_distribution: None,
                coverage: None,
                image_shape: Some((side, side)),
            })
        }
        other => bail!("unknown dataset {other:?} (toy-grid | ring | blobs | mnist14 | mnist28)"),
    }
}

pub fn build_prior(config: &ExperimentConfig) -> Prior {
    match config.prior.as_str() {
        "normal" => Prior::StandardNormal {
            dim: config.latent_dim,
        },
        _ => Prior::Uniform01 {
            dim: config.latent_dim,
        },
    }
}

/// Conditional family appropriate for a dataset.
pub fn family_for(data: &BuiltData) -> ConditionalFamily {
    match data.dataset.kind {
        bgan_core::data::ObservationKind::Binary => ConditionalFamily::Bernoulli {
            dims: data.dataset.observed_dim(),
        },
        bgan_core::data::ObservationKind::OneHotCategorical { positions, classes } => {
            ConditionalFamily::Categorical { positions, classes }
        }
        bgan_core::data::ObservationKind::Real => ConditionalFamily::Deterministic {
            dims: data.dataset.observed_dim(),
        },
    }
}

pub fn build_models(
    config: &ExperimentConfig,
    data: &BuiltData,
) -> (GeneratorModel, StatisticNetwork) {
    let family = family_for(data);
    let gen_net = Mlp::new(
        config.latent_dim,
        &config.gen_hidden,
        family.param_dim(),
        config.gen_activation,
        &mut seeded(config.seed * 13 + 3),
    );
    let gen = GeneratorModel::new(build_prior(config), gen_net, family);
    let stat_net = Mlp::new(
        data.dataset.observed_dim(),
        &config.disc_hidden,
        1,
        config.disc_activation,
        &mut seeded(config.seed * 13 + 4),
    );
    (gen, StatisticNetwork::new(stat_net))
}

/// Per-(experiment, dataset) defaults applied before config files and flags.
pub fn apply_preset(config: &mut ExperimentConfig, experiment: &str, dataset: &str) {
    config.experiment = experiment.to_string();
    config.dataset = dataset.to_string();
    match dataset {
        "toy-grid" => {
            config.n_prior = 128;
            config.m_cond = 20;
            config.gamma_d = 1e-2;
            config.gamma_g = 3e-3;
            config.penalty = 0.1;
            config.iters = 2000;
            config.latent_dim = 2;
            config.gen_hidden = vec![16];
            config.disc_hidden = vec![16, 16];
            config.gen_activation = Activation::Tanh;
            config.disc_activation = Activation::Tanh;
            config.prior = "uniform".into();
        }
        "mnist14" | "mnist28" => {
            config.n_prior = 64;
            config.m_cond = 5;
            config.gamma_d = 1e-4;
            config.gamma_g = 1e-4;
            config.penalty = 1.0;
            config.iters = 50 * (10_000 / 64);
            config.latent_dim = 64;
            config.gen_hidden = vec![128, 128, 128];
            config.disc_hidden = vec![128, 128, 128];
            config.gen_activation = Activation::Relu;
            config.disc_activation = Activation::Relu;
            config.prior = "uniform".into();
            config.dataset_size = 10_000;
            config.log_every = 10;
        }
        "ring" => {
            config.n_prior = 128;
            config.m_cond = 1;
            config.gamma_d = 1e-2;
            config.gamma_g = 1e-3;
            config.penalty = 0.1;
            config.penalty_on_fake = true;
            config.iters = 20_000;
            config.latent_dim = 2;
            config.gen_hidden = vec![64, 64];
            config.disc_hidden = vec![64, 64];
            config.gen_activation = Activation::Tanh;
            config.disc_activation = Activation::Relu;
            config.prior = "normal".into();
            config.log_every = 1000;
            config.ring_radius = 1.0;
            config.ring_sigma = 0.2;
        }
        "blobs" => {
            config.n_prior = 32;
            config.m_cond = 8;
            config.gamma_d = 5e-3;
            config.gamma_g = 5e-3;
            config.penalty = 5.0;
            config.iters = 3000;
            config.latent_dim = 2;
            config.gen_hidden = vec![32];
            config.disc_hidden = vec![32, 32];
            config.gen_activation = Activation::Tanh;
            config.disc_activation = Activation::Tanh;
        }
        _ => {}
    }
    match experiment {
        "exp-overtrain" => {
            config.gen_steps_per_disc = 5;
        }
        "exp-pixel-descent" => {
            config.iters = 3000;
            config.descent_steps = 2000;
            config.descent_step_size = 0.01;
        }
        _ => {}
    }
}
