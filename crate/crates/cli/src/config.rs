//! Experiment configuration: flat `key = value` files with `#` comments,
//! overridden by command-line flags. The resolved configuration is archived
//! verbatim beside a run's outputs.

use anyhow::{bail, Context, Result};
use bgan_core::continuous::GeneratorLossKind;
use bgan_core::discrete::{Estimator, TrainConfig, UpdateRule};
use bgan_core::fdiv::Divergence;
use bgan_core::models::Activation;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Every tunable of a run. Serialized as `key = value` lines.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub dataset: String,
    pub divergence: Divergence,
    pub estimator: Estimator,
    pub loss: GeneratorLossKind,
    pub n_prior: usize,
    pub m_cond: usize,
    pub gamma_d: f64,
    pub gamma_g: f64,
    pub penalty: f64,
    pub penalty_on_fake: bool,
    pub iters: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub gen_steps_per_disc: usize,
    pub disc_warmup: usize,
    /// Latent prior family: "uniform" (on [0,1]) or "normal".
    pub prior: String,
    pub latent_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub gen_activation: Activation,
    pub disc_activation: Activation,
    pub clamp: f64,
    pub log_every: usize,
    pub gen_rule: UpdateRule,
    pub disc_rule: UpdateRule,
    pub grid_pattern: String,
    pub grid_positions: usize,
    pub grid_classes: usize,
    pub ring_modes: usize,
    pub ring_radius: f64,
    pub ring_sigma: f64,
    pub dataset_size: usize,
    pub descent_steps: usize,
    pub descent_step_size: f64,
    pub sweep_seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            dataset: "toy-grid".into(),
            divergence: Divergence::Gan,
            estimator: Estimator::Alpha,
            loss: GeneratorLossKind::BoundarySeeking,
            n_prior: 64,
            m_cond: 20,
            gamma_d: 1e-4,
            gamma_g: 1e-4,
            penalty: 1.0,
            penalty_on_fake: false,
            iters: 2000,
            seed: 0,
            out: PathBuf::from("runs/out"),
            data_dir: None,
            gen_steps_per_disc: 1,
            disc_warmup: 0,
            prior: "uniform".into(),
            latent_dim: 64,
            gen_hidden: vec![256, 256, 256],
            disc_hidden: vec![256, 256, 256],
            gen_activation: Activation::Relu,
            disc_activation: Activation::Relu,
            clamp: bgan_core::fdiv::DEFAULT_STATISTIC_CLAMP,
            log_every: 1,
            gen_rule: UpdateRule::Adam,
            disc_rule: UpdateRule::Adam,
            grid_pattern: "two-mode".into(),
            grid_positions: 2,
            grid_classes: 2,
            ring_modes: 8,
            ring_radius: 1.0,
            ring_sigma: 0.2,
            dataset_size: 4096,
            descent_steps: 2000,
            descent_step_size: 0.01,
            sweep_seeds: 5,
        }
    }
}

impl ExperimentConfig {
    /// Apply one `key = value` assignment, failing with the field name on
    /// unknown keys or unparsable values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let ctx = || format!("invalid value {value:?} for field {key:?}");
        match key {
            "experiment" => self.experiment = value.to_string(),
            "dataset" => self.dataset = value.to_string(),
            "divergence" => self.divergence = value.parse().with_context(ctx)?,
            "estimator" => self.estimator = value.parse().with_context(ctx)?,
            "loss" => self.loss = value.parse().with_context(ctx)?,
            "n_prior" => self.n_prior = value.parse().with_context(ctx)?,
            "m_cond" => self.m_cond = value.parse().with_context(ctx)?,
            "gamma_d" => self.gamma_d = value.parse().with_context(ctx)?,
            "gamma_g" => self.gamma_g = value.parse().with_context(ctx)?,
            "penalty" => self.penalty = value.parse().with_context(ctx)?,
            "penalty_on_fake" => self.penalty_on_fake = value.parse().with_context(ctx)?,
            "iters" => self.iters = value.parse().with_context(ctx)?,
            "seed" => self.seed = value.parse().with_context(ctx)?,
            "out" => self.out = PathBuf::from(value),
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "gen_steps_per_disc" => self.gen_steps_per_disc = value.parse().with_context(ctx)?,
            "disc_warmup" => self.disc_warmup = value.parse().with_context(ctx)?,
            "prior" => match value {
                "uniform" | "normal" => self.prior = value.to_string(),
                _ => bail!("invalid value {value:?} for field \"prior\" (uniform | normal)"),
            },
            "latent_dim" => self.latent_dim = value.parse().with_context(ctx)?,
            "gen_hidden" => self.gen_hidden = parse_dims(value).with_context(ctx)?,
            "disc_hidden" => self.disc_hidden = parse_dims(value).with_context(ctx)?,
            "activation" => {
                let a = value.parse().with_context(ctx)?;
                self.gen_activation = a;
                self.disc_activation = a;
            }
            "gen_activation" => self.gen_activation = value.parse().with_context(ctx)?,
            "disc_activation" => self.disc_activation = value.parse().with_context(ctx)?,
            "clamp" => self.clamp = value.parse().with_context(ctx)?,
            "log_every" => self.log_every = value.parse().with_context(ctx)?,
            "gen_rule" => self.gen_rule = value.parse().with_context(ctx)?,
            "disc_rule" => self.disc_rule = value.parse().with_context(ctx)?,
            "grid_pattern" => self.grid_pattern = value.to_string(),
            "grid_positions" => self.grid_positions = value.parse().with_context(ctx)?,
            "grid_classes" => self.grid_classes = value.parse().with_context(ctx)?,
            "ring_modes" => self.ring_modes = value.parse().with_context(ctx)?,
            "ring_radius" => self.ring_radius = value.parse().with_context(ctx)?,
            "ring_sigma" => self.ring_sigma = value.parse().with_context(ctx)?,
            "dataset_size" => self.dataset_size = value.parse().with_context(ctx)?,
            "descent_steps" => self.descent_steps = value.parse().with_context(ctx)?,
            "descent_step_size" => self.descent_step_size = value.parse().with_context(ctx)?,
            "sweep_seeds" => self.sweep_seeds = value.parse().with_context(ctx)?,
            other => bail!("unknown config field {other:?}"),
        }
        Ok(())
    }

    /// Parse a `key = value` config file on top of the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    lineno + 1
                );
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_prior < 1 {
            bail!("invalid config field n_prior: must be >= 1");
        }
        if self.m_cond < 1 {
            bail!("invalid config field m_cond: must be >= 1");
        }
        if self.gamma_d < 0.0 {
            bail!("invalid config field gamma_d: must be >= 0");
        }
        if self.gamma_g < 0.0 {
            bail!("invalid config field gamma_g: must be >= 0");
        }
        if self.penalty < 0.0 {
            bail!("invalid config field penalty: must be >= 0");
        }
        if self.gen_steps_per_disc < 1 {
            bail!("invalid config field gen_steps_per_disc: must be >= 1");
        }
        if self.latent_dim < 1 {
            bail!("invalid config field latent_dim: must be >= 1");
        }
        if self.log_every < 1 {
            bail!("invalid config field log_every: must be >= 1");
        }
        Ok(())
    }

    /// The training-loop slice of the configuration.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_prior: self.n_prior,
            m_conditional: self.m_cond,
            gamma_d: self.gamma_d,
            gamma_g: self.gamma_g,
            divergence: self.divergence,
            penalty_coefficient: self.penalty,
            estimator: self.estimator,
            seed: self.seed,
            statistic_clamp: self.clamp,
            baseline_decay: 0.9,
            penalty_on_fake: self.penalty_on_fake,
            gen_rule: self.gen_rule,
            disc_rule: self.disc_rule,
        }
    }

    /// Serialize every field as `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dims = |d: &[usize]| {
            d.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let act_name = |a: Activation| match a {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Square => "square",
        };
        let rule = |r: UpdateRule| match r {
            UpdateRule::Adam => "adam",
            UpdateRule::Sgd => "sgd",
        };
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "dataset = {}", self.dataset);
        let _ = writeln!(s, "divergence = {}", self.divergence);
        let _ = writeln!(s, "estimator = {}", self.estimator.name());
        let _ = writeln!(s, "loss = {}", self.loss.name());
        let _ = writeln!(s, "n_prior = {}", self.n_prior);
        let _ = writeln!(s, "m_cond = {}", self.m_cond);
        let _ = writeln!(s, "gamma_d = {}", self.gamma_d);
        let _ = writeln!(s, "gamma_g = {}", self.gamma_g);
        let _ = writeln!(s, "penalty = {}", self.penalty);
        let _ = writeln!(s, "penalty_on_fake = {}", self.penalty_on_fake);
        let _ = writeln!(s, "iters = {}", self.iters);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out.display());
        if let Some(d) = &self.data_dir {
            let _ = writeln!(s, "data_dir = {}", d.display());
        }
        let _ = writeln!(s, "gen_steps_per_disc = {}", self.gen_steps_per_disc);
        let _ = writeln!(s, "disc_warmup = {}", self.disc_warmup);
        let _ = writeln!(s, "prior = {}", self.prior);
        let _ = writeln!(s, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(s, "gen_hidden = {}", dims(&self.gen_hidden));
        let _ = writeln!(s, "disc_hidden = {}", dims(&self.disc_hidden));
        let _ = writeln!(s, "gen_activation = {}", act_name(self.gen_activation));
        let _ = writeln!(s, "disc_activation = {}", act_name(self.disc_activation));
        let _ = writeln!(s, "clamp = {}", self.clamp);
        let _ = writeln!(s, "log_every = {}", self.log_every);
        let _ = writeln!(s, "gen_rule = {}", rule(self.gen_rule));
        let _ = writeln!(s, "disc_rule = {}", rule(self.disc_rule));
        let _ = writeln!(s, "grid_pattern = {}", self.grid_pattern);
        let _ = writeln!(s, "grid_positions = {}", self.grid_positions);
        let _ = writeln!(s, "grid_classes = {}", self.grid_classes);
        let _ = writeln!(s, "ring_modes = {}", self.ring_modes);
        let _ = writeln!(s, "ring_radius = {}", self.ring_radius);
        let _ = writeln!(s, "ring_sigma = {}", self.ring_sigma);
        let _ = writeln!(s, "dataset_size = {}", self.dataset_size);
        let _ = writeln!(s, "descent_steps = {}", self.descent_steps);
        let _ = writeln!(s, "descent_step_size = {}", self.descent_step_size);
        let _ = writeln!(s, "sweep_seeds = {}", self.sweep_seeds);
        s
    }

    /// Directory for the MNIST IDX files: `--data-dir` / config, else
    /// `BGAN_DATA_DIR`, else `./data`.
    pub fn resolve_data_dir(&self) -> PathBuf {
        if let Some(d) = &self.data_dir {
            return d.clone();
        }
        if let Ok(d) = std::env::var("BGAN_DATA_DIR") {
            return PathBuf::from(d);
        }
        PathBuf::from("data")
    }
}

fn parse_dims(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| v.trim().parse::<usize>().map_err(Into::into))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let mut c = ExperimentConfig::default();
        let err = c.set("gammma_d", "0.1").unwrap_err();
        assert!(err.to_string().contains("gammma_d"));
    }

    #[test]
    fn bad_value_is_attributed_to_its_field() {
        let mut c = ExperimentConfig::default();
        let err = c.set("n_prior", "many").unwrap_err();
        assert!(format!("{err:#}").contains("n_prior"));
    }

    #[test]
    fn file_round_trip_preserves_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        let mut a = ExperimentConfig::default();
        a.set("divergence", "sh").unwrap();
        a.set("gen_hidden", "32, 16").unwrap();
        a.set("gamma_g", "0.0025").unwrap();
        std::fs::write(&path, a.to_text()).unwrap();
        let mut b = ExperimentConfig::default();
        b.apply_file(&path).unwrap();
        assert_eq!(b.divergence, Divergence::SquaredHellinger);
        assert_eq!(b.gen_hidden, vec![32, 16]);
        assert_eq!(b.gamma_g, 0.0025);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "# a comment\n\nseed = 9 # trailing\n").unwrap();
        let mut c = ExperimentConfig::default();
        c.apply_file(&path).unwrap();
        assert_eq!(c.seed, 9);
    }
}
