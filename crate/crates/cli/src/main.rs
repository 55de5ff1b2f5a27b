//! Command-line front end for boundary-seeking GAN experiments.

mod artifacts;
mod config;
mod experiments;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use std::path::PathBuf;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "bgan", version, about = "Boundary-seeking GAN training and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a discrete generator with importance-weighted policy gradients
    TrainDiscrete(RunArgs),
    /// Train a continuous generator (boundary / minimax / proxy losses)
    TrainContinuous(RunArgs),
    /// Compare the two policy-gradient estimators at matched sample budgets
    ExpVariance(RunArgs),
    /// Generator over-training resilience on the Gaussian ring
    ExpOvertrain(RunArgs),
    /// Gradient descent directly on samples under a frozen discriminator
    ExpPixelDescent(RunArgs),
    /// Adversarial classification against a cross-entropy baseline
    ExpAdvClass(RunArgs),
    /// Run the exact-oracle invariant suite
    Oracle(OracleArgs),
    /// Evaluate a saved checkpoint
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for metrics, checkpoints and grids
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding the MNIST IDX files
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// gan | js | kl | rkl | sh
    #[arg(long)]
    divergence: Option<String>,
    /// alpha | beta | reinforce
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    gamma_d: Option<f64>,
    #[arg(long)]
    gamma_g: Option<f64>,
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long)]
    n_prior: Option<usize>,
    #[arg(long)]
    m_cond: Option<usize>,
    #[arg(long)]
    gen_steps_per_disc: Option<usize>,
    /// toy-grid | ring | blobs | mnist14 | mnist28
    #[arg(long)]
    dataset: Option<String>,
    /// boundary | minimax | proxy (continuous generator objective)
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
    /// Comma-separated hidden widths, e.g. 64,64
    #[arg(long)]
    gen_hidden: Option<String>,
    #[arg(long)]
    disc_hidden: Option<String>,
    /// Seeds per configuration in sweep experiments
    #[arg(long)]
    sweep_seeds: Option<usize>,
    #[arg(long)]
    descent_steps: Option<usize>,
    #[arg(long)]
    descent_step_size: Option<f64>,
}

#[derive(Args)]
struct OracleArgs {
    /// Restrict the suite to one divergence
    #[arg(long)]
    divergence: Option<String>,
    /// Write the report to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint produced by a training run
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn assignments(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = Vec::new();
        macro_rules! push {
            ($key:literal, $field:expr) => {
                if let Some(v) = &$field {
                    out.push(($key, v.to_string()));
                }
            };
        }
        push!("seed", self.seed);
        push!("divergence", self.divergence);
        push!("estimator", self.estimator);
        push!("iters", self.iters);
        push!("gamma_d", self.gamma_d);
        push!("gamma_g", self.gamma_g);
        push!("penalty", self.penalty);
        push!("n_prior", self.n_prior);
        push!("m_cond", self.m_cond);
        push!("gen_steps_per_disc", self.gen_steps_per_disc);
        push!("dataset", self.dataset);
        push!("loss", self.loss);
        push!("latent_dim", self.latent_dim);
        push!("log_every", self.log_every);
        push!("gen_hidden", self.gen_hidden);
        push!("disc_hidden", self.disc_hidden);
        push!("sweep_seeds", self.sweep_seeds);
        push!("descent_steps", self.descent_steps);
        push!("descent_step_size", self.descent_step_size);
        if let Some(v) = &self.out {
            out.push(("out", v.display().to_string()));
        }
        if let Some(v) = &self.data_dir {
            out.push(("data_dir", v.display().to_string()));
        }
        out
    }

    /// Defaults, then the (experiment, dataset) preset, then the config
    /// file, then flags.
    fn resolve(&self, experiment: &str, default_dataset: &str) -> Result<ExperimentConfig> {
        // first pass just discovers which dataset the run targets
        let mut probe = ExperimentConfig::default();
        if let Some(path) = &self.config {
            probe.apply_file(path)?;
        }
        let mut dataset = probe.dataset;
        if probe.experiment.is_empty() && self.config.is_none() {
            dataset = default_dataset.to_string();
        }
        if let Some(d) = &self.dataset {
            dataset = d.clone();
        }

        let mut cfg = ExperimentConfig::default();
        experiments::apply_preset(&mut cfg, experiment, &dataset);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.assignments() {
            cfg.set(key, &value)?;
        }
        cfg.experiment = experiment.to_string();
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = run(cli, &argv);
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.cmd {
        Cmd::TrainDiscrete(args) => {
            let cfg = args.resolve("train-discrete", "toy-grid")?;
            let dir = artifacts::prepare_run_dir(&cfg, args.config.as_deref(), argv)?;
            experiments::train::cmd_train_discrete(&cfg, &dir)
        }
        Cmd::TrainContinuous(args) => {
            let cfg = args.resolve("train-continuous", "ring")?;
            let dir = artifacts::prepare_run_dir(&cfg, args.config.as_deref(), argv)?;
            experiments::train::cmd_train_continuous(&cfg, &dir)
        }
        Cmd::ExpVariance(args) => {
            let cfg = args.resolve("exp-variance", "toy-grid")?;
            let dir = artifacts::prepare_run_dir(&cfg, args.config.as_deref(), argv)?;
            experiments::variance::cmd_experiment_variance(&cfg, &dir)
        }
        Cmd::ExpOvertrain(args) => {
            let cfg = args.resolve("exp-overtrain", "ring")?;
            let dir = artifacts::prepare_run_dir(&cfg, args.config.as_deref(), argv)?;
            experiments::overtrain::cmd_experiment_overtrain(&cfg, &dir)
        }
        Cmd::ExpPixelDescent(args) => {
            let cfg = args.resolve("exp-pixel-descent", "ring")?;
            let dir = artifacts::prepare_run_dir(&cfg, args.config.as_deref(), argv)?;
            experiments::pixel::cmd_experiment_pixel_descent(&cfg, &dir)
        }
        Cmd::ExpAdvClass(args) => {
            let cfg = args.resolve("exp-adv-class", "blobs")?;
            let dir = artifacts::prepare_run_dir(&cfg, args.config.as_deref(), argv)?;
            experiments::advclass::cmd_experiment_adv_class(&cfg, &dir)
        }
        Cmd::Oracle(args) => {
            let filter = args
                .divergence
                .as_deref()
                .map(str::parse)
                .transpose()?;
            experiments::oracle_report::cmd_oracle(filter, args.out.as_deref())
        }
        Cmd::Eval(args) => {
            let mut cfg = ExperimentConfig::default();
            cfg.experiment = "eval".into();
            if let Some(d) = &args.dataset {
                experiments::apply_preset(&mut cfg, "eval", d);
                cfg.dataset = d.clone();
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(dir) = &args.data_dir {
                cfg.data_dir = Some(dir.clone());
            }
            cfg.out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs/eval"));
            let dir = artifacts::prepare_run_dir(&cfg, None, argv)?;
            experiments::eval::cmd_eval(&cfg, &args.checkpoint, &dir)
        }
    }
}
