//! `exp-overtrain`: generator over-training resilience on the Gaussian
//! ring, comparing the three generator losses at a 5:1 step ratio with a
//! 1:1 control.

use anyhow::{bail, Result};
use bgan_core::continuous::{train_continuous, GeneratorLossKind};
use bgan_core::rng::seeded;

use std::fmt::Write as _;
use std::path::Path;

use crate::artifacts::{fmt_f64, CsvWriter};
use crate::config::ExperimentConfig;
use crate::experiments::{build_dataset, build_models};

pub fn cmd_experiment_overtrain(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let data = build_dataset(config)?;
    let Some(coverage) = data.coverage.clone() else {
        bail!("exp-overtrain requires the ring dataset");
    };

    let losses = [
        GeneratorLossKind::BoundarySeeking,
        GeneratorLossKind::Minimax,
        GeneratorLossKind::Proxy,
    ];
    let ratios = [config.gen_steps_per_disc, 1];

    let mut table = CsvWriter::create(
        &dir.join("coverage_table.csv"),
        &["loss", "ratio", "seed", "modes_covered"],
    )?;
    let mut medians: Vec<(String, usize, usize)> = Vec::new();
    for &ratio in &ratios {
        for loss in losses {
            let mut coverages = Vec::new();
            for seed in 0..config.sweep_seeds as u64 {
                let mut cfg = config.clone();
                cfg.seed = seed;
                let (mut gen, mut stat) = build_models(&cfg, &data);
                let name = format!("coverage_{}_{}to1_seed{}.csv", loss.name(), ratio, seed);
                let mut csv =
                    CsvWriter::create(&dir.join(name), &["iteration", "modes_covered", "disc_bound"])?;
                let mut write_err = None;
                train_continuous(
                    &cfg.train_config(),
                    &mut gen,
                    &mut stat,
                    &data.dataset,
                    loss,
                    ratio,
                    cfg.iters,
                    cfg.disc_warmup,
                    cfg.log_every,
                    Some(&coverage),
                    |m| {
                        if write_err.is_none() {
                            if let Err(e) = csv.row(&[
                                m.iteration.to_string(),
                                m.modes_covered.to_string(),
                                fmt_f64(m.disc_bound),
                            ]) {
                                write_err = Some(e);
                            }
                        }
                    },
                )?;
                if let Some(e) = write_err {
                    return Err(e);
                }
                let mut rng = seeded(999);
                let (_, samples, _) = gen.sample(coverage.n_samples, 1, &mut rng)?;
                let covered = coverage.count_covered(&samples);
                table.row(&[
                    loss.name().to_string(),
                    ratio.to_string(),
                    seed.to_string(),
                    covered.to_string(),
                ])?;
                coverages.push(covered);
            }
            coverages.sort_unstable();
            let median = coverages[coverages.len() / 2];
            println!("{} at {}:1 -> per-seed {:?}, median {median}", loss.name(), ratio, coverages);
            medians.push((loss.name().to_string(), ratio, median));
        }
    }

    let mut summary = String::new();
    for (name, ratio, median) in &medians {
        let _ = writeln!(summary, "median_coverage {name} {ratio}:1 = {median}");
    }
    let b = medians
        .iter()
        .find(|(n, r, _)| n == "boundary" && *r == config.gen_steps_per_disc)
        .map(|t| t.2);
    let p = medians
        .iter()
        .find(|(n, r, _)| n == "proxy" && *r == config.gen_steps_per_disc)
        .map(|t| t.2);
    if let (Some(b), Some(p)) = (b, p) {
        let _ = writeln!(
            summary,
            "boundary_ge_proxy_at_overtraining = {}",
            b >= p
        );
        println!("boundary median {b} vs proxy median {p} at {}:1", config.gen_steps_per_disc);
    }
    std::fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}
