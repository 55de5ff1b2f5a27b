//! `exp-adv-class`: adversarial classification on the two-blob task, every
//! divergence with both estimators against a cross-entropy baseline.

use anyhow::{bail, Result};
use bgan_core::discrete::{adversarial_classification_step, BaselineState, Estimator};
use bgan_core::fdiv::ALL_DIVERGENCES;
use bgan_core::graph::Graph;
use bgan_core::models::{Activation, ConditionalFamily, GeneratorModel, Mlp, Prior, StatisticNetwork};
use bgan_core::rng::seeded;

use std::fmt::Write as _;
use std::path::Path;

use crate::artifacts::{fmt_f64, CsvWriter};
use crate::config::ExperimentConfig;
use crate::experiments::build_dataset;

pub fn cmd_experiment_adv_class(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let data = build_dataset(config)?;
    if data.dataset.labels.is_none() {
        bail!("exp-adv-class requires a labeled dataset");
    }
    let classes = 2usize;

    let accuracy = |clf: &GeneratorModel| -> f64 {
        let mut g = Graph::new();
        let vars = clf.net.bind_frozen(&mut g);
        let xv = g.constant(data.dataset.samples.clone());
        let logits = clf.logits(&mut g, &vars, xv).unwrap();
        let l = g.value(logits);
        let labels = data.dataset.labels.as_ref().unwrap();
        let correct = (0..data.dataset.len())
            .filter(|&i| {
                let mut best = 0;
                for k in 1..classes {
                    if l.get2(i, k) > l.get2(i, best) {
                        best = k;
                    }
                }
                best == labels[i]
            })
            .count();
        correct as f64 / data.dataset.len() as f64
    };
    let fresh_classifier = |seed: u64| {
        GeneratorModel::new(
            Prior::Uniform01 { dim: 2 },
            Mlp::new(
                data.dataset.observed_dim(),
                &config.gen_hidden,
                classes,
                config.gen_activation,
                &mut seeded(seed),
            ),
            ConditionalFamily::Categorical {
                positions: 1,
                classes,
            },
        )
    };

    // cross-entropy baseline
    let mut base = fresh_classifier(900);
    let mut opt = bgan_core::optim::Optimizer::adam(config.gamma_g);
    let mut rng = seeded(901);
    for _ in 0..config.iters {
        let (x, y) = data
            .dataset
            .sample_labeled_batch(config.n_prior, classes, &mut rng)?;
        let mut g = Graph::new();
        let vars = base.net.bind(&mut g);
        let xv = g.constant(x);
        let logits = base.logits(&mut g, &vars, xv)?;
        let lp = base.log_prob_conditional(&mut g, logits, &y, 1)?;
        let ml = g.mean_all(lp);
        let loss = g.neg(ml);
        let grads = base.net.grads(&mut g, &vars, loss)?;
        base.net.apply_step(&mut opt, &grads)?;
    }
    let base_acc = accuracy(&base);

    let mut table = CsvWriter::create(
        &dir.join("accuracy_table.csv"),
        &["divergence", "estimator", "accuracy"],
    )?;
    table.row(&["baseline".into(), "cross-entropy".into(), fmt_f64(base_acc)])?;
    let mut summary = format!("baseline = {base_acc:.4}\n");
    let mut worst_gap: f64 = 0.0;
    for div in ALL_DIVERGENCES {
        for est in [Estimator::Alpha, Estimator::Reinforce] {
            let mut clf = fresh_classifier(910);
            let mut stat = StatisticNetwork::new(Mlp::new(
                data.dataset.observed_dim() + classes,
                &config.disc_hidden,
                1,
                Activation::Tanh,
                &mut seeded(911),
            ));
            let mut cfg = config.train_config();
            cfg.divergence = div;
            cfg.estimator = est;
            cfg.seed = 33;
            let mut opt_c = bgan_core::optim::Optimizer::adam(config.gamma_g);
            let mut opt_d = bgan_core::optim::Optimizer::adam(config.gamma_d);
            let mut baseline = BaselineState::new(0.9);
            let mut rng = seeded(912);
            for _ in 0..config.iters {
                let (x, y) = data
                    .dataset
                    .sample_labeled_batch(config.n_prior, classes, &mut rng)?;
                adversarial_classification_step(
                    &cfg,
                    &mut stat,
                    &mut clf,
                    &mut opt_c,
                    &mut opt_d,
                    &mut baseline,
                    &x,
                    &y,
                    &mut rng,
                )?;
            }
            let acc = accuracy(&clf);
            worst_gap = worst_gap.max(base_acc - acc);
            table.row(&[div.to_string(), est.name().into(), fmt_f64(acc)])?;
            let _ = writeln!(summary, "{div} {} = {acc:.4}", est.name());
            println!("{div} {}: accuracy {acc:.3}", est.name());
        }
    }
    let _ = writeln!(summary, "worst_gap_to_baseline = {worst_gap:.4}");
    println!("baseline {base_acc:.3}; worst gap {worst_gap:.3}");
    std::fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}
