//! `exp-variance`: the two policy-gradient estimators compared at matched
//! sample budgets, plus a gradient-variance table on the 4-bit benchmark.

use anyhow::Result;
use bgan_core::discrete::{
    compute_weights, policy_gradient_alpha_loss, policy_gradient_beta_loss, train_discrete,
    Estimator,
};
use bgan_core::graph::Graph;
use bgan_core::models::{Activation, ConditionalFamily, GeneratorModel, Mlp, Prior};
use bgan_core::oracle::{EnumerableSpace, PriorSupport};
use bgan_core::rng::{seeded, Rng};
use bgan_core::tensor::Tensor;
use rand::Rng as _;

use std::fmt::Write as _;
use std::path::Path;

use crate::artifacts::{fmt_f64, CsvWriter};
use crate::config::ExperimentConfig;
use crate::experiments::{build_dataset, build_models};

/// The prior/conditional sample-count sweep: both estimators at
/// `N = 64, M in {5, 10, 100}` plus the shared-partition estimator at
/// `N = 640, M = 1` (which collapses the per-prior normalization).
const SWEEP: &[(Estimator, usize, usize)] = &[
    (Estimator::Alpha, 64, 5),
    (Estimator::Beta, 64, 5),
    (Estimator::Alpha, 64, 10),
    (Estimator::Beta, 64, 10),
    (Estimator::Alpha, 64, 100),
    (Estimator::Beta, 64, 100),
    (Estimator::Beta, 640, 1),
];

pub fn cmd_experiment_variance(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let data = build_dataset(config)?;
    let mut summary = String::new();
    let min_distance = -(4.0_f64.ln());

    for &(est, n, m) in SWEEP {
        let mut cfg = config.clone();
        cfg.estimator = est;
        cfg.n_prior = n;
        cfg.m_cond = m;
        let (mut gen, mut stat) = build_models(&cfg, &data);
        let name = format!("curve_{}_n{}_m{}.csv", est.name(), n, m);
        let mut csv = CsvWriter::create(&dir.join(&name), &["iteration", "gan_distance"])?;
        let mut write_err = None;
        let mut min_seen = f64::INFINITY;
        let mut last = 0.0;
        train_discrete(
            &cfg.train_config(),
            &mut gen,
            &mut stat,
            &data.dataset,
            cfg.iters,
            |mr| {
                min_seen = min_seen.min(mr.bound_estimate);
                last = mr.bound_estimate;
                if mr.iteration % cfg.log_every == 0 && write_err.is_none() {
                    if let Err(e) = csv.row(&[
                        mr.iteration.to_string(),
                        fmt_f64(mr.bound_estimate),
                    ]) {
                        write_err = Some(e);
                    }
                }
            },
        )?;
        if let Some(e) = write_err {
            return Err(e);
        }
        let floor_ok = min_seen >= min_distance - 0.05;
        let _ = writeln!(
            summary,
            "{} N={n} M={m}: final_distance = {last:.4}, min_seen = {min_seen:.4}, floor_ok = {floor_ok}",
            est.name()
        );
        println!(
            "{} N={n} M={m}: final {last:.4} (floor check {})",
            est.name(),
            if floor_ok { "ok" } else { "VIOLATED" }
        );
    }

    // gradient-variance table on the 4-bit benchmark at matched budget
    let fb = FourBitBench::new();
    let mut table = CsvWriter::create(
        &dir.join("variance_table.csv"),
        &["estimator", "n_prior", "m_cond", "covariance_trace"],
    )?;
    let mut traces = Vec::new();
    let mut rng = seeded(600);
    for est in [Estimator::Alpha, Estimator::Beta] {
        let trace = fb.covariance_trace(est, 64, 20, 30, &mut rng);
        table.row(&[
            est.name().to_string(),
            "64".into(),
            "20".into(),
            fmt_f64(trace),
        ])?;
        traces.push(trace);
    }
    let _ = writeln!(
        summary,
        "covariance trace at N=64 M=20: alpha = {:.6}, beta = {:.6}, ratio = {:.4}",
        traces[0],
        traces[1],
        traces[0] / traces[1]
    );
    println!(
        "gradient variance trace: alpha {:.6} vs beta {:.6}",
        traces[0], traces[1]
    );
    std::fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}

/// 4-bit Bernoulli benchmark with a fixed random statistic table.
pub struct FourBitBench {
    gen: GeneratorModel,
    space: EnumerableSpace,
    f_table: Vec<f64>,
}

impl FourBitBench {
    pub fn new() -> Self {
        let net = Mlp::new(2, &[8], 4, Activation::Tanh, &mut seeded(100));
        let gen = GeneratorModel::new(
            Prior::Uniform01 { dim: 2 },
            net,
            ConditionalFamily::Bernoulli { dims: 4 },
        );
        let mut r = seeded(101);
        let nodes = Tensor::matrix(8, 2, (0..16).map(|_| r.gen_range(0.0..1.0)).collect());
        let support = PriorSupport::explicit(nodes, vec![0.125; 8]).unwrap();
        let space = EnumerableSpace::binary(4)
            .unwrap()
            .with_prior_support(support);
        let f_table: Vec<f64> = (0..16).map(|_| r.gen_range(-1.0..1.0)).collect();
        FourBitBench {
            gen,
            space,
            f_table,
        }
    }

    pub fn generator(&self) -> &GeneratorModel {
        &self.gen
    }

    pub fn space(&self) -> &EnumerableSpace {
        &self.space
    }

    pub fn statistic_table(&self) -> &[f64] {
        &self.f_table
    }

    /// One Monte-Carlo gradient estimate.
    pub fn mc_gradient(&self, est: Estimator, n: usize, m: usize, rng: &mut Rng) -> Vec<f64> {
        let support = self.space.prior_support.as_ref().unwrap();
        let mut zdata = Vec::with_capacity(n * 2);
        for _ in 0..n {
            let zi = rng.gen_range(0..support.len());
            zdata.extend_from_slice(support.nodes.row(zi));
        }
        let z = Tensor::matrix(n, 2, zdata);
        let mut g = Graph::new();
        let vars = self.gen.net.bind(&mut g);
        let zv = g.constant(z);
        let logits = self.gen.logits(&mut g, &vars, zv).unwrap();
        let params = self.gen.params_from_logits(&mut g, logits);
        let params_t = g.value(params).clone();
        let x = self.gen.sample_conditional(&params_t, m, rng).unwrap();
        let mut fvals = Vec::with_capacity(n * m);
        for i in 0..n * m {
            fvals.push(self.f_table[self.space.index_of(x.row(i)).unwrap()]);
        }
        let f = Tensor::matrix(n, m, fvals);
        let wb = compute_weights(&f);
        let lp = self
            .gen
            .log_prob_conditional(&mut g, logits, &x, m)
            .unwrap();
        let loss = match est {
            Estimator::Alpha => policy_gradient_alpha_loss(&mut g, &wb, lp).unwrap(),
            Estimator::Beta => policy_gradient_beta_loss(&mut g, &wb, lp).unwrap(),
            Estimator::Reinforce => unreachable!("benchmark compares alpha and beta"),
        };
        let grads = self.gen.net.grads(&mut g, &vars, loss).unwrap();
        grads.iter().flat_map(|t| t.data().to_vec()).collect()
    }

    /// Trace of the empirical covariance over repeated estimates.
    pub fn covariance_trace(
        &self,
        est: Estimator,
        n: usize,
        m: usize,
        trials: usize,
        rng: &mut Rng,
    ) -> f64 {
        let grads: Vec<Vec<f64>> = (0..trials).map(|_| self.mc_gradient(est, n, m, rng)).collect();
        let d = grads[0].len();
        let mut trace = 0.0;
        for j in 0..d {
            let mean = grads.iter().map(|g| g[j]).sum::<f64>() / trials as f64;
            trace += grads.iter().map(|g| (g[j] - mean).powi(2)).sum::<f64>()
                / (trials - 1) as f64;
        }
        trace
    }
}

impl Default for FourBitBench {
    fn default() -> Self {
        Self::new()
    }
}
