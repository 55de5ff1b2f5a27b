//! Discrete-generator training: importance-weighted policy gradients with
//! per-prior-sample normalization (the variance-reduced estimator), the
//! shared-partition-function alternative, a REINFORCE variant with a
//! moving-average baseline, and the adversarial-classification
//! specialization.

use crate::continuous::gradient_norm_penalty;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fdiv::{Divergence, DEFAULT_STATISTIC_CLAMP};
use crate::graph::{Graph, Var};
use crate::models::{ConditionalFamily, GeneratorModel, StatisticNetwork};
use crate::optim::Optimizer;
use crate::rng;
use crate::tensor::{logsumexp_slice, softmax_slice, Tensor};

use std::time::Instant;

/// Log importance weights of an `N x M` sample block together with their
/// row-normalized form and the Monte-Carlo partition estimates.
///
/// Weights are plain values, never graph nodes: no gradient flows through
/// them into the generator.
#[derive(Debug, Clone)]
pub struct WeightBatch {
    /// `ln w` per prior sample (row) and conditional sample (column);
    /// identically the raw statistic values.
    pub log_w: Tensor,
    /// Row-wise softmax of `log_w`: each row sums to one.
    pub normalized: Tensor,
    /// Monte-Carlo estimate of the global partition function
    /// `beta = E_Q[w]`, computed through log-sum-exp.
    pub beta_estimate: f64,
    /// Per-row estimates of the conditional partition `alpha(z)`.
    pub alpha_estimates: Vec<f64>,
}

/// Row-softmax the raw statistics with max-subtraction and populate the
/// partition estimates.
pub fn compute_weights(f_values: &Tensor) -> WeightBatch {
    let (n, m) = (f_values.rows(), f_values.cols());
    let mut normalized = vec![0.0; n * m];
    let mut alpha = Vec::with_capacity(n);
    for i in 0..n {
        let row = f_values.row(i);
        softmax_slice(row, &mut normalized[i * m..(i + 1) * m]);
        alpha.push((logsumexp_slice(row) - (m as f64).ln()).exp());
    }
    let beta = (logsumexp_slice(f_values.data()) - ((n * m) as f64).ln()).exp();
    WeightBatch {
        log_w: f_values.clone(),
        normalized: Tensor::matrix(n, m, normalized),
        beta_estimate: beta,
        alpha_estimates: alpha,
    }
}

/// Moving-average baseline for the REINFORCE estimator.
#[derive(Debug, Clone, Copy)]
pub struct BaselineState {
    pub value: f64,
    pub decay: f64,
}

impl BaselineState {
    pub fn new(decay: f64) -> Self {
        assert!((0.0..1.0).contains(&decay));
        BaselineState { value: 0.0, decay }
    }

    pub fn update(&mut self, reward: f64) {
        self.value = self.decay * self.value + (1.0 - self.decay) * reward;
    }
}

/// Which generator gradient estimator a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Per-prior-sample normalized importance weights (variance-reduced).
    Alpha,
    /// A single shared Monte-Carlo partition estimate; higher variance.
    Beta,
    /// `(F - b)` reward with a moving-average baseline.
    Reinforce,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Estimator::Alpha),
            "beta" => Ok(Estimator::Beta),
            "reinforce" => Ok(Estimator::Reinforce),
            other => Err(Error::UnknownName {
                what: "estimator",
                value: other.to_string(),
                expected: "alpha | beta | reinforce",
            }),
        }
    }
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Alpha => "alpha",
            Estimator::Beta => "beta",
            Estimator::Reinforce => "reinforce",
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Prior samples per iteration (N); doubles as the real-batch size.
    pub n_prior: usize,
    /// Conditional samples per prior draw (M).
    pub m_conditional: usize,
    /// Discriminator step size.
    pub gamma_d: f64,
    /// Generator step size.
    pub gamma_g: f64,
    pub divergence: Divergence,
    pub penalty_coefficient: f64,
    pub estimator: Estimator,
    pub seed: u64,
    /// Statistic magnitude admitted to the activation on loss paths.
    pub statistic_clamp: f64,
    /// REINFORCE baseline decay.
    pub baseline_decay: f64,
    /// Apply the gradient-norm penalty to the fake batch as well as the
    /// real one (default: real only).
    pub penalty_on_fake: bool,
    /// Update rule for the generator (adaptive by default).
    pub gen_rule: UpdateRule,
    /// Update rule for the discriminator (adaptive by default).
    pub disc_rule: UpdateRule,
}

/// First-order update rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    #[default]
    Adam,
    Sgd,
}

impl UpdateRule {
    pub fn optimizer(self, step_size: f64) -> Optimizer {
        match self {
            UpdateRule::Adam => Optimizer::adam(step_size),
            UpdateRule::Sgd => Optimizer::sgd(step_size),
        }
    }
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(UpdateRule::Adam),
            "sgd" => Ok(UpdateRule::Sgd),
            other => Err(Error::UnknownName {
                what: "update rule",
                value: other.to_string(),
                expected: "adam | sgd",
            }),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_prior: 64,
            m_conditional: 20,
            gamma_d: crate::optim::DEFAULT_STEP_SIZE,
            gamma_g: crate::optim::DEFAULT_STEP_SIZE,
            divergence: Divergence::Gan,
            penalty_coefficient: 1.0,
            estimator: Estimator::Alpha,
            seed: 0,
            statistic_clamp: DEFAULT_STATISTIC_CLAMP,
            baseline_decay: 0.9,
            penalty_on_fake: false,
            gen_rule: UpdateRule::Adam,
            disc_rule: UpdateRule::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_prior < 1 {
            return Err(Error::InvalidParam("n_prior must be >= 1".into()));
        }
        if self.m_conditional < 1 {
            return Err(Error::InvalidParam("m_conditional must be >= 1".into()));
        }
        if self.gamma_d < 0.0 || self.gamma_g < 0.0 {
            return Err(Error::InvalidParam("step sizes must be >= 0".into()));
        }
        if self.penalty_coefficient < 0.0 {
            return Err(Error::InvalidParam("penalty must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::InvalidParam("baseline decay must be in [0, 1)".into()));
        }
        Ok(())
    }
}

fn check_aligned(weights: &Tensor, log_probs_rows: usize, context: &'static str) -> Result<()> {
    if weights.len() != log_probs_rows {
        return Err(Error::ShapeMismatch {
            context,
            expected: vec![weights.len(), 1],
            got: vec![log_probs_rows, 1],
        });
    }
    Ok(())
}

/// Surrogate loss `-(1/N) sum_{n,m} w~(x^{m|n}) ln q(x^{m|n} | z^n)`.
///
/// Its gradient is the variance-reduced policy gradient; the normalized
/// weights enter as constants. `log_probs` is `[N*M, 1]`, rows grouped by
/// prior sample.
pub fn policy_gradient_alpha_loss(
    g: &mut Graph,
    weights: &WeightBatch,
    log_probs: Var,
) -> Result<Var> {
    let rows = g.value(log_probs).rows();
    check_aligned(&weights.normalized, rows, "policy_gradient_alpha")?;
    let n = weights.normalized.rows();
    let w = g.constant(
        weights
            .normalized
            .clone()
            .reshape(vec![rows, 1]),
    );
    let weighted = g.mul(w, log_probs);
    let s = g.sum_all(weighted);
    Ok(g.mul_scalar(s, -1.0 / n as f64))
}

/// Surrogate loss `-mean (w / beta_hat) ln q` with one shared partition
/// estimate; the flagged high-variance alternative.
pub fn policy_gradient_beta_loss(
    g: &mut Graph,
    weights: &WeightBatch,
    log_probs: Var,
) -> Result<Var> {
    let rows = g.value(log_probs).rows();
    check_aligned(&weights.log_w, rows, "policy_gradient_beta")?;
    let log_beta = weights.beta_estimate.ln();
    let coeff = weights.log_w.map(|lw| (lw - log_beta).exp());
    let w = g.constant(coeff.reshape(vec![rows, 1]));
    let weighted = g.mul(w, log_probs);
    let m = g.mean_all(weighted);
    Ok(g.neg(m))
}

/// Surrogate loss `-mean (F - b) ln q`; rewards and baseline are constants.
pub fn policy_gradient_reinforce_loss(
    g: &mut Graph,
    f_values: &Tensor,
    baseline: &BaselineState,
    log_probs: Var,
) -> Result<Var> {
    let rows = g.value(log_probs).rows();
    check_aligned(f_values, rows, "policy_gradient_reinforce")?;
    if !baseline.value.is_finite() {
        return Err(Error::NonFinite("REINFORCE baseline".into()));
    }
    let b = baseline.value;
    let coeff = f_values.map(|f| f - b);
    let w = g.constant(coeff.reshape(vec![rows, 1]));
    let weighted = g.mul(w, log_probs);
    let m = g.mean_all(weighted);
    Ok(g.neg(m))
}

/// Result of one discriminator update.
#[derive(Debug, Clone, Copy)]
pub struct DiscStepOutcome {
    /// Pre-penalty variational lower-bound estimate.
    pub bound: f64,
    pub penalty: f64,
    pub grad_norm: f64,
}

/// Ascend the variational lower bound minus the gradient-norm penalty.
/// The penalty is measured on the real batch, and additionally on the fake
/// batch when `penalty_on_fake` is set. Returns the pre-penalty bound.
#[allow(clippy::too_many_arguments)]
pub fn discriminator_step(
    divergence: Divergence,
    stat: &mut StatisticNetwork,
    opt: &mut Optimizer,
    real: &Tensor,
    fake: &Tensor,
    penalty_coefficient: f64,
    statistic_clamp: f64,
    penalty_on_fake: bool,
) -> Result<DiscStepOutcome> {
    if real.rows() == 0 || fake.rows() == 0 {
        return Err(Error::InvalidParam("discriminator_step: empty batch".into()));
    }
    let mut g = Graph::new();
    let vars = stat.net.bind(&mut g);
    let (pen, f_real_raw, f_fake_raw) = penalized_statistics(
        &mut g,
        stat,
        &vars,
        real,
        fake,
        penalty_coefficient,
        penalty_on_fake,
    )?;
    let f_real = g.clamp(f_real_raw, -statistic_clamp, statistic_clamp);
    let f_fake = g.clamp(f_fake_raw, -statistic_clamp, statistic_clamp);
    let bound = divergence.lower_bound_graph(&mut g, f_real, f_fake);
    let nb = g.neg(bound);
    let loss = g.add(nb, pen);
    g.scalar_value(loss)?;
    let grads = stat.net.grads(&mut g, &vars, loss)?;
    let grad_norm = grad_norm_of(&grads);
    let outcome = DiscStepOutcome {
        bound: g.scalar_value(bound)?,
        penalty: g.scalar_value(pen)?,
        grad_norm,
    };
    stat.net.apply_step(opt, &grads)?;
    Ok(outcome)
}

/// Penalty plus raw statistics for both batches, sharing forward passes.
fn penalized_statistics(
    g: &mut Graph,
    stat: &StatisticNetwork,
    vars: &crate::models::MlpVars,
    real: &Tensor,
    fake: &Tensor,
    penalty_coefficient: f64,
    penalty_on_fake: bool,
) -> Result<(Var, Var, Var)> {
    let (pen_real, f_real) = gradient_norm_penalty(g, stat, vars, real, penalty_coefficient)?;
    if penalty_on_fake {
        let (pen_fake, f_fake) = gradient_norm_penalty(g, stat, vars, fake, penalty_coefficient)?;
        let pen = g.add(pen_real, pen_fake);
        Ok((pen, f_real, f_fake))
    } else {
        let fake_v = g.constant(fake.clone());
        let f_fake = stat.forward(g, vars, fake_v)?;
        Ok((pen_real, f_real, f_fake))
    }
}

fn grad_norm_of(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Per-iteration metrics of a discrete run.
#[derive(Debug, Clone)]
pub struct DiscreteMetrics {
    pub iteration: usize,
    pub bound_estimate: f64,
    pub beta_hat: f64,
    pub grad_norm_g: f64,
    pub grad_norm_d: f64,
    pub baseline: f64,
    pub wall_ms: u64,
}

/// Alternate one discriminator and one generator update per iteration,
/// following the sampled-once-per-iteration protocol: statistics feeding
/// the importance weights are taken before the discriminator update.
pub fn train_discrete(
    config: &TrainConfig,
    gen: &mut GeneratorModel,
    stat: &mut StatisticNetwork,
    data: &Dataset,
    iterations: usize,
    mut sink: impl FnMut(&DiscreteMetrics),
) -> Result<()> {
    config.validate()?;
    if data.observed_dim() != gen.family.observed_dim() {
        return Err(Error::ShapeMismatch {
            context: "train_discrete dataset",
            expected: vec![gen.family.observed_dim()],
            got: vec![data.observed_dim()],
        });
    }
    let mut rng = rng::seeded(config.seed);
    let mut opt_g = config.gen_rule.optimizer(config.gamma_g);
    let mut opt_d = config.disc_rule.optimizer(config.gamma_d);
    let mut baseline = BaselineState::new(config.baseline_decay);
    let (n, m) = (config.n_prior, config.m_conditional);
    let start = Instant::now();

    for iteration in 0..iterations {
        let real = data.sample_batch(n, &mut rng)?;
        let (z, _params, x_fake) = gen.sample(n, m, &mut rng)?;

        // one discriminator graph serves both the parameter update and the
        // pre-update statistics that feed the importance weights
        let (disc, f_fake) = {
            let mut g = Graph::new();
            let vars = stat.net.bind(&mut g);
            let (pen, f_real_raw, f_fake_raw) = penalized_statistics(
                &mut g,
                stat,
                &vars,
                &real,
                &x_fake,
                config.penalty_coefficient,
                config.penalty_on_fake,
            )?;
            let clamp = config.statistic_clamp;
            let f_real = g.clamp(f_real_raw, -clamp, clamp);
            let f_fake = g.clamp(f_fake_raw, -clamp, clamp);
            let bound = config.divergence.lower_bound_graph(&mut g, f_real, f_fake);
            let nb = g.neg(bound);
            let loss = g.add(nb, pen);
            g.scalar_value(loss)
                .map_err(|e| Error::NonFinite(format!("iteration {iteration}: {e}")))?;
            let grads = stat.net.grads(&mut g, &vars, loss)?;
            let outcome = DiscStepOutcome {
                bound: g.scalar_value(bound)?,
                penalty: g.scalar_value(pen)?,
                grad_norm: grad_norm_of(&grads),
            };
            let f_values = g.value(f_fake_raw).clone().reshape(vec![n, m]);
            stat.net.apply_step(&mut opt_d, &grads)?;
            (outcome, f_values)
        };
        let weights = compute_weights(&f_fake);

        // generator update from the pre-update statistics
        let mut g = Graph::new();
        let gvars = gen.net.bind(&mut g);
        let zv = g.constant(z);
        let logits = gen.logits(&mut g, &gvars, zv)?;
        let log_probs = gen.log_prob_conditional(&mut g, logits, &x_fake, m)?;
        let loss = match config.estimator {
            Estimator::Alpha => policy_gradient_alpha_loss(&mut g, &weights, log_probs)?,
            Estimator::Beta => policy_gradient_beta_loss(&mut g, &weights, log_probs)?,
            Estimator::Reinforce => {
                let flat = weights.log_w.clone().reshape(vec![n * m, 1]);
                policy_gradient_reinforce_loss(&mut g, &flat, &baseline, log_probs)?
            }
        };
        g.scalar_value(loss)
            .map_err(|e| Error::NonFinite(format!("generator loss at iteration {iteration}: {e}")))?;
        let grads = gen.net.grads(&mut g, &gvars, loss)?;
        let grad_norm_g = grad_norm_of(&grads);
        gen.net.apply_step(&mut opt_g, &grads)?;

        if config.estimator == Estimator::Reinforce {
            let mean_f = f_fake.data().iter().sum::<f64>() / f_fake.len() as f64;
            baseline.update(mean_f);
        }

        sink(&DiscreteMetrics {
            iteration,
            bound_estimate: disc.bound,
            beta_hat: weights.beta_estimate,
            grad_norm_g,
            grad_norm_d: disc.grad_norm,
            baseline: baseline.value,
            wall_ms: start.elapsed().as_millis() as u64,
        });
    }
    Ok(())
}

/// One adversarial-classification update: the discriminator sees true
/// `(x, y)` pairs against `(x, y ~ q(y|x))` pairs; the classifier is
/// updated by the configured policy gradient on pair statistics.
/// Returns the bound estimate from the discriminator update.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_classification_step(
    config: &TrainConfig,
    stat: &mut StatisticNetwork,
    classifier: &mut GeneratorModel,
    opt_c: &mut Optimizer,
    opt_d: &mut Optimizer,
    baseline: &mut BaselineState,
    x_batch: &Tensor,
    y_onehot: &Tensor,
    rng: &mut rng::Rng,
) -> Result<f64> {
    let ConditionalFamily::Categorical { classes, positions } = classifier.family else {
        return Err(Error::InvalidParam(
            "adversarial classification requires a categorical classifier".into(),
        ));
    };
    if positions != 1 {
        return Err(Error::InvalidParam(
            "classifier must predict a single label position".into(),
        ));
    }
    if y_onehot.cols() != classes || y_onehot.rows() != x_batch.rows() {
        return Err(Error::ShapeMismatch {
            context: "adversarial classification labels",
            expected: vec![x_batch.rows(), classes],
            got: y_onehot.shape().to_vec(),
        });
    }
    let n = x_batch.rows();
    let m = config.m_conditional;

    // classifier proposals y ~ q(y|x)
    let (probs, y_fake) = {
        let mut g = Graph::new();
        let cvars = classifier.net.bind_frozen(&mut g);
        let xv = g.constant(x_batch.clone());
        let logits = classifier.logits(&mut g, &cvars, xv)?;
        let params = classifier.params_from_logits(&mut g, logits);
        let params_t = g.value(params).clone();
        let y = classifier.sample_conditional(&params_t, m, rng)?;
        (params_t, y)
    };
    let _ = probs;

    let real_pairs = concat_tensor_cols(x_batch, y_onehot);
    let x_rep = repeat_tensor_rows(x_batch, m);
    let fake_pairs = concat_tensor_cols(&x_rep, &y_fake);

    // pair statistics before the discriminator update drive the weights
    let f_fake = {
        let mut g = Graph::new();
        let svars = stat.net.bind_frozen(&mut g);
        let xv = g.constant(fake_pairs.clone());
        let f = stat.forward(&mut g, &svars, xv)?;
        g.check_finite()?;
        g.value(f).clone().reshape(vec![n, m])
    };
    let weights = compute_weights(&f_fake);

    let disc = discriminator_step(
        config.divergence,
        stat,
        opt_d,
        &real_pairs,
        &fake_pairs,
        config.penalty_coefficient,
        config.statistic_clamp,
        config.penalty_on_fake,
    )?;

    let mut g = Graph::new();
    let cvars = classifier.net.bind(&mut g);
    let xv = g.constant(x_batch.clone());
    let logits = classifier.logits(&mut g, &cvars, xv)?;
    let log_probs = classifier.log_prob_conditional(&mut g, logits, &y_fake, m)?;
    let loss = match config.estimator {
        Estimator::Alpha => policy_gradient_alpha_loss(&mut g, &weights, log_probs)?,
        Estimator::Beta => policy_gradient_beta_loss(&mut g, &weights, log_probs)?,
        Estimator::Reinforce => {
            let flat = weights.log_w.clone().reshape(vec![n * m, 1]);
            policy_gradient_reinforce_loss(&mut g, &flat, baseline, log_probs)?
        }
    };
    let grads = classifier.net.grads(&mut g, &cvars, loss)?;
    classifier.net.apply_step(opt_c, &grads)?;

    if config.estimator == Estimator::Reinforce {
        let mean_f = f_fake.data().iter().sum::<f64>() / f_fake.len() as f64;
        baseline.update(mean_f);
    }
    Ok(disc.bound)
}

pub(crate) fn concat_tensor_cols(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows(), b.rows());
    let (n, p, q) = (a.rows(), a.cols(), b.cols());
    let mut out = Vec::with_capacity(n * (p + q));
    for i in 0..n {
        out.extend_from_slice(a.row(i));
        out.extend_from_slice(b.row(i));
    }
    Tensor::matrix(n, p + q, out)
}

pub(crate) fn repeat_tensor_rows(a: &Tensor, k: usize) -> Tensor {
    let (n, d) = (a.rows(), a.cols());
    let mut out = Vec::with_capacity(n * k * d);
    for i in 0..n {
        for _ in 0..k {
            out.extend_from_slice(a.row(i));
        }
    }
    Tensor::matrix(n * k, d, out)
}
