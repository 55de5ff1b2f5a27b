//! Continuous-generator training: the boundary-seeking objective `F^2`,
//! the minimax and proxy losses for comparison, and gradient-norm
//! regularization of the discriminator.

use crate::data::Dataset;
use crate::discrete::TrainConfig;
use crate::error::{Error, Result};
use crate::fdiv::Divergence;
use crate::graph::{Graph, Var};
use crate::models::{GeneratorModel, MlpVars, StatisticNetwork};
use crate::rng;
use crate::tensor::Tensor;

use std::time::Instant;

/// Generator objective for continuous data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorLossKind {
    /// `mean F(G(z))^2`, minimized on the decision boundary `F = 0`.
    BoundarySeeking,
    /// `-mean f*(nu(F))`: minimizes the variational lower bound over the
    /// generator, the literal minimax objective.
    Minimax,
    /// `-mean ln D(G(z))` with `D = sigmoid(F)`, the classic heuristic.
    Proxy,
}

impl std::str::FromStr for GeneratorLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary" | "bgan" => Ok(GeneratorLossKind::BoundarySeeking),
            "minimax" => Ok(GeneratorLossKind::Minimax),
            "proxy" => Ok(GeneratorLossKind::Proxy),
            other => Err(Error::UnknownName {
                what: "generator loss",
                value: other.to_string(),
                expected: "boundary | minimax | proxy",
            }),
        }
    }
}

impl GeneratorLossKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorLossKind::BoundarySeeking => "boundary",
            GeneratorLossKind::Minimax => "minimax",
            GeneratorLossKind::Proxy => "proxy",
        }
    }
}

/// `mean F^2` over a `[n, 1]` column of statistics on generated samples.
pub fn boundary_objective(g: &mut Graph, f_generated: Var) -> Var {
    let sq = g.square(f_generated);
    g.mean_all(sq)
}

/// `-mean f*(nu(F))`.
pub fn minimax_generator_loss(g: &mut Graph, divergence: Divergence, f_generated: Var) -> Var {
    let conj = divergence.conjugate_of_activation_graph(g, f_generated);
    let m = g.mean_all(conj);
    g.neg(m)
}

/// `-mean ln sigmoid(F) = mean softplus(-F)`.
pub fn proxy_generator_loss(g: &mut Graph, f_generated: Var) -> Var {
    let nf = g.neg(f_generated);
    let sp = g.softplus(nf);
    g.mean_all(sp)
}

pub fn generator_loss(
    g: &mut Graph,
    kind: GeneratorLossKind,
    divergence: Divergence,
    f_generated: Var,
) -> Var {
    match kind {
        GeneratorLossKind::BoundarySeeking => boundary_objective(g, f_generated),
        GeneratorLossKind::Minimax => minimax_generator_loss(g, divergence, f_generated),
        GeneratorLossKind::Proxy => proxy_generator_loss(g, f_generated),
    }
}

/// Squared input-gradient penalty `coeff/2 * mean_i |grad_x F(x_i)|^2`.
///
/// Creates a differentiable-input leaf for `x`, runs the statistic network,
/// and differentiates the per-sample statistics w.r.t. the inputs with the
/// graph kept, so the penalty itself admits second-order gradients w.r.t.
/// the network parameters. Returns `(penalty, f_at_x)` so callers can reuse
/// the same forward pass for the lower bound.
pub fn gradient_norm_penalty(
    g: &mut Graph,
    net: &StatisticNetwork,
    vars: &MlpVars,
    x: &Tensor,
    coefficient: f64,
) -> Result<(Var, Var)> {
    let n = x.rows();
    let x_leaf = g.leaf(x.clone(), true);
    let f = net.forward(g, vars, x_leaf)?;
    // sum of per-sample scalars: each row's gradient only sees its own input row
    let fsum = g.sum_all(f);
    let gx = g.grad(fsum, &[x_leaf], true)?[0];
    let sq = g.square(gx);
    let total = g.sum_all(sq);
    let pen = g.mul_scalar(total, coefficient / (2.0 * n as f64));
    Ok((pen, f))
}

/// Per-interval metrics of a continuous run.
#[derive(Debug, Clone)]
pub struct ContinuousMetrics {
    pub iteration: usize,
    pub gen_loss: f64,
    pub disc_bound: f64,
    pub penalty: f64,
    pub modes_covered: usize,
    pub wall_ms: u64,
}

/// Mode-coverage probe: a mode counts as covered when at least
/// `min_share` of the generated samples fall within `radius` of its center.
#[derive(Debug, Clone)]
pub struct CoverageSpec {
    pub centers: Vec<[f64; 2]>,
    pub radius: f64,
    pub min_share: f64,
    pub n_samples: usize,
}

impl CoverageSpec {
    pub fn count_covered(&self, samples: &Tensor) -> usize {
        assert_eq!(samples.cols(), 2, "coverage probe expects 2-d samples");
        let n = samples.rows();
        let mut hits = vec![0usize; self.centers.len()];
        for i in 0..n {
            let (x, y) = (samples.get2(i, 0), samples.get2(i, 1));
            let mut best = f64::INFINITY;
            let mut best_k = 0;
            for (k, c) in self.centers.iter().enumerate() {
                let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                if d2 < best {
                    best = d2;
                    best_k = k;
                }
            }
            if best.sqrt() <= self.radius {
                hits[best_k] += 1;
            }
        }
        let need = (self.min_share * n as f64).ceil() as usize;
        hits.iter().filter(|&&h| h >= need.max(1)).count()
    }
}

/// Alternating optimization with `gen_steps_per_disc` generator updates per
/// discriminator update; runs until `total_gen_steps` generator steps.
/// `disc_warmup` discriminator-only steps shape the statistic landscape
/// before alternation begins.
#[allow(clippy::too_many_arguments)]
pub fn train_continuous(
    config: &TrainConfig,
    gen: &mut GeneratorModel,
    stat: &mut StatisticNetwork,
    data: &Dataset,
    loss_kind: GeneratorLossKind,
    gen_steps_per_disc: usize,
    total_gen_steps: usize,
    disc_warmup: usize,
    log_every: usize,
    coverage: Option<&CoverageSpec>,
    mut sink: impl FnMut(&ContinuousMetrics),
) -> Result<()> {
    config.validate()?;
    if !matches!(gen.family, crate::models::ConditionalFamily::Deterministic { .. }) {
        return Err(Error::InvalidParam(
            "train_continuous requires a deterministic generator family".into(),
        ));
    }
    assert!(gen_steps_per_disc >= 1);
    let mut rng = rng::seeded(config.seed);
    let mut opt_g = config.gen_rule.optimizer(config.gamma_g);
    let mut opt_d = config.disc_rule.optimizer(config.gamma_d);
    let batch = config.n_prior;
    let start = Instant::now();

    for step in 0..disc_warmup {
        let real = data.sample_batch(batch, &mut rng)?;
        let (_, fake, _) = gen.sample(batch, 1, &mut rng)?;
        crate::discrete::discriminator_step(
            config.divergence,
            stat,
            &mut opt_d,
            &real,
            &fake,
            config.penalty_coefficient,
            config.statistic_clamp,
            config.penalty_on_fake,
        )
        .map_err(|e| Error::NonFinite(format!("discriminator warmup step {step}: {e}")))?;
    }

    let mut gen_steps = 0usize;
    let mut last_bound;
    let mut last_pen;
    while gen_steps < total_gen_steps {
        // one discriminator step
        let real = data.sample_batch(batch, &mut rng)?;
        let (_, fake, _) = gen.sample(batch, 1, &mut rng)?;
        let outcome = crate::discrete::discriminator_step(
            config.divergence,
            stat,
            &mut opt_d,
            &real,
            &fake,
            config.penalty_coefficient,
            config.statistic_clamp,
            config.penalty_on_fake,
        )
        .map_err(|e| {
            Error::NonFinite(format!(
                "discriminator step at generator step {gen_steps}: {e}"
            ))
        })?;
        last_bound = outcome.bound;
        last_pen = outcome.penalty;

        // generator steps against the updated discriminator
        for _ in 0..gen_steps_per_disc {
            if gen_steps >= total_gen_steps {
                break;
            }
            let z = gen.prior.sample(batch, &mut rng);
            let mut g = Graph::new();
            let gvars = gen.net.bind(&mut g);
            let svars = stat.net.bind_frozen(&mut g);
            let zv = g.constant(z);
            let x = gen.logits(&mut g, &gvars, zv)?;
            let f = stat.forward(&mut g, &svars, x)?;
            let loss = generator_loss(&mut g, loss_kind, config.divergence, f);
            let loss_v = g.scalar_value(loss).map_err(|e| {
                Error::NonFinite(format!("generator loss at step {gen_steps}: {e}"))
            })?;
            let grads = gen.net.grads(&mut g, &gvars, loss)?;
            gen.net.apply_step(&mut opt_g, &grads)?;
            gen_steps += 1;

            if gen_steps % log_every == 0 || gen_steps == total_gen_steps {
                let covered = match coverage {
                    Some(spec) => {
                        let (_, samples, _) = gen.sample(spec.n_samples, 1, &mut rng)?;
                        spec.count_covered(&samples)
                    }
                    None => 0,
                };
                sink(&ContinuousMetrics {
                    iteration: gen_steps,
                    gen_loss: loss_v,
                    disc_bound: last_bound,
                    penalty: last_pen,
                    modes_covered: covered,
                    wall_ms: start.elapsed().as_millis() as u64,
                });
            }
        }
    }
    Ok(())
}

/// Gradient descent directly on a batch of inputs under a frozen statistic
/// network. Returns the loss before each step plus the final loss
/// (`steps + 1` values) and the final inputs.
pub fn pixel_descent(
    divergence: Divergence,
    stat: &StatisticNetwork,
    x_init: &Tensor,
    loss_kind: GeneratorLossKind,
    steps: usize,
    step_size: f64,
) -> Result<(Vec<f64>, Tensor)> {
    let mut x = x_init.clone();
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let mut g = Graph::new();
        let vars = stat.net.bind_frozen(&mut g);
        let xv = g.leaf(x.clone(), true);
        let f = stat.forward(&mut g, &vars, xv)?;
        let loss = generator_loss(&mut g, loss_kind, divergence, f);
        losses.push(g.scalar_value(loss)?);
        let grad = g.grad_values(loss, &[xv])?.remove(0);
        for (xi, gi) in x.data_mut().iter_mut().zip(grad.data()) {
            *xi -= step_size * gi;
        }
    }
    let mut g = Graph::new();
    let vars = stat.net.bind_frozen(&mut g);
    let xv = g.constant(x.clone());
    let f = stat.forward(&mut g, &vars, xv)?;
    let loss = generator_loss(&mut g, loss_kind, divergence, f);
    losses.push(g.scalar_value(loss)?);
    Ok((losses, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference, relative_error, FD_STEP};
    use crate::models::{Activation, Mlp};
    use crate::rng::seeded;
    use std::f64::consts::LN_2;

    #[test]
    fn boundary_loss_reference_points() {
        let mut g = Graph::new();
        let f0 = g.constant(Tensor::matrix(3, 1, vec![0.0; 3]));
        let l0 = boundary_objective(&mut g, f0);
        assert_eq!(g.value(l0).data()[0], 0.0);
        let f1 = g.constant(Tensor::matrix(2, 1, vec![1.0, -1.0]));
        let l1 = boundary_objective(&mut g, f1);
        assert!((g.value(l1).data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loss_kind_reference_points_at_zero_statistic() {
        let mut g = Graph::new();
        let f = g.constant(Tensor::matrix(4, 1, vec![0.0; 4]));
        let b = boundary_objective(&mut g, f);
        let p = proxy_generator_loss(&mut g, f);
        let m = minimax_generator_loss(&mut g, Divergence::Gan, f);
        assert!((g.value(b).data()[0]).abs() <= 1e-12);
        assert!((g.value(p).data()[0] - LN_2).abs() <= 1e-12);
        assert!((g.value(m).data()[0] + LN_2).abs() <= 1e-12);
        let mk = minimax_generator_loss(&mut g, Divergence::Kl, f);
        assert!((g.value(mk).data()[0] + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn proxy_loss_vanishes_for_confident_discriminator() {
        let mut g = Graph::new();
        let f = g.constant(Tensor::matrix(1, 1, vec![40.0]));
        let p = proxy_generator_loss(&mut g, f);
        assert!(g.value(p).data()[0] < 1e-15);
    }

    #[test]
    fn minimax_loss_matches_scalar_re_evaluation() {
        let f_vals = [0.3, -1.7, 2.2, 0.9];
        for d in crate::fdiv::ALL_DIVERGENCES {
            let mut g = Graph::new();
            let f = g.constant(Tensor::matrix(4, 1, f_vals.to_vec()));
            let l = minimax_generator_loss(&mut g, d, f);
            let expect = -f_vals
                .iter()
                .map(|&v| d.conjugate(d.activation(v)).unwrap())
                .sum::<f64>()
                / 4.0;
            assert!((g.value(l).data()[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_is_zero_for_constant_statistic() {
        let mut net = Mlp::new(2, &[], 1, Activation::Relu, &mut seeded(3));
        net.weights[0] = Tensor::matrix(2, 1, vec![0.0, 0.0]);
        net.biases[0] = Tensor::matrix(1, 1, vec![3.0]);
        let stat = StatisticNetwork::new(net);
        let mut g = Graph::new();
        let vars = stat.net.bind_frozen(&mut g);
        let x = Tensor::matrix(4, 2, vec![1.0; 8]);
        let (pen, _) = gradient_norm_penalty(&mut g, &stat, &vars, &x, 5.0).unwrap();
        assert_eq!(g.value(pen).data()[0], 0.0);
    }

    #[test]
    fn penalty_closed_form_for_linear_statistic() {
        // F = a.x, coefficient 2 -> penalty = |a|^2
        let a = vec![1.5, -0.5];
        let mut net = Mlp::new(2, &[], 1, Activation::Relu, &mut seeded(3));
        net.weights[0] = Tensor::matrix(2, 1, a.clone());
        net.biases[0] = Tensor::matrix(1, 1, vec![0.7]);
        let stat = StatisticNetwork::new(net);
        let mut g = Graph::new();
        let vars = stat.net.bind_frozen(&mut g);
        let x = Tensor::matrix(3, 2, vec![0.4, 0.3, -1.0, 2.0, 0.0, 0.0]);
        let (pen, _) = gradient_norm_penalty(&mut g, &stat, &vars, &x, 2.0).unwrap();
        let norm2: f64 = a.iter().map(|v| v * v).sum();
        assert!((g.value(pen).data()[0] - norm2).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        // second-order path: d penalty / d phi
        let net = Mlp::new(2, &[5], 1, Activation::Tanh, &mut seeded(8));
        let stat = StatisticNetwork::new(net);
        let x = {
            let mut r = seeded(4);
            use rand::Rng as _;
            Tensor::matrix(3, 2, (0..6).map(|_| r.gen_range(-1.0..1.0)).collect())
        };

        let mut g = Graph::new();
        let vars = stat.net.bind(&mut g);
        let (pen, _) = gradient_norm_penalty(&mut g, &stat, &vars, &x, 3.0).unwrap();
        let grads = stat.net.grads(&mut g, &vars, pen).unwrap();
        let auto: Vec<f64> = grads.iter().flat_map(|t| t.data().to_vec()).collect();

        let base = stat.net.params();
        let flat: Vec<f64> = base.iter().flat_map(|t| t.data().to_vec()).collect();
        let fd = finite_difference(
            |p| {
                let mut s2 = stat.clone();
                let mut off = 0;
                let mut params = base.clone();
                for t in params.iter_mut() {
                    let n = t.len();
                    t.data_mut().copy_from_slice(&p[off..off + n]);
                    off += n;
                }
                s2.net.set_params(&params);
                let mut g = Graph::new();
                let vars = s2.net.bind_frozen(&mut g);
                let (pen, _) = gradient_norm_penalty(&mut g, &s2, &vars, &x, 3.0).unwrap();
                g.value(pen).data()[0]
            },
            &flat,
            FD_STEP,
        );
        let err = relative_error(&auto, &fd);
        assert!(err <= 1e-3, "relative error {err}");
    }

    #[test]
    fn pixel_descent_zero_step_is_identity() {
        let net = Mlp::new(2, &[4], 1, Activation::Tanh, &mut seeded(5));
        let stat = StatisticNetwork::new(net);
        let x0 = Tensor::matrix(2, 2, vec![0.1, 0.2, -0.3, 0.4]);
        let (losses, x) =
            pixel_descent(Divergence::Gan, &stat, &x0, GeneratorLossKind::BoundarySeeking, 5, 0.0)
                .unwrap();
        assert_eq!(x.data(), x0.data());
        for w in losses.windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn pixel_descent_converges_to_quadratic_shell() {
        // F(x) = |x|^2 - c via a square-activation network; boundary descent
        // drives samples to the shell |x|^2 = c
        let c = 2.0;
        let mut net = Mlp::new(2, &[2], 1, Activation::Square, &mut seeded(5));
        net.weights[0] = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        net.biases[0] = Tensor::matrix(1, 2, vec![0.0, 0.0]);
        net.weights[1] = Tensor::matrix(2, 1, vec![1.0, 1.0]);
        net.biases[1] = Tensor::matrix(1, 1, vec![-c]);
        let stat = StatisticNetwork::new(net);
        let x0 = Tensor::matrix(3, 2, vec![0.5, 0.1, 2.0, -1.0, -0.8, 0.9]);
        let (losses, x) = pixel_descent(
            Divergence::Gan,
            &stat,
            &x0,
            GeneratorLossKind::BoundarySeeking,
            10_000,
            0.01,
        )
        .unwrap();
        assert!(losses[losses.len() - 1] < 1e-12);
        for i in 0..x.rows() {
            let r2 = x.get2(i, 0).powi(2) + x.get2(i, 1).powi(2);
            assert!((r2 - c).abs() <= 1e-6, "row {i}: |x|^2 = {r2}");
        }
    }

    #[test]
    fn boundary_gradient_is_stationary_on_the_boundary() {
        // with F(x_init) = 0 the boundary loss gradient vanishes
        let mut net = Mlp::new(2, &[], 1, Activation::Relu, &mut seeded(5));
        net.weights[0] = Tensor::matrix(2, 1, vec![1.0, 1.0]);
        net.biases[0] = Tensor::matrix(1, 1, vec![0.0]);
        let stat = StatisticNetwork::new(net);
        let x0 = Tensor::matrix(1, 2, vec![1.0, -1.0]); // F = 0
        let (losses, x) = pixel_descent(
            Divergence::Gan,
            &stat,
            &x0,
            GeneratorLossKind::BoundarySeeking,
            3,
            0.5,
        )
        .unwrap();
        assert_eq!(x.data(), x0.data());
        assert!(losses.iter().all(|&l| l.abs() < 1e-15));
    }
}
