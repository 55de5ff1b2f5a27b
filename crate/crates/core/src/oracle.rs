//! Brute-force ground truth on enumerable spaces: exact densities,
//! partition functions, divergences, optimal statistics, and exact
//! policy-gradient targets. Everything here is computed by full summation
//! (or quadrature over the latent), independently of the Monte-Carlo
//! training paths it is used to check.

use crate::error::{Error, Result};
use crate::fdiv::Divergence;
use crate::graph::{Graph, Var};
use crate::models::{ConditionalFamily, GeneratorModel, MlpVars, Prior, CENTER_EPS};
use crate::optim::Optimizer;
use crate::tensor::{sigmoid_scalar, softmax_slice, Tensor};

/// Optimal statistics are clamped to this magnitude when a density ratio
/// degenerates (zero-mass outcomes); the reconstruction error contribution
/// is bounded by `e^-30 * q(x)`.
pub const STATISTIC_CLAMP: f64 = 30.0;

/// Hard cap on `|outcomes| * |prior support|` for exact summation.
pub const ENUMERATION_BUDGET: usize = 1 << 24;

/// Explicit latent support: `z` nodes with probabilities.
#[derive(Debug, Clone)]
pub struct PriorSupport {
    pub nodes: Tensor,
    pub probs: Vec<f64>,
    /// Set when built by quadrature: the source prior and nodes per
    /// dimension, kept for Richardson error reporting.
    quadrature_of: Option<(Prior, usize)>,
}

impl PriorSupport {
    pub fn explicit(nodes: Tensor, probs: Vec<f64>) -> Result<Self> {
        if nodes.rows() != probs.len() {
            return Err(Error::ShapeMismatch {
                context: "prior support",
                expected: vec![nodes.rows()],
                got: vec![probs.len()],
            });
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 || probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidParam(format!(
                "prior support probabilities sum to {s}"
            )));
        }
        Ok(PriorSupport {
            nodes,
            probs,
            quadrature_of: None,
        })
    }

    /// Midpoint quadrature of a continuous prior: a tensor grid of
    /// `nodes_per_dim^dim` equal-probability nodes. Uniform priors use
    /// interval midpoints; normal priors use quantile midpoints.
    pub fn quadrature(prior: Prior, nodes_per_dim: usize) -> Result<Self> {
        let dim = prior.dim();
        if dim > 2 {
            return Err(Error::BudgetExceeded(format!(
                "quadrature over a {dim}-dimensional prior"
            )));
        }
        let total = nodes_per_dim.pow(dim as u32);
        let axis: Vec<f64> = (0..nodes_per_dim)
            .map(|i| {
                let u = (i as f64 + 0.5) / nodes_per_dim as f64;
                match prior {
                    Prior::Uniform01 { .. } => u,
                    Prior::StandardNormal { .. } => normal_quantile(u),
                }
            })
            .collect();
        let mut nodes = Vec::with_capacity(total * dim);
        match dim {
            1 => nodes.extend_from_slice(&axis),
            2 => {
                for &a in &axis {
                    for &b in &axis {
                        nodes.push(a);
                        nodes.push(b);
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(PriorSupport {
            nodes: Tensor::matrix(total, dim, nodes),
            probs: vec![1.0 / total as f64; total],
            quadrature_of: Some((prior, nodes_per_dim)),
        })
    }

    /// Default resolution: at least 4096 nodes in total.
    pub fn default_quadrature(prior: Prior) -> Result<Self> {
        let per_dim = match prior.dim() {
            1 => 4096,
            2 => 64,
            d => {
                return Err(Error::BudgetExceeded(format!(
                    "no default quadrature for a {d}-dimensional prior"
                )))
            }
        };
        Self::quadrature(prior, per_dim)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Encoding of the enumerated outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpaceKind {
    Binary { bits: usize },
    Categorical { positions: usize, classes: usize },
}

/// Explicit finite outcome set, optionally with a target density and a
/// latent support for exact marginalization.
#[derive(Debug, Clone)]
pub struct EnumerableSpace {
    outcomes: Tensor,
    kind: SpaceKind,
    pub target_density: Option<Vec<f64>>,
    pub prior_support: Option<PriorSupport>,
}

impl EnumerableSpace {
    /// All `2^bits` binary vectors; dimension `j` of outcome `i` is bit `j`
    /// of `i` (least significant first).
    pub fn binary(bits: usize) -> Result<Self> {
        if bits > 16 {
            return Err(Error::BudgetExceeded(format!("binary space of {bits} bits")));
        }
        let n = 1usize << bits;
        let mut data = Vec::with_capacity(n * bits);
        for i in 0..n {
            for j in 0..bits {
                data.push(((i >> j) & 1) as f64);
            }
        }
        Ok(EnumerableSpace {
            outcomes: Tensor::matrix(n, bits, data),
            kind: SpaceKind::Binary { bits },
            target_density: None,
            prior_support: None,
        })
    }

    /// All `classes^positions` one-hot grids; position 0 is the least
    /// significant digit of the outcome index.
    pub fn categorical(positions: usize, classes: usize) -> Result<Self> {
        let n = classes
            .checked_pow(positions as u32)
            .filter(|&n| n <= 65536)
            .ok_or_else(|| Error::BudgetExceeded("categorical space too large".into()))?;
        let d = positions * classes;
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let mut rem = i;
            for p in 0..positions {
                let class = rem % classes;
                rem /= classes;
                data[i * d + p * classes + class] = 1.0;
            }
        }
        Ok(EnumerableSpace {
            outcomes: Tensor::matrix(n, d, data),
            kind: SpaceKind::Categorical { positions, classes },
            target_density: None,
            prior_support: None,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn outcomes(&self) -> &Tensor {
        &self.outcomes
    }

    pub fn with_target(mut self, p: Vec<f64>) -> Result<Self> {
        if p.len() != self.len() {
            return Err(Error::ShapeMismatch {
                context: "target density",
                expected: vec![self.len()],
                got: vec![p.len()],
            });
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-12 || p.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParam(format!("target density sums to {s}")));
        }
        self.target_density = Some(p);
        Ok(self)
    }

    pub fn with_prior_support(mut self, s: PriorSupport) -> Self {
        self.prior_support = Some(s);
        self
    }

    /// Index of an encoded observation row.
    pub fn index_of(&self, row: &[f64]) -> Result<usize> {
        match self.kind {
            SpaceKind::Binary { bits } => {
                if row.len() != bits {
                    return Err(Error::Support("wrong observation width".into()));
                }
                let mut idx = 0usize;
                for (j, &v) in row.iter().enumerate() {
                    if v == 1.0 {
                        idx |= 1 << j;
                    } else if v != 0.0 {
                        return Err(Error::Support(format!("non-binary value {v}")));
                    }
                }
                Ok(idx)
            }
            SpaceKind::Categorical { positions, classes } => {
                if row.len() != positions * classes {
                    return Err(Error::Support("wrong observation width".into()));
                }
                let mut idx = 0usize;
                let mut scale = 1usize;
                for p in 0..positions {
                    let cell = &row[p * classes..(p + 1) * classes];
                    let class = cell
                        .iter()
                        .position(|&v| v == 1.0)
                        .ok_or_else(|| Error::Support(format!("position {p} not one-hot")))?;
                    idx += class * scale;
                    scale *= classes;
                }
                Ok(idx)
            }
        }
    }

    fn family_matches(&self, family: ConditionalFamily) -> bool {
        match (self.kind, family) {
            (SpaceKind::Binary { bits }, ConditionalFamily::Bernoulli { dims }) => bits == dims,
            (SpaceKind::Binary { bits }, ConditionalFamily::Deterministic { dims }) => bits == dims,
            (
                SpaceKind::Categorical { positions, classes },
                ConditionalFamily::Categorical {
                    positions: fp,
                    classes: fc,
                },
            ) => positions == fp && classes == fc,
            (
                SpaceKind::Categorical { positions, classes },
                ConditionalFamily::Deterministic { dims },
            ) => positions * classes == dims,
            _ => false,
        }
    }
}

/// Generator logits for a batch of latent nodes, values only.
fn logits_values(gen: &GeneratorModel, z_nodes: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let vars = gen.net.bind_frozen(&mut g);
    let zv = g.constant(z_nodes.clone());
    let logits = gen.logits(&mut g, &vars, zv)?;
    g.check_finite()?;
    Ok(g.value(logits).clone())
}

/// Straight-line conditional pmf row for one latent node: `q(x | z)` over
/// every outcome. Coded directly from the family definitions, independent
/// of the graph log-probability path it is used to verify.
fn pmf_row(
    family: ConditionalFamily,
    logits: &[f64],
    space: &EnumerableSpace,
    out: &mut [f64],
) -> Result<()> {
    match family {
        ConditionalFamily::Bernoulli { dims } => {
            let centers: Vec<f64> = logits
                .iter()
                .map(|&l| sigmoid_scalar(l).clamp(CENTER_EPS, 1.0 - CENTER_EPS))
                .collect();
            for (i, o) in out.iter_mut().enumerate() {
                let row = space.outcomes.row(i);
                let mut p = 1.0;
                for j in 0..dims {
                    p *= if row[j] == 1.0 {
                        centers[j]
                    } else {
                        1.0 - centers[j]
                    };
                }
                *o = p;
            }
        }
        ConditionalFamily::Categorical { positions, classes } => {
            let mut probs = vec![0.0; positions * classes];
            for p in 0..positions {
                softmax_slice(
                    &logits[p * classes..(p + 1) * classes],
                    &mut probs[p * classes..(p + 1) * classes],
                );
            }
            for (i, o) in out.iter_mut().enumerate() {
                let row = space.outcomes.row(i);
                let mut pr = 1.0;
                for p in 0..positions {
                    for k in 0..classes {
                        if row[p * classes + k] == 1.0 {
                            pr *= probs[p * classes + k];
                        }
                    }
                }
                *o = pr;
            }
        }
        ConditionalFamily::Deterministic { .. } => {
            // point mass on the lattice outcome matching G(z)
            let mut best = usize::MAX;
            for i in 0..space.len() {
                let row = space.outcomes.row(i);
                if row
                    .iter()
                    .zip(logits.iter())
                    .all(|(&a, &b)| (a - b).abs() <= 1e-9)
                {
                    best = i;
                    break;
                }
            }
            if best == usize::MAX {
                return Err(Error::Support(
                    "deterministic output does not hit a lattice outcome".into(),
                ));
            }
            out.fill(0.0);
            out[best] = 1.0;
        }
    }
    Ok(())
}

fn support_of(gen: &GeneratorModel, space: &EnumerableSpace) -> Result<PriorSupport> {
    match &space.prior_support {
        Some(s) => Ok(s.clone()),
        None => PriorSupport::default_quadrature(gen.prior),
    }
}

fn check_budget(space: &EnumerableSpace, support: &PriorSupport) -> Result<()> {
    let products = space.len().saturating_mul(support.len());
    if products > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "{} outcomes x {} latent nodes",
            space.len(),
            support.len()
        )));
    }
    Ok(())
}

/// Exact marginal with a Richardson error estimate when the latent support
/// came from quadrature.
#[derive(Debug, Clone)]
pub struct MarginalReport {
    pub q: Vec<f64>,
    /// `max_x |q - q_half_resolution|`; `None` for explicit supports.
    pub quadrature_error: Option<f64>,
}

/// `q(x) = sum_z h(z) q(x|z)` over the whole outcome set.
pub fn exact_marginal(gen: &GeneratorModel, space: &EnumerableSpace) -> Result<MarginalReport> {
    let support = support_of(gen, space)?;
    let q = marginal_under(gen, space, &support)?;
    let quadrature_error = match support.quadrature_of {
        Some((prior, per_dim)) if per_dim >= 2 => {
            let half = PriorSupport::quadrature(prior, per_dim / 2)?;
            let qh = marginal_under(gen, space, &half)?;
            Some(
                q.iter()
                    .zip(&qh)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            )
        }
        _ => None,
    };
    Ok(MarginalReport {
        q,
        quadrature_error,
    })
}

fn marginal_under(
    gen: &GeneratorModel,
    space: &EnumerableSpace,
    support: &PriorSupport,
) -> Result<Vec<f64>> {
    if !space.family_matches(gen.family) {
        return Err(Error::InvalidParam(
            "space encoding does not match the generator family".into(),
        ));
    }
    check_budget(space, support)?;
    let logits = logits_values(gen, &support.nodes)?;
    let mut q = vec![0.0; space.len()];
    let mut row = vec![0.0; space.len()];
    for (z, &hz) in support.probs.iter().enumerate() {
        pmf_row(gen.family, logits.row(z), space, &mut row)?;
        for (acc, &v) in q.iter_mut().zip(row.iter()) {
            *acc += hz * v;
        }
    }
    Ok(q)
}

/// Global partition `beta = sum_x q(x) e^{F(x)}`.
pub fn exact_partition_beta(q_marginal: &[f64], f: &[f64]) -> f64 {
    q_marginal
        .iter()
        .zip(f)
        .map(|(&q, &fv)| q * fv.exp())
        .sum()
}

/// Conditional partition `alpha(z) = sum_x q(x|z) e^{F(x)}`.
pub fn exact_alpha(q_conditional: &[f64], f: &[f64]) -> f64 {
    exact_partition_beta(q_conditional, f)
}

/// Target-density reconstruction through the optimal statistic.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub p_tilde: Vec<f64>,
    pub optimal_statistic: Vec<f64>,
    pub max_abs_error: f64,
}

/// Build `F* = ln(p/q)` (clamped), apply the divergence's activation and
/// conjugate derivative, and compare `w q` against `p`.
pub fn theorem1_reconstruction(
    p: &[f64],
    q: &[f64],
    divergence: Divergence,
) -> Result<Reconstruction> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            context: "theorem1_reconstruction",
            expected: vec![p.len()],
            got: vec![q.len()],
        });
    }
    let mut p_tilde = Vec::with_capacity(p.len());
    let mut fs = Vec::with_capacity(p.len());
    let mut max_err: f64 = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if qi == 0.0 && pi > 0.0 {
            return Err(Error::Support(format!(
                "p = {pi} where q = 0: ratio undefined"
            )));
        }
        let f_star = if qi == 0.0 {
            -STATISTIC_CLAMP
        } else {
            (pi / qi).ln().clamp(-STATISTIC_CLAMP, STATISTIC_CLAMP)
        };
        let t = divergence.activation(f_star);
        let w = divergence.conjugate_derivative(t)?;
        let pt = w * qi;
        max_err = max_err.max((pt - pi).abs());
        p_tilde.push(pt);
        fs.push(f_star);
    }
    Ok(Reconstruction {
        p_tilde,
        optimal_statistic: fs,
        max_abs_error: max_err,
    })
}

/// Primal `D_f(P || Q) = sum_x q(x) f(p(x)/q(x))`, including the
/// divergence's native additive constant `f(1)`.
pub fn exact_fdivergence(p: &[f64], q: &[f64], divergence: Divergence) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            context: "exact_fdivergence",
            expected: vec![p.len()],
            got: vec![q.len()],
        });
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if qi == 0.0 {
            if pi > 0.0 {
                return Err(Error::Support(format!(
                    "p = {pi} where q = 0: divergence undefined in primal form"
                )));
            }
            continue;
        }
        acc += qi * divergence.primal(pi / qi);
    }
    Ok(acc)
}

/// Maximize the dual bound `sum p nu(F_x) - sum q f*(nu(F_x))` over a
/// tabular statistic (one free value per outcome) by gradient ascent.
/// Returns the achieved bound; with enough steps it approaches the primal
/// value from below.
pub fn dual_ascent_bound(
    p: &[f64],
    q: &[f64],
    divergence: Divergence,
    steps: usize,
    step_size: f64,
) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            context: "dual_ascent_bound",
            expected: vec![p.len()],
            got: vec![q.len()],
        });
    }
    let n = p.len();
    let mut f = vec![Tensor::zeros(vec![n])];
    let mut opt = Optimizer::adam_with(step_size, 0.9, 0.999, 1e-8);
    let nu_prime = |d: Divergence, y: f64| -> f64 {
        match d {
            Divergence::Gan | Divergence::JensenShannon => sigmoid_scalar(-y),
            Divergence::Kl => 1.0,
            Divergence::ReverseKl => (-y).exp(),
            Divergence::SquaredHellinger => 0.5 * (-y / 2.0).exp(),
        }
    };
    for _ in 0..steps {
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                let y = f[0].data()[i];
                let t = divergence.activation(y);
                let w = divergence
                    .conjugate_derivative(t)
                    .expect("activation output left the conjugate domain");
                // ascent direction, negated for the descent-form optimizer
                -(nu_prime(divergence, y) * (p[i] - q[i] * w))
            })
            .collect();
        opt.step(&mut f, &[Tensor::new(vec![n], grad)])?;
    }
    let mut bound = 0.0;
    for i in 0..n {
        let y = f[0].data()[i];
        bound += p[i] * divergence.activation(y) - q[i] * divergence.conjugate_of_activation(y);
    }
    Ok(bound)
}

/// Differentiable `[Z, X]` log-pmf matrix over latent nodes and all
/// outcomes, built from one-hot matmuls so the θ-gradient is exact.
fn log_pmf_matrix_graph(
    gen: &GeneratorModel,
    g: &mut Graph,
    vars: &MlpVars,
    z_nodes: &Tensor,
    space: &EnumerableSpace,
) -> Result<Var> {
    let zv = g.constant(z_nodes.clone());
    let logits = gen.logits(g, vars, zv)?;
    match gen.family {
        ConditionalFamily::Bernoulli { dims } => {
            let s = g.sigmoid(logits);
            let c = g.clamp(s, CENTER_EPS, 1.0 - CENTER_EPS);
            let ln_c = g.ln(c);
            let nc = g.neg(c);
            let om = g.add_scalar(nc, 1.0);
            let ln_omc = g.ln(om);
            let x = space.outcomes.clone();
            let xt = transpose_values(&x);
            let fx = x.map(|v| 1.0 - v);
            let fxt = transpose_values(&fx);
            let _ = dims;
            let xt_v = g.constant(xt);
            let fxt_v = g.constant(fxt);
            let a = g.matmul(ln_c, xt_v);
            let b = g.matmul(ln_omc, fxt_v);
            Ok(g.add(a, b))
        }
        ConditionalFamily::Categorical { positions, classes } => {
            let zn = z_nodes.rows();
            let flat = g.reshape(logits, vec![zn * positions, classes]);
            let ls = g.log_softmax_rows(flat);
            let back = g.reshape(ls, vec![zn, positions * classes]);
            let onehot_t = transpose_values(&space.outcomes);
            let ot = g.constant(onehot_t);
            Ok(g.matmul(back, ot))
        }
        ConditionalFamily::Deterministic { .. } => Err(Error::InvalidParam(
            "deterministic family has no differentiable log-pmf".into(),
        )),
    }
}

fn transpose_values(t: &Tensor) -> Tensor {
    let (n, m) = (t.rows(), t.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = t.get2(i, j);
        }
    }
    Tensor::matrix(m, n, out)
}

/// Shared skeleton of the two exact policy-gradient targets: gradient of
/// `-sum_{z,x} coeff(z, x) ln q(x|z)` with frozen coefficients.
fn exact_weighted_score_gradient(
    gen: &GeneratorModel,
    space: &EnumerableSpace,
    coeff: &Tensor,
) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let vars = gen.net.bind(&mut g);
    let support = support_of(gen, space)?;
    let lnq = log_pmf_matrix_graph(gen, &mut g, &vars, &support.nodes, space)?;
    let c = g.constant(coeff.clone());
    let weighted = g.mul(c, lnq);
    let s = g.sum_all(weighted);
    let loss = g.neg(s);
    gen.net.grads(&mut g, &vars, loss)
}

fn conditional_pmf_matrix(
    gen: &GeneratorModel,
    space: &EnumerableSpace,
    support: &PriorSupport,
) -> Result<Tensor> {
    check_budget(space, support)?;
    let logits = logits_values(gen, &support.nodes)?;
    let mut data = vec![0.0; support.len() * space.len()];
    for z in 0..support.len() {
        pmf_row(
            gen.family,
            logits.row(z),
            space,
            &mut data[z * space.len()..(z + 1) * space.len()],
        )?;
    }
    Ok(Tensor::matrix(support.len(), space.len(), data))
}

/// Exact θ-gradient of the expected conditional KL divergence
/// `E_h[KL(p~(.|z) || q(.|z))]` with the reweighted conditionals frozen.
pub fn exact_conditional_kl_gradient(
    gen: &GeneratorModel,
    space: &EnumerableSpace,
    f: &[f64],
) -> Result<Vec<Tensor>> {
    let support = support_of(gen, space)?;
    let qm = conditional_pmf_matrix(gen, space, &support)?;
    let x = space.len();
    let mut coeff = vec![0.0; support.len() * x];
    for z in 0..support.len() {
        let row = qm.row(z);
        let alpha = exact_alpha(row, f);
        for i in 0..x {
            coeff[z * x + i] = support.probs[z] * row[i] * f[i].exp() / alpha;
        }
    }
    exact_weighted_score_gradient(gen, space, &Tensor::matrix(support.len(), x, coeff))
}

/// Exact θ-gradient of `KL(p~ || q_theta)` over the marginal, with the
/// reweighted density frozen.
pub fn exact_marginal_kl_gradient(
    gen: &GeneratorModel,
    space: &EnumerableSpace,
    f: &[f64],
) -> Result<Vec<Tensor>> {
    let support = support_of(gen, space)?;
    let qm = conditional_pmf_matrix(gen, space, &support)?;
    let x = space.len();
    let mut q_marg = vec![0.0; x];
    for z in 0..support.len() {
        for i in 0..x {
            q_marg[i] += support.probs[z] * qm.get2(z, i);
        }
    }
    let beta = exact_partition_beta(&q_marg, f);
    let mut coeff = vec![0.0; support.len() * x];
    for z in 0..support.len() {
        for i in 0..x {
            coeff[z * x + i] = support.probs[z] * qm.get2(z, i) * f[i].exp() / beta;
        }
    }
    exact_weighted_score_gradient(gen, space, &Tensor::matrix(support.len(), x, coeff))
}

/// Exact divergences relating the reweighted targets to the generator.
#[derive(Debug, Clone, Copy)]
pub struct Theorem2Report {
    /// `E_h[KL(p~(.|z) || q(.|z))]`: expectation over the latent of the
    /// conditional KL against the per-latent weighted conditionals.
    pub expected_conditional_kl: f64,
    /// `KL(sum_z h(z) p~(.|z) || q)`: the marginal induced by the weighted
    /// conditionals against the generator marginal. Never exceeds the
    /// expected conditional KL (marginalizing the joint over `z` cannot
    /// increase KL), and is zero exactly when the expectation is zero.
    pub marginal_kl: f64,
    /// `KL(w q / beta || q)`: the globally normalized weighted density
    /// against the generator marginal. Zero whenever the expected
    /// conditional KL is zero (the weights are then constant), but not
    /// bounded by it in general.
    pub global_weighted_kl: f64,
}

/// Exact Theorem-2 quantities for a statistic table on an enumerable space.
pub fn theorem2_check(
    gen: &GeneratorModel,
    space: &EnumerableSpace,
    f: &[f64],
) -> Result<Theorem2Report> {
    let support = support_of(gen, space)?;
    let qm = conditional_pmf_matrix(gen, space, &support)?;
    let x = space.len();
    let mut expected_conditional = 0.0;
    let mut q_marg = vec![0.0; x];
    let mut aggregated = vec![0.0; x];
    for z in 0..support.len() {
        let row = qm.row(z);
        let alpha = exact_alpha(row, f);
        let mut kl = 0.0;
        for i in 0..x {
            let pt = row[i] * f[i].exp() / alpha;
            if pt > 0.0 {
                kl += pt * (f[i] - alpha.ln());
            }
            aggregated[i] += support.probs[z] * pt;
        }
        expected_conditional += support.probs[z] * kl;
        for i in 0..x {
            q_marg[i] += support.probs[z] * row[i];
        }
    }
    let mut marginal_kl = 0.0;
    for i in 0..x {
        if aggregated[i] > 0.0 {
            marginal_kl += aggregated[i] * (aggregated[i] / q_marg[i]).ln();
        }
    }
    let beta = exact_partition_beta(&q_marg, f);
    let mut global_weighted_kl = 0.0;
    for i in 0..x {
        let pt = q_marg[i] * f[i].exp() / beta;
        if pt > 0.0 {
            global_weighted_kl += pt * (f[i] - beta.ln());
        }
    }
    Ok(Theorem2Report {
        expected_conditional_kl: expected_conditional,
        marginal_kl,
        global_weighted_kl,
    })
}

/// Inverse standard-normal CDF (Acklam's rational approximation,
/// relative error below 1.2e-9; ample for quadrature nodes).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile of p outside (0, 1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, Mlp};
    use crate::rng::seeded;
    use rand::Rng as _;

    fn random_density(n: usize, rng: &mut crate::rng::Rng) -> Vec<f64> {
        let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = p.iter().sum();
        for v in p.iter_mut() {
            *v /= s;
        }
        p
    }

    #[test]
    fn binary_space_enumeration() {
        let s = EnumerableSpace::binary(3).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.outcomes().row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(s.outcomes().row(5), &[1.0, 0.0, 1.0]);
        for i in 0..8 {
            assert_eq!(s.index_of(s.outcomes().row(i)).unwrap(), i);
        }
    }

    #[test]
    fn categorical_space_enumeration() {
        let s = EnumerableSpace::categorical(2, 3).unwrap();
        assert_eq!(s.len(), 9);
        for i in 0..9 {
            assert_eq!(s.index_of(s.outcomes().row(i)).unwrap(), i);
        }
    }

    #[test]
    fn partition_functions_reference_points() {
        let q = [0.25, 0.25, 0.5];
        let f0 = [0.0; 3];
        assert!((exact_partition_beta(&q, &f0) - 1.0).abs() < 1e-15);
        // optimal statistic telescopes to sum p = 1
        let p = [0.1, 0.6, 0.3];
        let f: Vec<f64> = p.iter().zip(&q).map(|(&pi, &qi)| (pi / qi).ln()).collect();
        assert!((exact_partition_beta(&q, &f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_is_exact_for_identical_distributions() {
        let p = [0.2, 0.3, 0.5];
        for d in crate::fdiv::ALL_DIVERGENCES {
            let r = theorem1_reconstruction(&p, &p, d).unwrap();
            assert!(r.max_abs_error <= 1e-12, "{d}: {}", r.max_abs_error);
            assert!(r.optimal_statistic.iter().all(|&f| f.abs() < 1e-12));
        }
    }

    #[test]
    fn reconstruction_across_random_pairs() {
        let mut rng = seeded(31);
        for _ in 0..50 {
            let p = random_density(8, &mut rng);
            let q = random_density(8, &mut rng);
            for d in crate::fdiv::ALL_DIVERGENCES {
                let r = theorem1_reconstruction(&p, &q, d).unwrap();
                assert!(r.max_abs_error <= 1e-10, "{d}: {}", r.max_abs_error);
            }
        }
    }

    #[test]
    fn reconstruction_handles_zero_mass_outcomes() {
        let p = [0.0, 0.4, 0.6];
        let q = [0.2, 0.4, 0.4];
        for d in crate::fdiv::ALL_DIVERGENCES {
            let r = theorem1_reconstruction(&p, &q, d).unwrap();
            // clamped statistic leaves at most e^-30 q mass on the empty outcome
            assert!(r.p_tilde[0] <= 1e-12);
            assert!(r.max_abs_error <= 1e-10);
        }
        assert!(theorem1_reconstruction(&[0.5, 0.5], &[1.0, 0.0], Divergence::Kl).is_err());
    }

    #[test]
    fn primal_divergence_of_identical_is_its_offset() {
        let mut rng = seeded(5);
        let p = random_density(6, &mut rng);
        for d in crate::fdiv::ALL_DIVERGENCES {
            let v = exact_fdivergence(&p, &p, d).unwrap();
            assert!(
                (v - d.primal_offset()).abs() < 1e-12,
                "{d}: {v} vs offset {}",
                d.primal_offset()
            );
        }
    }

    #[test]
    fn gan_divergence_on_disjoint_supports() {
        // the GAN divergence equals 2 JSD - ln 4; at disjoint supports
        // JSD = ln 2, so the value tends to zero
        let p = [1.0, 0.0];
        let q = [0.0, 1.0];
        // primal form is undefined where p > 0, q = 0
        assert!(exact_fdivergence(&p, &q, Divergence::Gan).is_err());
        let eps = 1e-9;
        let p = [1.0 - eps, eps];
        let q = [eps, 1.0 - eps];
        let v = exact_fdivergence(&p, &q, Divergence::Gan).unwrap();
        let expect = 2.0 * std::f64::consts::LN_2 - 4.0_f64.ln();
        assert!((v - expect).abs() < 1e-6, "{v}");
    }

    #[test]
    fn gan_divergence_is_twice_jsd_minus_ln4() {
        // the registry's JS primal evaluates to 2 JSD, so the identity
        // "gan = 2 JSD - ln 4" reads gan = js_registry - ln 4
        let mut rng = seeded(23);
        for _ in 0..20 {
            let p = random_density(6, &mut rng);
            let q = random_density(6, &mut rng);
            let gan = exact_fdivergence(&p, &q, Divergence::Gan).unwrap();
            let js2 = exact_fdivergence(&p, &q, Divergence::JensenShannon).unwrap();
            assert!(
                (gan - (js2 - 4.0_f64.ln())).abs() < 1e-12,
                "{gan} vs {js2} - ln4"
            );
            // true JSD is half the registry value and caps at ln 2
            assert!(js2 / 2.0 <= std::f64::consts::LN_2 + 1e-12);
        }
    }

    #[test]
    fn primal_matches_biconjugate_via_activation() {
        // f(u) = u t* - f*(t*) at t* = nu(ln u)
        for d in crate::fdiv::ALL_DIVERGENCES {
            for u in [0.2_f64, 0.5, 1.0, 1.7, 4.2] {
                let t = d.activation(u.ln());
                let via = u * t - d.conjugate(t).unwrap();
                let direct = d.primal(u);
                assert!(
                    (via - direct).abs() < 1e-10,
                    "{d} at u={u}: {via} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn dual_ascent_approaches_the_primal() {
        let mut rng = seeded(17);
        let p = random_density(8, &mut rng);
        let q = random_density(8, &mut rng);
        for d in crate::fdiv::ALL_DIVERGENCES {
            let primal = exact_fdivergence(&p, &q, d).unwrap();
            let dual = dual_ascent_bound(&p, &q, d, 5000, 0.05).unwrap();
            assert!(
                dual <= primal + 1e-9,
                "{d}: dual {dual} exceeded primal {primal}"
            );
            assert!(
                primal - dual <= 1e-4,
                "{d}: gap {} too large",
                primal - dual
            );
        }
    }

    fn bernoulli_generator(bits: usize, seed: u64) -> GeneratorModel {
        let net = Mlp::new(2, &[6], bits, Activation::Tanh, &mut seeded(seed));
        GeneratorModel::new(
            Prior::Uniform01 { dim: 2 },
            net,
            ConditionalFamily::Bernoulli { dims: bits },
        )
    }

    fn discrete_support(n: usize, seed: u64) -> PriorSupport {
        let mut rng = seeded(seed);
        let nodes = Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.gen_range(0.0..1.0)).collect());
        PriorSupport::explicit(nodes, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn marginal_sums_to_one_and_matches_sampling() {
        let gen = bernoulli_generator(4, 3);
        let space = EnumerableSpace::binary(4)
            .unwrap()
            .with_prior_support(discrete_support(8, 4));
        let rep = exact_marginal(&gen, &space).unwrap();
        let s: f64 = rep.q.iter().sum();
        assert!((s - 1.0).abs() <= 1e-10, "marginal sums to {s}");

        // empirical histogram cross-check, three standard errors per cell
        let mut rng = seeded(9);
        let n_samples = 200_000usize;
        let mut counts = vec![0usize; space.len()];
        let support = space.prior_support.as_ref().unwrap();
        for _ in 0..n_samples {
            let zi = rng.gen_range(0..support.len());
            let z = Tensor::matrix(1, 2, support.nodes.row(zi).to_vec());
            let logits = logits_values(&gen, &z).unwrap();
            let x = gen.sample_conditional(
                &Tensor::matrix(
                    1,
                    4,
                    logits
                        .data()
                        .iter()
                        .map(|&l| sigmoid_scalar(l).clamp(CENTER_EPS, 1.0 - CENTER_EPS))
                        .collect(),
                ),
                1,
                &mut rng,
            )
            .unwrap();
            counts[space.index_of(x.row(0)).unwrap()] += 1;
        }
        for i in 0..space.len() {
            let freq = counts[i] as f64 / n_samples as f64;
            let se = (rep.q[i] * (1.0 - rep.q[i]) / n_samples as f64).sqrt();
            assert!(
                (freq - rep.q[i]).abs() <= 3.0 * se + 1e-4,
                "cell {i}: freq {freq} vs exact {}",
                rep.q[i]
            );
        }
    }

    #[test]
    fn uniform_center_generator_has_uniform_marginal() {
        // zero final layer makes every center 0.5 independent of z
        let mut gen = bernoulli_generator(4, 5);
        let last = gen.net.weights.len() - 1;
        gen.net.weights[last] = Tensor::zeros(gen.net.weights[last].shape().to_vec());
        gen.net.biases[last] = Tensor::zeros(gen.net.biases[last].shape().to_vec());
        let space = EnumerableSpace::binary(4).unwrap();
        let rep = exact_marginal(&gen, &space).unwrap();
        for &qi in &rep.q {
            assert!((qi - 1.0 / 16.0).abs() < 1e-12);
        }
        // quadrature support was synthesized, so an error estimate is present
        assert!(rep.quadrature_error.is_some());
        assert!(rep.quadrature_error.unwrap() < 1e-12);
    }

    #[test]
    fn deterministic_two_point_counting() {
        // linear map sending two z nodes to two distinct lattice outcomes
        let mut net = Mlp::new(1, &[], 2, Activation::Relu, &mut seeded(1));
        net.weights[0] = Tensor::matrix(1, 2, vec![1.0, -1.0]);
        net.biases[0] = Tensor::matrix(1, 2, vec![0.0, 1.0]);
        // z = 0 -> (0, 1); z = 1 -> (1, 0)
        let gen = GeneratorModel::new(
            Prior::Uniform01 { dim: 1 },
            net,
            ConditionalFamily::Deterministic { dims: 2 },
        );
        let support =
            PriorSupport::explicit(Tensor::matrix(2, 1, vec![0.0, 1.0]), vec![0.5, 0.5]).unwrap();
        let space = EnumerableSpace::binary(2).unwrap().with_prior_support(support);
        let rep = exact_marginal(&gen, &space).unwrap();
        // outcomes: index 1 = (1,0), index 2 = (0,1)
        assert_eq!(rep.q, vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn constant_statistic_gives_zero_exact_gradients() {
        let gen = bernoulli_generator(4, 7);
        let space = EnumerableSpace::binary(4)
            .unwrap()
            .with_prior_support(discrete_support(6, 8));
        let f = vec![0.7; 16];
        for grads in [
            exact_conditional_kl_gradient(&gen, &space, &f).unwrap(),
            exact_marginal_kl_gradient(&gen, &space, &f).unwrap(),
        ] {
            for t in grads {
                for &v in t.data() {
                    assert!(v.abs() <= 1e-12, "gradient component {v}");
                }
            }
        }
    }

    #[test]
    fn exact_gradients_match_finite_differences_of_frozen_objective() {
        let gen = bernoulli_generator(3, 11);
        let space = EnumerableSpace::binary(3)
            .unwrap()
            .with_prior_support(discrete_support(5, 12));
        let mut rng = seeded(13);
        let f: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let support = space.prior_support.clone().unwrap();
        let qm = conditional_pmf_matrix(&gen, &space, &support).unwrap();
        let x = space.len();
        let mut coeff = vec![0.0; support.len() * x];
        for z in 0..support.len() {
            let row = qm.row(z);
            let alpha = exact_alpha(row, &f);
            for i in 0..x {
                coeff[z * x + i] = support.probs[z] * row[i] * f[i].exp() / alpha;
            }
        }

        let grads = exact_conditional_kl_gradient(&gen, &space, &f).unwrap();
        let auto: Vec<f64> = grads.iter().flat_map(|t| t.data().to_vec()).collect();

        let base = gen.net.params();
        let flat: Vec<f64> = base.iter().flat_map(|t| t.data().to_vec()).collect();
        let fd = crate::gradcheck::finite_difference(
            |pvals| {
                let mut gen2 = gen.clone();
                let mut params = base.clone();
                let mut off = 0;
                for t in params.iter_mut() {
                    let n = t.len();
                    t.data_mut().copy_from_slice(&pvals[off..off + n]);
                    off += n;
                }
                gen2.net.set_params(&params);
                // frozen-coefficient objective: -sum coeff ln q_theta
                let logits = logits_values(&gen2, &support.nodes).unwrap();
                let mut row = vec![0.0; x];
                let mut obj = 0.0;
                for z in 0..support.len() {
                    pmf_row(gen2.family, logits.row(z), &space, &mut row).unwrap();
                    for i in 0..x {
                        obj -= coeff[z * x + i] * row[i].ln();
                    }
                }
                obj
            },
            &flat,
            crate::gradcheck::FD_STEP,
        );
        let err = crate::gradcheck::relative_error(&auto, &fd);
        assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn theorem2_zero_cases() {
        // constant statistics: normalization cancels them, every divergence
        // in the report is exactly zero
        let gen = bernoulli_generator(4, 15);
        let space = EnumerableSpace::binary(4)
            .unwrap()
            .with_prior_support(discrete_support(6, 16));
        for c in [0.0, 1.7] {
            let f = vec![c; 16];
            let r = theorem2_check(&gen, &space, &f).unwrap();
            assert!(r.expected_conditional_kl.abs() <= 1e-12, "at c = {c}");
            assert!(r.marginal_kl.abs() <= 1e-12, "at c = {c}");
            assert!(r.global_weighted_kl.abs() <= 1e-12, "at c = {c}");
        }
    }

    #[test]
    fn theorem2_random_cases_are_nonnegative_and_ordered() {
        let mut rng = seeded(19);
        let mut saw_positive = false;
        for case in 0..100 {
            let gen = bernoulli_generator(4, 100 + case);
            let space = EnumerableSpace::binary(4)
                .unwrap()
                .with_prior_support(discrete_support(6, 200 + case));
            let f: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = theorem2_check(&gen, &space, &f).unwrap();
            assert!(r.expected_conditional_kl >= -1e-12);
            assert!(r.marginal_kl >= -1e-12);
            assert!(r.global_weighted_kl >= -1e-12);
            saw_positive |= r.expected_conditional_kl > 1e-6;
            assert!(
                r.marginal_kl <= r.expected_conditional_kl + 1e-9,
                "case {case}: marginal {} > conditional {}",
                r.marginal_kl,
                r.expected_conditional_kl
            );
        }
        assert!(saw_positive, "random statistics never produced positive KL");
    }

    #[test]
    fn theorem2_global_form_is_not_bounded_by_the_conditional() {
        // near-deterministic conditionals anti-correlated with the weights:
        // the globally normalized density moves further from q than the
        // per-latent reweighting, demonstrating why the ordered quantity is
        // the aggregated marginal
        let mut net = Mlp::new(1, &[], 1, Activation::Relu, &mut seeded(1));
        net.weights[0] = Tensor::matrix(1, 1, vec![12.0]);
        net.biases[0] = Tensor::matrix(1, 1, vec![-6.0]);
        let gen = GeneratorModel::new(
            Prior::Uniform01 { dim: 1 },
            net,
            ConditionalFamily::Bernoulli { dims: 1 },
        );
        let support =
            PriorSupport::explicit(Tensor::matrix(2, 1, vec![0.0, 1.0]), vec![0.5, 0.5]).unwrap();
        let space = EnumerableSpace::binary(1).unwrap().with_prior_support(support);
        let f = vec![2.0_f64.ln(), 0.0];
        let r = theorem2_check(&gen, &space, &f).unwrap();
        assert!(r.global_weighted_kl > r.expected_conditional_kl);
        assert!(r.marginal_kl <= r.expected_conditional_kl + 1e-12);
    }

    #[test]
    fn quantile_matches_known_values() {
        assert!(normal_quantile(0.5).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
        assert!((normal_quantile(0.025) + 1.959964).abs() < 1e-5);
    }

    #[test]
    fn budget_violations_are_reported() {
        assert!(EnumerableSpace::binary(17).is_err());
        let gen = bernoulli_generator(16, 3);
        let space = EnumerableSpace::binary(16).unwrap().with_prior_support({
            let n = 1 << 9;
            PriorSupport::explicit(
                Tensor::matrix(n, 2, vec![0.5; 2 * n]),
                vec![1.0 / n as f64; n],
            )
            .unwrap()
        });
        assert!(matches!(
            exact_marginal(&gen, &space),
            Err(Error::BudgetExceeded(_))
        ));
    }
}
