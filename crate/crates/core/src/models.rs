//! Generator and discriminator model families: priors, conditional output
//! distributions with exact log-probabilities, and scalar statistic networks.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng::Rng;
use crate::tensor::{sigmoid_scalar, softmax_slice, Tensor};

use rand::Rng as _;
use rand_distr::StandardNormal;

/// Conditional parameters are clamped this far away from {0, 1} so
/// log-probabilities stay finite.
pub const CENTER_EPS: f64 = 1e-6;

/// Latent prior `h(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prior {
    Uniform01 { dim: usize },
    StandardNormal { dim: usize },
}

impl Prior {
    pub fn dim(self) -> usize {
        match self {
            Prior::Uniform01 { dim } | Prior::StandardNormal { dim } => dim,
        }
    }

    /// `n` i.i.d. draws, one per row.
    pub fn sample(self, n: usize, rng: &mut Rng) -> Tensor {
        assert!(n >= 1, "sample_prior requires n >= 1");
        let dim = self.dim();
        let mut data = Vec::with_capacity(n * dim);
        match self {
            Prior::Uniform01 { .. } => {
                for _ in 0..n * dim {
                    data.push(rng.gen::<f64>());
                }
            }
            Prior::StandardNormal { .. } => {
                for _ in 0..n * dim {
                    data.push(rng.sample(StandardNormal));
                }
            }
        }
        Tensor::matrix(n, dim, data)
    }
}

/// Conditional output distribution `q(x | z)` parameterized by the
/// generator network's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionalFamily {
    /// Independent Bernoulli per observed dimension; centers through sigmoid.
    Bernoulli { dims: usize },
    /// Independent categorical per position; probabilities through a
    /// per-position softmax. Observations are one-hot per position.
    Categorical { positions: usize, classes: usize },
    /// `x = G(z)` directly; no sampling noise.
    Deterministic { dims: usize },
}

impl ConditionalFamily {
    /// Width of the network output that parameterizes the family.
    pub fn param_dim(self) -> usize {
        match self {
            ConditionalFamily::Bernoulli { dims } => dims,
            ConditionalFamily::Categorical { positions, classes } => positions * classes,
            ConditionalFamily::Deterministic { dims } => dims,
        }
    }

    /// Width of one observation vector.
    pub fn observed_dim(self) -> usize {
        self.param_dim()
    }
}

/// Hidden-layer activation of an MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Square,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "square" => Ok(Activation::Square),
            other => Err(Error::UnknownName {
                what: "activation",
                value: other.to_string(),
                expected: "relu | tanh | sigmoid | square",
            }),
        }
    }
}

/// A fully-connected network with a linear output layer.
///
/// Parameters are plain tensors owned by the struct; every forward pass
/// binds them into a graph as leaves (trainable) or constants (frozen).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub activation: Activation,
    input_dim: usize,
    output_dim: usize,
}

/// Graph handles for one binding of an [`Mlp`]'s parameters.
pub struct MlpVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl Mlp {
    /// Xavier-uniform initialized network: `input -> hidden... -> output`.
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-s..s))
                .collect();
            weights.push(Tensor::matrix(fan_in, fan_out, data));
            biases.push(Tensor::matrix(1, fan_out, vec![0.0; fan_out]));
        }
        Mlp {
            weights,
            biases,
            activation,
            input_dim: input,
            output_dim: output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Tensor::len).sum::<usize>()
            + self.biases.iter().map(Tensor::len).sum::<usize>()
    }

    /// Flat view of all parameters, weights and biases interleaved per layer.
    pub fn params(&self) -> Vec<Tensor> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.clone());
            out.push(b.clone());
        }
        out
    }

    pub fn set_params(&mut self, params: &[Tensor]) {
        assert_eq!(params.len(), self.weights.len() * 2);
        for (i, chunk) in params.chunks(2).enumerate() {
            assert_eq!(chunk[0].shape(), self.weights[i].shape());
            assert_eq!(chunk[1].shape(), self.biases[i].shape());
            self.weights[i] = chunk[0].clone();
            self.biases[i] = chunk[1].clone();
        }
    }

    /// Bind parameters into `g` as trainable leaves.
    pub fn bind(&self, g: &mut Graph) -> MlpVars {
        self.bind_inner(g, true)
    }

    /// Bind parameters as constants (frozen network).
    pub fn bind_frozen(&self, g: &mut Graph) -> MlpVars {
        self.bind_inner(g, false)
    }

    fn bind_inner(&self, g: &mut Graph, trainable: bool) -> MlpVars {
        let weights = self
            .weights
            .iter()
            .map(|w| g.leaf(w.clone(), trainable))
            .collect();
        let biases = self
            .biases
            .iter()
            .map(|b| g.leaf(b.clone(), trainable))
            .collect();
        MlpVars { weights, biases }
    }

    /// Forward pass over a bound graph; `x` is `[batch, input_dim]`.
    pub fn forward(&self, g: &mut Graph, vars: &MlpVars, x: Var) -> Result<Var> {
        let got = g.value(x).shape().to_vec();
        if got.len() != 2 || got[1] != self.input_dim {
            return Err(Error::ShapeMismatch {
                context: "mlp forward input",
                expected: vec![got.first().copied().unwrap_or(0), self.input_dim],
                got,
            });
        }
        let last = vars.weights.len() - 1;
        let mut h = x;
        for i in 0..vars.weights.len() {
            let lin = g.matmul(h, vars.weights[i]);
            h = g.add_bias(lin, vars.biases[i]);
            if i < last {
                h = match self.activation {
                    Activation::Relu => g.relu(h),
                    Activation::Tanh => g.tanh(h),
                    Activation::Sigmoid => g.sigmoid(h),
                    Activation::Square => g.square(h),
                };
            }
        }
        g.check_finite()?;
        Ok(h)
    }

    /// Gradients of `loss` w.r.t. this binding, in [`Self::params`] order.
    pub fn grads(&self, g: &mut Graph, vars: &MlpVars, loss: Var) -> Result<Vec<Tensor>> {
        let mut wrt = Vec::with_capacity(vars.weights.len() * 2);
        for (w, b) in vars.weights.iter().zip(&vars.biases) {
            wrt.push(*w);
            wrt.push(*b);
        }
        g.grad_values(loss, &wrt)
    }

    /// Apply an optimizer step given grads in [`Self::params`] order.
    pub fn apply_step(&mut self, opt: &mut crate::optim::Optimizer, grads: &[Tensor]) -> Result<()> {
        let mut params = self.params();
        opt.step(&mut params, grads)?;
        self.set_params(&params);
        Ok(())
    }
}

/// Generator: prior, network mapping `z` to conditional parameters, and the
/// conditional family.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub prior: Prior,
    pub net: Mlp,
    pub family: ConditionalFamily,
}

impl GeneratorModel {
    pub fn new(prior: Prior, net: Mlp, family: ConditionalFamily) -> Self {
        assert_eq!(
            net.output_dim(),
            family.param_dim(),
            "network output width must parameterize the family"
        );
        GeneratorModel { prior, net, family }
    }

    /// Network output (pre-activation parameters) for a batch of `z`.
    pub fn logits(&self, g: &mut Graph, vars: &MlpVars, z: Var) -> Result<Var> {
        self.net.forward(g, vars, z)
    }

    /// Family parameters (Bernoulli centers / categorical probabilities /
    /// deterministic outputs) from network logits.
    pub fn params_from_logits(&self, g: &mut Graph, logits: Var) -> Var {
        match self.family {
            ConditionalFamily::Bernoulli { .. } => {
                let s = g.sigmoid(logits);
                g.clamp(s, CENTER_EPS, 1.0 - CENTER_EPS)
            }
            ConditionalFamily::Categorical { positions, classes } => {
                let b = g.value(logits).rows();
                let flat = g.reshape(logits, vec![b * positions, classes]);
                let probs = g.softmax_rows(flat);
                g.reshape(probs, vec![b, positions * classes])
            }
            ConditionalFamily::Deterministic { .. } => logits,
        }
    }

    /// Log-probability `ln q(x | z)` for observations `x`, differentiable
    /// w.r.t. the binding behind `logits`.
    ///
    /// `logits` is `[b, param_dim]`; `x` must have `b * m` rows with the
    /// `m` samples of row `i` grouped consecutively.
    pub fn log_prob_conditional(
        &self,
        g: &mut Graph,
        logits: Var,
        x: &Tensor,
        m: usize,
    ) -> Result<Var> {
        let b = g.value(logits).rows();
        validate_support(self.family, x)?;
        if x.rows() != b * m {
            return Err(Error::ShapeMismatch {
                context: "log_prob_conditional observations",
                expected: vec![b * m, self.family.observed_dim()],
                got: x.shape().to_vec(),
            });
        }
        let rep = if m == 1 { logits } else { g.repeat_rows(logits, m) };
        match self.family {
            ConditionalFamily::Bernoulli { .. } => {
                let s = g.sigmoid(rep);
                let c = g.clamp(s, CENTER_EPS, 1.0 - CENTER_EPS);
                let ln_c = g.ln(c);
                let nc = g.neg(c);
                let one_minus = g.add_scalar(nc, 1.0);
                let ln_nc = g.ln(one_minus);
                let xc = g.constant(x.clone());
                let x_flip = g.constant(x.map(|v| 1.0 - v));
                let t1 = g.mul(xc, ln_c);
                let t2 = g.mul(x_flip, ln_nc);
                let s = g.add(t1, t2);
                Ok(g.row_sum(s))
            }
            ConditionalFamily::Categorical { positions, classes } => {
                let rows = b * m;
                let flat = g.reshape(rep, vec![rows * positions, classes]);
                let ls = g.log_softmax_rows(flat);
                let onehot = g.constant(x.clone().reshape(vec![rows * positions, classes]));
                let picked = g.mul(onehot, ls);
                let per_pos = g.row_sum(picked);
                let back = g.reshape(per_pos, vec![rows, positions]);
                Ok(g.row_sum(back))
            }
            ConditionalFamily::Deterministic { .. } => Err(Error::InvalidParam(
                "deterministic family has no conditional log-probability".into(),
            )),
        }
    }

    /// Draw `m` samples from each row's conditional, dimensions independent
    /// given `z`. Returns `[b * m, observed_dim]` with row `i`'s samples
    /// grouped consecutively.
    pub fn sample_conditional(&self, params: &Tensor, m: usize, rng: &mut Rng) -> Result<Tensor> {
        validate_params(self.family, params)?;
        let b = params.rows();
        let d = self.family.observed_dim();
        let mut out = Vec::with_capacity(b * m * d);
        match self.family {
            ConditionalFamily::Bernoulli { .. } => {
                for i in 0..b {
                    let row = params.row(i);
                    for _ in 0..m {
                        for &c in row {
                            out.push(if rng.gen::<f64>() < c { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
            ConditionalFamily::Categorical { positions, classes } => {
                for i in 0..b {
                    let row = params.row(i);
                    for _ in 0..m {
                        for p in 0..positions {
                            let probs = &row[p * classes..(p + 1) * classes];
                            let u = rng.gen::<f64>();
                            let mut acc = 0.0;
                            let mut chosen = classes - 1;
                            for (k, &pr) in probs.iter().enumerate() {
                                acc += pr;
                                if u < acc {
                                    chosen = k;
                                    break;
                                }
                            }
                            for k in 0..classes {
                                out.push(if k == chosen { 1.0 } else { 0.0 });
                            }
                        }
                    }
                }
            }
            ConditionalFamily::Deterministic { .. } => {
                for i in 0..b {
                    for _ in 0..m {
                        out.extend_from_slice(params.row(i));
                    }
                }
            }
        }
        Ok(Tensor::matrix(b * m, d, out))
    }

    /// Convenience: sample the full generative path with frozen parameters.
    /// Returns `(z, params, x)`.
    pub fn sample(&self, n: usize, m: usize, rng: &mut Rng) -> Result<(Tensor, Tensor, Tensor)> {
        let z = self.prior.sample(n, rng);
        let mut g = Graph::new();
        let vars = self.net.bind_frozen(&mut g);
        let zv = g.constant(z.clone());
        let logits = self.logits(&mut g, &vars, zv)?;
        let params = self.params_from_logits(&mut g, logits);
        let params_t = g.value(params).clone();
        let x = self.sample_conditional(&params_t, m, rng)?;
        Ok((z, params_t, x))
    }
}

fn validate_params(family: ConditionalFamily, params: &Tensor) -> Result<()> {
    if params.rank() != 2 || params.cols() != family.param_dim() {
        return Err(Error::ShapeMismatch {
            context: "conditional parameters",
            expected: vec![params.shape().first().copied().unwrap_or(0), family.param_dim()],
            got: params.shape().to_vec(),
        });
    }
    match family {
        ConditionalFamily::Bernoulli { .. } => {
            if params.data().iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                return Err(Error::InvalidParam(
                    "Bernoulli center outside [0, 1]".into(),
                ));
            }
        }
        ConditionalFamily::Categorical { positions, classes } => {
            for i in 0..params.rows() {
                let row = params.row(i);
                for p in 0..positions {
                    let s: f64 = row[p * classes..(p + 1) * classes].iter().sum();
                    if (s - 1.0).abs() > 1e-9 || row[p * classes..(p + 1) * classes].iter().any(|&v| v < 0.0) {
                        return Err(Error::InvalidParam(format!(
                            "categorical probabilities at row {i} position {p} sum to {s}"
                        )));
                    }
                }
            }
        }
        ConditionalFamily::Deterministic { .. } => {}
    }
    Ok(())
}

fn validate_support(family: ConditionalFamily, x: &Tensor) -> Result<()> {
    match family {
        ConditionalFamily::Bernoulli { .. } => {
            if x.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Support("non-binary value for Bernoulli".into()));
            }
        }
        ConditionalFamily::Categorical { positions, classes } => {
            for i in 0..x.rows() {
                let row = x.row(i);
                for p in 0..positions {
                    let cell = &row[p * classes..(p + 1) * classes];
                    let ones = cell.iter().filter(|&&v| v == 1.0).count();
                    let zeros = cell.iter().filter(|&&v| v == 0.0).count();
                    if ones != 1 || zeros != classes - 1 {
                        return Err(Error::Support(format!(
                            "invalid one-hot at row {i} position {p}"
                        )));
                    }
                }
            }
        }
        ConditionalFamily::Deterministic { .. } => {}
    }
    Ok(())
}

/// Scalar-output network `F(x)`; composing it with a divergence's
/// activation gives the discriminator.
#[derive(Debug, Clone)]
pub struct StatisticNetwork {
    pub net: Mlp,
}

impl StatisticNetwork {
    pub fn new(net: Mlp) -> Self {
        assert_eq!(net.output_dim(), 1, "statistic network output must be scalar");
        StatisticNetwork { net }
    }

    /// One finite scalar per row; `[n, input_dim] -> [n, 1]`.
    pub fn forward(&self, g: &mut Graph, vars: &MlpVars, x: Var) -> Result<Var> {
        self.net.forward(g, vars, x)
    }

    /// Forward over `(x, y)` pairs fed as concatenated columns.
    pub fn forward_pair(&self, g: &mut Graph, vars: &MlpVars, x: Var, y: Var) -> Result<Var> {
        let xy = g.concat_cols(x, y);
        self.net.forward(g, vars, xy)
    }
}

/// Eager sigmoid over a tensor, for parameter exports outside a graph.
pub fn sigmoid_tensor(t: &Tensor) -> Tensor {
    t.map(sigmoid_scalar)
}

/// Eager per-position softmax for categorical parameter exports.
pub fn softmax_positions(logits: &Tensor, positions: usize, classes: usize) -> Tensor {
    let b = logits.rows();
    assert_eq!(logits.cols(), positions * classes);
    let mut out = vec![0.0; logits.len()];
    for i in 0..b {
        for p in 0..positions {
            let off = i * positions * classes + p * classes;
            softmax_slice(
                &logits.data()[off..off + classes],
                &mut out[off..off + classes],
            );
        }
    }
    Tensor::matrix(b, positions * classes, out)
}
