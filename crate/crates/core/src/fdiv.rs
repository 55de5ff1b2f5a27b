//! Registry of f-divergences with their output activations, convex
//! conjugates, importance weights and the variational lower bound.
//!
//! Each divergence pairs an activation `nu` (mapping a raw statistic `F`
//! into the conjugate domain) with the conjugate `f*` so that the
//! importance weight `w = (df*/dT)(nu(F))` reduces to `exp(F)` for every
//! entry in the registry. Training code only ever works with `log w = F`.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::softplus_scalar;

use std::f64::consts::LN_2;

/// Statistics are clamped to this magnitude before entering the activation
/// on discriminator loss paths, keeping `f*` away from its domain boundary.
pub const DEFAULT_STATISTIC_CLAMP: f64 = 30.0;

/// The five supported f-divergences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Divergence {
    Gan,
    JensenShannon,
    Kl,
    ReverseKl,
    SquaredHellinger,
}

pub const ALL_DIVERGENCES: [Divergence; 5] = [
    Divergence::Gan,
    Divergence::JensenShannon,
    Divergence::Kl,
    Divergence::ReverseKl,
    Divergence::SquaredHellinger,
];

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gan" => Ok(Divergence::Gan),
            "js" => Ok(Divergence::JensenShannon),
            "kl" => Ok(Divergence::Kl),
            "rkl" => Ok(Divergence::ReverseKl),
            "sh" => Ok(Divergence::SquaredHellinger),
            other => Err(Error::UnknownName {
                what: "divergence",
                value: other.to_string(),
                expected: "gan | js | kl | rkl | sh",
            }),
        }
    }
}

impl Divergence {
    pub fn name(self) -> &'static str {
        match self {
            Divergence::Gan => "gan",
            Divergence::JensenShannon => "js",
            Divergence::Kl => "kl",
            Divergence::ReverseKl => "rkl",
            Divergence::SquaredHellinger => "sh",
        }
    }

    /// Exclusive upper end of the conjugate domain `C`; `None` means all of R.
    /// Every domain here is a half line `(-inf, b)` or the full line.
    pub fn conjugate_upper_bound(self) -> Option<f64> {
        match self {
            Divergence::Gan => Some(0.0),
            Divergence::JensenShannon => Some(LN_2),
            Divergence::Kl => None,
            Divergence::ReverseKl => Some(0.0),
            Divergence::SquaredHellinger => Some(1.0),
        }
    }

    fn domain_str(self) -> &'static str {
        match self {
            Divergence::Gan => "t < 0",
            Divergence::JensenShannon => "t < ln 2",
            Divergence::Kl => "all reals",
            Divergence::ReverseKl => "t < 0",
            Divergence::SquaredHellinger => "t < 1",
        }
    }

    fn check_domain(self, t: f64) -> Result<()> {
        let ok = match self.conjugate_upper_bound() {
            Some(b) => t < b,
            None => true,
        } && t.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::ConjugateDomain {
                divergence: self.name(),
                value: t,
                domain: self.domain_str(),
            })
        }
    }

    /// Output activation `nu(y)`, total on finite reals, range inside `C`.
    pub fn activation(self, y: f64) -> f64 {
        match self {
            // ln sigmoid(y)
            Divergence::Gan => -softplus_scalar(-y),
            Divergence::JensenShannon => LN_2 - softplus_scalar(-y),
            Divergence::Kl => y + 1.0,
            Divergence::ReverseKl => -(-y).exp(),
            Divergence::SquaredHellinger => -(-y / 2.0).exp_m1(),
        }
    }

    /// Convex conjugate `f*(t)` on its domain `C`.
    pub fn conjugate(self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match self {
            // -ln(1 - e^t)
            Divergence::Gan => -(-t.exp()).ln_1p(),
            // -ln(2 - e^t)
            Divergence::JensenShannon => -LN_2 - (-(t - LN_2).exp()).ln_1p(),
            Divergence::Kl => (t - 1.0).exp(),
            Divergence::ReverseKl => -1.0 - (-t).ln(),
            Divergence::SquaredHellinger => t / (1.0 - t),
        })
    }

    /// `df*/dt` on the conjugate domain.
    pub fn conjugate_derivative(self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match self {
            // e^t / (1 - e^t) = 1 / (e^-t - 1)
            Divergence::Gan => 1.0 / (-t).exp_m1(),
            // e^t / (2 - e^t) = 1 / (2 e^-t - 1)
            Divergence::JensenShannon => 1.0 / (2.0 * (-t).exp() - 1.0),
            Divergence::Kl => (t - 1.0).exp(),
            Divergence::ReverseKl => -1.0 / t,
            Divergence::SquaredHellinger => 1.0 / ((1.0 - t) * (1.0 - t)),
        })
    }

    /// Importance weight `w = (df*/dT)(nu(F))`, identically `exp(F)` for
    /// every divergence in the registry. The closed form is used on the
    /// training path; `conjugate_derivative(activation(F))` exists to verify
    /// the identity.
    pub fn importance_weight(self, f_statistic: f64) -> f64 {
        f_statistic.exp()
    }

    /// `ln w`, identically the statistic itself.
    pub fn log_importance_weight(self, f_statistic: f64) -> f64 {
        f_statistic
    }

    /// Primal generator function `f(u)` (with native additive constant).
    /// Used only by exact oracles; `f(1)` is exposed as [`Self::primal_offset`].
    pub fn primal(self, u: f64) -> f64 {
        debug_assert!(u >= 0.0, "density ratio must be non-negative");
        let xlnx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
        match self {
            Divergence::Gan => xlnx(u) - xlnx(1.0 + u),
            Divergence::JensenShannon => xlnx(u) - xlnx(1.0 + u) + (1.0 + u) * LN_2,
            Divergence::Kl => xlnx(u),
            Divergence::ReverseKl => {
                if u == 0.0 {
                    f64::INFINITY
                } else {
                    -u.ln()
                }
            }
            Divergence::SquaredHellinger => {
                let d = u.sqrt() - 1.0;
                d * d
            }
        }
    }

    /// `f(1)`: the value of the divergence at identical distributions.
    /// Zero for all rows except the GAN divergence, where it is `-ln 4`.
    pub fn primal_offset(self) -> f64 {
        self.primal(1.0)
    }

    /// Scalar `f*(nu(y))` without domain checks: the composition always lands
    /// inside `C`, and the fused forms below stay stable for large `|y|`.
    pub fn conjugate_of_activation(self, y: f64) -> f64 {
        match self {
            Divergence::Gan => softplus_scalar(y),
            Divergence::JensenShannon => softplus_scalar(y) - LN_2,
            Divergence::Kl => y.exp(),
            Divergence::ReverseKl => y - 1.0,
            Divergence::SquaredHellinger => (y / 2.0).exp() - 1.0,
        }
    }

    /// Graph node for `nu(F)`.
    pub fn activation_graph(self, g: &mut Graph, y: Var) -> Var {
        match self {
            Divergence::Gan => {
                let ny = g.neg(y);
                let sp = g.softplus(ny);
                g.neg(sp)
            }
            Divergence::JensenShannon => {
                let ny = g.neg(y);
                let sp = g.softplus(ny);
                let nsp = g.neg(sp);
                g.add_scalar(nsp, LN_2)
            }
            Divergence::Kl => g.add_scalar(y, 1.0),
            Divergence::ReverseKl => {
                let ny = g.neg(y);
                let e = g.exp(ny);
                g.neg(e)
            }
            Divergence::SquaredHellinger => {
                let h = g.mul_scalar(y, -0.5);
                let e = g.exp(h);
                let ne = g.neg(e);
                g.add_scalar(ne, 1.0)
            }
        }
    }

    /// Graph node for `f*(nu(F))` as a function of the raw statistic.
    pub fn conjugate_of_activation_graph(self, g: &mut Graph, y: Var) -> Var {
        match self {
            Divergence::Gan => g.softplus(y),
            Divergence::JensenShannon => {
                let sp = g.softplus(y);
                g.add_scalar(sp, -LN_2)
            }
            Divergence::Kl => g.exp(y),
            Divergence::ReverseKl => g.add_scalar(y, -1.0),
            Divergence::SquaredHellinger => {
                let h = g.mul_scalar(y, 0.5);
                let e = g.exp(h);
                g.add_scalar(e, -1.0)
            }
        }
    }

    /// Variational lower bound `mean nu(F_real) - mean f*(nu(F_fake))` over
    /// raw statistic batches. This is the quantity the discriminator ascends.
    pub fn variational_lower_bound(self, f_real: &[f64], f_fake: &[f64]) -> Result<f64> {
        if f_real.is_empty() || f_fake.is_empty() {
            return Err(Error::InvalidParam(
                "variational_lower_bound: empty batch".into(),
            ));
        }
        let pos: f64 =
            f_real.iter().map(|&f| self.activation(f)).sum::<f64>() / f_real.len() as f64;
        let neg: f64 = f_fake
            .iter()
            .map(|&f| self.conjugate_of_activation(f))
            .sum::<f64>()
            / f_fake.len() as f64;
        let bound = pos - neg;
        if bound.is_finite() {
            Ok(bound)
        } else {
            Err(Error::NonFinite("variational_lower_bound".into()))
        }
    }

    /// Graph version of the lower bound over `[n,1]` statistic columns.
    pub fn lower_bound_graph(self, g: &mut Graph, f_real: Var, f_fake: Var) -> Var {
        let act = self.activation_graph(g, f_real);
        let pos = g.mean_all(act);
        let conj = self.conjugate_of_activation_graph(g, f_fake);
        let neg = g.mean_all(conj);
        g.sub(pos, neg)
    }
}

/// A statistic value together with its activation under a divergence.
#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorOutput {
    pub statistic: f64,
    pub activated: f64,
    pub divergence: Divergence,
}

impl DiscriminatorOutput {
    pub fn new(divergence: Divergence, statistic: f64) -> Self {
        let activated = divergence.activation(statistic);
        debug_assert!(divergence.check_domain(activated).is_ok());
        DiscriminatorOutput {
            statistic,
            activated,
            divergence,
        }
    }
}
