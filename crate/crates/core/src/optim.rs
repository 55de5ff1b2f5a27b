//! First-order optimizers over flat parameter lists.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Update rule. `Adam` tracks first/second moments with bias correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimAlgo {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Defaults used by every adversarial experiment unless overridden:
/// step size 1e-4, moment decays (0.5, 0.999).
pub const ADAM_DEFAULT_BETA1: f64 = 0.5;
pub const ADAM_DEFAULT_BETA2: f64 = 0.999;
pub const ADAM_DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_STEP_SIZE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub algo: OptimAlgo,
    pub step_size: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn sgd(step_size: f64) -> Self {
        assert!(step_size >= 0.0, "step size must be non-negative");
        Optimizer {
            algo: OptimAlgo::Sgd,
            step_size,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn adam(step_size: f64) -> Self {
        Self::adam_with(
            step_size,
            ADAM_DEFAULT_BETA1,
            ADAM_DEFAULT_BETA2,
            ADAM_DEFAULT_EPS,
        )
    }

    pub fn adam_with(step_size: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        assert!(step_size >= 0.0, "step size must be non-negative");
        assert!((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2));
        Optimizer {
            algo: OptimAlgo::Adam { beta1, beta2, eps },
            step_size,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Descend `params` along `grads`. Ascent is obtained by negating the
    /// loss whose gradient is passed in.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch {
                context: "optimizer step: param/grad count",
                expected: vec![params.len()],
                got: vec![grads.len()],
            });
        }
        for (p, g) in params.iter().zip(grads.iter()) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    context: "optimizer step: param/grad shape",
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            g.check_finite("optimizer step gradient")?;
        }
        match self.algo {
            OptimAlgo::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= self.step_size * gv;
                    }
                }
            }
            OptimAlgo::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
                    self.v = self.m.clone();
                }
                assert_eq!(self.m.len(), params.len(), "optimizer bound to a different parameter list");
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for ((pv, gv), (mv, vv)) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
                    {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        let mhat = *mv / bc1;
                        let vhat = *vv / bc2;
                        *pv -= self.step_size * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
