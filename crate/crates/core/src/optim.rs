//! Adam and SGD with Nesterov momentum and a cosine learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        /// L2 penalty folded into the gradient.
        weight_decay: f64,
    },
    Sgd {
        lr: f64,
        momentum: f64,
        nesterov: bool,
        /// Decay the rate as `lr * cos(7πt / 16T)`.
        cosine: bool,
        weight_decay: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::adam()
    }
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        OptimizerConfig::Adam {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 4e-5,
        }
    }

    pub fn sgd_cosine() -> Self {
        OptimizerConfig::Sgd {
            lr: 0.03,
            momentum: 0.9,
            nesterov: true,
            cosine: true,
            weight_decay: 5e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lr, wd) = match self {
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
                    if !(0.0..1.0).contains(b) {
                        return Err(Error::Config(format!("{name} {b} not in [0, 1)")));
                    }
                }
                if !(*eps > 0.0) {
                    return Err(Error::Config(format!("eps {eps} must be > 0")));
                }
                (*lr, *weight_decay)
            }
            OptimizerConfig::Sgd {
                lr,
                momentum,
                weight_decay,
                ..
            } => {
                if !(0.0..1.0).contains(momentum) {
                    return Err(Error::Config(format!("momentum {momentum} not in [0, 1)")));
                }
                (*lr, *weight_decay)
            }
        };
        if !(lr > 0.0) || !(wd >= 0.0) {
            return Err(Error::Config(format!("bad lr {lr} or weight decay {wd}")));
        }
        Ok(())
    }

    /// Learning rate at step `t` of `total`.
    pub fn learning_rate(&self, t: usize, total: usize) -> f64 {
        match self {
            OptimizerConfig::Adam { lr, .. } => *lr,
            OptimizerConfig::Sgd { lr, cosine, .. } => {
                if *cosine && total > 0 {
                    let frac = t.min(total) as f64 / total as f64;
                    lr * (7.0 * std::f64::consts::PI * frac / 16.0).cos()
                } else {
                    *lr
                }
            }
        }
    }
}

/// Optimizer state for one parameter list.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: usize,
}

impl Optimizer {
    pub fn new(config: &OptimizerConfig, shapes: &[(usize, usize)]) -> Result<Self> {
        config.validate()?;
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        let second = match config {
            OptimizerConfig::Adam { .. } => zeros(),
            OptimizerConfig::Sgd { .. } => Vec::new(),
        };
        Ok(Optimizer {
            config: config.clone(),
            first: zeros(),
            second,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Applies one update. `total` is the planned number of steps, used by the
    /// cosine schedule.
    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[&Matrix], total: usize) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer built for {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        let lr = self.config.learning_rate(self.steps, total);
        self.steps += 1;
        match self.config {
            OptimizerConfig::Adam {
                beta1,
                beta2,
                eps,
                weight_decay,
                ..
            } => {
                let c1 = 1.0 - beta1.powi(self.steps as i32);
                let c2 = 1.0 - beta2.powi(self.steps as i32);
                for (i, p) in params.into_iter().enumerate() {
                    let m = self.first[i].as_mut_slice();
                    let v = self.second[i].as_mut_slice();
                    for (j, (w, g)) in p.as_mut_slice().iter_mut().zip(grads[i].as_slice()).enumerate() {
                        let g = g + weight_decay * *w;
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                        *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    }
                }
            }
            OptimizerConfig::Sgd {
                momentum,
                nesterov,
                weight_decay,
                ..
            } => {
                for (i, p) in params.into_iter().enumerate() {
                    let buf = self.first[i].as_mut_slice();
                    for (j, (w, g)) in p.as_mut_slice().iter_mut().zip(grads[i].as_slice()).enumerate() {
                        let g = g + weight_decay * *w;
                        buf[j] = momentum * buf[j] + g;
                        let d = if nesterov { g + momentum * buf[j] } else { buf[j] };
                        *w -= lr * d;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = OptimizerConfig::Adam {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-12,
            weight_decay: 0.0,
        };
        let mut opt = Optimizer::new(&cfg, &[(1, 2)]).unwrap();
        let mut w = Matrix::row_vector(&[1.0, -1.0]);
        let g = Matrix::row_vector(&[3.0, -0.5]);
        opt.step(vec![&mut w], &[&g], 10).unwrap();
        assert!((w.get(0, 0) - 0.9).abs() < 1e-9);
        assert!((w.get(0, 1) + 0.9).abs() < 1e-9);
    }

    #[test]
    fn sgd_minimizes_a_quadratic() {
        let mut opt = Optimizer::new(&OptimizerConfig::sgd_cosine(), &[(1, 1)]).unwrap();
        let mut w = Matrix::row_vector(&[5.0]);
        for _ in 0..500 {
            let g = Matrix::row_vector(&[2.0 * w.get(0, 0)]);
            opt.step(vec![&mut w], &[&g], 500).unwrap();
        }
        assert!(w.get(0, 0).abs() < 1e-3);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = OptimizerConfig::sgd_cosine();
        assert_eq!(cfg.learning_rate(0, 100), 0.03);
        let end = 0.03 * (7.0 * std::f64::consts::PI / 16.0).cos();
        assert!((cfg.learning_rate(100, 100) - end).abs() < 1e-15);
        assert_eq!(OptimizerConfig::adam().learning_rate(50, 100), 0.002);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = OptimizerConfig::Adam {
            lr: -1.0,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut opt = Optimizer::new(&OptimizerConfig::adam(), &[(1, 1)]).unwrap();
        let mut w = Matrix::zeros(1, 1);
        assert!(opt.step(vec![&mut w], &[], 1).is_err());
    }
}
