//! Parameter update rules and weight initialisers.
//!
//! Every optimiser works on one parameter block (a weight matrix or a bias column)
//! at a time and keeps its accumulators in an [`OptimizerState`] shaped like that
//! block. Plain gradient descent is `p ← p − γ·g`; the variants follow their usual
//! published formulations:
//!
//! | kind     | update |
//! |----------|--------|
//! | momentum | `v ← μv + γg`, `p ← p − v` |
//! | nesterov | `v ← μv + γg`, `p ← p − (μv + γg)` |
//! | adagrad  | `a ← a + g²`, `p ← p − γg/(√a + ε)` |
//! | rmsprop  | `a ← ρa + (1−ρ)g²`, `p ← p − γg/(√a + ε)` |
//! | adam     | `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, `p ← p − γm̂/(√v̂ + ε)` |
//! | nadam    | as adam with `m̂ ← β₁m̂ + (1−β₁)g/(1−β₁ᵗ)` |
//!
//! where `m̂ = m/(1−β₁ᵗ)` and `v̂ = v/(1−β₂ᵗ)` are the bias-corrected moments.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_MU: f64 = 0.9;
pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Gd { gamma: f64 },
    Momentum { gamma: f64, mu: f64 },
    Nesterov { gamma: f64, mu: f64 },
    AdaGrad { gamma: f64, eps: f64 },
    RmsProp { gamma: f64, rho: f64, eps: f64 },
    Adam { gamma: f64, beta1: f64, beta2: f64, eps: f64 },
    Nadam { gamma: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const NAMES: [&'static str; 7] =
        ["gd", "momentum", "nesterov", "adagrad", "rmsprop", "adam", "nadam"];

    /// The named optimiser with conventional hyperparameters. `gamma` overrides the
    /// default learning rate (0.01 for gd, momentum, nesterov and adagrad; 0.001
    /// otherwise).
    pub fn from_name(name: &str, gamma: Option<f64>) -> Result<Self> {
        let rate = |default: f64| gamma.unwrap_or(default);
        let kind = match name {
            "gd" => Optimizer::Gd { gamma: rate(0.01) },
            "momentum" => Optimizer::Momentum {
                gamma: rate(0.01),
                mu: DEFAULT_MU,
            },
            "nesterov" => Optimizer::Nesterov {
                gamma: rate(0.01),
                mu: DEFAULT_MU,
            },
            "adagrad" => Optimizer::AdaGrad {
                gamma: rate(0.01),
                eps: DEFAULT_EPS,
            },
            "rmsprop" => Optimizer::RmsProp {
                gamma: rate(0.001),
                rho: DEFAULT_RHO,
                eps: DEFAULT_EPS,
            },
            "adam" => Optimizer::adam(rate(0.001)),
            "nadam" => Optimizer::Nadam {
                gamma: rate(0.001),
                beta1: DEFAULT_BETA1,
                beta2: DEFAULT_BETA2,
                eps: DEFAULT_EPS,
            },
            _ => {
                return Err(Error::UnknownName {
                    kind: "optimizer",
                    name: name.to_string(),
                })
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn adam(gamma: f64) -> Self {
        Optimizer::Adam {
            gamma,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Gd { .. } => "gd",
            Optimizer::Momentum { .. } => "momentum",
            Optimizer::Nesterov { .. } => "nesterov",
            Optimizer::AdaGrad { .. } => "adagrad",
            Optimizer::RmsProp { .. } => "rmsprop",
            Optimizer::Adam { .. } => "adam",
            Optimizer::Nadam { .. } => "nadam",
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Gd { gamma }
            | Optimizer::Momentum { gamma, .. }
            | Optimizer::Nesterov { gamma, .. }
            | Optimizer::AdaGrad { gamma, .. }
            | Optimizer::RmsProp { gamma, .. }
            | Optimizer::Adam { gamma, .. }
            | Optimizer::Nadam { gamma, .. } => gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        positive("learning rate", self.learning_rate())?;
        match *self {
            Optimizer::Gd { .. } => Ok(()),
            Optimizer::Momentum { mu, .. } | Optimizer::Nesterov { mu, .. } => unit("mu", mu),
            Optimizer::AdaGrad { eps, .. } => positive("eps", eps),
            Optimizer::RmsProp { rho, eps, .. } => {
                unit("rho", rho)?;
                positive("eps", eps)
            }
            Optimizer::Adam { beta1, beta2, eps, .. } | Optimizer::Nadam { beta1, beta2, eps, .. } => {
                unit("beta1", beta1)?;
                unit("beta2", beta2)?;
                positive("eps", eps)
            }
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&self, state: &mut OptimizerState, params: &mut Matrix, grad: &Matrix) -> Result<()> {
        if params.shape() != grad.shape() {
            return Err(Error::shape("optimizer step", params.shape(), grad.shape()));
        }
        if state.first.shape() != params.shape() {
            return Err(Error::shape("optimizer state", state.first.shape(), params.shape()));
        }
        if !grad.is_finite() {
            return Err(Error::Divergence {
                iteration: state.step as usize + 1,
                context: "non-finite gradient".into(),
            });
        }
        state.step += 1;
        let t = state.step as i32;
        let p = params.as_mut_slice();
        let g = grad.as_slice();
        let first = state.first.as_mut_slice();
        let second = state.second.as_mut_slice();

        match *self {
            Optimizer::Gd { gamma } => {
                for (p, g) in p.iter_mut().zip(g) {
                    *p -= gamma * g;
                }
            }
            Optimizer::Momentum { gamma, mu } => {
                for ((p, g), v) in p.iter_mut().zip(g).zip(first) {
                    *v = mu * *v + gamma * g;
                    *p -= *v;
                }
            }
            Optimizer::Nesterov { gamma, mu } => {
                for ((p, g), v) in p.iter_mut().zip(g).zip(first) {
                    *v = mu * *v + gamma * g;
                    *p -= mu * *v + gamma * g;
                }
            }
            Optimizer::AdaGrad { gamma, eps } => {
                for ((p, g), a) in p.iter_mut().zip(g).zip(second) {
                    *a += g * g;
                    *p -= gamma * g / (a.sqrt() + eps);
                }
            }
            Optimizer::RmsProp { gamma, rho, eps } => {
                for ((p, g), a) in p.iter_mut().zip(g).zip(second) {
                    *a = rho * *a + (1.0 - rho) * g * g;
                    *p -= gamma * g / (a.sqrt() + eps);
                }
            }
            Optimizer::Adam {
                gamma,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in p.iter_mut().zip(g).zip(first).zip(second) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= gamma * m_hat / (v_hat.sqrt() + eps);
                }
            }
            Optimizer::Nadam {
                gamma,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in p.iter_mut().zip(g).zip(first).zip(second) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = beta1 * (*m / c1) + (1.0 - beta1) * g / c1;
                    let v_hat = *v / c2;
                    *p -= gamma * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accumulators for one parameter block.
///
/// `first` holds the velocity (momentum, nesterov) or first moment (adam, nadam);
/// `second` holds the squared-gradient accumulator or second moment. Unused
/// accumulators stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: Matrix,
    pub second: Matrix,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            first: Matrix::zeros(rows, cols),
            second: Matrix::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn for_block(block: &Matrix) -> Self {
        Self::new(block.rows(), block.cols())
    }
}

/// Deterministic random stream; the same seed always yields the same samples on
/// every platform.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        self.inner.random_range(low..high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Initializer {
    /// Uniform on `(−β, β)`.
    RandomUniform { beta: f64 },
    /// Normal with mean 0 and standard deviation `σ`.
    RandomNormal { sigma: f64 },
    /// Uniform on `±√6/(√fan_in + √fan_out)`.
    XavierUniform,
    /// Uniform on `±√(6/fan_in)`.
    KaimingUniform,
    /// Normal with variance `2/fan_in`.
    KaimingNormal,
    /// Normal with variance `1/fan_in`.
    LeCunNormal,
}

impl Initializer {
    pub fn name(&self) -> &'static str {
        match self {
            Initializer::RandomUniform { .. } => "random_uniform",
            Initializer::RandomNormal { .. } => "random_normal",
            Initializer::XavierUniform => "xavier",
            Initializer::KaimingUniform => "kaiming_uniform",
            Initializer::KaimingNormal => "kaiming_normal",
            Initializer::LeCunNormal => "lecun",
        }
    }

    /// Half-width of the sampling interval for the uniform schemes.
    pub fn uniform_bound(&self, fan_in: usize, fan_out: usize) -> Option<f64> {
        match *self {
            Initializer::RandomUniform { beta } => Some(beta),
            Initializer::XavierUniform => {
                Some(6f64.sqrt() / ((fan_in as f64).sqrt() + (fan_out as f64).sqrt()))
            }
            Initializer::KaimingUniform => Some((6.0 / fan_in as f64).sqrt()),
            _ => None,
        }
    }

    /// Standard deviation for the normal schemes.
    pub fn normal_std(&self, fan_in: usize) -> Option<f64> {
        match *self {
            Initializer::RandomNormal { sigma } => Some(sigma),
            Initializer::KaimingNormal => Some((2.0 / fan_in as f64).sqrt()),
            Initializer::LeCunNormal => Some((1.0 / fan_in as f64).sqrt()),
            _ => None,
        }
    }

    /// A `fan_out × fan_in` weight matrix.
    pub fn init_weights(&self, fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Result<Matrix> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Dimension("layer fan-in and fan-out must be positive".into()));
        }
        let count = fan_in * fan_out;
        let data: Vec<f64> = if let Some(bound) = self.uniform_bound(fan_in, fan_out) {
            if !(bound > 0.0 && bound.is_finite()) {
                return Err(Error::Config(format!("uniform bound must be positive, got {bound}")));
            }
            let dist = Uniform::new(-bound, bound).expect("bound is positive and finite");
            dist.sample_iter(rng.inner()).take(count).collect()
        } else {
            let std = self.normal_std(fan_in).expect("every non-uniform scheme is normal");
            let dist = Normal::new(0.0, std)
                .map_err(|_| Error::Config(format!("normal std must be positive, got {std}")))?;
            dist.sample_iter(rng.inner()).take(count).collect()
        };
        Matrix::new(fan_out, fan_in, data)
    }
}

impl fmt::Display for Initializer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Initializer::RandomUniform { beta } => write!(f, "random_uniform({beta:?})"),
            Initializer::RandomNormal { sigma } => write!(f, "random_normal({sigma:?})"),
            _ => f.write_str(self.name()),
        }
    }
}

/// Parses an initialiser name. The random schemes take their scale in parentheses,
/// e.g. `random_uniform(0.1)`, and default to 0.05 without one.
impl FromStr for Initializer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "initializer",
            name: s.to_string(),
        };
        let s = s.trim();
        let (name, param) = match s.split_once('(') {
            Some((name, rest)) => {
                let v = rest
                    .strip_suffix(')')
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(unknown)?;
                (name, Some(v))
            }
            None => (s, None),
        };
        let kind = match (name, param) {
            ("random_uniform", p) => Initializer::RandomUniform {
                beta: p.unwrap_or(0.05),
            },
            ("random_normal", p) => Initializer::RandomNormal {
                sigma: p.unwrap_or(0.05),
            },
            ("xavier", None) => Initializer::XavierUniform,
            ("kaiming_uniform", None) => Initializer::KaimingUniform,
            ("kaiming_normal", None) => Initializer::KaimingNormal,
            ("lecun", None) => Initializer::LeCunNormal,
            _ => return Err(unknown()),
        };
        if let Some(p) = param {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("{name} scale must be positive, got {p}")));
            }
        }
        Ok(kind)
    }
}

/// Biases start at zero.
pub fn init_biases(length: usize) -> Result<Matrix> {
    if length == 0 {
        return Err(Error::Dimension("bias length must be positive".into()));
    }
    Ok(Matrix::zeros(length, 1))
}
