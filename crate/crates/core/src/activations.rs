//! Activation functions and their derivatives.
//!
//! All kinds act entrywise on a matrix except [`Activation::Softmax`], which
//! normalises each column (one column per sample). `Identity` is included so that
//! regression output layers can be linear.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_LEAKY_BETA: f64 = 0.01;
pub const DEFAULT_PRELU_BETA: f64 = 0.25;
pub const DEFAULT_ELU_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// Logistic `1/(1+e^{−x})`.
    Sigmoid,
    Relu,
    LeakyRelu { beta: f64 },
    /// Same shape as leaky ReLU; `beta` is a fixed hyperparameter, not trained.
    ParametricRelu { beta: f64 },
    /// `x` for `x > 0`, `β(eˣ − 1)` otherwise.
    Elu { beta: f64 },
    /// `x·σ(x)`.
    Swish,
    Softmax,
    Identity,
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            beta: DEFAULT_LEAKY_BETA,
        }
    }

    pub fn elu() -> Self {
        Activation::Elu {
            beta: DEFAULT_ELU_BETA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::ParametricRelu { .. } => "prelu",
            Activation::Elu { .. } => "elu",
            Activation::Swish => "swish",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    pub fn apply_scalar(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { beta } | Activation::ParametricRelu { beta } => {
                if x > 0.0 {
                    x
                } else {
                    beta * x
                }
            }
            Activation::Elu { beta } => {
                if x > 0.0 {
                    x
                } else {
                    beta * x.exp_m1()
                }
            }
            Activation::Swish => x * sigmoid(x),
            Activation::Identity => x,
            Activation::Softmax => return Err(Error::SoftmaxScalar),
        })
    }

    /// First derivative. At the kink of the ReLU family the left-hand value is used.
    pub fn derivative_scalar(&self, x: f64) -> Result<f64> {
        Ok(match *self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { beta } | Activation::ParametricRelu { beta } => {
                if x > 0.0 {
                    1.0
                } else {
                    beta
                }
            }
            Activation::Elu { beta } => {
                if x > 0.0 {
                    1.0
                } else {
                    beta * x.exp()
                }
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Identity => 1.0,
            Activation::Softmax => return Err(Error::SoftmaxScalar),
        })
    }

    pub fn apply_matrix(&self, a: &Matrix) -> Matrix {
        match self {
            Activation::Softmax => {
                let mut out = a.clone();
                for j in 0..a.cols() {
                    let s = softmax(&a.column(j));
                    for (i, v) in s.into_iter().enumerate() {
                        out[(i, j)] = v;
                    }
                }
                out
            }
            kind => a.map(|x| kind.apply_scalar(x).expect("entrywise kind")),
        }
    }

    pub fn derivative_matrix(&self, a: &Matrix) -> Derivative {
        match self {
            Activation::Softmax => Derivative::Jacobians(
                (0..a.cols())
                    .map(|j| softmax_jacobian(&softmax(&a.column(j))))
                    .collect(),
            ),
            kind => Derivative::Diagonal(a.map(|x| kind.derivative_scalar(x).expect("entrywise kind"))),
        }
    }

    /// Chain rule through the activation: column `i` of the result is
    /// `∇φ(preact_i) · upstream_i`.
    pub fn backprop(&self, preact: &Matrix, upstream: &Matrix) -> Result<Matrix> {
        if preact.shape() != upstream.shape() {
            return Err(Error::shape("activation backprop", preact.shape(), upstream.shape()));
        }
        match self.derivative_matrix(preact) {
            Derivative::Diagonal(d) => d.hadamard(upstream),
            Derivative::Jacobians(jacobians) => {
                let mut out = Matrix::zeros(upstream.rows(), upstream.cols());
                for (j, jac) in jacobians.iter().enumerate() {
                    let col = Matrix::column_vector(upstream.column(j))?;
                    let prod = jac.transpose().matmul(&col)?;
                    for i in 0..out.rows() {
                        out[(i, j)] = prod[(i, 0)];
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Derivative of an activation applied to a matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Derivative {
    /// Entrywise derivative `φ′(a_ij)`.
    Diagonal(Matrix),
    /// One Jacobian per column (softmax).
    Jacobians(Vec<Matrix>),
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `J_ij = s_i(δ_ij − s_j)` for softmax output `s`.
fn softmax_jacobian(s: &[f64]) -> Matrix {
    let n = s.len();
    let mut j = Matrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let delta = if a == b { 1.0 } else { 0.0 };
            j[(a, b)] = s[a] * (delta - s[b]);
        }
    }
    j
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let param = match *self {
            Activation::LeakyRelu { beta } if beta != DEFAULT_LEAKY_BETA => Some(beta),
            Activation::ParametricRelu { beta } if beta != DEFAULT_PRELU_BETA => Some(beta),
            Activation::Elu { beta } if beta != DEFAULT_ELU_BETA => Some(beta),
            _ => None,
        };
        match param {
            Some(beta) => write!(f, "{}({beta:?})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Parses `name` or `name(beta)`, e.g. `"relu"`, `"elu(0.5)"`.
impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "activation",
            name: s.to_string(),
        };
        let s = s.trim();
        let (name, param) = match s.split_once('(') {
            Some((name, rest)) => {
                let value = rest.strip_suffix(')').ok_or_else(unknown)?;
                let beta: f64 = value.trim().parse().map_err(|_| unknown())?;
                (name.trim(), Some(beta))
            }
            None => (s, None),
        };
        let kind = match name {
            "sigmoid" => Activation::Sigmoid,
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::LeakyRelu {
                beta: param.unwrap_or(DEFAULT_LEAKY_BETA),
            },
            "prelu" => Activation::ParametricRelu {
                beta: param.unwrap_or(DEFAULT_PRELU_BETA),
            },
            "elu" => Activation::Elu {
                beta: param.unwrap_or(DEFAULT_ELU_BETA),
            },
            "swish" => Activation::Swish,
            "softmax" => Activation::Softmax,
            "identity" => Activation::Identity,
            _ => return Err(unknown()),
        };
        let takes_param = matches!(
            kind,
            Activation::LeakyRelu { .. } | Activation::ParametricRelu { .. } | Activation::Elu { .. }
        );
        if param.is_some() && !takes_param {
            return Err(unknown());
        }
        if matches!(kind, Activation::LeakyRelu { beta } if beta <= 0.0) {
            return Err(Error::Config("leaky_relu beta must be positive".into()));
        }
        Ok(kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOOTH: [Activation; 4] = [
        Activation::Sigmoid,
        Activation::Swish,
        Activation::Identity,
        Activation::Elu { beta: 1.0 },
    ];

    fn central(kind: Activation, x: f64, h: f64) -> f64 {
        (kind.apply_scalar(x + h).unwrap() - kind.apply_scalar(x - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn scalar_values() {
        assert_eq!(Activation::Sigmoid.apply_scalar(0.0).unwrap(), 0.5);
        assert_eq!(Activation::Relu.apply_scalar(-3.0).unwrap(), 0.0);
        assert_eq!(Activation::Relu.apply_scalar(2.0).unwrap(), 2.0);
        assert!((Activation::leaky_relu().apply_scalar(-2.0).unwrap() + 0.02).abs() < 1e-15);
        assert_eq!(Activation::Swish.apply_scalar(0.0).unwrap(), 0.0);
        assert!(matches!(Activation::Softmax.apply_scalar(1.0), Err(Error::SoftmaxScalar)));
        assert!(matches!(Activation::Softmax.derivative_scalar(1.0), Err(Error::SoftmaxScalar)));
    }

    #[test]
    fn sigmoid_is_increasing_logistic() {
        let s = Activation::Sigmoid;
        assert!(s.apply_scalar(3.0).unwrap() > s.apply_scalar(-3.0).unwrap());
        assert!((s.apply_scalar(2.0).unwrap() - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!(s.apply_scalar(-800.0).unwrap() >= 0.0);
        assert!(s.apply_scalar(800.0).unwrap() <= 1.0);
    }

    #[test]
    fn derivative_values() {
        assert_eq!(Activation::Sigmoid.derivative_scalar(0.0).unwrap(), 0.25);
        assert_eq!(Activation::Relu.derivative_scalar(-1.0).unwrap(), 0.0);
        assert_eq!(Activation::Relu.derivative_scalar(0.0).unwrap(), 0.0);
        assert_eq!(Activation::leaky_relu().derivative_scalar(0.0).unwrap(), 0.01);
        let elu = Activation::elu();
        assert_eq!(elu.derivative_scalar(0.0).unwrap(), 1.0);
        assert_eq!(elu.derivative_scalar(1e-12).unwrap(), 1.0);
        assert_eq!(Activation::Identity.derivative_scalar(7.0).unwrap(), 1.0);
    }

    #[test]
    fn smooth_derivatives_match_finite_differences() {
        for kind in SMOOTH {
            for i in 0..1000 {
                let x = -5.0 + 10.0 * (i as f64 + 0.5) / 1000.0;
                if matches!(kind, Activation::Elu { .. }) && x.abs() < 1e-4 {
                    continue;
                }
                let err = (kind.derivative_scalar(x).unwrap() - central(kind, x, 1e-6)).abs();
                assert!(err <= 1e-6, "{kind} at {x}: {err}");
            }
        }
    }

    #[test]
    fn piecewise_derivatives_away_from_kink() {
        for kind in [
            Activation::Relu,
            Activation::leaky_relu(),
            Activation::ParametricRelu { beta: 0.3 },
        ] {
            for x in [-2.5, -0.1, 0.1, 3.0] {
                let err = (kind.derivative_scalar(x).unwrap() - central(kind, x, 1e-6)).abs();
                assert!(err <= 1e-6);
            }
        }
    }

    #[test]
    fn matrix_application() {
        let zeros = Matrix::zeros(2, 3);
        assert_eq!(Activation::Relu.apply_matrix(&zeros), zeros);
        let uniform = Activation::Softmax.apply_matrix(&Matrix::zeros(2, 1));
        assert_eq!(uniform.as_slice(), &[0.5, 0.5]);
        assert_eq!(
            Activation::Identity.derivative_matrix(&zeros),
            Derivative::Diagonal(Matrix::filled(2, 3, 1.0))
        );
    }

    #[test]
    fn softmax_handles_large_inputs() {
        let a = Matrix::from_rows(&[[700.0, -700.0], [699.0, -699.5], [-700.0, 0.0]]).unwrap();
        let s = Activation::Softmax.apply_matrix(&a);
        assert!(s.is_finite());
        for j in 0..2 {
            assert!((s.column(j).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_jacobian_rows_sum_to_zero() {
        let a = Matrix::from_rows(&[[0.3, -1.0], [2.0, 0.5], [-0.7, 0.0]]).unwrap();
        let Derivative::Jacobians(jacs) = Activation::Softmax.derivative_matrix(&a) else {
            panic!("softmax derivative is a Jacobian");
        };
        assert_eq!(jacs.len(), 2);
        for jac in jacs {
            for i in 0..3 {
                assert!(jac.row(i).iter().sum::<f64>().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn backprop_through_softmax_matches_finite_differences() {
        let x = [0.4, -1.3, 0.9];
        let g = [0.5, -2.0, 1.5];
        let preact = Matrix::column_vector(x.to_vec()).unwrap();
        let upstream = Matrix::column_vector(g.to_vec()).unwrap();
        let back = Activation::Softmax.backprop(&preact, &upstream).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut plus = x;
            let mut minus = x;
            plus[k] += h;
            minus[k] -= h;
            let dot = |v: &[f64; 3]| softmax(v).iter().zip(g).map(|(s, g)| s * g).sum::<f64>();
            let fd = (dot(&plus) - dot(&minus)) / (2.0 * h);
            assert!((back[(k, 0)] - fd).abs() <= 1e-6);
        }
    }

    #[test]
    fn names_round_trip() {
        for name in ["sigmoid", "relu", "leaky_relu", "prelu", "elu", "swish", "softmax", "identity"] {
            let kind: Activation = name.parse().unwrap();
            assert_eq!(kind.to_string(), name);
        }
        let elu: Activation = "elu(0.5)".parse().unwrap();
        assert_eq!(elu, Activation::Elu { beta: 0.5 });
        assert_eq!(elu.to_string().parse::<Activation>().unwrap(), elu);
        assert!("tanh".parse::<Activation>().is_err());
        assert!("relu(2)".parse::<Activation>().is_err());
    }
}
