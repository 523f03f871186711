//! Regression losses `L(x, y)` of a prediction `x` against a target `y`, both of
//! length `m`, and their gradients with respect to `x`.
//!
//! Two formulas are kept exactly as commonly printed even though they break ranks
//! with the others:
//!
//! - `Huber` sums over components without the `1/m` factor the other losses use.
//! - `Poisson` is `(1/m) Σ (xᵢ − xᵢ·log yᵢ)`, with the logarithm on the target. The
//!   more usual form `x − y·log x` puts it on the prediction; this one is not
//!   minimised at `x = y`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Mse,
    Mae,
    Huber { delta: f64 },
    LogCosh,
    Msle,
    Poisson,
}

impl Loss {
    pub fn huber() -> Self {
        Loss::Huber {
            delta: DEFAULT_HUBER_DELTA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::Mae => "mae",
            Loss::Huber { .. } => "huber",
            Loss::LogCosh => "log_cosh",
            Loss::Msle => "msle",
            Loss::Poisson => "poisson",
        }
    }

    pub fn loss(&self, prediction: &[f64], target: &[f64]) -> Result<f64> {
        self.check(prediction, target)?;
        let m = prediction.len() as f64;
        let pairs = prediction.iter().zip(target);
        Ok(match *self {
            Loss::Mse => pairs.map(|(x, y)| (x - y).powi(2)).sum::<f64>() / m,
            Loss::Mae => pairs.map(|(x, y)| (x - y).abs()).sum::<f64>() / m,
            Loss::Huber { delta } => pairs
                .map(|(x, y)| {
                    let r = (x - y).abs();
                    if r <= delta {
                        r * r / 2.0
                    } else {
                        delta * r - delta * delta / 2.0
                    }
                })
                .sum(),
            Loss::LogCosh => pairs.map(|(x, y)| log_cosh(x - y)).sum::<f64>() / m,
            Loss::Msle => pairs.map(|(x, y)| (x.ln_1p() - y.ln_1p()).powi(2)).sum::<f64>() / m,
            Loss::Poisson => pairs.map(|(x, y)| x - x * y.ln()).sum::<f64>() / m,
        })
    }

    /// `∂L/∂x`. `sign(0)` is taken as 0 for MAE and Huber.
    pub fn gradient(&self, prediction: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        self.check(prediction, target)?;
        let m = prediction.len() as f64;
        let pairs = prediction.iter().zip(target);
        Ok(match *self {
            Loss::Mse => pairs.map(|(x, y)| 2.0 * (x - y) / m).collect(),
            Loss::Mae => pairs.map(|(x, y)| sign(x - y) / m).collect(),
            Loss::Huber { delta } => pairs
                .map(|(x, y)| {
                    let r = x - y;
                    if r.abs() <= delta {
                        r
                    } else {
                        delta * sign(r)
                    }
                })
                .collect(),
            Loss::LogCosh => pairs.map(|(x, y)| (x - y).tanh() / m).collect(),
            Loss::Msle => pairs
                .map(|(x, y)| 2.0 * (x.ln_1p() - y.ln_1p()) / ((x + 1.0) * m))
                .collect(),
            Loss::Poisson => pairs.map(|(_, y)| (1.0 - y.ln()) / m).collect(),
        })
    }

    fn check(&self, prediction: &[f64], target: &[f64]) -> Result<()> {
        if prediction.len() != target.len() {
            return Err(Error::shape(
                "loss",
                (prediction.len(), 1),
                (target.len(), 1),
            ));
        }
        if prediction.is_empty() {
            return Err(Error::Empty("loss arguments"));
        }
        let name = self.name();
        let domain = |index: usize, value: f64| Error::Domain {
            loss: name,
            index,
            value,
        };
        match self {
            Loss::Msle => {
                for (i, (&x, &y)) in prediction.iter().zip(target).enumerate() {
                    if x <= -1.0 {
                        return Err(domain(i, x));
                    }
                    if y <= -1.0 {
                        return Err(domain(i, y));
                    }
                }
            }
            Loss::Poisson => {
                if let Some((i, &y)) = target.iter().enumerate().find(|(_, &y)| y <= 0.0) {
                    return Err(domain(i, y));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `log(cosh(d))` without overflow for large `|d|`.
fn log_cosh(d: f64) -> f64 {
    let a = d.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Loss::Huber { delta } if delta != DEFAULT_HUBER_DELTA => write!(f, "huber({delta:?})"),
            _ => f.write_str(self.name()),
        }
    }
}

/// Parses a loss name; Huber accepts `huber(delta)`.
impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "loss",
            name: s.to_string(),
        };
        Ok(match s.trim() {
            "mse" => Loss::Mse,
            "mae" => Loss::Mae,
            "huber" => Loss::huber(),
            "log_cosh" => Loss::LogCosh,
            "msle" => Loss::Msle,
            "poisson" => Loss::Poisson,
            other => {
                let delta = other
                    .strip_prefix("huber(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(unknown)?;
                if !(delta > 0.0) {
                    return Err(Error::Config("huber delta must be positive".into()));
                }
                Loss::Huber { delta }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_at_equality() {
        let v = [0.3, -0.2, 1.7];
        for kind in [Loss::Mse, Loss::Mae, Loss::huber(), Loss::LogCosh, Loss::Msle] {
            assert!(kind.loss(&v, &v).unwrap().abs() <= 1e-12, "{kind}");
        }
        assert_eq!(Loss::Mse.gradient(&v, &v).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn hand_values() {
        assert_eq!(Loss::Mae.loss(&[1.0, 2.0], &[0.0, 2.0]).unwrap(), 0.5);
        assert_eq!(Loss::huber().loss(&[0.5], &[0.0]).unwrap(), 0.125);
        assert_eq!(Loss::huber().loss(&[2.0], &[0.0]).unwrap(), 1.5);
        // (1/2)(2 − 2·ln 4 + 1 − 1·ln 1)
        let poisson = Loss::Poisson.loss(&[2.0, 1.0], &[4.0, 1.0]).unwrap();
        assert!((poisson - (3.0 - 2.0 * 4.0f64.ln()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn huber_has_no_mean_factor() {
        let one = Loss::huber().loss(&[0.5], &[0.0]).unwrap();
        let two = Loss::huber().loss(&[0.5, 0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn log_cosh_saturates() {
        let g = Loss::LogCosh.gradient(&[50.0, -50.0], &[0.0, 0.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
        assert!((g[1] + 0.5).abs() < 1e-15);
        assert!(Loss::LogCosh.loss(&[1000.0], &[0.0]).unwrap().is_finite());
    }

    #[test]
    fn domain_errors_name_the_index() {
        let err = Loss::Msle.loss(&[0.0, -1.5], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Domain { index: 1, .. }));
        let err = Loss::Poisson.gradient(&[1.0, 1.0, 1.0], &[1.0, 2.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Domain { index: 2, .. }));
        assert!(Loss::Mse.loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sign_of_zero_residual_is_zero() {
        assert_eq!(Loss::Mae.gradient(&[1.0], &[1.0]).unwrap(), vec![0.0]);
        assert_eq!(Loss::huber().gradient(&[1.0], &[1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn names_round_trip() {
        for name in ["mse", "mae", "huber", "log_cosh", "msle", "poisson"] {
            assert_eq!(name.parse::<Loss>().unwrap().to_string(), name);
        }
        let h: Loss = "huber(0.5)".parse().unwrap();
        assert_eq!(h, Loss::Huber { delta: 0.5 });
        assert_eq!(h.to_string().parse::<Loss>().unwrap(), h);
        assert!("cross_entropy".parse::<Loss>().is_err());
        assert!("huber(-1)".parse::<Loss>().is_err());
    }
}
