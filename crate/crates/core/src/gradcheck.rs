//! Central finite-difference verification of backpropagation.
//!
//! The numerical gradient only uses forward passes and the loss, so it shares no
//! code with [`NetworkState::backward`] beyond the forward computation itself.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::activations::Activation;
use crate::error::Result;
use crate::losses::Loss;
use crate::matrix::Matrix;
use crate::network::{batch_loss, LayerGradients, LayerSpec, NetworkConfig, NetworkState};
use crate::optim::{Initializer, Optimizer, SeededRng};

pub const STEP: f64 = 1e-5;
pub const RELATIVE_TOLERANCE: f64 = 1e-4;
pub const ABSOLUTE_FLOOR: f64 = 1e-7;

/// `∂ψ/∂θ ≈ (ψ(θ + h) − ψ(θ − h)) / 2h` for every weight and bias.
pub fn numerical_gradients(
    state: &NetworkState,
    features: &Matrix,
    targets: &Matrix,
    loss: Loss,
    h: f64,
) -> Result<Vec<LayerGradients>> {
    let mut probe = state.clone();
    let mut out = Vec::with_capacity(state.layers().len());
    for l in 0..state.layers().len() {
        let (rows, cols) = state.layers()[l].weights.shape();
        let mut gw = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                gw[(i, j)] = central(&mut probe, features, targets, loss, h, |s| {
                    &mut s.layers_mut()[l].weights[(i, j)]
                })?;
            }
        }
        let mut gb = Matrix::zeros(rows, 1);
        for i in 0..rows {
            gb[(i, 0)] = central(&mut probe, features, targets, loss, h, |s| {
                &mut s.layers_mut()[l].biases[(i, 0)]
            })?;
        }
        out.push(LayerGradients {
            weights: gw,
            biases: gb,
        });
    }
    Ok(out)
}

fn central(
    probe: &mut NetworkState,
    features: &Matrix,
    targets: &Matrix,
    loss: Loss,
    h: f64,
    param: impl Fn(&mut NetworkState) -> &mut f64,
) -> Result<f64> {
    let original = *param(probe);
    *param(probe) = original + h;
    let plus = batch_loss(probe, features, targets, loss)?;
    *param(probe) = original - h;
    let minus = batch_loss(probe, features, targets, loss)?;
    *param(probe) = original;
    Ok((plus - minus) / (2.0 * h))
}

/// `|a − n| / max(|a|, |n|, ABSOLUTE_FLOOR / RELATIVE_TOLERANCE)`.
///
/// A value of at most [`RELATIVE_TOLERANCE`] means the pair agrees either to that
/// relative precision or to [`ABSOLUTE_FLOOR`] in absolute terms.
pub fn scaled_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic
        .abs()
        .max(numeric.abs())
        .max(ABSOLUTE_FLOOR / RELATIVE_TOLERANCE);
    (analytic - numeric).abs() / scale
}

pub fn max_scaled_error(analytic: &[LayerGradients], numeric: &[LayerGradients]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| {
            a.weights
                .as_slice()
                .iter()
                .zip(n.weights.as_slice())
                .chain(a.biases.as_slice().iter().zip(n.biases.as_slice()))
        })
        .map(|(&a, &n)| scaled_error(a, n))
        .fold(0.0, f64::max)
}

/// One randomly drawn network together with a small batch.
#[derive(Debug, Clone)]
pub struct GradcheckCase {
    pub state: NetworkState,
    pub features: Matrix,
    pub targets: Matrix,
    pub loss: Loss,
}

impl GradcheckCase {
    /// Draws `n ∈ {2, 3}`, up to three layers of width at most five with sigmoid,
    /// swish or identity activations, an MSE or log-cosh loss, and `p ≤ 8` samples.
    /// Biases are randomised too so that they take part in the check.
    pub fn random(rng: &mut SeededRng) -> Result<Self> {
        const ACTIVATIONS: [Activation; 3] = [Activation::Sigmoid, Activation::Swish, Activation::Identity];
        const LOSSES: [Loss; 2] = [Loss::Mse, Loss::LogCosh];
        let r = rng.inner();
        let n = r.random_range(2..=3);
        let depth = r.random_range(1..=3);
        let m = r.random_range(1..=3);
        let p = r.random_range(1..=8);
        let mut layers: Vec<LayerSpec> = (0..depth)
            .map(|_| LayerSpec::new(r.random_range(1..=5), *ACTIVATIONS.choose(r).unwrap()))
            .collect();
        layers.last_mut().unwrap().units = m;
        let loss = *LOSSES.choose(r).unwrap();
        let seed: u64 = r.random();
        let config = NetworkConfig {
            layers,
            loss,
            optimizer: Optimizer::Gd { gamma: 0.1 },
            initializer: Initializer::RandomNormal { sigma: 0.8 },
            max_epochs: 1,
            tolerance: 1.0,
            seed,
        };
        let mut state = NetworkState::init(&config, n)?;
        for layer in state.layers_mut() {
            for b in layer.biases.as_mut_slice() {
                *b = rng.uniform(-0.5, 0.5);
            }
        }
        let features = Matrix::new(n, p, (0..n * p).map(|_| rng.uniform(-1.5, 1.5)).collect())?;
        let targets = Matrix::new(m, p, (0..m * p).map(|_| rng.uniform(-1.0, 1.0)).collect())?;
        Ok(Self {
            state,
            features,
            targets,
            loss,
        })
    }

    /// Largest [`scaled_error`] between backprop and finite differences.
    pub fn max_error(&self) -> Result<f64> {
        let cache = self.state.forward(&self.features)?;
        let analytic = self.state.backward(&cache, &self.targets, self.loss)?;
        let numeric = numerical_gradients(&self.state, &self.features, &self.targets, self.loss, STEP)?;
        Ok(max_scaled_error(&analytic, &numeric))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckSummary {
    pub cases: usize,
    pub max_error: f64,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.max_error <= RELATIVE_TOLERANCE
    }
}

/// Checks `cases` random networks drawn from `seed`.
pub fn run_suite(seed: u64, cases: usize) -> Result<GradcheckSummary> {
    let mut rng = SeededRng::new(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..cases {
        max_error = max_error.max(GradcheckCase::random(&mut rng)?.max_error()?);
    }
    Ok(GradcheckSummary { cases, max_error })
}
