//! Dense feedforward networks trained by batch-mode backpropagation.
//!
//! Samples are columns. For layers `l = 1..k` with `q_l` units,
//!
//! ```text
//! S⁽ˡ⁾ = W⁽ˡ⁾·Z⁽ˡ⁻¹⁾ + B⁽ˡ⁾        W⁽ˡ⁾ is q_l × q_{l−1}, B⁽ˡ⁾ repeats b⁽ˡ⁾ per column
//! Z⁽ˡ⁾ = φ⁽ˡ⁾(S⁽ˡ⁾)
//! ```
//!
//! with `Z⁽⁰⁾` holding the `p` training inputs followed by the `s` validation inputs,
//! so one forward pass serves both the training step and the validation loss.
//!
//! The backward pass only ever touches the first `p` columns:
//!
//! ```text
//! Δ⁽ᵏ⁾ = ∇φ⁽ᵏ⁾(S⁽ᵏ⁾) · ∇L(Z⁽ᵏ⁾, Y)                per training column
//! Δ⁽ʳ⁾ = ∇φ⁽ʳ⁾(S⁽ʳ⁾) · (W⁽ʳ⁺¹⁾ᵀ Δ⁽ʳ⁺¹⁾)
//! ∂ψ/∂W⁽ʳ⁾ = (1/p) Δ⁽ʳ⁾ Z⁽ʳ⁻¹⁾ᵀ     ∂ψ/∂b⁽ʳ⁾ = (1/p) Σ_columns Δ⁽ʳ⁾
//! ```
//!
//! where `ψ = (1/p) Σᵢ L(Z⁽ᵏ⁾ᵢ, Yᵢ)` is the batch training loss. Activation derivatives
//! are taken at the pre-activations `S`, which the forward pass caches.

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::losses::Loss;
use crate::matrix::Matrix;
use crate::optim::{init_biases, Initializer, Optimizer, OptimizerState, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(units: usize, activation: Activation) -> Self {
        Self { units, activation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub initializer: Initializer,
    /// Maximum number of epochs `α`.
    pub max_epochs: usize,
    /// Stop once consecutive validation losses differ by no more than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl NetworkConfig {
    /// Checks the hyperparameters and, when `targets` is given, that the output
    /// layer has one unit per target component.
    pub fn validate(&self, targets: Option<usize>) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::Config("a network needs at least one layer".into()))?;
        if let Some(i) = self.layers.iter().position(|l| l.units == 0) {
            return Err(Error::Config(format!("layer {} has zero units", i + 1)));
        }
        if let Some(m) = targets {
            if last.units != m {
                return Err(Error::Config(format!(
                    "output layer has {} units but there are {m} target columns",
                    last.units
                )));
            }
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) || self.tolerance.is_nan() {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `q_l × q_{l−1}`.
    pub weights: Matrix,
    /// `q_l × 1`.
    pub biases: Matrix,
    pub activation: Activation,
    pub weight_state: OptimizerState,
    pub bias_state: OptimizerState,
}

impl Layer {
    pub fn new(weights: Matrix, biases: Matrix, activation: Activation) -> Result<Self> {
        if biases.shape() != (weights.rows(), 1) {
            return Err(Error::shape("layer biases", biases.shape(), (weights.rows(), 1)));
        }
        Ok(Self {
            weight_state: OptimizerState::for_block(&weights),
            bias_state: OptimizerState::for_block(&biases),
            weights,
            biases,
            activation,
        })
    }

    pub fn units(&self) -> usize {
        self.weights.rows()
    }

    /// `W·z + B` with the bias broadcast over every column.
    fn preactivation(&self, input: &Matrix) -> Result<Matrix> {
        let mut s = self.weights.matmul(input)?;
        for i in 0..s.rows() {
            let b = self.biases[(i, 0)];
            for j in 0..s.cols() {
                s[(i, j)] += b;
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    input_dim: usize,
    layers: Vec<Layer>,
    /// Index of the next epoch; 1 for a fresh network.
    pub epoch: usize,
}

impl NetworkState {
    /// Draws every weight matrix from `config.initializer`, layer `l` (0-based) using
    /// the stream seeded with `config.seed + l`. Biases start at zero.
    pub fn init(config: &NetworkConfig, input_dim: usize) -> Result<Self> {
        config.validate(None)?;
        if input_dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (l, spec) in config.layers.iter().enumerate() {
            let mut rng = SeededRng::new(config.seed.wrapping_add(l as u64));
            let weights = config.initializer.init_weights(fan_in, spec.units, &mut rng)?;
            layers.push(Layer::new(weights, init_biases(spec.units)?, spec.activation)?);
            fan_in = spec.units;
        }
        Ok(Self {
            input_dim,
            layers,
            epoch: 1,
        })
    }

    /// Assembles a network from existing layers, e.g. when loading a model file.
    pub fn from_layers(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        let mut fan_in = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.cols() != fan_in {
                return Err(Error::Dimension(format!(
                    "layer {} expects {} inputs but receives {fan_in}",
                    l + 1,
                    layer.weights.cols()
                )));
            }
            fan_in = layer.units();
        }
        Ok(Self {
            input_dim,
            layers,
            epoch: 1,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::units)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn forward(&self, z0: &Matrix) -> Result<ForwardCache> {
        self.check_input(z0)?;
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap_or(z0);
            let s = layer.preactivation(input)?;
            let z = layer.activation.apply_matrix(&s);
            if !z.is_finite() {
                return Err(self.diverged(l));
            }
            preacts.push(s);
            acts.push(z);
        }
        Ok(ForwardCache {
            input: z0.clone(),
            preacts,
            acts,
        })
    }

    /// Network output for every column of `features` (`n × q` → `m × q`).
    pub fn predict(&self, features: &Matrix) -> Result<Matrix> {
        self.check_input(features)?;
        let mut z = features.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            z = layer.activation.apply_matrix(&layer.preactivation(&z)?);
            if !z.is_finite() {
                return Err(self.diverged(l));
            }
        }
        Ok(z)
    }

    /// Gradients of the batch training loss for every layer, in layer order.
    ///
    /// Only the first `train_targets.cols()` columns of the cache take part.
    pub fn backward(&self, cache: &ForwardCache, train_targets: &Matrix, loss: Loss) -> Result<Vec<LayerGradients>> {
        let k = self.layers.len();
        let p = train_targets.cols();
        let mut grads = Vec::with_capacity(k);
        let mut delta = output_delta(cache, train_targets, loss, self.layers[k - 1].activation)?;
        for r in (0..k).rev() {
            let z_prev = if r == 0 { &cache.input } else { &cache.acts[r - 1] };
            grads.push(layer_gradients(&delta, &z_prev.columns(0..p)?)?);
            if r > 0 {
                delta = hidden_delta(
                    &delta,
                    &self.layers[r].weights,
                    &cache.preacts[r - 1].columns(0..p)?,
                    self.layers[r - 1].activation,
                )?;
            }
        }
        grads.reverse();
        Ok(grads)
    }

    /// One optimiser update of every weight and bias block.
    pub fn apply_gradients(&mut self, optimizer: &Optimizer, grads: &[LayerGradients]) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::Dimension(format!(
                "{} gradient sets for {} layers",
                grads.len(),
                self.layers.len()
            )));
        }
        for (layer, g) in self.layers.iter_mut().zip(grads).rev() {
            optimizer.step(&mut layer.weight_state, &mut layer.weights, &g.weights)?;
            optimizer.step(&mut layer.bias_state, &mut layer.biases, &g.biases)?;
        }
        Ok(())
    }

    fn check_input(&self, z0: &Matrix) -> Result<()> {
        if z0.rows() != self.input_dim {
            return Err(Error::Dimension(format!(
                "network expects {} input rows, got {}",
                self.input_dim,
                z0.rows()
            )));
        }
        Ok(())
    }

    fn diverged(&self, layer: usize) -> Error {
        Error::Divergence {
            iteration: self.epoch,
            context: format!("layer {} produced non-finite values", layer + 1),
        }
    }
}

pub fn init_network(config: &NetworkConfig, input_dim: usize) -> Result<NetworkState> {
    NetworkState::init(config, input_dim)
}

/// Every pre-activation and activation of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// `Z⁽⁰⁾`.
    pub input: Matrix,
    /// `S⁽ˡ⁾` for `l = 1..k`.
    pub preacts: Vec<Matrix>,
    /// `Z⁽ˡ⁾` for `l = 1..k`.
    pub acts: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("a network has at least one layer")
    }

    pub fn columns(&self) -> usize {
        self.input.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Matrix,
    pub biases: Matrix,
}

/// Mean loss over the validation columns, which are the last `val_targets.cols()`
/// columns of the cached output.
pub fn batch_validation_loss(cache: &ForwardCache, val_targets: &Matrix, loss: Loss) -> Result<f64> {
    let out = cache.output();
    let s = val_targets.cols();
    if val_targets.rows() != out.rows() || s > out.cols() {
        return Err(Error::shape("validation targets", val_targets.shape(), out.shape()));
    }
    mean_column_loss(&out.columns(out.cols() - s..out.cols())?, val_targets, loss)
}

/// Mean loss over paired columns of `predictions` and `targets`.
pub fn mean_column_loss(predictions: &Matrix, targets: &Matrix, loss: Loss) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::shape("mean loss", predictions.shape(), targets.shape()));
    }
    let mut total = 0.0;
    for j in 0..targets.cols() {
        total += loss.loss(&predictions.column(j), &targets.column(j))?;
    }
    Ok(total / targets.cols() as f64)
}

/// Batch training loss `ψ` of `state` on `(features, targets)`.
pub fn batch_loss(state: &NetworkState, features: &Matrix, targets: &Matrix, loss: Loss) -> Result<f64> {
    mean_column_loss(&state.predict(features)?, targets, loss)
}

/// `Δ⁽ᵏ⁾`: per training column, the loss gradient pulled back through the output
/// activation. Columns past `train_targets.cols()` are ignored.
pub fn output_delta(
    cache: &ForwardCache,
    train_targets: &Matrix,
    loss: Loss,
    output_activation: Activation,
) -> Result<Matrix> {
    let out = cache.output();
    let p = train_targets.cols();
    if train_targets.rows() != out.rows() || p > out.cols() {
        return Err(Error::shape("training targets", train_targets.shape(), out.shape()));
    }
    let mut loss_grad = Matrix::zeros(out.rows(), p);
    for j in 0..p {
        let g = loss.gradient(&out.column(j), &train_targets.column(j))?;
        for (i, v) in g.into_iter().enumerate() {
            loss_grad[(i, j)] = v;
        }
    }
    let preact = cache.preacts.last().expect("a network has at least one layer");
    output_activation.backprop(&preact.columns(0..p)?, &loss_grad)
}

/// `Δ⁽ʳ⁾ = ∇φ⁽ʳ⁾(S⁽ʳ⁾) · (W⁽ʳ⁺¹⁾ᵀ Δ⁽ʳ⁺¹⁾)`, columnwise.
pub fn hidden_delta(
    delta_next: &Matrix,
    w_next: &Matrix,
    preact_r: &Matrix,
    activation_r: Activation,
) -> Result<Matrix> {
    let upstream = w_next.transpose().matmul(delta_next)?;
    activation_r.backprop(preact_r, &upstream)
}

/// `(1/p)·Δ·Zᵀ` and `(1/p)·Σ_columns Δ`.
pub fn layer_gradients(delta_r: &Matrix, z_prev_train: &Matrix) -> Result<LayerGradients> {
    if delta_r.cols() != z_prev_train.cols() {
        return Err(Error::shape("layer gradients", delta_r.shape(), z_prev_train.shape()));
    }
    let inv_p = 1.0 / delta_r.cols() as f64;
    Ok(LayerGradients {
        weights: delta_r.matmul(&z_prev_train.transpose())?.scale(inv_p),
        biases: delta_r.row_sums().scale(inv_p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ToleranceReached,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Validation loss after each epoch's forward pass.
    pub epoch_losses: Vec<f64>,
    pub stop_reason: StopReason,
    pub epochs_run: usize,
    /// `|ϑ_e − ϑ_{e−1}|` for the last epoch, against `f64::MAX` on the first.
    pub final_gap: f64,
}

/// What [`train_with`] reports after each epoch.
#[derive(Debug)]
pub struct EpochRecord<'a> {
    pub epoch: usize,
    pub validation_loss: f64,
    pub gap: f64,
    /// `None` when the gap fell below the tolerance and no update was made.
    pub gradients: Option<&'a [LayerGradients]>,
}

/// Batch-mode backpropagation with validation-loss stopping.
///
/// Each epoch runs one forward pass over training and validation columns, computes
/// the validation loss `ϑ_t` and the gap `c = |ϑ_t − ϑ_{t−1}|` (`ϑ₀ = f64::MAX`), and,
/// if `c ≥ tolerance`, backpropagates over the training columns and updates every
/// layer. Training continues while `c > tolerance` and fewer than `max_epochs`
/// epochs have run.
pub fn train(
    state: NetworkState,
    train_features: &Matrix,
    train_targets: &Matrix,
    val_features: &Matrix,
    val_targets: &Matrix,
    config: &NetworkConfig,
) -> Result<(NetworkState, TrainReport)> {
    train_with(
        state,
        train_features,
        train_targets,
        val_features,
        val_targets,
        config,
        |_| {},
    )
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    mut state: NetworkState,
    train_features: &Matrix,
    train_targets: &Matrix,
    val_features: &Matrix,
    val_targets: &Matrix,
    config: &NetworkConfig,
    mut observe: impl FnMut(&EpochRecord<'_>),
) -> Result<(NetworkState, TrainReport)> {
    config.validate(Some(train_targets.rows()))?;
    if state.output_dim() != train_targets.rows() {
        return Err(Error::Dimension(format!(
            "network has {} outputs but targets have {} rows",
            state.output_dim(),
            train_targets.rows()
        )));
    }
    if train_features.cols() != train_targets.cols() || val_features.cols() != val_targets.cols() {
        return Err(Error::Dimension("feature and target sample counts differ".into()));
    }
    if val_targets.rows() != train_targets.rows() {
        return Err(Error::shape("validation targets", val_targets.shape(), train_targets.shape()));
    }
    let p = train_features.cols();
    let z0 = train_features.hstack(val_features)?;
    let train_y = train_targets;

    let mut gap = f64::MAX;
    let mut previous = f64::MAX;
    let mut losses = Vec::new();
    let mut t = 1;
    while gap > config.tolerance && t <= config.max_epochs {
        state.epoch = t;
        let cache = state.forward(&z0)?;
        let theta = batch_validation_loss(&cache, val_targets, config.loss)?;
        if !theta.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                context: "validation loss is not finite".into(),
            });
        }
        gap = (theta - previous).abs();
        previous = theta;
        losses.push(theta);

        if gap >= config.tolerance {
            debug_assert_eq!(cache.columns(), p + val_features.cols());
            let grads = state.backward(&cache, train_y, config.loss)?;
            state
                .apply_gradients(&config.optimizer, &grads)
                .map_err(|e| match e {
                    Error::Divergence { context, .. } => Error::Divergence { iteration: t, context },
                    other => other,
                })?;
            observe(&EpochRecord {
                epoch: t,
                validation_loss: theta,
                gap,
                gradients: Some(&grads),
            });
        } else {
            observe(&EpochRecord {
                epoch: t,
                validation_loss: theta,
                gap,
                gradients: None,
            });
        }
        t += 1;
    }
    state.epoch = t;

    let stop_reason = if gap > config.tolerance {
        StopReason::MaxEpochs
    } else {
        StopReason::ToleranceReached
    };
    let report = TrainReport {
        epochs_run: losses.len(),
        epoch_losses: losses,
        stop_reason,
        final_gap: gap,
    };
    Ok((state, report))
}
