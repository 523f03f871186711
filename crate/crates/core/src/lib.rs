//! Least-squares and neural-network regression on dense `f64` matrices.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`]: the dense matrix type, products, Frobenius inner product and norm,
//!   outer products, and an LU kernel shared by [`Matrix::determinant`] and
//!   [`Matrix::inverse`].
//! - [`ols`]: linear regression `f(u) ≈ B·(u, 1)` solved either through the normal
//!   equation or by gradient descent with a Barzilai-Borwein step.
//! - [`activations`], [`losses`], [`optim`]: the building blocks of a dense
//!   feedforward network.
//! - [`network`]: forward pass, backpropagation and the batch-mode training loop.
//! - [`gradcheck`]: central finite-difference verification of backprop gradients.
//! - [`dataio`] and [`cli`]: CSV ingestion, normalisation, splitting, model files and
//!   the `tensoreg` command-line tool.
//!
//! # Layout conventions
//!
//! OLS problems store one sample per *row* of the design matrix `X` (with a trailing
//! bias column of ones) and one sample per *column* of the target matrix `Y`.
//! Networks store one sample per *column* of every layer matrix.

pub mod activations;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod matrix;
pub mod network;
pub mod ols;
pub mod optim;

pub use activations::Activation;
pub use error::{Error, Result};
pub use losses::Loss;
pub use matrix::Matrix;
pub use network::{LayerSpec, NetworkConfig, NetworkState, StopReason, TrainReport};
pub use ols::{GdConfig, GdTrace, OlsModel, OlsProblem};
pub use optim::{Initializer, Optimizer, OptimizerState, SeededRng};
