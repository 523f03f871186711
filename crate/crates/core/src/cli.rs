//! The `tensoreg` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
//! (singular system or divergence).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::activations::Activation;
use crate::dataio::{self, ColumnSchema, ModelFile, NormalizationStats};
use crate::error::Error;
use crate::gradcheck;
use crate::losses::Loss;
use crate::matrix::Matrix;
use crate::network::{self, LayerSpec, NetworkConfig, NetworkState, StopReason};
use crate::ols::{self, GdConfig};
use crate::optim::{Initializer, Optimizer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tensoreg", version, about = "Least-squares and neural-network regression on CSV data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a linear model by the normal equation or by gradient descent.
    OlsFit {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated feature column names.
        #[arg(long, value_delimiter = ',', required = true)]
        features: Vec<String>,
        /// Comma-separated target column names.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        #[arg(long, value_enum, default_value_t = Method::Analytic)]
        method: Method,
        /// Stop gradient descent once a step is no larger than this.
        #[arg(long, default_value_t = 1e-10)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        /// Switch to gradient descent when XᵀX is singular.
        #[arg(long)]
        fallback_gd: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a dense network by batch backpropagation.
    AnnTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        features: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        /// Layers as `units:activation`, comma-separated, e.g. `4:swish,1:identity`.
        #[arg(long)]
        layers: String,
        #[arg(long, default_value = "mse")]
        loss: String,
        #[arg(long, default_value = "adam")]
        optimizer: String,
        /// Learning rate; defaults depend on the optimizer.
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, default_value = "xavier")]
        init: String,
        /// Maximum number of epochs.
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        /// Stop once consecutive validation losses differ by no more than this.
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.2)]
        val_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep targets in original units instead of z-scoring them (for losses
        /// such as msle or poisson that need non-negative targets).
        #[arg(long)]
        raw_targets: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict targets for the feature columns of a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare backprop gradients with finite differences on random networks.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Analytic,
    Gd,
}

/// Runs the tool on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let target: &mut dyn Write = if code == EXIT_OK { out } else { err };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Singular(_) | Error::Divergence { .. } => EXIT_NUMERICAL,
        Error::Config(_) | Error::UnknownName { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, Error> {
    match command {
        Command::OlsFit {
            data,
            features,
            targets,
            method,
            epsilon,
            max_iters,
            fallback_gd,
            out: model_path,
        } => {
            let schema = ColumnSchema::new(features, targets)?;
            let (x_rows, y_rows) = dataio::load_csv(&data, &schema)?;
            let (x_norm, x_stats) = dataio::normalize(&x_rows, None, &schema.features)?;
            let (y_norm, y_stats) = dataio::normalize(&y_rows, None, &schema.targets)?;
            let problem = ols::build_problem(&x_norm, &y_norm)?;
            let gd_config = GdConfig {
                epsilon,
                max_iterations: max_iters,
                ..GdConfig::default()
            };
            let run_gd = |out: &mut dyn Write| -> Result<ols::OlsModel, Error> {
                let (model, trace) = ols::solve_gd(&problem, &gd_config)?;
                let _ = writeln!(
                    out,
                    "gradient descent: {} iterations, last step {:.3e}, {}",
                    trace.iterations,
                    trace.final_step_norm,
                    if trace.converged { "converged" } else { "iteration limit reached" }
                );
                Ok(model)
            };
            let model = match method {
                Method::Gd => run_gd(out)?,
                Method::Analytic => match ols::solve_analytic(&problem) {
                    Ok(model) => model,
                    Err(Error::Singular(_)) if fallback_gd => {
                        let _ = writeln!(out, "XᵀX is singular; falling back to gradient descent");
                        run_gd(out)?
                    }
                    Err(Error::Singular(_)) => {
                        return Err(Error::Singular(
                            "XᵀX is not invertible; rerun with --method gd or --fallback-gd",
                        ))
                    }
                    Err(e) => return Err(e),
                },
            };
            let file = ModelFile::for_ols(&model, &schema, x_stats, y_stats);
            dataio::save_model(&file, &model_path)?;
            let _ = writeln!(
                out,
                "fitted {} samples, wrote {}",
                problem.samples(),
                model_path.display()
            );
            Ok(EXIT_OK)
        }
        Command::AnnTrain {
            data,
            features,
            targets,
            layers,
            loss,
            optimizer,
            learning_rate,
            init,
            epochs,
            epsilon,
            val_fraction,
            seed,
            raw_targets,
            out: model_path,
        } => {
            let schema = ColumnSchema::new(features, targets)?;
            let config = NetworkConfig {
                layers: parse_layers(&layers)?,
                loss: loss.parse::<Loss>()?,
                optimizer: Optimizer::from_name(&optimizer, learning_rate)?,
                initializer: init.parse::<Initializer>()?,
                max_epochs: epochs,
                tolerance: epsilon,
                seed,
            };
            config.validate(Some(schema.targets.len()))?;

            let (x_rows, y_rows) = dataio::load_csv(&data, &schema)?;
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = x_rows.into_iter().zip(y_rows).collect();
            let (train, val) = dataio::split(&pairs, val_fraction, seed)?;
            let (train_x, train_y): (Vec<_>, Vec<_>) = train.into_iter().unzip();
            let (val_x, val_y): (Vec<_>, Vec<_>) = val.into_iter().unzip();

            let x_stats = NormalizationStats::fit(&train_x, &schema.features)?;
            let y_stats = if raw_targets {
                NormalizationStats {
                    means: vec![0.0; schema.targets.len()],
                    stds: vec![1.0; schema.targets.len()],
                }
            } else {
                NormalizationStats::fit(&train_y, &schema.targets)?
            };
            let columns = |rows: &[Vec<f64>], stats: &NormalizationStats| -> Result<Matrix, Error> {
                Matrix::from_columns(&stats.apply(rows)?)
            };
            let state = NetworkState::init(&config, schema.features.len())?;
            let (state, report) = network::train(
                state,
                &columns(&train_x, &x_stats)?,
                &columns(&train_y, &y_stats)?,
                &columns(&val_x, &x_stats)?,
                &columns(&val_y, &y_stats)?,
                &config,
            )?;

            let file = ModelFile::for_network(
                &state,
                &config.loss.to_string(),
                &config.optimizer.to_string(),
                &schema,
                x_stats,
                y_stats,
                seed,
            );
            dataio::save_model(&file, &model_path)?;
            let _ = writeln!(
                out,
                "{} epochs ({}), final validation loss {:.6e}, wrote {}",
                report.epochs_run,
                match report.stop_reason {
                    StopReason::ToleranceReached => "tolerance reached",
                    StopReason::MaxEpochs => "epoch limit reached",
                },
                report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                model_path.display()
            );
            Ok(EXIT_OK)
        }
        Command::Predict {
            model,
            data,
            out: csv_path,
        } => {
            let file = dataio::load_model(&model)?;
            let rows = dataio::load_columns(&data, &file.feature_columns)?;
            let predictions = file.predict(&rows)?;
            match csv_path {
                Some(path) => {
                    dataio::write_csv(&path, &file.target_columns, &predictions)?;
                    let _ = writeln!(out, "wrote {} predictions to {}", predictions.len(), path.display());
                }
                None => {
                    let _ = writeln!(out, "{}", file.target_columns.join(","));
                    for row in &predictions {
                        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                        let _ = writeln!(out, "{}", cells.join(","));
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Gradcheck { seed, cases } => {
            let summary = gradcheck::run_suite(seed, cases)?;
            let _ = writeln!(
                out,
                "{} networks, max relative error {:.3e} (tolerance {:.0e})",
                summary.cases,
                summary.max_error,
                gradcheck::RELATIVE_TOLERANCE
            );
            Ok(if summary.passed() { EXIT_OK } else { EXIT_NUMERICAL })
        }
    }
}

/// Parses `units:activation[,units:activation…]`.
pub fn parse_layers(spec: &str) -> Result<Vec<LayerSpec>, Error> {
    spec.split(',')
        .map(|part| {
            let part = part.trim();
            let (units, activation) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("layer {part:?} is not units:activation")))?;
            let units: usize = units
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("layer {part:?} has an invalid unit count")))?;
            let activation: Activation = activation.parse()?;
            Ok(LayerSpec::new(units, activation))
        })
        .collect()
}
