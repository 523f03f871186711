//! Ordinary least squares for vector-valued linear maps.
//!
//! The model is `f(u) ≈ B·ū` with `ū = (u₁, …, uₙ, 1)`, so `B` is `m × (n+1)` and its
//! last column holds the intercepts. With the design matrix `X` (one `ū` per row) and
//! the target matrix `Y` (one target per column), the squared-error objective
//!
//! ```text
//! ψ(B) = Σ_k ‖f(uᵏ) − B·ūᵏ‖² = ‖Y − B·Xᵀ‖²
//! ```
//!
//! has gradient `2(B·Z − Y·X)` with `Z = XᵀX`, and its stationarity condition is the
//! normal equation `B·Z = Y·X`.
//!
//! Two solvers are provided: [`solve_analytic`] inverts `Z` directly, and [`solve_gd`]
//! iterates gradient descent with a Barzilai-Borwein step. The iterative solver is
//! sometimes called "stochastic" gradient descent in the literature even though every
//! step uses the full training set; no sampling happens here.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsProblem {
    x: Matrix,
    y: Matrix,
}

impl OlsProblem {
    /// `x_design` is `p × (n+1)` with a trailing column of ones, `y_targets` is `m × p`.
    pub fn new(x_design: Matrix, y_targets: Matrix) -> Result<Self> {
        let (p, width) = x_design.shape();
        if width < 2 {
            return Err(Error::Dimension(
                "design matrix needs at least one feature column and the bias column".into(),
            ));
        }
        if y_targets.cols() != p {
            return Err(Error::shape("ols problem", x_design.shape(), y_targets.shape()));
        }
        if (0..p).any(|k| x_design[(k, width - 1)] != 1.0) {
            return Err(Error::Dimension("last design column must be all ones".into()));
        }
        Ok(Self {
            x: x_design,
            y: y_targets,
        })
    }

    pub fn design(&self) -> &Matrix {
        &self.x
    }

    pub fn targets(&self) -> &Matrix {
        &self.y
    }

    pub fn samples(&self) -> usize {
        self.x.rows()
    }

    pub fn features(&self) -> usize {
        self.x.cols() - 1
    }

    pub fn outputs(&self) -> usize {
        self.y.rows()
    }

    /// `Z = XᵀX`.
    pub fn gram(&self) -> Matrix {
        self.x
            .transpose()
            .matmul(&self.x)
            .expect("design shapes are consistent")
    }

    /// `K = Y·X`.
    pub fn target_moment(&self) -> Matrix {
        self.y.matmul(&self.x).expect("problem shapes are consistent")
    }

    /// Squared-error objective `ψ(B) = ‖Y − B·Xᵀ‖²`.
    pub fn objective(&self, b: &Matrix) -> Result<f64> {
        let fitted = b.matmul(&self.x.transpose())?;
        Ok(self.y.sub(&fitted)?.frobenius_norm().powi(2))
    }
}

/// Stacks features as design rows `(u₁, …, uₙ, 1)` and targets as columns of `Y`.
pub fn build_problem<F: AsRef<[f64]>, T: AsRef<[f64]>>(
    features: &[F],
    targets: &[T],
) -> Result<OlsProblem> {
    if features.is_empty() || targets.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if features.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} feature vectors but {} target vectors",
            features.len(),
            targets.len()
        )));
    }
    let rows: Vec<Vec<f64>> = features
        .iter()
        .map(|u| {
            let mut row = u.as_ref().to_vec();
            row.push(1.0);
            row
        })
        .collect();
    let x = Matrix::from_rows(&rows)?;
    let y = Matrix::from_columns(targets)?;
    OlsProblem::new(x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsModel {
    pub b: Matrix,
}

impl OlsModel {
    pub fn new(b: Matrix) -> Result<Self> {
        if b.cols() < 2 {
            return Err(Error::Dimension("coefficient matrix needs a bias column".into()));
        }
        Ok(Self { b })
    }

    pub fn features(&self) -> usize {
        self.b.cols() - 1
    }

    pub fn outputs(&self) -> usize {
        self.b.rows()
    }

    /// `B·(x₁, …, xₙ, 1)ᵀ`.
    pub fn predict(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.features() {
            return Err(Error::Dimension(format!(
                "model expects {} features, got {}",
                self.features(),
                feature.len()
            )));
        }
        let n = self.features();
        Ok((0..self.outputs())
            .map(|i| {
                let row = self.b.row(i);
                row[..n].iter().zip(feature).map(|(b, x)| b * x).sum::<f64>() + row[n]
            })
            .collect())
    }
}

/// `B = Y·X·Z⁻¹`. Fails when `Z` is numerically singular; use [`solve_gd`] then.
pub fn solve_analytic(problem: &OlsProblem) -> Result<OlsModel> {
    let z_inv = problem.gram().inverse().map_err(|e| match e {
        Error::Singular(_) => Error::Singular("XᵀX is not invertible, try the gradient-descent solver"),
        other => other,
    })?;
    OlsModel::new(problem.target_moment().matmul(&z_inv)?)
}

/// Barzilai-Borwein rate `|L : LZ| / (2‖LZ‖²)` for the step `L = B_t − B_{t−1}`.
///
/// Returns `Ok(None)` when `‖LZ‖ = 0`, i.e. the gradient did not change between the
/// two iterates and no rate can be formed.
pub fn bb_learning_rate(l_step: &Matrix, z: &Matrix) -> Result<Option<f64>> {
    let lz = l_step.matmul(z)?;
    let lz_norm_sq = lz.frobenius_norm().powi(2);
    if lz_norm_sq == 0.0 {
        return Ok(None);
    }
    Ok(Some(l_step.frobenius_inner(&lz)?.abs() / (2.0 * lz_norm_sq)))
}

/// Unit-consistent starting point: every entry of `B₀` is `‖Y‖/‖X‖` and
/// `γ₀ = 1/(2‖X‖²)`.
///
/// The guesses are only meaningful when features and targets are normalised.
pub fn default_guesses(problem: &OlsProblem) -> (Matrix, f64) {
    let x_norm = problem.x.frobenius_norm();
    let y_norm = problem.y.frobenius_norm();
    let b0 = Matrix::filled(problem.outputs(), problem.features() + 1, y_norm / x_norm);
    (b0, 1.0 / (2.0 * x_norm * x_norm))
}

#[derive(Debug, Clone)]
pub struct GdConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub gamma0: Option<f64>,
    pub b0: Option<Matrix>,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            max_iterations: 10_000,
            gamma0: None,
            b0: None,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if let Some(g) = self.gamma0 {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma0 must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdTrace {
    pub iterations: usize,
    /// `‖B_t − B_{t−1}‖` of the last step taken.
    pub final_step_norm: f64,
    pub converged: bool,
}

/// Gradient descent on `ψ` with a Barzilai-Borwein step after the first iteration.
///
/// The first step uses `γ₀`; every later step is
/// `B_{t+1} = B_t − (|L:LZ|/‖LZ‖²)(B_t·Z − K)`. Iteration stops once the step norm
/// `‖L‖` is no longer above `epsilon`, or after `max_iterations` updates.
pub fn solve_gd(problem: &OlsProblem, config: &GdConfig) -> Result<(OlsModel, GdTrace)> {
    solve_gd_with(problem, config, |_| {})
}

/// Snapshot handed to the observer of [`solve_gd_with`] after each update.
#[derive(Debug)]
pub struct GdStep<'a> {
    pub iteration: usize,
    pub previous: &'a Matrix,
    pub current: &'a Matrix,
    /// Barzilai-Borwein rate `γ_t` used for this update (`γ₀` on the first one).
    pub rate: f64,
}

/// [`solve_gd`] with a callback invoked after every update.
pub fn solve_gd_with(
    problem: &OlsProblem,
    config: &GdConfig,
    mut observe: impl FnMut(&GdStep<'_>),
) -> Result<(OlsModel, GdTrace)> {
    config.validate()?;
    let (default_b0, default_gamma0) = default_guesses(problem);
    let b0 = match &config.b0 {
        Some(b0) if b0.shape() != default_b0.shape() => {
            return Err(Error::shape("initial coefficients", b0.shape(), default_b0.shape()));
        }
        Some(b0) => b0.clone(),
        None => default_b0,
    };
    let gamma0 = config.gamma0.unwrap_or(default_gamma0);

    let z = problem.gram();
    let k = problem.target_moment();
    let residual = |b: &Matrix| -> Result<Matrix> { b.matmul(&z)?.sub(&k) };

    let mut current = b0.sub(&residual(&b0)?.scale(2.0 * gamma0))?;
    check_finite(&current, 1)?;
    observe(&GdStep {
        iteration: 1,
        previous: &b0,
        current: &current,
        rate: gamma0,
    });
    let mut step = current.sub(&b0)?;
    let mut t = 1;
    let mut stalled = false;

    while step.frobenius_norm() > config.epsilon && t < config.max_iterations {
        let Some(rate) = bb_learning_rate(&step, &z)? else {
            stalled = true;
            break;
        };
        let next = current.sub(&residual(&current)?.scale(2.0 * rate))?;
        t += 1;
        check_finite(&next, t)?;
        observe(&GdStep {
            iteration: t,
            previous: &current,
            current: &next,
            rate,
        });
        step = next.sub(&current)?;
        current = next;
    }

    let final_step_norm = step.frobenius_norm();
    let trace = GdTrace {
        iterations: t,
        final_step_norm,
        converged: stalled || final_step_norm <= config.epsilon,
    };
    Ok((OlsModel::new(current)?, trace))
}

fn check_finite(b: &Matrix, iteration: usize) -> Result<()> {
    if b.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            context: "gradient-descent iterate overflowed".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_problem() -> OlsProblem {
        build_problem(&[[0.0], [1.0]], &[[1.0], [3.0]]).unwrap()
    }

    /// Solves the normal equation `Z bᵀ = (YX)ᵀ` by Gauss-Jordan elimination,
    /// independently of the LU kernel.
    fn gauss_oracle(problem: &OlsProblem) -> Matrix {
        let z = problem.gram();
        let rhs = problem.target_moment().transpose();
        let n = z.rows();
        let m = rhs.cols();
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| z.row(i).iter().chain(rhs.row(i)).copied().collect())
            .collect();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs()))
                .unwrap();
            aug.swap(c, p);
            let pivot = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= pivot;
            }
            for r in 0..n {
                if r != c {
                    let f = aug[r][c];
                    let pivot_row = aug[c].clone();
                    for (v, pv) in aug[r].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let cols: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| aug[i][n + j]).collect()).collect();
        Matrix::from_rows(&cols).unwrap()
    }

    #[test]
    fn build_problem_assembles_design_and_targets() {
        let p = line_problem();
        assert_eq!(p.design(), &Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]]).unwrap());
        assert_eq!(p.targets(), &Matrix::from_rows(&[[1.0, 3.0]]).unwrap());
    }

    #[test]
    fn build_problem_rejects_bad_input() {
        let ragged: Vec<Vec<f64>> = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(matches!(
            build_problem(&ragged, &[[1.0], [2.0]]),
            Err(Error::Dimension(_))
        ));
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(build_problem(&empty, &empty), Err(Error::Empty(_))));
        assert!(build_problem(&[[1.0]], &[[1.0], [2.0]]).is_err());
    }

    #[test]
    fn analytic_line_through_two_points() {
        let problem = line_problem();
        let model = solve_analytic(&problem).unwrap();
        let oracle = gauss_oracle(&problem);
        assert!(model.b.sub(&oracle).unwrap().frobenius_norm() < 1e-12);
        let expected = Matrix::from_rows(&[[2.0, 1.0]]).unwrap();
        assert!(model.b.sub(&expected).unwrap().frobenius_norm() < 1e-12);
        assert!((model.predict(&[0.0]).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_zero_targets_and_singular_case() {
        let problem = build_problem(&[[0.0], [1.0], [2.0]], &[[0.0], [0.0], [0.0]]).unwrap();
        let model = solve_analytic(&problem).unwrap();
        assert!(model.b.frobenius_norm() < 1e-15);

        let single = build_problem(&[[2.0]], &[[1.0]]).unwrap();
        assert!(matches!(solve_analytic(&single), Err(Error::Singular(_))));
    }

    #[test]
    fn bb_rate_cases() {
        let l = Matrix::from_rows(&[[2.0]]).unwrap();
        let z = Matrix::from_rows(&[[3.0]]).unwrap();
        let rate = bb_learning_rate(&l, &z).unwrap().unwrap();
        assert!((rate - 1.0 / 6.0).abs() < 1e-15);

        assert_eq!(bb_learning_rate(&Matrix::zeros(1, 2), &Matrix::identity(2)).unwrap(), None);

        let l = Matrix::from_rows(&[[0.3, -1.2, 4.0]]).unwrap();
        let rate = bb_learning_rate(&l, &Matrix::identity(3)).unwrap().unwrap();
        assert!((rate - 0.5).abs() < 1e-15);
    }

    #[test]
    fn default_guess_values() {
        // ‖X‖ = 2 with X = [[1,1],[1,1]]; ‖Y‖ = 6 with Y = [[6, 0]]
        let problem = build_problem(&[[1.0], [1.0]], &[[6.0], [0.0]]).unwrap();
        let (b0, gamma0) = default_guesses(&problem);
        assert_eq!(b0, Matrix::filled(1, 2, 3.0));
        assert_eq!(gamma0, 0.125);

        let zero = build_problem(&[[1.0], [2.0]], &[[0.0], [0.0]]).unwrap();
        assert_eq!(default_guesses(&zero).0, Matrix::zeros(1, 2));

        let a = build_problem(&[[1.0], [2.0], [5.0]], &[[1.0], [0.0], [2.0]]).unwrap();
        let b = build_problem(&[[5.0], [1.0], [2.0]], &[[2.0], [1.0], [0.0]]).unwrap();
        assert_eq!(default_guesses(&a).1, default_guesses(&b).1);
    }

    #[test]
    fn gd_recovers_exact_line() {
        let features: Vec<[f64; 2]> = (0..12)
            .map(|k| [(k as f64 * 0.37).sin(), (k as f64 * 0.91).cos()])
            .collect();
        let targets: Vec<[f64; 1]> = features.iter().map(|u| [1.5 * u[0] - 0.5 * u[1] + 0.25]).collect();
        let problem = build_problem(&features, &targets).unwrap();
        let analytic = solve_analytic(&problem).unwrap();
        let (gd, trace) = solve_gd(&problem, &GdConfig::default()).unwrap();
        assert!(trace.converged);
        assert!(gd.b.sub(&analytic.b).unwrap().frobenius_norm() <= 1e-6);
        for (u, y) in features.iter().zip(&targets) {
            assert!((analytic.predict(u).unwrap()[0] - y[0]).abs() <= 1e-8);
        }
    }

    #[test]
    fn gd_from_optimum_stops_immediately() {
        let problem = line_problem();
        let optimum = solve_analytic(&problem).unwrap();
        let config = GdConfig {
            b0: Some(optimum.b.clone()),
            ..GdConfig::default()
        };
        let (_, trace) = solve_gd(&problem, &config).unwrap();
        assert!(trace.iterations <= 2);
        assert!(trace.converged);
    }

    #[test]
    fn gd_single_iteration_bound() {
        let problem = line_problem();
        let config = GdConfig {
            epsilon: 1e3,
            max_iterations: 1,
            ..GdConfig::default()
        };
        let (_, trace) = solve_gd(&problem, &config).unwrap();
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.converged, trace.final_step_norm <= 1e3);

        let strict = GdConfig {
            epsilon: 1e-300,
            max_iterations: 1,
            ..GdConfig::default()
        };
        let (_, trace) = solve_gd(&problem, &strict).unwrap();
        assert_eq!(trace.iterations, 1);
        assert!(!trace.converged);
    }

    #[test]
    fn gd_divergence_is_reported() {
        let problem = line_problem();
        let config = GdConfig {
            gamma0: Some(1e308),
            ..GdConfig::default()
        };
        assert!(matches!(
            solve_gd(&problem, &config),
            Err(Error::Divergence { iteration: 1, .. })
        ));
    }

    #[test]
    fn gd_config_validation() {
        let problem = line_problem();
        for bad in [
            GdConfig { epsilon: 0.0, ..GdConfig::default() },
            GdConfig { max_iterations: 0, ..GdConfig::default() },
            GdConfig { gamma0: Some(-1.0), ..GdConfig::default() },
            GdConfig { b0: Some(Matrix::zeros(2, 2)), ..GdConfig::default() },
        ] {
            assert!(solve_gd(&problem, &bad).is_err());
        }
    }

    #[test]
    fn predict_cases() {
        let zero = OlsModel::new(Matrix::zeros(2, 3)).unwrap();
        assert_eq!(zero.predict(&[4.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        assert!(zero.predict(&[1.0]).is_err());
    }
}
