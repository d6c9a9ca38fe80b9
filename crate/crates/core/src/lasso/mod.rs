//! ℓ₁-penalized least squares.
//!
//! Minimizes `(1/2n)‖r − b₀ − Dθ‖² + λ Σ_{j penalized} |θ_j|` by cyclic
//! coordinate descent. The intercept `b₀` and any column flagged as
//! unpenalized are minimized exactly. With standardization on (the default)
//! the penalty applies to coefficients of unit-variance columns, and results
//! are reported back in the original units.

mod cd;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::make_folds;
use crate::error::{Error, Result};

use cd::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// λ with the smallest mean validation MSE.
    MinMse,
    /// Largest λ whose mean MSE is within one standard error of the minimum.
    OneSe,
}

impl std::str::FromStr for SelectionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-mse" => Ok(Self::MinMse),
            "one-se" => Ok(Self::OneSe),
            other => Err(Error::argument(format!(
                "unknown selection rule '{other}' (expected min-mse or one-se)"
            ))),
        }
    }
}

/// Penalty grid, cross-validation and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltySpec {
    pub grid_size: usize,
    pub lambda_min_ratio: f64,
    pub cv_folds: usize,
    pub selection_rule: SelectionRule,
    /// Convergence threshold on the per-sweep coefficient change and on the
    /// KKT residual, both on the standardized scale.
    pub tolerance: f64,
    /// Cap on coordinate-descent sweeps per λ.
    pub max_iterations: usize,
    pub standardize: bool,
    /// Record the penalized objective after every sweep (diagnostics only).
    pub trace_objective: bool,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self {
            grid_size: 100,
            lambda_min_ratio: 1e-3,
            cv_folds: 10,
            selection_rule: SelectionRule::MinMse,
            tolerance: 1e-7,
            max_iterations: 100_000,
            standardize: true,
            trace_objective: false,
        }
    }
}

impl PenaltySpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::argument("grid_size must be at least 2"));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::argument("lambda_min_ratio must lie in (0, 1)"));
        }
        if self.cv_folds < 2 {
            return Err(Error::argument("cv_folds must be at least 2"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::argument("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::argument("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
}

/// Cross-validation record: per-λ mean and standard error of validation MSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub lambdas: Vec<f64>,
    pub mean_mse: Vec<f64>,
    pub se_mse: Vec<f64>,
    pub chosen_index: usize,
    pub rule: SelectionRule,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLinearFit {
    /// One coefficient per design column, original units.
    pub coefficients: Vec<f64>,
    pub penalized: Vec<bool>,
    pub intercept: f64,
    pub lambda: f64,
    pub path: Vec<PathPoint>,
    pub cv: Option<CvRecord>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

impl SparseLinearFit {
    /// Coefficients of the penalized columns, in design order.
    pub fn beta(&self) -> Vec<f64> {
        self.select(true)
    }

    /// Coefficients of the unpenalized columns, in design order.
    pub fn unpenalized_coefs(&self) -> Vec<f64> {
        self.select(false)
    }

    fn select(&self, penalized: bool) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.penalized)
            .filter(|(_, &p)| p == penalized)
            .map(|(c, _)| *c)
            .collect()
    }

    pub fn predict(&self, design: ArrayView2<f64>) -> Vec<f64> {
        design
            .rows()
            .into_iter()
            .map(|row| self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>())
            .collect()
    }
}

fn check_inputs(design: ArrayView2<f64>, response: &[f64], penalized: &[bool]) -> Result<()> {
    let (n, m) = design.dim();
    if n == 0 {
        return Err(Error::argument("empty design"));
    }
    if response.len() != n {
        return Err(Error::argument(format!(
            "response has {} entries for {n} design rows",
            response.len()
        )));
    }
    if penalized.len() != m {
        return Err(Error::argument(format!(
            "penalty mask has {} entries for {m} design columns",
            penalized.len()
        )));
    }
    if design.iter().any(|v| !v.is_finite()) || response.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("non-finite value in design or response"));
    }
    Ok(())
}

/// Solves the Lasso at a single λ, optionally warm-started from
/// original-unit coefficients. Non-convergence within
/// `spec.max_iterations` sweeps is reported through `converged`, not as an error.
pub fn fit_lasso(
    design: ArrayView2<f64>,
    response: &[f64],
    penalized: &[bool],
    lambda: f64,
    warm_start: Option<&[f64]>,
    spec: &PenaltySpec,
) -> Result<SparseLinearFit> {
    check_inputs(design, response, penalized)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::argument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !(spec.tolerance > 0.0) || spec.max_iterations == 0 {
        return Err(Error::argument("tolerance and max_iterations must be positive"));
    }
    let problem = Problem::new(design, response, penalized, spec.standardize);
    let theta0 = match warm_start {
        Some(w) if w.len() == problem.width() => problem.to_scaled(w),
        Some(w) => {
            return Err(Error::argument(format!(
                "warm start has {} entries for {} columns",
                w.len(),
                problem.width()
            )))
        }
        None => vec![0.0; problem.width()],
    };
    let sol = problem.solve(
        lambda,
        theta0,
        spec.tolerance,
        spec.max_iterations,
        spec.trace_objective,
    );
    let (coefficients, intercept) = problem.to_original(&sol.theta);
    Ok(SparseLinearFit {
        path: vec![PathPoint {
            lambda,
            coefficients: coefficients.clone(),
        }],
        coefficients,
        penalized: penalized.to_vec(),
        intercept,
        lambda,
        cv: None,
        converged: sol.converged,
        iterations: sol.iterations,
        objective_trace: sol.trace,
    })
}

/// Largest KKT violation of `fit` on the solver's internal (centered,
/// standardized) scale. Zero means an exact Lasso solution.
pub fn kkt_violation(
    design: ArrayView2<f64>,
    response: &[f64],
    penalized: &[bool],
    fit: &SparseLinearFit,
    standardize: bool,
) -> Result<f64> {
    check_inputs(design, response, penalized)?;
    let problem = Problem::new(design, response, penalized, standardize);
    let theta = problem.to_scaled(&fit.coefficients);
    Ok(problem.kkt_violation(&theta, fit.lambda))
}

/// `size` points from `lambda_max` down to `ratio · lambda_max`, evenly spaced
/// on the log scale.
pub fn geometric_grid(lambda_max: f64, ratio: f64, size: usize) -> Vec<f64> {
    let last = (size - 1) as f64;
    (0..size)
        .map(|i| {
            if i == 0 {
                lambda_max
            } else if i + 1 == size {
                lambda_max * ratio
            } else {
                lambda_max * ratio.powf(i as f64 / last)
            }
        })
        .collect()
}

fn path_grid(problem: &Problem, spec: &PenaltySpec) -> Result<Vec<f64>> {
    let lambda_max = problem.lambda_max().ok_or_else(|| {
        Error::Degenerate("unpenalized columns are collinear; λ_max is undefined".into())
    })?;
    if !(lambda_max > 1e-12 * problem.gradient_scale()) {
        return Err(Error::Degenerate(
            "path-degenerate: response is orthogonal to every penalized column (λ_max = 0)".into(),
        ));
    }
    Ok(geometric_grid(lambda_max, spec.lambda_min_ratio, spec.grid_size))
}

/// Strictly decreasing penalty grid from λ_max to `lambda_min_ratio · λ_max`.
pub fn lambda_path(
    design: ArrayView2<f64>,
    response: &[f64],
    penalized: &[bool],
    spec: &PenaltySpec,
) -> Result<Vec<f64>> {
    check_inputs(design, response, penalized)?;
    spec.validate()?;
    if !penalized.iter().any(|&p| p) {
        return Err(Error::argument("no penalized columns; a penalty path is meaningless"));
    }
    let problem = Problem::new(design, response, penalized, spec.standardize);
    path_grid(&problem, spec)
}

struct PathRun {
    points: Vec<(Vec<f64>, f64, bool, usize)>,
}

fn run_path(problem: &Problem, grid: &[f64], spec: &PenaltySpec) -> PathRun {
    let mut theta = vec![0.0; problem.width()];
    let mut points = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let sol = problem.solve(lambda, theta, spec.tolerance, spec.max_iterations, false);
        let (beta, intercept) = problem.to_original(&sol.theta);
        theta = sol.theta;
        points.push((beta, intercept, sol.converged, sol.iterations));
    }
    PathRun { points }
}

/// λ chosen by k-fold cross-validation, then refit on all rows.
///
/// The grid comes from the full data. Each fold solves the whole path with
/// warm starts on its training rows and scores every λ on its held-out rows;
/// fold results are merged in fold order, so the choice does not depend on
/// how the folds were scheduled. Ties in mean MSE go to the larger λ.
pub fn cv_lasso(
    design: ArrayView2<f64>,
    response: &[f64],
    penalized: &[bool],
    spec: &PenaltySpec,
    seed: u64,
) -> Result<SparseLinearFit> {
    check_inputs(design, response, penalized)?;
    spec.validate()?;
    let n = design.nrows();
    if n < spec.cv_folds {
        return Err(Error::argument(format!(
            "{n} rows cannot fill {} cross-validation folds",
            spec.cv_folds
        )));
    }
    if !penalized.iter().any(|&p| p) {
        return Err(Error::argument("no penalized columns; a penalty path is meaningless"));
    }
    let full = Problem::new(design, response, penalized, spec.standardize);
    let grid = path_grid(&full, spec)?;
    let plan = make_folds(n, spec.cv_folds, seed)?;

    let fold_mse: Vec<Vec<f64>> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let train = plan.complement(f);
            let valid = plan.fold(f);
            let x_train = design.select(Axis(0), &train);
            let y_train: Vec<f64> = train.iter().map(|&i| response[i]).collect();
            let problem = Problem::new(x_train.view(), &y_train, penalized, spec.standardize);
            let run = run_path(&problem, &grid, spec);
            run.points
                .iter()
                .map(|(beta, intercept, _, _)| {
                    let sse: f64 = valid
                        .iter()
                        .map(|&i| {
                            let pred = intercept
                                + design.row(i).iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
                            (response[i] - pred).powi(2)
                        })
                        .sum();
                    sse / valid.len() as f64
                })
                .collect()
        })
        .collect();

    let k = plan.k as f64;
    let mut mean_mse = Vec::with_capacity(grid.len());
    let mut se_mse = Vec::with_capacity(grid.len());
    for l in 0..grid.len() {
        let vals: Vec<f64> = fold_mse.iter().map(|f| f[l]).collect();
        let mean = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        mean_mse.push(mean);
        se_mse.push((var / k).sqrt());
    }

    let mut best = 0;
    for l in 1..grid.len() {
        if mean_mse[l] < mean_mse[best] {
            best = l;
        }
    }
    let chosen_index = match spec.selection_rule {
        SelectionRule::MinMse => best,
        SelectionRule::OneSe => {
            let threshold = mean_mse[best] + se_mse[best];
            (0..=best).find(|&l| mean_mse[l] <= threshold).unwrap_or(best)
        }
    };

    let run = run_path(&full, &grid, spec);
    let path: Vec<PathPoint> = grid
        .iter()
        .zip(&run.points)
        .map(|(&lambda, (beta, _, _, _))| PathPoint {
            lambda,
            coefficients: beta.clone(),
        })
        .collect();
    let (coefficients, intercept, converged, iterations) = run.points[chosen_index].clone();

    Ok(SparseLinearFit {
        coefficients,
        penalized: penalized.to_vec(),
        intercept,
        lambda: grid[chosen_index],
        path,
        cv: Some(CvRecord {
            lambdas: grid,
            mean_mse,
            se_mse,
            chosen_index,
            rule: spec.selection_rule,
            folds: plan.k,
            seed,
        }),
        converged,
        iterations,
        objective_trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn geometric_grid_hand_case() {
        let g = geometric_grid(1.0, 0.01, 3);
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert!((g[2] - 0.01).abs() < 1e-17);
    }

    #[test]
    fn lambda_zero_is_least_squares() {
        // y = 1 + 2a - b exactly
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 3.0], [3.0, 1.0], [4.0, 5.0]];
        let y: Vec<f64> = x.rows().into_iter().map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        let spec = PenaltySpec {
            tolerance: 1e-13,
            ..PenaltySpec::default()
        };
        let fit = fit_lasso(x.view(), &y, &[true, true], 0.0, None, &spec).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-8);
        assert!((fit.coefficients[1] + 1.0).abs() < 1e-8);
        assert!((fit.intercept - 1.0).abs() < 1e-8);
    }

    #[test]
    fn single_column_soft_thresholds() {
        // standardized column: mean 0, n-denominator sd 1
        let s = (2.0f64).sqrt();
        let x = array![[-s], [0.0], [s], [0.0]];
        let y = [-3.0, 1.0, 4.0, 0.0];
        let col: Vec<f64> = x.column(0).to_vec();
        let ym = y.iter().sum::<f64>() / 4.0;
        let b: f64 = col.iter().zip(&y).map(|(a, v)| a * (v - ym)).sum::<f64>() / 4.0;
        for lambda in [0.0, 0.5, 1.0, b.abs(), 10.0] {
            let fit = fit_lasso(x.view(), &y, &[true], lambda, None, &PenaltySpec::default()).unwrap();
            let want = b.signum() * (b.abs() - lambda).max(0.0);
            assert!((fit.coefficients[0] - want).abs() < 1e-10, "λ={lambda}");
        }
    }

    #[test]
    fn orthogonal_response_is_path_degenerate() {
        let x = array![[1.0], [-1.0], [1.0], [-1.0]];
        let y = [1.0, 1.0, 2.0, 2.0];
        let err = lambda_path(x.view(), &y, &[true], &PenaltySpec::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(ref m) if m.contains("path-degenerate")));
    }

    #[test]
    fn all_unpenalized_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(lambda_path(x.view(), &[1.0, 2.0], &[false], &PenaltySpec::default()).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        let x = array![[1.0], [f64::NAN]];
        assert!(fit_lasso(x.view(), &[1.0, 2.0], &[true], 0.1, None, &PenaltySpec::default()).is_err());
        let x = array![[1.0], [2.0]];
        assert!(fit_lasso(x.view(), &[1.0, 2.0], &[true], -1.0, None, &PenaltySpec::default()).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let x = Array2::from_shape_fn((30, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 + (j as f64) * 0.1 * i as f64);
        let y: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let spec = PenaltySpec {
            max_iterations: 1,
            tolerance: 1e-14,
            ..PenaltySpec::default()
        };
        let fit = fit_lasso(x.view(), &y, &[true; 3], 1e-4, None, &spec).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let x = array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0], [5.0, 5.0]];
        let y = [1.0, 2.0, 2.5, 4.0];
        let fit = fit_lasso(x.view(), &y, &[true, true], 0.01, None, &PenaltySpec::default()).unwrap();
        assert_eq!(fit.coefficients[0], 0.0);
        assert!(fit.coefficients[1] > 0.0);
    }

    #[test]
    fn one_se_rule_picks_larger_lambda() {
        let x = Array2::from_shape_fn((60, 5), |(i, j)| (((i + 1) * (j + 3)) % 13) as f64);
        let y: Vec<f64> = (0..60).map(|i| x[[i, 0]] + ((i * 31) % 7) as f64).collect();
        let min = cv_lasso(x.view(), &y, &[true; 5], &PenaltySpec::default(), 4).unwrap();
        let spec = PenaltySpec {
            selection_rule: SelectionRule::OneSe,
            ..PenaltySpec::default()
        };
        let one = cv_lasso(x.view(), &y, &[true; 5], &spec, 4).unwrap();
        assert!(one.lambda >= min.lambda);
    }
}
