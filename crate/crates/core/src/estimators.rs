//! CATE estimators sharing one [`CateModel`] output.
//!
//! - `dipw-algo1`: cross-fit `B̂`, then one Lasso of `Y·W` on `[X | W | B̂·W]`
//!   with only the `X` block penalized.
//! - `dipw-algo2`: cross-fit `B̂`, residualize `Y·W` on `(W, B̂·W)` by OLS, then
//!   Lasso of the residual on `X`.
//! - `ipw`: Lasso of `Y·W` on `X`.
//! - `dr`: Lasso of the cross-fitted AIPW pseudo-outcome on `X`.
//! - `t-learner`: separate forests for treated and control, `τ̂ = μ̂₁ − μ̂₀`.
//!
//! Seeds for cross-fitting folds, nuisance learners and Lasso CV folds are all
//! derived from `EstimatorConfig::seed`. The CV seed does not depend on the
//! method, so every Lasso-based estimator on the same data and seed scores its
//! penalties on the same validation folds.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{make_folds, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::forest::{
    cross_fit_predict, cross_fit_predict_where, fit_forest, ForestLearner, ForestSpec,
    RegressionForest,
};
use crate::lasso::{cv_lasso, CvRecord, PenaltySpec};
use crate::linalg::sample_sd;
use crate::rng::{derive_seed, Stream};
use crate::transform::{aipw_transform, b_star, denoise, ipw_transform, DenoisingDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    DipwAlgo1,
    DipwAlgo2,
    Ipw,
    Dr,
    TLearner,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::DipwAlgo1,
        ModelKind::DipwAlgo2,
        ModelKind::Ipw,
        ModelKind::Dr,
        ModelKind::TLearner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DipwAlgo1 => "dipw-algo1",
            ModelKind::DipwAlgo2 => "dipw-algo2",
            ModelKind::Ipw => "ipw",
            ModelKind::Dr => "dr",
            ModelKind::TLearner => "t-learner",
        }
    }

    pub fn is_linear(self) -> bool {
        self != ModelKind::TLearner
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    /// Accepts the kind names plus `dipw` as an alias for `dipw-algo1`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dipw" | "dipw-algo1" => Ok(ModelKind::DipwAlgo1),
            "dipw-algo2" => Ok(ModelKind::DipwAlgo2),
            "ipw" => Ok(ModelKind::Ipw),
            "dr" => Ok(ModelKind::Dr),
            "t-learner" => Ok(ModelKind::TLearner),
            other => Err(Error::argument(format!(
                "unknown method '{other}' (expected dipw, dipw-algo1, dipw-algo2, ipw, dr or t-learner)"
            ))),
        }
    }
}

/// Which function of `x` multiplies `W` in the denoising regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BChoice {
    /// `μ(x) = E[Y | X = x]` from one pooled regression.
    PooledMu,
    /// `(1 − p)·μ̂₁(x) + p·μ̂₀(x)` from separate treated and control regressions.
    BStar,
}

/// Debug switch for degenerate configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// `dipw-algo2`: force α = (0, 0). `dr`: force μ̂₁ = μ̂₀ = 0.
    ZeroNuisance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub k_folds: usize,
    pub nuisance: ForestSpec,
    pub b_choice: BChoice,
    pub penalty: PenaltySpec,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k_folds: 5,
            nuisance: ForestSpec::default(),
            b_choice: BChoice::PooledMu,
            penalty: PenaltySpec::default(),
            seed: 0,
            ablation: Ablation::None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::argument("k_folds must be at least 2"));
        }
        let f = &self.nuisance;
        if f.n_trees == 0 || f.min_leaf == 0 || f.mtry == Some(0) || f.max_depth == Some(0) {
            return Err(Error::argument(
                "forest n_trees, min_leaf, mtry and max_depth must be at least 1",
            ));
        }
        self.penalty.validate()
    }
}

/// Seeds actually used by a fit, derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub cross_fit_folds: u64,
    pub nuisance: u64,
    pub lasso_cv: u64,
}

impl SeedRecord {
    pub fn derive(master: u64) -> Self {
        Self {
            master,
            cross_fit_folds: derive_seed(master, Stream::CrossFitFolds, 0),
            nuisance: derive_seed(master, Stream::Nuisance, 0),
            lasso_cv: derive_seed(master, Stream::LassoCv, 0),
        }
    }

    fn learner(&self, which: u64) -> u64 {
        derive_seed(self.nuisance, Stream::Nuisance, which)
    }
}

const POOLED: u64 = 0;
const TREATED: u64 = 1;
const CONTROL: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub variable: String,
    pub coefficient: f64,
}

/// `τ̂(x) = intercept + Σ_j coefficient_j · x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCate {
    pub intercept: f64,
    pub terms: Vec<Term>,
}

impl LinearCate {
    fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .zip(&self.terms)
                        .map(|(v, t)| v * t.coefficient)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn beta(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmForests {
    pub treated: RegressionForest,
    pub control: RegressionForest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub covariates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearCate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forests: Option<ArmForests>,
    /// Denoising coefficients (α₁, α₂) for the DIPW kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DenoisingDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_plan: Option<FoldPlan>,
    pub seeds: SeedRecord,
    pub config: EstimatorConfig,
}

impl CateModel {
    /// `(variable, coefficient)` rows, intercept first. Empty for the T-learner.
    pub fn coefficient_table(&self) -> Vec<(String, f64)> {
        match &self.linear {
            Some(lin) => std::iter::once(("Intercept".to_string(), lin.intercept))
                .chain(lin.terms.iter().map(|t| (t.variable.clone(), t.coefficient)))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: CateModel = serde_json::from_str(s)?;
        if m.format_version != crate::FORMAT_VERSION {
            return Err(Error::argument(format!(
                "unsupported model format_version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

fn nuisance_learner(cfg: &EstimatorConfig) -> ForestLearner {
    ForestLearner {
        spec: cfg.nuisance.clone(),
    }
}

fn arm_masks(d: &Dataset) -> (Vec<bool>, Vec<bool>) {
    let treated: Vec<bool> = d.t().iter().map(|&t| t == 1).collect();
    let control = treated.iter().map(|&t| !t).collect();
    (treated, control)
}

fn label_arm(e: Error, arm: &str) -> Error {
    match e {
        Error::Fold { fold, message } => Error::Fold {
            fold,
            message: format!("{arm} arm: {message}"),
        },
        other => other,
    }
}

/// Cross-fitted `(μ̂₁, μ̂₀)`: each fold's models train only on the treated
/// (resp. control) rows of its complement.
fn cross_fit_arms(d: &Dataset, cfg: &EstimatorConfig, plan: &FoldPlan, seeds: &SeedRecord) -> Result<(Vec<f64>, Vec<f64>)> {
    let learner = nuisance_learner(cfg);
    let (treated, control) = arm_masks(d);
    let mu1 = cross_fit_predict_where(d.x(), d.y(), plan, &learner, seeds.learner(TREATED), Some(&treated))
        .map_err(|e| label_arm(e, "treated"))?;
    let mu0 = cross_fit_predict_where(d.x(), d.y(), plan, &learner, seeds.learner(CONTROL), Some(&control))
        .map_err(|e| label_arm(e, "control"))?;
    Ok((mu1, mu0))
}

fn cross_fit_b(d: &Dataset, cfg: &EstimatorConfig, plan: &FoldPlan, seeds: &SeedRecord) -> Result<Vec<f64>> {
    match cfg.b_choice {
        BChoice::PooledMu => cross_fit_predict(d.x(), d.y(), plan, &nuisance_learner(cfg), seeds.learner(POOLED)),
        BChoice::BStar => {
            let (mu1, mu0) = cross_fit_arms(d, cfg, plan, seeds)?;
            (0..d.n())
                .map(|i| b_star(d.propensity()[i], mu1[i], mu0[i]))
                .collect()
        }
    }
}

fn check_fit_inputs(d: &Dataset, cfg: &EstimatorConfig) -> Result<()> {
    cfg.validate()?;
    if d.p() == 0 {
        return Err(Error::argument("dataset has no covariates"));
    }
    if d.n() < cfg.penalty.cv_folds || d.n() < cfg.k_folds {
        return Err(Error::argument(format!(
            "{} units are too few for {} cross-fitting and {} CV folds",
            d.n(),
            cfg.k_folds,
            cfg.penalty.cv_folds
        )));
    }
    let treated = d.t().iter().filter(|&&t| t == 1).count();
    if treated == 0 || treated == d.n() {
        return Err(Error::argument("the sample needs both treated and control units"));
    }
    Ok(())
}

fn linear_from(d: &Dataset, intercept: f64, beta: &[f64]) -> LinearCate {
    LinearCate {
        intercept,
        terms: d
            .column_names()
            .iter()
            .zip(beta)
            .map(|(name, &coefficient)| Term {
                variable: name.clone(),
                coefficient,
            })
            .collect(),
    }
}

fn residual_sd(pseudo: &[f64], fitted: &[f64]) -> f64 {
    let r: Vec<f64> = pseudo.iter().zip(fitted).map(|(a, b)| a - b).collect();
    sample_sd(&r)
}

struct LinearParts {
    kind: ModelKind,
    linear: LinearCate,
    alpha: Option<[f64; 2]>,
    lambda: f64,
    diagnostics: DenoisingDiagnostics,
    cv: Option<CvRecord>,
    fold_plan: Option<FoldPlan>,
}

fn assemble(d: &Dataset, cfg: &EstimatorConfig, seeds: SeedRecord, parts: LinearParts) -> CateModel {
    CateModel {
        format_version: crate::FORMAT_VERSION,
        kind: parts.kind,
        covariates: d.column_names().to_vec(),
        linear: Some(parts.linear),
        forests: None,
        alpha: parts.alpha,
        lambda: Some(parts.lambda),
        diagnostics: Some(parts.diagnostics),
        cv: parts.cv,
        fold_plan: parts.fold_plan,
        seeds,
        config: cfg.clone(),
    }
}

/// Joint Lasso over `(α₁, α₂, β)` with only `β` penalized.
pub fn fit_dipw_algo1(d: &Dataset, cfg: &EstimatorConfig) -> Result<CateModel> {
    check_fit_inputs(d, cfg)?;
    let seeds = SeedRecord::derive(cfg.seed);
    let plan = make_folds(d.n(), cfg.k_folds, seeds.cross_fit_folds)?;
    let b_hat = cross_fit_b(d, cfg, &plan, &seeds)?;
    let pseudo = denoise(d, &b_hat, &plan)?;
    let b = pseudo.b_hat.as_ref().expect("denoise records b_hat");
    let bw: Vec<f64> = b.iter().zip(&pseudo.w).map(|(b, w)| b * w).collect();

    let p = d.p();
    let extra = Array2::from_shape_fn((d.n(), 2), |(i, j)| if j == 0 { pseudo.w[i] } else { bw[i] });
    let design = concatenate(Axis(1), &[d.x(), extra.view()])
        .map_err(|e| Error::argument(e.to_string()))?;
    let mut mask = vec![true; p];
    mask.extend([false, false]);
    let fit = cv_lasso(design.view(), &pseudo.raw, &mask, &cfg.penalty, seeds.lasso_cv)?;

    let beta = &fit.coefficients[..p];
    let alpha = [fit.coefficients[p], fit.coefficients[p + 1]];
    let linear = linear_from(d, fit.intercept, beta);
    let tau_fit = linear.predict(d.x());
    let joint_denoised: Vec<f64> = (0..d.n())
        .map(|i| pseudo.raw[i] - alpha[0] * pseudo.w[i] - alpha[1] * bw[i])
        .collect();
    let diagnostics = DenoisingDiagnostics {
        r_squared: pseudo.r_squared,
        sigma_e_hat: residual_sd(&pseudo.raw, &tau_fit),
        sigma_u_hat: Some(residual_sd(&joint_denoised, &tau_fit)),
        lambda_raw: None,
        lambda_denoised: Some(fit.lambda),
    };
    Ok(assemble(
        d,
        cfg,
        seeds,
        LinearParts {
            kind: ModelKind::DipwAlgo1,
            linear,
            alpha: Some(alpha),
            lambda: fit.lambda,
            diagnostics,
            cv: fit.cv,
            fold_plan: Some(plan),
        },
    ))
}

/// OLS denoising of `Y·W` on `(W, B̂·W)`, then Lasso of the residual on `X`.
pub fn fit_dipw_algo2(d: &Dataset, cfg: &EstimatorConfig) -> Result<CateModel> {
    check_fit_inputs(d, cfg)?;
    let seeds = SeedRecord::derive(cfg.seed);
    let plan = make_folds(d.n(), cfg.k_folds, seeds.cross_fit_folds)?;
    let (raw, denoised, alpha, r_squared) = match cfg.ablation {
        Ablation::ZeroNuisance => {
            let raw = ipw_transform(d).raw;
            (raw.clone(), raw, [0.0, 0.0], None)
        }
        Ablation::None => {
            let b_hat = cross_fit_b(d, cfg, &plan, &seeds)?;
            let s = denoise(d, &b_hat, &plan)?;
            let denoised = s.denoised.expect("denoise fills the residual");
            (s.raw, denoised, s.alpha.expect("denoise fills alpha"), s.r_squared)
        }
    };
    let fit = cv_lasso(d.x(), &denoised, &vec![true; d.p()], &cfg.penalty, seeds.lasso_cv)?;
    let linear = linear_from(d, fit.intercept, &fit.coefficients);
    let tau_fit = linear.predict(d.x());
    let diagnostics = DenoisingDiagnostics {
        r_squared,
        sigma_e_hat: residual_sd(&raw, &tau_fit),
        sigma_u_hat: Some(residual_sd(&denoised, &tau_fit)),
        lambda_raw: None,
        lambda_denoised: Some(fit.lambda),
    };
    Ok(assemble(
        d,
        cfg,
        seeds,
        LinearParts {
            kind: ModelKind::DipwAlgo2,
            linear,
            alpha: Some(alpha),
            lambda: fit.lambda,
            diagnostics,
            cv: fit.cv,
            fold_plan: Some(plan),
        },
    ))
}

/// Lasso of the raw IPW pseudo-outcome `Y·W` on `X`.
pub fn fit_ipw(d: &Dataset, cfg: &EstimatorConfig) -> Result<CateModel> {
    check_fit_inputs(d, cfg)?;
    let seeds = SeedRecord::derive(cfg.seed);
    let raw = ipw_transform(d).raw;
    let fit = cv_lasso(d.x(), &raw, &vec![true; d.p()], &cfg.penalty, seeds.lasso_cv)?;
    let linear = linear_from(d, fit.intercept, &fit.coefficients);
    let tau_fit = linear.predict(d.x());
    let diagnostics = DenoisingDiagnostics {
        r_squared: None,
        sigma_e_hat: residual_sd(&raw, &tau_fit),
        sigma_u_hat: None,
        lambda_raw: Some(fit.lambda),
        lambda_denoised: None,
    };
    Ok(assemble(
        d,
        cfg,
        seeds,
        LinearParts {
            kind: ModelKind::Ipw,
            linear,
            alpha: None,
            lambda: fit.lambda,
            diagnostics,
            cv: fit.cv,
            fold_plan: None,
        },
    ))
}

/// Lasso of the cross-fitted AIPW pseudo-outcome on `X`, with the known propensity.
pub fn fit_dr(d: &Dataset, cfg: &EstimatorConfig) -> Result<CateModel> {
    check_fit_inputs(d, cfg)?;
    let seeds = SeedRecord::derive(cfg.seed);
    let plan = make_folds(d.n(), cfg.k_folds, seeds.cross_fit_folds)?;
    let (mu1, mu0) = match cfg.ablation {
        Ablation::ZeroNuisance => (vec![0.0; d.n()], vec![0.0; d.n()]),
        Ablation::None => cross_fit_arms(d, cfg, &plan, &seeds)?,
    };
    let pseudo = aipw_transform(d, &mu1, &mu0)?;
    let fit = cv_lasso(d.x(), &pseudo, &vec![true; d.p()], &cfg.penalty, seeds.lasso_cv)?;
    let linear = linear_from(d, fit.intercept, &fit.coefficients);
    let tau_fit = linear.predict(d.x());
    let raw = ipw_transform(d).raw;
    let diagnostics = DenoisingDiagnostics {
        r_squared: None,
        sigma_e_hat: residual_sd(&raw, &tau_fit),
        sigma_u_hat: Some(residual_sd(&pseudo, &tau_fit)),
        lambda_raw: None,
        lambda_denoised: Some(fit.lambda),
    };
    Ok(assemble(
        d,
        cfg,
        seeds,
        LinearParts {
            kind: ModelKind::Dr,
            linear,
            alpha: None,
            lambda: fit.lambda,
            diagnostics,
            cv: fit.cv,
            fold_plan: Some(plan),
        },
    ))
}

/// One forest per arm; `τ̂(x) = μ̂₁(x) − μ̂₀(x)`.
pub fn fit_t_learner(d: &Dataset, cfg: &EstimatorConfig) -> Result<CateModel> {
    cfg.validate()?;
    let seeds = SeedRecord::derive(cfg.seed);
    let fit_arm = |arm: u8, which: u64, label: &str| -> Result<RegressionForest> {
        let rows: Vec<usize> = (0..d.n()).filter(|&i| d.t()[i] == arm).collect();
        let need = 2 * cfg.nuisance.min_leaf;
        if rows.len() < need.max(1) {
            return Err(Error::argument(format!(
                "{label} group has {} units; the forest needs at least {need}",
                rows.len()
            )));
        }
        let x = d.x().select(Axis(0), &rows);
        let y: Vec<f64> = rows.iter().map(|&i| d.y()[i]).collect();
        let spec = ForestSpec {
            seed: seeds.learner(which),
            ..cfg.nuisance.clone()
        };
        fit_forest(x.view(), &y, &spec)
    };
    let treated = fit_arm(1, TREATED, "treated")?;
    let control = fit_arm(0, CONTROL, "control")?;
    Ok(CateModel {
        format_version: crate::FORMAT_VERSION,
        kind: ModelKind::TLearner,
        covariates: d.column_names().to_vec(),
        linear: None,
        forests: Some(ArmForests { treated, control }),
        alpha: None,
        lambda: None,
        diagnostics: None,
        cv: None,
        fold_plan: None,
        seeds,
        config: cfg.clone(),
    })
}

pub fn fit(kind: ModelKind, d: &Dataset, cfg: &EstimatorConfig) -> Result<CateModel> {
    match kind {
        ModelKind::DipwAlgo1 => fit_dipw_algo1(d, cfg),
        ModelKind::DipwAlgo2 => fit_dipw_algo2(d, cfg),
        ModelKind::Ipw => fit_ipw(d, cfg),
        ModelKind::Dr => fit_dr(d, cfg),
        ModelKind::TLearner => fit_t_learner(d, cfg),
    }
}

/// Per-row `τ̂(x)`. Columns must be in the training covariate order.
pub fn predict_cate(m: &CateModel, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != m.covariates.len() {
        return Err(Error::argument(format!(
            "model was trained on {} covariates, got {}",
            m.covariates.len(),
            x.ncols()
        )));
    }
    match (&m.linear, &m.forests) {
        (Some(lin), _) => Ok(lin.predict(x)),
        (None, Some(f)) => {
            let mu1 = f.treated.predict(x)?;
            let mu0 = f.control.predict(x)?;
            Ok(mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect())
        }
        (None, None) => Err(Error::argument("model carries neither coefficients nor forests")),
    }
}

/// [`predict_cate`] on the columns of `d` named like the training covariates.
/// Extra columns are ignored; order does not matter.
pub fn predict_dataset(m: &CateModel, d: &Dataset) -> Result<Vec<f64>> {
    if d.column_names() == m.covariates.as_slice() {
        return predict_cate(m, d.x());
    }
    let mut idx = Vec::with_capacity(m.covariates.len());
    let mut missing = Vec::new();
    for c in &m.covariates {
        match d.column_names().iter().position(|n| n == c) {
            Some(j) => idx.push(j),
            None => missing.push(c.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "covariates missing from data: {}",
            missing.join(", ")
        )));
    }
    predict_cate(m, d.x().select(Axis(1), &idx).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn linear_model(intercept: f64, beta: &[f64]) -> CateModel {
        let names: Vec<String> = (0..beta.len()).map(|j| format!("x{j}")).collect();
        CateModel {
            format_version: crate::FORMAT_VERSION,
            kind: ModelKind::Ipw,
            covariates: names.clone(),
            linear: Some(LinearCate {
                intercept,
                terms: names
                    .into_iter()
                    .zip(beta)
                    .map(|(variable, &coefficient)| Term { variable, coefficient })
                    .collect(),
            }),
            forests: None,
            alpha: None,
            lambda: None,
            diagnostics: None,
            cv: None,
            fold_plan: None,
            seeds: SeedRecord::derive(0),
            config: EstimatorConfig::default(),
        }
    }

    #[test]
    fn zero_row_predicts_intercept() {
        let m = linear_model(0.75, &[1.0, -2.0]);
        assert_eq!(predict_cate(&m, array![[0.0, 0.0]].view()).unwrap(), vec![0.75]);
    }

    #[test]
    fn single_coefficient_linearity() {
        let m = linear_model(0.5, &[0.0, 2.0, 0.0]);
        let p = predict_cate(&m, array![[9.0, 1.5, -4.0], [1.0, -1.0, 3.0]].view()).unwrap();
        assert_eq!(p, vec![0.5 + 3.0, 0.5 - 2.0]);
        assert!(predict_cate(&m, array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn coefficient_table_starts_with_intercept() {
        let m = linear_model(0.0395, &[-0.0058, 0.0025]);
        let t = m.coefficient_table();
        assert_eq!(t[0], ("Intercept".to_string(), 0.0395));
        assert_eq!(t[1].0, "x0");
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn model_json_round_trip() {
        let m = linear_model(1.0, &[2.0]);
        let back = CateModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("dipw".parse::<ModelKind>().unwrap(), ModelKind::DipwAlgo1);
        assert_eq!("t-learner".parse::<ModelKind>().unwrap(), ModelKind::TLearner);
        assert!("x-learner".parse::<ModelKind>().is_err());
    }
}
