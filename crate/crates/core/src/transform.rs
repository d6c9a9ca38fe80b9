//! Pseudo-outcome algebra.
//!
//! With a known propensity `p`, `W = (T − p)/(p(1 − p))` makes `E[Y·W | X] = τ(X)`.
//! `Y·W` is unbiased but noisy. Since `E[B(X)·W·τ(X)] = 0` for any `B`, the
//! projection of `Y·W` on `(W, B(X)·W)` can be removed without touching the
//! conditional mean, and `B*(x) = (1 − p)μ₁(x) + p·μ₀(x)` minimizes
//! `E[(Y·W − B·W)²]`. Subtracting `B*·W` reproduces the AIPW pseudo-outcome.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::linalg::{dot, ols};

/// Pivot threshold below which the denoising Gram matrix counts as singular.
const GRAM_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoOutcomeSet {
    /// IPW weight per unit.
    pub w: Vec<f64>,
    /// `y · w` per unit.
    pub raw: Vec<f64>,
    /// `raw − α₁·w − α₂·b_hat·w`, present after denoising.
    pub denoised: Option<Vec<f64>>,
    /// Out-of-fold `B̂(x)` after clipping to the outcome range.
    pub b_hat: Option<Vec<f64>>,
    pub alpha: Option<[f64; 2]>,
    pub fold_plan: Option<FoldPlan>,
    /// Uncentered R² of the denoising regression, in [0, 1].
    pub r_squared: Option<f64>,
}

/// How much noise denoising removed, and the penalties the fits chose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoisingDiagnostics {
    pub r_squared: Option<f64>,
    /// Sample sd of `raw − τ̂(X)`.
    pub sigma_e_hat: f64,
    /// Sample sd of the denoised pseudo-outcome minus `τ̂(X)`.
    pub sigma_u_hat: Option<f64>,
    pub lambda_raw: Option<f64>,
    pub lambda_denoised: Option<f64>,
}

pub fn ipw_weight(t: u8, p: f64) -> Result<f64> {
    if t > 1 {
        return Err(Error::argument(format!("treatment must be 0 or 1, got {t}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::argument(format!("propensity must lie in (0, 1), got {p}")));
    }
    Ok(if t == 1 { 1.0 / p } else { -1.0 / (1.0 - p) })
}

/// IPW weights for every unit of a validated dataset.
pub fn ipw_weights(d: &Dataset) -> Vec<f64> {
    d.t()
        .iter()
        .zip(d.propensity())
        .map(|(&t, &p)| ipw_weight(t, p).expect("dataset invariants guarantee a valid weight"))
        .collect()
}

pub fn ipw_transform(d: &Dataset) -> PseudoOutcomeSet {
    let w = ipw_weights(d);
    let raw = d.y().iter().zip(&w).map(|(y, w)| y * w).collect();
    PseudoOutcomeSet {
        w,
        raw,
        denoised: None,
        b_hat: None,
        alpha: None,
        fold_plan: None,
        r_squared: None,
    }
}

/// Variance-optimal denoising function `B*(x) = (1 − p)·μ₁ + p·μ₀`.
pub fn b_star(p: f64, mu1: f64, mu0: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::argument(format!("propensity must lie in (0, 1), got {p}")));
    }
    Ok((1.0 - p) * mu1 + p * mu0)
}

/// Least-squares projection of `y·w` on `(w, b̂·w)` without intercept.
///
/// `b_hat` is clipped to `[min(y), max(y)]` first. Fails when the two
/// regressors are numerically collinear (e.g. constant `b_hat`).
pub fn denoise(d: &Dataset, b_hat: &[f64], plan: &FoldPlan) -> Result<PseudoOutcomeSet> {
    if b_hat.len() != d.n() {
        return Err(Error::argument(format!(
            "b_hat has {} entries for {} units",
            b_hat.len(),
            d.n()
        )));
    }
    if plan.n() != d.n() {
        return Err(Error::argument("fold plan does not cover the dataset"));
    }
    let base = ipw_transform(d);
    let (lo, hi) = d
        .y()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let b: Vec<f64> = b_hat.iter().map(|v| v.clamp(lo, hi)).collect();
    let bw: Vec<f64> = b.iter().zip(&base.w).map(|(b, w)| b * w).collect();

    // A zero pseudo-outcome has nothing to project; α = 0 and R² = 0.
    if base.raw.iter().all(|&v| v == 0.0) {
        return Ok(PseudoOutcomeSet {
            denoised: Some(vec![0.0; d.n()]),
            b_hat: Some(b),
            alpha: Some([0.0, 0.0]),
            fold_plan: Some(plan.clone()),
            r_squared: Some(0.0),
            ..base
        });
    }
    let alpha = ols(&[&base.w, &bw], &base.raw, GRAM_REL_TOL).ok_or_else(|| {
        Error::Degenerate(
            "denoising regressors W and B̂(X)·W are collinear (is B̂ constant?); choose a different B".into(),
        )
    })?;
    let denoised: Vec<f64> = (0..d.n())
        .map(|i| base.raw[i] - alpha[0] * base.w[i] - alpha[1] * bw[i])
        .collect();
    let r_squared = r_squared_uncentered(&base.raw, &denoised);

    Ok(PseudoOutcomeSet {
        denoised: Some(denoised),
        b_hat: Some(b),
        alpha: Some([alpha[0], alpha[1]]),
        fold_plan: Some(plan.clone()),
        r_squared: Some(r_squared),
        ..base
    })
}

/// `1 − SSR/SST` with `SST = Σ y²`, the total sum of squares that matches a
/// regression without intercept. Zero when `SST = 0`.
pub fn r_squared_uncentered(y: &[f64], residual: &[f64]) -> f64 {
    let sst = dot(y, y);
    if sst == 0.0 {
        return 0.0;
    }
    (1.0 - dot(residual, residual) / sst).clamp(0.0, 1.0)
}

/// AIPW pseudo-outcome of a single unit:
/// `T(Y − μ₁)/p − (1 − T)(Y − μ₀)/(1 − p) + μ₁ − μ₀`.
pub fn aipw_value(y: f64, t: u8, p: f64, mu1: f64, mu0: f64) -> f64 {
    if t == 1 {
        (y - mu1) / p + mu1 - mu0
    } else {
        -(y - mu0) / (1.0 - p) + mu1 - mu0
    }
}

pub fn aipw_transform(d: &Dataset, mu1_hat: &[f64], mu0_hat: &[f64]) -> Result<Vec<f64>> {
    if mu1_hat.len() != d.n() || mu0_hat.len() != d.n() {
        return Err(Error::argument("outcome-model predictions must have one entry per unit"));
    }
    Ok((0..d.n())
        .map(|i| aipw_value(d.y()[i], d.t()[i], d.propensity()[i], mu1_hat[i], mu0_hat[i]))
        .collect())
}

/// Splits `y·w` into `(Y(1) − Y(0))·T·W` (signal) and `Y(0)·W` (noise).
/// Needs the potential outcomes, so only simulated data qualifies.
pub fn noise_decomposition_check(
    d: &Dataset,
    potential: Option<(&[f64], &[f64])>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (y0, y1) = potential.ok_or_else(|| {
        Error::Mode("noise decomposition needs potential outcomes (simulation data only)".into())
    })?;
    if y0.len() != d.n() || y1.len() != d.n() {
        return Err(Error::argument("potential outcomes must have one entry per unit"));
    }
    let w = ipw_weights(d);
    let signal = (0..d.n())
        .map(|i| (y1[i] - y0[i]) * d.t()[i] as f64 * w[i])
        .collect();
    let noise = (0..d.n()).map(|i| y0[i] * w[i]).collect();
    Ok((signal, noise))
}

/// Least-squares residual of `target` on `regressors` (no intercept added).
pub fn residualize(target: &[f64], regressors: &[&[f64]]) -> Result<Vec<f64>> {
    let coef = ols(regressors, target, GRAM_REL_TOL)
        .ok_or_else(|| Error::Degenerate("residualizing regressors are collinear".into()))?;
    let mut r = target.to_vec();
    for (c, col) in coef.iter().zip(regressors) {
        for (ri, xi) in r.iter_mut().zip(col.iter()) {
            *ri -= c * xi;
        }
    }
    Ok(r)
}

/// Column-wise [`residualize`] of a matrix.
pub fn residualize_columns(x: ArrayView2<f64>, regressors: &[&[f64]]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(x.dim());
    for (j, col) in x.columns().into_iter().enumerate() {
        let r = residualize(&col.to_vec(), regressors)?;
        for (i, v) in r.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}
