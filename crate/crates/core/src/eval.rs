//! Out-of-sample evaluation: RMSE against a known τ, uplift curves, AUUC,
//! bootstrap bands, subgroup ATEs and budget gains.
//!
//! The uplift value at `k` is the top-k difference in means scaled by `k`.
//! Units are ranked by score descending with ties broken by ascending row
//! index. When the top-k holds no treated or no control unit, `U(k) = 0`.
//! AUUC is the plain sum `Σ_k U(k)` over every `k = 1..n`.

use std::io::Write;

use ndarray::ArrayView2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{predict_dataset, CateModel, ModelKind};
use crate::linalg::{mean, quantile_sorted, sample_sd};
use crate::rng::{derive_seed, rng_from_seed, Stream};
use crate::transform::DenoisingDiagnostics;

pub const TIE_BREAK: &str = "score-descending-then-row-index-ascending";
pub const DEFAULT_BOOTSTRAP: usize = 200;
pub const DEFAULT_LEVEL: f64 = 0.95;
const MAX_REDRAWS: usize = 1000;

pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::argument(format!(
            "length mismatch: {} estimates, {} true values",
            estimate.len(),
            truth.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::argument("RMSE of an empty sample"));
    }
    let ss: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / estimate.len() as f64).sqrt())
}

pub fn rmse_cate(m: &CateModel, x_test: ArrayView2<f64>, tau_true: &[f64]) -> Result<f64> {
    let pred = crate::estimators::predict_cate(m, x_test)?;
    rmse(&pred, tau_true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub level: f64,
    pub n_boot: usize,
    pub seed: u64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftCurve {
    /// `u[k-1] = U(k)`.
    pub u: Vec<f64>,
    pub auuc: f64,
    pub baseline: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    pub tie_break: String,
}

impl UpliftCurve {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `k,u,baseline[,lower,upper]` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["k", "u", "baseline"];
        if self.band.is_some() {
            header.extend(["lower", "upper"]);
        }
        out.write_record(&header)?;
        for k in 0..self.u.len() {
            let mut row = vec![
                (k + 1).to_string(),
                self.u[k].to_string(),
                self.baseline[k].to_string(),
            ];
            if let Some(b) = &self.band {
                row.push(b.lower[k].to_string());
                row.push(b.upper[k].to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_inputs(scores: &[f64], y: &[f64], t: &[u8]) -> Result<()> {
    if scores.len() != y.len() || y.len() != t.len() {
        return Err(Error::argument(format!(
            "length mismatch: {} scores, {} outcomes, {} treatments",
            scores.len(),
            y.len(),
            t.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::argument("uplift curve of an empty sample"));
    }
    let bad: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_finite())
        .map(|(i, _)| i + 1)
        .collect();
    if !bad.is_empty() {
        return Err(Error::validation("non-finite score", bad));
    }
    let bad: Vec<usize> = t
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1)
        .map(|(i, _)| i + 1)
        .collect();
    if !bad.is_empty() {
        return Err(Error::validation("treatment must be 0 or 1", bad));
    }
    Ok(())
}

/// Row indices ranked by score descending, ties by index ascending.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// `U(k)` for every `k` along a fixed ranking. `None` if one arm is absent overall.
fn curve_along(order: &[usize], y: &[f64], t: &[u8]) -> Option<Vec<f64>> {
    let (mut s1, mut s0, mut n1, mut n0) = (0.0, 0.0, 0usize, 0usize);
    let mut u = Vec::with_capacity(order.len());
    for (k, &i) in order.iter().enumerate() {
        if t[i] == 1 {
            s1 += y[i];
            n1 += 1;
        } else {
            s0 += y[i];
            n0 += 1;
        }
        u.push(if n1 == 0 || n0 == 0 {
            0.0
        } else {
            (s1 / n1 as f64 - s0 / n0 as f64) * (k + 1) as f64
        });
    }
    (n1 > 0 && n0 > 0).then_some(u)
}

pub fn uplift_curve(scores: &[f64], y: &[f64], t: &[u8]) -> Result<UpliftCurve> {
    check_inputs(scores, y, t)?;
    let u = curve_along(&ranking(scores), y, t)
        .ok_or_else(|| Error::argument("uplift curve needs both treated and control units"))?;
    let n = u.len();
    let ate = u[n - 1] / n as f64;
    let baseline = (1..=n).map(|k| k as f64 * ate).collect();
    let auuc = u.iter().sum();
    Ok(UpliftCurve {
        u,
        auuc,
        baseline,
        band: None,
        tie_break: TIE_BREAK.to_string(),
    })
}

/// Percentile bootstrap band for `U(k)`. Each resample draws `n` triples with
/// replacement, re-ranks them and recomputes the curve on the same `k` grid.
/// A resample with a single arm is redrawn from the same stream.
pub fn uplift_band(
    scores: &[f64],
    y: &[f64],
    t: &[u8],
    level: f64,
    n_boot: usize,
    seed: u64,
) -> Result<Band> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::argument("band level must lie in (0, 1)"));
    }
    if n_boot < 2 {
        return Err(Error::argument("n_boot must be at least 2"));
    }
    check_inputs(scores, y, t)?;
    let n = scores.len();
    let curves: Vec<Vec<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, Stream::Bootstrap, b as u64));
            for _ in 0..MAX_REDRAWS {
                let draw: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let s: Vec<f64> = draw.iter().map(|&i| scores[i]).collect();
                let yy: Vec<f64> = draw.iter().map(|&i| y[i]).collect();
                let tt: Vec<u8> = draw.iter().map(|&i| t[i]).collect();
                if let Some(u) = curve_along(&ranking(&s), &yy, &tt) {
                    return Ok(u);
                }
            }
            Err(Error::Degenerate(format!(
                "bootstrap resample {b} had a single arm after {MAX_REDRAWS} redraws"
            )))
        })
        .collect::<Result<_>>()?;
    let alpha = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut column = vec![0.0; n_boot];
    for k in 0..n {
        for (c, curve) in column.iter_mut().zip(&curves) {
            *c = curve[k];
        }
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, alpha));
        upper.push(quantile_sorted(&column, 1.0 - alpha));
    }
    Ok(Band {
        level,
        n_boot,
        seed,
        lower,
        upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuucRow {
    pub name: String,
    pub auuc: f64,
}

/// AUUC of each named model on one test set, sorted descending; equal AUUCs
/// are ordered by name.
pub fn auuc_table(models: &[(String, &CateModel)], test: &Dataset) -> Result<Vec<AuucRow>> {
    let mut rows = models
        .iter()
        .map(|(name, m)| {
            let scores = predict_dataset(m, test)?;
            Ok(AuucRow {
                name: name.clone(),
                auuc: uplift_curve(&scores, test.y(), test.t())?.auuc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.auuc.total_cmp(&a.auuc).then_with(|| a.name.cmp(&b.name)));
    Ok(rows)
}

/// How a grouping variable is cut into bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binning {
    /// Interior cut points `c₁ < … < c_m`; bins are `(−∞, c₁], (c₁, c₂], …, (c_m, ∞)`.
    Edges(Vec<f64>),
    /// One bin per distinct value.
    Levels,
    /// `k` bins cut at the empirical `j/k` quantiles.
    Quantiles(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupBin {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub ate: f64,
    pub se: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub variable: String,
    pub bins: Vec<SubgroupBin>,
}

impl SubgroupReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["variable", "bin", "ate", "se", "n_treated", "n_control"])?;
        for b in &self.bins {
            out.write_record([
                self.variable.clone(),
                b.label.clone(),
                b.ate.to_string(),
                b.se.to_string(),
                b.n_treated.to_string(),
                b.n_control.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn fmt_edge(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

pub fn subgroup_ate(test: &Dataset, variable: &str, binning: &Binning) -> Result<SubgroupReport> {
    let col = test
        .column(variable)
        .ok_or_else(|| Error::Schema(format!("variable '{variable}' not in data")))?;
    let values: Vec<f64> = col.to_vec();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);

    // (label, lower, upper, membership)
    let mut bins: Vec<(String, Option<f64>, Option<f64>, Vec<usize>)> = Vec::new();
    match binning {
        Binning::Levels => {
            let mut levels = sorted.clone();
            levels.dedup();
            for lv in levels {
                let rows = (0..values.len()).filter(|&i| values[i] == lv).collect();
                bins.push((lv.to_string(), Some(lv), Some(lv), rows));
            }
        }
        Binning::Edges(_) | Binning::Quantiles(_) => {
            let cuts: Vec<f64> = match binning {
                Binning::Edges(e) => {
                    if e.iter().any(|v| !v.is_finite()) || e.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::argument("bin edges must be finite and strictly increasing"));
                    }
                    e.clone()
                }
                Binning::Quantiles(k) => {
                    if *k < 1 {
                        return Err(Error::argument("quantile binning needs at least one bin"));
                    }
                    let mut c: Vec<f64> = (1..*k)
                        .map(|j| quantile_sorted(&sorted, j as f64 / *k as f64))
                        .collect();
                    c.dedup();
                    c
                }
                Binning::Levels => unreachable!(),
            };
            let mut bounds = vec![f64::NEG_INFINITY];
            bounds.extend(&cuts);
            bounds.push(f64::INFINITY);
            for w in bounds.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let rows = (0..values.len())
                    .filter(|&i| values[i] > lo && values[i] <= hi)
                    .collect();
                let label = format!("({}, {}]", fmt_edge(lo), fmt_edge(hi));
                bins.push((label, lo.is_finite().then_some(lo), hi.is_finite().then_some(hi), rows));
            }
        }
    }

    let y = test.y();
    let t = test.t();
    let bins = bins
        .into_iter()
        .map(|(label, lower, upper, rows)| {
            let y1: Vec<f64> = rows.iter().filter(|&&i| t[i] == 1).map(|&i| y[i]).collect();
            let y0: Vec<f64> = rows.iter().filter(|&&i| t[i] == 0).map(|&i| y[i]).collect();
            if y1.is_empty() || y0.is_empty() {
                return Err(Error::argument(format!(
                    "bin {label} of '{variable}' has {} treated and {} control units",
                    y1.len(),
                    y0.len()
                )));
            }
            let v1 = sample_sd(&y1).powi(2) / y1.len() as f64;
            let v0 = sample_sd(&y0).powi(2) / y0.len() as f64;
            Ok(SubgroupBin {
                label,
                lower,
                upper,
                ate: mean(&y1) - mean(&y0),
                se: (v1 + v0).sqrt(),
                n_treated: y1.len(),
                n_control: y0.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubgroupReport {
        variable: variable.to_string(),
        bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetGain {
    pub k: usize,
    pub treated_gain: f64,
    pub random_gain: f64,
    /// `None` when the random-assignment gain is zero.
    pub improvement_ratio: Option<f64>,
}

pub fn budget_gain(curve: &UpliftCurve, k: usize) -> Result<BudgetGain> {
    let n = curve.len();
    if k < 1 || k > n {
        return Err(Error::argument(format!("budget {k} outside 1..={n}")));
    }
    let treated_gain = curve.u[k - 1];
    let random_gain = (k as f64 / n as f64) * curve.u[n - 1];
    Ok(BudgetGain {
        k,
        treated_gain,
        random_gain,
        improvement_ratio: (random_gain != 0.0).then(|| treated_gain / random_gain),
    })
}

pub fn diagnostics_report(m: &CateModel) -> Result<DenoisingDiagnostics> {
    if m.kind == ModelKind::TLearner {
        return Err(Error::Unsupported(
            "t-learner models carry no pseudo-outcome diagnostics".into(),
        ));
    }
    m.diagnostics
        .clone()
        .ok_or_else(|| Error::Unsupported(format!("{} model has no recorded diagnostics", m.kind)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_unit_hand_case() {
        let c = uplift_curve(&[4.0, 3.0, 2.0, 1.0], &[5.0, 1.0, 3.0, 2.0], &[1, 0, 1, 0]).unwrap();
        assert_eq!(c.u, vec![0.0, 8.0, 9.0, 10.0]);
        assert_eq!(c.auuc, 27.0);
        assert_eq!(c.baseline, vec![2.5, 5.0, 7.5, 10.0]);
    }

    #[test]
    fn ties_break_by_index() {
        let c = uplift_curve(&[1.0; 4], &[5.0, 1.0, 3.0, 2.0], &[1, 0, 1, 0]).unwrap();
        assert_eq!(c.u, vec![0.0, 8.0, 9.0, 10.0]);
    }

    #[test]
    fn single_arm_is_an_error() {
        assert!(uplift_curve(&[1.0, 2.0], &[1.0, 2.0], &[1, 1]).is_err());
        assert!(uplift_curve(&[1.0, 2.0], &[1.0, 2.0], &[0, 0]).is_err());
        assert!(uplift_curve(&[1.0], &[1.0, 2.0], &[0, 1]).is_err());
    }

    #[test]
    fn full_budget_ratio_is_one() {
        let c = uplift_curve(&[0.3, 0.1, 0.7, 0.2], &[1.3, 0.2, 2.9, 0.4], &[1, 0, 0, 1]).unwrap();
        let g = budget_gain(&c, 4).unwrap();
        assert_eq!(g.improvement_ratio, Some(1.0));
        assert!(budget_gain(&c, 0).is_err());
        assert!(budget_gain(&c, 5).is_err());
    }

    #[test]
    fn band_contains_point_curve_on_hand_case() {
        let (s, y, t) = ([4.0, 3.0, 2.0, 1.0], [5.0, 1.0, 3.0, 2.0], [1u8, 0, 1, 0]);
        let c = uplift_curve(&s, &y, &t).unwrap();
        let b = uplift_band(&s, &y, &t, 0.95, 400, 7).unwrap();
        for k in 0..4 {
            assert!(b.lower[k] <= c.u[k] && c.u[k] <= b.upper[k], "k={}", k + 1);
        }
        assert_eq!(b, uplift_band(&s, &y, &t, 0.95, 400, 7).unwrap());
    }

    #[test]
    fn band_argument_checks() {
        let (s, y, t) = ([1.0, 2.0], [1.0, 2.0], [1u8, 0]);
        assert!(uplift_band(&s, &y, &t, 1.0, 10, 0).is_err());
        assert!(uplift_band(&s, &y, &t, 0.9, 1, 0).is_err());
    }

    #[test]
    fn rmse_offsets() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let c = uplift_curve(&[4.0, 3.0, 2.0, 1.0], &[5.0, 1.0, 3.0, 2.0], &[1, 0, 1, 0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("k,u,baseline\n1,0,2.5\n2,8,5\n"));
    }
}
