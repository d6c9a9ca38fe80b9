//! Benchmark data-generating process and the Monte Carlo replication harness.
//!
//! Covariates: `x1..x30 ~ U(0, 1)`, `x31..x50 ~ N(0, 1)`, all independent.
//!
//! ```text
//! b(x) = c·{ sin(π x1 x2) + 2(x3 − 0.5)² + x4 + 0.5 x5
//!            + 2 log(1 + exp(x31 + x32 + x33))
//!            + max(0, x31 + x32 + x33) + max(0, x34 + x35) }
//! τ(x) = 0.5(x1 + x2) + x4 + x32/3 + 2 x40
//! Y    = b(X) + T τ(X) + ε,   T ~ Bernoulli(p),   ε ~ N(0, σ²)
//! ```
//!
//! with `c = b_multiplier` (default 5) and `σ = noise_sd` (default 1).
//!
//! Each row consumes, in order: 30 uniforms, 20 normals, one uniform for `T`,
//! one normal for `ε`. Normals come from `rand_distr::StandardNormal`
//! (ziggurat). Train and test samples use `derive_seed(seed, SimTrain, 0)` and
//! `derive_seed(seed, SimTest, 0)`. Replicate `r` of a study uses
//! `derive_seed(master, Replicate, r)` as its DGP seed and
//! `derive_seed(that, Estimator, 0)` as its estimator seed, so results do not
//! depend on how replicates are scheduled across threads.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit, predict_dataset, EstimatorConfig, ModelKind};
use crate::eval::{rmse, uplift_curve};
use crate::linalg::quantile_sorted;
use crate::rng::{derive_seed, rng_from_seed, Rng, Stream};

pub const N_UNIFORM: usize = 30;
pub const N_NORMAL: usize = 20;
pub const N_COVARIATES: usize = N_UNIFORM + N_NORMAL;
pub const DEFAULT_REPS: usize = 50;

pub type Method = ModelKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub p_treat: f64,
    pub b_multiplier: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_test: 10_000,
            p_treat: 0.5,
            b_multiplier: 5.0,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 1 || self.n_test < 1 {
            return Err(Error::argument("n_train and n_test must be at least 1"));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(Error::argument(format!(
                "p_treat must lie in (0, 1), got {}",
                self.p_treat
            )));
        }
        if !self.b_multiplier.is_finite() {
            return Err(Error::argument("b_multiplier must be finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::argument("noise_sd must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    /// Carries the true `τ(Xᵢ)` as its tau column.
    pub dataset: Dataset,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl SimulatedSample {
    pub fn tau_true(&self) -> &[f64] {
        self.dataset.tau().expect("simulated samples carry tau")
    }
}

fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Baseline `b(x)` for a 50-covariate row (`x[0]` is `x1`).
pub fn baseline(x: &[f64], multiplier: f64) -> f64 {
    let s = x[30] + x[31] + x[32];
    multiplier
        * ((PI * x[0] * x[1]).sin()
            + 2.0 * (x[2] - 0.5).powi(2)
            + x[3]
            + 0.5 * x[4]
            + 2.0 * softplus(s)
            + s.max(0.0)
            + (x[33] + x[34]).max(0.0))
}

/// Treatment effect `τ(x)` for a 50-covariate row.
pub fn effect(x: &[f64]) -> f64 {
    0.5 * (x[0] + x[1]) + x[3] + x[31] / 3.0 + 2.0 * x[39]
}

pub fn covariate_names() -> Vec<String> {
    (1..=N_COVARIATES).map(|j| format!("x{j}")).collect()
}

fn draw(spec: &DgpSpec, n: usize, rng: &mut Rng, null: bool) -> Result<SimulatedSample> {
    let mut x = Array2::zeros((n, N_COVARIATES));
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    let mut row = [0.0; N_COVARIATES];
    for i in 0..n {
        for v in row.iter_mut().take(N_UNIFORM) {
            *v = rng.random::<f64>();
        }
        for v in row.iter_mut().skip(N_UNIFORM) {
            *v = rng.sample(StandardNormal);
        }
        let treated = rng.random::<f64>() < spec.p_treat;
        let eps: f64 = rng.sample(StandardNormal);
        let b = baseline(&row, spec.b_multiplier);
        let te = if null { 0.0 } else { effect(&row) };
        let base = b + spec.noise_sd * eps;
        let (o0, o1) = (base, base + te);
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
        t.push(treated as u8);
        y.push(if treated { o1 } else { o0 });
        y0.push(o0);
        y1.push(o1);
        tau.push(te);
    }
    let dataset = Dataset::new(y, t, vec![spec.p_treat; n], x, covariate_names(), 0.0)?.with_tau(tau)?;
    Ok(SimulatedSample { dataset, y0, y1 })
}

fn generate_impl(spec: &DgpSpec, null: bool) -> Result<(SimulatedSample, SimulatedSample)> {
    spec.validate()?;
    let mut train_rng = rng_from_seed(derive_seed(spec.seed, Stream::SimTrain, 0));
    let mut test_rng = rng_from_seed(derive_seed(spec.seed, Stream::SimTest, 0));
    Ok((
        draw(spec, spec.n_train, &mut train_rng, null)?,
        draw(spec, spec.n_test, &mut test_rng, null)?,
    ))
}

/// Independent train and test samples from the benchmark process.
pub fn generate(spec: &DgpSpec) -> Result<(SimulatedSample, SimulatedSample)> {
    generate_impl(spec, false)
}

/// As [`generate`] with `τ ≡ 0`; draws are otherwise identical.
pub fn null_dgp(spec: &DgpSpec) -> Result<(SimulatedSample, SimulatedSample)> {
    generate_impl(spec, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub auuc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_e_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_u_hat: Option<f64>,
}

impl Metrics {
    fn named(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![("rmse", self.rmse), ("auuc", self.auuc)];
        let opt = [
            ("lambda", self.lambda),
            ("r_squared", self.r_squared),
            ("sigma_e_hat", self.sigma_e_hat),
            ("sigma_u_hat", self.sigma_u_hat),
        ];
        v.extend(opt.iter().filter_map(|(k, x)| x.map(|x| (*k, x))));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub replicate: usize,
    pub dgp_seed: u64,
    pub estimator_seed: u64,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&s, 0.25);
        let q3 = quantile_sorted(&s, 0.75);
        Some(Stats {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile_sorted(&s, 0.5),
            q1,
            q3,
            iqr: q3 - q1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub succeeded: usize,
    pub failed: usize,
    pub metrics: BTreeMap<String, Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub format_version: u32,
    pub spec: DgpSpec,
    pub methods: Vec<Method>,
    pub n_reps: usize,
    pub master_seed: u64,
    pub estimator: EstimatorConfig,
    pub replicates: Vec<Replicate>,
    pub summary: Vec<MethodSummary>,
}

impl ReplicationReport {
    /// Per-replicate values of one metric for one method; failed cells are skipped.
    pub fn values(&self, method: Method, metric: &str) -> Vec<f64> {
        self.replicates
            .iter()
            .filter_map(|r| r.cells.iter().find(|c| c.method == method))
            .filter_map(|c| c.metrics.as_ref())
            .filter_map(|m| m.named().into_iter().find(|(k, _)| *k == metric).map(|(_, v)| v))
            .collect()
    }

    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Tidy rows `replicate,method,metric,value`. A failed cell contributes
    /// one row with metric `error` and an empty value.
    pub fn write_tidy_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["replicate", "method", "metric", "value"])?;
        for r in &self.replicates {
            for c in &r.cells {
                let rep = r.replicate.to_string();
                match &c.metrics {
                    Some(m) => {
                        for (k, v) in m.named() {
                            out.write_record([rep.as_str(), c.method.name(), k, &v.to_string()])?;
                        }
                    }
                    None => out.write_record([rep.as_str(), c.method.name(), "error", ""])?,
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn evaluate_cell(method: Method, train: &Dataset, test: &SimulatedSample, cfg: &EstimatorConfig) -> Result<Metrics> {
    let model = fit(method, train, cfg)?;
    let pred = predict_dataset(&model, &test.dataset)?;
    let curve = uplift_curve(&pred, test.dataset.y(), test.dataset.t())?;
    let diag = model.diagnostics.as_ref();
    Ok(Metrics {
        rmse: rmse(&pred, test.tau_true())?,
        auuc: curve.auuc,
        lambda: model.lambda,
        r_squared: diag.and_then(|d| d.r_squared),
        sigma_e_hat: diag.map(|d| d.sigma_e_hat),
        sigma_u_hat: diag.and_then(|d| d.sigma_u_hat),
    })
}

fn run_replicate(spec: &DgpSpec, methods: &[Method], r: usize, master_seed: u64, cfg: &EstimatorConfig) -> Replicate {
    let dgp_seed = derive_seed(master_seed, Stream::Replicate, r as u64);
    let estimator_seed = derive_seed(dgp_seed, Stream::Estimator, 0);
    let rep_spec = DgpSpec {
        seed: dgp_seed,
        ..spec.clone()
    };
    let rep_cfg = EstimatorConfig {
        seed: estimator_seed,
        ..cfg.clone()
    };
    let cells = match generate(&rep_spec) {
        Ok((train, test)) => methods
            .iter()
            .map(|&method| match evaluate_cell(method, &train.dataset, &test, &rep_cfg) {
                Ok(m) => Cell {
                    method,
                    metrics: Some(m),
                    error: None,
                },
                Err(e) => Cell {
                    method,
                    metrics: None,
                    error: Some(e.to_string()),
                },
            })
            .collect(),
        Err(e) => methods
            .iter()
            .map(|&method| Cell {
                method,
                metrics: None,
                error: Some(e.to_string()),
            })
            .collect(),
    };
    Replicate {
        replicate: r,
        dgp_seed,
        estimator_seed,
        cells,
    }
}

/// Fits every method on `n_reps` fresh draws and scores it on the matching
/// test sample. A failing method is recorded in its cell and the run goes on.
pub fn run_replications(
    spec: &DgpSpec,
    methods: &[Method],
    n_reps: usize,
    master_seed: u64,
    cfg: &EstimatorConfig,
) -> Result<ReplicationReport> {
    spec.validate()?;
    cfg.validate()?;
    if n_reps < 1 {
        return Err(Error::argument("n_reps must be at least 1"));
    }
    if methods.is_empty() {
        return Err(Error::argument("no methods requested"));
    }
    let replicates: Vec<Replicate> = (0..n_reps)
        .into_par_iter()
        .map(|r| run_replicate(spec, methods, r, master_seed, cfg))
        .collect();

    let mut report = ReplicationReport {
        format_version: crate::FORMAT_VERSION,
        spec: spec.clone(),
        methods: methods.to_vec(),
        n_reps,
        master_seed,
        estimator: cfg.clone(),
        replicates,
        summary: Vec::new(),
    };
    report.summary = methods
        .iter()
        .map(|&method| {
            let cells: Vec<&Cell> = report
                .replicates
                .iter()
                .filter_map(|r| r.cells.iter().find(|c| c.method == method))
                .collect();
            let failed = cells.iter().filter(|c| c.metrics.is_none()).count();
            let metrics = ["rmse", "auuc", "lambda", "r_squared", "sigma_e_hat", "sigma_u_hat"]
                .iter()
                .filter_map(|&k| Stats::of(&report.values(method, k)).map(|s| (k.to_string(), s)))
                .collect();
            MethodSummary {
                method,
                succeeded: cells.len() - failed,
                failed,
                metrics,
            }
        })
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            n_train: n,
            n_test: n,
            seed,
            ..DgpSpec::default()
        }
    }

    #[test]
    fn potential_outcome_consistency() {
        let (train, _) = generate(&small(500, 3)).unwrap();
        let d = &train.dataset;
        for i in 0..d.n() {
            let t = d.t()[i] as f64;
            assert_eq!(d.y()[i], (1.0 - t) * train.y0[i] + t * train.y1[i]);
            let scale = train.y1[i].abs().max(1.0);
            assert!((train.y1[i] - train.y0[i] - train.tau_true()[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn seed_determinism_and_independence() {
        let a = generate(&small(50, 1)).unwrap();
        let b = generate(&small(50, 1)).unwrap();
        let c = generate(&small(50, 2)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_ne!(a.0.dataset.y(), c.0.dataset.y());
        assert_ne!(a.0.dataset.y(), a.1.dataset.y());
    }

    #[test]
    fn null_process_has_no_effect() {
        let (train, _) = null_dgp(&small(200, 5)).unwrap();
        assert!(train.tau_true().iter().all(|&v| v == 0.0));
        assert_eq!(train.y0, train.y1);
        let (real, _) = generate(&small(200, 5)).unwrap();
        assert_eq!(real.dataset.x(), train.dataset.x());
        assert_eq!(real.y0, train.y0);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn invalid_spec() {
        assert!(DgpSpec { p_treat: 1.0, ..DgpSpec::default() }.validate().is_err());
        assert!(DgpSpec { n_test: 0, ..DgpSpec::default() }.validate().is_err());
    }

    #[test]
    fn stats_quartiles() {
        let s = Stats::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.median, s.q1, s.q3, s.iqr, s.mean), (3.0, 2.0, 4.0, 2.0, 3.0));
        assert!(Stats::of(&[]).is_none());
    }
}
