//! Experiment datasets: the in-memory model, CSV ingestion, count one-hot
//! encoding, covariate standardization and seeded fold assignment.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Default overlap bound ξ: every propensity must lie in (ξ, 1 − ξ).
pub const DEFAULT_OVERLAP_BOUND: f64 = 0.01;

/// Outcome, treatment, known propensity and covariates of a randomized experiment.
///
/// Construction validates every invariant; the fields are read-only afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<u8>,
    propensity: Vec<f64>,
    x: Array2<f64>,
    column_names: Vec<String>,
    tau: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        t: Vec<u8>,
        propensity: Vec<f64>,
        x: Array2<f64>,
        column_names: Vec<String>,
        overlap_bound: f64,
    ) -> Result<Self> {
        let n = y.len();
        if t.len() != n || propensity.len() != n || x.nrows() != n {
            return Err(Error::argument(format!(
                "length mismatch: y={n}, t={}, propensity={}, x rows={}",
                t.len(),
                propensity.len(),
                x.nrows()
            )));
        }
        if column_names.len() != x.ncols() {
            return Err(Error::argument(format!(
                "{} column names for {} covariate columns",
                column_names.len(),
                x.ncols()
            )));
        }
        if !(0.0..0.5).contains(&overlap_bound) {
            return Err(Error::argument(format!(
                "overlap bound must lie in [0, 0.5), got {overlap_bound}"
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate covariate name '{name}'")));
            }
        }

        let bad_t: Vec<usize> = rows_where(n, |i| t[i] > 1);
        if !bad_t.is_empty() {
            return Err(Error::validation("treatment must be 0 or 1", bad_t));
        }
        let lo = overlap_bound;
        let hi = 1.0 - overlap_bound;
        let bad_p = rows_where(n, |i| {
            let p = propensity[i];
            !(p > lo && p < hi)
        });
        if !bad_p.is_empty() {
            return Err(Error::validation(
                format!("propensity must lie strictly inside ({lo}, {hi})"),
                bad_p,
            ));
        }
        let bad_y = rows_where(n, |i| !y[i].is_finite());
        if !bad_y.is_empty() {
            return Err(Error::validation("non-finite outcome", bad_y));
        }
        let bad_x = rows_where(n, |i| x.row(i).iter().any(|v| !v.is_finite()));
        if !bad_x.is_empty() {
            return Err(Error::validation("non-finite covariate", bad_x));
        }

        Ok(Self {
            y,
            t,
            propensity,
            x,
            column_names,
            tau: None,
        })
    }

    /// Attaches the known per-unit treatment effect (simulation mode).
    pub fn with_tau(mut self, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != self.n() {
            return Err(Error::argument(format!(
                "tau has {} entries for {} units",
                tau.len(),
                self.n()
            )));
        }
        let bad = rows_where(tau.len(), |i| !tau[i].is_finite());
        if !bad.is_empty() {
            return Err(Error::validation("non-finite tau", bad));
        }
        self.tau = Some(tau);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn t(&self) -> &[u8] {
        &self.t
    }

    pub fn propensity(&self) -> &[f64] {
        &self.propensity
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Known treatment effect per unit, present only for simulated data.
    pub fn tau(&self) -> Option<&[f64]> {
        self.tau.as_deref()
    }

    pub fn column(&self, name: &str) -> Option<ArrayView1<'_, f64>> {
        let j = self.column_names.iter().position(|c| c == name)?;
        Some(self.x.column(j))
    }

    pub fn treated_share(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        self.t.iter().map(|&t| t as f64).sum::<f64>() / self.n() as f64
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            y: indices.iter().map(|&i| self.y[i]).collect(),
            t: indices.iter().map(|&i| self.t[i]).collect(),
            propensity: indices.iter().map(|&i| self.propensity[i]).collect(),
            x: self.x.select(Axis(0), indices),
            column_names: self.column_names.clone(),
            tau: self
                .tau
                .as_ref()
                .map(|tau| indices.iter().map(|&i| tau[i]).collect()),
        }
    }
}

fn rows_where(n: usize, pred: impl Fn(usize) -> bool) -> Vec<usize> {
    (0..n).filter(|&i| pred(i)).map(|i| i + 1).collect()
}

/// Where the known propensity comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropensitySource {
    Constant(f64),
    Column(String),
}

/// Column-role map for CSV ingestion.
///
/// JSON form: `{"outcome": "y", "treatment": "t", "propensity": 0.5 | "p",
/// "covariates": [...], "one_hot": {"past_voting": 0}, "tau": "tau"}`.
/// When `covariates` is empty every column without another role is a covariate.
/// A `one_hot` column is expanded in place if listed among the covariates,
/// otherwise its indicators are appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub outcome: String,
    pub treatment: String,
    pub propensity: PropensitySource,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub one_hot: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<String>,
    #[serde(default = "default_overlap")]
    pub overlap_bound: f64,
}

fn default_overlap() -> f64 {
    DEFAULT_OVERLAP_BOUND
}

impl Schema {
    pub fn new(outcome: &str, treatment: &str, propensity: PropensitySource) -> Self {
        Self {
            outcome: outcome.to_string(),
            treatment: treatment.to_string(),
            propensity,
            covariates: Vec::new(),
            one_hot: BTreeMap::new(),
            tau: None,
            overlap_bound: DEFAULT_OVERLAP_BOUND,
        }
    }

    /// The schema that reads back a file produced by [`write_csv`].
    pub fn for_written(d: &Dataset) -> Self {
        Self {
            outcome: WRITE_OUTCOME.into(),
            treatment: WRITE_TREATMENT.into(),
            propensity: PropensitySource::Column(WRITE_PROPENSITY.into()),
            covariates: d.column_names().to_vec(),
            one_hot: BTreeMap::new(),
            tau: d.tau().map(|_| WRITE_TAU.into()),
            overlap_bound: DEFAULT_OVERLAP_BOUND,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

const WRITE_OUTCOME: &str = "outcome";
const WRITE_TREATMENT: &str = "treatment";
const WRITE_PROPENSITY: &str = "propensity";
const WRITE_TAU: &str = "tau";

enum CovariateSource {
    Raw(usize),
    OneHot(usize, i64),
}

/// Column names of a headed CSV file, trimmed.
pub fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

/// Reads a comma-separated, headed, UTF-8 file into a validated [`Dataset`].
///
/// Row numbers in errors are 1-based data rows (the header is not counted).
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };

    let y_col = find(&schema.outcome)?;
    let t_col = find(&schema.treatment)?;
    let p_col = match &schema.propensity {
        PropensitySource::Column(name) => Some(find(name)?),
        PropensitySource::Constant(_) => None,
    };
    let tau_col = schema.tau.as_deref().map(find).transpose()?;
    for col in schema.one_hot.keys() {
        find(col)?;
    }

    let mut roles: HashSet<usize> = [y_col, t_col].into_iter().collect();
    roles.extend(p_col);
    roles.extend(tau_col);
    let covariate_names: Vec<String> = if schema.covariates.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(j, _)| !roles.contains(j))
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        schema.covariates.clone()
    };

    let mut sources = Vec::new();
    for name in &covariate_names {
        let j = find(name)?;
        if roles.contains(&j) {
            return Err(Error::Schema(format!(
                "column '{name}' cannot be both a covariate and a role column"
            )));
        }
        match schema.one_hot.get(name) {
            Some(&reference) => sources.push((name.clone(), CovariateSource::OneHot(j, reference))),
            None => sources.push((name.clone(), CovariateSource::Raw(j))),
        }
    }
    for (name, &reference) in &schema.one_hot {
        if !covariate_names.contains(name) {
            sources.push((name.clone(), CovariateSource::OneHot(find(name)?, reference)));
        }
    }

    let mut y = Vec::new();
    let mut t_raw = Vec::new();
    let mut prop = Vec::new();
    let mut tau = Vec::new();
    let mut raw_cols: Vec<Vec<f64>> = vec![Vec::new(); sources.len()];
    let mut bad_rows = Vec::new();
    let mut bad_fields: Vec<String> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        let mut ok = true;
        let mut parse = |j: usize| -> f64 {
            match record.get(j).and_then(|s| s.parse::<f64>().ok()) {
                Some(v) if v.is_finite() => v,
                _ => {
                    ok = false;
                    if bad_fields.len() < 5 {
                        bad_fields.push(headers[j].clone());
                    }
                    f64::NAN
                }
            }
        };
        y.push(parse(y_col));
        t_raw.push(parse(t_col));
        prop.push(match (&schema.propensity, p_col) {
            (PropensitySource::Constant(c), _) => *c,
            (_, Some(j)) => parse(j),
            _ => unreachable!(),
        });
        if let Some(j) = tau_col {
            tau.push(parse(j));
        }
        for (k, (_, src)) in sources.iter().enumerate() {
            let j = match src {
                CovariateSource::Raw(j) | CovariateSource::OneHot(j, _) => *j,
            };
            raw_cols[k].push(parse(j));
        }
        if !ok {
            bad_rows.push(row);
        }
    }
    if !bad_rows.is_empty() {
        bad_fields.sort();
        bad_fields.dedup();
        return Err(Error::validation(
            format!(
                "missing or unparseable values in mapped columns ({})",
                bad_fields.join(", ")
            ),
            bad_rows,
        ));
    }

    let bad_t = rows_where(t_raw.len(), |i| t_raw[i] != 0.0 && t_raw[i] != 1.0);
    if !bad_t.is_empty() {
        return Err(Error::validation("treatment must be 0 or 1", bad_t));
    }
    let t: Vec<u8> = t_raw.iter().map(|&v| v as u8).collect();

    let n = y.len();
    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for ((name, src), raw) in sources.iter().zip(raw_cols) {
        match src {
            CovariateSource::Raw(_) => {
                names.push(name.clone());
                columns.push(raw);
            }
            CovariateSource::OneHot(_, reference) => {
                let bad = rows_where(n, |i| raw[i] < 0.0 || raw[i].fract() != 0.0);
                if !bad.is_empty() {
                    return Err(Error::validation(
                        format!("one-hot column '{name}' must hold non-negative integer counts"),
                        bad,
                    ));
                }
                let counts: Vec<i64> = raw.iter().map(|&v| v as i64).collect();
                let (encoded, levels) = one_hot_count(&counts, *reference)?;
                for (k, level) in levels.iter().enumerate() {
                    names.push(format!("{name}_{level}"));
                    columns.push(encoded.column(k).to_vec());
                }
            }
        }
    }
    let mut x = Array2::zeros((n, columns.len()));
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[[i, j]] = v;
        }
    }

    let d = Dataset::new(y, t, prop, x, names, schema.overlap_bound)?;
    if tau_col.is_some() {
        d.with_tau(tau)
    } else {
        Ok(d)
    }
}

/// Writes `d` as CSV: `outcome,treatment,propensity,<covariates>[,tau]`.
/// Values use Rust's shortest round-trip float formatting, so reading the file
/// back with [`Schema::for_written`] reproduces `d` exactly.
pub fn write_csv(d: &Dataset, path: &Path) -> Result<()> {
    let reserved = [WRITE_OUTCOME, WRITE_TREATMENT, WRITE_PROPENSITY, WRITE_TAU];
    if let Some(clash) = d.column_names().iter().find(|c| reserved.contains(&c.as_str())) {
        return Err(Error::Schema(format!(
            "covariate name '{clash}' collides with a reserved output column"
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = vec![WRITE_OUTCOME, WRITE_TREATMENT, WRITE_PROPENSITY];
    header.extend(d.column_names().iter().map(String::as_str));
    if d.tau().is_some() {
        header.push(WRITE_TAU);
    }
    w.write_record(&header)?;
    let mut buf: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..d.n() {
        buf.clear();
        buf.push(d.y[i].to_string());
        buf.push(d.t[i].to_string());
        buf.push(d.propensity[i].to_string());
        buf.extend(d.x.row(i).iter().map(|v| v.to_string()));
        if let Some(tau) = d.tau() {
            buf.push(tau[i].to_string());
        }
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Indicator columns for a count variable, one per non-reference level in
/// ascending order. Rows at the reference level are all zero.
pub fn one_hot_count(raw: &[i64], reference: i64) -> Result<(Array2<f64>, Vec<i64>)> {
    let mut levels: Vec<i64> = raw.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if !raw.is_empty() && !levels.contains(&reference) {
        return Err(Error::validation(
            format!("reference level {reference} does not occur in the data"),
            Vec::new(),
        ));
    }
    levels.retain(|&l| l != reference);
    let mut out = Array2::zeros((raw.len(), levels.len()));
    for (i, v) in raw.iter().enumerate() {
        if let Ok(k) = levels.binary_search(v) {
            out[[i, k]] = 1.0;
        }
    }
    Ok((out, levels))
}

/// Per-column centering and scaling used by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub mean: Vec<f64>,
    /// Always strictly positive; 1 for constant columns.
    pub sd: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizationRecord {
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.sd[j]);
        }
        out
    }

    pub fn invert(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut out = z.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * self.sd[j] + self.mean[j]);
        }
        out
    }
}

/// Population (n-denominator) mean and standard deviation of a column.
pub(crate) fn column_moments(col: ArrayView1<f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Relative spread below which a column counts as constant.
pub(crate) const CONSTANT_TOL: f64 = 1e-12;

pub(crate) fn is_constant(mean: f64, sd: f64) -> bool {
    sd <= CONSTANT_TOL * mean.abs().max(1.0)
}

/// Centers and scales each non-constant column to mean 0 and n-denominator
/// standard deviation 1. Constant columns pass through untouched and are flagged.
pub fn standardize(x: ArrayView2<f64>) -> Result<(Array2<f64>, StandardizationRecord)> {
    if x.nrows() < 2 {
        return Err(Error::argument("standardization needs at least two rows"));
    }
    let mut rec = StandardizationRecord {
        mean: Vec::with_capacity(x.ncols()),
        sd: Vec::with_capacity(x.ncols()),
        constant: Vec::with_capacity(x.ncols()),
    };
    for col in x.columns() {
        let (m, s) = column_moments(col);
        if is_constant(m, s) {
            rec.mean.push(0.0);
            rec.sd.push(1.0);
            rec.constant.push(true);
        } else {
            rec.mean.push(m);
            rec.sd.push(s);
            rec.constant.push(false);
        }
    }
    Ok((rec.apply(x), rec))
}

/// Assignment of units to `k` cross-fitting or validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Units in fold `f`, ascending.
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == f).collect()
    }

    /// Units outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded partition of `0..n` into `k` folds whose sizes differ by at most one:
/// a Fisher–Yates shuffle of the unit indices, then position `i` of the
/// shuffled order goes to fold `i mod k`.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::argument(format!("fold count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::argument(format!(
            "fold count {k} exceeds sample size {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut assignment = vec![0; n];
    for (pos, &unit) in order.iter().enumerate() {
        assignment[unit] = pos % k;
    }
    Ok(FoldPlan {
        k,
        assignment,
        seed,
    })
}

/// Seeded split into (train, test) with `round(n · test_fraction)` test units.
/// Both parts keep the original row order.
pub fn train_test_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::argument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = d.n();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::argument(format!(
            "test fraction {test_fraction} leaves an empty part for n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((d.subset(&train), d.subset(&test)))
}
