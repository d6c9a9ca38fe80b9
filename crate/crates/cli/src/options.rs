//! Argument groups shared by the subcommands and their resolution into core
//! configuration types.
//!
//! Every option is optional at parse time so that a `--config` JSON file can
//! supply it. Command-line values are layered over file values, then defaults
//! fill whatever is still unset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use dipw::data::csv_header;
use dipw::estimators::Ablation;
use dipw::{BChoice, EstimatorConfig, ForestSpec, PenaltySpec, PropensitySource, Schema, SelectionRule};
use serde::{Deserialize, Serialize};

/// Invalid or missing user input; reported with exit status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn required<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| usage(format!("missing required option --{flag}")))
}

/// Overlay of command-line values (`self`) on config-file values (`under`).
pub trait Layer {
    fn layer(self, under: Self) -> Self;
}

impl<T> Layer for Option<T> {
    fn layer(self, under: Self) -> Self {
        self.or(under)
    }
}

impl<T> Layer for Vec<T> {
    fn layer(self, under: Self) -> Self {
        if self.is_empty() {
            under
        } else {
            self
        }
    }
}

impl Layer for bool {
    fn layer(self, under: Self) -> Self {
        self || under
    }
}

macro_rules! layered {
    ($t:ident { $($f:ident),* $(,)? }) => {
        impl $crate::options::Layer for $t {
            fn layer(self, under: Self) -> Self {
                $t { $($f: self.$f.layer(under.$f)),* }
            }
        }
    };
}
pub(crate) use layered;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaArgs {
    /// JSON schema file; individual flags override its fields.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Outcome column [default: outcome]
    #[arg(long)]
    pub outcome: Option<String>,
    /// Treatment column holding 0/1 [default: treatment]
    #[arg(long)]
    pub treatment: Option<String>,
    /// Propensity column name, or a constant such as 0.5 [default: propensity]
    #[arg(long)]
    pub propensity: Option<String>,
    /// Covariate columns, comma separated [default: every other column]
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Count-coded column to expand into indicators, as COLUMN=REFERENCE
    #[arg(long = "one-hot")]
    pub one_hot: Vec<String>,
    /// Column with the true treatment effect [default: `tau` when present]
    #[arg(long)]
    pub tau: Option<String>,
    /// Propensities must lie strictly inside (ξ, 1 − ξ) [default: 0.01]
    #[arg(long)]
    pub overlap_bound: Option<f64>,
}

layered!(SchemaArgs {
    schema,
    outcome,
    treatment,
    propensity,
    covariates,
    one_hot,
    tau,
    overlap_bound
});

impl SchemaArgs {
    pub fn resolve(&self, data: &Path) -> anyhow::Result<Schema> {
        let mut s = match &self.schema {
            Some(path) => Schema::from_json_file(path)
                .map_err(|e| usage(format!("cannot read schema {}: {e}", path.display())))?,
            None => Schema::new("outcome", "treatment", PropensitySource::Column("propensity".into())),
        };
        if let Some(v) = &self.outcome {
            s.outcome = v.clone();
        }
        if let Some(v) = &self.treatment {
            s.treatment = v.clone();
        }
        if let Some(v) = &self.propensity {
            s.propensity = match v.parse::<f64>() {
                Ok(p) => PropensitySource::Constant(p),
                Err(_) => PropensitySource::Column(v.clone()),
            };
        }
        if !self.covariates.is_empty() {
            s.covariates = self.covariates.clone();
        }
        for spec in &self.one_hot {
            let (col, level) = spec
                .split_once('=')
                .ok_or_else(|| usage(format!("--one-hot expects COLUMN=REFERENCE, got '{spec}'")))?;
            let level: i64 = level
                .trim()
                .parse()
                .map_err(|_| usage(format!("--one-hot reference level must be an integer, got '{level}'")))?;
            s.one_hot.insert(col.trim().to_string(), level);
        }
        if let Some(v) = self.overlap_bound {
            s.overlap_bound = v;
        }
        s.tau = match &self.tau {
            Some(v) => Some(v.clone()),
            None if s.tau.is_some() => s.tau,
            None => {
                let header = csv_header(data)?;
                let tau_free = !s.covariates.iter().any(|c| c == "tau");
                (tau_free && header.iter().any(|h| h == "tau")).then(|| "tau".to_string())
            }
        };
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorArgs {
    /// Cross-fitting folds for nuisance functions [default: 5]
    #[arg(long)]
    pub k_folds: Option<usize>,
    /// Trees per forest [default: 100]
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Features tried per split [default: all]
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Minimum rows per leaf [default: 1]
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Maximum tree depth [default: unlimited]
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Grow trees on the full sample instead of bootstrap draws
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Denoising target: pooled-mu or b-star [default: pooled-mu]
    #[arg(long)]
    pub b_choice: Option<String>,
    /// Lasso cross-validation folds [default: 10]
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Number of penalties on the path [default: 100]
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Smallest penalty as a fraction of the largest [default: 0.001]
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    /// Penalty selection: min-mse or one-se [default: min-mse]
    #[arg(long)]
    pub selection_rule: Option<String>,
    /// Coordinate-descent tolerance [default: 1e-7]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Coordinate-descent sweep cap [default: 100000]
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Penalize covariates on their original scale
    #[arg(long)]
    pub no_standardize: bool,
    /// Zero the nuisance fits (dipw-algo2 then equals ipw, dr equals ipw)
    #[arg(long)]
    pub ablate_nuisance: bool,
}

layered!(EstimatorArgs {
    k_folds,
    n_trees,
    mtry,
    min_leaf,
    max_depth,
    no_bootstrap,
    b_choice,
    cv_folds,
    grid_size,
    lambda_min_ratio,
    selection_rule,
    tolerance,
    max_iterations,
    no_standardize,
    ablate_nuisance
});

impl EstimatorArgs {
    pub fn resolve(&self, seed: u64) -> anyhow::Result<EstimatorConfig> {
        let d = EstimatorConfig::default();
        let b_choice = match self.b_choice.as_deref() {
            None | Some("pooled-mu") => BChoice::PooledMu,
            Some("b-star") => BChoice::BStar,
            Some(other) => return Err(usage(format!("--b-choice must be pooled-mu or b-star, got '{other}'"))),
        };
        let selection_rule = match &self.selection_rule {
            None => d.penalty.selection_rule,
            Some(s) => s
                .parse::<SelectionRule>()
                .map_err(|e| usage(e.to_string()))?,
        };
        let nuisance = ForestSpec {
            n_trees: self.n_trees.unwrap_or(d.nuisance.n_trees),
            mtry: self.mtry.or(d.nuisance.mtry),
            min_leaf: self.min_leaf.unwrap_or(d.nuisance.min_leaf),
            max_depth: self.max_depth.or(d.nuisance.max_depth),
            seed: 0,
            bootstrap: !self.no_bootstrap,
        };
        let penalty = PenaltySpec {
            grid_size: self.grid_size.unwrap_or(d.penalty.grid_size),
            lambda_min_ratio: self.lambda_min_ratio.unwrap_or(d.penalty.lambda_min_ratio),
            cv_folds: self.cv_folds.unwrap_or(d.penalty.cv_folds),
            selection_rule,
            tolerance: self.tolerance.unwrap_or(d.penalty.tolerance),
            max_iterations: self.max_iterations.unwrap_or(d.penalty.max_iterations),
            standardize: !self.no_standardize,
            trace_objective: false,
        };
        let cfg = EstimatorConfig {
            k_folds: self.k_folds.unwrap_or(d.k_folds),
            nuisance,
            b_choice,
            penalty,
            seed,
            ablation: if self.ablate_nuisance {
                Ablation::ZeroNuisance
            } else {
                Ablation::None
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads a `--config` file, which holds the same fields as the subcommand's
/// flags in snake_case, with nested `schema` and `estimator` objects.
pub fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))
        }
    }
}

/// The resolved run description written as `config.json` into every output directory.
#[derive(Debug, Serialize)]
pub struct ConfigEcho<'a, A: Serialize> {
    pub format_version: u32,
    pub tool_version: &'static str,
    pub command: &'a str,
    pub threads: usize,
    pub arguments: &'a A,
    pub resolved: BTreeMap<&'static str, serde_json::Value>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_file(dir: &Path, header: &str) -> PathBuf {
        let p = dir.join("h.csv");
        std::fs::write(&p, format!("{header}\n")).unwrap();
        p
    }

    #[test]
    fn flags_override_config_values() {
        let cli = EstimatorArgs {
            n_trees: Some(7),
            ..EstimatorArgs::default()
        };
        let file = EstimatorArgs {
            n_trees: Some(50),
            k_folds: Some(3),
            no_standardize: true,
            ..EstimatorArgs::default()
        };
        let merged = cli.layer(file);
        assert_eq!(merged.n_trees, Some(7));
        assert_eq!(merged.k_folds, Some(3));
        assert!(merged.no_standardize);
    }

    #[test]
    fn propensity_constant_or_column_and_tau_detection() {
        let dir = tempfile::tempdir().unwrap();
        let data = header_file(dir.path(), "outcome,treatment,a,tau");
        let args = SchemaArgs {
            propensity: Some("0.25".into()),
            ..SchemaArgs::default()
        };
        let s = args.resolve(&data).unwrap();
        assert_eq!(s.propensity, PropensitySource::Constant(0.25));
        assert_eq!(s.tau.as_deref(), Some("tau"));

        let args = SchemaArgs {
            propensity: Some("p_col".into()),
            covariates: vec!["a".into(), "tau".into()],
            ..SchemaArgs::default()
        };
        let s = args.resolve(&data).unwrap();
        assert_eq!(s.propensity, PropensitySource::Column("p_col".into()));
        assert_eq!(s.tau, None);
    }

    #[test]
    fn malformed_one_hot_is_usage() {
        let dir = tempfile::tempdir().unwrap();
        let data = header_file(dir.path(), "outcome,treatment,propensity,v");
        for bad in ["v", "v=x"] {
            let args = SchemaArgs {
                one_hot: vec![bad.into()],
                ..SchemaArgs::default()
            };
            let err = args.resolve(&data).unwrap_err();
            assert!(err.downcast_ref::<Usage>().is_some(), "{bad}");
        }
    }

    #[test]
    fn estimator_resolution_checks_names() {
        let cfg = EstimatorArgs::default().resolve(3).unwrap();
        assert_eq!(cfg, EstimatorConfig { seed: 3, ..EstimatorConfig::default() });
        let bad = EstimatorArgs {
            b_choice: Some("mu".into()),
            ..EstimatorArgs::default()
        };
        assert!(bad.resolve(0).is_err());
    }
}
