use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use dipw::data::{load_csv, write_csv};
use dipw::estimators::{self, predict_dataset};
use dipw::eval::{self, budget_gain, uplift_band, uplift_curve, DEFAULT_BOOTSTRAP, DEFAULT_LEVEL};
use dipw::sim::{self, DgpSpec, DEFAULT_REPS};
use dipw::{CateModel, Dataset, ModelKind, FORMAT_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::options::{layered, read_config, required, usage, ConfigEcho, EstimatorArgs, Layer, SchemaArgs};

fn out_dir(dir: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    let dir = dir.unwrap_or_else(|| PathBuf::from("dipw-out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn echo<A: Serialize>(
    dir: &Path,
    command: &str,
    threads: usize,
    args: &A,
    resolved: BTreeMap<&'static str, Value>,
) -> anyhow::Result<()> {
    write_json(
        &dir.join("config.json"),
        &ConfigEcho {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            threads,
            arguments: args,
            resolved,
        },
    )
}

fn load(data: &Path, schema: &SchemaArgs) -> anyhow::Result<(Dataset, dipw::Schema)> {
    let schema = schema.resolve(data)?;
    let d = load_csv(data, &schema).with_context(|| format!("loading {}", data.display()))?;
    Ok((d, schema))
}

fn read_model(path: &Path) -> anyhow::Result<CateModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CateModel::from_json(&text).with_context(|| format!("parsing model {}", path.display()))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Treatment probability [default: 0.5]
    #[arg(long)]
    pub p_treat: Option<f64>,
    /// Number of replicates [default: 50]
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training units per replicate [default: 1000]
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Test units per replicate [default: 10000]
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Constant multiplying the baseline function [default: 5]
    #[arg(long)]
    pub multiplier: Option<f64>,
    /// Standard deviation of the outcome noise [default: 1]
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Methods, comma separated [default: dipw-algo1,ipw,dr,t-learner]
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Output directory [default: dipw-out]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the first replicate's train and test samples as CSV
    #[arg(long)]
    pub export_data: bool,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

layered!(SimulateArgs {
    p_treat,
    reps,
    seed,
    n_train,
    n_test,
    multiplier,
    noise_sd,
    methods,
    out_dir,
    export_data,
    estimator
});

fn parse_methods(names: &[String], default: &[ModelKind]) -> anyhow::Result<Vec<ModelKind>> {
    if names.is_empty() {
        return Ok(default.to_vec());
    }
    let mut out: Vec<ModelKind> = Vec::new();
    for n in names {
        let k: ModelKind = n.trim().parse().map_err(|e: dipw::Error| usage(e.to_string()))?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

pub fn simulate(cli: SimulateArgs, config: Option<&Path>, threads: usize) -> anyhow::Result<()> {
    let a = cli.layer(read_config(config)?);
    let d = DgpSpec::default();
    let seed = a.seed.unwrap_or(0);
    let spec = DgpSpec {
        n_train: a.n_train.unwrap_or(d.n_train),
        n_test: a.n_test.unwrap_or(d.n_test),
        p_treat: a.p_treat.unwrap_or(d.p_treat),
        b_multiplier: a.multiplier.unwrap_or(d.b_multiplier),
        noise_sd: a.noise_sd.unwrap_or(d.noise_sd),
        seed,
    };
    spec.validate()?;
    let reps = a.reps.unwrap_or(DEFAULT_REPS);
    let methods = parse_methods(
        &a.methods,
        &[ModelKind::DipwAlgo1, ModelKind::Ipw, ModelKind::Dr, ModelKind::TLearner],
    )?;
    let cfg = a.estimator.resolve(seed)?;
    let dir = out_dir(a.out_dir.clone())?;

    let mut resolved = BTreeMap::new();
    resolved.insert("dgp", serde_json::to_value(&spec)?);
    resolved.insert("estimator", serde_json::to_value(&cfg)?);
    resolved.insert("methods", json!(methods));
    resolved.insert("reps", json!(reps));
    echo(&dir, "simulate", threads, &a, resolved)?;

    let report = sim::run_replications(&spec, &methods, reps, seed, &cfg)?;
    write_json(&dir.join("report.json"), &report)?;
    report.write_tidy_csv(create(&dir.join("report.csv"))?)?;

    let mut w = csv_writer(&dir.join("summary.csv"))?;
    w.write_record(["method", "metric", "count", "mean", "median", "q1", "q3", "iqr"])?;
    for s in &report.summary {
        for (metric, st) in &s.metrics {
            w.write_record([
                s.method.name().to_string(),
                metric.clone(),
                st.count.to_string(),
                st.mean.to_string(),
                st.median.to_string(),
                st.q1.to_string(),
                st.q3.to_string(),
                st.iqr.to_string(),
            ])?;
        }
    }
    w.flush()?;

    if a.export_data {
        let rep_spec = DgpSpec {
            seed: report.replicates[0].dgp_seed,
            ..spec.clone()
        };
        let (train, test) = sim::generate(&rep_spec)?;
        write_csv(&train.dataset, &dir.join("train.csv"))?;
        write_csv(&test.dataset, &dir.join("test.csv"))?;
    }

    for s in &report.summary {
        let mean = |k: &str| s.metrics.get(k).map(|m| m.mean);
        println!(
            "{:<11} ok={:<3} failed={:<3} mean_rmse={} mean_auuc={}",
            s.method.name(),
            s.succeeded,
            s.failed,
            mean("rmse").map_or("-".into(), |v| format!("{v:.4}")),
            mean("auuc").map_or("-".into(), |v| format!("{v:.6e}")),
        );
    }
    Ok(())
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Training CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// dipw (same as dipw-algo1), dipw-algo2, ipw, dr or t-learner [default: dipw]
    #[arg(long)]
    pub method: Option<String>,
    /// Seed for cross-fitting, forests and CV folds [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: dipw-out]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

layered!(FitArgs {
    data,
    method,
    seed,
    out_dir,
    schema,
    estimator
});

pub fn fit(cli: FitArgs, config: Option<&Path>, threads: usize) -> anyhow::Result<()> {
    let a = cli.layer(read_config(config)?);
    let data = required(a.data.clone(), "data")?;
    let kind: ModelKind = a
        .method
        .as_deref()
        .unwrap_or("dipw")
        .parse()
        .map_err(|e: dipw::Error| usage(e.to_string()))?;
    let seed = a.seed.unwrap_or(0);
    let cfg = a.estimator.resolve(seed)?;
    let (d, schema) = load(&data, &a.schema)?;
    let dir = out_dir(a.out_dir.clone())?;

    let mut resolved = BTreeMap::new();
    resolved.insert("method", json!(kind));
    resolved.insert("schema", serde_json::to_value(&schema)?);
    resolved.insert("estimator", serde_json::to_value(&cfg)?);
    echo(&dir, "fit", threads, &a, resolved)?;

    let model = estimators::fit(kind, &d, &cfg)?;
    write_json(&dir.join("model.json"), &model)?;
    let mut w = csv_writer(&dir.join("coefficients.csv"))?;
    w.write_record(["variable", "coefficient"])?;
    for (name, c) in model.coefficient_table() {
        w.write_record([name, c.to_string()])?;
    }
    w.flush()?;

    println!("{} fitted on {} units, {} covariates", kind, d.n(), d.p());
    if let Some(lambda) = model.lambda {
        let nonzero = model
            .linear
            .as_ref()
            .map_or(0, |l| l.terms.iter().filter(|t| t.coefficient != 0.0).count());
        println!("lambda={lambda:.6e} nonzero={nonzero}");
    }
    if let Some(r2) = model.diagnostics.as_ref().and_then(|g| g.r_squared) {
        println!("denoising R^2={r2:.4}");
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Model JSON files written by `fit`
    #[arg(long = "model", num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Test CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory [default: dipw-out]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
}

layered!(EvaluateArgs {
    models,
    data,
    out_dir,
    schema
});

#[derive(Debug, Serialize)]
struct ModelScore {
    name: String,
    kind: ModelKind,
    source: PathBuf,
    auuc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<dipw::DenoisingDiagnostics>,
}

fn model_names(paths: &[PathBuf], models: &[CateModel]) -> Vec<String> {
    let kinds: Vec<&str> = models.iter().map(|m| m.kind.name()).collect();
    paths
        .iter()
        .zip(&kinds)
        .map(|(p, k)| {
            if kinds.iter().filter(|o| *o == k).count() == 1 {
                k.to_string()
            } else {
                let stem = p
                    .parent()
                    .and_then(|d| d.file_name())
                    .or_else(|| p.file_stem())
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                format!("{k}:{stem}")
            }
        })
        .collect()
}

pub fn evaluate(cli: EvaluateArgs, config: Option<&Path>, threads: usize) -> anyhow::Result<()> {
    let a = cli.layer(read_config(config)?);
    if a.models.is_empty() {
        return Err(usage("missing required option --model"));
    }
    let data = required(a.data.clone(), "data")?;
    let (d, schema) = load(&data, &a.schema)?;
    let models = a
        .models
        .iter()
        .map(|p| read_model(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let names = model_names(&a.models, &models);
    let dir = out_dir(a.out_dir.clone())?;
    let mut resolved = BTreeMap::new();
    resolved.insert("schema", serde_json::to_value(&schema)?);
    resolved.insert("model_names", json!(names));
    echo(&dir, "evaluate", threads, &a, resolved)?;

    let mut scores = Vec::with_capacity(models.len());
    for ((m, name), path) in models.iter().zip(&names).zip(&a.models) {
        let pred = predict_dataset(m, &d)?;
        let curve = uplift_curve(&pred, d.y(), d.t())?;
        let rmse = d.tau().map(|tau| eval::rmse(&pred, tau)).transpose()?;
        scores.push(ModelScore {
            name: name.clone(),
            kind: m.kind,
            source: path.clone(),
            auuc: curve.auuc,
            rmse,
            diagnostics: eval::diagnostics_report(m).ok(),
        });
    }
    scores.sort_by(|x, y| y.auuc.total_cmp(&x.auuc).then_with(|| x.name.cmp(&y.name)));

    write_json(
        &dir.join("metrics.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "n_test": d.n(),
            "rmse_available": d.tau().is_some(),
            "models": scores,
        }),
    )?;
    let mut w = csv_writer(&dir.join("metrics.csv"))?;
    let with_rmse = d.tau().is_some();
    let mut header = vec!["rank", "name", "kind", "auuc"];
    if with_rmse {
        header.push("rmse");
    }
    w.write_record(header)?;
    for (i, s) in scores.iter().enumerate() {
        let mut row = vec![
            (i + 1).to_string(),
            s.name.clone(),
            s.kind.name().to_string(),
            s.auuc.to_string(),
        ];
        if let Some(r) = s.rmse {
            row.push(r.to_string());
        }
        w.write_record(row)?;
    }
    w.flush()?;
    for (i, s) in scores.iter().enumerate() {
        match s.rmse {
            Some(r) => println!("{}. {} auuc={:.6e} rmse={r:.4}", i + 1, s.name, s.auuc),
            None => println!("{}. {} auuc={:.6e}", i + 1, s.name, s.auuc),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpliftArgs {
    /// Model JSON written by `fit`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Test CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Treated share of the test set at which to report gains, in (0, 1]; repeatable
    #[arg(long, num_args = 1..)]
    pub budget: Vec<f64>,
    /// Add a bootstrap confidence band
    #[arg(long)]
    pub band: bool,
    /// Band level [default: 0.95]
    #[arg(long)]
    pub level: Option<f64>,
    /// Bootstrap resamples [default: 200]
    #[arg(long)]
    pub n_boot: Option<usize>,
    /// Bootstrap seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: dipw-out]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
}

layered!(UpliftArgs {
    model,
    data,
    budget,
    band,
    level,
    n_boot,
    seed,
    out_dir,
    schema
});

pub fn uplift(cli: UpliftArgs, config: Option<&Path>, threads: usize) -> anyhow::Result<()> {
    let a = cli.layer(read_config(config)?);
    let model_path = required(a.model.clone(), "model")?;
    let data = required(a.data.clone(), "data")?;
    for &b in &a.budget {
        if !(b > 0.0 && b <= 1.0) {
            return Err(usage(format!("--budget must lie in (0, 1], got {b}")));
        }
    }
    let level = a.level.unwrap_or(DEFAULT_LEVEL);
    let n_boot = a.n_boot.unwrap_or(DEFAULT_BOOTSTRAP);
    let seed = a.seed.unwrap_or(0);
    let model = read_model(&model_path)?;
    let (d, schema) = load(&data, &a.schema)?;
    let dir = out_dir(a.out_dir.clone())?;
    let mut resolved = BTreeMap::new();
    resolved.insert("schema", serde_json::to_value(&schema)?);
    if a.band {
        resolved.insert("band", json!({ "level": level, "n_boot": n_boot, "seed": seed }));
    }
    echo(&dir, "uplift", threads, &a, resolved)?;

    let scores = predict_dataset(&model, &d)?;
    let mut curve = uplift_curve(&scores, d.y(), d.t())?;
    if a.band {
        curve.band = Some(uplift_band(&scores, d.y(), d.t(), level, n_boot, seed)?);
    }
    curve.write_csv(create(&dir.join("curve.csv"))?)?;

    let n = d.n();
    let gains = a
        .budget
        .iter()
        .map(|&b| {
            let k = ((b * n as f64).round() as usize).clamp(1, n);
            let g = budget_gain(&curve, k)?;
            Ok(json!({ "budget": b, "gain": g }))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "model_kind": model.kind,
            "n_test": n,
            "auuc": curve.auuc,
            "ate": curve.u[n - 1] / n as f64,
            "tie_break": curve.tie_break,
            "band": curve.band.as_ref().map(|b| json!({ "level": b.level, "n_boot": b.n_boot, "seed": b.seed })),
            "budget_gains": gains,
        }),
    )?;
    println!("auuc={:.6e}", curve.auuc);
    for g in &gains {
        println!("{g}");
    }
    Ok(())
}
