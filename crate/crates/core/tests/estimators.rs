use dipw::estimators::{fit, predict_cate, predict_dataset, Ablation, ModelKind};
use dipw::eval::{budget_gain, diagnostics_report, rmse, subgroup_ate, uplift_curve, Binning};
use dipw::sim::{generate, null_dgp, DgpSpec};
use dipw::{CateModel, EstimatorConfig, Error, ForestSpec};

fn spec(n_train: usize, n_test: usize, p_treat: f64, seed: u64) -> DgpSpec {
    DgpSpec {
        n_train,
        n_test,
        p_treat,
        seed,
        ..DgpSpec::default()
    }
}

fn quick_config() -> EstimatorConfig {
    EstimatorConfig {
        nuisance: ForestSpec {
            n_trees: 30,
            ..ForestSpec::default()
        },
        seed: 4,
        ..EstimatorConfig::default()
    }
}

#[test]
fn zero_nuisance_ablation_reduces_to_ipw() {
    let (train, _) = generate(&spec(400, 1, 0.5, 21)).unwrap();
    let cfg = EstimatorConfig {
        ablation: Ablation::ZeroNuisance,
        ..quick_config()
    };
    let ipw = fit(ModelKind::Ipw, &train.dataset, &cfg).unwrap();
    for kind in [ModelKind::DipwAlgo2, ModelKind::Dr] {
        let m = fit(kind, &train.dataset, &cfg).unwrap();
        assert_eq!(m.linear, ipw.linear, "{kind}");
        assert_eq!(m.lambda, ipw.lambda, "{kind}");
    }
}

#[test]
fn effect_has_unit_mean_and_assignment_follows_p() {
    for p in [0.5, 0.2] {
        let (train, _) = generate(&spec(100_000, 1, p, 5)).unwrap();
        let tau = train.tau_true();
        let mean = tau.iter().sum::<f64>() / tau.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean tau {mean}");
        assert!((train.dataset.treated_share() - p).abs() < 0.005);
    }
}

#[test]
fn null_process_yields_near_zero_effects() {
    let (train, test) = null_dgp(&spec(1000, 2000, 0.5, 8)).unwrap();
    let m = fit(ModelKind::DipwAlgo1, &train.dataset, &quick_config()).unwrap();
    let pred = predict_dataset(&m, &test.dataset).unwrap();
    let err = rmse(&pred, test.tau_true()).unwrap();
    let nonzero = m.linear.as_ref().unwrap().beta().iter().filter(|b| **b != 0.0).count();
    assert!(err < 0.5, "rmse {err}");
    assert!(nonzero <= 15, "{nonzero} nonzero coefficients");
}

#[test]
fn dipw_beats_ipw_and_ranks_units() {
    let (train, test) = generate(&spec(1000, 10_000, 0.5, 3)).unwrap();
    let cfg = quick_config();
    let dipw = fit(ModelKind::DipwAlgo1, &train.dataset, &cfg).unwrap();
    let ipw = fit(ModelKind::Ipw, &train.dataset, &cfg).unwrap();
    let score = |m: &CateModel| predict_dataset(m, &test.dataset).unwrap();
    let (sd, si) = (score(&dipw), score(&ipw));
    assert!(rmse(&sd, test.tau_true()).unwrap() < rmse(&si, test.tau_true()).unwrap());

    let d = &test.dataset;
    let curve = uplift_curve(&sd, d.y(), d.t()).unwrap();
    let gain = budget_gain(&curve, d.n() / 10).unwrap();
    assert!(gain.improvement_ratio.unwrap() > 1.0);
    let full = budget_gain(&curve, d.n()).unwrap();
    assert_eq!(full.improvement_ratio, Some(1.0));

    let diag = diagnostics_report(&dipw).unwrap();
    let r2 = diag.r_squared.unwrap();
    assert!((0.0..=1.0).contains(&r2));
    assert!(diag.sigma_u_hat.unwrap() < diag.sigma_e_hat);
    assert_eq!(dipw.alpha.map(|a| a.len()), Some(2));
}

#[test]
fn subgroup_effects_increase_along_x40() {
    let (_, test) = generate(&spec(1, 100_000, 0.5, 12)).unwrap();
    let report = subgroup_ate(&test.dataset, "x40", &Binning::Quantiles(4)).unwrap();
    assert_eq!(report.bins.len(), 4);
    for w in report.bins.windows(2) {
        assert!(w[1].ate > w[0].ate, "{} then {}", w[0].ate, w[1].ate);
    }
}

#[test]
fn fitted_models_survive_json() {
    let (train, test) = generate(&spec(300, 200, 0.5, 9)).unwrap();
    for kind in ModelKind::ALL {
        let m = fit(kind, &train.dataset, &quick_config()).unwrap();
        let back = CateModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(
            predict_cate(&m, test.dataset.x()).unwrap(),
            predict_cate(&back, test.dataset.x()).unwrap(),
            "{kind}"
        );
    }
}

#[test]
fn fits_are_deterministic() {
    let (train, _) = generate(&spec(300, 1, 0.5, 10)).unwrap();
    for kind in [ModelKind::DipwAlgo1, ModelKind::TLearner] {
        let a = fit(kind, &train.dataset, &quick_config()).unwrap();
        let b = fit(kind, &train.dataset, &quick_config()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn t_learner_has_no_denoising_diagnostics() {
    let (train, _) = generate(&spec(200, 1, 0.5, 11)).unwrap();
    let m = fit(ModelKind::TLearner, &train.dataset, &quick_config()).unwrap();
    assert!(m.coefficient_table().is_empty());
    assert!(matches!(diagnostics_report(&m), Err(Error::Unsupported(_))));
}

#[test]
fn single_arm_sample_is_rejected() {
    let (train, _) = generate(&spec(200, 1, 0.5, 11)).unwrap();
    let treated: Vec<usize> = (0..train.dataset.n()).filter(|&i| train.dataset.t()[i] == 1).collect();
    let d = train.dataset.subset(&treated);
    for kind in [ModelKind::DipwAlgo1, ModelKind::Dr, ModelKind::TLearner] {
        assert!(fit(kind, &d, &quick_config()).is_err(), "{kind}");
    }
}
