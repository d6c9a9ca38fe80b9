use dipw::data::{load_csv, make_folds, standardize, write_csv};
use dipw::eval::uplift_curve;
use dipw::lasso::{fit_lasso, kkt_violation, lambda_path, PenaltySpec};
use dipw::transform::{aipw_value, b_star, denoise, ipw_weight, r_squared_uncentered};
use dipw::{Dataset, Schema};
use ndarray::Array2;
use proptest::prelude::*;

fn matrix(n: usize, m: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-50.0..50.0f64, n * m).prop_map(move |v| Array2::from_shape_vec((n, m), v).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn dataset(y: Vec<f64>, t: Vec<u8>, p: f64, x: Array2<f64>) -> Dataset {
    let names = (0..x.ncols()).map(|j| format!("c{j}")).collect();
    let n = y.len();
    Dataset::new(y, t, vec![p; n], x, names, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_is_idempotent_and_invertible(x in matrix(12, 4)) {
        let (z, rec) = standardize(x.view()).unwrap();
        let (zz, _) = standardize(z.view()).unwrap();
        for (a, b) in z.iter().zip(zz.iter()) {
            prop_assert!(close(*a, *b, 1e-9));
        }
        let back = rec.invert(z.view());
        for (a, b) in x.iter().zip(back.iter()) {
            prop_assert!(close(*a, *b, 1e-9));
        }
    }

    #[test]
    fn folds_partition_units(n in 2usize..300, k in 2usize..12, seed: u64) {
        prop_assume!(k <= n);
        let plan = make_folds(n, k, seed).unwrap();
        let mut seen = vec![0usize; n];
        for f in 0..k {
            let fold = plan.fold(f);
            prop_assert_eq!(fold.len() + plan.complement(f).len(), n);
            for i in fold {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = plan.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(&plan, &make_folds(n, k, seed).unwrap());
    }

    #[test]
    fn csv_round_trip_is_exact(
        y in prop::collection::vec(-1e6..1e6f64, 6),
        t in prop::collection::vec(0u8..2, 6),
        p in 0.01..0.99f64,
        x in matrix(6, 3),
    ) {
        let d = dataset(y, t, p, x);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&d, &path).unwrap();
        let back = load_csv(&path, &Schema::for_written(&d)).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn aipw_identity(y in -100.0..100.0f64, t in 0u8..2, p in 0.01..0.99f64, mu1 in -100.0..100.0f64, mu0 in -100.0..100.0f64) {
        let w = ipw_weight(t, p).unwrap();
        let b = b_star(p, mu1, mu0).unwrap();
        let gap = y * w - b * w - aipw_value(y, t, p, mu1, mu0);
        prop_assert!(gap.abs() < 1e-9, "gap {}", gap);
    }

    #[test]
    fn uplift_invariant_to_monotone_rescoring(
        scores in prop::collection::vec(0u8..20, 8..60),
        y in prop::collection::vec(-10.0..10.0f64, 60),
        t in prop::collection::vec(0u8..2, 60),
    ) {
        let n = scores.len();
        let (y, mut t) = (&y[..n], t[..n].to_vec());
        t[0] = 0;
        t[1] = 1;
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let base = uplift_curve(&s, y, &t).unwrap();
        for f in [|v: f64| 4.0 * v + 3.0, |v: f64| v * v * v - 7.0] {
            let s2: Vec<f64> = s.iter().map(|&v| f(v)).collect();
            let other = uplift_curve(&s2, y, &t).unwrap();
            prop_assert_eq!(&other.u, &base.u);
        }
    }

    #[test]
    fn uplift_invariant_to_row_order(
        scores in prop::collection::hash_set(-1000i32..1000, 4..40),
        seed: u64,
    ) {
        let s: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let n = s.len();
        let y: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 17) as f64 - 8.0).collect();
        let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let base = uplift_curve(&s, &y, &t).unwrap();
        let perm = make_folds(n, n, seed).unwrap().assignment;
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let tp: Vec<u8> = perm.iter().map(|&i| t[i]).collect();
        let other = uplift_curve(&pick(&s), &pick(&y), &tp).unwrap();
        for (a, b) in base.u.iter().zip(&other.u) {
            prop_assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn r_squared_stays_in_unit_interval(
        y in prop::collection::vec(-50.0..50.0f64, 40),
        t in prop::collection::vec(0u8..2, 40),
        p in 0.05..0.95f64,
        b in prop::collection::vec(-50.0..50.0f64, 40),
    ) {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let d = dataset(y, t, p, x);
        let plan = make_folds(40, 5, 0).unwrap();
        if let Ok(s) = denoise(&d, &b, &plan) {
            let r2 = s.r_squared.unwrap();
            prop_assert!((0.0..=1.0).contains(&r2));
            prop_assert!(close(r2, r_squared_uncentered(&s.raw, s.denoised.as_ref().unwrap()), 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lasso_solutions_satisfy_kkt(x in matrix(40, 6), noise in prop::collection::vec(-1.0..1.0f64, 40), frac in 0.01..1.0f64, standardize: bool) {
        let y: Vec<f64> = (0..40).map(|i| x[[i, 0]] - 0.5 * x[[i, 2]] + 10.0 * noise[i]).collect();
        let spec = PenaltySpec { standardize, ..PenaltySpec::default() };
        let mask = [true, true, true, true, false, true];
        let lambda = lambda_path(x.view(), &y, &mask, &spec).unwrap()[0] * frac;
        let fit = fit_lasso(x.view(), &y, &mask, lambda, None, &spec).unwrap();
        prop_assert!(fit.converged);
        let v = kkt_violation(x.view(), &y, &mask, &fit, standardize).unwrap();
        prop_assert!(v <= spec.tolerance, "kkt {}", v);

        // the unpenalized column and the intercept solve their normal equations
        let pred = fit.predict(x.view());
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max) * 50.0;
        let along_one = resid.iter().sum::<f64>() / 40.0;
        let along_x4 = resid.iter().zip(x.column(4)).map(|(r, v)| r * v).sum::<f64>() / 40.0;
        prop_assert!(along_one.abs() < 1e-6 * scale);
        prop_assert!(along_x4.abs() < 1e-6 * scale);
    }

    #[test]
    fn objective_never_increases(x in matrix(30, 5), frac in 0.01..0.9f64) {
        let y: Vec<f64> = (0..30).map(|i| x[[i, 1]] + ((i * 7) % 5) as f64).collect();
        let spec = PenaltySpec { trace_objective: true, ..PenaltySpec::default() };
        let lambda = lambda_path(x.view(), &y, &[true; 5], &spec).unwrap()[0] * frac;
        let fit = fit_lasso(x.view(), &y, &[true; 5], lambda, None, &spec).unwrap();
        prop_assert!(!fit.objective_trace.is_empty());
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
    }
}
