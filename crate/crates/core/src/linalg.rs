//! Small dense helpers for the handful of low-dimensional least-squares
//! problems in the crate (denoising, residualization, λ_max).

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation with the n − 1 denominator; 0 for fewer than two values.
pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

/// Solves `A x = b` for a symmetric positive definite `A` (row-major, k×k)
/// by Cholesky. Returns `None` when a pivot falls below `rel_tol` times the
/// corresponding diagonal entry, i.e. the columns behind `A` are numerically
/// collinear.
pub(crate) fn solve_spd(a: &[f64], b: &[f64], k: usize, rel_tol: f64) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), k * k);
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= l[i * k + m] * l[j * k + m];
            }
            if i == j {
                let diag = a[i * k + i];
                if !(diag > 0.0) || s <= rel_tol * diag {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for m in 0..i {
            s -= l[i * k + m] * z[m];
        }
        z[i] = s / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = z[i];
        for m in i + 1..k {
            s -= l[m * k + i] * x[m];
        }
        x[i] = s / l[i * k + i];
    }
    Some(x)
}

/// Ordinary least squares of `y` on the given columns, without intercept.
/// Returns coefficients, or `None` if the Gram matrix is numerically singular.
pub(crate) fn ols(columns: &[&[f64]], y: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    let k = columns.len();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        rhs[i] = dot(columns[i], y);
        for j in 0..=i {
            let g = dot(columns[i], columns[j]);
            gram[i * k + j] = g;
            gram[j * k + i] = g;
        }
    }
    solve_spd(&gram, &rhs, k, rel_tol)
}

/// Linear-interpolation quantile (the common "type 7" rule) of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
