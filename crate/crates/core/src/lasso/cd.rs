//! Cyclic coordinate descent on a centered (and optionally scaled) design.
//!
//! The intercept is profiled out by centering. Penalized columns are scaled to
//! unit n-denominator variance when standardization is on; unpenalized columns
//! are only centered. Two update modes share one fixed point:
//!
//! - covariance mode keeps the gradient `c − Gθ` with `G = DᵀD/n` and costs
//!   O(m) per coordinate update; used when n ≥ m,
//! - residual mode keeps `r − Dθ` and costs O(n) per update.

use ndarray::ArrayView2;

use crate::data::{column_moments, is_constant};
use crate::linalg::{dot, ols};

/// Largest design width for which the m×m Gram matrix is materialized.
const MAX_GRAM_WIDTH: usize = 2048;

#[inline]
pub(crate) fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

pub(crate) struct Problem {
    n: usize,
    m: usize,
    cols: Vec<Vec<f64>>,
    y_c: Vec<f64>,
    x_mean: Vec<f64>,
    scale: Vec<f64>,
    y_mean: f64,
    penalized: Vec<bool>,
    diag: Vec<f64>,
    c: Vec<f64>,
    yy: f64,
    gram: Option<Vec<f64>>,
    /// Unpenalized columns first, then penalized, each ascending.
    order: Vec<usize>,
}

pub(crate) struct Solution {
    pub theta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

impl Problem {
    pub fn new(
        design: ArrayView2<f64>,
        response: &[f64],
        penalized: &[bool],
        standardize: bool,
    ) -> Self {
        let n = design.nrows();
        let m = design.ncols();
        let nf = n as f64;
        let y_mean = response.iter().sum::<f64>() / nf;
        let y_c: Vec<f64> = response.iter().map(|v| v - y_mean).collect();

        let mut cols = Vec::with_capacity(m);
        let mut x_mean = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        let mut diag = Vec::with_capacity(m);
        let mut c = Vec::with_capacity(m);
        for (j, col) in design.columns().into_iter().enumerate() {
            let (mu, sd) = column_moments(col);
            let constant = is_constant(mu, sd);
            let s = if standardize && penalized[j] && !constant {
                sd
            } else {
                1.0
            };
            let v: Vec<f64> = if constant {
                vec![0.0; n]
            } else {
                col.iter().map(|x| (x - mu) / s).collect()
            };
            diag.push(dot(&v, &v) / nf);
            c.push(dot(&v, &y_c) / nf);
            x_mean.push(mu);
            scale.push(s);
            cols.push(v);
        }
        let yy = dot(&y_c, &y_c) / nf;

        let gram = (n >= m && m <= MAX_GRAM_WIDTH).then(|| {
            let mut g = vec![0.0; m * m];
            for i in 0..m {
                g[i * m + i] = diag[i];
                for j in 0..i {
                    let v = dot(&cols[i], &cols[j]) / nf;
                    g[i * m + j] = v;
                    g[j * m + i] = v;
                }
            }
            g
        });

        let mut order: Vec<usize> = (0..m).filter(|&j| !penalized[j]).collect();
        order.extend((0..m).filter(|&j| penalized[j]));

        Self {
            n,
            m,
            cols,
            y_c,
            x_mean,
            scale,
            y_mean,
            penalized: penalized.to_vec(),
            diag,
            c,
            yy,
            gram,
            order,
        }
    }

    pub fn width(&self) -> usize {
        self.m
    }

    /// Smallest λ at which every penalized coefficient is zero: the largest
    /// |⟨D_j, r⟩|/n over penalized columns, with `r` the response residualized
    /// on the unpenalized columns. `None` if those columns are collinear.
    pub fn lambda_max(&self) -> Option<f64> {
        let unpen: Vec<usize> = (0..self.m)
            .filter(|&j| !self.penalized[j] && self.diag[j] > 0.0)
            .collect();
        let mut r = self.y_c.clone();
        if !unpen.is_empty() {
            let cols: Vec<&[f64]> = unpen.iter().map(|&j| self.cols[j].as_slice()).collect();
            let coef = ols(&cols, &r, 1e-10)?;
            for (k, &j) in unpen.iter().enumerate() {
                for (ri, xi) in r.iter_mut().zip(&self.cols[j]) {
                    *ri -= coef[k] * xi;
                }
            }
        }
        let nf = self.n as f64;
        Some(
            (0..self.m)
                .filter(|&j| self.penalized[j])
                .map(|j| {
                    if unpen.is_empty() {
                        self.c[j].abs()
                    } else {
                        (dot(&self.cols[j], &r) / nf).abs()
                    }
                })
                .fold(0.0, f64::max),
        )
    }

    /// Upper bound on |gradient| for a penalized column, used to judge whether
    /// λ_max is numerically zero.
    pub fn gradient_scale(&self) -> f64 {
        let d = (0..self.m)
            .filter(|&j| self.penalized[j])
            .map(|j| self.diag[j])
            .fold(0.0, f64::max);
        (self.yy * d).sqrt()
    }

    pub fn to_scaled(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.scale).map(|(b, s)| b * s).collect()
    }

    /// Original-unit coefficients and intercept for a scaled solution.
    pub fn to_original(&self, theta: &[f64]) -> (Vec<f64>, f64) {
        let beta: Vec<f64> = theta
            .iter()
            .zip(&self.scale)
            .enumerate()
            .map(|(j, (t, s))| if self.diag[j] > 0.0 { t / s } else { 0.0 })
            .collect();
        let intercept = self.y_mean - dot(&self.x_mean, &beta);
        (beta, intercept)
    }

    pub fn solve(
        &self,
        lambda: f64,
        theta0: Vec<f64>,
        tol: f64,
        max_iterations: usize,
        record: bool,
    ) -> Solution {
        let mut state = State::new(self, theta0);
        let mut trace = Vec::new();
        if record {
            trace.push(state.objective(lambda));
        }
        let mut iterations = 0;
        let mut converged = false;
        'outer: while iterations < max_iterations {
            let delta = state.sweep(&self.order, lambda);
            iterations += 1;
            if record {
                trace.push(state.objective(lambda));
            }
            if delta < tol && state.kkt_violation(lambda) <= tol {
                converged = true;
                break;
            }
            let active: Vec<usize> = self
                .order
                .iter()
                .copied()
                .filter(|&j| !self.penalized[j] || state.theta[j] != 0.0)
                .collect();
            loop {
                if iterations >= max_iterations {
                    break 'outer;
                }
                let delta = state.sweep(&active, lambda);
                iterations += 1;
                if record {
                    trace.push(state.objective(lambda));
                }
                if delta < tol {
                    break;
                }
            }
        }
        Solution {
            theta: state.theta,
            converged,
            iterations,
            trace,
        }
    }

    /// Largest KKT violation of `theta` on the scaled problem.
    pub fn kkt_violation(&self, theta: &[f64], lambda: f64) -> f64 {
        State::new(self, theta.to_vec()).kkt_violation(lambda)
    }
}

enum Track {
    /// `c − Gθ`
    Gradient(Vec<f64>),
    /// `y_c − Dθ`
    Residual(Vec<f64>),
}

struct State<'a> {
    p: &'a Problem,
    theta: Vec<f64>,
    track: Track,
}

impl<'a> State<'a> {
    fn new(p: &'a Problem, theta: Vec<f64>) -> Self {
        let track = match &p.gram {
            Some(g) => {
                let mut grad = p.c.clone();
                for (j, &t) in theta.iter().enumerate() {
                    if t != 0.0 {
                        for (k, gk) in grad.iter_mut().enumerate() {
                            *gk -= g[k * p.m + j] * t;
                        }
                    }
                }
                Track::Gradient(grad)
            }
            None => {
                let mut r = p.y_c.clone();
                for (j, &t) in theta.iter().enumerate() {
                    if t != 0.0 {
                        for (ri, xi) in r.iter_mut().zip(&p.cols[j]) {
                            *ri -= t * xi;
                        }
                    }
                }
                Track::Residual(r)
            }
        };
        Self { p, theta, track }
    }

    #[inline]
    fn gradient(&self, j: usize) -> f64 {
        match &self.track {
            Track::Gradient(g) => g[j],
            Track::Residual(r) => dot(&self.p.cols[j], r) / self.p.n as f64,
        }
    }

    /// One pass over `coords`; returns the largest change measured as
    /// |Δθ_j|·‖D_j‖/√n, which is the plain coefficient change on unit-variance
    /// columns.
    fn sweep(&mut self, coords: &[usize], lambda: f64) -> f64 {
        let mut max_change: f64 = 0.0;
        for &j in coords {
            let d = self.p.diag[j];
            if d <= 0.0 {
                continue;
            }
            let old = self.theta[j];
            let z = self.gradient(j) + d * old;
            let new = if self.p.penalized[j] {
                soft_threshold(z, lambda) / d
            } else {
                z / d
            };
            let delta = new - old;
            if delta == 0.0 {
                continue;
            }
            self.theta[j] = new;
            match &mut self.track {
                Track::Gradient(g) => {
                    let gram = self.p.gram.as_ref().expect("gradient mode has a Gram matrix");
                    let m = self.p.m;
                    for (k, gk) in g.iter_mut().enumerate() {
                        *gk -= gram[k * m + j] * delta;
                    }
                }
                Track::Residual(r) => {
                    for (ri, xi) in r.iter_mut().zip(&self.p.cols[j]) {
                        *ri -= delta * xi;
                    }
                }
            }
            max_change = max_change.max(delta.abs() * d.sqrt());
        }
        max_change
    }

    fn kkt_violation(&self, lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.p.m {
            if self.p.diag[j] <= 0.0 {
                continue;
            }
            let g = self.gradient(j);
            let v = if !self.p.penalized[j] {
                g.abs()
            } else if self.theta[j] != 0.0 {
                (g - lambda * self.theta[j].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    /// (1/2n)‖y_c − Dθ‖² + λ Σ_penalized |θ_j|
    fn objective(&self, lambda: f64) -> f64 {
        let loss = match &self.track {
            Track::Gradient(g) => {
                // ‖y − Dθ‖²/n = yy − θ·c − θ·(c − Gθ)
                0.5 * (self.p.yy - dot(&self.theta, &self.p.c) - dot(&self.theta, g))
            }
            Track::Residual(r) => 0.5 * dot(r, r) / self.p.n as f64,
        };
        let penalty: f64 = self
            .theta
            .iter()
            .zip(&self.p.penalized)
            .filter(|(_, &pen)| pen)
            .map(|(t, _)| t.abs())
            .sum();
        loss + lambda * penalty
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }
}
