//! Non-negative least squares by spectral projected gradient.
//!
//! Solves `min ||B x + sigma2 1 - c||^2` subject to `x >= 0` with
//! Barzilai-Borwein steps, projection onto the non-negative orthant and a
//! non-monotone Armijo safeguard whose reference value is a running average
//! of past objectives (Zhang-Hager).

use log::warn;
use serde::{Deserialize, Serialize};

/// A real linear map `B` known through products with `B` and `B^T`.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `y = B x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `x = B^T y`.
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]);
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "dense matrix data length");
        DenseMatrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        DenseMatrix { rows: n, cols: n, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

impl LinearOperator for DenseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (r, &w) in y.iter().enumerate() {
            if w != 0.0 {
                for (acc, a) in x.iter_mut().zip(self.row(r)) {
                    *acc += a * w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnlsOptions {
    /// Relative KKT tolerance, scaled by `||B^T (c - sigma2 1)||_inf`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions { tol: 1e-8, max_iters: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    /// `||B x + sigma2 1 - c||^2`.
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iters` ran out; `x` is then the best iterate found.
    pub converged: bool,
    /// Final scaled KKT residual.
    pub kkt_residual: f64,
    /// Smallest coordinate over all iterates.
    pub min_iterate: f64,
}

/// Weight of past objectives in the non-monotone reference value.
const AVERAGING: f64 = 0.85;
const ARMIJO: f64 = 1e-4;
const STEP_MIN: f64 = 1e-30;
const STEP_MAX: f64 = 1e30;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scaled KKT violation of `x` given the gradient `g` of the half objective.
fn kkt_violation(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| if xi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max)
}

pub fn nnls_solve<B: LinearOperator + ?Sized>(
    op: &B,
    c: &[f64],
    sigma2: f64,
    options: &NnlsOptions,
) -> NnlsSolution {
    nnls_solve_from(op, c, sigma2, options, None)
}

/// Like [`nnls_solve`], starting from the projection of `start` when given.
pub fn nnls_solve_from<B: LinearOperator + ?Sized>(
    op: &B,
    c: &[f64],
    sigma2: f64,
    options: &NnlsOptions,
    start: Option<&[f64]>,
) -> NnlsSolution {
    let (m, n) = (op.rows(), op.cols());
    assert_eq!(c.len(), m, "measurement length must match operator rows");
    let target: Vec<f64> = c.iter().map(|v| v - sigma2).collect();

    let mut atb = vec![0.0; n];
    op.apply_transpose(&target, &mut atb);
    let scale = atb.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut x: Vec<f64> = match start {
        Some(s) => s.iter().map(|v| v.max(0.0)).collect(),
        None => vec![0.0; n],
    };
    let mut bx = vec![0.0; m];
    op.apply(&x, &mut bx);
    let mut resid: Vec<f64> = bx.iter().zip(&target).map(|(a, b)| a - b).collect();
    let mut grad = vec![0.0; n];
    op.apply_transpose(&resid, &mut grad);
    let mut f = 0.5 * dot(&resid, &resid);

    if scale == 0.0 {
        // Every column is orthogonal to the target: x = 0 is optimal.
        let zero = vec![0.0; n];
        let objective = target.iter().map(|t| t * t).sum();
        return NnlsSolution { x: zero, objective, iterations: 0, converged: true, kkt_residual: 0.0, min_iterate: 0.0 };
    }
    let threshold = options.tol * scale;

    let mut reference = f;
    let mut weight = 1.0;
    let mut min_iterate = x.iter().copied().fold(f64::INFINITY, f64::min);
    let mut step = {
        let pg: f64 = x
            .iter()
            .zip(&grad)
            .map(|(&xi, &gi)| ((xi - gi).max(0.0) - xi).abs())
            .fold(0.0, f64::max);
        if pg > 0.0 { (1.0 / pg).clamp(STEP_MIN, STEP_MAX) } else { 1.0 }
    };

    let mut dir = vec![0.0; n];
    let mut bdir = vec![0.0; m];
    let mut x_new = vec![0.0; n];
    let mut resid_new = vec![0.0; m];
    let mut grad_new = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = kkt_violation(&x, &grad);

    while iterations < options.max_iters {
        if kkt <= threshold {
            converged = true;
            break;
        }
        iterations += 1;
        for ((d, &xi), &gi) in dir.iter_mut().zip(&x).zip(&grad) {
            *d = (xi - step * gi).max(0.0) - xi;
        }
        op.apply(&dir, &mut bdir);
        let gd = dot(&grad, &dir);
        let dd = dot(&bdir, &bdir);
        let rd = dot(&resid, &bdir);
        let f_ref = reference;

        // f(x + t d) = f + t rd + t^2 dd / 2 is exact for a quadratic.
        let mut t = 1.0;
        loop {
            let f_trial = f + t * rd + 0.5 * t * t * dd;
            if f_trial <= f_ref + ARMIJO * t * gd || t < 1e-12 {
                break;
            }
            let denom = 2.0 * (f_trial - f - t * gd);
            let t_quad = if denom > 0.0 { -gd * t * t / denom } else { t / 2.0 };
            t = if t_quad >= 0.1 * t && t_quad <= 0.9 * t { t_quad } else { t / 2.0 };
        }

        for ((xn, &xi), &d) in x_new.iter_mut().zip(&x).zip(&dir) {
            *xn = (xi + t * d).max(0.0);
        }
        for ((rn, &r), &bd) in resid_new.iter_mut().zip(&resid).zip(&bdir) {
            *rn = r + t * bd;
        }
        op.apply_transpose(&resid_new, &mut grad_new);

        let (mut ss, mut sy) = (0.0, 0.0);
        for l in 0..n {
            let s = x_new[l] - x[l];
            let y = grad_new[l] - grad[l];
            ss += s * s;
            sy += s * y;
        }
        step = if sy <= 0.0 { STEP_MAX } else { (ss / sy).clamp(STEP_MIN, STEP_MAX) };

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut resid, &mut resid_new);
        std::mem::swap(&mut grad, &mut grad_new);
        f = 0.5 * dot(&resid, &resid);
        weight = AVERAGING * weight + 1.0;
        reference += (f - reference) / weight;
        min_iterate = x.iter().copied().fold(min_iterate, f64::min);
        kkt = kkt_violation(&x, &grad);
        if ss == 0.0 && kkt > threshold {
            // Stalled at round-off; nothing further to gain.
            break;
        }
    }
    if kkt <= threshold {
        converged = true;
    }
    if !converged {
        warn!("NNLS stopped after {iterations} iterations with KKT residual {:.3e}", kkt / scale);
    }
    // Recompute the residual from scratch to shed accumulated drift.
    op.apply(&x, &mut bx);
    let objective = bx.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
    NnlsSolution { x, objective, iterations, converged, kkt_residual: kkt / scale, min_iterate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn identity_system_returns_measurements() {
        let b = DenseMatrix::identity(5);
        let c = [0.5, 0.0, 2.0, 1.25, 3.0];
        let sol = nnls_solve(&b, &c, 0.0, &NnlsOptions::default());
        assert!(sol.converged);
        for (x, y) in sol.x.iter().zip(&c) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_solution_is_clipped() {
        let b = DenseMatrix::identity(4);
        let sol = nnls_solve(&b, &[0.5; 4], 1.0, &NnlsOptions::default());
        assert!(sol.converged);
        assert!(sol.x.iter().all(|&v| v == 0.0));
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_budget_is_reported() {
        let mut rng = substream(2, Stream::Noise, &[]);
        let data: Vec<f64> = (0..40 * 30).map(|_| rng.random::<f64>()).collect();
        let b = DenseMatrix::new(40, 30, data);
        let c: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 10.0).collect();
        let sol = nnls_solve(&b, &c, 0.0, &NnlsOptions { tol: 1e-14, max_iters: 2 });
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!(sol.x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn overdetermined_problems_converge() {
        // A max-of-history reference lets BB steps cycle on some of these.
        let (m, n) = (64, 48);
        let mut rng = substream(202, Stream::Noise, &[]);
        for case in 0..100 {
            let b: Vec<f64> = (0..m * n).map(|_| rng.random::<f64>()).collect();
            let x: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.3 { rng.random::<f64>() * 3.0 } else { 0.0 }).collect();
            let sigma2 = rng.random::<f64>();
            let c: Vec<f64> = (0..m)
                .map(|r| (0..n).map(|j| b[r * n + j] * x[j]).sum::<f64>() + sigma2 + rng.random_range(-1.0..1.0))
                .collect();
            let sol = nnls_solve(&DenseMatrix::new(m, n, b), &c, sigma2, &NnlsOptions::default());
            assert!(sol.converged, "case {case}: KKT {:e} after {}", sol.kkt_residual, sol.iterations);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn solution_is_feasible_and_beats_zero(seed in any::<u64>(), m in 2usize..30, n in 2usize..30, sigma2 in 0.0f64..2.0) {
            let mut rng = substream(seed, Stream::Noise, &[]);
            let data: Vec<f64> = (0..m * n).map(|_| rng.random::<f64>()).collect();
            let b = DenseMatrix::new(m, n, data);
            let c: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 5.0).collect();
            let sol = nnls_solve(&b, &c, sigma2, &NnlsOptions::default());
            prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
            prop_assert!(sol.min_iterate >= 0.0);
            let at_zero: f64 = c.iter().map(|v| (sigma2 - v).powi(2)).sum();
            prop_assert!(sol.objective <= at_zero * (1.0 + 1e-12));
        }
    }
}
