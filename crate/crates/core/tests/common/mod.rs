//! Reference implementations used as test oracles. Written independently of
//! the library code paths they check.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;

/// `[W]_{p,p'} = e^{i 2 pi p (p'/N - 1/2)} / sqrt(N)`, row-major.
pub fn dft_reference(n: usize) -> Vec<Complex64> {
    let mut w = Vec::with_capacity(n * n);
    for p in 0..n {
        for q in 0..n {
            let phase = 2.0 * PI * p as f64 * (q as f64 / n as f64 - 0.5);
            w.push(Complex64::from_polar(1.0 / (n as f64).sqrt(), phase));
        }
    }
    w
}

/// Unit-norm half-wavelength ULA response.
pub fn steering(n: usize, angle: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0 / (n as f64).sqrt(), PI * k as f64 * angle.sin()))
        .collect()
}

/// Dense complex matrix product `a (r x k) * b (k x c)`, row-major.
pub fn matmul(a: &[Complex64], b: &[Complex64], r: usize, k: usize, c: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); r * c];
    for i in 0..r {
        for l in 0..k {
            let x = a[i * k + l];
            for j in 0..c {
                out[i * c + j] += x * b[l * c + j];
            }
        }
    }
    out
}

/// Conjugate transpose of an `r x c` matrix.
pub fn adjoint(a: &[Complex64], r: usize, c: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j].conj();
        }
    }
    out
}

/// Accelerated projected gradient (FISTA with gradient restart) for
/// `min ||B x + sigma2 - c||^2, x >= 0`, with a dense row-major `B`.
/// Stops when the scaled KKT violation drops below `tol`.
pub fn fista_nnls(b: &[f64], rows: usize, cols: usize, c: &[f64], sigma2: f64, tol: f64, max_iters: usize) -> Vec<f64> {
    let target: Vec<f64> = c.iter().map(|v| v - sigma2).collect();
    let mul = |x: &[f64]| -> Vec<f64> {
        (0..rows).map(|r| (0..cols).map(|j| b[r * cols + j] * x[j]).sum()).collect()
    };
    let mul_t = |y: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for j in 0..cols {
                out[j] += b[r * cols + j] * y[r];
            }
        }
        out
    };
    // Lipschitz constant of the gradient by power iteration on B^T B.
    let mut v = vec![1.0; cols];
    let mut lip = 0.0;
    for _ in 0..500 {
        let w = mul_t(&mul(&v));
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lip = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (lip * 1.01).max(1e-300);
    let scale = mul_t(&target).iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);

    let grad = |x: &[f64]| -> Vec<f64> {
        let r: Vec<f64> = mul(x).iter().zip(&target).map(|(a, t)| a - t).collect();
        mul_t(&r)
    };
    let mut x = vec![0.0; cols];
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iters {
        let g = grad(&y);
        let x_new: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| (yi - step * gi).max(0.0)).collect();
        // Restart momentum when it points uphill.
        let uphill: f64 = g.iter().zip(x_new.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
        let t_new = if uphill > 0.0 { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        let beta = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_new };
        y = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = x_new;
        t = t_new;
        let gx = grad(&x);
        let kkt = x
            .iter()
            .zip(&gx)
            .map(|(&xi, &gi)| if xi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
            .fold(0.0, f64::max);
        if kkt <= tol * scale {
            break;
        }
    }
    x
}

pub fn objective(b: &[f64], rows: usize, cols: usize, x: &[f64], c: &[f64], sigma2: f64) -> f64 {
    (0..rows)
        .map(|r| {
            let bx: f64 = (0..cols).map(|j| b[r * cols + j] * x[j]).sum();
            (bx + sigma2 - c[r]).powi(2)
        })
        .sum()
}

/// Smallest `lo` and largest `hi` with `P(X < lo) <= alpha/2` and
/// `P(X > hi) <= alpha/2` for `X ~ Binomial(n, p)`.
pub fn binomial_band(n: u64, p: f64, alpha: f64) -> (u64, u64) {
    // Log pmf by recurrence from k = 0.
    let mut pmf = Vec::with_capacity(n as usize + 1);
    let mut log_p = n as f64 * (1.0 - p).ln();
    pmf.push(log_p.exp());
    for k in 1..=n {
        log_p += ((n - k + 1) as f64).ln() - (k as f64).ln() + p.ln() - (1.0 - p).ln();
        pmf.push(log_p.exp());
    }
    let mut lo = 0;
    let mut below = 0.0;
    while below + pmf[lo as usize] <= alpha / 2.0 {
        below += pmf[lo as usize];
        lo += 1;
    }
    let mut hi = n;
    let mut above = 0.0;
    while above + pmf[hi as usize] <= alpha / 2.0 {
        above += pmf[hi as usize];
        hi -= 1;
    }
    (lo, hi)
}
