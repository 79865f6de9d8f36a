//! DFT dictionaries, ULA responses and beamspace masks.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Unitary DFT matrix together with the grid of angles its columns steer to.
///
/// Column `u` (zero-based) is the half-wavelength ULA response towards the
/// grid angle whose sine is `2u/N - 1`.
#[derive(Debug, Clone)]
pub struct DftDictionary {
    n: usize,
    matrix: CMatrix,
    grid: Vec<f64>,
}

impl DftDictionary {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("N", "dictionary dimension must be positive"));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let matrix = CMatrix::from_fn(n, n, |p, q| {
            let phase = 2.0 * PI * p as f64 * (q as f64 / n as f64 - 0.5);
            Complex64::from_polar(scale, phase)
        });
        let grid = (0..n).map(|u| grid_sine(u, n).asin()).collect();
        Ok(DftDictionary { n, matrix, grid })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Grid angles in radians, strictly increasing from `-pi/2`.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `W^H a(angle)`: coordinates of the array response in the DFT basis.
    pub fn beamspace_response(&self, angle: f64) -> Vec<Complex64> {
        let a = array_response(self.n, angle);
        (0..self.n)
            .map(|u| self.matrix.column(u).iter().zip(&a).map(|(w, x)| w.conj() * x).sum())
            .collect()
    }
}

/// Build the `N x N` unitary DFT dictionary.
pub fn dft_matrix(n: usize) -> Result<DftDictionary> {
    DftDictionary::new(n)
}

fn grid_sine(u: usize, n: usize) -> f64 {
    2.0 * u as f64 / n as f64 - 1.0
}

/// Unit-norm half-wavelength ULA response `exp(i pi n sin(angle)) / sqrt(N)`.
pub fn array_response(n: usize, angle: f64) -> Vec<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let s = angle.sin();
    (0..n).map(|k| Complex64::from_polar(scale, PI * k as f64 * s)).collect()
}

/// Zero-based index of the grid angle nearest to `angle` in the sine domain.
///
/// Distances wrap with period 2: the DFT beams are periodic in the sine, so
/// a path with sine close to +1 lands in beam 0 (sine -1). Ties go to the
/// lower index.
pub fn nearest_grid_index(angle: f64, n: usize) -> usize {
    let s = angle.clamp(-FRAC_PI_2, FRAC_PI_2).sin();
    // Fractional grid position in [0, n]; the candidates are its floor and
    // ceiling, taken modulo n.
    let pos = (s + 1.0) * n as f64 / 2.0;
    let lo = (pos.floor() as usize).min(n) % n;
    let hi = (lo + 1) % n;
    let (d_lo, d_hi) = (circular_sine_distance(s, lo, n), circular_sine_distance(s, hi, n));
    if d_hi < d_lo || (d_hi == d_lo && hi < lo) {
        hi
    } else {
        lo
    }
}

fn circular_sine_distance(s: f64, u: usize, n: usize) -> f64 {
    let d = (s - grid_sine(u, n)).abs();
    d.min(2.0 - d)
}

/// Two-sided transform `W_rx^H H W_tx` of an `N_rx x N_tx` channel matrix.
pub fn to_beamspace(h: &CMatrix, rx: &DftDictionary, tx: &DftDictionary) -> Result<CMatrix> {
    if h.nrows() != rx.dim() || h.ncols() != tx.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", rx.dim(), tx.dim()),
            got: format!("{}x{}", h.nrows(), h.ncols()),
        });
    }
    Ok(rx.matrix().adjoint() * h * tx.matrix())
}

/// A 0/1 beamspace beamformer with `nu` active fingers.
///
/// As a beamforming vector it is scaled by `1/sqrt(nu)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamspaceMask {
    n: usize,
    support: Vec<usize>,
}

impl BeamspaceMask {
    /// Mask over `n` directions with ones at `support`; the support is sorted
    /// and must contain distinct in-range indices.
    pub fn new(n: usize, mut support: Vec<usize>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptyMask);
        }
        support.sort_unstable();
        if support.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("support", "duplicate finger position"));
        }
        if *support.last().unwrap() >= n {
            return Err(Error::param("support", format!("finger position out of range 0..{n}")));
        }
        Ok(BeamspaceMask { n, support })
    }

    pub fn full(n: usize) -> Self {
        BeamspaceMask { n, support: (0..n).collect() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fingers(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.support.binary_search(&idx).is_ok()
    }

    /// Normalized beamforming weight of each active finger.
    pub fn amplitude(&self) -> f64 {
        1.0 / (self.support.len() as f64).sqrt()
    }

    /// Dense beamspace vector with the `1/sqrt(nu)` normalization applied.
    pub fn to_vector(&self) -> Vec<Complex64> {
        let a = self.amplitude();
        let mut v = vec![Complex64::new(0.0, 0.0); self.n];
        for &u in &self.support {
            v[u] = Complex64::new(a, 0.0);
        }
        v
    }

    /// `sum over fingers of coords[u]`, scaled by `1/sqrt(nu)`: the inner
    /// product of the normalized mask with `coords`.
    pub fn project(&self, coords: &[Complex64]) -> Complex64 {
        let s: Complex64 = self.support.iter().map(|&u| coords[u]).sum();
        s * self.amplitude()
    }
}
