//! Stacked collection of observables: invert the quadratic measurement model
//! with non-negative least squares over the full (AoD, AoA) grid.

use crate::beamspace::BeamspaceMask;
use crate::error::{Error, Result};

use super::nnls::{nnls_solve, DenseMatrix, LinearOperator, NnlsOptions};
use super::{argmax_2d, PairEstimate};

/// Measurement row `(p (x) r) / (||p|| ||r||)` where `p` and `r` are the
/// elementwise power profiles of the normalized transmit and receive masks.
///
/// Entry `u * N_UE + u'` belongs to AoD `u` and AoA `u'`.
pub fn build_sco_row(tx: &BeamspaceMask, rx: &BeamspaceMask) -> Vec<f64> {
    let n_ue = rx.dim();
    let mut row = vec![0.0; tx.dim() * n_ue];
    let w = row_weight(tx, rx);
    for &u in tx.support() {
        for &v in rx.support() {
            row[u * n_ue + v] = w;
        }
    }
    row
}

/// Common value of the non-zero entries of a measurement row.
fn row_weight(tx: &BeamspaceMask, rx: &BeamspaceMask) -> f64 {
    let (pt, pr) = (1.0 / tx.fingers() as f64, 1.0 / rx.fingers() as f64);
    let norm_t = (tx.fingers() as f64).sqrt() * pt;
    let norm_r = (rx.fingers() as f64).sqrt() * pr;
    pt * pr / (norm_t * norm_r)
}

fn check_schedule(
    block: &[f64],
    slots: usize,
    tx_schedule: &[Vec<BeamspaceMask>],
    rx_schedule: &[Vec<BeamspaceMask>],
) -> Result<(usize, usize)> {
    if tx_schedule.len() < slots || rx_schedule.len() < slots || slots == 0 {
        return Err(Error::DimensionMismatch {
            expected: format!("{slots} scheduled slots"),
            got: format!("{} tx / {} rx", tx_schedule.len(), rx_schedule.len()),
        });
    }
    let n_ap = tx_schedule[0].len();
    let n_ue = rx_schedule[0].len();
    if block.len() < slots * n_ap * n_ue {
        return Err(Error::DimensionMismatch {
            expected: format!("{} observables", slots * n_ap * n_ue),
            got: block.len().to_string(),
        });
    }
    Ok((n_ap, n_ue))
}

/// Dense form of the stacked system, rows ordered slot-major, then receive
/// chain, then transmit chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoSystem {
    pub b: DenseMatrix,
    pub c: Vec<f64>,
    pub sigma2: f64,
}

impl ScoSystem {
    pub fn build(
        block: &[f64],
        slots: usize,
        tx_schedule: &[Vec<BeamspaceMask>],
        rx_schedule: &[Vec<BeamspaceMask>],
        sigma2: f64,
    ) -> Result<Self> {
        let (n_ap, n_ue) = check_schedule(block, slots, tx_schedule, rx_schedule)?;
        let cols = tx_schedule[0][0].dim() * rx_schedule[0][0].dim();
        let rows = slots * n_ap * n_ue;
        let mut data = Vec::with_capacity(rows * cols);
        for s in 0..slots {
            for rx in &rx_schedule[s] {
                for tx in &tx_schedule[s] {
                    data.extend(build_sco_row(tx, rx));
                }
            }
        }
        Ok(ScoSystem { b: DenseMatrix::new(rows, cols, data), c: block[..rows].to_vec(), sigma2 })
    }
}

/// The stacked measurement matrix applied through the mask supports:
/// each product costs `nu_AP * nu_UE` operations per row.
#[derive(Debug, Clone)]
pub struct MaskKronOperator {
    ue_dirs: usize,
    cols: usize,
    rows: Vec<(Vec<usize>, Vec<usize>, f64)>,
}

impl MaskKronOperator {
    pub fn new(
        slots: usize,
        tx_schedule: &[Vec<BeamspaceMask>],
        rx_schedule: &[Vec<BeamspaceMask>],
    ) -> Self {
        let ue_dirs = rx_schedule[0][0].dim();
        let cols = tx_schedule[0][0].dim() * ue_dirs;
        let mut rows = Vec::new();
        for s in 0..slots {
            for rx in &rx_schedule[s] {
                for tx in &tx_schedule[s] {
                    rows.push((tx.support().to_vec(), rx.support().to_vec(), row_weight(tx, rx)));
                }
            }
        }
        MaskKronOperator { ue_dirs, cols, rows }
    }
}

impl LinearOperator for MaskKronOperator {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((tx, rx, w), out) in self.rows.iter().zip(y.iter_mut()) {
            let mut acc = 0.0;
            for &u in tx {
                let base = u * self.ue_dirs;
                for &v in rx {
                    acc += x[base + v];
                }
            }
            *out = acc * w;
        }
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for ((tx, rx, w), &val) in self.rows.iter().zip(y) {
            let add = val * w;
            for &u in tx {
                let base = u * self.ue_dirs;
                for &v in rx {
                    x[base + v] += add;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoOutcome {
    /// `None` when the solution is identically zero.
    pub estimate: Option<PairEstimate>,
    /// Power estimates `Xi[u][u']`, row-major with AoD rows.
    pub xi: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Solve the stacked system of one (UE, pattern) block over its first
/// `slots` slots and return the largest entry of the power map.
pub fn sco_estimate(
    pattern: usize,
    block: &[f64],
    slots: usize,
    tx_schedule: &[Vec<BeamspaceMask>],
    rx_schedule: &[Vec<BeamspaceMask>],
    sigma2: f64,
    options: &NnlsOptions,
) -> Result<ScoOutcome> {
    let (n_ap, n_ue) = check_schedule(block, slots, tx_schedule, rx_schedule)?;
    let op = MaskKronOperator::new(slots, tx_schedule, rx_schedule);
    let c = &block[..slots * n_ap * n_ue];
    let ue_dirs = rx_schedule[0][0].dim();

    // Work in units of the largest measurement; the solution scales back linearly.
    let scale = c.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if scale == 0.0 {
        return Ok(ScoOutcome { estimate: None, xi: vec![0.0; op.cols()], converged: true, iterations: 0 });
    }
    let scaled: Vec<f64> = c.iter().map(|v| v / scale).collect();
    let sol = nnls_solve(&op, &scaled, sigma2 / scale, options);
    let xi: Vec<f64> = sol.x.iter().map(|v| v * scale).collect();
    let estimate = argmax_2d(&xi, ue_dirs).and_then(|(u, v, strength)| {
        (strength > 0.0).then_some(PairEstimate { pattern, aod_index: u, aoa_index: v, strength })
    });
    Ok(ScoOutcome { estimate, xi, converged: sol.converged, iterations: sol.iterations })
}
