//! UE-side direction estimators.
//!
//! Both estimators consume the averaged energies of one (UE, pattern) block
//! together with the transmit and receive mask schedules, and return the
//! grid pair (AoD index, AoA index) of the dominant path.

pub mod mco;
pub mod nnls;
pub mod sco;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mco::{mco_accumulate, mco_estimate, McoAccumulation, McoOptions};
pub use nnls::{nnls_solve, nnls_solve_from, DenseMatrix, LinearOperator, NnlsOptions, NnlsSolution};
pub use sco::{build_sco_row, sco_estimate, MaskKronOperator, ScoOutcome, ScoSystem};

/// Which estimator produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Sco,
    Mco,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Sco => "sco",
            Estimator::Mco => "mco",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sco" => Ok(Estimator::Sco),
            "mco" => Ok(Estimator::Mco),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Detected dominant pair for one pattern. Grid indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub pattern: usize,
    pub aod_index: usize,
    pub aoa_index: usize,
    pub strength: f64,
}

/// Zero-based lexicographic argmax of `values` laid out row-major with
/// `cols` columns; ties go to the smallest (row, col).
pub(crate) fn argmax_2d(values: &[f64], cols: usize) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((idx, v));
        }
    }
    best.map(|(idx, v)| (idx / cols, idx % cols, v))
}

/// The `n_d` estimates with the largest strength, strongest first; equal
/// strengths are ordered by pattern index.
pub fn select_top_pairs(estimates: &[PairEstimate], n_d: usize) -> Result<Vec<PairEstimate>> {
    if n_d > estimates.len() {
        return Err(Error::TooManyPairs { requested: n_d, available: estimates.len() });
    }
    let mut sorted = estimates.to_vec();
    sorted.sort_by(|a, b| b.strength.total_cmp(&a.strength).then(a.pattern.cmp(&b.pattern)));
    sorted.truncate(n_d);
    Ok(sorted)
}
