//! Matrix-valued collection of observables: every measurement is credited to
//! all (AoA, AoD) pairs jointly covered by its receive and transmit masks.

use serde::{Deserialize, Serialize};

use crate::beamspace::BeamspaceMask;

use super::PairEstimate;

/// Accumulated energies `C[l][l']` (AoA rows, AoD columns) and the number of
/// measurements that credited each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct McoAccumulation {
    pub ue_dirs: usize,
    pub ap_dirs: usize,
    pub energy: Vec<f64>,
    pub visits: Vec<u32>,
}

impl McoAccumulation {
    pub fn new(ue_dirs: usize, ap_dirs: usize) -> Self {
        McoAccumulation {
            ue_dirs,
            ap_dirs,
            energy: vec![0.0; ue_dirs * ap_dirs],
            visits: vec![0; ue_dirs * ap_dirs],
        }
    }

    pub fn get(&self, aoa: usize, aod: usize) -> f64 {
        self.energy[aoa * self.ap_dirs + aod]
    }

    pub fn visit_count(&self, aoa: usize, aod: usize) -> u32 {
        self.visits[aoa * self.ap_dirs + aod]
    }

    /// Add the measurements of slot `s` of a (UE, pattern) block, laid out
    /// receive chain major, transmit chain minor.
    pub fn add_slot(&mut self, slot_values: &[f64], tx: &[BeamspaceMask], rx: &[BeamspaceMask]) {
        let n_ap = tx.len();
        for (j, r) in rx.iter().enumerate() {
            for (i, t) in tx.iter().enumerate() {
                let c = slot_values[j * n_ap + i];
                for &l in r.support() {
                    let base = l * self.ap_dirs;
                    for &lp in t.support() {
                        self.energy[base + lp] += c;
                        self.visits[base + lp] += 1;
                    }
                }
            }
        }
    }
}

/// Accumulate the first `slots` slots of a (UE, pattern) block.
///
/// # Panics
/// If the block or the schedules are shorter than `slots`.
pub fn mco_accumulate(
    block: &[f64],
    slots: usize,
    tx_schedule: &[Vec<BeamspaceMask>],
    rx_schedule: &[Vec<BeamspaceMask>],
) -> McoAccumulation {
    let ap_dirs = tx_schedule[0][0].dim();
    let ue_dirs = rx_schedule[0][0].dim();
    let per_slot = tx_schedule[0].len() * rx_schedule[0].len();
    let mut acc = McoAccumulation::new(ue_dirs, ap_dirs);
    for s in 0..slots {
        acc.add_slot(&block[s * per_slot..(s + 1) * per_slot], &tx_schedule[s], &rx_schedule[s]);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McoOptions {
    /// Rank pairs by energy per visit instead of accumulated energy.
    pub normalize_by_visits: bool,
    /// Subtract the noise floor from every credited measurement.
    pub subtract_noise_floor: bool,
}

impl Default for McoOptions {
    fn default() -> Self {
        McoOptions { normalize_by_visits: true, subtract_noise_floor: false }
    }
}

/// Largest entry among visited pairs, either as accumulated energy or as
/// energy per visit. Ties go to the lowest (AoA, AoD). `None` when nothing
/// carries energy. The reported strength is always the per-visit average.
pub fn mco_estimate(
    pattern: usize,
    acc: &McoAccumulation,
    options: &McoOptions,
    sigma2: f64,
) -> Option<PairEstimate> {
    if acc.energy.iter().all(|&e| e == 0.0) {
        return None;
    }
    let floor = if options.subtract_noise_floor { sigma2 } else { 0.0 };
    let mut best: Option<(usize, f64)> = None;
    for (idx, (&e, &n)) in acc.energy.iter().zip(&acc.visits).enumerate() {
        if n == 0 {
            continue;
        }
        let v = if options.normalize_by_visits { e / n as f64 - floor } else { e - floor * n as f64 };
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((idx, v));
        }
    }
    best.map(|(idx, _)| PairEstimate {
        pattern,
        aoa_index: idx / acc.ap_dirs,
        aod_index: idx % acc.ap_dirs,
        strength: (acc.energy[idx] / acc.visits[idx] as f64 - floor).max(0.0),
    })
}
