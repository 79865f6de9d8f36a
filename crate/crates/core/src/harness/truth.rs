//! Ground truth: the dominant path of every (UE, pattern) pair.

use serde::{Deserialize, Serialize};

use crate::beamspace::nearest_grid_index;
use crate::patterns::PatternAssignment;
use crate::scenario::ChannelGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternTruth {
    pub pattern: usize,
    /// Dominant AP among those transmitting the pattern.
    pub ap: usize,
    /// Index of the dominant path in the link's path list.
    pub path: usize,
    pub aod_index: usize,
    pub aoa_index: usize,
    /// Gain variance of the dominant path.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub num_ues: usize,
    pub num_patterns: usize,
    /// `entries[k * D + d]`; `None` when no AP of pattern `d` reaches UE `k`.
    pub entries: Vec<Option<PatternTruth>>,
}

impl GroundTruth {
    pub fn get(&self, ue: usize, pattern: usize) -> Option<&PatternTruth> {
        self.entries[ue * self.num_patterns + pattern].as_ref()
    }

    /// Detectable patterns of UE `k`, strongest first; ties by pattern index.
    pub fn ranked(&self, ue: usize) -> Vec<PatternTruth> {
        let mut out: Vec<PatternTruth> = (0..self.num_patterns).filter_map(|d| self.get(ue, d).copied()).collect();
        out.sort_by(|a, b| b.strength.total_cmp(&a.strength).then(a.pattern.cmp(&b.pattern)));
        out
    }

    pub fn undetectable(&self) -> usize {
        self.entries.iter().filter(|e| e.is_none()).count()
    }
}

/// Dominant (AP, path) per (UE, pattern) by gain variance, first in AP then
/// path order on ties, with its angles quantized to the DFT grids.
pub fn compute_ground_truth(
    geometry: &ChannelGeometry,
    assignment: &PatternAssignment,
    ap_antennas: usize,
    ue_antennas: usize,
) -> GroundTruth {
    let members = assignment.members();
    let d_count = assignment.num_patterns;
    let mut entries = Vec::with_capacity(geometry.num_ues * d_count);
    for k in 0..geometry.num_ues {
        for (d, aps) in members.iter().enumerate() {
            let mut best: Option<PatternTruth> = None;
            for &m in aps {
                for (l, path) in geometry.link(k, m).iter().enumerate() {
                    if best.is_none_or(|b| path.gain_var > b.strength) {
                        best = Some(PatternTruth {
                            pattern: d,
                            ap: m,
                            path: l,
                            aod_index: nearest_grid_index(path.aod, ap_antennas),
                            aoa_index: nearest_grid_index(path.aoa, ue_antennas),
                            strength: path.gain_var,
                        });
                    }
                }
            }
            entries.push(best);
        }
    }
    let truth = GroundTruth { num_ues: geometry.num_ues, num_patterns: d_count, entries };
    let missing = truth.undetectable();
    if missing > 0 {
        log::debug!("{missing} (UE, pattern) pairs have no path and are excluded");
    }
    truth
}
