//! Network side of the protocol: turn UE reports into AP-UE associations.

use serde::{Deserialize, Serialize};

use crate::estimators::PairEstimate;
use crate::patterns::PatternAssignment;

/// What a UE sends back after the beacon phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeReport {
    pub ue: usize,
    pub position: [f64; 2],
    /// Strongest pairs, strongest first.
    pub pairs: Vec<PairEstimate>,
}

/// Wire form of one reported pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub ue: usize,
    pub pattern: usize,
    pub aod_index: usize,
    pub aoa_index: usize,
    pub strength: f64,
}

impl UeReport {
    pub fn records(&self) -> Vec<EstimateRecord> {
        self.pairs
            .iter()
            .map(|p| EstimateRecord {
                ue: self.ue,
                pattern: p.pattern,
                aod_index: p.aod_index,
                aoa_index: p.aoa_index,
                strength: p.strength,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub ap: usize,
    pub pattern: usize,
    pub aod_index: usize,
    pub aoa_index: usize,
}

/// `per_ue[k]` holds the associations of UE `k`, in report order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssociationMap {
    pub per_ue: Vec<Vec<Association>>,
}

/// Resolve every reported pattern to the AP of that pattern closest to the
/// reporting UE. Patterns nobody transmits are dropped.
pub fn associate_ues(
    reports: &[UeReport],
    assignment: &PatternAssignment,
    ap_positions: &[[f64; 2]],
) -> AssociationMap {
    let members = assignment.members();
    let num_ues = reports.iter().map(|r| r.ue + 1).max().unwrap_or(0);
    let mut per_ue = vec![Vec::new(); num_ues];
    for report in reports {
        let [x, y] = report.position;
        for pair in &report.pairs {
            let nearest = members.get(pair.pattern).and_then(|aps| {
                aps.iter().copied().min_by(|&a, &b| {
                    let da = (ap_positions[a][0] - x).hypot(ap_positions[a][1] - y);
                    let db = (ap_positions[b][0] - x).hypot(ap_positions[b][1] - y);
                    da.total_cmp(&db)
                })
            });
            if let Some(ap) = nearest {
                per_ue[report.ue].push(Association {
                    ap,
                    pattern: pair.pattern,
                    aod_index: pair.aod_index,
                    aoa_index: pair.aoa_index,
                });
            }
        }
    }
    AssociationMap { per_ue }
}
