//! Detection bookkeeping: per-trial success flags and the aggregated
//! detection probability per configuration point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Estimator, PairEstimate};

use super::truth::GroundTruth;

/// How data patterns were mapped onto APs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    /// Location-based (clustered) assignment.
    Lb,
    /// Balanced random assignment.
    Ra,
}

impl AssignmentMode {
    pub fn name(self) -> &'static str {
        match self {
            AssignmentMode::Lb => "lb",
            AssignmentMode::Ra => "ra",
        }
    }
}

impl std::fmt::Display for AssignmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AssignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lb" => Ok(AssignmentMode::Lb),
            "ra" => Ok(AssignmentMode::Ra),
            other => Err(Error::Config(format!("unknown assignment mode `{other}`"))),
        }
    }
}

/// Success flags of UE `ue` for its `n_d` strongest detectable patterns.
///
/// `estimates` is indexed by pattern. A trial succeeds only when the
/// estimated AoD and AoA grid indices both equal the true ones. Fewer than
/// `n_d` flags come back when the UE sees fewer detectable patterns.
pub fn evaluate_detection(
    estimates: &[Option<PairEstimate>],
    truth: &GroundTruth,
    ue: usize,
    n_d: usize,
) -> Vec<bool> {
    truth
        .ranked(ue)
        .iter()
        .take(n_d)
        .map(|t| {
            estimates[t.pattern]
                .is_some_and(|e| e.aod_index == t.aod_index && e.aoa_index == t.aoa_index)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub estimator: Estimator,
    pub assignment: AssignmentMode,
    pub d: usize,
    pub nu_ap: usize,
    pub nu_ue: usize,
    pub n_d: usize,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub trials: u64,
    pub successes: u64,
    /// Trials skipped because the pattern had no path to the UE.
    pub excluded: u64,
}

impl Tally {
    pub fn record(&mut self, flags: &[bool], n_d: usize) {
        self.trials += flags.len() as u64;
        self.successes += flags.iter().filter(|&&f| f).count() as u64;
        self.excluded += n_d.saturating_sub(flags.len()) as u64;
    }

    pub fn merge(&mut self, other: &Tally) {
        self.trials += other.trials;
        self.successes += other.successes;
        self.excluded += other.excluded;
    }

    pub fn probability(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    /// Half-width of the normal-approximation 95% interval.
    pub fn ci95(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.probability();
        1.959_963_984_540_054 * (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// One exported line: a configuration point and its tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub estimator: Estimator,
    pub assignment: AssignmentMode,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "nu_AP")]
    pub nu_ap: usize,
    #[serde(rename = "nu_UE")]
    pub nu_ue: usize,
    #[serde(rename = "N_D")]
    pub n_d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub trials: u64,
    pub successes: u64,
    pub prob: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StatsFile {
    rows: Vec<StatsRow>,
    excluded: Vec<u64>,
}

/// Tallies per configuration point. Merging is commutative and associative.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "StatsFile", try_from = "StatsFile")]
pub struct DetectionStats {
    tallies: BTreeMap<ConfigPoint, Tally>,
}

impl DetectionStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tallies.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tallies.len()
    }

    pub fn entry(&mut self, point: ConfigPoint) -> &mut Tally {
        self.tallies.entry(point).or_default()
    }

    pub fn get(&self, point: &ConfigPoint) -> Option<&Tally> {
        self.tallies.get(point)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConfigPoint, &Tally)> {
        self.tallies.iter()
    }

    pub fn merge(&mut self, other: &DetectionStats) {
        for (p, t) in &other.tallies {
            self.entry(*p).merge(t);
        }
    }

    /// Points matching `filter`, in key order.
    pub fn select(&self, filter: impl Fn(&ConfigPoint) -> bool) -> Vec<(ConfigPoint, Tally)> {
        self.tallies.iter().filter(|(p, _)| filter(p)).map(|(p, t)| (*p, *t)).collect()
    }

    pub fn rows(&self) -> Vec<StatsRow> {
        self.tallies
            .iter()
            .map(|(p, t)| StatsRow {
                estimator: p.estimator,
                assignment: p.assignment,
                d: p.d,
                nu_ap: p.nu_ap,
                nu_ue: p.nu_ue,
                n_d: p.n_d,
                t: p.t,
                trials: t.trials,
                successes: t.successes,
                prob: t.probability(),
                ci95: t.ci95(),
            })
            .collect()
    }
}

impl From<DetectionStats> for StatsFile {
    fn from(stats: DetectionStats) -> Self {
        let excluded = stats.tallies.values().map(|t| t.excluded).collect();
        StatsFile { rows: stats.rows(), excluded }
    }
}

impl TryFrom<StatsFile> for DetectionStats {
    type Error = String;

    fn try_from(file: StatsFile) -> std::result::Result<Self, String> {
        if file.excluded.len() != file.rows.len() {
            return Err(format!("{} rows but {} exclusion counts", file.rows.len(), file.excluded.len()));
        }
        let mut stats = DetectionStats::new();
        for (r, &excluded) in file.rows.iter().zip(&file.excluded) {
            if r.successes > r.trials {
                return Err(format!("{} successes out of {} trials", r.successes, r.trials));
            }
            let point = ConfigPoint {
                estimator: r.estimator,
                assignment: r.assignment,
                d: r.d,
                nu_ap: r.nu_ap,
                nu_ue: r.nu_ue,
                n_d: r.n_d,
                t: r.t,
            };
            stats.entry(point).merge(&Tally { trials: r.trials, successes: r.successes, excluded });
        }
        Ok(stats)
    }
}
