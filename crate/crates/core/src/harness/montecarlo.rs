//! Monte Carlo driver: run the beacon phase over many drops and tally
//! detection per configuration point.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::airlink::{synthesize_observables, AirlinkInputs, AirlinkOptions, LinkBank, QuadraticObservables, SlotGains};
use crate::beamspace::DftDictionary;
use crate::error::{Error, Result};
use crate::estimators::{
    mco_estimate, sco_estimate, select_top_pairs, Estimator, McoAccumulation, McoOptions, NnlsOptions, PairEstimate,
};
use crate::params::SimParams;
use crate::patterns::{
    assign_patterns_lb, assign_patterns_random, build_patterns, build_ue_codebook, DataPattern, PatternAssignment,
    PatternLayout, UeCodebook,
};
use crate::rng::{substream, Stream};
use crate::scenario::{build_channel_geometry, generate_drop, ChannelGeometry, ChannelModel, ScenarioDrop};

use super::association::{associate_ues, AssociationMap, UeReport};
use super::detection::{evaluate_detection, AssignmentMode, ConfigPoint, DetectionStats};
use super::truth::{compute_ground_truth, GroundTruth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub drops: usize,
    /// Index of the first drop; drops are numbered consecutively from here.
    pub first_drop: u64,
    /// Slot counts at which detection is measured.
    pub t_values: Vec<usize>,
    pub estimators: Vec<Estimator>,
    pub assignments: Vec<AssignmentMode>,
    pub num_detect: Vec<usize>,
    pub kmeans_max_iters: usize,
    pub permute_per_slot: bool,
    pub nnls: NnlsOptions,
    pub mco: McoOptions,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            drops: 100,
            first_drop: 0,
            t_values: vec![1, 2, 5, 10, 15, 20],
            estimators: vec![Estimator::Sco, Estimator::Mco],
            assignments: vec![AssignmentMode::Lb, AssignmentMode::Ra],
            num_detect: vec![1, 2],
            kmeans_max_iters: 100,
            permute_per_slot: false,
            nnls: NnlsOptions::default(),
            mco: McoOptions::default(),
        }
    }
}

/// Complete description of a simulation campaign.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimParams,
    pub channel: ChannelModel,
    pub airlink: AirlinkOptions,
    pub run: RunSettings,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let config: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read a TOML file and apply `key.path=value` overrides on top.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        apply_overrides(&mut table, overrides)?;
        Self::from_table(table)
    }

    /// Defaults with `key.path=value` overrides applied.
    pub fn from_overrides(overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::new();
        apply_overrides(&mut table, overrides)?;
        Self::from_table(table)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn max_slots(&self) -> usize {
        self.run.t_values.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let r = &self.run;
        if r.drops == 0 {
            return Err(Error::param("run.drops", "must be positive"));
        }
        if r.t_values.is_empty() || r.t_values.contains(&0) {
            return Err(Error::param("run.t_values", "must be a non-empty list of positive slot counts"));
        }
        if self.max_slots() > self.sim.max_slots {
            return Err(Error::param(
                "run.t_values",
                format!("largest T {} exceeds sim.max_slots {}", self.max_slots(), self.sim.max_slots),
            ));
        }
        if r.estimators.is_empty() {
            return Err(Error::param("run.estimators", "must not be empty"));
        }
        if r.assignments.is_empty() {
            return Err(Error::param("run.assignments", "must not be empty"));
        }
        let d = self.sim.num_patterns();
        for &n in &r.num_detect {
            if n == 0 {
                return Err(Error::param("run.num_detect", "entries must be positive"));
            }
            if n > d {
                return Err(Error::TooManyPairs { requested: n, available: d });
            }
        }
        if r.num_detect.is_empty() {
            return Err(Error::param("run.num_detect", "must not be empty"));
        }
        Ok(())
    }
}

/// Set `a.b.c = value` in `table` for every `a.b.c=value` string. Values are
/// read as TOML; anything that does not parse is taken as a string.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
        let value = parse_value(raw.trim());
        let parts: Vec<&str> = key.trim().split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("override `{item}` has an empty key segment")));
        }
        let mut node = &mut *table;
        for part in &parts[..parts.len() - 1] {
            let entry = node
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{item}`: `{part}` is not a table")))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Everything drawn once per drop, shared by all assignment modes and
/// estimators.
#[derive(Debug, Clone)]
pub struct DropRealization {
    pub index: u64,
    pub scenario: ScenarioDrop,
    pub geometry: ChannelGeometry,
    pub bank: LinkBank,
    pub gains: SlotGains,
    pub patterns: Vec<DataPattern>,
    pub codebook: UeCodebook,
}

pub struct Dictionaries {
    pub ap: DftDictionary,
    pub ue: DftDictionary,
}

impl Dictionaries {
    pub fn new(params: &SimParams) -> Result<Self> {
        Ok(Dictionaries { ap: DftDictionary::new(params.ap_antennas)?, ue: DftDictionary::new(params.ue_antennas)? })
    }
}

pub fn realize_drop(config: &RunConfig, dicts: &Dictionaries, index: u64) -> Result<DropRealization> {
    let p = &config.sim;
    let slots = config.max_slots();
    let scenario = generate_drop(p, &mut substream(p.seed, Stream::Drop, &[index]));
    let geometry =
        build_channel_geometry(&scenario, p, &config.channel, &mut substream(p.seed, Stream::Geometry, &[index]))?;
    let bank = LinkBank::new(&geometry, &dicts.ue, &dicts.ap);
    let gains = SlotGains::draw(&bank, slots, p.seed, index);
    let layout = PatternLayout {
        num_patterns: p.num_patterns(),
        slots,
        chains: p.ap_rf_chains,
        per_chain: p.subcarriers_per_chain,
        fingers: p.ap_fingers,
        antennas: p.ap_antennas,
        num_subcarriers: p.num_subcarriers,
        permute_per_slot: config.run.permute_per_slot,
    };
    let patterns = build_patterns(&layout, &mut substream(p.seed, Stream::Patterns, &[index]))?;
    let codebook = build_ue_codebook(
        p.num_ues,
        slots,
        p.ue_rf_chains,
        p.ue_fingers,
        p.ue_antennas,
        &mut substream(p.seed, Stream::UeCodebook, &[index]),
    )?;
    Ok(DropRealization { index, scenario, geometry, bank, gains, patterns, codebook })
}

pub fn assign_patterns(config: &RunConfig, real: &DropRealization, mode: AssignmentMode) -> Result<PatternAssignment> {
    let p = &config.sim;
    let d = p.num_patterns();
    match mode {
        AssignmentMode::Lb => {
            let positions: Vec<[f64; 2]> = real.scenario.ap_positions.iter().map(|a| [a.x, a.y]).collect();
            let mut rng = substream(p.seed, Stream::LbAssignment, &[real.index]);
            Ok(assign_patterns_lb(&positions, d, config.run.kmeans_max_iters, &mut rng)?.assignment)
        }
        AssignmentMode::Ra => {
            let mut rng = substream(p.seed, Stream::RandomAssignment, &[real.index]);
            assign_patterns_random(p.num_aps, d, &mut rng)
        }
    }
}

/// Estimates `out[t][k][d]` for every requested slot count, in the order
/// of `t_values`.
pub fn estimate_all(
    estimator: Estimator,
    obs: &QuadraticObservables,
    patterns: &[DataPattern],
    codebook: &UeCodebook,
    t_values: &[usize],
    settings: &RunSettings,
) -> Result<Vec<Vec<Vec<Option<PairEstimate>>>>> {
    let (num_ues, d_count) = (obs.num_ues, obs.num_patterns);
    let per_block: Vec<Result<Vec<Option<PairEstimate>>>> = (0..num_ues * d_count)
        .into_par_iter()
        .map(|idx| {
            let (k, d) = (idx / d_count, idx % d_count);
            let block = obs.block(k, d);
            let tx = &patterns[d].tx_masks;
            let rx = codebook.ue(k);
            match estimator {
                Estimator::Sco => t_values
                    .iter()
                    .map(|&t| Ok(sco_estimate(d, block, t, tx, rx, obs.sigma2, &settings.nnls)?.estimate))
                    .collect(),
                Estimator::Mco => Ok(mco_prefix_estimates(d, block, tx, rx, obs, t_values, &settings.mco)),
            }
        })
        .collect();

    let mut out = vec![vec![vec![None; d_count]; num_ues]; t_values.len()];
    for (idx, res) in per_block.into_iter().enumerate() {
        let (k, d) = (idx / d_count, idx % d_count);
        for (ti, e) in res?.into_iter().enumerate() {
            out[ti][k][d] = e;
        }
    }
    Ok(out)
}

/// MCO estimates at every requested prefix length from one pass over slots.
fn mco_prefix_estimates(
    pattern: usize,
    block: &[f64],
    tx: &[Vec<crate::beamspace::BeamspaceMask>],
    rx: &[Vec<crate::beamspace::BeamspaceMask>],
    obs: &QuadraticObservables,
    t_values: &[usize],
    options: &McoOptions,
) -> Vec<Option<PairEstimate>> {
    let per_slot = obs.ue_chains * obs.ap_chains;
    let mut acc = McoAccumulation::new(rx[0][0].dim(), tx[0][0].dim());
    let mut order: Vec<usize> = (0..t_values.len()).collect();
    order.sort_by_key(|&i| t_values[i]);
    let mut out = vec![None; t_values.len()];
    let mut done = 0;
    for i in order {
        while done < t_values[i] {
            acc.add_slot(&block[done * per_slot..(done + 1) * per_slot], &tx[done], &rx[done]);
            done += 1;
        }
        out[i] = mco_estimate(pattern, &acc, options, obs.sigma2);
    }
    out
}

/// Tally one drop under every assignment mode, estimator, slot count and
/// `N_D` of the configuration.
pub fn run_drop(config: &RunConfig, dicts: &Dictionaries, index: u64) -> Result<DetectionStats> {
    let p = &config.sim;
    let real = realize_drop(config, dicts, index)?;
    let mut stats = DetectionStats::new();
    for &mode in &config.run.assignments {
        let assignment = assign_patterns(config, &real, mode)?;
        let inputs = AirlinkInputs {
            bank: &real.bank,
            gains: &real.gains,
            assignment: &assignment,
            patterns: &real.patterns,
            codebook: &real.codebook,
        };
        let obs = synthesize_observables(&inputs, p, &config.airlink, config.max_slots(), p.seed, index);
        let truth = compute_ground_truth(&real.geometry, &assignment, p.ap_antennas, p.ue_antennas);
        for &estimator in &config.run.estimators {
            let est = estimate_all(estimator, &obs, &real.patterns, &real.codebook, &config.run.t_values, &config.run)?;
            for (ti, &t) in config.run.t_values.iter().enumerate() {
                for &n_d in &config.run.num_detect {
                    let point = ConfigPoint {
                        estimator,
                        assignment: mode,
                        d: p.num_patterns(),
                        nu_ap: p.ap_fingers,
                        nu_ue: p.ue_fingers,
                        n_d,
                        t,
                    };
                    let tally = stats.entry(point);
                    for (k, per_pattern) in est[ti].iter().enumerate() {
                        tally.record(&evaluate_detection(per_pattern, &truth, k, n_d), n_d);
                    }
                }
            }
        }
    }
    log::debug!("drop {index} done");
    Ok(stats)
}

/// Run every drop of the configuration and merge the tallies. The result
/// depends only on the configuration, not on thread scheduling.
pub fn run_monte_carlo(config: &RunConfig) -> Result<DetectionStats> {
    config.validate()?;
    let dicts = Dictionaries::new(&config.sim)?;
    let first = config.run.first_drop;
    let per_drop: Vec<DetectionStats> = (first..first + config.run.drops as u64)
        .into_par_iter()
        .map(|r| run_drop(config, &dicts, r))
        .collect::<Result<_>>()?;
    let mut stats = DetectionStats::new();
    for s in &per_drop {
        stats.merge(s);
    }
    Ok(stats)
}

/// One pass of the protocol for a single drop: ground truth, the reports
/// every UE sends back and the associations the network derives from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub drop: u64,
    pub assignment_mode: AssignmentMode,
    pub estimator: Estimator,
    pub slots: usize,
    pub assignment: PatternAssignment,
    pub truth: GroundTruth,
    pub reports: Vec<UeReport>,
    pub association: AssociationMap,
}

pub fn trace_protocol(
    config: &RunConfig,
    index: u64,
    mode: AssignmentMode,
    estimator: Estimator,
) -> Result<ProtocolTrace> {
    config.validate()?;
    let p = &config.sim;
    let dicts = Dictionaries::new(p)?;
    let real = realize_drop(config, &dicts, index)?;
    let assignment = assign_patterns(config, &real, mode)?;
    let slots = config.max_slots();
    let inputs = AirlinkInputs {
        bank: &real.bank,
        gains: &real.gains,
        assignment: &assignment,
        patterns: &real.patterns,
        codebook: &real.codebook,
    };
    let obs = synthesize_observables(&inputs, p, &config.airlink, slots, p.seed, index);
    let truth = compute_ground_truth(&real.geometry, &assignment, p.ap_antennas, p.ue_antennas);
    let est = estimate_all(estimator, &obs, &real.patterns, &real.codebook, &[slots], &config.run)?;
    let mut reports = Vec::with_capacity(p.num_ues);
    for (k, per_pattern) in est[0].iter().enumerate() {
        let found: Vec<PairEstimate> = per_pattern.iter().flatten().copied().collect();
        let pairs = select_top_pairs(&found, p.num_detect.min(found.len()))?;
        let pos = &real.scenario.ue_positions[k];
        reports.push(UeReport { ue: k, position: [pos.x, pos.y], pairs });
    }
    let ap_positions: Vec<[f64; 2]> = real.scenario.ap_positions.iter().map(|a| [a.x, a.y]).collect();
    let association = associate_ues(&reports, &assignment, &ap_positions);
    Ok(ProtocolTrace { drop: index, assignment_mode: mode, estimator, slots, assignment, truth, reports, association })
}
