//! Orthogonal data patterns and beamformer schedules.
//!
//! A data pattern fixes, for every beacon slot and AP RF chain, the block of
//! subcarriers the chain transmits on and the beamspace mask it transmits
//! through. Subcarrier blocks of different (pattern, chain) pairs never
//! overlap, so a UE can separate the patterns without knowing the beams.

mod assignment;

pub use assignment::{
    assign_patterns_lb, assign_patterns_random, kmeans_objective, LbAssignment, PatternAssignment,
};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamspace::BeamspaceMask;
use crate::error::{Error, Result};

/// `floor(floor(N_C / Q) / n_AP)`; zero means no pattern fits.
pub fn num_patterns(num_subcarriers: usize, per_chain: usize, chains: usize) -> usize {
    if per_chain == 0 || chains == 0 {
        return 0;
    }
    num_subcarriers / per_chain / chains
}

/// Like [`num_patterns`] but rejects configurations without any pattern.
pub fn checked_num_patterns(num_subcarriers: usize, per_chain: usize, chains: usize) -> Result<usize> {
    match num_patterns(num_subcarriers, per_chain, chains) {
        0 => Err(Error::Infeasible(format!(
            "N_C={num_subcarriers} cannot host one pattern of {chains} chains x {per_chain} subcarriers"
        ))),
        d => Ok(d),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPattern {
    pub index: usize,
    /// `subcarriers[s][i]`: the Q subcarrier indices of chain `i` in slot `s`.
    pub subcarriers: Vec<Vec<Vec<usize>>>,
    /// `tx_masks[s][i]`: beamspace transmit mask of chain `i` in slot `s`.
    pub tx_masks: Vec<Vec<BeamspaceMask>>,
}

impl DataPattern {
    pub fn slots(&self) -> usize {
        self.tx_masks.len()
    }
}

/// Dimensions of a pattern set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternLayout {
    pub num_patterns: usize,
    pub slots: usize,
    pub chains: usize,
    pub per_chain: usize,
    pub fingers: usize,
    pub antennas: usize,
    pub num_subcarriers: usize,
    /// Shuffle the subcarrier-to-block map independently in every slot.
    pub permute_per_slot: bool,
}

pub fn build_patterns<R: Rng + ?Sized>(layout: &PatternLayout, rng: &mut R) -> Result<Vec<DataPattern>> {
    let PatternLayout { num_patterns: d_count, slots, chains, per_chain, fingers, antennas, .. } = *layout;
    if d_count == 0 || slots == 0 || chains == 0 || per_chain == 0 {
        return Err(Error::Infeasible("pattern dimensions must be positive".into()));
    }
    if d_count * chains * per_chain > layout.num_subcarriers {
        return Err(Error::Infeasible(format!(
            "{d_count} patterns x {chains} chains x {per_chain} subcarriers exceed N_C={}",
            layout.num_subcarriers
        )));
    }
    check_fingers(fingers, antennas)?;

    let used = d_count * chains * per_chain;
    let mut slot_maps: Vec<Vec<usize>> = Vec::with_capacity(slots);
    for _ in 0..slots {
        let mut map: Vec<usize> = (0..used).collect();
        if layout.permute_per_slot {
            let mut all: Vec<usize> = (0..layout.num_subcarriers).collect();
            all.shuffle(rng);
            map = all[..used].to_vec();
        }
        slot_maps.push(map);
    }

    let mut patterns = Vec::with_capacity(d_count);
    for d in 0..d_count {
        let subcarriers = slot_maps
            .iter()
            .map(|map| {
                (0..chains)
                    .map(|i| {
                        let start = (d * chains + i) * per_chain;
                        map[start..start + per_chain].to_vec()
                    })
                    .collect()
            })
            .collect();
        let tx_masks = draw_schedule(slots, chains, fingers, antennas, rng);
        patterns.push(DataPattern { index: d, subcarriers, tx_masks });
    }
    Ok(patterns)
}

/// Receive masks `masks[k][s][j]` of every UE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UeCodebook {
    pub masks: Vec<Vec<Vec<BeamspaceMask>>>,
}

impl UeCodebook {
    pub fn ue(&self, k: usize) -> &[Vec<BeamspaceMask>] {
        &self.masks[k]
    }
}

pub fn build_ue_codebook<R: Rng + ?Sized>(
    num_ues: usize,
    slots: usize,
    chains: usize,
    fingers: usize,
    antennas: usize,
    rng: &mut R,
) -> Result<UeCodebook> {
    if slots == 0 || chains == 0 {
        return Err(Error::Infeasible("codebook dimensions must be positive".into()));
    }
    check_fingers(fingers, antennas)?;
    let masks = (0..num_ues).map(|_| draw_schedule(slots, chains, fingers, antennas, rng)).collect();
    Ok(UeCodebook { masks })
}

fn check_fingers(fingers: usize, antennas: usize) -> Result<()> {
    if fingers == 0 || fingers > antennas {
        return Err(Error::Infeasible(format!("{fingers} fingers over {antennas} antennas")));
    }
    Ok(())
}

/// Uniform draws that satisfy the coverage target within this many tries are
/// accepted as-is; otherwise the last draw is repaired.
const COVERAGE_RETRIES: usize = 8;

/// Draw a `slots x chains` schedule of masks with `fingers` ones each.
///
/// When the schedule has room to visit every direction, each slot is forced
/// to cover as many not-yet-visited directions as it can, so every prefix of
/// `t` slots covers all directions once `t * chains * fingers >= antennas`.
fn draw_schedule<R: Rng + ?Sized>(
    slots: usize,
    chains: usize,
    fingers: usize,
    antennas: usize,
    rng: &mut R,
) -> Vec<Vec<BeamspaceMask>> {
    let enforce = slots * chains * fingers >= antennas;
    let mut covered = vec![false; antennas];
    let mut schedule = Vec::with_capacity(slots);
    for _ in 0..slots {
        let slot = if enforce {
            draw_covering_slot(chains, fingers, antennas, &covered, rng)
        } else {
            (0..chains).map(|_| draw_fingers(fingers, antennas, rng)).collect()
        };
        for mask in &slot {
            for &u in mask {
                covered[u] = true;
            }
        }
        schedule.push(
            slot.into_iter()
                .map(|s| BeamspaceMask::new(antennas, s).expect("valid finger draw"))
                .collect(),
        );
    }
    schedule
}

fn draw_fingers<R: Rng + ?Sized>(fingers: usize, antennas: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, antennas, fingers).into_vec()
}

fn new_coverage(slot: &[Vec<usize>], covered: &[bool]) -> usize {
    let mut seen = vec![false; covered.len()];
    let mut count = 0;
    for &u in slot.iter().flatten() {
        if !covered[u] && !seen[u] {
            seen[u] = true;
            count += 1;
        }
    }
    count
}

fn draw_covering_slot<R: Rng + ?Sized>(
    chains: usize,
    fingers: usize,
    antennas: usize,
    covered: &[bool],
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let uncovered = covered.iter().filter(|&&c| !c).count();
    let target = uncovered.min(chains * fingers);
    let mut slot = Vec::new();
    for _ in 0..COVERAGE_RETRIES {
        slot = (0..chains).map(|_| draw_fingers(fingers, antennas, rng)).collect();
        if new_coverage(&slot, covered) >= target {
            return slot;
        }
    }

    // Repair: swap redundant fingers (already covered, or repeated within the
    // slot) for missing directions, visiting the masks round-robin.
    let mut in_slot = vec![0usize; antennas];
    for &u in slot.iter().flatten() {
        in_slot[u] += 1;
    }
    let mut missing: Vec<usize> = (0..antennas).filter(|&u| !covered[u] && in_slot[u] == 0).collect();
    missing.shuffle(rng);
    let mut needed = target - new_coverage(&slot, covered);
    let mut chain = 0;
    let mut stalled = 0;
    while needed > 0 && stalled < chains {
        let mask = &mut slot[chain];
        let redundant = mask.iter().position(|&u| covered[u] || in_slot[u] > 1);
        match redundant {
            Some(pos) => {
                let fresh = missing.pop().expect("missing direction available while below target");
                in_slot[mask[pos]] -= 1;
                in_slot[fresh] += 1;
                mask[pos] = fresh;
                needed -= 1;
                stalled = 0;
            }
            None => stalled += 1,
        }
        chain = (chain + 1) % chains;
    }
    slot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn layout(d: usize, per_chain: usize, slots: usize, fingers: usize) -> PatternLayout {
        PatternLayout {
            num_patterns: d,
            slots,
            chains: 8,
            per_chain,
            fingers,
            antennas: 32,
            num_subcarriers: 1024,
            permute_per_slot: false,
        }
    }

    #[test]
    fn pattern_counts() {
        assert_eq!(num_patterns(1024, 8, 8), 16);
        assert_eq!(num_patterns(1024, 16, 8), 8);
        assert_eq!(num_patterns(8, 8, 2), 0);
        assert!(checked_num_patterns(8, 8, 2).is_err());
        assert_eq!(checked_num_patterns(1024, 16, 8).unwrap(), 8);
    }

    fn assert_partition(patterns: &[DataPattern], expected: usize) {
        let slots = patterns[0].slots();
        for s in 0..slots {
            let mut seen = HashSet::new();
            for p in patterns {
                for block in &p.subcarriers[s] {
                    for &q in block {
                        assert!(seen.insert(q), "subcarrier {q} reused in slot {s}");
                    }
                }
            }
            assert_eq!(seen.len(), expected);
        }
    }

    #[test]
    fn blocks_partition_all_subcarriers() {
        let mut rng = substream(1, Stream::Patterns, &[]);
        let pats = build_patterns(&layout(16, 8, 3, 8), &mut rng).unwrap();
        assert_partition(&pats, 1024);
        for p in &pats {
            for slot in &p.subcarriers {
                assert!(slot.iter().all(|b| b.len() == 8));
            }
        }
        // Contiguous block layout.
        assert_eq!(pats[1].subcarriers[0][2], (80..88).collect::<Vec<_>>());
    }

    #[test]
    fn permuted_blocks_remain_disjoint() {
        let mut rng = substream(1, Stream::Patterns, &[]);
        let mut l = layout(8, 16, 4, 8);
        l.permute_per_slot = true;
        let pats = build_patterns(&l, &mut rng).unwrap();
        assert_partition(&pats, 1024);
        assert_ne!(pats[0].subcarriers[0], pats[0].subcarriers[1]);
    }

    #[test]
    fn infeasible_layouts() {
        let mut rng = substream(1, Stream::Patterns, &[]);
        assert!(build_patterns(&layout(9, 16, 2, 8), &mut rng).is_err());
        assert!(build_patterns(&layout(8, 16, 2, 33), &mut rng).is_err());
        assert!(build_ue_codebook(2, 2, 4, 0, 16, &mut rng).is_err());
    }

    #[test]
    fn full_masks_when_all_fingers_active() {
        let mut rng = substream(1, Stream::Patterns, &[]);
        let pats = build_patterns(&layout(8, 16, 2, 32), &mut rng).unwrap();
        for p in &pats {
            for m in p.tx_masks.iter().flatten() {
                assert_eq!(m, &BeamspaceMask::full(32));
            }
        }
        let cb = build_ue_codebook(3, 2, 4, 16, 16, &mut rng).unwrap();
        assert!(cb.masks.iter().flatten().flatten().all(|m| m.fingers() == 16));
    }

    fn covered_after(schedule: &[Vec<BeamspaceMask>], t: usize, n: usize) -> usize {
        let mut seen = vec![false; n];
        for slot in &schedule[..t] {
            for m in slot {
                for &u in m.support() {
                    seen[u] = true;
                }
            }
        }
        seen.iter().filter(|&&x| x).count()
    }

    #[test]
    fn every_ap_direction_is_scheduled() {
        let mut rng = substream(5, Stream::Patterns, &[]);
        let pats = build_patterns(&layout(8, 16, 20, 8), &mut rng).unwrap();
        for p in &pats {
            assert_eq!(covered_after(&p.tx_masks, 20, 32), 32);
            // 8 chains x 8 fingers already exceed 32 directions in one slot.
            assert_eq!(covered_after(&p.tx_masks, 1, 32), 32);
        }
    }

    #[test]
    fn every_ue_direction_is_scheduled() {
        let mut rng = substream(5, Stream::UeCodebook, &[]);
        let cb = build_ue_codebook(15, 20, 4, 4, 16, &mut rng).unwrap();
        for k in 0..15 {
            assert_eq!(covered_after(cb.ue(k), 20, 16), 16);
            assert_eq!(covered_after(cb.ue(k), 1, 16), 16);
        }
    }

    #[test]
    fn single_finger_sweep_reaches_full_coverage_at_capacity() {
        let mut rng = substream(2, Stream::Patterns, &[]);
        let cb = build_ue_codebook(20, 6, 3, 1, 16, &mut rng).unwrap();
        for k in 0..20 {
            for t in 1..=6 {
                assert_eq!(covered_after(cb.ue(k), t, 16), (3 * t).min(16));
            }
        }
    }

    #[test]
    fn ue_masks_are_independent_across_ues() {
        // Overlap of two independent nu-of-N draws has mean nu^2 / N.
        let (n, nu, trials) = (16usize, 4usize, 4000usize);
        let mut rng = substream(8, Stream::UeCodebook, &[]);
        let mut total = 0usize;
        for _ in 0..trials {
            let cb = build_ue_codebook(2, 2, 1, nu, n, &mut rng).unwrap();
            // One chain over two slots cannot cover 16 directions, so draws stay uniform.
            let a = &cb.masks[0][0][0];
            let b = &cb.masks[1][0][0];
            total += a.support().iter().filter(|u| b.contains(**u)).count();
        }
        let mean = total as f64 / trials as f64;
        let expected = (nu * nu) as f64 / n as f64;
        // Hypergeometric variance nu*(nu/n)*(1-nu/n)*(n-nu)/(n-1).
        let var = nu as f64 * (nu as f64 / n as f64) * (1.0 - nu as f64 / n as f64) * ((n - nu) as f64 / (n - 1) as f64);
        let se = (var / trials as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "mean overlap {mean} vs {expected}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn schedule_invariants(
            seed in any::<u64>(),
            chains in 1usize..6,
            fingers in 1usize..9,
            slots in 1usize..12,
        ) {
            let n = 16;
            let fingers = fingers.min(n);
            let mut rng = substream(seed, Stream::UeCodebook, &[]);
            let cb = build_ue_codebook(1, slots, chains, fingers, n, &mut rng).unwrap();
            let sched = cb.ue(0);
            prop_assert_eq!(sched.len(), slots);
            for slot in sched {
                prop_assert_eq!(slot.len(), chains);
                for m in slot {
                    prop_assert_eq!(m.fingers(), fingers);
                }
            }
            if slots * chains * fingers >= n {
                for t in 1..=slots {
                    prop_assert!(covered_after(sched, t, n) >= (t * chains * fingers).min(n));
                }
            }
        }
    }
}
