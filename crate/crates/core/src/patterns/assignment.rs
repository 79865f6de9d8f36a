//! Mapping of data patterns onto APs.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which pattern each AP transmits, and the inverse map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternAssignment {
    pub num_patterns: usize,
    pub pattern_of_ap: Vec<usize>,
}

impl PatternAssignment {
    pub fn new(num_patterns: usize, pattern_of_ap: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = pattern_of_ap.iter().find(|&&d| d >= num_patterns) {
            return Err(Error::param("pattern_of_ap", format!("pattern {bad} >= {num_patterns}")));
        }
        Ok(PatternAssignment { num_patterns, pattern_of_ap })
    }

    /// APs transmitting pattern `d`, in increasing index order.
    pub fn aps_of(&self, d: usize) -> Vec<usize> {
        (0..self.pattern_of_ap.len()).filter(|&m| self.pattern_of_ap[m] == d).collect()
    }

    /// `members()[d]` lists the APs of pattern `d`.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_patterns];
        for (m, &d) in self.pattern_of_ap.iter().enumerate() {
            out[d].push(m);
        }
        out
    }

    pub fn usage(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }
}

/// Balanced random assignment: every pattern is used `floor(M/D)` or
/// `ceil(M/D)` times, the patterns receiving the extra use chosen at random.
pub fn assign_patterns_random<R: Rng + ?Sized>(
    num_aps: usize,
    num_patterns: usize,
    rng: &mut R,
) -> Result<PatternAssignment> {
    if num_patterns == 0 {
        return Err(Error::param("num_patterns", "must be positive"));
    }
    let mut labels: Vec<usize> = (0..num_patterns).collect();
    labels.shuffle(rng);
    let mut pattern_of_ap: Vec<usize> = (0..num_aps).map(|m| labels[m % num_patterns]).collect();
    pattern_of_ap.shuffle(rng);
    PatternAssignment::new(num_patterns, pattern_of_ap)
}

/// Result of the location-based assignment with its clustering trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbAssignment {
    pub assignment: PatternAssignment,
    pub cluster_of_ap: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    /// Sum of squared AP-to-centroid distances after each centroid update.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

const CENTROID_TOLERANCE: f64 = 1e-6;
const MAX_SWAP_PASSES: usize = 64;

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Sum of squared distances between each AP and its cluster centroid.
pub fn kmeans_objective(positions: &[[f64; 2]], cluster_of: &[usize], centroids: &[[f64; 2]]) -> f64 {
    positions.iter().zip(cluster_of).map(|(&p, &c)| dist2(p, centroids[c])).sum()
}

/// Cluster sizes: `floor(M/D)` clusters of exactly `D` APs plus, when `D`
/// does not divide `M`, one cluster holding the remainder. The remainder slot
/// goes to the cluster that attracts the fewest APs without constraints.
fn capacities(positions: &[[f64; 2]], centroids: &[[f64; 2]], d: usize) -> Vec<usize> {
    let k = centroids.len();
    let rem = positions.len() % d;
    let mut caps = vec![d; k];
    if rem > 0 {
        let mut pull = vec![0usize; k];
        for &p in positions {
            pull[nearest(p, centroids)] += 1;
        }
        let smallest = (0..k).min_by_key(|&c| (pull[c], c)).unwrap();
        caps[smallest] = rem;
    }
    caps
}

fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> usize {
    (0..centroids.len())
        .min_by(|&a, &b| dist2(p, centroids[a]).total_cmp(&dist2(p, centroids[b])))
        .unwrap()
}

/// Greedy capacity-constrained assignment in order of increasing distance,
/// followed by pairwise swaps that lower the objective.
fn constrained_assign(positions: &[[f64; 2]], centroids: &[[f64; 2]], caps: &[usize]) -> Vec<usize> {
    let m = positions.len();
    let k = centroids.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(m * k);
    for (a, &p) in positions.iter().enumerate() {
        for (c, &q) in centroids.iter().enumerate() {
            pairs.push((dist2(p, q), a, c));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut cluster = vec![usize::MAX; m];
    let mut load = vec![0usize; k];
    for (_, a, c) in pairs {
        if cluster[a] == usize::MAX && load[c] < caps[c] {
            cluster[a] = c;
            load[c] += 1;
        }
    }

    for _ in 0..MAX_SWAP_PASSES {
        let mut improved = false;
        for a in 0..m {
            for b in a + 1..m {
                let (ca, cb) = (cluster[a], cluster[b]);
                if ca == cb {
                    continue;
                }
                let now = dist2(positions[a], centroids[ca]) + dist2(positions[b], centroids[cb]);
                let swapped = dist2(positions[a], centroids[cb]) + dist2(positions[b], centroids[ca]);
                if swapped < now - 1e-12 * now.max(1.0) {
                    cluster.swap(a, b);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    cluster
}

fn update_centroids(positions: &[[f64; 2]], cluster: &[usize], previous: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let k = previous.len();
    let mut sum = vec![[0.0f64; 2]; k];
    let mut count = vec![0usize; k];
    for (&p, &c) in positions.iter().zip(cluster) {
        sum[c][0] += p[0];
        sum[c][1] += p[1];
        count[c] += 1;
    }
    (0..k)
        .map(|c| {
            if count[c] == 0 {
                previous[c]
            } else {
                [sum[c][0] / count[c] as f64, sum[c][1] / count[c] as f64]
            }
        })
        .collect()
}

/// Location-based pattern assignment.
///
/// APs are grouped by capacity-constrained k-means into `ceil(M/D)` clusters
/// of at most `D` members; inside each cluster the most northern AP gets
/// pattern 0, the next one pattern 1, and so on. APs sharing a pattern thus
/// always sit in different clusters.
pub fn assign_patterns_lb<R: Rng + ?Sized>(
    positions: &[[f64; 2]],
    num_patterns: usize,
    max_iters: usize,
    rng: &mut R,
) -> Result<LbAssignment> {
    if num_patterns == 0 {
        return Err(Error::param("num_patterns", "must be positive"));
    }
    let m = positions.len();
    if m == 0 {
        return Ok(LbAssignment {
            assignment: PatternAssignment::new(num_patterns, vec![])?,
            cluster_of_ap: vec![],
            centroids: vec![],
            objective_history: vec![],
            converged: true,
        });
    }
    let k = m.div_ceil(num_patterns);
    let mut centroids: Vec<[f64; 2]> = rand::seq::index::sample(rng, m, k)
        .into_iter()
        .map(|i| positions[i])
        .collect();

    let mut cluster: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        let caps = capacities(positions, &centroids, num_patterns);
        let mut next = constrained_assign(positions, &centroids, &caps);
        // Keep the previous partition if the greedy one is worse, so the
        // objective never increases.
        if !cluster.is_empty()
            && kmeans_objective(positions, &cluster, &centroids)
                <= kmeans_objective(positions, &next, &centroids)
        {
            next = cluster.clone();
        }
        cluster = next;
        let updated = update_centroids(positions, &cluster, &centroids);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| dist2(*a, *b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        history.push(kmeans_objective(positions, &cluster, &centroids));
        if shift < CENTROID_TOLERANCE {
            converged = true;
            break;
        }
    }

    let mut pattern_of_ap = vec![0usize; m];
    for c in 0..k {
        let mut members: Vec<usize> = (0..m).filter(|&a| cluster[a] == c).collect();
        members.sort_by(|&a, &b| positions[b][1].total_cmp(&positions[a][1]).then(a.cmp(&b)));
        for (rank, &a) in members.iter().enumerate() {
            pattern_of_ap[a] = rank;
        }
    }
    Ok(LbAssignment {
        assignment: PatternAssignment::new(num_patterns, pattern_of_ap)?,
        cluster_of_ap: cluster,
        centroids,
        objective_history: history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_layout(seed: u64, m: usize) -> Vec<[f64; 2]> {
        let mut rng = substream(seed, Stream::Drop, &[]);
        (0..m).map(|_| [rng.random::<f64>() * 400.0, rng.random::<f64>() * 400.0]).collect()
    }

    #[test]
    fn single_cluster_orders_by_latitude() {
        let pos = [[0.0, 5.0], [1.0, 9.0], [2.0, 1.0], [3.0, 7.0]];
        let lb = assign_patterns_lb(&pos, 4, 50, &mut substream(0, Stream::LbAssignment, &[])).unwrap();
        assert_eq!(lb.assignment.pattern_of_ap, vec![2, 0, 3, 1]);
    }

    #[test]
    fn latitude_ties_break_by_index() {
        let pos = [[5.0, 3.0], [0.0, 3.0]];
        let lb = assign_patterns_lb(&pos, 2, 10, &mut substream(0, Stream::LbAssignment, &[])).unwrap();
        assert_eq!(lb.assignment.pattern_of_ap, vec![0, 1]);
    }

    #[test]
    fn square_corners_separate_shared_patterns() {
        let pos = [[0.0, 0.0], [0.0, 100.0], [100.0, 0.0], [100.0, 100.0]];
        let d = |a: usize, b: usize| dist2(pos[a], pos[b]).sqrt();
        let all_pairs: Vec<(usize, usize)> = (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).collect();
        for seed in 0..20 {
            let lb = assign_patterns_lb(&pos, 2, 50, &mut substream(seed, Stream::LbAssignment, &[])).unwrap();
            let p = &lb.assignment.pattern_of_ap;
            let c = &lb.cluster_of_ap;
            let mut sizes = [0usize; 2];
            c.iter().for_each(|&x| sizes[x] += 1);
            assert_eq!(sizes, [2, 2]);
            let same_min = all_pairs
                .iter()
                .filter(|&&(a, b)| p[a] == p[b])
                .map(|&(a, b)| d(a, b))
                .fold(f64::INFINITY, f64::min);
            let within_max = all_pairs
                .iter()
                .filter(|&&(a, b)| c[a] == c[b])
                .map(|&(a, b)| d(a, b))
                .fold(0.0, f64::max);
            assert!(same_min >= within_max - 1e-9, "seed {seed}: {same_min} < {within_max}");
        }
    }

    #[test]
    fn usage_counts_match_random_balance() {
        let pos = random_layout(4, 50);
        let lb = assign_patterns_lb(&pos, 8, 100, &mut substream(4, Stream::LbAssignment, &[])).unwrap();
        assert_eq!(lb.centroids.len(), 7);
        let usage = lb.assignment.usage();
        assert!(usage.iter().all(|&u| u >= 6), "{usage:?}");
        let ra = assign_patterns_random(50, 8, &mut substream(4, Stream::RandomAssignment, &[])).unwrap();
        assert!(ra.usage().iter().all(|&u| u == 6 || u == 7));
    }

    #[test]
    fn random_assignment_small_and_deterministic() {
        let a = assign_patterns_random(3, 3, &mut substream(1, Stream::RandomAssignment, &[])).unwrap();
        let mut sorted = a.pattern_of_ap.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
        let b = assign_patterns_random(3, 3, &mut substream(1, Stream::RandomAssignment, &[])).unwrap();
        assert_eq!(a, b);
        assert!(assign_patterns_random(3, 0, &mut substream(1, Stream::RandomAssignment, &[])).is_err());
    }

    fn mean_same_pattern_distance(pos: &[[f64; 2]], a: &PatternAssignment) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for members in a.members() {
            for (i, &x) in members.iter().enumerate() {
                for &y in &members[i + 1..] {
                    total += dist2(pos[x], pos[y]).sqrt();
                    n += 1;
                }
            }
        }
        total / n as f64
    }

    #[test]
    fn lb_spreads_patterns_more_than_random() {
        let (mut lb_sum, mut ra_sum) = (0.0, 0.0);
        for drop in 0..100 {
            let pos = random_layout(1000 + drop, 50);
            let lb = assign_patterns_lb(&pos, 8, 100, &mut substream(drop, Stream::LbAssignment, &[])).unwrap();
            let ra = assign_patterns_random(50, 8, &mut substream(drop, Stream::RandomAssignment, &[])).unwrap();
            lb_sum += mean_same_pattern_distance(&pos, &lb.assignment);
            ra_sum += mean_same_pattern_distance(&pos, &ra);
        }
        assert!(lb_sum > ra_sum, "LB {lb_sum} vs RA {ra_sum}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn lb_invariants(seed in any::<u64>(), m in 1usize..70, d in 1usize..17) {
            let pos = random_layout(seed, m);
            let lb = assign_patterns_lb(&pos, d, 100, &mut substream(seed, Stream::LbAssignment, &[])).unwrap();
            prop_assert_eq!(lb.assignment.pattern_of_ap.len(), m);
            prop_assert_eq!(lb.centroids.len(), m.div_ceil(d));
            let mut sizes = vec![0usize; lb.centroids.len()];
            for &c in &lb.cluster_of_ap {
                sizes[c] += 1;
            }
            prop_assert!(sizes.iter().all(|&s| s <= d));
            for a in 0..m {
                for b in a + 1..m {
                    if lb.assignment.pattern_of_ap[a] == lb.assignment.pattern_of_ap[b] {
                        prop_assert_ne!(lb.cluster_of_ap[a], lb.cluster_of_ap[b]);
                    }
                }
            }
            if m >= d {
                prop_assert!(lb.assignment.usage().iter().all(|&u| u >= m / d));
            }
            for w in lb.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-9);
            }
        }
    }
}
