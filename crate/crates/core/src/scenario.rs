//! Network drops and multipath geometry.
//!
//! A drop places APs, UEs and scatterers uniformly in the square area and
//! gives every ULA a uniform random boresight. Each AP-UE link then receives
//! a direct path (if the pair is in LoS) plus one single-bounce path per
//! scatterer that is in LoS with both ends.

use std::f64::consts::{FRAC_PI_2, PI};

use log::debug;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::beamspace::{dft_matrix, nearest_grid_index};
use crate::error::{Error, Result};
use crate::params::SimParams;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Position in meters; `z` is the antenna height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn distance_2d(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_3d(&self, other: &Position) -> f64 {
        let d2 = self.distance_2d(other);
        d2.hypot(self.z - other.z)
    }

    /// Bearing towards `other`, counter-clockwise from the +x axis.
    pub fn bearing_to(&self, other: &Position) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// One realization of the network layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDrop {
    pub area_side: f64,
    pub ap_positions: Vec<Position>,
    pub ue_positions: Vec<Position>,
    /// ULA boresight bearings, radians in `[0, 2pi)`.
    pub ap_orientations: Vec<f64>,
    pub ue_orientations: Vec<f64>,
    pub scatterer_positions: Vec<Position>,
}

pub fn generate_drop<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> ScenarioDrop {
    let side = params.area_side;
    let place = |count: usize, z: f64, rng: &mut R| -> Vec<Position> {
        (0..count)
            .map(|_| Position { x: rng.random::<f64>() * side, y: rng.random::<f64>() * side, z })
            .collect()
    };
    let ap_positions = place(params.num_aps, params.ap_height, rng);
    let ue_positions = place(params.num_ues, params.ue_height, rng);
    let scatterer_positions = place(params.num_scatterers, params.scatterer_height, rng);
    let ap_orientations = (0..params.num_aps).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let ue_orientations = (0..params.num_ues).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    ScenarioDrop {
        area_side: side,
        ap_positions,
        ue_positions,
        ap_orientations,
        ue_orientations,
        scatterer_positions,
    }
}

/// LoS probability and close-in path-loss constants (urban micro street canyon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    /// Distance below which LoS is certain, meters.
    pub los_d1: f64,
    /// Decay length of the LoS probability, meters.
    pub los_d2: f64,
    /// Free-space loss at 1 m and 1 GHz, dB.
    pub pl_fixed_db: f64,
    pub pl_exponent_los: f64,
    pub pl_exponent_nlos: f64,
    pub shadowing_std_los_db: f64,
    pub shadowing_std_nlos_db: f64,
    pub shadowing: bool,
    /// Include the direct AP-UE ray when it is unblocked.
    pub direct_path: bool,
    /// Every LoS draw succeeds (direct paths always present).
    pub force_los: bool,
    /// Replace every path angle by its nearest grid angle.
    pub snap_to_grid: bool,
    /// Drop paths whose delay exceeds the earliest path of the link by more
    /// than the cyclic prefix.
    pub discard_beyond_cp: bool,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            los_d1: 20.0,
            los_d2: 39.0,
            pl_fixed_db: 32.4,
            pl_exponent_los: 2.1,
            pl_exponent_nlos: 3.19,
            shadowing_std_los_db: 3.6,
            shadowing_std_nlos_db: 4.4,
            shadowing: true,
            direct_path: true,
            force_los: false,
            snap_to_grid: false,
            discard_beyond_cp: true,
        }
    }
}

impl ChannelModel {
    /// `min(d1/d, 1) (1 - exp(-d/d2)) + exp(-d/d2)`.
    pub fn los_probability(&self, distance_2d: f64) -> f64 {
        let d = distance_2d.max(0.0);
        if d <= self.los_d1 {
            return 1.0;
        }
        let e = (-d / self.los_d2).exp();
        (self.los_d1 / d) * (1.0 - e) + e
    }

    /// Deterministic part of the path loss in dB.
    pub fn median_path_loss_db(&self, carrier_freq_hz: f64, distance_3d: f64, is_los: bool) -> Result<f64> {
        if distance_3d.is_nan() || distance_3d <= 0.0 {
            return Err(Error::InvalidDistance(distance_3d));
        }
        let n = if is_los { self.pl_exponent_los } else { self.pl_exponent_nlos };
        Ok(self.pl_fixed_db + 20.0 * (carrier_freq_hz / 1e9).log10() + 10.0 * n * distance_3d.log10())
    }

    /// Linear power gain `10^(-PL/10)`, with log-normal shadowing when enabled.
    pub fn path_loss_gain<R: Rng + ?Sized>(
        &self,
        carrier_freq_hz: f64,
        distance_3d: f64,
        is_los: bool,
        rng: &mut R,
    ) -> Result<f64> {
        let mut pl = self.median_path_loss_db(carrier_freq_hz, distance_3d, is_los)?;
        if self.shadowing {
            let sigma = if is_los { self.shadowing_std_los_db } else { self.shadowing_std_nlos_db };
            if sigma > 0.0 {
                pl += Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
            }
        }
        Ok(10f64.powf(-pl / 10.0))
    }

    fn los<R: Rng + ?Sized>(&self, distance_2d: f64, rng: &mut R) -> bool {
        self.force_los || rng.random::<f64>() < self.los_probability(distance_2d)
    }
}

/// Free function form with the default constants.
pub fn los_probability(distance_2d: f64) -> f64 {
    ChannelModel::default().los_probability(distance_2d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Direct,
    Scattered { scatterer: usize },
}

/// One propagation path of an AP-UE link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPath {
    /// Variance of the complex path gain (linear power).
    pub gain_var: f64,
    /// Angle of arrival in the UE array frame, radians.
    pub aoa: f64,
    /// Angle of departure in the AP array frame, radians.
    pub aod: f64,
    /// Propagation delay, seconds.
    pub delay: f64,
    pub kind: PathKind,
}

/// Path lists for every (UE, AP) link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub num_ues: usize,
    pub num_aps: usize,
    /// Row-major over `(k, m)`.
    pub links: Vec<Vec<ChannelPath>>,
    /// Paths removed because they arrived behind an array.
    pub rejected_backside: usize,
    /// Paths removed because their excess delay exceeded the cyclic prefix.
    pub truncated_by_cp: usize,
}

impl ChannelGeometry {
    pub fn link(&self, ue: usize, ap: usize) -> &[ChannelPath] {
        &self.links[ue * self.num_aps + ap]
    }

    pub fn mean_paths_per_link(&self) -> f64 {
        let total: usize = self.links.iter().map(Vec::len).sum();
        total as f64 / self.links.len().max(1) as f64
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn local_angle(bearing: f64, orientation: f64) -> Option<f64> {
    let a = wrap_angle(bearing - orientation);
    (-FRAC_PI_2..=FRAC_PI_2).contains(&a).then_some(a)
}

pub fn build_channel_geometry<R: Rng + ?Sized>(
    drop: &ScenarioDrop,
    params: &SimParams,
    model: &ChannelModel,
    rng: &mut R,
) -> Result<ChannelGeometry> {
    let num_aps = drop.ap_positions.len();
    let num_ues = drop.ue_positions.len();
    let num_sc = drop.scatterer_positions.len();

    // Ray existence is a property of the endpoint pair, shared by every link
    // that uses it.
    let ap_sc: Vec<bool> = drop
        .ap_positions
        .iter()
        .flat_map(|a| drop.scatterer_positions.iter().map(move |s| a.distance_2d(s)))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|d| model.los(d, rng))
        .collect();
    let ue_sc: Vec<bool> = drop
        .ue_positions
        .iter()
        .flat_map(|u| drop.scatterer_positions.iter().map(move |s| u.distance_2d(s)))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|d| model.los(d, rng))
        .collect();

    let ap_dict = dft_matrix(params.ap_antennas)?;
    let ue_dict = dft_matrix(params.ue_antennas)?;
    let snap = |angle: f64, dict: &crate::beamspace::DftDictionary| {
        dict.grid()[nearest_grid_index(angle, dict.dim())]
    };

    let cp = params.cp_duration();
    let mut links = Vec::with_capacity(num_ues * num_aps);
    let mut rejected_backside = 0;
    let mut truncated_by_cp = 0;
    for (k, ue) in drop.ue_positions.iter().enumerate() {
        let ue_orient = drop.ue_orientations[k];
        for (m, ap) in drop.ap_positions.iter().enumerate() {
            let ap_orient = drop.ap_orientations[m];
            let mut paths = Vec::new();

            if model.direct_path && model.los(ap.distance_2d(ue), rng) {
                let d = ap.distance_3d(ue);
                let gain_var = model.path_loss_gain(params.carrier_freq_hz, d, true, rng)?;
                match (
                    local_angle(ap.bearing_to(ue), ap_orient),
                    local_angle(ue.bearing_to(ap), ue_orient),
                ) {
                    (Some(aod), Some(aoa)) => paths.push(ChannelPath {
                        gain_var,
                        aoa,
                        aod,
                        delay: d / SPEED_OF_LIGHT,
                        kind: PathKind::Direct,
                    }),
                    _ => rejected_backside += 1,
                }
            }

            for (n, sc) in drop.scatterer_positions.iter().enumerate() {
                if !(ap_sc[m * num_sc + n] && ue_sc[k * num_sc + n]) {
                    continue;
                }
                let d = ap.distance_3d(sc) + sc.distance_3d(ue);
                let gain_var = model.path_loss_gain(params.carrier_freq_hz, d, false, rng)?;
                match (
                    local_angle(ap.bearing_to(sc), ap_orient),
                    local_angle(ue.bearing_to(sc), ue_orient),
                ) {
                    (Some(aod), Some(aoa)) => paths.push(ChannelPath {
                        gain_var,
                        aoa,
                        aod,
                        delay: d / SPEED_OF_LIGHT,
                        kind: PathKind::Scattered { scatterer: n },
                    }),
                    _ => rejected_backside += 1,
                }
            }

            if model.discard_beyond_cp {
                let first = paths.iter().map(|p| p.delay).fold(f64::INFINITY, f64::min);
                let before = paths.len();
                paths.retain(|p| p.delay - first <= cp);
                truncated_by_cp += before - paths.len();
            }
            if model.snap_to_grid {
                for p in &mut paths {
                    p.aod = snap(p.aod, &ap_dict);
                    p.aoa = snap(p.aoa, &ue_dict);
                }
            }
            links.push(paths);
        }
    }
    if truncated_by_cp > 0 {
        debug!("{truncated_by_cp} paths exceeded the cyclic prefix and were discarded");
    }
    Ok(ChannelGeometry { num_ues, num_aps, links, rejected_backside, truncated_by_cp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;

    fn quiet_model() -> ChannelModel {
        ChannelModel { shadowing: false, ..Default::default() }
    }

    #[test]
    fn drop_has_requested_counts_inside_area() {
        let p = SimParams::default();
        let d = generate_drop(&p, &mut substream(3, Stream::Drop, &[0]));
        assert_eq!(d.ap_positions.len(), 50);
        assert_eq!(d.ue_positions.len(), 15);
        assert_eq!(d.scatterer_positions.len(), 300);
        for q in d.ap_positions.iter().chain(&d.ue_positions).chain(&d.scatterer_positions) {
            assert!((0.0..=400.0).contains(&q.x) && (0.0..=400.0).contains(&q.y));
        }
        for &o in d.ap_orientations.iter().chain(&d.ue_orientations) {
            assert!((0.0..2.0 * PI).contains(&o));
        }
    }

    #[test]
    fn degenerate_drop() {
        let p = SimParams { num_aps: 1, num_ues: 1, num_scatterers: 0, ..Default::default() };
        let d = generate_drop(&p, &mut substream(3, Stream::Drop, &[0]));
        assert_eq!((d.ap_positions.len(), d.ue_positions.len(), d.scatterer_positions.len()), (1, 1, 0));
    }

    #[test]
    fn drops_are_deterministic() {
        let p = SimParams::default();
        let a = generate_drop(&p, &mut substream(9, Stream::Drop, &[4]));
        let b = generate_drop(&p, &mut substream(9, Stream::Drop, &[4]));
        assert_eq!(a, b);
    }

    #[test]
    fn los_probability_values() {
        assert_eq!(los_probability(0.0), 1.0);
        assert_eq!(los_probability(10.0), 1.0);
        let e = (-1.0f64).exp();
        let expected = 20.0 / 39.0 * (1.0 - e) + e;
        assert!((los_probability(39.0) - expected).abs() < 1e-15);
        assert!((los_probability(39.0) - 0.692).abs() < 1e-3);
        assert!(los_probability(1e6) < 1e-4);
    }

    #[test]
    fn path_loss_values() {
        let m = quiet_model();
        let pl1 = m.median_path_loss_db(28e9, 1.0, true).unwrap();
        assert!((pl1 - (32.4 + 20.0 * 28f64.log10())).abs() < 1e-12);
        assert!((pl1 - 61.34).abs() < 0.01);
        let pl2 = m.median_path_loss_db(28e9, 2.0, true).unwrap();
        assert!((pl2 - pl1 - 21.0 * 2f64.log10()).abs() < 1e-12);
        assert!((pl2 - pl1 - 6.32).abs() < 0.01);
        let mut rng = substream(0, Stream::Geometry, &[]);
        let g = m.path_loss_gain(28e9, 1.0, true, &mut rng).unwrap();
        assert!((g - 10f64.powf(-pl1 / 10.0)).abs() < 1e-20);
        assert!(matches!(m.path_loss_gain(28e9, 0.0, true, &mut rng), Err(Error::InvalidDistance(_))));
        assert!(m.path_loss_gain(28e9, -3.0, false, &mut rng).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    fn two_node_drop(ap: Position, ue: Position, ap_o: f64, ue_o: f64) -> ScenarioDrop {
        ScenarioDrop {
            area_side: 400.0,
            ap_positions: vec![ap],
            ue_positions: vec![ue],
            ap_orientations: vec![ap_o],
            ue_orientations: vec![ue_o],
            scatterer_positions: vec![],
        }
    }

    #[test]
    fn backside_direct_path_is_rejected() {
        // UE due south of an AP whose array faces north: the AP sees it behind.
        let p = SimParams { num_aps: 1, num_ues: 1, num_scatterers: 0, ..Default::default() };
        let model = ChannelModel { force_los: true, ..quiet_model() };
        let drop = two_node_drop(
            Position { x: 100.0, y: 200.0, z: 10.0 },
            Position { x: 100.0, y: 150.0, z: 1.65 },
            FRAC_PI_2,
            FRAC_PI_2,
        );
        let g = build_channel_geometry(&drop, &p, &model, &mut substream(0, Stream::Geometry, &[])).unwrap();
        assert!(g.link(0, 0).is_empty());
        assert_eq!(g.rejected_backside, 1);
    }

    #[test]
    fn facing_arrays_see_broadside() {
        let p = SimParams { num_aps: 1, num_ues: 1, num_scatterers: 0, ..Default::default() };
        let model = ChannelModel { force_los: true, ..quiet_model() };
        let ap = Position { x: 100.0, y: 200.0, z: 10.0 };
        let ue = Position { x: 100.0, y: 150.0, z: 1.65 };
        let drop = two_node_drop(ap, ue, -FRAC_PI_2, FRAC_PI_2);
        let g = build_channel_geometry(&drop, &p, &model, &mut substream(0, Stream::Geometry, &[])).unwrap();
        let paths = g.link(0, 0);
        assert_eq!(paths.len(), 1);
        assert!(paths[0].aod.abs() < 1e-12 && paths[0].aoa.abs() < 1e-12);
        assert!((paths[0].delay - ap.distance_3d(&ue) / SPEED_OF_LIGHT).abs() < 1e-18);
        assert_eq!(paths[0].kind, PathKind::Direct);
    }

    #[test]
    fn snapped_angles_lie_on_grid() {
        let p = SimParams { num_scatterers: 0, ..Default::default() };
        let model = ChannelModel { force_los: true, snap_to_grid: true, ..quiet_model() };
        let drop = generate_drop(&p, &mut substream(1, Stream::Drop, &[0]));
        let g = build_channel_geometry(&drop, &p, &model, &mut substream(1, Stream::Geometry, &[0])).unwrap();
        let ap_dict = dft_matrix(32).unwrap();
        let ue_dict = dft_matrix(16).unwrap();
        for link in &g.links {
            assert!(link.len() <= 1);
            for path in link {
                assert!(ap_dict.grid().contains(&path.aod));
                assert!(ue_dict.grid().contains(&path.aoa));
            }
        }
    }

    #[test]
    fn mean_paths_per_link_is_small() {
        let p = SimParams::default();
        let model = ChannelModel::default();
        let mut total = 0.0;
        for i in 0..20 {
            let drop = generate_drop(&p, &mut substream(11, Stream::Drop, &[i]));
            let g = build_channel_geometry(&drop, &p, &model, &mut substream(11, Stream::Geometry, &[i])).unwrap();
            total += g.mean_paths_per_link();
        }
        assert!(total / 20.0 < 16.0, "mean paths per link {}", total / 20.0);
    }

    #[test]
    fn gain_decreases_with_distance_within_class() {
        let m = quiet_model();
        let mut rng = substream(0, Stream::Geometry, &[]);
        let mut last = f64::INFINITY;
        for d in [1.0, 2.0, 10.0, 55.5, 300.0] {
            let g = m.path_loss_gain(28e9, d, false, &mut rng).unwrap();
            assert!(g < last);
            last = g;
            let los = m.path_loss_gain(28e9, d, true, &mut rng).unwrap();
            assert!(los >= g);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn geometry_invariants(seed in any::<u64>()) {
            let p = SimParams { num_aps: 8, num_ues: 4, num_scatterers: 60, ..Default::default() };
            let model = ChannelModel::default();
            let drop = generate_drop(&p, &mut substream(seed, Stream::Drop, &[0]));
            let g = build_channel_geometry(&drop, &p, &model, &mut substream(seed, Stream::Geometry, &[0])).unwrap();
            let g2 = build_channel_geometry(&drop, &p, &model, &mut substream(seed, Stream::Geometry, &[0])).unwrap();
            prop_assert_eq!(&g, &g2);
            prop_assert_eq!(g.links.len(), 32);
            let cp = p.cp_duration();
            for link in &g.links {
                let first = link.iter().map(|p| p.delay).fold(f64::INFINITY, f64::min);
                for path in link {
                    prop_assert!(path.aoa.abs() <= FRAC_PI_2 && path.aod.abs() <= FRAC_PI_2);
                    prop_assert!(path.gain_var > 0.0 && path.delay >= 0.0);
                    prop_assert!(path.delay - first <= cp);
                    if path.kind == PathKind::Direct {
                        prop_assert_eq!(path.delay, first);
                    }
                }
            }
        }

        #[test]
        fn los_probability_bounded_and_decreasing(a in 20.0f64..5000.0, b in 20.0f64..5000.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (pl, ph) = (los_probability(lo), los_probability(hi));
            prop_assert!((0.0..=1.0).contains(&pl) && (0.0..=1.0).contains(&ph));
            prop_assert!(ph <= pl + 1e-15);
        }
    }
}
