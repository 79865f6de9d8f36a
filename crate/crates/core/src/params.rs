//! System parameters shared by every stage of the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and protocol parameters of one simulated network.
///
/// Defaults reproduce the reference desk-scale setup: 400 m square, 50 APs,
/// 15 UEs, 300 scatterers, 32/16-element ULAs at 28 GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    pub num_aps: usize,
    pub num_ues: usize,
    pub num_scatterers: usize,
    pub ap_antennas: usize,
    pub ue_antennas: usize,
    pub ap_rf_chains: usize,
    pub ue_rf_chains: usize,
    /// Active beamspace fingers per AP beamformer.
    pub ap_fingers: usize,
    /// Active beamspace fingers per UE beamformer.
    pub ue_fingers: usize,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub num_subcarriers: usize,
    /// Cyclic prefix length as a fraction of the useful symbol time.
    pub cp_fraction: f64,
    /// OFDM symbols per beacon slot.
    pub symbols_per_slot: usize,
    /// Beacon slots generated per drop; shorter runs reuse a prefix.
    pub max_slots: usize,
    /// Subcarriers per AP RF chain.
    pub subcarriers_per_chain: usize,
    /// Total transmit power during beam alignment, watts.
    pub p_ba_w: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub ap_height: f64,
    pub ue_height: f64,
    pub scatterer_height: f64,
    /// Number of (AoA, AoD) pairs each UE must detect.
    pub num_detect: usize,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            area_side: 400.0,
            num_aps: 50,
            num_ues: 15,
            num_scatterers: 300,
            ap_antennas: 32,
            ue_antennas: 16,
            ap_rf_chains: 8,
            ue_rf_chains: 4,
            ap_fingers: 8,
            ue_fingers: 4,
            carrier_freq_hz: 28e9,
            bandwidth_hz: 500e6,
            subcarrier_spacing_hz: 480e3,
            num_subcarriers: 1024,
            cp_fraction: 0.07,
            symbols_per_slot: 14,
            max_slots: 20,
            subcarriers_per_chain: 16,
            p_ba_w: 10f64.powf(0.7),
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            ap_height: 10.0,
            ue_height: 1.65,
            scatterer_height: 1.65,
            num_detect: 1,
            seed: 1,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_aps", self.num_aps),
            ("num_ues", self.num_ues),
            ("ap_antennas", self.ap_antennas),
            ("ue_antennas", self.ue_antennas),
            ("ap_rf_chains", self.ap_rf_chains),
            ("ue_rf_chains", self.ue_rf_chains),
            ("ap_fingers", self.ap_fingers),
            ("ue_fingers", self.ue_fingers),
            ("num_subcarriers", self.num_subcarriers),
            ("symbols_per_slot", self.symbols_per_slot),
            ("max_slots", self.max_slots),
            ("subcarriers_per_chain", self.subcarriers_per_chain),
            ("num_detect", self.num_detect),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if self.ap_rf_chains >= self.ap_antennas {
            return Err(Error::param("ap_rf_chains", "must be smaller than ap_antennas"));
        }
        if self.ue_rf_chains >= self.ue_antennas {
            return Err(Error::param("ue_rf_chains", "must be smaller than ue_antennas"));
        }
        if self.ap_fingers > self.ap_antennas {
            return Err(Error::param("ap_fingers", "cannot exceed ap_antennas"));
        }
        if self.ue_fingers > self.ue_antennas {
            return Err(Error::param("ue_fingers", "cannot exceed ue_antennas"));
        }
        let positive = [
            ("area_side", self.area_side),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        let occupied = self.num_subcarriers as f64 * self.subcarrier_spacing_hz;
        if occupied > self.bandwidth_hz * (1.0 + 1e-9) {
            return Err(Error::param(
                "num_subcarriers",
                format!(
                    "{} subcarriers at {} Hz occupy {occupied} Hz, more than the {} Hz channel",
                    self.num_subcarriers, self.subcarrier_spacing_hz, self.bandwidth_hz
                ),
            ));
        }
        if !(self.cp_fraction >= 0.0 && self.cp_fraction.is_finite()) {
            return Err(Error::param("cp_fraction", "must be non-negative"));
        }
        if !(self.p_ba_w >= 0.0 && self.p_ba_w.is_finite()) {
            return Err(Error::param("p_ba_w", "must be non-negative"));
        }
        for (name, v) in [
            ("ap_height", self.ap_height),
            ("ue_height", self.ue_height),
            ("scatterer_height", self.scatterer_height),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.num_patterns() == 0 {
            return Err(Error::Infeasible(format!(
                "no data pattern fits: N_C={}, Q={}, n_AP={}",
                self.num_subcarriers, self.subcarriers_per_chain, self.ap_rf_chains
            )));
        }
        if self.num_detect > self.num_patterns() {
            return Err(Error::TooManyPairs {
                requested: self.num_detect,
                available: self.num_patterns(),
            });
        }
        Ok(())
    }

    /// Cyclic prefix duration, seconds.
    pub fn cp_duration(&self) -> f64 {
        self.cp_fraction / self.subcarrier_spacing_hz
    }

    /// OFDM symbol duration including the cyclic prefix, seconds.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz + self.cp_duration()
    }

    /// Number of orthogonal data patterns.
    pub fn num_patterns(&self) -> usize {
        crate::patterns::num_patterns(
            self.num_subcarriers,
            self.subcarriers_per_chain,
            self.ap_rf_chains,
        )
    }

    /// Per-subcarrier transmit power.
    pub fn beta(&self) -> f64 {
        self.p_ba_w / self.num_subcarriers as f64
    }

    pub fn noise_variance(&self) -> f64 {
        crate::airlink::noise_variance(
            self.noise_psd_dbm_hz,
            self.subcarrier_spacing_hz,
            self.noise_figure_db,
        )
    }
}

/// Convert dBW to watts.
pub fn dbw_to_watts(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}
