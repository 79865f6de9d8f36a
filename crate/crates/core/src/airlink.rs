//! Beacon-phase observables seen by the UEs.
//!
//! Observables are generated directly in the per-subcarrier beamspace domain:
//! every AP of a pattern sends the constant symbol `sqrt(beta)` on its
//! subcarriers, the UE splits the received power over its RF chains, and the
//! per-chain samples are reduced to averaged energies `c[k][d][s][j][i]`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamspace::{BeamspaceMask, DftDictionary};
use crate::error::{Error, Result};
use crate::params::SimParams;
use crate::patterns::{DataPattern, PatternAssignment, UeCodebook};
use crate::rng::{substream, SimRng, Stream};
use crate::scenario::{ChannelGeometry, ChannelPath};

/// Thermal noise power per subcarrier, watts.
pub fn noise_variance(noise_psd_dbm_hz: f64, subcarrier_spacing_hz: f64, noise_figure_db: f64) -> f64 {
    let dbm = noise_psd_dbm_hz + 10.0 * subcarrier_spacing_hz.log10() + noise_figure_db;
    10f64.powf((dbm - 30.0) / 10.0)
}

/// A path expressed in the two DFT bases.
#[derive(Debug, Clone)]
pub struct PathResponse {
    pub gain_var: f64,
    pub delay: f64,
    /// `W_UE^H a_UE(aoa)`.
    pub rx: Vec<Complex64>,
    /// `a_AP(aod)^H W_AP`.
    pub tx: Vec<Complex64>,
}

impl PathResponse {
    pub fn new(path: &ChannelPath, ue_dict: &DftDictionary, ap_dict: &DftDictionary) -> Self {
        let rx = ue_dict.beamspace_response(path.aoa);
        let tx = ap_dict.beamspace_response(path.aod).into_iter().map(|c| c.conj()).collect();
        PathResponse { gain_var: path.gain_var, delay: path.delay, rx, tx }
    }
}

/// `v^H W_UE^H H(q) W_AP u` for normalized masks, evaluated path by path.
///
/// `alphas[l]` is the slot gain of `paths[l]`; `symbol_duration` converts the
/// subcarrier index into the frequency at which delays are evaluated.
pub fn beamspace_gain(
    paths: &[PathResponse],
    alphas: &[Complex64],
    q: usize,
    symbol_duration: f64,
    tx_mask: &BeamspaceMask,
    rx_mask: &BeamspaceMask,
) -> Complex64 {
    paths
        .iter()
        .zip(alphas)
        .map(|(p, &alpha)| {
            let phase = Complex64::from_polar(1.0, -2.0 * PI * q as f64 / symbol_duration * p.delay);
            alpha * rx_mask.project(&p.rx) * tx_mask.project(&p.tx) * phase
        })
        .sum()
}

/// Beamspace path responses for every link of a drop.
#[derive(Debug, Clone)]
pub struct LinkBank {
    pub num_ues: usize,
    pub num_aps: usize,
    pub links: Vec<Vec<PathResponse>>,
}

impl LinkBank {
    pub fn new(geometry: &ChannelGeometry, ue_dict: &DftDictionary, ap_dict: &DftDictionary) -> Self {
        let links = geometry
            .links
            .iter()
            .map(|paths| paths.iter().map(|p| PathResponse::new(p, ue_dict, ap_dict)).collect())
            .collect();
        LinkBank { num_ues: geometry.num_ues, num_aps: geometry.num_aps, links }
    }

    pub fn link(&self, ue: usize, ap: usize) -> &[PathResponse] {
        &self.links[ue * self.num_aps + ap]
    }
}

/// Complex path gains redrawn in every beacon slot.
#[derive(Debug, Clone)]
pub struct SlotGains {
    pub slots: usize,
    pub num_aps: usize,
    /// `gains[link][s * L + l]` with `L` the link's path count.
    pub gains: Vec<Vec<Complex64>>,
}

impl SlotGains {
    /// Draws `alpha ~ CN(0, gamma)` i.i.d. across slots; the stream of link
    /// `(k, m)` is keyed by `(drop, k, m)`.
    pub fn draw(bank: &LinkBank, slots: usize, seed: u64, drop: u64) -> Self {
        let gains = bank
            .links
            .iter()
            .enumerate()
            .map(|(idx, paths)| {
                let (k, m) = (idx / bank.num_aps, idx % bank.num_aps);
                let mut rng = substream(seed, Stream::SlotGains, &[drop, k as u64, m as u64]);
                let mut out = Vec::with_capacity(slots * paths.len());
                for _ in 0..slots {
                    for p in paths {
                        out.push(complex_normal(&mut rng, p.gain_var));
                    }
                }
                out
            })
            .collect();
        SlotGains { slots, num_aps: bank.num_aps, gains }
    }

    pub fn slot(&self, ue: usize, ap: usize, s: usize) -> &[Complex64] {
        let g = &self.gains[ue * self.num_aps + ap];
        let per = g.len() / self.slots.max(1);
        &g[s * per..(s + 1) * per]
    }
}

/// Sample of `CN(0, var)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let sd = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sd, im * sd)
}

/// How the `Q S` noisy samples behind each observable are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSampling {
    /// Draw the sum of squared magnitudes from its exact distribution: one
    /// complex Gaussian along the signal direction plus a Gamma variate for
    /// the `QS - 1` orthogonal noise dimensions.
    #[default]
    Aggregate,
    /// Draw every per-symbol, per-subcarrier noise sample.
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AirlinkOptions {
    pub noiseless: bool,
    pub sampling: NoiseSampling,
    /// Physical arrays with unit-modulus element responses: every path
    /// gains `N_AP * N_UE` in power over the unit-norm dictionary vectors.
    pub array_gain: bool,
}

impl Default for AirlinkOptions {
    fn default() -> Self {
        AirlinkOptions { noiseless: false, sampling: NoiseSampling::default(), array_gain: true }
    }
}

impl AirlinkOptions {
    /// Scale from path-sum beamspace gains to received amplitude.
    pub fn amplitude(&self, params: &SimParams) -> f64 {
        let mut power = params.beta() / params.ue_rf_chains as f64;
        if self.array_gain {
            power *= (params.ap_antennas * params.ue_antennas) as f64;
        }
        power.sqrt()
    }
}

/// Averaged quadratic observables `c[k][d][s][j][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObservables {
    pub num_ues: usize,
    pub num_patterns: usize,
    pub slots: usize,
    pub ue_chains: usize,
    pub ap_chains: usize,
    /// Noise floor the UEs assume when inverting the measurements.
    pub sigma2: f64,
    pub data: Vec<f64>,
}

const OBS_MAGIC: &[u8; 8] = b"BAQOBS01";

impl QuadraticObservables {
    pub fn zeros(num_ues: usize, num_patterns: usize, slots: usize, ue_chains: usize, ap_chains: usize, sigma2: f64) -> Self {
        QuadraticObservables {
            num_ues,
            num_patterns,
            slots,
            ue_chains,
            ap_chains,
            sigma2,
            data: vec![0.0; num_ues * num_patterns * slots * ue_chains * ap_chains],
        }
    }

    pub fn block_len(&self) -> usize {
        self.slots * self.ue_chains * self.ap_chains
    }

    pub fn index(&self, k: usize, d: usize, s: usize, j: usize, i: usize) -> usize {
        (((k * self.num_patterns + d) * self.slots + s) * self.ue_chains + j) * self.ap_chains + i
    }

    pub fn get(&self, k: usize, d: usize, s: usize, j: usize, i: usize) -> f64 {
        self.data[self.index(k, d, s, j, i)]
    }

    /// All observables of UE `k` on pattern `d`, slot-major then `j` then `i`.
    pub fn block(&self, k: usize, d: usize) -> &[f64] {
        let start = self.index(k, d, 0, 0, 0);
        &self.data[start..start + self.block_len()]
    }

    /// Binary dump: magic, five little-endian u64 dimensions, the f64 noise
    /// floor, then the tensor as little-endian f64 in index order.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(56 + 8 * self.data.len());
        buf.extend_from_slice(OBS_MAGIC);
        for dim in [self.num_ues, self.num_patterns, self.slots, self.ue_chains, self.ap_chains] {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.sigma2.to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.into() };
        if bytes.len() < 56 || &bytes[..8] != OBS_MAGIC {
            return Err(bad("missing observables header"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        let dims: Vec<usize> = (0..5).map(|i| word(i) as usize).collect();
        let sigma2 = f64::from_bits(word(5));
        let count = dims.iter().product::<usize>();
        if bytes.len() != 56 + 8 * count {
            return Err(bad("payload length does not match header dimensions"));
        }
        let data = bytes[56..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(QuadraticObservables {
            num_ues: dims[0],
            num_patterns: dims[1],
            slots: dims[2],
            ue_chains: dims[3],
            ap_chains: dims[4],
            sigma2,
            data,
        })
    }
}

/// Everything a UE-side synthesis pass reads.
pub struct AirlinkInputs<'a> {
    pub bank: &'a LinkBank,
    pub gains: &'a SlotGains,
    pub assignment: &'a PatternAssignment,
    pub patterns: &'a [DataPattern],
    pub codebook: &'a UeCodebook,
}

/// Synthesize the observables of every UE and pattern over `slots` slots.
///
/// Noise for `(k, d, s)` comes from the substream keyed by
/// `(drop, k, d, s)`, so any prefix of slots is identical whatever the
/// total length, and runs that differ only in the pattern assignment share
/// their noise realizations.
pub fn synthesize_observables(
    inputs: &AirlinkInputs<'_>,
    params: &SimParams,
    options: &AirlinkOptions,
    slots: usize,
    seed: u64,
    drop: u64,
) -> QuadraticObservables {
    let num_ues = inputs.bank.num_ues;
    let num_patterns = inputs.patterns.len();
    let sigma2 = if options.noiseless { 0.0 } else { params.noise_variance() };
    let mut obs = QuadraticObservables::zeros(
        num_ues,
        num_patterns,
        slots,
        params.ue_rf_chains,
        params.ap_rf_chains,
        sigma2,
    );
    let block = obs.block_len();
    let members = inputs.assignment.members();
    obs.data.par_chunks_mut(block).enumerate().for_each(|(idx, out)| {
        let (k, d) = (idx / num_patterns, idx % num_patterns);
        let ctx = BlockContext {
            inputs,
            params,
            options,
            sigma2,
            k,
            pattern: &inputs.patterns[d],
            aps: &members[d],
        };
        ctx.fill(out, slots, seed, drop);
    });
    obs
}

struct BlockContext<'a, 'b> {
    inputs: &'a AirlinkInputs<'b>,
    params: &'a SimParams,
    options: &'a AirlinkOptions,
    sigma2: f64,
    k: usize,
    pattern: &'a DataPattern,
    aps: &'a [usize],
}

impl BlockContext<'_, '_> {
    fn fill(&self, out: &mut [f64], slots: usize, seed: u64, drop: u64) {
        let p = self.params;
        let (n_ue, n_ap) = (p.ue_rf_chains, p.ap_rf_chains);
        let t0 = p.symbol_duration();
        let amp = self.options.amplitude(p);

        let paths: Vec<(&PathResponse, usize, usize)> = self
            .aps
            .iter()
            .flat_map(|&m| {
                self.inputs.bank.link(self.k, m).iter().enumerate().map(move |(l, r)| (r, m, l))
            })
            .collect();
        let omegas: Vec<f64> = paths.iter().map(|(r, _, _)| -2.0 * PI * r.delay / t0).collect();

        let mut energy = vec![0.0f64; n_ue * n_ap];
        let mut rx_factor = vec![Complex64::new(0.0, 0.0); n_ue * paths.len()];
        let mut base = vec![Complex64::new(0.0, 0.0); paths.len()];
        let mut phases: Vec<Complex64> = Vec::new();
        let ue_masks = self.inputs.codebook.ue(self.k);

        for s in 0..slots {
            energy.iter_mut().for_each(|e| *e = 0.0);
            let blocks = &self.pattern.subcarriers[s];
            if !paths.is_empty() && amp > 0.0 {
                for j in 0..n_ue {
                    for (l, (r, _, _)) in paths.iter().enumerate() {
                        rx_factor[j * paths.len() + l] = ue_masks[s][j].project(&r.rx);
                    }
                }
                for (l, (_, m, pl)) in paths.iter().enumerate() {
                    base[l] = self.inputs.gains.slot(self.k, *m, s)[*pl] * amp;
                }
                for i in 0..n_ap {
                    let tx_mask = &self.pattern.tx_masks[s][i];
                    let subcarriers = &blocks[i];
                    phases.clear();
                    for &w in &omegas {
                        phases.extend(subcarriers.iter().map(|&q| Complex64::from_polar(1.0, w * q as f64)));
                    }
                    let tx: Vec<Complex64> = paths
                        .iter()
                        .zip(&base)
                        .map(|((r, _, _), b)| b * tx_mask.project(&r.tx))
                        .collect();
                    let nq = subcarriers.len();
                    for j in 0..n_ue {
                        let coeff: Vec<Complex64> =
                            (0..paths.len()).map(|l| tx[l] * rx_factor[j * paths.len() + l]).collect();
                        let mut e = 0.0;
                        for qi in 0..nq {
                            let y: Complex64 = coeff.iter().enumerate().map(|(l, c)| c * phases[l * nq + qi]).sum();
                            e += y.norm_sqr();
                        }
                        energy[j * n_ap + i] = e;
                    }
                }
            }
            let slot_out = &mut out[s * n_ue * n_ap..(s + 1) * n_ue * n_ap];
            self.add_noise(slot_out, &energy, blocks, s, seed, drop);
        }
    }

    /// `energy[j * n_ap + i]` holds `sum_q |y_q|^2` for one OFDM symbol.
    fn add_noise(&self, out: &mut [f64], energy: &[f64], blocks: &[Vec<usize>], s: usize, seed: u64, drop: u64) {
        let p = self.params;
        let (n_ue, n_ap) = (p.ue_rf_chains, p.ap_rf_chains);
        let sym = p.symbols_per_slot;
        let mut rng = substream(
            seed,
            Stream::Noise,
            &[drop, self.k as u64, self.pattern.index as u64, s as u64],
        );
        for j in 0..n_ue {
            for i in 0..n_ap {
                let q = blocks[i].len();
                let samples = (q * sym) as f64;
                let e_sym = energy[j * n_ap + i];
                out[j * n_ap + i] = if self.options.noiseless || self.sigma2 == 0.0 {
                    e_sym / q as f64
                } else {
                    match self.options.sampling {
                        NoiseSampling::Aggregate => {
                            aggregate_energy(&mut rng, e_sym * sym as f64, q * sym, self.sigma2) / samples
                        }
                        NoiseSampling::PerSample => {
                            self.per_sample_energy(&mut rng, j, i, s, &blocks[i]) / samples
                        }
                    }
                };
            }
        }
    }

    /// Explicit per-symbol synthesis: recompute `y_q` and add a fresh noise
    /// sample for each of the `S` symbols.
    fn per_sample_energy(&self, rng: &mut SimRng, j: usize, i: usize, s: usize, subcarriers: &[usize]) -> f64 {
        let p = self.params;
        let t0 = p.symbol_duration();
        let amp = self.options.amplitude(p);
        let tx_mask = &self.pattern.tx_masks[s][i];
        let rx_mask = &self.inputs.codebook.ue(self.k)[s][j];
        let signal: Vec<Complex64> = subcarriers
            .iter()
            .map(|&q| {
                self.aps
                    .iter()
                    .map(|&m| {
                        beamspace_gain(
                            self.inputs.bank.link(self.k, m),
                            self.inputs.gains.slot(self.k, m, s),
                            q,
                            t0,
                            tx_mask,
                            rx_mask,
                        )
                    })
                    .sum::<Complex64>()
                    * amp
            })
            .collect();
        let mut total = 0.0;
        for _ in 0..p.symbols_per_slot {
            for y in &signal {
                total += (y + complex_normal(rng, self.sigma2)).norm_sqr();
            }
        }
        total
    }
}

/// Sample of `sum_n |mu_n + z_n|^2` over `n` terms with `z_n ~ CN(0, var)`
/// and `sum_n |mu_n|^2 = signal_energy`.
///
/// Rotating the sample vector so the mean lies on the first axis leaves one
/// shifted complex Gaussian and `n - 1` pure-noise terms whose energy is
/// `Gamma(n - 1, var)`.
pub fn aggregate_energy<R: Rng + ?Sized>(rng: &mut R, signal_energy: f64, n: usize, var: f64) -> f64 {
    let head = (Complex64::new(signal_energy.sqrt(), 0.0) + complex_normal(rng, var)).norm_sqr();
    let tail = if n > 1 {
        Gamma::new((n - 1) as f64, var).expect("positive shape and scale").sample(rng)
    } else {
        0.0
    };
    head + tail
}
