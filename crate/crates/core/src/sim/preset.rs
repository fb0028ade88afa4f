use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::channel::{complex_normal, normalize_energy, ChannelProfile};
use super::impair::DeviceProfile;
use super::ofdm::OfdmConfig;
use crate::error::{CoreError, Result};
use crate::seed::{derive, stream};

/// Distances of the original measurement grid, in feet.
pub const PAPER_DISTANCES_FT: [u32; 11] = [2, 8, 14, 20, 26, 32, 38, 44, 50, 56, 62];

/// Upper bounds on each device impairment; profiles are drawn inside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentBounds {
    pub gain_db: f64,
    pub phase_deg: f64,
    pub dc_offset: f64,
    pub cfo_hz: f64,
    /// Largest third-order compression coefficient magnitude.
    pub pa_third: f64,
    pub pa_fifth: f64,
}

/// How channel profiles are synthesized for each distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSettings {
    pub n_taps: usize,
    /// Power-delay decay constant (in taps) at the nearest distance.
    pub delay_spread_near: f64,
    /// Power-delay decay constant at the farthest distance.
    pub delay_spread_far: f64,
    pub phase_noise_std: f64,
    pub snr_db_near: f64,
    pub snr_db_far: f64,
    pub path_loss_exponent: f64,
    pub run_jitter: f64,
}

/// Complete description of a synthetic capture campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub name: String,
    pub n_devices: u32,
    pub distances_ft: Vec<u32>,
    pub runs: u32,
    pub samples_per_capture: usize,
    pub sample_rate: f64,
    pub ofdm: OfdmConfig,
    pub impairments: ImpairmentBounds,
    pub channel: ChannelSettings,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate()?;
        if self.n_devices == 0 || self.distances_ft.is_empty() || self.runs == 0 {
            return Err(CoreError::Config(
                "need at least one device, one distance and one run".into(),
            ));
        }
        if self.distances_ft.contains(&0) {
            return Err(CoreError::Config("distances must be positive".into()));
        }
        let mut sorted = self.distances_ft.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.distances_ft.len() {
            return Err(CoreError::Config("duplicate distance".into()));
        }
        if self.samples_per_capture < self.ofdm.symbol_len() {
            return Err(CoreError::Config(format!(
                "capture of {} samples is shorter than one OFDM symbol",
                self.samples_per_capture
            )));
        }
        if self.channel.n_taps == 0 || !(self.sample_rate > 0.0) {
            return Err(CoreError::Config(
                "need at least one tap and a positive rate".into(),
            ));
        }
        Ok(())
    }

    pub fn n_recordings(&self) -> usize {
        self.n_devices as usize * self.distances_ft.len() * self.runs as usize
    }

    /// Seconds of signal per capture.
    pub fn duration_s(&self) -> f64 {
        self.samples_per_capture as f64 / self.sample_rate
    }

    /// Draws one profile per device. Each device's draw is a fixed point in the
    /// unit box scaled by the bounds, so widening a bound widens every gap.
    pub fn device_profiles(&self, master_seed: u64) -> Vec<DeviceProfile> {
        let b = &self.impairments;
        let n = self.n_devices as usize;
        // Latin hypercube over the unit box: on every axis each device gets
        // its own stratum, so no two devices share a coordinate range.
        const AXES: usize = 7;
        let strata: Vec<Vec<usize>> = (0..AXES)
            .map(|axis| {
                let mut perm: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(derive(
                    master_seed,
                    &[stream::DEVICE, u64::MAX, axis as u64],
                ));
                perm.shuffle(&mut rng);
                perm
            })
            .collect();
        (0..n)
            .map(|id| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive(master_seed, &[stream::DEVICE, id as u64]));
                let mut axis = 0;
                let mut u = || {
                    let cell = strata[axis][id] as f64 + rng.random::<f64>();
                    axis += 1;
                    2.0 * cell / n as f64 - 1.0
                };
                let gain = b.gain_db * u();
                let phase = b.phase_deg * u();
                let dc_mag = b.dc_offset * (1.0 + u()) / 2.0;
                let dc_arg = std::f64::consts::PI * u();
                let cfo = b.cfo_hz * u();
                let third = -b.pa_third * (1.0 + u()) / 2.0;
                let fifth = b.pa_fifth * u();
                DeviceProfile {
                    device_id: id as u32,
                    iq_gain_imbalance_db: gain,
                    iq_phase_skew_deg: phase,
                    dc_offset: Complex64::from_polar(dc_mag, dc_arg),
                    cfo_hz: cfo,
                    pa_coeffs: vec![1.0, third, fifth],
                }
            })
            .collect()
    }

    /// One channel profile per distance. Farther placements get longer delay
    /// spread, more path loss and lower SNR.
    pub fn channel_profiles(&self, master_seed: u64) -> Vec<ChannelProfile> {
        let c = &self.channel;
        let near = *self.distances_ft.iter().min().unwrap_or(&1) as f64;
        let far = *self.distances_ft.iter().max().unwrap_or(&1) as f64;
        self.distances_ft
            .iter()
            .map(|&d| {
                let t = if far > near {
                    (d as f64 / near).ln() / (far / near).ln()
                } else {
                    0.0
                };
                let spread = c.delay_spread_near + t * (c.delay_spread_far - c.delay_spread_near);
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive(master_seed, &[stream::CHANNEL, d as u64]));
                let mut taps: Vec<Complex64> = (0..c.n_taps)
                    .map(|k| complex_normal(&mut rng) * (-(k as f64) / (2.0 * spread)).exp())
                    .collect();
                normalize_energy(&mut taps);
                ChannelProfile {
                    distance_ft: d,
                    path_loss: (near / d as f64).powf(c.path_loss_exponent / 2.0),
                    taps,
                    phase_noise_std: c.phase_noise_std,
                    snr_db: c.snr_db_near + t * (c.snr_db_far - c.snr_db_near),
                    run_jitter: c.run_jitter,
                }
            })
            .collect()
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 4] = ["tiny", "easy", "hard", "paper"];

/// Built-in campaigns. `tiny` is a smoke-test size; `easy` and `hard` are
/// desk-scale (4 devices, 3 distances, 2 runs) and differ in how similar the
/// devices are and how much the channel drifts between runs; `paper` mirrors
/// the full 16 x 11 x 2 grid at 0.4 s per capture.
pub fn preset(name: &str) -> Result<SimConfig> {
    let desk_distances = vec![2, 8, 14];
    let cfg = match name {
        "tiny" => SimConfig {
            name: name.into(),
            n_devices: 2,
            distances_ft: vec![2, 8],
            runs: 2,
            samples_per_capture: 200 * 256,
            sample_rate: 5e6,
            ofdm: OfdmConfig::default(),
            impairments: easy_bounds(),
            channel: easy_channel(),
        },
        "easy" => SimConfig {
            name: name.into(),
            n_devices: 4,
            distances_ft: desk_distances,
            runs: 2,
            samples_per_capture: 6250 * 256,
            sample_rate: 5e6,
            ofdm: OfdmConfig::default(),
            impairments: easy_bounds(),
            channel: easy_channel(),
        },
        "hard" => SimConfig {
            name: name.into(),
            n_devices: 4,
            distances_ft: desk_distances,
            runs: 2,
            samples_per_capture: 2000 * 256,
            sample_rate: 5e6,
            ofdm: OfdmConfig::default(),
            impairments: ImpairmentBounds {
                gain_db: 0.3,
                phase_deg: 2.0,
                dc_offset: 0.03,
                cfo_hz: 500.0,
                pa_third: 0.01,
                pa_fifth: 0.001,
            },
            channel: ChannelSettings {
                delay_spread_near: 0.5,
                run_jitter: 0.6,
                snr_db_near: 25.0,
                snr_db_far: 15.0,
                ..easy_channel()
            },
        },
        "paper" => SimConfig {
            name: name.into(),
            n_devices: 16,
            distances_ft: PAPER_DISTANCES_FT.to_vec(),
            runs: 2,
            samples_per_capture: 2_000_000,
            sample_rate: 5e6,
            ofdm: OfdmConfig::default(),
            impairments: ImpairmentBounds {
                gain_db: 0.5,
                phase_deg: 3.0,
                dc_offset: 0.05,
                cfo_hz: 500.0,
                pa_third: 0.02,
                pa_fifth: 0.002,
            },
            channel: ChannelSettings {
                run_jitter: 0.3,
                ..easy_channel()
            },
        },
        other => {
            return Err(CoreError::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

fn easy_bounds() -> ImpairmentBounds {
    ImpairmentBounds {
        gain_db: 6.0,
        phase_deg: 30.0,
        dc_offset: 0.5,
        cfo_hz: 2000.0,
        pa_third: 0.05,
        pa_fifth: 0.003,
    }
}

fn easy_channel() -> ChannelSettings {
    ChannelSettings {
        n_taps: 5,
        delay_spread_near: 0.2,
        delay_spread_far: 2.0,
        phase_noise_std: 0.002,
        snr_db_near: 30.0,
        snr_db_far: 20.0,
        path_loss_exponent: 2.0,
        run_jitter: 0.05,
    }
}
