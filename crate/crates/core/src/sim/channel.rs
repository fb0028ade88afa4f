use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::{derive, stream};

/// Propagation environment for one transmitter placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub distance_ft: u32,
    /// Linear amplitude gain applied after the multipath filter.
    pub path_loss: f64,
    /// Multipath FIR taps, energy-normalized.
    pub taps: Vec<Complex64>,
    /// Standard deviation of the per-sample phase random-walk increment, in radians.
    pub phase_noise_std: f64,
    /// Post-channel SNR; infinite means no additive noise.
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    /// Scale of the per-run tap perturbation and carrier phase offset.
    pub run_jitter: f64,
}

impl ChannelProfile {
    /// Unit single-tap channel with no noise, loss or jitter.
    pub fn identity(distance_ft: u32) -> Self {
        ChannelProfile {
            distance_ft,
            path_loss: 1.0,
            taps: vec![Complex64::new(1.0, 0.0)],
            phase_noise_std: 0.0,
            snr_db: f64::INFINITY,
            run_jitter: 0.0,
        }
    }

    /// The taps actually used for `run`, before path loss.
    pub fn run_taps(&self, run: u32, seed: u64) -> Vec<Complex64> {
        let mut taps = self.taps.clone();
        if self.run_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[stream::TAPS, run as u64]));
            for t in taps.iter_mut() {
                *t += complex_normal(&mut rng) * self.run_jitter;
            }
        }
        normalize_energy(&mut taps);
        taps
    }

    /// Constant carrier phase offset for `run`, in radians.
    pub fn run_phase(&self, run: u32, seed: u64) -> f64 {
        if self.run_jitter == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[stream::PHASE, run as u64, 0]));
        let z: f64 = StandardNormal.sample(&mut rng);
        z * std::f64::consts::PI * self.run_jitter
    }
}

mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Circularly symmetric complex Gaussian with unit variance.
pub(crate) fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Scales `taps` to unit total energy; an all-zero tap set is left untouched.
pub fn normalize_energy(taps: &mut [Complex64]) {
    let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    if energy > 0.0 {
        let s = energy.sqrt().recip();
        taps.iter_mut().for_each(|t| *t *= s);
    }
}

/// Causal FIR filtering, truncated to the input length.
pub fn fir(signal: &[Complex64], taps: &[Complex64]) -> Vec<Complex64> {
    (0..signal.len())
        .map(|n| {
            taps.iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, &h)| h * signal[n - k])
                .sum()
        })
        .collect()
}

/// Passes `signal` through the channel for one run.
///
/// Steps: FIR with run-perturbed taps, path loss, carrier phase (a per-run
/// offset plus a random walk), then AWGN scaled to the noise-free output power.
pub fn apply_channel(
    signal: &[Complex64],
    profile: &ChannelProfile,
    run: u32,
    seed: u64,
) -> Vec<Complex64> {
    let noise_free = channel_noise_free(signal, profile, run, seed);
    add_awgn(
        noise_free,
        profile.snr_db,
        derive(seed, &[stream::NOISE, run as u64]),
    )
}

/// The channel output before additive noise.
pub fn channel_noise_free(
    signal: &[Complex64],
    profile: &ChannelProfile,
    run: u32,
    seed: u64,
) -> Vec<Complex64> {
    let taps = profile.run_taps(run, seed);
    let mut y = fir(signal, &taps);
    let offset = profile.run_phase(run, seed);
    let mut phase = offset;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[stream::PHASE, run as u64, 1]));
    for v in y.iter_mut() {
        if profile.phase_noise_std > 0.0 {
            let step: f64 = StandardNormal.sample(&mut rng);
            phase += step * profile.phase_noise_std;
        }
        *v *= profile.path_loss;
        if phase != 0.0 {
            *v *= Complex64::from_polar(1.0, phase);
        }
    }
    y
}

/// Adds white Gaussian noise at `snr_db` relative to the mean power of `signal`.
pub fn add_awgn(mut signal: Vec<Complex64>, snr_db: f64, seed: u64) -> Vec<Complex64> {
    if !snr_db.is_finite() || signal.is_empty() {
        return signal;
    }
    let power = signal.iter().map(|z| z.norm_sqr()).sum::<f64>() / signal.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in signal.iter_mut() {
        *v += complex_normal(&mut rng) * sigma;
    }
    signal
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::from_polar(1.0, i as f64 * 0.3))
            .collect()
    }

    #[test]
    fn identity_channel_passes_signal() {
        let x = probe(64);
        let y = apply_channel(&x, &ChannelProfile::identity(2), 0, 9);
        assert_eq!(x, y);
    }

    #[test]
    fn fir_matches_hand_convolution() {
        let x = [1.0, 2.0, 3.0].map(|v| Complex64::new(v, 0.0));
        let h = [1.0, 0.5].map(|v| Complex64::new(v, 0.0));
        let y = fir(&x, &h);
        let want = [1.0, 2.5, 4.0];
        for (a, b) in y.iter().zip(want) {
            assert!((a.re - b).abs() < 1e-15 && a.im == 0.0);
        }
    }

    #[test]
    fn run_seeds_perturbation() {
        let profile = ChannelProfile {
            taps: vec![Complex64::new(0.8, 0.0), Complex64::new(0.0, 0.6)],
            run_jitter: 0.1,
            ..ChannelProfile::identity(8)
        };
        assert_eq!(profile.run_taps(0, 3), profile.run_taps(0, 3));
        assert_ne!(profile.run_taps(0, 3), profile.run_taps(1, 3));
        let e: f64 = profile.run_taps(1, 3).iter().map(|t| t.norm_sqr()).sum();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_snr_round_trips_through_json() {
        let p = ChannelProfile::identity(2);
        let text = serde_json::to_string(&p).unwrap();
        let back: ChannelProfile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
