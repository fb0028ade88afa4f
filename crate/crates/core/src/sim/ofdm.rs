use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// OFDM numerology of the transmitted waveform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub fft_size: usize,
    pub cp_len: usize,
    /// Number of QPSK-loaded subcarriers, split evenly around the unused DC bin.
    pub active_subcarriers: usize,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        OfdmConfig {
            fft_size: 64,
            cp_len: 16,
            active_subcarriers: 52,
        }
    }
}

impl OfdmConfig {
    /// Samples per symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    pub fn validate(&self) -> Result<()> {
        let half = self.active_subcarriers / 2;
        if self.fft_size < 4
            || self.active_subcarriers == 0
            || !self.active_subcarriers.is_multiple_of(2)
            || half >= self.fft_size / 2
            || self.cp_len > self.fft_size
        {
            return Err(CoreError::Config(format!(
                "invalid OFDM numerology: fft {} cp {} active {}",
                self.fft_size, self.cp_len, self.active_subcarriers
            )));
        }
        Ok(())
    }

    /// FFT bins carrying data: +1..=+half and -half..=-1, DC left empty.
    pub fn active_bins(&self) -> Vec<usize> {
        let half = self.active_subcarriers / 2;
        (1..=half)
            .chain(self.fft_size - half..self.fft_size)
            .collect()
    }
}

/// Generates random-data OFDM baseband with unit average power.
///
/// Returns whole symbols, `ceil(n_samples / symbol_len)` of them, so the
/// result is at least `n_samples` long. Callers truncate as needed.
pub fn generate_ofdm_baseband(
    config: &OfdmConfig,
    seed: u64,
    n_samples: usize,
) -> Result<Vec<Complex64>> {
    config.validate()?;
    let sym_len = config.symbol_len();
    if n_samples < sym_len {
        return Err(CoreError::Argument(format!(
            "need at least one OFDM symbol ({sym_len} samples), got {n_samples}"
        )));
    }
    let n_symbols = n_samples.div_ceil(sym_len);
    let n = config.fft_size;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let bins = config.active_bins();
    // QPSK points have unit energy; the unnormalized inverse FFT sums
    // `active` of them, so this scale yields unit mean power per sample.
    let scale = 1.0 / (config.active_subcarriers as f64).sqrt();
    let amp = std::f64::consts::FRAC_1_SQRT_2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_symbols * sym_len);
    let mut freq = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..n_symbols {
        freq.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for &b in &bins {
            let bits: u8 = rng.random_range(0..4);
            let re = if bits & 1 == 0 { amp } else { -amp };
            let im = if bits & 2 == 0 { amp } else { -amp };
            freq[b] = Complex64::new(re, im);
        }
        ifft.process(&mut freq);
        out.extend(freq[n - config.cp_len..].iter().map(|v| v * scale));
        out.extend(freq.iter().map(|v| v * scale));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_repeatable() {
        let cfg = OfdmConfig::default();
        let a = generate_ofdm_baseband(&cfg, 7, 1000).unwrap();
        let b = generate_ofdm_baseband(&cfg, 7, 1000).unwrap();
        assert_eq!(a, b);
        let c = generate_ofdm_baseband(&cfg, 8, 1000).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn length_is_whole_symbols() {
        let cfg = OfdmConfig::default();
        for n in [80, 81, 159, 160, 1000] {
            let s = generate_ofdm_baseband(&cfg, 1, n).unwrap();
            assert_eq!(s.len() % 80, 0);
            assert!(s.len() >= n && s.len() < n + 80);
        }
    }

    #[test]
    fn rejects_less_than_one_symbol() {
        let err = generate_ofdm_baseband(&OfdmConfig::default(), 1, 79).unwrap_err();
        assert!(matches!(err, CoreError::Argument(_)));
    }

    #[test]
    fn mean_power_is_unity() {
        let s = generate_ofdm_baseband(&OfdmConfig::default(), 3, 200_000).unwrap();
        let p = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / s.len() as f64;
        assert!((p - 1.0).abs() < 0.02, "power {p}");
    }

    #[test]
    fn cyclic_prefix_repeats_symbol_tail() {
        let cfg = OfdmConfig::default();
        let s = generate_ofdm_baseband(&cfg, 5, 80).unwrap();
        assert_eq!(&s[..16], &s[64..80]);
    }

    #[test]
    fn null_subcarriers_stay_empty() {
        let cfg = OfdmConfig::default();
        let s = generate_ofdm_baseband(&cfg, 5, 80).unwrap();
        let mut body: Vec<Complex64> = s[16..80].to_vec();
        FftPlanner::<f64>::new()
            .plan_fft_forward(64)
            .process(&mut body);
        let active = cfg.active_bins();
        for (k, v) in body.iter().enumerate() {
            if active.contains(&k) {
                assert!(v.norm() > 1e-6);
            } else {
                assert!(v.norm() < 1e-9, "bin {k} = {v}");
            }
        }
    }
}
