use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Transmitter hardware impairments that make one radio distinguishable from another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: u32,
    /// Q-branch gain relative to I, in dB.
    pub iq_gain_imbalance_db: f64,
    /// Q-branch phase error, in degrees.
    pub iq_phase_skew_deg: f64,
    /// Additive DC offset relative to full scale.
    pub dc_offset: Complex64,
    /// Carrier frequency offset in Hz.
    pub cfo_hz: f64,
    /// Odd-order PA polynomial: entry `i` multiplies `x * |x|^(2i)`.
    pub pa_coeffs: Vec<f64>,
}

impl DeviceProfile {
    /// A transmitter with no impairments and a linear amplifier.
    pub fn ideal(device_id: u32) -> Self {
        DeviceProfile {
            device_id,
            iq_gain_imbalance_db: 0.0,
            iq_phase_skew_deg: 0.0,
            dc_offset: Complex64::new(0.0, 0.0),
            cfo_hz: 0.0,
            pa_coeffs: vec![1.0],
        }
    }

    /// True when the two profiles differ in at least one impairment.
    pub fn impairments_differ(&self, other: &DeviceProfile) -> bool {
        self.iq_gain_imbalance_db != other.iq_gain_imbalance_db
            || self.iq_phase_skew_deg != other.iq_phase_skew_deg
            || self.dc_offset != other.dc_offset
            || self.cfo_hz != other.cfo_hz
            || self.pa_coeffs != other.pa_coeffs
    }
}

/// Evaluates the PA polynomial on one sample.
pub fn pa_response(coeffs: &[f64], x: Complex64) -> Complex64 {
    let mag2 = x.norm_sqr();
    let mut gain = 0.0;
    let mut pow = 1.0;
    for &a in coeffs {
        gain += a * pow;
        pow *= mag2;
    }
    x * gain
}

/// Applies IQ imbalance, DC offset, PA distortion and CFO rotation, in that order.
///
/// IQ imbalance keeps I and rewrites Q as `g * (cos(phi) * Q - sin(phi) * I)`.
/// The CFO phase starts at zero on the first sample.
pub fn apply_device_impairments(
    signal: &[Complex64],
    profile: &DeviceProfile,
    sample_rate: f64,
) -> Vec<Complex64> {
    let g = 10f64.powf(profile.iq_gain_imbalance_db / 20.0);
    let (sin_phi, cos_phi) = profile.iq_phase_skew_deg.to_radians().sin_cos();
    let step = 2.0 * PI * profile.cfo_hz / sample_rate;
    signal
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let q = g * (cos_phi * x.im - sin_phi * x.re);
            let y = Complex64::new(x.re, q) + profile.dc_offset;
            let y = pa_response(&profile.pa_coeffs, y);
            if step == 0.0 {
                y
            } else {
                y * Complex64::from_polar(1.0, step * n as f64)
            }
        })
        .collect()
}
