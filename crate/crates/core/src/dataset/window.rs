use num_complex::Complex32;
use rffp_nn::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::sim::IQRecording;

/// Where a window came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Source {
    pub device_id: u32,
    pub distance_ft: u32,
    pub run: u32,
    pub window_index: u32,
}

/// One non-overlapping slice of a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub iq: Vec<Complex32>,
    pub normalized: bool,
    pub source: Source,
}

impl Window {
    pub fn new(iq: Vec<Complex32>, source: Source) -> Self {
        Window {
            iq,
            normalized: false,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.iq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iq.is_empty()
    }

    /// Root-mean-square magnitude, accumulated in f64.
    pub fn rms(&self) -> f64 {
        rms(&self.iq)
    }
}

pub(crate) fn rms(iq: &[Complex32]) -> f64 {
    if iq.is_empty() {
        return 0.0;
    }
    let power: f64 = iq
        .iter()
        .map(|z| (z.re as f64).powi(2) + (z.im as f64).powi(2))
        .sum();
    (power / iq.len() as f64).sqrt()
}

/// Tiles a recording into `floor(len / w)` consecutive windows; the tail is dropped.
pub fn partition_windows(recording: &IQRecording, w: usize) -> Result<Vec<Window>> {
    if w == 0 {
        return Err(CoreError::Argument(
            "window length must be at least 1".into(),
        ));
    }
    let m = &recording.meta;
    Ok(recording
        .samples
        .chunks_exact(w)
        .enumerate()
        .map(|(i, chunk)| {
            Window::new(
                chunk.to_vec(),
                Source {
                    device_id: m.device_id,
                    distance_ft: m.distance_ft,
                    run: m.run,
                    window_index: i as u32,
                },
            )
        })
        .collect())
}

/// Scales a window to unit RMS magnitude. Phases are untouched.
pub fn normalize_window(w: &Window) -> Result<Window> {
    let iq = normalize_iq(&w.iq).ok_or_else(|| {
        CoreError::Data(format!("cannot normalize all-zero window {:?}", w.source))
    })?;
    Ok(Window {
        iq,
        normalized: true,
        source: w.source,
    })
}

/// Unit-RMS copy of `iq`, or `None` when it has no energy.
pub(crate) fn normalize_iq(iq: &[Complex32]) -> Option<Vec<Complex32>> {
    let r = rms(iq);
    if !(r > 0.0) || !r.is_finite() {
        return None;
    }
    Some(
        iq.iter()
            .map(|z| Complex32::new((z.re as f64 / r) as f32, (z.im as f64 / r) as f32))
            .collect(),
    )
}

/// Stacks a window into a `[2, W]` tensor: row 0 holds I, row 1 holds Q.
///
/// Panics on an empty window.
pub fn to_tensor(w: &Window) -> Tensor<f32> {
    let mut data = Vec::with_capacity(2 * w.len());
    write_channels(&w.iq, &mut data);
    Tensor::new(&[2, w.len()], data).expect("window must not be empty")
}

pub(crate) fn write_channels(iq: &[Complex32], out: &mut Vec<f32>) {
    out.extend(iq.iter().map(|z| z.re));
    out.extend(iq.iter().map(|z| z.im));
}

/// Inverse of [`to_tensor`].
pub fn from_tensor(t: &Tensor<f32>, source: Source, normalized: bool) -> Result<Window> {
    let shape = t.shape();
    if shape.len() != 2 || shape[0] != 2 {
        return Err(CoreError::Argument(format!(
            "expected a [2, W] tensor, got {shape:?}"
        )));
    }
    let w = shape[1];
    let d = t.data();
    Ok(Window {
        iq: (0..w).map(|i| Complex32::new(d[i], d[w + i])).collect(),
        normalized,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> Source {
        Source {
            device_id: 0,
            distance_ft: 2,
            run: 0,
            window_index: 0,
        }
    }

    #[test]
    fn constant_window_normalizes_to_one() {
        let w = Window::new(vec![Complex32::new(2.0, 0.0); 16], src());
        let n = normalize_window(&w).unwrap();
        assert!(n.iq.iter().all(|z| *z == Complex32::new(1.0, 0.0)));
        assert!(n.normalized);
    }

    #[test]
    fn single_spike_normalization() {
        let mut iq = vec![Complex32::new(0.0, 0.0); 256];
        iq[0] = Complex32::new(3.0, 4.0);
        let w = Window::new(iq, src());
        assert!((w.rms() - 5.0 / 16.0).abs() < 1e-12);
        let n = normalize_window(&w).unwrap();
        let want = Complex32::new(3.0 * 16.0 / 5.0, 4.0 * 16.0 / 5.0);
        assert!((n.iq[0] - want).norm() < 1e-5);
        assert!(n.iq[1..].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_window_is_rejected() {
        let w = Window::new(vec![Complex32::new(0.0, 0.0); 8], src());
        assert!(matches!(normalize_window(&w), Err(CoreError::Data(_))));
    }

    #[test]
    fn tensor_layout_is_i_then_q() {
        let w = Window::new(
            vec![Complex32::new(1.0, 2.0), Complex32::new(3.0, -4.0)],
            src(),
        );
        let t = to_tensor(&w);
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[1.0, 3.0, 2.0, -4.0]);
        assert_eq!(from_tensor(&t, src(), false).unwrap(), w);
    }

    #[test]
    fn real_window_has_zero_q_row() {
        let w = Window::new(
            (0..5).map(|i| Complex32::new(i as f32, 0.0)).collect(),
            src(),
        );
        let t = to_tensor(&w);
        assert!(t.data()[5..].iter().all(|&v| v == 0.0));
    }
}
