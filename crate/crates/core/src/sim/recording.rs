use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::channel::ChannelProfile;
use super::impair::DeviceProfile;
use super::ofdm::OfdmConfig;
use crate::error::{CoreError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything known about one capture apart from its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub device_id: u32,
    pub distance_ft: u32,
    pub run: u32,
    pub sample_rate: f64,
    pub n_samples: usize,
    /// Seed of the payload and per-capture draws.
    pub seed: u64,
    /// Seed of the placement's channel; the run index selects its perturbation.
    pub channel_seed: u64,
    pub ofdm: OfdmConfig,
    pub device: DeviceProfile,
    pub channel: ChannelProfile,
}

/// A complex baseband capture of one device at one distance during one run.
#[derive(Debug, Clone, PartialEq)]
pub struct IQRecording {
    pub meta: RecordingMeta,
    pub samples: Vec<Complex32>,
}

impl IQRecording {
    /// File stem shared by the sample file and its sidecar.
    pub fn stem(&self) -> String {
        recording_stem(self.meta.device_id, self.meta.distance_ft, self.meta.run)
    }
}

pub fn recording_stem(device_id: u32, distance_ft: u32, run: u32) -> String {
    format!("dev{device_id:02}_d{distance_ft:03}ft_run{run}")
}

/// One manifest line: where a recording lives and what it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub device_id: u32,
    pub distance_ft: u32,
    pub run: u32,
    pub n_samples: usize,
    /// Sample file, relative to the manifest directory.
    pub iq_file: String,
    pub sidecar_file: String,
}

/// Index of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub preset: String,
    pub master_seed: u64,
    pub sample_rate: f64,
    pub devices: Vec<u32>,
    pub distances_ft: Vec<u32>,
    pub runs: Vec<u32>,
    pub recordings: Vec<ManifestEntry>,
    /// Directory the manifest was loaded from; relative paths resolve against it.
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    pub const VERSION: u32 = 1;

    /// Loads a manifest from a file or from a directory containing `manifest.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(MANIFEST_FILE);
        }
        let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
        let mut m: Manifest =
            serde_json::from_str(&text).map_err(|e| CoreError::format("manifest", e))?;
        if m.format_version != Self::VERSION {
            return Err(CoreError::format(
                "manifest",
                format!("version {} (expected {})", m.format_version, Self::VERSION),
            ));
        }
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        write_json_file(&path, self)?;
        Ok(path)
    }

    pub fn sidecar_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.sidecar_file)
    }

    pub fn read(&self, entry: &ManifestEntry) -> Result<IQRecording> {
        read_recording(self.sidecar_path(entry))
    }

    /// Position of `distance_ft` in the distance list.
    pub fn distance_index(&self, distance_ft: u32) -> Option<usize> {
        self.distances_ft.iter().position(|&d| d == distance_ft)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CoreError::format("json", e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CoreError::io(path, e))
}

/// Writes samples as little-endian interleaved f32 pairs, I then Q.
pub fn write_iq(path: impl AsRef<Path>, samples: &[Complex32]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for z in samples {
        w.write_all(&z.re.to_le_bytes())
            .and_then(|_| w.write_all(&z.im.to_le_bytes()))
            .map_err(|e| CoreError::io(path, e))?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

pub fn read_iq(path: impl AsRef<Path>) -> Result<Vec<Complex32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(CoreError::format(
            "IQ file",
            format!(
                "{} is {} bytes, not a whole number of f32 pairs",
                path.display(),
                bytes.len()
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            )
        })
        .collect())
}

/// Writes `<stem>.iq` and `<stem>.json` into `dir`; returns their file names.
pub fn write_recording(dir: impl AsRef<Path>, rec: &IQRecording) -> Result<(String, String)> {
    let dir = dir.as_ref();
    let stem = rec.stem();
    let iq = format!("{stem}.iq");
    let sidecar = format!("{stem}.json");
    write_iq(dir.join(&iq), &rec.samples)?;
    write_json_file(&dir.join(&sidecar), &rec.meta)?;
    Ok((iq, sidecar))
}

/// Reads a recording from its sidecar; the sample file sits next to it.
pub fn read_recording(sidecar: impl AsRef<Path>) -> Result<IQRecording> {
    let sidecar = sidecar.as_ref();
    let text = fs::read_to_string(sidecar).map_err(|e| CoreError::io(sidecar, e))?;
    let meta: RecordingMeta =
        serde_json::from_str(&text).map_err(|e| CoreError::format("sidecar", e))?;
    let samples = read_iq(sidecar.with_extension("iq"))?;
    if samples.len() != meta.n_samples {
        return Err(CoreError::format(
            "IQ file",
            format!(
                "{} holds {} samples, sidecar says {}",
                sidecar.display(),
                samples.len(),
                meta.n_samples
            ),
        ));
    }
    Ok(IQRecording { meta, samples })
}
