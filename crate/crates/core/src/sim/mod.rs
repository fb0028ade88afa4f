//! Synthetic OFDM transmitter, device impairments and propagation channel.

mod channel;
mod impair;
mod ofdm;
mod preset;
mod recording;

use std::fs;
use std::path::Path;

use num_complex::Complex32;

pub use channel::{
    add_awgn, apply_channel, channel_noise_free, fir, normalize_energy, ChannelProfile,
};
pub use impair::{apply_device_impairments, pa_response, DeviceProfile};
pub use ofdm::{generate_ofdm_baseband, OfdmConfig};
pub use preset::{
    preset, ChannelSettings, ImpairmentBounds, SimConfig, PAPER_DISTANCES_FT, PRESET_NAMES,
};
pub(crate) use recording::write_json_file;
pub use recording::{
    read_iq, read_recording, recording_stem, write_iq, write_recording, IQRecording, Manifest,
    ManifestEntry, RecordingMeta, MANIFEST_FILE,
};

use crate::error::{CoreError, Result};
use crate::seed::{derive, stream};

/// Synthesizes one capture. Pure function of its arguments.
pub fn capture(
    config: &SimConfig,
    device: &DeviceProfile,
    channel: &ChannelProfile,
    run: u32,
    master_seed: u64,
) -> Result<IQRecording> {
    let keys = [device.device_id as u64, channel.distance_ft as u64];
    let seed = derive(
        master_seed,
        &[stream::CAPTURE, keys[0], keys[1], run as u64],
    );
    let channel_seed = derive(master_seed, &[stream::CHANNEL, keys[0], keys[1]]);
    let n = config.samples_per_capture;
    let mut x = generate_ofdm_baseband(&config.ofdm, derive(seed, &[stream::PAYLOAD]), n)?;
    x.truncate(n);
    let x = apply_device_impairments(&x, device, config.sample_rate);
    let y = apply_channel(&x, channel, run, channel_seed);
    Ok(IQRecording {
        meta: RecordingMeta {
            device_id: device.device_id,
            distance_ft: channel.distance_ft,
            run,
            sample_rate: config.sample_rate,
            n_samples: n,
            seed,
            channel_seed,
            ofdm: config.ofdm,
            device: device.clone(),
            channel: channel.clone(),
        },
        samples: y
            .iter()
            .map(|z| Complex32::new(z.re as f32, z.im as f32))
            .collect(),
    })
}

/// Generates every (device, distance, run) capture of `config` into `out_dir`
/// and writes the manifest.
pub fn capture_dataset(config: &SimConfig, master_seed: u64, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    let devices = config.device_profiles(master_seed);
    let channels = config.channel_profiles(master_seed);
    let mut entries = Vec::with_capacity(config.n_recordings());
    for device in &devices {
        for channel in &channels {
            for run in 0..config.runs {
                let rec = capture(config, device, channel, run, master_seed)?;
                let (iq_file, sidecar_file) = write_recording(out_dir, &rec)?;
                log::debug!("wrote {iq_file}");
                entries.push(ManifestEntry {
                    device_id: device.device_id,
                    distance_ft: channel.distance_ft,
                    run,
                    n_samples: rec.samples.len(),
                    iq_file,
                    sidecar_file,
                });
            }
        }
    }
    let manifest = Manifest {
        format_version: Manifest::VERSION,
        preset: config.name.clone(),
        master_seed,
        sample_rate: config.sample_rate,
        devices: devices.iter().map(|d| d.device_id).collect(),
        distances_ft: config.distances_ft.clone(),
        runs: (0..config.runs).collect(),
        recordings: entries,
        root: out_dir.to_path_buf(),
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}
