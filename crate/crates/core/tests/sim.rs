use std::fs;

use num_complex::Complex64;
use rffp_core::sim::{
    apply_channel, capture_dataset, channel_noise_free, generate_ofdm_baseband, preset,
    read_recording, ChannelProfile, Manifest, OfdmConfig, SimConfig,
};
use rffp_core::CoreError;

fn small(name: &str, samples: usize) -> SimConfig {
    let mut cfg = preset(name).unwrap();
    cfg.samples_per_capture = samples;
    cfg
}

#[test]
fn measured_snr_matches_configuration() {
    let x = generate_ofdm_baseband(&OfdmConfig::default(), 1, 200_000).unwrap();
    let taps = vec![
        Complex64::new(0.8, 0.1),
        Complex64::new(0.3, -0.4),
        Complex64::new(0.05, 0.2),
    ];
    for snr in [5.0, 15.0, 30.0] {
        let mut profile = ChannelProfile {
            taps: taps.clone(),
            phase_noise_std: 0.01,
            snr_db: snr,
            path_loss: 0.25,
            run_jitter: 0.2,
            ..ChannelProfile::identity(8)
        };
        rffp_core::sim::normalize_energy(&mut profile.taps);
        let clean = channel_noise_free(&x, &profile, 1, 77);
        let noisy = apply_channel(&x, &profile, 1, 77);
        let ps: f64 = clean.iter().map(|z| z.norm_sqr()).sum();
        let pn: f64 = clean
            .iter()
            .zip(&noisy)
            .map(|(a, b)| (b - a).norm_sqr())
            .sum();
        let measured = 10.0 * (ps / pn).log10();
        assert!(
            (measured - snr).abs() < 0.5,
            "configured {snr} measured {measured}"
        );
    }
}

#[test]
fn desk_scale_campaign_writes_24_recordings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("easy", 1024);
    let manifest = capture_dataset(&cfg, 42, dir.path()).unwrap();
    assert_eq!(manifest.recordings.len(), 24);
    let loaded = Manifest::load(dir.path()).unwrap();
    assert_eq!(loaded.recordings, manifest.recordings);
    for e in &loaded.recordings {
        let rec = loaded.read(e).unwrap();
        assert_eq!(rec.samples.len(), 1024);
        assert_eq!(
            (rec.meta.device_id, rec.meta.distance_ft, rec.meta.run),
            (e.device_id, e.distance_ft, e.run)
        );
    }
}

#[test]
fn metadata_round_trips_through_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("hard", 800);
    let devices = cfg.device_profiles(9);
    let channels = cfg.channel_profiles(9);
    let rec = rffp_core::sim::capture(&cfg, &devices[1], &channels[2], 1, 9).unwrap();
    rffp_core::sim::write_recording(dir.path(), &rec).unwrap();
    let back = read_recording(dir.path().join(format!("{}.json", rec.stem()))).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn same_master_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small("tiny", 2048);
    capture_dataset(&cfg, 5, a.path()).unwrap();
    capture_dataset(&cfg, 5, b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2 * 2 * 2 * 2 + 1);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn runs_differ_and_devices_differ() {
    let cfg = small("tiny", 1024);
    let devices = cfg.device_profiles(1);
    let channels = cfg.channel_profiles(1);
    let r0 = rffp_core::sim::capture(&cfg, &devices[0], &channels[0], 0, 1).unwrap();
    let r1 = rffp_core::sim::capture(&cfg, &devices[0], &channels[0], 1, 1).unwrap();
    assert_ne!(r0.samples, r1.samples);
    assert_ne!(
        channels[0].run_taps(0, r0.meta.channel_seed),
        channels[0].run_taps(1, r0.meta.channel_seed)
    );
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let err = capture_dataset(&small("tiny", 1024), 1, &blocker.join("sub")).unwrap_err();
    assert!(matches!(err, CoreError::Io { .. }), "{err}");
}
