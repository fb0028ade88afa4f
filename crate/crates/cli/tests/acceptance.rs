//! Acceptance suite: one line per criterion, nonzero exit if any asserted
//! criterion fails. `RFFP_ACCEPTANCE=4,5` runs a subset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rffp_core::classifiers::{
    ensemble_predict, Architecture, Baseline, Classifier, CombineMode, DeviceClassifier,
    DistanceClassifier, EnsembleModel, ResNet,
};
use rffp_core::dataset::{
    build_dataset, normalize_window, DatasetSplits, LabeledDataset, Source, SplitSpec, Task,
    Window, WindowOptions,
};
use rffp_core::report::{compare_architectures, evaluate, evaluate_ensemble, Arm};
use rffp_core::sim::{capture_dataset, preset, Manifest};
use rffp_core::training::{
    compare_curriculum, finetune_ensemble, fit, CurriculumSpec, FinetuneOptions, OptimizerConfig,
    StoppingPolicy,
};
use rffp_nn::gradcheck::{gradient_check, gradient_check_network, probe_for};
use rffp_nn::{LayerSpec, Network, Tensor};

const SEED: u64 = 2024;

enum Verdict {
    Pass,
    Fail,
    Report,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn judged(pass: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

/// Generated campaigns, created on first use and shared between criteria.
struct Data {
    root: tempfile::TempDir,
    cache: BTreeMap<&'static str, Manifest>,
}

impl Data {
    fn manifest(&mut self, name: &'static str) -> Result<Manifest> {
        if let Some(m) = self.cache.get(name) {
            return Ok(m.clone());
        }
        let cfg = preset(name)?;
        let m = capture_dataset(&cfg, SEED, &self.root.path().join(name))?;
        self.cache.insert(name, m.clone());
        Ok(m)
    }
}

fn opts(window: usize, max: Option<usize>) -> WindowOptions {
    WindowOptions {
        window,
        max_windows_per_recording: max,
        normalize: true,
    }
}

fn splits(m: &Manifest, task: Task, o: &WindowOptions) -> Result<DatasetSplits> {
    Ok(build_dataset(m, task, &SplitSpec::pooled(SEED), o)?)
}

fn policy(max_epochs: usize, target: f64) -> StoppingPolicy {
    StoppingPolicy {
        max_epochs,
        target_val_accuracy: Some(target),
        ..Default::default()
    }
}

fn train(
    arch: &dyn Architecture,
    task: Task,
    m: &Manifest,
    s: &DatasetSplits,
    p: &StoppingPolicy,
    seed: u64,
) -> Result<Classifier> {
    let mut c = Classifier::new(arch, task, m, s.train.window, seed)?;
    let r = fit(
        &mut c.net,
        &s.train,
        &s.val,
        p,
        &OptimizerConfig::default(),
        seed + 1,
    )?;
    eprintln!(
        "    {} {task}: {} epochs, best val acc {:.4} ({:.0} s)",
        c.architecture,
        r.epochs.len(),
        r.best_val_acc,
        r.wall_time_s
    );
    Ok(c)
}

// 1. Gradient fidelity of every layer kind.
fn gradients(_: &mut Data) -> Result<Outcome> {
    let cases: Vec<(&str, LayerSpec, Vec<usize>, f64)> = vec![
        (
            "conv1d",
            LayerSpec::Conv1d {
                filters: 3,
                kernel: 5,
            },
            vec![2, 2, 9],
            1e-5,
        ),
        (
            "residual_block",
            LayerSpec::ResidualBlock {
                filters: 3,
                kernel: 5,
                batch_norm: true,
            },
            vec![4, 2, 8],
            1e-5,
        ),
        ("batch_norm", LayerSpec::BatchNorm, vec![4, 3, 5], 1e-4),
        ("dense", LayerSpec::Dense { units: 5 }, vec![3, 7], 1e-5),
        (
            "dropout_off",
            LayerSpec::Dropout { rate: 0.0 },
            vec![2, 6],
            1e-5,
        ),
        (
            "max_pool1d",
            LayerSpec::MaxPool1d { width: 2 },
            vec![2, 3, 8],
            1e-5,
        ),
        ("relu", LayerSpec::Relu, vec![2, 6], 1e-5),
        ("flatten", LayerSpec::Flatten, vec![2, 3, 4], 1e-5),
    ];
    let mut worst = Vec::new();
    let mut pass = true;
    for (name, spec, shape, tol) in cases {
        let probe = probe_for(&spec, &shape, 17);
        let r = gradient_check(&spec, &probe, 1e-3, 23)?;
        pass &= r.max_rel_error < tol;
        worst.push(format!("{name}={:.1e}", r.max_rel_error));
    }
    let specs = vec![
        LayerSpec::Conv1d {
            filters: 4,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::ResidualBlock {
            filters: 4,
            kernel: 3,
            batch_norm: true,
        },
        LayerSpec::MaxPool1d { width: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 8 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.0 },
        LayerSpec::Dense { units: 3 },
    ];
    let mut net = Network::<f64>::new(&[2, 16], &specs, 5)?;
    let probe = probe_for(&LayerSpec::Flatten, &[4, 2, 16], 99);
    let r = gradient_check_network(&mut net, &probe, &[0, 2, 1, 2], 1e-5, 3)?;
    pass &= r.max_rel_error < 1e-4;
    worst.push(format!("network={:.1e}", r.max_rel_error));
    Ok(judged(pass, worst.join(" ")))
}

// 2. Normalization and split invariants.
fn dataset_invariants(data: &mut Data) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let source = Source {
        device_id: 0,
        distance_ft: 2,
        run: 0,
        window_index: 0,
    };
    let (mut rms_err, mut scale_err, mut idem_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100_000 {
        let w = 1 + rng.random_range(0..256);
        let amp = 10f64.powf(rng.random_range(-3.0..3.0));
        let iq = (0..w)
            .map(|_| {
                num_complex::Complex32::new(
                    (amp * rng.random_range(-1.0..1.0)) as f32,
                    (amp * rng.random_range(-1.0..1.0)) as f32,
                )
            })
            .collect::<Vec<_>>();
        let win = Window::new(iq.clone(), source);
        let n = match normalize_window(&win) {
            Ok(n) => n,
            Err(_) => continue,
        };
        rms_err = rms_err.max((n.rms() - 1.0).abs());
        let alpha = 10f64.powf(rng.random_range(-2.0..2.0)) as f32;
        let scaled = Window::new(iq.iter().map(|z| z * alpha).collect(), source);
        let ns = normalize_window(&scaled)?;
        let nn = normalize_window(&n)?;
        for ((a, b), c) in n.iq.iter().zip(&ns.iq).zip(&nn.iq) {
            scale_err = scale_err.max((a - b).norm() as f64);
            idem_err = idem_err.max((a - c).norm() as f64);
        }
    }
    let m = data.manifest("tiny")?;
    let s = splits(&m, Task::Device, &opts(64, None))?;
    let mut seen = std::collections::HashSet::new();
    let mut leaks = 0;
    let mut overlap = 0;
    let n_samples = m.recordings.first().map(|r| r.n_samples).unwrap_or(0);
    for part in [&s.train, &s.val, &s.test] {
        for src in &part.sources {
            if !seen.insert((src.device_id, src.distance_ft, src.run, src.window_index)) {
                leaks += 1;
            }
            if (src.window_index as usize + 1) * 64 > n_samples {
                overlap += 1;
            }
        }
    }
    let pass = rms_err < 1e-6 && scale_err < 1e-6 && idem_err < 1e-6 && leaks == 0 && overlap == 0;
    Ok(judged(
        pass,
        format!(
            "1e5 windows: rms err {rms_err:.1e}, scale err {scale_err:.1e}, idempotence err {idem_err:.1e}; \
             {} split windows, {leaks} leaked, {overlap} out of range",
            seen.len()
        ),
    ))
}

/// Small random topology for the routing check; routing does not depend on it.
struct Probe;

impl Architecture for Probe {
    fn name(&self) -> &str {
        "probe"
    }

    fn min_window(&self) -> usize {
        2
    }

    fn layers(&self, n_classes: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv1d {
                filters: 8,
                kernel: 3,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool1d { width: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: n_classes },
        ]
    }
}

// 3. Masked concatenation equals direct routing.
fn routing(_: &mut Data) -> Result<Outcome> {
    const W: usize = 16;
    const N: usize = 10_000;
    let mut details = Vec::new();
    let mut pass = true;
    for (k, n_dist) in [1usize, 3, 11].into_iter().enumerate() {
        let distances: Vec<u32> = (0..n_dist as u32).map(|i| 2 + 6 * i).collect();
        let m = Manifest {
            format_version: Manifest::VERSION,
            preset: "random".into(),
            master_seed: 0,
            sample_rate: 5e6,
            devices: (0..4).collect(),
            distances_ft: distances.clone(),
            runs: vec![0, 1],
            recordings: vec![],
            root: PathBuf::new(),
        };
        let seed = 100 * k as u64;
        let distance =
            DistanceClassifier::new(Classifier::new(&Probe, Task::Distance, &m, W, seed)?)?;
        let devices = distances
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                DeviceClassifier::new(Classifier::new(
                    &Probe,
                    Task::DeviceAtDistance(d),
                    &m,
                    W,
                    seed + 1 + j as u64,
                )?)
                .map_err(Into::into)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut e = EnsembleModel::new(distance, devices)?;
        e.combine = CombineMode::Hard;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::new(
            &[N, 2, W],
            (0..N * 2 * W)
                .map(|_| rng.random_range(-2.0f32..2.0))
                .collect(),
        )?;

        let outputs = ensemble_predict(&e, &x)?;
        // Independent oracle: every model on every input, then pick.
        let routes: Vec<usize> = e
            .distance
            .model
            .predict_batch(&x)?
            .iter()
            .map(|p| p.class)
            .collect();
        let per_model: Vec<Vec<usize>> = e
            .devices
            .iter()
            .map(|d| Ok(d.model.predict_batch(&x)?.iter().map(|p| p.class).collect()))
            .collect::<Result<_>>()?;
        let n_dev = e.n_devices();
        let mut agree = 0;
        let mut one_hot = 0;
        let mut hit_segments = std::collections::BTreeSet::new();
        for (i, o) in outputs.iter().enumerate() {
            let d = routes[i];
            if o.distance_index == d && o.device == per_model[d][i] {
                agree += 1;
            }
            let nz: Vec<usize> = (0..o.masked.len())
                .filter(|&j| o.masked[j] != 0.0)
                .collect();
            if o.masked.len() == n_dist * n_dev
                && nz.len() == 1
                && nz[0] / n_dev == d
                && o.masked[nz[0]] == 1.0
            {
                one_hot += 1;
            }
            hit_segments.insert(d);
        }
        pass &= agree == N && one_hot == N;
        details.push(format!(
            "|D|={n_dist}: {agree}/{N} equal, {one_hot}/{N} one-hot, {} segments hit",
            hit_segments.len()
        ));
    }
    Ok(judged(pass, details.join("; ")))
}

struct Desk {
    resnet: Option<(Classifier, DatasetSplits)>,
}

// 4. Device classification on the easy preset.
fn device_accuracy(data: &mut Data, desk: &mut Desk) -> Result<Outcome> {
    let start = Instant::now();
    let m = data.manifest("easy")?;
    let task = Task::DeviceAtDistance(2);
    let s = splits(&m, task, &opts(256, None))?;
    let c = train(&ResNet, task, &m, &s, &policy(2, 0.97), 11)?;
    let acc = evaluate(&c, &s.test)?.accuracy;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{} train / {} test windows, test accuracy {acc:.4} (>= 0.95), {secs:.0} s (<= 900)",
        s.train.len(),
        s.test.len()
    );
    desk.resnet = Some((c, s));
    Ok(judged(acc >= 0.95 && secs <= 900.0, detail))
}

// 5. Distance classification on normalized windows.
fn distance_accuracy(data: &mut Data) -> Result<Outcome> {
    let start = Instant::now();
    let m = data.manifest("easy")?;
    let s = splits(&m, Task::Distance, &opts(256, Some(2100)))?;
    let mean_power: f64 = s
        .test
        .data()
        .iter()
        .map(|v| (*v as f64).powi(2))
        .sum::<f64>()
        / (s.test.len() * 256) as f64;
    let c = train(&ResNet, Task::Distance, &m, &s, &policy(3, 0.975), 12)?;
    let acc = evaluate(&c, &s.test)?.accuracy;
    let secs = start.elapsed().as_secs_f64();
    Ok(judged(
        acc >= 0.90 && secs <= 900.0,
        format!(
            "{} train / {} test windows (mean window power {mean_power:.6}), test accuracy {acc:.4} (>= 0.90), {secs:.0} s (<= 900)",
            s.train.len(),
            s.test.len()
        ),
    ))
}

// 6. ResNet against the baseline on the split of criterion 4.
fn architecture_order(data: &mut Data, desk: &mut Desk) -> Result<Outcome> {
    let m = data.manifest("easy")?;
    let task = Task::DeviceAtDistance(2);
    let Some((resnet, s256)) = desk.resnet.as_ref() else {
        anyhow::bail!("needs the model of criterion 4");
    };
    // Same captures and the same number of windows as the W = 256 split.
    let per_recording =
        (s256.train.len() + s256.val.len() + s256.test.len()) / (m.devices.len() * m.runs.len());
    let s128 = splits(&m, task, &opts(128, Some(per_recording)))?;
    let p = policy(2, 0.97);
    let base256 = train(&Baseline, task, &m, s256, &p, 13)?;
    let base128 = train(&Baseline, task, &m, &s128, &p, 14)?;
    let arms = [
        Arm {
            name: "resnet".into(),
            models: vec![resnet],
            tests: vec![&s256.test],
        },
        Arm {
            name: "baseline_w256".into(),
            models: vec![&base256],
            tests: vec![&s256.test],
        },
        Arm {
            name: "baseline_w128".into(),
            models: vec![&base128],
            tests: vec![&s128.test],
        },
    ];
    let table = compare_architectures(&[2], &arms)?;
    let pass = ["baseline_w256", "baseline_w128"].iter().all(|b| {
        table
            .dominates("resnet", b)
            .is_some_and(|v| v.iter().all(|&x| x))
    });
    let row: Vec<String> = table
        .series
        .iter()
        .map(|s| format!("{}={:.4}", s.name, s.accuracy[0]))
        .collect();
    Ok(judged(pass, format!("2 ft: {}", row.join(" "))))
}

// 7. Fine-tuning a naively assembled ensemble on the hard preset.
fn finetune_gain(data: &mut Data) -> Result<Outcome> {
    let start = Instant::now();
    let m = data.manifest("hard")?;
    let s = splits(&m, Task::Device, &opts(256, Some(800)))?;
    let run0 = |d: &LabeledDataset| d.filter(|src| src.run == 0);
    let p = policy(6, 0.99);

    let part = |task: Task, seed: u64| -> Result<Classifier> {
        let parts = DatasetSplits {
            train: run0(&s.train).relabel(task, &m)?,
            val: run0(&s.val).relabel(task, &m)?,
            test: run0(&s.test).relabel(task, &m)?,
        };
        train(&ResNet, task, &m, &parts, &p, seed)
    };
    let distance = DistanceClassifier::new(part(Task::Distance, 21)?)?;
    let devices = m
        .distances_ft
        .iter()
        .map(|&d| {
            DeviceClassifier::new(part(Task::DeviceAtDistance(d), 22 + d as u64)?)
                .map_err(Into::into)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut e = EnsembleModel::new(distance, devices)?;

    let naive = evaluate_ensemble(&e, &s.test)?.device.accuracy;
    let run1_test = s.test.filter(|src| src.run == 1);
    let naive_run1 = evaluate_ensemble(&e, &run1_test)?.device.accuracy;
    let ft = finetune_ensemble(
        &mut e,
        &s.train,
        &s.val,
        &policy(6, 0.99),
        &OptimizerConfig::default(),
        31,
        &FinetuneOptions::default(),
    )?;
    eprintln!(
        "    finetune: {} epochs, best val acc {:.4}",
        ft.report.epochs.len(),
        ft.report.best_val_acc
    );
    let tuned = evaluate_ensemble(&e, &s.test)?.device.accuracy;
    let secs = start.elapsed().as_secs_f64();
    let gain = 100.0 * (tuned - naive);
    Ok(judged(
        gain >= 5.0 && secs <= 1800.0,
        format!(
            "naive {naive:.4} (run 1 only {naive_run1:.4}) -> fine-tuned {tuned:.4} on mixed-run test, \
             gain {gain:.1} points (>= 5), {secs:.0} s (<= 1800)"
        ),
    ))
}

// 8. Curriculum against direct training, reported only.
fn curriculum_report(data: &mut Data) -> Result<Outcome> {
    let m = data.manifest("hard")?;
    let task = Task::DeviceAtDistance(2);
    let s = splits(&m, task, &opts(256, Some(1000)))?;
    let net = Classifier::new(&ResNet, task, &m, 256, 41)?.net;
    let spec = CurriculumSpec {
        stage1_windows: s.train.len() / 8,
        stage2_windows: s.train.len(),
        stage1_epochs: 2,
        stage2_epochs: 2,
        stage2_lr: None,
        seed: 42,
    };
    let p = StoppingPolicy {
        max_epochs: 4,
        ..Default::default()
    };
    let cmp = compare_curriculum(
        &net,
        &s.train,
        &s.val,
        &s.test,
        &spec,
        &p,
        &OptimizerConfig::default(),
        0.8,
    )?;
    let csv = cmp.to_csv();
    for line in csv.lines() {
        eprintln!("    {line}");
    }
    let warm = cmp.curriculum.warm_start_val_acc;
    let first = cmp
        .curriculum
        .stage2
        .epochs
        .first()
        .map(|e| e.val_acc)
        .unwrap_or(0.0);
    Ok(Outcome {
        verdict: Verdict::Report,
        detail: format!(
            "curriculum test {:.4} (epochs to 0.8: {}), direct test {:.4} (epochs to 0.8: {}); \
             stage 2 starts at val {first:.4} after stage 1 ended at {warm:.4}",
            cmp.curriculum_test_acc,
            cmp.curriculum_epochs_to()
                .map_or("-".into(), |e| e.to_string()),
            cmp.direct_test_acc,
            cmp.direct
                .epochs_to(0.8)
                .map_or("-".into(), |e| e.to_string()),
        ),
    })
}

fn csv_files(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.insert(
                    path.strip_prefix(root)?.to_path_buf(),
                    std::fs::read(&path)?,
                );
            }
        }
    }
    Ok(out)
}

// 9. Smoke pipeline twice through the binary, byte-compared.
fn reproducibility(data: &mut Data) -> Result<Outcome> {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/smoke.sh");
    let mut runs = Vec::new();
    let mut slowest = 0.0f64;
    for k in 0..2 {
        let out = data.root.path().join(format!("smoke{k}"));
        let start = Instant::now();
        let status = Command::new("bash")
            .arg(&script)
            .arg(&out)
            .arg("7")
            .env("RFFP", env!("CARGO_BIN_EXE_rffp"))
            .stdout(std::process::Stdio::null())
            .status()
            .context("running smoke script")?;
        ensure!(status.success(), "smoke script failed: {status}");
        slowest = slowest.max(start.elapsed().as_secs_f64());
        runs.push(csv_files(&out)?);
    }
    let differing: Vec<String> = runs[0]
        .iter()
        .filter(|(p, bytes)| runs[1].get(*p) != Some(bytes))
        .map(|(p, _)| p.display().to_string())
        .collect();
    let pass = !runs[0].is_empty()
        && runs[0].len() == runs[1].len()
        && differing.is_empty()
        && slowest <= 600.0;
    Ok(judged(
        pass,
        format!(
            "{} CSV files, {} differ{}; slowest run {slowest:.0} s (<= 600)",
            runs[0].len(),
            differing.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" ({})", differing.join(", "))
            }
        ),
    ))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("rffp_core=info"))
        .init();
    let selected: Option<Vec<u32>> = std::env::var("RFFP_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |n: u32| selected.as_ref().is_none_or(|s| s.contains(&n));
    let mut data = Data {
        root: tempfile::tempdir().expect("temp dir"),
        cache: BTreeMap::new(),
    };
    let mut desk = Desk { resnet: None };
    let mut failed = 0;
    let names = [
        "gradient fidelity",
        "dataset invariants",
        "ensemble routing equivalence",
        "desk-scale device classification",
        "desk-scale distance classification",
        "architecture ordering",
        "fine-tuning direction",
        "curriculum report",
        "reproducibility",
    ];
    for (i, name) in names.iter().enumerate() {
        let n = i as u32 + 1;
        if !want(n) || (n == 6 && !want(4)) {
            continue;
        }
        let start = Instant::now();
        let result = match n {
            1 => gradients(&mut data),
            2 => dataset_invariants(&mut data),
            3 => routing(&mut data),
            4 => device_accuracy(&mut data, &mut desk),
            5 => distance_accuracy(&mut data),
            6 => architecture_order(&mut data, &mut desk),
            7 => finetune_gain(&mut data),
            8 => curriculum_report(&mut data),
            _ => reproducibility(&mut data),
        };
        let secs = start.elapsed().as_secs_f64();
        // Criteria that time themselves report their own budget.
        let result = match result {
            Ok(o) if n <= 3 && secs >= 60.0 => Ok(Outcome {
                verdict: Verdict::Fail,
                detail: format!("{} (over the 60 s budget)", o.detail),
            }),
            r => r,
        };
        let (tag, detail) = match result {
            Ok(Outcome {
                verdict: Verdict::Pass,
                detail,
            }) => ("PASS", detail),
            Ok(Outcome {
                verdict: Verdict::Report,
                detail,
            }) => ("REPORT", detail),
            Ok(Outcome {
                verdict: Verdict::Fail,
                detail,
            }) => {
                failed += 1;
                ("FAIL", detail)
            }
            Err(e) => {
                failed += 1;
                ("FAIL", format!("error: {e:#}"))
            }
        };
        println!("criterion {n} [{tag}] {name}: {detail} [{secs:.1} s]");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
