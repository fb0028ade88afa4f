use rffp_core::classifiers::{Classifier, ResNet};
use rffp_core::dataset::{build_dataset, SplitMode, SplitSpec, Task, WindowOptions};
use rffp_core::sim::{capture_dataset, preset};
use rffp_core::training::{fit, loss_and_accuracy, OptimizerConfig, StoppingPolicy};

const W: usize = 64;

/// Device accuracy at 2 ft on the held-out run after training on the other.
/// Holding out a run keeps the per-placement channel from standing in for
/// the transmitter.
fn held_out_device_accuracy(preset_name: &str, seed: u64) -> f64 {
    let mut cfg = preset(preset_name).unwrap();
    cfg.n_devices = 4;
    cfg.distances_ft = vec![2];
    cfg.runs = 2;
    cfg.samples_per_capture = 600 * W;
    let dir = tempfile::tempdir().unwrap();
    let m = capture_dataset(&cfg, seed, dir.path()).unwrap();
    let task = Task::DeviceAtDistance(2);
    let split = SplitSpec {
        mode: SplitMode::RunHoldout { train_run: 0 },
        fractions: [0.8, 0.1, 0.1],
        seed,
    };
    let opts = WindowOptions {
        window: W,
        ..Default::default()
    };
    let s = build_dataset(&m, task, &split, &opts).unwrap();
    let mut c = Classifier::new(&ResNet, task, &m, W, seed).unwrap();
    let policy = StoppingPolicy {
        max_epochs: 4,
        ..Default::default()
    };
    fit(
        &mut c.net,
        &s.train,
        &s.val,
        &policy,
        &OptimizerConfig::default(),
        seed,
    )
    .unwrap();
    loss_and_accuracy(&c.net, &s.test).unwrap().1
}

#[test]
fn easy_and_hard_presets_bracket_device_accuracy() {
    let easy = held_out_device_accuracy("easy", 7);
    let hard = held_out_device_accuracy("hard", 7);
    // Chance is 0.25 with four devices.
    assert!(easy > 0.5, "easy {easy}");
    assert!(easy - hard > 0.15, "easy {easy} hard {hard}");
}
