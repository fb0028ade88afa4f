use rffp_nn::gradcheck::{gradient_check, gradient_check_network, probe_for};
use rffp_nn::{LayerSpec, Network, Tensor};

const EPS: f64 = 1e-3;

fn check(spec: LayerSpec, shape: &[usize], tol: f64) {
    let probe = probe_for(&spec, shape, 17);
    let report = gradient_check(&spec, &probe, EPS, 23).unwrap();
    assert!(
        report.max_rel_error < tol,
        "{}: max rel error {:.3e} at {} ({} values)",
        spec.kind(),
        report.max_rel_error,
        report.worst,
        report.checked
    );
}

#[test]
fn dense() {
    check(LayerSpec::Dense { units: 5 }, &[3, 7], 1e-5);
}

#[test]
fn conv1d() {
    check(
        LayerSpec::Conv1d {
            filters: 3,
            kernel: 5,
        },
        &[2, 2, 9],
        1e-5,
    );
    check(
        LayerSpec::Conv1d {
            filters: 2,
            kernel: 1,
        },
        &[2, 3, 4],
        1e-5,
    );
}

#[test]
fn residual_block_with_projection() {
    check(
        LayerSpec::ResidualBlock {
            filters: 3,
            kernel: 5,
            batch_norm: true,
        },
        &[4, 2, 8],
        1e-5,
    );
}

#[test]
fn residual_block_identity_shortcut_without_bn() {
    check(
        LayerSpec::ResidualBlock {
            filters: 3,
            kernel: 3,
            batch_norm: false,
        },
        &[2, 3, 6],
        1e-5,
    );
}

#[test]
fn batch_norm() {
    check(LayerSpec::BatchNorm, &[4, 3, 5], 1e-4);
    check(LayerSpec::BatchNorm, &[6, 4], 1e-4);
}

#[test]
fn max_pool_at_distinct_maxima() {
    check(LayerSpec::MaxPool1d { width: 2 }, &[2, 3, 8], 1e-5);
}

#[test]
fn elementwise_layers() {
    check(LayerSpec::Dropout { rate: 0.0 }, &[2, 6], 1e-5);
    check(LayerSpec::Dropout { rate: 0.2 }, &[2, 6], 1e-5);
    check(LayerSpec::Flatten, &[2, 3, 4], 1e-5);
    check(LayerSpec::Softmax, &[3, 4], 1e-5);
}

#[test]
fn whole_network_through_cross_entropy() {
    let specs = vec![
        LayerSpec::Conv1d {
            filters: 3,
            kernel: 5,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool1d { width: 2 },
        LayerSpec::ResidualBlock {
            filters: 4,
            kernel: 3,
            batch_norm: true,
        },
        LayerSpec::MaxPool1d { width: 2 },
        LayerSpec::BatchNorm,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 6 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::Dense { units: 3 },
    ];
    let mut net = Network::<f64>::new(&[2, 8], &specs, 5).unwrap();
    let probe = probe_for(&LayerSpec::Flatten, &[4, 2, 8], 99);
    let report = gradient_check_network(&mut net, &probe, &[0, 2, 1, 2], EPS, 3).unwrap();
    assert!(
        report.max_rel_error < 1e-4,
        "max rel error {:.3e} at {}",
        report.max_rel_error,
        report.worst
    );
}

#[test]
fn loss_independent_parameter_gets_exactly_zero_gradient() {
    // The second dense unit's weights never reach the loss when the
    // downstream dense weights reading it are zero.
    let specs = vec![LayerSpec::Dense { units: 2 }, LayerSpec::Dense { units: 2 }];
    let mut net = Network::<f64>::new(&[3], &specs, 1).unwrap();
    {
        let mut params = net.params_mut();
        let w2 = &mut params[2];
        w2.data_mut()[1] = 0.0;
        w2.data_mut()[3] = 0.0;
    }
    let x = Tensor::from_f64(&[2, 3], &[0.5, -1.0, 2.0, 1.0, 0.0, -0.5]).unwrap();
    let logits = net.forward(&x).unwrap();
    let seed = rffp_nn::cross_entropy(&logits, &[0, 1]).unwrap().grad;
    net.backward(&seed).unwrap();
    let grads = net.named_params();
    let w1 = grads[0].1.grad().unwrap();
    assert!(w1[3..6].iter().all(|&g| g == 0.0));
    assert!(grads[1].1.grad().unwrap()[1] == 0.0);
}

#[test]
fn doubling_the_loss_doubles_every_gradient() {
    let specs = vec![
        LayerSpec::Conv1d {
            filters: 2,
            kernel: 3,
        },
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 3 },
    ];
    let probe = probe_for(&LayerSpec::Flatten, &[3, 2, 5], 4);
    let grads_for = |scale: f64| {
        let mut net = Network::<f64>::new(&[2, 5], &specs, 8).unwrap();
        let logits = net.forward(&probe).unwrap();
        let seed = rffp_nn::cross_entropy(&logits, &[0, 1, 2]).unwrap().grad;
        net.backward(&seed.map(|g| g * scale)).unwrap();
        net.named_params()
            .iter()
            .flat_map(|(_, t)| t.grad().unwrap().to_vec())
            .collect::<Vec<_>>()
    };
    let one = grads_for(1.0);
    let two = grads_for(2.0);
    for (a, b) in one.iter().zip(&two) {
        assert_eq!(2.0 * a, *b);
    }
}
