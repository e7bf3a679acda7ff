mod common;

use common::{max_rel_err, numeric_grad, random_input, random_net};
use fedx_core::nn::Network;
use fedx_core::rng::rng_from_seed;
use fedx_core::trainer::{loss_and_grad, LossKind};
use fedx_core::Tensor;
use rand::Rng;

const TOL: f64 = 1e-5;
const NETS: u64 = 24;

/// Loss `Σ c ⊙ logits` with fixed random coefficients.
fn probe_coeffs(net: &Network, n: usize, seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed ^ 0xc0ef);
    let data = (0..n * net.num_classes()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![n, net.num_classes()], data).unwrap()
}

fn linear_loss(net: &Network, x: &Tensor, c: &Tensor) -> f64 {
    let t = net.forward(x).unwrap();
    t.logits().data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn parameter_gradients_match_finite_differences() {
    for seed in 0..NETS {
        let net = random_net(seed);
        let x = random_input(&net, 2, seed, false);
        let c = probe_coeffs(&net, 2, seed);
        let trace = net.forward(&x).unwrap();
        let analytic = net.backward(&trace, &c).unwrap();
        let numeric = numeric_grad(net.params().data(), |p| {
            let probe = net.with_params(net.params().with_data(p.to_vec()).unwrap()).unwrap();
            linear_loss(&probe, &x, &c)
        });
        let err = max_rel_err(analytic.data(), &numeric);
        assert!(err < TOL, "seed {seed} ({:?}): rel err {err:e}", net.arch().layers);
    }
}

#[test]
fn input_gradients_match_finite_differences() {
    for seed in 0..NETS {
        let net = random_net(seed);
        let x = random_input(&net, 2, seed + 100, false);
        let c = probe_coeffs(&net, 2, seed + 100);
        let trace = net.forward(&x).unwrap();
        let grads = net.backward_full(&trace, &c).unwrap();
        let numeric = numeric_grad(x.data(), |d| {
            linear_loss(&net, &Tensor::new(x.shape().to_vec(), d.to_vec()).unwrap(), &c)
        });
        let err = max_rel_err(grads.activations[0].data(), &numeric);
        assert!(err < TOL, "seed {seed}: rel err {err:e}");
    }
}

fn check_loss(kind: LossKind, multi_hot: bool) {
    for seed in 0..NETS {
        let net = random_net(seed);
        let n = 3;
        let x = random_input(&net, n, seed + 7, false);
        let k = net.num_classes();
        let mut y = vec![0.0; n * k];
        for i in 0..n {
            y[i * k + (i + seed as usize) % k] = 1.0;
            if multi_hot && i % 2 == 0 {
                y[i * k + (i + seed as usize + 1) % k] = 1.0;
            }
        }
        let y = Tensor::new(vec![n, k], y).unwrap();
        let trace = net.forward(&x).unwrap();
        let (_, g) = loss_and_grad(trace.logits(), &y, kind).unwrap();
        let analytic = net.backward(&trace, &g).unwrap();
        let numeric = numeric_grad(net.params().data(), |p| {
            let probe = net.with_params(net.params().with_data(p.to_vec()).unwrap()).unwrap();
            loss_and_grad(probe.forward(&x).unwrap().logits(), &y, kind).unwrap().0
        });
        let err = max_rel_err(analytic.data(), &numeric);
        assert!(err < TOL, "{kind:?} seed {seed}: rel err {err:e}");
    }
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    check_loss(LossKind::CategoricalCe, false);
}

#[test]
fn binary_cross_entropy_gradients_match_finite_differences() {
    check_loss(LossKind::BinaryCe, true);
}

#[test]
fn fixtures_cover_every_layer_kind() {
    let names: std::collections::BTreeSet<String> = (0..NETS)
        .flat_map(|s| {
            random_net(s)
                .layers()
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let n = l.name(i);
                    n.split_whitespace().nth(1).unwrap().split('(').next().unwrap().to_string()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    for kind in ["Dense", "Conv2d", "ReLU", "MaxPool2d", "GlobalAvgPool", "Flatten"] {
        assert!(names.contains(kind), "missing {kind}: {names:?}");
    }
}
