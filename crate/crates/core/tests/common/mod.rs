//! Shared fixtures: small random networks covering every layer kind, and a
//! central finite-difference gradient oracle.
#![allow(dead_code)]

use fedx_core::nn::{ArchConfig, LayerSpec, Network};
use fedx_core::rng::rng_from_seed;
use fedx_core::Tensor;
use rand::Rng;

pub const FD_STEP: f64 = 1e-6;

/// Relative error with a floor on the denominator so that near-zero
/// gradients are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// One of four topologies chosen by `seed`, each at most 200 parameters.
/// Together they exercise dense, conv (strided and padded), ReLU, max
/// pooling, global average pooling and flatten.
pub fn random_arch(seed: u64) -> ArchConfig {
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let classes = rng.random_range(2..=3);
    match seed % 4 {
        0 => {
            let f = rng.random_range(3..=6);
            let h = rng.random_range(3..=6);
            ArchConfig {
                input_shape: vec![f],
                layers: vec![
                    LayerSpec::dense(f, h),
                    LayerSpec::relu(),
                    LayerSpec::dense(h, h),
                    LayerSpec::relu(),
                    LayerSpec::dense(h, classes),
                ],
                num_classes: classes,
            }
        }
        1 => {
            let c = rng.random_range(1..=2);
            let k = rng.random_range(2..=3);
            ArchConfig {
                input_shape: vec![c, 6, 6],
                layers: vec![
                    LayerSpec::conv_padded(c, 3, 3, 1, 1),
                    LayerSpec::relu(),
                    LayerSpec::max_pool(2),
                    LayerSpec::conv(3, k, 2),
                    LayerSpec::relu(),
                    LayerSpec::global_avg_pool(),
                    LayerSpec::dense(k, classes),
                ],
                num_classes: classes,
            }
        }
        2 => {
            let c = rng.random_range(1..=2);
            ArchConfig {
                input_shape: vec![c, 5, 5],
                layers: vec![
                    LayerSpec::conv_padded(c, 2, 3, 2, 1),
                    LayerSpec::relu(),
                    LayerSpec::flatten(),
                    LayerSpec::dense(2 * 3 * 3, 4),
                    LayerSpec::relu(),
                    LayerSpec::dense(4, classes),
                ],
                num_classes: classes,
            }
        }
        _ => ArchConfig {
            input_shape: vec![1, 8, 8],
            layers: vec![
                LayerSpec::conv(1, 2, 3),
                LayerSpec::relu(),
                LayerSpec::max_pool(3),
                LayerSpec::flatten(),
                LayerSpec::dense(8, classes),
            ],
            num_classes: classes,
        },
    }
}

/// Random network whose biases are also randomized (initialization zeroes
/// them, which would hide bias-gradient mistakes).
pub fn random_net(seed: u64) -> Network {
    let net = Network::build(&random_arch(seed), seed).expect("valid arch");
    let mut rng = rng_from_seed(seed ^ 0xb1a5);
    let mut params = net.params().clone();
    for l in net.weighted_layers() {
        let (_, b) = params.layer_mut(l);
        for v in b.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    assert!(params.len() <= 200, "fixture too large: {}", params.len());
    net.with_params(params).unwrap()
}

pub fn random_input(net: &Network, n: usize, seed: u64, nonnegative: bool) -> Tensor {
    let mut rng = rng_from_seed(seed ^ 0x1a7);
    let per: usize = net.input_shape().iter().product();
    let lo = if nonnegative { 0.0 } else { -1.0 };
    let data = (0..n * per).map(|_| rng.random_range(lo..1.0)).collect();
    let mut shape = vec![n];
    shape.extend_from_slice(net.input_shape());
    Tensor::new(shape, data).unwrap()
}

/// Central difference of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest relative error between analytic and numeric gradients.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| rel_err(a, b))
        .fold(0.0, f64::max)
}
