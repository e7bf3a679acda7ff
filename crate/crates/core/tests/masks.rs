use std::collections::BTreeMap;

use fedx_core::nn::{ArchConfig, ComponentId, LayerSpec, Network};
use fedx_core::pruning::{apply_mask, baseline_mask, compute_mask, prune_count, Baseline, PruneMask, PruneMode};
use fedx_core::relevance::{Method, RelevanceMap};
use proptest::prelude::*;

fn mlp(widths: &[usize]) -> Network {
    let mut layers = Vec::new();
    let mut fin = 3;
    for &w in widths {
        layers.push(LayerSpec::dense(fin, w));
        layers.push(LayerSpec::relu());
        fin = w;
    }
    layers.push(LayerSpec::dense(fin, 2));
    Network::build(&ArchConfig { input_shape: vec![3], layers, num_classes: 2 }, 1).unwrap()
}

fn rel_from(net: &Network, scores: &[f64]) -> RelevanceMap {
    let map: BTreeMap<ComponentId, f64> = net.components().into_iter().zip(scores.iter().copied()).collect();
    RelevanceMap::new(map, Method::Lrp, 1, 0).unwrap()
}

fn case() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, f64)> {
    prop::collection::vec(1usize..12, 1..4).prop_flat_map(|widths| {
        let p: usize = widths.iter().sum();
        (Just(widths), prop::collection::vec(0.0f64..10.0, p), 0.0f64..0.95)
    })
}

fn head_untouched(net: &Network, mask: &PruneMask) -> bool {
    let head = *net.weighted_layers().last().unwrap();
    mask.pruned_components().iter().all(|c| c.layer != head)
}

proptest! {
    #[test]
    fn layerwise_counts_are_exact((widths, scores, q) in case()) {
        let net = mlp(&widths);
        let mask = compute_mask(&rel_from(&net, &scores), &net, q, PruneMode::LayerWise).unwrap();
        let expected: usize = widths.iter().map(|&n| prune_count(q, n)).sum();
        prop_assert_eq!(mask.pruned_components().len(), expected);
        for (i, &n) in widths.iter().enumerate() {
            let got = mask.pruned_components().iter().filter(|c| c.layer == 2 * i).count();
            prop_assert_eq!(got, prune_count(q, n));
        }
        prop_assert!(head_untouched(&net, &mask));
    }

    #[test]
    fn global_counts_are_exact((widths, scores, q) in case()) {
        let net = mlp(&widths);
        let mask = compute_mask(&rel_from(&net, &scores), &net, q, PruneMode::Global).unwrap();
        let p: usize = widths.iter().sum();
        prop_assert_eq!(mask.pruned_components().len(), prune_count(q, p));
        prop_assert!(head_untouched(&net, &mask));
    }

    #[test]
    fn positive_rescaling_keeps_masks((widths, scores, q) in case(), c in 1e-3f64..1e3) {
        let net = mlp(&widths);
        let rel = rel_from(&net, &scores);
        for mode in [PruneMode::LayerWise, PruneMode::Global] {
            let a = compute_mask(&rel, &net, q, mode).unwrap();
            let b = compute_mask(&rel.scaled(c), &net, q, mode).unwrap();
            prop_assert_eq!(a.pruned_components(), b.pruned_components());
        }
    }

    #[test]
    fn monotone_in_rate((widths, scores, q) in case(), dq in 0.0f64..0.3) {
        let net = mlp(&widths);
        let rel = rel_from(&net, &scores);
        let q2 = (q + dq).min(0.95);
        for mode in [PruneMode::LayerWise, PruneMode::Global] {
            let small = compute_mask(&rel, &net, q, mode).unwrap().pruned_components();
            let large = compute_mask(&rel, &net, q2, mode).unwrap().pruned_components();
            prop_assert!(small.iter().all(|c| large.contains(c)));
        }
    }

    #[test]
    fn apply_mask_is_idempotent((widths, scores, q) in case()) {
        let net = mlp(&widths);
        let mask = compute_mask(&rel_from(&net, &scores), &net, q, PruneMode::Global).unwrap();
        let once = apply_mask(net.params(), &mask).unwrap();
        let twice = apply_mask(&once, &mask).unwrap();
        prop_assert_eq!(once.data(), twice.data());
        for (&v, &keep) in once.data().iter().zip(mask.param_mask()) {
            prop_assert!(keep || v == 0.0);
        }
        let pruned = once.data().iter().zip(net.params().data()).filter(|(a, b)| a != b).count();
        prop_assert!(pruned <= mask.pruned_param_count());
    }

    #[test]
    fn baselines_prune_layerwise_counts((widths, _scores, q) in case(), seed in 0u64..1000) {
        let net = mlp(&widths);
        let expected: usize = widths.iter().map(|&n| prune_count(q, n)).sum();
        for kind in [Baseline::Random { seed }, Baseline::Magnitude] {
            let mask = baseline_mask(&net, q, kind).unwrap();
            prop_assert_eq!(mask.pruned_components().len(), expected);
            prop_assert!(head_untouched(&net, &mask));
        }
    }
}

#[test]
fn ranks_not_values_decide() {
    let net = mlp(&[4]);
    let a = rel_from(&net, &[1.0, 2.0, 3.0, 4.0]);
    let b = rel_from(&net, &[0.001, 50.0, 51.0, 1e9]);
    for q in [0.25, 0.5, 0.75] {
        let ma = compute_mask(&a, &net, q, PruneMode::LayerWise).unwrap();
        let mb = compute_mask(&b, &net, q, PruneMode::LayerWise).unwrap();
        assert_eq!(ma.pruned_components(), mb.pruned_components());
    }
}

#[test]
fn mask_json_round_trips() {
    let net = mlp(&[5, 3]);
    let rel = rel_from(&net, &[5.0, 1.0, 4.0, 2.0, 3.0, 0.5, 0.7, 0.1]);
    let mask = compute_mask(&rel, &net, 0.5, PruneMode::Global).unwrap().with_origin_round(10);
    let back = PruneMask::from_json(&mask.to_json().unwrap(), &net).unwrap();
    assert_eq!(back, mask);
}
