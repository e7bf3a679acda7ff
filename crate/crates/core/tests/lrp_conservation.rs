mod common;

use common::{random_input, random_net};
use fedx_core::nn::Network;
use fedx_core::relevance::{lrp_backward, seed_relevance, LrpRule, LrpRuleAssignment};
use fedx_core::data::Task;

fn bias_free(net: &Network) -> Network {
    let mut p = net.params().clone();
    for l in net.weighted_layers() {
        p.layer_mut(l).1.fill(0.0);
    }
    net.with_params(p).unwrap()
}

fn check_conservation(rules: impl Fn(&Network) -> LrpRuleAssignment) {
    for seed in 0..24 {
        let net = bias_free(&random_net(seed));
        // Dead-ReLU draws give a zero target logit and nothing to conserve.
        let (trace, seed_rel) = (0..16)
            .map(|k| {
                let trace = net.forward(&random_input(&net, 1, seed * 100 + k, true)).unwrap();
                let r = seed_relevance(&trace, Task::SingleLabel);
                (trace, r)
            })
            .find(|(_, r)| r.sum() != 0.0)
            .expect("some input activates the net");
        let total = seed_rel.sum();
        let rels = lrp_backward(&net, &trace, &seed_rel, &rules(&net)).unwrap();
        for (i, r) in rels.iter().enumerate() {
            let err = (r.sum() - total).abs() / total.abs();
            assert!(err < 1e-9, "seed {seed} layer {i}: {} vs {total} ({err:e})", r.sum());
        }
    }
}

#[test]
fn epsilon_zero_conserves_relevance_across_layers() {
    check_conservation(|net| LrpRuleAssignment::uniform(net, LrpRule::Epsilon(0.0)));
}

#[test]
fn mixed_rules_conserve_without_biases() {
    check_conservation(|net| LrpRuleAssignment::four_part(net, 0.0, 0.25));
}
