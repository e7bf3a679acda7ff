//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{max_rel_err, numeric_grad, random_input, random_net};
use fedx_cli::commands::{cmd_run, RunOptions};
use fedx_cli::ledger::{analytic_ledger, whole_mb};
use fedx_cli::{Experiment, ExperimentConfig};
use fedx_core::data::Task;
use fedx_core::federation::{client_seed, to_mb, CommLedger, Federation, Strategy, BYTES_PER_PARAM};
use fedx_core::nn::{ComponentId, Network};
use fedx_core::pruning::{apply_mask, compute_mask, prune_count, PruneMask, PruneMode};
use fedx_core::relevance::{integrated_gradients_input, lrp_backward, seed_relevance, LrpRule, LrpRuleAssignment, Method, RelevanceMap};
use fedx_core::trainer::{local_training, loss_and_grad, LossKind};
use fedx_core::Tensor;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn c1_ledger_table() -> Outcome {
    let mut parts = Vec::new();
    for (model_bytes, published) in [(42_760_000u64, 13_682u64), (1_290_000, 412)] {
        let mut ledger = CommLedger::new(model_bytes, 8);
        for r in 1..=20 {
            ledger.record_round(r, 0, 0).map_err(|e| e.to_string())?;
        }
        let t = ledger.totals();
        ensure!(t.unpruned_total_bytes == model_bytes * 2 * 20 * 8, "unpruned total is not size*2*R*K");
        let mb = whole_mb(t.unpruned_total_bytes);
        ensure!(mb.abs_diff(published) <= 1, "{mb} MB vs {published} MB");
        parts.push(format!("{} MB model -> {mb} MB (table {published})", to_mb(model_bytes)));
    }
    Ok(parts.join("; "))
}

fn c2_savings_linearity() -> Outcome {
    let mut cfg = small_config(7);
    cfg.fed.rounds = 5;
    cfg.fed.warmup = 3;
    let exp = Experiment::prepare(&cfg).map_err(|e| e.to_string())?;
    let net = &exp.net0;
    let comps = net.components();
    let unit_bytes = |c: ComponentId| net.component_param_slice(c).map(|s| s.len() as u64 * BYTES_PER_PARAM);
    let prunable: u64 = comps.iter().map(|&c| unit_bytes(c)).sum::<fedx_core::Result<u64>>().map_err(|e| e.to_string())?;
    let mut per_layer_max: BTreeMap<usize, u64> = BTreeMap::new();
    for &c in &comps {
        let b = unit_bytes(c).map_err(|e| e.to_string())?;
        let e = per_layer_max.entry(c.layer).or_default();
        *e = (*e).max(b);
    }
    let (k, r, v) = (cfg.fed.num_clients as f64, cfg.fed.rounds, cfg.fed.warmup);
    let periods = 2.0 * (r - v + 1) as f64 * k;
    let bound = per_layer_max.values().sum::<u64>() as f64 * periods;
    let mut worst: f64 = 0.0;
    for q in [0.3, 0.5, 0.9] {
        for strategy in [Strategy::LrpLayerwise, Strategy::Random] {
            let mut c = cfg.clone();
            c.fed.q = q;
            c.fed.strategy = strategy;
            let exp = Experiment::prepare(&c).map_err(|e| e.to_string())?;
            let out = exp.run().map_err(|e| e.to_string())?;
            let saved = out.ledger.totals().saved_bytes as f64;
            let ideal = q * prunable as f64 * periods;
            ensure!((saved - ideal).abs() <= bound, "q={q}: saved {saved} vs {ideal} (bound {bound})");
            worst = worst.max((saved - ideal).abs() / bound);
        }
    }
    // Closed-form example: a 1 MB fully prunable model at q=0.9 with ten
    // pruned rounds and 8 clients.
    let toy = analytic_ledger(1_000_000, 8, 19, 10, 0.9).map_err(|e| e.to_string())?.totals();
    ensure!((toy.saved_mb() - 144.0).abs() < 1e-6, "toy saved {} MB", toy.saved_mb());
    Ok(format!("max deviation {:.2} of floor bound; 1 MB toy saves {} MB", worst, toy.saved_mb()))
}

fn c3_gradients() -> Outcome {
    let mut worst: f64 = 0.0;
    let nets = 24;
    for seed in 0..nets {
        let net = random_net(seed);
        ensure!(net.params().len() <= 200, "net {seed} too large");
        let x = random_input(&net, 2, seed, false);
        let n = x.batch();
        let k = net.num_classes();
        let mut y = vec![0.0; n * k];
        for i in 0..n {
            y[i * k + (i + seed as usize) % k] = 1.0;
        }
        let y = Tensor::new(vec![n, k], y).unwrap();
        for kind in [LossKind::CategoricalCe, LossKind::BinaryCe] {
            let trace = net.forward(&x).unwrap();
            let (_, g) = loss_and_grad(trace.logits(), &y, kind).unwrap();
            let full = net.backward_full(&trace, &g).unwrap();
            let num_p = numeric_grad(net.params().data(), |p| {
                let probe = net.with_params(net.params().with_data(p.to_vec()).unwrap()).unwrap();
                loss_and_grad(probe.forward(&x).unwrap().logits(), &y, kind).unwrap().0
            });
            let num_x = numeric_grad(x.data(), |d| {
                let xi = Tensor::new(x.shape().to_vec(), d.to_vec()).unwrap();
                loss_and_grad(net.forward(&xi).unwrap().logits(), &y, kind).unwrap().0
            });
            let err = max_rel_err(full.params.data(), &num_p).max(max_rel_err(full.activations[0].data(), &num_x));
            ensure!(err < 1e-5, "net {seed} {kind:?}: rel err {err:e}");
            worst = worst.max(err);
        }
    }
    Ok(format!("{nets} nets, all layer kinds, max rel err {worst:.1e}"))
}

fn c4_lrp_conservation() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..24 {
        let base = random_net(seed);
        let mut p = base.params().clone();
        for l in base.weighted_layers() {
            p.layer_mut(l).1.fill(0.0);
        }
        let net = base.with_params(p).unwrap();
        let rules = LrpRuleAssignment::uniform(&net, LrpRule::Epsilon(0.0));
        let (trace, out) = (0..16)
            .map(|k| {
                let t = net.forward(&random_input(&net, 1, seed * 100 + k, true)).unwrap();
                let r = seed_relevance(&t, Task::SingleLabel);
                (t, r)
            })
            .find(|(_, r)| r.sum() != 0.0)
            .ok_or(format!("net {seed} never activates"))?;
        let total = out.sum();
        let rels = lrp_backward(&net, &trace, &out, &rules).map_err(|e| e.to_string())?;
        for r in &rels {
            let err = (r.sum() - total).abs() / total.abs();
            ensure!(err <= 1e-9, "net {seed}: rel err {err:e}");
            worst = worst.max(err);
        }
    }
    Ok(format!("24 bias-free nets, max rel err {worst:.1e}"))
}

fn c5_ig_completeness() -> Outcome {
    let logit = |net: &Network, x: &Tensor, c: usize| net.forward(x).unwrap().logits().data()[c];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..24 {
        let net = random_net(seed);
        let x = random_input(&net, 1, seed, false);
        let base = Tensor::zeros(x.shape());
        let (t, delta) = (0..net.num_classes())
            .map(|c| (c, logit(&net, &x, c) - logit(&net, &base, c)))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        // Relative error is ill-conditioned for near-zero output changes.
        if delta.abs() < 0.2 {
            continue;
        }
        let sum = integrated_gradients_input(&net, &x, &[t], 256, &base).unwrap().sum();
        let err = (sum - delta).abs() / delta.abs();
        ensure!(err <= 0.01, "net {seed}: {sum} vs {delta}");
        worst = worst.max(err);
        checked += 1;
    }
    ensure!(checked >= 16, "only {checked} informative nets");
    let arch = fedx_core::nn::ArchConfig {
        input_shape: vec![5],
        layers: vec![fedx_core::nn::LayerSpec::dense(5, 3)],
        num_classes: 3,
    };
    let mut linear_worst: f64 = 0.0;
    for seed in 0..10 {
        let net = Network::build(&arch, seed).unwrap();
        let x = random_input(&net, 1, seed, false);
        let base = Tensor::zeros(x.shape());
        let w = net.params().weights(0).to_vec();
        for steps in [1, 3, 32] {
            let ig = integrated_gradients_input(&net, &x, &[1], steps, &base).unwrap();
            for (i, v) in ig.data().iter().enumerate() {
                let exact = w[5 + i] * x.data()[i];
                linear_worst = linear_worst.max((v - exact).abs());
            }
        }
    }
    ensure!(linear_worst <= 1e-12, "linear model error {linear_worst:e}");
    Ok(format!("{checked} nets at S=256, max rel err {worst:.2e}; linear max abs err {linear_worst:.1e}"))
}

fn c6_masks() -> Outcome {
    let mut cases = 0;
    for seed in 0..40u64 {
        let net = random_net(seed);
        let comps = net.components();
        let scores: BTreeMap<ComponentId, f64> = comps
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, ((i as u64 * 2654435761 + seed * 97) % 1009) as f64 / 7.0))
            .collect();
        let rel = RelevanceMap::new(scores, Method::Lrp, 1, 0).unwrap();
        let head = *net.weighted_layers().last().unwrap();
        for q in [0.0, 0.25, 0.5, 0.7, 0.9] {
            let lw = compute_mask(&rel, &net, q, PruneMode::LayerWise).unwrap();
            let expected: usize = net
                .weighted_layers()
                .into_iter()
                .filter(|&l| net.is_prunable(l))
                .map(|l| prune_count(q, net.layers()[l].units().unwrap()))
                .sum();
            ensure!(lw.pruned_components().len() == expected, "seed {seed} q={q}: layer-wise count");
            let gl = compute_mask(&rel, &net, q, PruneMode::Global).unwrap();
            ensure!(gl.pruned_components().len() == prune_count(q, comps.len()), "seed {seed} q={q}: global count");
            for m in [&lw, &gl] {
                ensure!(m.pruned_components().iter().all(|c| c.layer != head), "head pruned");
                let once = apply_mask(net.params(), m).unwrap();
                let twice = apply_mask(&once, m).unwrap();
                ensure!(once == twice, "apply_mask not idempotent");
            }
            for c in [1e-6, 3.0, 1e6] {
                for mode in [PruneMode::LayerWise, PruneMode::Global] {
                    let a = compute_mask(&rel, &net, q, mode).unwrap();
                    let b = compute_mask(&rel.scaled(c), &net, q, mode).unwrap();
                    ensure!(a.pruned_components() == b.pruned_components(), "rescaling by {c} changed the mask");
                }
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} (net, q) cases: exact counts, scale invariance, idempotence, head kept"))
}

fn c7_algorithm() -> Outcome {
    let mut cfg = small_config(3);
    cfg.fed.rounds = 5;
    cfg.fed.warmup = 3;
    cfg.fed.q = 0.5;
    let exp = Experiment::prepare(&cfg).map_err(|e| e.to_string())?;
    let fed = exp.federation(cfg.fed.clone()).map_err(|e| e.to_string())?;
    let mut state = fed.initial_state(&exp.net0);
    while state.round < cfg.fed.rounds {
        fed.step(&mut state).map_err(|e| e.to_string())?;
        let keep = state.mask.param_mask();
        let zeros = state.global.params().data().iter().zip(keep).all(|(&p, &k)| k || p == 0.0);
        ensure!(zeros, "round {}: global model nonzero off the mask", state.round);
        if state.round >= cfg.fed.warmup {
            ensure!(!state.mask.is_all_ones(), "mask missing after warm-up");
            // What every client would upload from this broadcast.
            for c in &exp.clients {
                let o = local_training(&state.global, &state.mask, &c.data, &cfg.train, client_seed(cfg.fed.seed, state.round + 1, c.id))
                    .map_err(|e| e.to_string())?;
                ensure!(o.params.data().iter().zip(keep).all(|(&p, &k)| k || p == 0.0), "client {} breaks structure", c.id);
            }
        }
    }

    let mut single = small_config(4);
    single.fed.num_clients = 1;
    single.fed.rounds = 3;
    single.fed.warmup = 2;
    single.fed.q = 0.0;
    single.data.partition = fedx_core::data::PartitionMode::Iid;
    let exp = Experiment::prepare(&single).map_err(|e| e.to_string())?;
    let fed_out = Federation::new(single.fed.clone(), single.train.clone(), &exp.clients, &exp.reference, None)
        .and_then(|f| f.run(&exp.net0))
        .map_err(|e| e.to_string())?;
    let ones = PruneMask::all_ones(&exp.net0);
    let mut net = exp.net0.clone();
    for r in 1..=single.fed.rounds {
        let o = local_training(&net, &ones, &exp.clients[0].data, &single.train, client_seed(single.fed.seed, r, 0))
            .map_err(|e| e.to_string())?;
        net = net.with_params(o.params).map_err(|e| e.to_string())?;
    }
    let bitwise = fed_out.network.params().data().iter().zip(net.params().data()).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(bitwise, "K=1, q=0 differs from centralized training");
    Ok("structural zeros every round, identical client structure, K=1/q=0 bitwise centralized".into())
}

struct DeskResults {
    /// (strategy, q) -> final metric per seed.
    metrics: BTreeMap<(Strategy, u64), Vec<f64>>,
    seconds: f64,
}

fn q_key(q: f64) -> u64 {
    (q * 100.0).round() as u64
}

fn desk_runs() -> Result<DeskResults, String> {
    let start = Instant::now();
    let cells = [
        (Strategy::NoPrune, 0.0),
        (Strategy::LrpLayerwise, 0.5),
        (Strategy::LrpLayerwise, 0.8),
        (Strategy::LrpLayerwise, 0.9),
        (Strategy::LrpGlobal, 0.9),
        (Strategy::Random, 0.5),
        (Strategy::Random, 0.8),
    ];
    let mut metrics: BTreeMap<(Strategy, u64), Vec<f64>> = BTreeMap::new();
    for seed in 0..3 {
        let cfg = ExperimentConfig::desk_default().with_seed(seed);
        let exp = Experiment::prepare(&cfg).map_err(|e| e.to_string())?;
        for cell in exp.run_cells(&cells).map_err(|e| e.to_string())? {
            metrics.entry((cell.strategy, q_key(cell.q))).or_default().push(cell.final_metric());
        }
    }
    Ok(DeskResults {
        metrics,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn mean(desk: &DeskResults, s: Strategy, q: f64) -> f64 {
    let v = &desk.metrics[&(s, q_key(q))];
    v.iter().sum::<f64>() / v.len() as f64
}

fn c8_layerwise_vs_global(desk: &DeskResults) -> Outcome {
    let base = mean(desk, Strategy::NoPrune, 0.0);
    let lw5 = mean(desk, Strategy::LrpLayerwise, 0.5);
    let lw9 = mean(desk, Strategy::LrpLayerwise, 0.9);
    let gl9 = mean(desk, Strategy::LrpGlobal, 0.9);
    let detail = format!(
        "mAP unpruned {base:.4}, LRP-LW q=0.5 {lw5:.4}, LRP-LW q=0.9 {lw9:.4}, LRP-global q=0.9 {gl9:.4} ({:.0} s for 3 seeds)",
        desk.seconds
    );
    ensure!((base - lw5).abs() <= 0.05, "(a) gap {:.4} > 0.05: {detail}", (base - lw5).abs());
    ensure!(lw9 > gl9, "(b) layer-wise does not beat global: {detail}");
    Ok(detail)
}

fn c9_lrp_vs_random(desk: &DeskResults) -> Outcome {
    let mut parts = Vec::new();
    for q in [0.5, 0.8] {
        let lrp = mean(desk, Strategy::LrpLayerwise, q);
        let rnd = mean(desk, Strategy::Random, q);
        parts.push(format!("q={q}: LRP {lrp:.4} vs random {rnd:.4}"));
        ensure!(lrp >= rnd, "{}", parts.join("; "));
    }
    Ok(parts.join("; "))
}

fn small_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default().with_seed(seed);
    cfg.fed.num_clients = 4;
    cfg.fed.rounds = 4;
    cfg.fed.warmup = 2;
    cfg.data.synth.samples_per_class = 24;
    cfg.data.synth.height = 8;
    cfg.data.synth.width = 8;
    cfg.data.holdout_per_class = 4;
    cfg.data.reference_size = 16;
    cfg.data.test_per_class = 8;
    cfg.train.local_epochs = 1;
    cfg
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = Vec::new();
    for strategy in [Strategy::LrpLayerwise, Strategy::IgGlobal, Strategy::Random] {
        let mut cfg = small_config(11);
        cfg.fed.strategy = strategy;
        let path = tmp.path().join(format!("{}.json", strategy.name()));
        std::fs::write(&path, cfg.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let opts = RunOptions {
            out: Some(tmp.path().join("runs")),
            ..RunOptions::default()
        };
        let a = cmd_run(&path, &opts).map_err(|e| e.to_string())?;
        let b = cmd_run(&path, &opts).map_err(|e| e.to_string())?;
        ensure!(a != b, "second run reused the first directory");
        for file in ["rounds.csv", "manifest.json", "mask.json", "relevance.json"] {
            let x = std::fs::read(a.join(file)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.join(file)).map_err(|e| e.to_string())?;
            ensure!(x == y, "{} differs for {}", file, strategy.name());
        }
        checked.push(strategy.name());
    }
    Ok(format!("byte-identical artifacts for {}", checked.join(", ")))
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id:>2} [{tag}] {name}: {detail} [{secs:.1} s]");
    result.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= run(1, "ledger arithmetic vs communication table", c1_ledger_table);
    ok &= run(2, "savings linearity", c2_savings_linearity);
    ok &= run(3, "gradient correctness", c3_gradients);
    ok &= run(4, "LRP conservation", c4_lrp_conservation);
    ok &= run(5, "IG completeness", c5_ig_completeness);
    ok &= run(6, "mask exactness", c6_masks);
    ok &= run(7, "federated pruning algorithm conformance", c7_algorithm);
    match desk_runs() {
        Ok(desk) => {
            ok &= run(8, "layer-wise vs global pruning at desk scale", || c8_layerwise_vs_global(&desk));
            ok &= run(9, "LRP vs random pruning at desk scale", || c9_lrp_vs_random(&desk));
        }
        Err(e) => {
            ok &= run(8, "layer-wise vs global pruning at desk scale", || Err(e.clone()));
            ok &= run(9, "LRP vs random pruning at desk scale", || Err(e));
        }
    }
    ok &= run(10, "determinism", c10_determinism);
    if !ok {
        std::process::exit(1);
    }
}
