//! Structured pruning masks: relevance-ranked (layer-wise or global) and
//! the random / magnitude baselines.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ComponentId, Network, ParamVector};
use crate::relevance::RelevanceMap;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    /// Prune the least relevant fraction `q` of every prunable layer.
    LayerWise,
    /// Prune the least relevant fraction `q` of all components pooled.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Random { seed: u64 },
    Magnitude,
}

/// Binary keep/prune decision per component, expanded to parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    component_bits: BTreeMap<ComponentId, bool>,
    param_mask: Vec<bool>,
    q: f64,
    mode: PruneMode,
    origin_round: usize,
}

fn check_rate(q: f64) -> Result<()> {
    if (0.0..1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::Config(format!("pruning rate must lie in [0, 1), got {q}")))
    }
}

/// `floor(q * n)`, computed so that e.g. `0.3 * 10` yields 3.
pub fn prune_count(q: f64, n: usize) -> usize {
    let raw = q * n as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.floor() };
    (k as usize).min(n)
}

impl PruneMask {
    /// Keeps everything.
    pub fn all_ones(net: &Network) -> Self {
        Self::from_pruned(net, &BTreeSet::new(), 0.0, PruneMode::LayerWise, 0).expect("empty pruned set is valid")
    }

    pub fn from_pruned(
        net: &Network,
        pruned: &BTreeSet<ComponentId>,
        q: f64,
        mode: PruneMode,
        origin_round: usize,
    ) -> Result<Self> {
        let comps = net.components();
        let mut component_bits: BTreeMap<ComponentId, bool> = comps.iter().map(|&c| (c, true)).collect();
        let mut param_mask = vec![true; net.params().len()];
        for &c in pruned {
            match component_bits.get_mut(&c) {
                Some(bit) => *bit = false,
                None => return Err(Error::InvalidComponent(format!("{c} is not a prunable component"))),
            }
            for i in net.component_param_slice(c)? {
                param_mask[i] = false;
            }
        }
        Ok(Self {
            component_bits,
            param_mask,
            q,
            mode,
            origin_round,
        })
    }

    pub fn component_bits(&self) -> &BTreeMap<ComponentId, bool> {
        &self.component_bits
    }

    pub fn param_mask(&self) -> &[bool] {
        &self.param_mask
    }

    pub fn keeps(&self, c: ComponentId) -> Option<bool> {
        self.component_bits.get(&c).copied()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mode(&self) -> PruneMode {
        self.mode
    }

    pub fn origin_round(&self) -> usize {
        self.origin_round
    }

    pub fn with_origin_round(mut self, round: usize) -> Self {
        self.origin_round = round;
        self
    }

    pub fn pruned_components(&self) -> Vec<ComponentId> {
        self.component_bits.iter().filter(|(_, &k)| !k).map(|(&c, _)| c).collect()
    }

    pub fn pruned_param_count(&self) -> usize {
        self.param_mask.iter().filter(|&&k| !k).count()
    }

    /// Fraction of parameters masked out.
    pub fn sparsity(&self) -> f64 {
        if self.param_mask.is_empty() {
            0.0
        } else {
            self.pruned_param_count() as f64 / self.param_mask.len() as f64
        }
    }

    pub fn is_all_ones(&self) -> bool {
        self.param_mask.iter().all(|&k| k)
    }

    /// Pruned units per prunable layer.
    pub fn pruned_by_layer(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (c, &keep) in &self.component_bits {
            let entry = out.entry(c.layer).or_default();
            if !keep {
                entry.push(c.unit);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let units: BTreeMap<usize, usize> = self.component_bits.keys().fold(BTreeMap::new(), |mut m, c| {
            *m.entry(c.layer).or_insert(0) += 1;
            m
        });
        let export = MaskExport {
            q: self.q,
            mode: self.mode,
            origin_round: self.origin_round,
            layers: self
                .pruned_by_layer()
                .into_iter()
                .map(|(layer, pruned)| LayerMaskExport {
                    layer,
                    units: units[&layer],
                    pruned,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&export)?)
    }

    pub fn from_json(s: &str, net: &Network) -> Result<Self> {
        let export: MaskExport = serde_json::from_str(s)?;
        check_rate(export.q)?;
        let mut pruned = BTreeSet::new();
        for l in &export.layers {
            match net.layers().get(l.layer).and_then(|s| s.units()) {
                Some(u) if u == l.units && net.is_prunable(l.layer) => {}
                _ => {
                    return Err(Error::InvalidComponent(format!(
                        "mask layer {} with {} units does not match the network",
                        l.layer, l.units
                    )))
                }
            }
            pruned.extend(l.pruned.iter().map(|&u| ComponentId::new(l.layer, u)));
        }
        Self::from_pruned(net, &pruned, export.q, export.mode, export.origin_round)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskExport {
    q: f64,
    mode: PruneMode,
    origin_round: usize,
    layers: Vec<LayerMaskExport>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerMaskExport {
    layer: usize,
    units: usize,
    pruned: Vec<usize>,
}

fn scores_by_layer(scores: &BTreeMap<ComponentId, f64>, net: &Network) -> Result<BTreeMap<usize, Vec<(usize, f64)>>> {
    let mut out: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for c in net.components() {
        let s = scores.get(&c).copied().ok_or_else(|| Error::MissingScore(c.to_string()))?;
        out.entry(c.layer).or_default().push((c.unit, s));
    }
    Ok(out)
}

fn layerwise_from_scores(
    scores: &BTreeMap<ComponentId, f64>,
    net: &Network,
    q: f64,
    mode: PruneMode,
) -> Result<PruneMask> {
    check_rate(q)?;
    let mut pruned = BTreeSet::new();
    for (layer, mut units) in scores_by_layer(scores, net)? {
        let k = prune_count(q, units.len());
        units.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        pruned.extend(units[..k].iter().map(|&(u, _)| ComponentId::new(layer, u)));
    }
    PruneMask::from_pruned(net, &pruned, q, mode, 0)
}

/// Prunes `floor(q · n_l)` lowest-scoring units of every prunable layer,
/// ties broken by ascending unit index.
pub fn compute_mask_layerwise(rel: &RelevanceMap, net: &Network, q: f64) -> Result<PruneMask> {
    layerwise_from_scores(rel.scores(), net, q, PruneMode::LayerWise)
}

/// Prunes `floor(q · p)` lowest-scoring units over all prunable layers,
/// ties broken by ascending (layer, unit).
pub fn compute_mask_global(rel: &RelevanceMap, net: &Network, q: f64) -> Result<PruneMask> {
    check_rate(q)?;
    let mut all: Vec<(ComponentId, f64)> = net
        .components()
        .into_iter()
        .map(|c| rel.get(c).map(|s| (c, s)).ok_or_else(|| Error::MissingScore(c.to_string())))
        .collect::<Result<_>>()?;
    let k = prune_count(q, all.len());
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let pruned = all[..k].iter().map(|&(c, _)| c).collect();
    PruneMask::from_pruned(net, &pruned, q, PruneMode::Global, 0)
}

pub fn compute_mask(rel: &RelevanceMap, net: &Network, q: f64, mode: PruneMode) -> Result<PruneMask> {
    match mode {
        PruneMode::LayerWise => compute_mask_layerwise(rel, net, q),
        PruneMode::Global => compute_mask_global(rel, net, q),
    }
}

/// Element-wise product of `params` with the parameter-level mask.
pub fn apply_mask(params: &ParamVector, mask: &PruneMask) -> Result<ParamVector> {
    if params.len() != mask.param_mask.len() {
        return Err(Error::LengthMismatch {
            context: "mask vs parameters".into(),
            expected: mask.param_mask.len(),
            actual: params.len(),
        });
    }
    let data = params
        .data()
        .iter()
        .zip(&mask.param_mask)
        .map(|(&p, &k)| if k { p } else { 0.0 })
        .collect();
    params.with_data(data)
}

/// Layer-wise masks that ignore relevance: uniformly random units, or the
/// units with the smallest L1 norm over their owned parameters.
pub fn baseline_mask(net: &Network, q: f64, kind: Baseline) -> Result<PruneMask> {
    check_rate(q)?;
    match kind {
        Baseline::Random { seed } => {
            let mut rng = rng::rng_from_seed(rng::derive_seed(seed, &[rng::purpose::RANDOM_MASK]));
            let mut pruned = BTreeSet::new();
            for layer in net.weighted_layers().into_iter().filter(|&l| net.is_prunable(l)) {
                let n = net.layers()[layer].units().expect("weighted");
                let k = prune_count(q, n);
                pruned.extend(sample(&mut rng, n, k).into_iter().map(|u| ComponentId::new(layer, u)));
            }
            PruneMask::from_pruned(net, &pruned, q, PruneMode::LayerWise, 0)
        }
        Baseline::Magnitude => {
            let params = net.params().data();
            let scores = net
                .components()
                .into_iter()
                .map(|c| {
                    let norm = net.component_param_slice(c)?.into_iter().map(|i| params[i].abs()).sum();
                    Ok((c, norm))
                })
                .collect::<Result<_>>()?;
            layerwise_from_scores(&scores, net, q, PruneMode::LayerWise)
        }
    }
}
