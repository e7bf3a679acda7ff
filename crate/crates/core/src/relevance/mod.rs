//! Server-side relevance estimation: LRP with epsilon/gamma composite rules
//! and integrated gradients, reduced to one mean score per component.

mod ig;
mod lrp;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ig::{integrated_gradients_components, integrated_gradients_input, post_activation_index};
pub use lrp::{lrp_backward, LrpRule, LrpRuleAssignment, DEFAULT_EPSILON, DEFAULT_GAMMA};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::nn::{ComponentId, ForwardTrace, Network};
use crate::tensor::Tensor;
use crate::trainer::sigmoid;

/// Server-held proxy samples used only for relevance estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    samples: Dataset,
}

impl ReferenceSet {
    pub fn new(samples: Dataset) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset("reference set needs at least one sample".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &Dataset {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn task(&self) -> Task {
        self.samples.task()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    Lrp,
    Ig {
        #[serde(default = "default_ig_steps")]
        steps: usize,
    },
}

pub const DEFAULT_IG_STEPS: usize = 32;

fn default_ig_steps() -> usize {
    DEFAULT_IG_STEPS
}

impl Method {
    pub fn ig() -> Self {
        Method::Ig {
            steps: DEFAULT_IG_STEPS,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Method::Lrp => "lrp",
            Method::Ig { .. } => "ig",
        }
    }
}

/// Output classes whose logits seed the explanation. Single-label: the
/// argmax. Multi-label: every class with sigmoid > 0.5, or the argmax if
/// none qualifies.
pub fn target_classes(logits: &[f64], task: Task) -> Vec<usize> {
    let argmax = logits
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > logits[best] { i } else { best });
    match task {
        Task::SingleLabel => vec![argmax],
        Task::MultiLabel => {
            let on: Vec<usize> = (0..logits.len()).filter(|&i| sigmoid(logits[i]) > 0.5).collect();
            if on.is_empty() {
                vec![argmax]
            } else {
                on
            }
        }
    }
}

/// Output relevance for a single-sample trace: the target logits, zero
/// elsewhere.
pub fn seed_relevance(trace: &ForwardTrace, task: Task) -> Tensor {
    let logits = trace.logits();
    let mut r = Tensor::zeros(logits.shape());
    for t in target_classes(logits.row(0), task) {
        r.data_mut()[t] = logits.data()[t];
    }
    r
}

/// Sum of |relevance| over each prunable unit's entries in the output of
/// its layer, for a single-sample relevance list from [`lrp_backward`].
pub fn lrp_component_scores(net: &Network, relevances: &[Tensor]) -> Vec<(ComponentId, f64)> {
    net.components()
        .into_iter()
        .map(|c| {
            let r = relevances[c.layer + 1].row(0);
            let per = r.len() / net.layers()[c.layer].units().expect("weighted");
            let score = r[c.unit * per..(c.unit + 1) * per].iter().map(|v| v.abs()).sum();
            (c, score)
        })
        .collect()
}

/// Mean per-component relevance over a reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    scores: BTreeMap<ComponentId, f64>,
    pub method: Method,
    pub m_ref: usize,
    pub round: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelevanceMetadata {
    method: Method,
    m_ref: usize,
    round: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelevanceExport {
    metadata: RelevanceMetadata,
    scores: IndexMap<String, f64>,
}

impl RelevanceMap {
    pub fn new(scores: BTreeMap<ComponentId, f64>, method: Method, m_ref: usize, round: usize) -> Result<Self> {
        if let Some((c, _)) = scores.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteRelevance { layer: c.layer });
        }
        Ok(Self {
            scores,
            method,
            m_ref,
            round,
        })
    }

    pub fn scores(&self) -> &BTreeMap<ComponentId, f64> {
        &self.scores
    }

    pub fn get(&self, c: ComponentId) -> Option<f64> {
        self.scores.get(&c).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Copy with every score multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            scores: self.scores.iter().map(|(&k, &v)| (k, v * c)).collect(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let export = RelevanceExport {
            metadata: RelevanceMetadata {
                method: self.method,
                m_ref: self.m_ref,
                round: self.round,
            },
            scores: self.scores.iter().map(|(c, &v)| (c.to_string(), v)).collect(),
        };
        Ok(serde_json::to_string_pretty(&export)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let export: RelevanceExport = serde_json::from_str(s)?;
        let scores = export
            .scores
            .into_iter()
            .map(|(k, v)| Ok((k.parse()?, v)))
            .collect::<Result<_>>()?;
        Self::new(scores, export.metadata.method, export.metadata.m_ref, export.metadata.round)
    }
}

/// Per-sample component scores (unreduced), in component order.
pub fn sample_component_scores(
    net: &Network,
    sample: &Tensor,
    task: Task,
    method: &Method,
    rules: &LrpRuleAssignment,
) -> Result<Vec<(ComponentId, f64)>> {
    match *method {
        Method::Lrp => {
            let trace = net.forward(sample)?;
            let seed = seed_relevance(&trace, task);
            let rel = lrp_backward(net, &trace, &seed, rules)?;
            Ok(lrp_component_scores(net, &rel))
        }
        Method::Ig { steps } => {
            let targets = target_classes(net.predict(sample)?.row(0), task);
            let baseline = Tensor::zeros(sample.shape());
            let scores = integrated_gradients_components(net, sample, &targets, steps, &baseline)?;
            Ok(scores.into_iter().map(|(c, v)| (c, v.abs())).collect())
        }
    }
}

/// Mean component relevance over `reference`. Per-component values are
/// sorted before summation, so the result does not depend on sample order
/// or on how samples are scheduled across threads.
pub fn component_relevance(
    net: &Network,
    reference: &ReferenceSet,
    method: &Method,
    rules: &LrpRuleAssignment,
) -> Result<RelevanceMap> {
    let data = reference.samples();
    let per_sample: Vec<Vec<(ComponentId, f64)>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            sample_component_scores(net, &data.input_tensor(i), data.task(), method, rules).map_err(|e| {
                Error::ReferenceSample {
                    index: i,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<_>>()?;
    let comps = net.components();
    let m = per_sample.len() as f64;
    let mut scores = BTreeMap::new();
    let mut column = Vec::with_capacity(per_sample.len());
    for (k, c) in comps.iter().enumerate() {
        column.clear();
        column.extend(per_sample.iter().map(|s| s[k].1));
        column.sort_by(f64::total_cmp);
        scores.insert(*c, column.iter().sum::<f64>() / m);
    }
    RelevanceMap::new(scores, *method, data.len(), 0)
}
