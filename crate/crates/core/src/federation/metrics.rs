use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task: Task,
    /// Overall accuracy (single-label) or micro-mAP (multi-label).
    pub value: f64,
}

impl Metrics {
    pub fn name(&self) -> &'static str {
        match self.task {
            Task::SingleLabel => "accuracy",
            Task::MultiLabel => "micro_map",
        }
    }
}

/// Average precision of `scores` against binary `labels`: the sum over
/// distinct score thresholds (descending) of recall increase times
/// precision at that threshold. Returns 0 when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev_recall) * tp as f64 / (tp + fp) as f64;
        prev_recall = recall;
    }
    ap
}

pub fn evaluate_global(net: &Network, testset: &Dataset) -> Result<Metrics> {
    if testset.is_empty() {
        return Err(Error::EmptyDataset("test set".into()));
    }
    let idx: Vec<usize> = (0..testset.len()).collect();
    let c = testset.num_classes();
    let mut correct = 0usize;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for chunk in idx.chunks(256) {
        let (x, y) = testset.batch(chunk)?;
        let logits = net.predict(&x)?;
        for s in 0..chunk.len() {
            let row = logits.row(s);
            match testset.task() {
                Task::SingleLabel => {
                    let pred = row
                        .iter()
                        .enumerate()
                        .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
                    if y.row(s)[pred] > 0.5 {
                        correct += 1;
                    }
                }
                Task::MultiLabel => {
                    scores.extend_from_slice(row);
                    labels.extend(y.row(s).iter().map(|&t| t > 0.5));
                }
            }
        }
        debug_assert_eq!(logits.row_len(), c);
    }
    let value = match testset.task() {
        Task::SingleLabel => correct as f64 / testset.len() as f64,
        Task::MultiLabel => average_precision(&scores, &labels),
    };
    Ok(Metrics {
        task: testset.task(),
        value,
    })
}
