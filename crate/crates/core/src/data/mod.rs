//! Datasets, synthetic generation and federated partitioning.

mod npy;
mod partition;
mod synth;

use serde::{Deserialize, Serialize};

pub use npy::{write_labels_csv, write_npy};
pub use partition::{make_reference_set, partition, split_holdout, PartitionMode, PartitionPlan, ReferenceSet};
pub use synth::{generate, SyntheticSpec, Synthesizer};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One class per sample; targets are one-hot.
    SingleLabel,
    /// Any subset of classes per sample; targets are multi-hot.
    MultiLabel,
}

/// In-memory labelled samples. Every sample carries a stable id so subsets
/// drawn from the same source can be checked for overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    task: Task,
    num_classes: usize,
    sample_shape: Vec<usize>,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    primary: Vec<usize>,
    ids: Vec<u64>,
}

impl Dataset {
    pub fn new(
        task: Task,
        num_classes: usize,
        sample_shape: Vec<usize>,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        primary: Vec<usize>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let n = ids.len();
        let per: usize = sample_shape.iter().product();
        if inputs.len() != n * per || targets.len() != n * num_classes || primary.len() != n {
            return Err(Error::LengthMismatch {
                context: "dataset buffers".into(),
                expected: n * per,
                actual: inputs.len(),
            });
        }
        if primary.iter().any(|&p| p >= num_classes) {
            return Err(Error::Config("primary label out of range".into()));
        }
        Ok(Self {
            task,
            num_classes,
            sample_shape,
            inputs,
            targets,
            primary,
            ids,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let s = self.sample_len();
        &self.inputs[i * s..(i + 1) * s]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Single label for single-label tasks; the first (dominant) label for
    /// multi-label samples.
    pub fn primary_label(&self, i: usize) -> usize {
        self.primary[i]
    }

    pub fn primary_labels(&self) -> &[usize] {
        &self.primary
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn input_tensor(&self, i: usize) -> Tensor {
        let mut shape = vec![1];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, self.input(i).to_vec()).expect("consistent sample shape")
    }

    /// (inputs, targets) tensors for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset("empty batch".into()));
        }
        let mut x = Vec::with_capacity(indices.len() * self.sample_len());
        let mut y = Vec::with_capacity(indices.len() * self.num_classes);
        for &i in indices {
            x.extend_from_slice(self.input(i));
            y.extend_from_slice(self.target(i));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.sample_shape);
        Ok((
            Tensor::new(shape, x)?,
            Tensor::new(vec![indices.len(), self.num_classes], y)?,
        ))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset {
            task: self.task,
            num_classes: self.num_classes,
            sample_shape: self.sample_shape.clone(),
            inputs: Vec::with_capacity(indices.len() * self.sample_len()),
            targets: Vec::with_capacity(indices.len() * self.num_classes),
            primary: Vec::with_capacity(indices.len()),
            ids: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            out.inputs.extend_from_slice(self.input(i));
            out.targets.extend_from_slice(self.target(i));
            out.primary.push(self.primary[i]);
            out.ids.push(self.ids[i]);
        }
        out
    }
}
