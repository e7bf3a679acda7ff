use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

pub use crate::relevance::ReferenceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionMode {
    /// Random equal-size shards.
    Iid,
    /// Labels are split into K contiguous groups; each client holds every
    /// sample whose (primary) label falls in its group.
    LabelSkew { labels_per_client: usize },
}

/// Per-client sample indices into the partitioned dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub shards: Vec<Vec<usize>>,
    pub mode: PartitionMode,
}

impl PartitionPlan {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn client_datasets(&self, ds: &Dataset) -> Vec<Dataset> {
        self.shards.iter().map(|s| ds.subset(s)).collect()
    }
}

/// Label group of `label` when `num_classes` labels are split into `k`
/// contiguous near-equal groups.
pub fn label_group(label: usize, num_classes: usize, k: usize) -> usize {
    label * k / num_classes
}

pub fn partition(ds: &Dataset, k: usize, mode: PartitionMode, seed: u64) -> Result<PartitionPlan> {
    if k == 0 || k > ds.len() {
        return Err(Error::Partition(format!(
            "cannot split {} samples across {k} clients",
            ds.len()
        )));
    }
    let shards = match mode {
        PartitionMode::Iid => {
            let mut rng = rng::rng_from_seed(rng::derive_seed(seed, &[purpose::PARTITION]));
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut rng);
            let (base, extra) = (ds.len() / k, ds.len() % k);
            let mut start = 0;
            (0..k)
                .map(|i| {
                    let len = base + usize::from(i < extra);
                    let mut shard = order[start..start + len].to_vec();
                    start += len;
                    shard.sort_unstable();
                    shard
                })
                .collect()
        }
        PartitionMode::LabelSkew { labels_per_client } => {
            let c = ds.num_classes();
            if labels_per_client == 0 || c < k * labels_per_client {
                return Err(Error::Partition(format!(
                    "label skew needs num_classes >= clients * labels_per_client ({c} < {k} * {labels_per_client})"
                )));
            }
            let mut shards = vec![Vec::new(); k];
            for i in 0..ds.len() {
                shards[label_group(ds.primary_label(i), c, k)].push(i);
            }
            if let Some(empty) = shards.iter().position(Vec::is_empty) {
                return Err(Error::Partition(format!("client {empty} receives no samples")));
            }
            shards
        }
    };
    Ok(PartitionPlan { shards, mode })
}

fn by_label(ds: &Dataset) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..ds.len() {
        groups.entry(ds.primary_label(i)).or_default().push(i);
    }
    groups
}

/// Stratified split: `per_class` random samples of every label go to the
/// holdout, the rest stay in the training set. Order within each part
/// follows the source order.
pub fn split_holdout(ds: &Dataset, per_class: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = rng::rng_from_seed(rng::derive_seed(seed, &[purpose::HOLDOUT]));
    let mut held = vec![false; ds.len()];
    for (label, mut idx) in by_label(ds) {
        if idx.len() <= per_class {
            return Err(Error::Partition(format!(
                "label {label} has {} samples, cannot hold out {per_class}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..per_class] {
            held[i] = true;
        }
    }
    let (hold, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| held[i]);
    Ok((ds.subset(&train), ds.subset(&hold)))
}

/// Label-stratified random draw of `m_ref` holdout samples: labels are
/// visited round-robin so per-label counts differ by at most one while
/// every label still has samples left. The result keeps holdout order.
pub fn make_reference_set(holdout: &Dataset, m_ref: usize, seed: u64) -> Result<ReferenceSet> {
    if m_ref == 0 || m_ref > holdout.len() {
        return Err(Error::Partition(format!(
            "reference set size {m_ref} must lie in 1..={}",
            holdout.len()
        )));
    }
    let mut rng = rng::rng_from_seed(rng::derive_seed(seed, &[purpose::REFERENCE]));
    let mut queues: Vec<Vec<usize>> = by_label(holdout)
        .into_values()
        .map(|mut v| {
            v.shuffle(&mut rng);
            v.reverse();
            v
        })
        .collect();
    let mut chosen = Vec::with_capacity(m_ref);
    while chosen.len() < m_ref {
        for q in queues.iter_mut() {
            if chosen.len() == m_ref {
                break;
            }
            if let Some(i) = q.pop() {
                chosen.push(i);
            }
        }
    }
    chosen.sort_unstable();
    ReferenceSet::new(holdout.subset(&chosen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticSpec, Task};

    fn ds(classes: usize, per_class: usize) -> Dataset {
        generate(&SyntheticSpec {
            num_classes: classes,
            samples_per_class: per_class,
            height: 8,
            width: 8,
            noise: 0.1,
            task: Task::SingleLabel,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn single_client_gets_everything() {
        let d = ds(4, 5);
        let plan = partition(&d, 1, PartitionMode::Iid, 3).unwrap();
        assert_eq!(plan.shards, vec![(0..20).collect::<Vec<_>>()]);
    }

    #[test]
    fn iid_shards_are_equal_sized() {
        let d = ds(4, 25);
        let plan = partition(&d, 4, PartitionMode::Iid, 3).unwrap();
        assert!(plan.shards.iter().all(|s| s.len() == 25));
    }

    #[test]
    fn label_skew_one_label_per_client() {
        let d = ds(8, 6);
        let plan = partition(&d, 8, PartitionMode::LabelSkew { labels_per_client: 1 }, 0).unwrap();
        for (i, shard) in plan.shards.iter().enumerate() {
            assert_eq!(shard.len(), 6);
            assert!(shard.iter().all(|&s| d.primary_label(s) == i));
        }
        assert!(partition(&d, 8, PartitionMode::LabelSkew { labels_per_client: 2 }, 0).is_err());
        assert!(partition(&d, 49, PartitionMode::Iid, 0).is_err());
    }

    #[test]
    fn reference_set_is_stratified() {
        let d = ds(4, 10);
        let r = make_reference_set(&d, 10, 1).unwrap();
        let mut counts = [0; 4];
        for i in 0..r.len() {
            counts[r.samples().primary_label(i)] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        assert!(make_reference_set(&d, 41, 1).is_err());
        let whole = make_reference_set(&d, 40, 1).unwrap();
        assert_eq!(whole.samples(), &d);
    }

    #[test]
    fn holdout_split_is_disjoint() {
        let d = generate(&SyntheticSpec { task: Task::MultiLabel, samples_per_class: 6, height: 8, width: 8, ..SyntheticSpec::default() }).unwrap();
        let (train, hold) = split_holdout(&d, 2, 4).unwrap();
        assert_eq!(hold.len(), 16);
        assert_eq!(train.len() + hold.len(), d.len());
        assert!(hold.ids().iter().all(|id| !train.ids().contains(id)));
        assert!(split_holdout(&d, 6, 4).is_err());
    }
}
