use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location of one weighted layer's parameters inside a [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub weight_offset: usize,
    pub weight_len: usize,
    pub bias_offset: usize,
    pub bias_len: usize,
}

impl ParamLayout {
    pub fn weights(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.weight_offset + self.weight_len
    }

    pub fn biases(&self) -> std::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.bias_len
    }
}

/// Unflattened parameters of a single weighted layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Flat parameter buffer with per-layer offsets. Parameterless layers have
/// no entry in the layout (`None`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    data: Vec<f64>,
    layouts: Vec<Option<ParamLayout>>,
}

impl ParamVector {
    /// Builds layouts for `(weight_len, bias_len)` per layer: each weighted
    /// layer's weights followed by its biases, layers in order.
    pub fn layouts_for(counts: &[Option<(usize, usize)>]) -> (Vec<Option<ParamLayout>>, usize) {
        let mut offset = 0;
        let layouts = counts
            .iter()
            .map(|c| {
                c.map(|(w, b)| {
                    let layout = ParamLayout {
                        weight_offset: offset,
                        weight_len: w,
                        bias_offset: offset + w,
                        bias_len: b,
                    };
                    offset += w + b;
                    layout
                })
            })
            .collect();
        (layouts, offset)
    }

    pub fn from_parts(data: Vec<f64>, layouts: Vec<Option<ParamLayout>>) -> Result<Self> {
        let mut expected = 0;
        for l in layouts.iter().flatten() {
            if l.weight_offset != expected || l.bias_offset != expected + l.weight_len {
                return Err(Error::Checkpoint(
                    "parameter layout has gaps or overlaps".into(),
                ));
            }
            expected += l.weight_len + l.bias_len;
        }
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                context: "parameter vector".into(),
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { data, layouts })
    }

    pub fn zeros_like(other: &ParamVector) -> Self {
        Self {
            data: vec![0.0; other.data.len()],
            layouts: other.layouts.clone(),
        }
    }

    /// Same layout, new data.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::LengthMismatch {
                context: "parameter vector".into(),
                expected: self.data.len(),
                actual: data.len(),
            });
        }
        Ok(Self {
            data,
            layouts: self.layouts.clone(),
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Serialized size of the parameters in bytes (8 bytes per `f64`).
    pub fn byte_size(&self) -> u64 {
        8 * self.data.len() as u64
    }

    pub fn layouts(&self) -> &[Option<ParamLayout>] {
        &self.layouts
    }

    pub fn layout(&self, layer: usize) -> Option<&ParamLayout> {
        self.layouts.get(layer).and_then(Option::as_ref)
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let l = self.layout(layer).expect("weighted layer");
        &self.data[l.weights()]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let l = self.layout(layer).expect("weighted layer");
        &self.data[l.biases()]
    }

    /// Mutable (weights, biases) of one layer.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let l = *self.layout(layer).expect("weighted layer");
        let (w, b) = self.data[l.weight_offset..l.bias_offset + l.bias_len].split_at_mut(l.weight_len);
        (w, b)
    }

    pub fn unflatten(&self) -> Vec<Option<LayerParams>> {
        self.layouts
            .iter()
            .map(|l| {
                l.map(|l| LayerParams {
                    weights: self.data[l.weights()].to_vec(),
                    biases: self.data[l.biases()].to_vec(),
                })
            })
            .collect()
    }

    pub fn flatten(parts: &[Option<LayerParams>]) -> Self {
        let counts: Vec<_> = parts
            .iter()
            .map(|p| p.as_ref().map(|p| (p.weights.len(), p.biases.len())))
            .collect();
        let (layouts, len) = Self::layouts_for(&counts);
        let mut data = Vec::with_capacity(len);
        for p in parts.iter().flatten() {
            data.extend_from_slice(&p.weights);
            data.extend_from_slice(&p.biases);
        }
        Self { data, layouts }
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layouts_partition_the_buffer() {
        let (layouts, len) = ParamVector::layouts_for(&[Some((12, 3)), None, Some((6, 2))]);
        assert_eq!(len, 23);
        assert_eq!(layouts[0].unwrap().biases(), 12..15);
        assert!(layouts[1].is_none());
        assert_eq!(layouts[2].unwrap().weights(), 15..21);
        assert!(ParamVector::from_parts(vec![0.0; 22], layouts).is_err());
    }

    proptest! {
        #[test]
        fn flatten_unflatten_roundtrip_is_bitwise(
            counts in prop::collection::vec(prop::option::of((1usize..20, 1usize..5)), 1..6),
            seed in any::<u64>(),
        ) {
            let (layouts, len) = ParamVector::layouts_for(&counts);
            let data: Vec<f64> = (0..len)
                .map(|i| f64::from_bits(crate::rng::mix64(seed ^ i as u64) & 0x7FEF_FFFF_FFFF_FFFF))
                .collect();
            let v = ParamVector::from_parts(data, layouts).unwrap();
            let back = ParamVector::flatten(&v.unflatten());
            prop_assert_eq!(back.layouts(), v.layouts());
            let same = back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
