use std::fmt;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom};
use super::layer::{ArchConfig, LayerKind, LayerSpec};
use super::params::ParamVector;
use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::tensor::Tensor;

/// A prunable unit: one output channel of a Conv2d layer or one output
/// neuron of a Dense layer. Orders layer-major, then by unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentId {
    pub layer: usize,
    pub unit: usize,
}

impl ComponentId {
    pub fn new(layer: usize, unit: usize) -> Self {
        Self { layer, unit }
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer, self.unit)
    }
}

impl std::str::FromStr for ComponentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidComponent(format!("cannot parse `{s}` as layer:unit"));
        let (l, u) = s.split_once(':').ok_or_else(bad)?;
        Ok(Self {
            layer: l.parse().map_err(|_| bad())?,
            unit: u.parse().map_err(|_| bad())?,
        })
    }
}

/// Activations recorded by [`Network::forward`]. `activations[0]` is the
/// input batch and `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub(crate) activations: Vec<Tensor>,
    /// Winning input index per output for each MaxPool2d layer.
    pub(crate) argmax: Vec<Option<Vec<usize>>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("trace holds at least the input")
    }

    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    /// Input to layer `i` (equivalently output of layer `i - 1`).
    pub fn activation(&self, i: usize) -> &Tensor {
        &self.activations[i]
    }

    pub fn activations(&self) -> &[Tensor] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len() - 1
    }
}

/// Layer stack plus parameters. Immutable once built; parameter updates
/// produce a new value through [`Network::with_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: ArchConfig,
    shapes: Vec<Vec<usize>>,
    params: ParamVector,
    seed: u64,
}

impl Network {
    /// Validates `arch` and initializes parameters: weights from
    /// `U(-a, a)` with `a = sqrt(6 / fan_in)`, biases zero. The classifier
    /// head is forced non-prunable.
    pub fn build(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let (arch, shapes, mut params) = Self::prepare(arch)?;
        let mut rng = rng::rng_from_seed(rng::derive_seed(seed, &[purpose::INIT]));
        for (i, layer) in arch.layers.iter().enumerate() {
            let Some(fan_in) = layer.fan_in() else { continue };
            let a = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new(-a, a).expect("finite bound");
            let (w, _) = params.layer_mut(i);
            for v in w.iter_mut() {
                *v = dist.sample(&mut rng);
            }
        }
        Ok(Self {
            arch,
            shapes,
            params,
            seed,
        })
    }

    /// Builds a network around existing parameters.
    pub fn from_params(arch: &ArchConfig, params: ParamVector, seed: u64) -> Result<Self> {
        let (arch, shapes, zero) = Self::prepare(arch)?;
        if zero.layouts() != params.layouts() {
            return Err(Error::LengthMismatch {
                context: "parameter layout for architecture".into(),
                expected: zero.len(),
                actual: params.len(),
            });
        }
        Ok(Self {
            arch,
            shapes,
            params,
            seed,
        })
    }

    fn prepare(arch: &ArchConfig) -> Result<(ArchConfig, Vec<Vec<usize>>, ParamVector)> {
        let shapes = arch.validate()?;
        let mut arch = arch.clone();
        if let Some(head) = arch.layers.last_mut() {
            head.prunable = false;
        }
        let counts: Vec<_> = arch.layers.iter().map(LayerSpec::param_counts).collect();
        let (layouts, len) = ParamVector::layouts_for(&counts);
        let params = ParamVector::from_parts(vec![0.0; len], layouts)?;
        Ok((arch, shapes, params))
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.arch.layers
    }

    pub fn num_layers(&self) -> usize {
        self.arch.layers.len()
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.arch.input_shape
    }

    /// Per-sample shape of activation `i` (0 = input).
    pub fn shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        let mut next = self.clone();
        next.set_params(params)?;
        Ok(next)
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.layouts() != self.params.layouts() {
            return Err(Error::LengthMismatch {
                context: "replacement parameters".into(),
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    /// Indices of weighted layers, in order.
    pub fn weighted_layers(&self) -> Vec<usize> {
        (0..self.num_layers())
            .filter(|&i| self.arch.layers[i].is_weighted())
            .collect()
    }

    pub fn is_prunable(&self, layer: usize) -> bool {
        self.arch
            .layers
            .get(layer)
            .is_some_and(|l| l.is_weighted() && l.prunable)
    }

    pub(crate) fn conv_geom(&self, layer: usize) -> ConvGeom {
        let LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } = self.arch.layers[layer].kind
        else {
            panic!("layer {layer} is not Conv2d");
        };
        let (i, o) = (&self.shapes[layer], &self.shapes[layer + 1]);
        ConvGeom {
            cin: in_channels,
            cout: out_channels,
            h: i[1],
            w: i[2],
            k: kernel,
            stride,
            pad: padding,
            oh: o[1],
            ow: o[2],
        }
    }

    pub(crate) fn batch_shape(&self, i: usize, n: usize) -> Vec<usize> {
        let mut s = vec![n];
        s.extend_from_slice(&self.shapes[i]);
        s
    }

    pub fn forward(&self, batch: &Tensor) -> Result<ForwardTrace> {
        let n = batch.batch();
        let expected = self.batch_shape(0, n);
        if batch.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "network input".into(),
                expected,
                actual: batch.shape().to_vec(),
            });
        }
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        let mut argmax = vec![None; self.num_layers()];
        activations.push(batch.clone());
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let x = activations[i].data();
            let out = match layer.kind {
                LayerKind::Dense {
                    in_features,
                    out_features,
                } => kernels::dense_forward(
                    x,
                    n,
                    in_features,
                    out_features,
                    self.params.weights(i),
                    self.params.biases(i),
                ),
                LayerKind::Conv2d { .. } => kernels::conv_forward(
                    x,
                    n,
                    &self.conv_geom(i),
                    self.params.weights(i),
                    self.params.biases(i),
                ),
                LayerKind::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                LayerKind::MaxPool2d { kernel, stride } => {
                    let (s, o) = (&self.shapes[i], &self.shapes[i + 1]);
                    let (out, arg) =
                        kernels::maxpool_forward(x, n, s[0], s[1], s[2], kernel, stride, o[1], o[2]);
                    argmax[i] = Some(arg);
                    out
                }
                LayerKind::GlobalAvgPool => {
                    let s = &self.shapes[i];
                    kernels::gap_forward(x, n, s[0], s[1] * s[2])
                }
                LayerKind::Flatten => x.to_vec(),
            };
            activations.push(Tensor::new(self.batch_shape(i + 1, n), out)?);
        }
        Ok(ForwardTrace {
            activations,
            argmax,
        })
    }

    /// Logits only.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(batch)?.activations.pop().expect("non-empty"))
    }

    /// One entry per output unit of each prunable weighted layer, layer-major.
    pub fn components(&self) -> Vec<ComponentId> {
        self.arch
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.prunable && l.is_weighted())
            .flat_map(|(i, l)| (0..l.units().unwrap_or(0)).map(move |u| ComponentId::new(i, u)))
            .collect()
    }

    /// Flat parameter indices owned by `c`: its weight row (Dense) or filter
    /// (Conv2d) followed by its bias entry.
    pub fn component_param_slice(&self, c: ComponentId) -> Result<Vec<usize>> {
        let (w, b) = self.component_ranges(c)?;
        Ok(w.chain(std::iter::once(b)).collect())
    }

    /// Weight range and bias index of a component (prunable or not).
    pub fn component_ranges(&self, c: ComponentId) -> Result<(std::ops::Range<usize>, usize)> {
        let layer = self
            .arch
            .layers
            .get(c.layer)
            .ok_or_else(|| Error::InvalidComponent(format!("{c}: no such layer")))?;
        let (Some(units), Some(fan_in)) = (layer.units(), layer.fan_in()) else {
            return Err(Error::InvalidComponent(format!("{c}: layer has no parameters")));
        };
        if c.unit >= units {
            return Err(Error::InvalidComponent(format!("{c}: layer has {units} units")));
        }
        let l = self.params.layout(c.layer).expect("weighted layer has a layout");
        let start = l.weight_offset + c.unit * fan_in;
        Ok((start..start + fan_in, l.bias_offset + c.unit))
    }
}
