use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer kinds supported by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLayer", into = "RawLayer")]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Only meaningful for weighted layers. The classifier head is never
    /// prunable regardless of this flag.
    pub prunable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawKind {
    Dense,
    Conv2d,
    Relu,
    MaxPool2d,
    GlobalAvgPool,
    Flatten,
}

/// Flat JSON form of a layer: `{"type": "conv2d", "in_channels": 1, ...}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    #[serde(rename = "type")]
    kind: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prunable: Option<bool>,
}

impl TryFrom<RawLayer> for LayerSpec {
    type Error = String;

    fn try_from(raw: RawLayer) -> std::result::Result<Self, String> {
        fn need(v: Option<usize>, field: &str, kind: &str) -> std::result::Result<usize, String> {
            v.ok_or_else(|| format!("{kind} layer requires `{field}`"))
        }
        let reject = |present: bool, field: &str, kind: &str| {
            if present {
                Err(format!("{kind} layer does not accept `{field}`"))
            } else {
                Ok(())
            }
        };
        let kind = match raw.kind {
            RawKind::Dense => {
                for (p, f) in [
                    (raw.in_channels.is_some(), "in_channels"),
                    (raw.out_channels.is_some(), "out_channels"),
                    (raw.kernel.is_some(), "kernel"),
                    (raw.stride.is_some(), "stride"),
                    (raw.padding.is_some(), "padding"),
                ] {
                    reject(p, f, "dense")?;
                }
                LayerKind::Dense {
                    in_features: need(raw.in_features, "in_features", "dense")?,
                    out_features: need(raw.out_features, "out_features", "dense")?,
                }
            }
            RawKind::Conv2d => {
                reject(raw.in_features.is_some(), "in_features", "conv2d")?;
                reject(raw.out_features.is_some(), "out_features", "conv2d")?;
                LayerKind::Conv2d {
                    in_channels: need(raw.in_channels, "in_channels", "conv2d")?,
                    out_channels: need(raw.out_channels, "out_channels", "conv2d")?,
                    kernel: need(raw.kernel, "kernel", "conv2d")?,
                    stride: raw.stride.unwrap_or(1),
                    padding: raw.padding.unwrap_or(0),
                }
            }
            RawKind::MaxPool2d => {
                let kernel = need(raw.kernel, "kernel", "max_pool2d")?;
                LayerKind::MaxPool2d {
                    kernel,
                    stride: raw.stride.unwrap_or(kernel),
                }
            }
            RawKind::Relu => LayerKind::Relu,
            RawKind::GlobalAvgPool => LayerKind::GlobalAvgPool,
            RawKind::Flatten => LayerKind::Flatten,
        };
        if !matches!(raw.kind, RawKind::Dense | RawKind::Conv2d | RawKind::MaxPool2d) {
            let any = raw.in_features.is_some()
                || raw.out_features.is_some()
                || raw.in_channels.is_some()
                || raw.out_channels.is_some()
                || raw.kernel.is_some()
                || raw.stride.is_some()
                || raw.padding.is_some();
            if any {
                return Err(format!("{:?} layer takes no dimensions", raw.kind));
            }
        }
        let weighted = matches!(kind, LayerKind::Dense { .. } | LayerKind::Conv2d { .. });
        if !weighted && raw.prunable == Some(true) {
            return Err(format!("{:?} layer has no parameters and cannot be prunable", raw.kind));
        }
        Ok(LayerSpec {
            kind,
            prunable: weighted && raw.prunable.unwrap_or(true),
        })
    }
}

impl From<LayerSpec> for RawLayer {
    fn from(spec: LayerSpec) -> Self {
        let mut raw = RawLayer {
            kind: RawKind::Relu,
            in_features: None,
            out_features: None,
            in_channels: None,
            out_channels: None,
            kernel: None,
            stride: None,
            padding: None,
            prunable: None,
        };
        match spec.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => {
                raw.kind = RawKind::Dense;
                raw.in_features = Some(in_features);
                raw.out_features = Some(out_features);
                raw.prunable = Some(spec.prunable);
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                raw.kind = RawKind::Conv2d;
                raw.in_channels = Some(in_channels);
                raw.out_channels = Some(out_channels);
                raw.kernel = Some(kernel);
                raw.stride = Some(stride);
                raw.padding = Some(padding);
                raw.prunable = Some(spec.prunable);
            }
            LayerKind::Relu => raw.kind = RawKind::Relu,
            LayerKind::MaxPool2d { kernel, stride } => {
                raw.kind = RawKind::MaxPool2d;
                raw.kernel = Some(kernel);
                raw.stride = Some(stride);
            }
            LayerKind::GlobalAvgPool => raw.kind = RawKind::GlobalAvgPool,
            LayerKind::Flatten => raw.kind = RawKind::Flatten,
        }
        raw
    }
}

impl LayerSpec {
    pub fn dense(in_features: usize, out_features: usize) -> Self {
        Self {
            kind: LayerKind::Dense {
                in_features,
                out_features,
            },
            prunable: true,
        }
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            kind: LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride: 1,
                padding: 0,
            },
            prunable: true,
        }
    }

    pub fn conv_padded(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            kind: LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            },
            prunable: true,
        }
    }

    pub fn relu() -> Self {
        Self::plain(LayerKind::Relu)
    }

    pub fn max_pool(kernel: usize) -> Self {
        Self::plain(LayerKind::MaxPool2d {
            kernel,
            stride: kernel,
        })
    }

    pub fn global_avg_pool() -> Self {
        Self::plain(LayerKind::GlobalAvgPool)
    }

    pub fn flatten() -> Self {
        Self::plain(LayerKind::Flatten)
    }

    fn plain(kind: LayerKind) -> Self {
        Self {
            kind,
            prunable: false,
        }
    }

    pub fn with_prunable(mut self, prunable: bool) -> Self {
        self.prunable = prunable;
        self
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }

    /// Output units (components) of a weighted layer.
    pub fn units(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Dense { out_features, .. } => Some(out_features),
            LayerKind::Conv2d { out_channels, .. } => Some(out_channels),
            _ => None,
        }
    }

    /// (weight count, bias count) for weighted layers.
    pub fn param_counts(&self) -> Option<(usize, usize)> {
        match self.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => Some((in_features * out_features, out_features)),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((out_channels * in_channels * kernel * kernel, out_channels)),
            _ => None,
        }
    }

    /// Number of inputs feeding one output unit.
    pub fn fan_in(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Dense { in_features, .. } => Some(in_features),
            LayerKind::Conv2d {
                in_channels,
                kernel,
                ..
            } => Some(in_channels * kernel * kernel),
            _ => None,
        }
    }

    pub fn name(&self, index: usize) -> String {
        let kind = match self.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => format!("Dense({in_features}->{out_features})"),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => format!("Conv2d({in_channels}->{out_channels}, k={kernel})"),
            LayerKind::Relu => "ReLU".into(),
            LayerKind::MaxPool2d { kernel, .. } => format!("MaxPool2d(k={kernel})"),
            LayerKind::GlobalAvgPool => "GlobalAvgPool".into(),
            LayerKind::Flatten => "Flatten".into(),
        };
        format!("#{index} {kind}")
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => match input {
                [f] if *f == in_features => Ok(vec![out_features]),
                _ => Err(format!("expects [{in_features}] features")),
            },
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if kernel == 0 || stride == 0 {
                    return Err("kernel and stride must be >= 1".into());
                }
                match input {
                    [c, h, w] if *c == in_channels => {
                        let (hp, wp) = (h + 2 * padding, w + 2 * padding);
                        if hp < kernel || wp < kernel {
                            return Err(format!("kernel {kernel} exceeds padded input {hp}x{wp}"));
                        }
                        Ok(vec![out_channels, (hp - kernel) / stride + 1, (wp - kernel) / stride + 1])
                    }
                    _ => Err(format!("expects [{in_channels}, H, W] input")),
                }
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::MaxPool2d { kernel, stride } => {
                if kernel == 0 || stride == 0 {
                    return Err("kernel and stride must be >= 1".into());
                }
                match input {
                    [c, h, w] if *h >= kernel && *w >= kernel => {
                        Ok(vec![*c, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
                    }
                    _ => Err(format!("expects [C, H, W] input with H, W >= {kernel}")),
                }
            }
            LayerKind::GlobalAvgPool => match input {
                [c, _, _] => Ok(vec![*c]),
                _ => Err("expects [C, H, W] input".into()),
            },
            LayerKind::Flatten => match input {
                [c, h, w] => Ok(vec![c * h * w]),
                [f] => Ok(vec![*f]),
                _ => Err("expects [C, H, W] or [F] input".into()),
            },
        }
    }
}

/// Architecture description: per-sample input shape plus ordered layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    /// `[C, H, W]` for image inputs or `[F]` for feature vectors.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl ArchConfig {
    /// Desk-scale convolutional classifier used by the experiment defaults.
    pub fn desk_cnn(in_channels: usize, height: usize, width: usize, num_classes: usize) -> Self {
        let (h, w) = (height / 4, width / 4);
        Self {
            input_shape: vec![in_channels, height, width],
            layers: vec![
                LayerSpec::conv_padded(in_channels, 8, 3, 1, 1),
                LayerSpec::relu(),
                LayerSpec::max_pool(2),
                LayerSpec::conv_padded(8, 16, 3, 1, 1),
                LayerSpec::relu(),
                LayerSpec::max_pool(2),
                LayerSpec::flatten(),
                LayerSpec::dense(16 * h * w, 32),
                LayerSpec::relu(),
                LayerSpec::dense(32, num_classes),
            ],
            num_classes,
        }
    }

    /// Checks layer compatibility and returns the per-layer output shapes.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        if self.num_classes < 2 {
            return Err(Error::Architecture(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.input_shape.is_empty()
            || self.input_shape.len() > 3
            || self.input_shape.iter().any(|&d| d == 0)
        {
            return Err(Error::Architecture(format!(
                "input shape must be [F] or [C, H, W] with positive dims, got {:?}",
                self.input_shape
            )));
        }
        match self.layers.last() {
            Some(LayerSpec {
                kind: LayerKind::Dense { out_features, .. },
                ..
            }) if *out_features == self.num_classes => {}
            _ => {
                return Err(Error::Architecture(format!(
                    "last layer must be Dense with out_features == num_classes ({})",
                    self.num_classes
                )))
            }
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let input = shapes.last().expect("non-empty");
            let out = layer.output_shape(input).map_err(|reason| {
                let upstream = if i == 0 {
                    "input".to_string()
                } else {
                    self.layers[i - 1].name(i - 1)
                };
                Error::IncompatibleLayers {
                    upstream,
                    downstream: layer.name(i),
                    produced: input.clone(),
                    reason,
                }
            })?;
            shapes.push(out);
        }
        Ok(shapes)
    }
}
