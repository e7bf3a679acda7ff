use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::kernels;
use crate::nn::{ForwardTrace, LayerKind, Network};
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_GAMMA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrpRule {
    /// Stabilizer `ε = factor · mean|z|` over the sample's denominators.
    Epsilon(f64),
    /// Positive-weight boost `w + γ·max(w, 0)`.
    Gamma(f64),
}

/// One rule per weighted layer (`None` for parameterless layers).
#[derive(Debug, Clone, PartialEq)]
pub struct LrpRuleAssignment {
    rules: Vec<Option<LrpRule>>,
}

impl LrpRuleAssignment {
    /// Splits the weighted layers into four contiguous, near-equal parts:
    /// epsilon, gamma, gamma, epsilon. The last weighted layer always falls
    /// in the final (epsilon) part.
    pub fn four_part(net: &Network, epsilon: f64, gamma: f64) -> Self {
        let weighted = net.weighted_layers();
        let n = weighted.len();
        let mut rules = vec![None; net.num_layers()];
        for (i, &l) in weighted.iter().enumerate() {
            let part = if i + 1 == n { 3 } else { (i * 4 / n).min(3) };
            rules[l] = Some(match part {
                1 | 2 => LrpRule::Gamma(gamma),
                _ => LrpRule::Epsilon(epsilon),
            });
        }
        Self { rules }
    }

    pub fn default_for(net: &Network) -> Self {
        Self::four_part(net, DEFAULT_EPSILON, DEFAULT_GAMMA)
    }

    pub fn uniform(net: &Network, rule: LrpRule) -> Self {
        Self {
            rules: net
                .layers()
                .iter()
                .map(|l| l.is_weighted().then_some(rule))
                .collect(),
        }
    }

    pub fn rule(&self, layer: usize) -> Option<LrpRule> {
        self.rules.get(layer).copied().flatten()
    }
}

/// Propagates `output_relevance` from the logits back to the input.
/// Returns one relevance tensor per activation in the trace (index 0 is the
/// input, the last entry is `output_relevance` itself).
///
/// Weighted layers redistribute `R_k = a_k Σ_j w'_kj R_j / (z_j ± ε)` with
/// `z_j = Σ_k a_k w'_kj + b'_j`; ReLU and Flatten pass relevance through,
/// max pooling routes it to the winning input and global average pooling
/// spreads it evenly over the spatial plane.
pub fn lrp_backward(
    net: &Network,
    trace: &ForwardTrace,
    output_relevance: &Tensor,
    rules: &LrpRuleAssignment,
) -> Result<Vec<Tensor>> {
    if output_relevance.shape() != trace.logits().shape() {
        return Err(Error::ShapeMismatch {
            context: "output relevance vs logits".into(),
            expected: trace.logits().shape().to_vec(),
            actual: output_relevance.shape().to_vec(),
        });
    }
    if trace.num_layers() != net.num_layers() {
        return Err(Error::TraceMismatch(format!(
            "trace has {} layers, network has {}",
            trace.num_layers(),
            net.num_layers()
        )));
    }
    let n = trace.input().batch();
    let mut out = vec![output_relevance.clone()];
    let mut r = output_relevance.data().to_vec();
    for (i, layer) in net.layers().iter().enumerate().rev() {
        let a = trace.activation(i).data();
        let r_in = match layer.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => {
                let rule = rules.rule(i).ok_or(Error::TraceMismatch(format!("no LRP rule for layer {i}")))?;
                let (w, b) = modified(net.params().weights(i), net.params().biases(i), rule);
                let z = kernels::dense_forward(a, n, in_features, out_features, &w, &b);
                let s = stabilized_ratio(&r, &z, n, rule);
                let c = kernels::dense_backward_input(&s, n, in_features, out_features, &w);
                a.iter().zip(c).map(|(x, c)| x * c).collect()
            }
            LayerKind::Conv2d { .. } => {
                let rule = rules.rule(i).ok_or(Error::TraceMismatch(format!("no LRP rule for layer {i}")))?;
                let geo = net.conv_geom(i);
                let (w, b) = modified(net.params().weights(i), net.params().biases(i), rule);
                let z = kernels::conv_forward(a, n, &geo, &w, &b);
                let s = stabilized_ratio(&r, &z, n, rule);
                let c = kernels::conv_backward_input(&s, n, &geo, &w);
                a.iter().zip(c).map(|(x, c)| x * c).collect()
            }
            LayerKind::Relu | LayerKind::Flatten => r.clone(),
            LayerKind::MaxPool2d { .. } => {
                let arg = trace.argmax[i]
                    .as_ref()
                    .ok_or_else(|| Error::TraceMismatch(format!("layer {i} has no pooling record")))?;
                kernels::scatter(&r, arg, a.len())
            }
            LayerKind::GlobalAvgPool => {
                let s = net.shape(i);
                kernels::gap_backward(&r, s[1] * s[2])
            }
        };
        if r_in.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRelevance { layer: i });
        }
        out.push(Tensor::new(trace.activation(i).shape().to_vec(), r_in.clone())?);
        r = r_in;
    }
    out.reverse();
    Ok(out)
}

fn modified(w: &[f64], b: &[f64], rule: LrpRule) -> (Vec<f64>, Vec<f64>) {
    match rule {
        LrpRule::Epsilon(_) => (w.to_vec(), b.to_vec()),
        LrpRule::Gamma(g) => {
            let f = |v: &f64| v + g * v.max(0.0);
            (w.iter().map(f).collect(), b.iter().map(f).collect())
        }
    }
}

/// `R_j / (z_j + ε·sign(z_j))` per sample, with `sign(0) = +1` and an exact
/// zero denominator mapped to zero.
fn stabilized_ratio(r: &[f64], z: &[f64], n: usize, rule: LrpRule) -> Vec<f64> {
    let per = z.len() / n;
    let mut s = vec![0.0; z.len()];
    for b in 0..n {
        let zs = &z[b * per..(b + 1) * per];
        let eps = match rule {
            LrpRule::Epsilon(f) if f > 0.0 => f * zs.iter().map(|v| v.abs()).sum::<f64>() / per as f64,
            _ => 0.0,
        };
        for j in 0..per {
            let zj = zs[j];
            let den = if zj >= 0.0 { zj + eps } else { zj - eps };
            s[b * per + j] = if den == 0.0 { 0.0 } else { r[b * per + j] / den };
        }
    }
    s
}
