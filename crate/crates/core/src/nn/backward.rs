use super::kernels;
use super::layer::LayerKind;
use super::network::{ForwardTrace, Network};
use super::params::ParamVector;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameter gradients plus the gradient with respect to every activation
/// in the trace (`activations[i]` pairs with `trace.activation(i)`).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamVector,
    pub activations: Vec<Tensor>,
}

impl Network {
    /// Gradient of the loss with respect to every parameter, given the
    /// gradient with respect to the logits.
    pub fn backward(&self, trace: &ForwardTrace, loss_grad: &Tensor) -> Result<ParamVector> {
        Ok(self.backward_full(trace, loss_grad)?.params)
    }

    pub fn backward_full(&self, trace: &ForwardTrace, loss_grad: &Tensor) -> Result<Gradients> {
        self.backward_inner(trace, loss_grad, true)
    }

    /// Activation gradients only; the returned parameter gradient is zero.
    pub(crate) fn activation_gradients(&self, trace: &ForwardTrace, loss_grad: &Tensor) -> Result<Vec<Tensor>> {
        Ok(self.backward_inner(trace, loss_grad, false)?.activations)
    }

    fn backward_inner(&self, trace: &ForwardTrace, loss_grad: &Tensor, with_params: bool) -> Result<Gradients> {
        if trace.num_layers() != self.num_layers() {
            return Err(Error::TraceMismatch(format!(
                "trace has {} layers, network has {}",
                trace.num_layers(),
                self.num_layers()
            )));
        }
        if loss_grad.shape() != trace.logits().shape() {
            return Err(Error::ShapeMismatch {
                context: "loss gradient vs logits".into(),
                expected: trace.logits().shape().to_vec(),
                actual: loss_grad.shape().to_vec(),
            });
        }
        let n = trace.input().batch();
        let mut grads = ParamVector::zeros_like(self.params());
        let mut act_grads = vec![None; self.num_layers() + 1];
        let mut g = loss_grad.data().to_vec();
        for (i, layer) in self.layers().iter().enumerate().rev() {
            let x = trace.activation(i).data();
            let gin = match layer.kind {
                LayerKind::Dense {
                    in_features,
                    out_features,
                } => {
                    if with_params {
                        let (gw, gb) = grads.layer_mut(i);
                        kernels::dense_backward_params(x, &g, n, in_features, out_features, gw, gb);
                    }
                    kernels::dense_backward_input(&g, n, in_features, out_features, self.params().weights(i))
                }
                LayerKind::Conv2d { .. } => {
                    let geo = self.conv_geom(i);
                    if with_params {
                        let (gw, gb) = grads.layer_mut(i);
                        kernels::conv_backward_params(x, &g, n, &geo, gw, gb);
                    }
                    kernels::conv_backward_input(&g, n, &geo, self.params().weights(i))
                }
                LayerKind::Relu => g
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect(),
                LayerKind::MaxPool2d { .. } => {
                    let arg = trace.argmax[i]
                        .as_ref()
                        .ok_or_else(|| Error::TraceMismatch(format!("layer {i} has no pooling record")))?;
                    kernels::scatter(&g, arg, x.len())
                }
                LayerKind::GlobalAvgPool => {
                    let s = self.shape(i);
                    kernels::gap_backward(&g, s[1] * s[2])
                }
                LayerKind::Flatten => g.clone(),
            };
            act_grads[i + 1] = Some(Tensor::new(self.batch_shape(i + 1, n), std::mem::replace(&mut g, gin))?);
        }
        act_grads[0] = Some(Tensor::new(self.batch_shape(0, n), g)?);
        Ok(Gradients {
            params: grads,
            activations: act_grads.into_iter().map(|t| t.expect("filled")).collect(),
        })
    }
}
