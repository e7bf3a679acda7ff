use crate::error::{Error, Result};
use crate::nn::{ComponentId, LayerKind, Network};
use crate::tensor::Tensor;

/// Activation index holding a weighted layer's post-activation: the output
/// of the following ReLU if there is one, otherwise the layer's own output.
pub fn post_activation_index(net: &Network, layer: usize) -> usize {
    match net.layers().get(layer + 1).map(|l| l.kind) {
        Some(LayerKind::Relu) => layer + 2,
        _ => layer + 1,
    }
}

fn check_shapes(sample: &Tensor, baseline: &Tensor, steps: usize) -> Result<()> {
    if sample.batch() != 1 {
        return Err(Error::ShapeMismatch {
            context: "integrated gradients expects a single sample".into(),
            expected: vec![1],
            actual: vec![sample.batch()],
        });
    }
    if baseline.shape() != sample.shape() {
        return Err(Error::ShapeMismatch {
            context: "baseline vs sample".into(),
            expected: sample.shape().to_vec(),
            actual: baseline.shape().to_vec(),
        });
    }
    if steps < 1 {
        return Err(Error::Config("integrated gradients needs at least one step".into()));
    }
    Ok(())
}

/// Interpolation batch `x' + (s/S)(x - x')` for `s = 1..=S`.
fn path(sample: &Tensor, baseline: &Tensor, steps: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(steps * sample.len());
    for s in 1..=steps {
        let t = s as f64 / steps as f64;
        data.extend(sample.data().iter().zip(baseline.data()).map(|(x, b)| b + t * (x - b)));
    }
    let mut shape = sample.shape().to_vec();
    shape[0] = steps;
    Tensor::new(shape, data)
}

/// Gradient of `Σ_t logit_t` for every interpolation point, per activation.
fn path_gradients(net: &Network, batch: &Tensor, targets: &[usize]) -> Result<(Vec<Tensor>, usize)> {
    let trace = net.forward(batch)?;
    let n = batch.batch();
    let c = net.num_classes();
    let mut seed = Tensor::zeros(&[n, c]);
    for s in 0..n {
        for &t in targets {
            if t >= c {
                return Err(Error::Config(format!("target class {t} out of range")));
            }
            seed.data_mut()[s * c + t] = 1.0;
        }
    }
    Ok((net.activation_gradients(&trace, &seed)?, n))
}

/// Input-level attribution `(x - x') ⊙ (1/S) Σ_s ∇f(x' + (s/S)(x - x'))`
/// for `f = Σ_{t ∈ targets} logit_t`.
pub fn integrated_gradients_input(
    net: &Network,
    sample: &Tensor,
    targets: &[usize],
    steps: usize,
    baseline: &Tensor,
) -> Result<Tensor> {
    check_shapes(sample, baseline, steps)?;
    let (grads, n) = path_gradients(net, &path(sample, baseline, steps)?, targets)?;
    let g = &grads[0];
    let per = sample.len();
    let attr = (0..per)
        .map(|k| {
            let mean = (0..n).map(|s| g.data()[s * per + k]).sum::<f64>() / n as f64;
            (sample.data()[k] - baseline.data()[k]) * mean
        })
        .collect();
    Tensor::new(sample.shape().to_vec(), attr)
}

/// Component attribution `|a_c(x) - a_c(x')| · (1/S) Σ_s ∂f/∂a_c` where
/// `a_c` is the unit's mean post-activation (spatial mean for conv channels)
/// and `∂f/∂a_c` is the derivative along a uniform shift of the unit's map.
pub fn integrated_gradients_components(
    net: &Network,
    sample: &Tensor,
    targets: &[usize],
    steps: usize,
    baseline: &Tensor,
) -> Result<Vec<(ComponentId, f64)>> {
    check_shapes(sample, baseline, steps)?;
    let comps = net.components();
    if comps.is_empty() {
        return Ok(Vec::new());
    }
    let ends = Tensor::stack(&[&first_row(sample)?, &first_row(baseline)?])?;
    let end_trace = net.forward(&ends)?;
    let (grads, n) = path_gradients(net, &path(sample, baseline, steps)?, targets)?;
    Ok(comps
        .into_iter()
        .map(|c| {
            let idx = post_activation_index(net, c.layer);
            let units = net.layers()[c.layer].units().expect("weighted");
            let act = end_trace.activation(idx);
            let per = act.row_len() / units;
            let unit_mean = |row: &[f64]| row[c.unit * per..(c.unit + 1) * per].iter().sum::<f64>() / per as f64;
            let delta = unit_mean(act.row(0)) - unit_mean(act.row(1));
            let g = &grads[idx];
            let mean_grad = (0..n)
                .map(|s| g.row(s)[c.unit * per..(c.unit + 1) * per].iter().sum::<f64>())
                .sum::<f64>()
                / n as f64;
            (c, (delta * mean_grad).abs())
        })
        .collect())
}

fn first_row(t: &Tensor) -> Result<Tensor> {
    Tensor::new(t.shape()[1..].to_vec(), t.row(0).to_vec())
}
