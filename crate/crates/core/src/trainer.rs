//! Local client training: losses, Adam and the epoch loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Network, ParamVector};
use crate::pruning::PruneMask;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Row-wise softmax + cross-entropy (single-label).
    CategoricalCe,
    /// Element-wise sigmoid + binary cross-entropy (multi-label).
    BinaryCe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss: LossKind,
    /// Re-apply the mask after every optimizer step instead of only once
    /// after the local epochs.
    #[serde(default)]
    pub freeze_masked: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            local_epochs: 3,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            loss: LossKind::BinaryCe,
            freeze_masked: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.local_epochs < 1 {
            return bad("local_epochs must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be > 0");
        }
        Ok(())
    }
}

/// Mean loss over the batch and its gradient with respect to the logits.
/// `labels` is one-hot or multi-hot with the same shape as `logits`.
pub fn loss_and_grad(logits: &Tensor, labels: &Tensor, kind: LossKind) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 || logits.shape() != labels.shape() {
        return Err(Error::ShapeMismatch {
            context: "labels vs logits".into(),
            expected: logits.shape().to_vec(),
            actual: labels.shape().to_vec(),
        });
    }
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    let mut grad = vec![0.0; n * c];
    let mut total = 0.0;
    match kind {
        LossKind::CategoricalCe => {
            for s in 0..n {
                let z = logits.row(s);
                let y = labels.row(s);
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                let ysum: f64 = y.iter().sum();
                for j in 0..c {
                    let logp = z[j] - lse;
                    total -= y[j] * logp;
                    grad[s * c + j] = (logp.exp() * ysum - y[j]) / n as f64;
                }
            }
            total /= n as f64;
        }
        LossKind::BinaryCe => {
            let m = (n * c) as f64;
            for (i, (&z, &y)) in logits.data().iter().zip(labels.data()).enumerate() {
                total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                grad[i] = (sigmoid(z) - y) / m;
            }
            total /= m;
        }
    }
    Ok((total, Tensor::new(logits.shape().to_vec(), grad)?))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// In-place Adam update with bias correction and decoupled weight decay.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                context: "adam step".into(),
                expected: self.m.len(),
                actual: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let decay = 1.0 - cfg.lr * cfg.weight_decay;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p * decay - cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
        Ok(())
    }
}

pub fn adam_step(
    params: &ParamVector,
    grads: &ParamVector,
    state: &OptimizerState,
    cfg: &TrainConfig,
) -> Result<(ParamVector, OptimizerState)> {
    let mut next = params.clone();
    let mut state = state.clone();
    state.update(next.data_mut(), grads.data(), cfg)?;
    Ok((next, state))
}

/// Result of one client's local training.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    /// Masked parameters after the final epoch.
    pub params: ParamVector,
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl LocalOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().expect("at least one epoch")
    }
}

/// Runs `cfg.local_epochs` epochs of shuffled mini-batch Adam starting
/// from `net`'s parameters with a fresh optimizer state, then multiplies
/// the result by the mask.
pub fn local_training(
    net: &Network,
    mask: &PruneMask,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LocalOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("client has no samples".into()));
    }
    let keep = mask.param_mask();
    if keep.len() != net.params().len() {
        return Err(Error::LengthMismatch {
            context: "mask vs parameters".into(),
            expected: net.params().len(),
            actual: keep.len(),
        });
    }
    let mut rng = rng::rng_from_seed(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut work = net.clone();
    let mut params = net.params().clone();
    let mut state = OptimizerState::new(params.len());
    let mut epoch_losses = Vec::with_capacity(cfg.local_epochs);
    for epoch in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = data.batch(idx)?;
            let trace = work.forward(&x)?;
            let (loss, dlogits) = loss_and_grad(trace.logits(), &y, cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let grads = work.backward(&trace, &dlogits)?;
            state.update(params.data_mut(), grads.data(), cfg)?;
            if cfg.freeze_masked {
                apply_keep(params.data_mut(), keep);
            }
            work.set_params(params.clone())?;
            sum += loss;
            batches += 1;
        }
        epoch_losses.push(sum / batches as f64);
    }
    apply_keep(params.data_mut(), keep);
    Ok(LocalOutcome {
        params,
        epoch_losses,
    })
}

fn apply_keep(params: &mut [f64], keep: &[bool]) {
    for (p, &k) in params.iter_mut().zip(keep) {
        if !k {
            *p = 0.0;
        }
    }
}

/// Mean loss of `net` over a whole dataset, evaluated in chunks.
pub fn dataset_loss(net: &Network, data: &Dataset, kind: LossKind) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(256) {
        let (x, y) = data.batch(chunk)?;
        let (loss, _) = loss_and_grad(&net.predict(&x)?, &y, kind)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}
