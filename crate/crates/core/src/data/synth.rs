use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{Dataset, Task};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub task: Task,
    pub num_classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub samples_per_class: usize,
    /// Standard deviation of the additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            task: Task::MultiLabel,
            num_classes: 8,
            channels: 1,
            height: 16,
            width: 16,
            samples_per_class: 200,
            noise: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Config("noise must be finite and >= 0".into()));
        }
        if self.channels == 0 || self.height < 2 || self.width < 2 {
            return Err(Error::Config("images need >= 1 channel and >= 2x2 pixels".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        vec![self.channels, self.height, self.width]
    }
}

/// Class templates are unit-RMS cosine gratings, one distinct integer wave
/// vector per class, so templates are mutually orthogonal on the pixel grid
/// as long as the frequencies stay below Nyquist.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    spec: SyntheticSpec,
    templates: Vec<Vec<f64>>,
}

impl Synthesizer {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::rng_from_seed(rng::derive_seed(spec.seed, &[purpose::TEMPLATES]));
        let max_kx = ((spec.width - 1) / 2).max(1) as i64;
        let max_ky = ((spec.height - 1) / 2).max(1) as i64;
        // Canonical half-plane so that no two vectors are negatives of each
        // other; low frequencies first.
        let mut waves: Vec<(i64, i64)> = (0..=max_kx)
            .flat_map(|kx| (-max_ky..=max_ky).map(move |ky| (kx, ky)))
            .filter(|&(kx, ky)| kx > 0 || ky > 0)
            .collect();
        waves.sort_by_key(|&(kx, ky)| (kx.abs().max(ky.abs()), kx, ky));
        if waves.len() < spec.num_classes {
            return Err(Error::Config(format!(
                "{}x{} images support at most {} distinct classes",
                spec.height,
                spec.width,
                waves.len()
            )));
        }
        let band = waves.len().min(spec.num_classes.max(12));
        let mut pool = waves[..band].to_vec();
        pool.shuffle(&mut rng);
        let phase = Uniform::new(0.0, 2.0 * PI).expect("valid range");
        let (h, w) = (spec.height, spec.width);
        let templates = pool[..spec.num_classes]
            .iter()
            .map(|&(kx, ky)| {
                let phi = phase.sample(&mut rng);
                let mut t = Vec::with_capacity(spec.channels * h * w);
                for ch in 0..spec.channels {
                    let shift = ch as f64 * PI / spec.channels as f64;
                    for y in 0..h {
                        for x in 0..w {
                            let arg = 2.0 * PI * (kx as f64 * x as f64 / w as f64 + ky as f64 * y as f64 / h as f64);
                            t.push(2f64.sqrt() * (arg + phi + shift).cos());
                        }
                    }
                }
                t
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            templates,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn template(&self, class: usize) -> &[f64] {
        &self.templates[class]
    }

    /// Draws `per_class` samples of every class from the stream `stream`.
    /// Sample ids start at `id_offset`.
    pub fn sample_set(&self, per_class: usize, stream: u64, id_offset: u64) -> Result<Dataset> {
        let spec = &self.spec;
        let c = spec.num_classes;
        let mut rng = rng::rng_from_seed(rng::derive_seed(spec.seed, &[purpose::SAMPLES, stream]));
        let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
        let per = spec.channels * spec.height * spec.width;
        let n = per_class * c;
        let mut inputs = Vec::with_capacity(n * per);
        let mut targets = vec![0.0; n * c];
        let mut primary = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        let mut others: Vec<usize> = Vec::with_capacity(c);
        for class in 0..c {
            for k in 0..per_class {
                let i = primary.len();
                let mut labels = vec![class];
                if spec.task == Task::MultiLabel {
                    let extra = rng.random_range(0..=2usize.min(c - 1));
                    others.clear();
                    others.extend((0..c).filter(|&o| o != class));
                    others.shuffle(&mut rng);
                    labels.extend_from_slice(&others[..extra]);
                }
                let start = inputs.len();
                inputs.extend_from_slice(&self.templates[class]);
                for &l in &labels[1..] {
                    for (v, t) in inputs[start..].iter_mut().zip(&self.templates[l]) {
                        *v += t;
                    }
                }
                if spec.noise > 0.0 {
                    for v in &mut inputs[start..] {
                        *v += noise.sample(&mut rng);
                    }
                }
                for &l in &labels {
                    targets[i * c + l] = 1.0;
                }
                primary.push(class);
                ids.push(id_offset + (class * per_class + k) as u64);
            }
        }
        Dataset::new(spec.task, c, spec.sample_shape(), inputs, targets, primary, ids)
    }
}

/// `spec.samples_per_class` samples per class from the primary stream.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    Synthesizer::new(spec)?.sample_set(spec.samples_per_class, 0, 0)
}
