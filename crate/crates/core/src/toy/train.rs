use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ToyModel, ToyParams};
use super::task::SequencePair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate at the last step as a fraction of `learning_rate`,
    /// reached by linear decay.
    pub final_lr_fraction: f64,
    /// Steps of linear learning-rate warmup from zero.
    pub lr_warmup: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip, 1.0 when unset. `Some(0.0)` disables clipping.
    pub clip_norm: Option<f64>,
    pub steps: usize,
    pub batch_size: usize,
    /// Loss-curve sampling interval.
    pub log_every: usize,
    /// Checkpoint cadence in steps; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    /// Steps over which the energy noise ramps linearly up from zero.
    pub noise_warmup: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            final_lr_fraction: 0.05,
            lr_warmup: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
            steps: 10_000,
            batch_size: 8,
            log_every: 50,
            checkpoint_every: 0,
            noise_warmup: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn resolved_clip(&self) -> f64 {
        self.clip_norm.unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.final_lr_fraction > 0.0
            && self.final_lr_fraction <= 1.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.clip_norm.is_none_or(|c| c >= 0.0)
            && self.steps > 0
            && self.batch_size > 0
            && self.log_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid training config {self:?}")))
        }
    }
}

pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// Mean loss and mean gradient over a batch. Each pair gets its own noise seed.
pub fn batch_gradient(model: &ToyModel, batch: &[&SequencePair], noise_seeds: &[u64]) -> Result<(f64, ToyParams)> {
    let mut total = model.params.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (pair, &seed) in batch.iter().zip(noise_seeds) {
        let pass = model.forward_teacher_forced(&pair.tokens, &pair.frames, Some(seed))?;
        loss += pass.loss * scale;
        let g = model.backward(&pass)?;
        for (dst, src) in total.tensors_mut().into_iter().zip(g.tensors()) {
            for (d, s) in dst.iter_mut().zip(src.2) {
                *d += s * scale;
            }
        }
    }
    Ok((loss, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<LossPoint>,
    pub final_loss: f64,
    /// Steps on which the gradient norm exceeded the clip.
    pub clipped_steps: usize,
    pub max_grad_norm: f64,
}

/// Serialized model: config, vocabulary shape and named tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub step: usize,
    pub model: ModelConfig,
    pub tokens: usize,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "smattn-toy-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn from_model(model: &ToyModel, step: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            step,
            model: model.config.clone(),
            tokens: model.tokens,
            tensors: model
                .params
                .to_map()
                .into_iter()
                .map(|(k, (shape, data))| (k, Tensor { shape, data }))
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<ToyModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        let mut model = ToyModel::new(self.model, self.tokens, 0)?;
        let map = self.tensors.into_iter().map(|(k, t)| (k, (t.shape, t.data))).collect();
        model.params.load_map(&map)?;
        if !model.params.is_finite() {
            return Err(Error::Parse("checkpoint holds non-finite values".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Called with `(step, model)` at the checkpoint cadence and after the last step.
pub type CheckpointHook<'a> = dyn FnMut(usize, &ToyModel) -> Result<()> + 'a;

/// Fresh model for `config`, initialized from the training seed.
pub fn init_model(config: &ModelConfig, tokens: usize, train: &TrainConfig) -> Result<ToyModel> {
    ToyModel::new(config.clone(), tokens, train.seed ^ 0x5eed_0f_1a1e)
}

/// Adam with global-norm clipping on uniformly sampled batches. A non-finite
/// loss or update aborts with [`Error::NonFiniteLoss`]; the model keeps the
/// last finite parameters.
pub fn train(
    model: &mut ToyModel,
    data: &[SequencePair],
    config: &TrainConfig,
    mut checkpoint: Option<&mut CheckpointHook<'_>>,
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let clip = config.resolved_clip();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model.params.count());
    let mut flat = model.params.flatten();
    let mut report = TrainReport {
        loss_curve: Vec::new(),
        final_loss: f64::NAN,
        clipped_steps: 0,
        max_grad_norm: 0.0,
    };
    let mut running = 0.0;
    let mut since = 0;
    let noise = model.params.energy.noise_scale;
    for step in 1..=config.steps {
        if config.noise_warmup > 0 {
            model.params.energy.noise_scale = noise * (step as f64 / config.noise_warmup as f64).min(1.0);
        }
        let batch: Vec<&SequencePair> = (0..config.batch_size).map(|_| &data[rng.random_range(0..data.len())]).collect();
        let seeds: Vec<u64> = (0..config.batch_size).map(|_| rng.next_u64()).collect();
        let (loss, grad) = batch_gradient(model, &batch, &seeds)?;
        let norm = grad.norm();
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        report.max_grad_norm = report.max_grad_norm.max(norm);
        let mut g = grad.flatten();
        if clip > 0.0 && norm > clip {
            report.clipped_steps += 1;
            let s = clip / norm;
            g.iter_mut().for_each(|v| *v *= s);
        }
        let before = flat.clone();
        let progress = (step - 1) as f64 / (config.steps.max(2) - 1) as f64;
        let mut lr = config.learning_rate * (1.0 - progress * (1.0 - config.final_lr_fraction));
        if step <= config.lr_warmup {
            lr *= step as f64 / config.lr_warmup as f64;
        }
        adam.step(&mut flat, &g, lr, config);
        if flat.iter().any(|v| !v.is_finite()) {
            model.params.assign_flat(&before)?;
            return Err(Error::NonFiniteLoss { step, loss });
        }
        model.params.assign_flat(&flat)?;
        running += loss;
        since += 1;
        if step % config.log_every == 0 || step == config.steps {
            report.loss_curve.push(LossPoint { step, loss: running / since as f64, grad_norm: norm });
            running = 0.0;
            since = 0;
        }
        report.final_loss = loss;
        if let Some(hook) = checkpoint.as_deref_mut() {
            if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) || step == config.steps {
                hook(step, model)?;
            }
        }
    }
    Ok(report)
}
