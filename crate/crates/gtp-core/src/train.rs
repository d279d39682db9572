//! Training: pointer supervision, the summed step loss, an adaptive-moment
//! optimizer with step decay, and deterministic per-sample epochs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{pointer_targets, VideoSample};
use crate::math;
use crate::model::{Model, ModelDims, Variant};
use crate::pointer::StepDistribution;
use crate::tape::{Tape, PROB_FLOOR};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Halve the rate every this many epochs (0 disables decay).
    pub decay_every: usize,
    pub decay_factor: f64,
    pub epochs: usize,
    pub seed: u64,
    pub k: usize,
    pub variant: Variant,
    /// Condition each step's mask on the previous ground-truth index rather
    /// than the model's own argmax.
    pub teacher_forcing: bool,
    /// Round parameters through 32-bit precision after every update so that
    /// f32 checkpoints round-trip exactly.
    pub quantize_f32: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            decay_every: 20,
            decay_factor: 0.5,
            epochs: 50,
            seed: 0,
            k: 5,
            variant: Variant::Full,
            teacher_forcing: true,
            quantize_f32: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    /// Loss or a gradient went non-finite; carries sample id and the first
    /// offending operation when known.
    NonFinite { sample: String, op: String },
    /// Supervision malformed (empty dataset, bad targets).
    BadData(String),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::NonFinite { sample, op } => {
                write!(f, "non-finite loss on sample {sample} (first bad op: {op})")
            }
            TrainError::BadData(msg) => write!(f, "bad training data: {msg}"),
        }
    }
}

/// One supervised training item: inputs plus the pointer target chain
/// (ascending clip indices, then the end slot T).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub clips: Tensor,
    pub words: Tensor,
    pub targets: Vec<usize>,
}

impl TrainSample {
    /// Derive supervision from a validated sample: consistency-chosen ground
    /// truth, ascending marks, end slot appended.
    pub fn from_video(sample: &VideoSample, k: usize) -> Result<Self, TrainError> {
        sample.validate(k).map_err(|e| TrainError::BadData(format!("{e}")))?;
        let gt = sample.ground_truth(k).map_err(|e| TrainError::BadData(format!("{e}")))?;
        Ok(TrainSample {
            id: sample.id.clone(),
            clips: sample.clips.clone(),
            words: sample.words.clone(),
            targets: pointer_targets(&gt),
        })
    }
}

/// Summed negative log probability of each target under its step
/// distribution, with probabilities floored at 1e-12.
pub fn step_loss(distributions: &[StepDistribution], targets: &[usize]) -> Result<f64, TrainError> {
    if distributions.len() != targets.len() {
        return Err(TrainError::BadData(format!(
            "{} distributions vs {} targets",
            distributions.len(),
            targets.len()
        )));
    }
    let mut loss = 0.0;
    for (d, &t) in distributions.iter().zip(targets) {
        if t >= d.probs.len() {
            return Err(TrainError::BadData(format!("target {t} out of range")));
        }
        loss -= math::ln(d.probs[t].max(PROB_FLOOR));
    }
    Ok(loss)
}

/// Resolve an ablation tag into a wired model.
pub fn build_variant(tag: Variant, dims: ModelDims, seed: u64) -> Model {
    Model::init(dims, tag, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub mean_grad_norm: f64,
}

/// Adaptive-moment gradient descent over the model's flat parameter list.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    adam_m: Vec<Tensor>,
    adam_v: Vec<Tensor>,
    step: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Trainer {
    pub fn new(mut model: Model, config: TrainConfig) -> Self {
        if config.quantize_f32 {
            model.quantize_f32();
        }
        let mut m = Vec::new();
        let mut v = Vec::new();
        model.visit(&mut |_, t| {
            m.push(Tensor::zeros(t.rows(), t.cols()));
            v.push(Tensor::zeros(t.rows(), t.cols()));
        });
        Trainer { model, config, adam_m: m, adam_v: v, step: 0 }
    }

    /// Learning rate for an epoch under the step-decay schedule.
    pub fn rate_for_epoch(&self, epoch: usize) -> f64 {
        if self.config.decay_every == 0 {
            return self.config.learning_rate;
        }
        let halvings = (epoch / self.config.decay_every) as i32;
        self.config.learning_rate * math::powf(self.config.decay_factor, halvings as f64)
    }

    /// One pass over the dataset in seeded shuffled order with per-sample
    /// updates. Deterministic for a fixed seed and epoch index.
    pub fn train_epoch(&mut self, samples: &[TrainSample], epoch: usize) -> Result<EpochStats, TrainError> {
        if samples.is_empty() {
            return Err(TrainError::BadData(String::from("empty dataset")));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (epoch as u64).wrapping_mul(0x5851f42d4c957f2d),
        );
        order.shuffle(&mut rng);
        let rate = self.rate_for_epoch(epoch);

        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        for &i in &order {
            let s = &samples[i];
            let mut tape = Tape::new();
            let (loss, reg) = self.model.sample_loss(
                &mut tape,
                &s.clips,
                &s.words,
                &s.targets,
                self.config.teacher_forcing,
            );
            let loss_val = tape.value(loss).get(0, 0);
            if !loss_val.is_finite() {
                let op = tape
                    .first_nonfinite()
                    .map(|(_, name)| String::from(name))
                    .unwrap_or_else(|| String::from("unknown"));
                return Err(TrainError::NonFinite { sample: s.id.clone(), op });
            }
            loss_sum += loss_val;
            tape.backward(loss);

            let grads: Vec<Tensor> = reg.iter().map(|(_, id)| tape.grad(*id)).collect();
            let mut sq = 0.0;
            for g in &grads {
                sq += g.data().iter().map(|v| v * v).sum::<f64>();
            }
            norm_sum += math::sqrt(sq);
            self.apply_update(&reg, &grads, rate)?;
        }
        Ok(EpochStats {
            mean_loss: loss_sum / samples.len() as f64,
            mean_grad_norm: norm_sum / samples.len() as f64,
        })
    }

    fn apply_update(
        &mut self,
        reg: &[(String, crate::tape::TensorId)],
        grads: &[Tensor],
        rate: f64,
    ) -> Result<(), TrainError> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - math::powf(BETA1, t);
        let bc2 = 1.0 - math::powf(BETA2, t);
        let quantize = self.config.quantize_f32;
        let (m_buf, v_buf) = (&mut self.adam_m, &mut self.adam_v);
        let mut idx = 0;
        let mut mismatch = None;
        self.model.visit_mut(&mut |name, param| {
            if mismatch.is_some() {
                return;
            }
            if reg[idx].0 != name {
                mismatch = Some(format!("{} vs {}", reg[idx].0, name));
                return;
            }
            let g = &grads[idx];
            let m = &mut m_buf[idx];
            let v = &mut v_buf[idx];
            for j in 0..param.len() {
                let gj = g.data()[j];
                let mj = BETA1 * m.data()[j] + (1.0 - BETA1) * gj;
                let vj = BETA2 * v.data()[j] + (1.0 - BETA2) * gj * gj;
                m.data_mut()[j] = mj;
                v.data_mut()[j] = vj;
                let mhat = mj / bc1;
                let vhat = vj / bc2;
                let mut next = param.data()[j] - rate * mhat / (math::sqrt(vhat) + ADAM_EPS);
                if quantize {
                    next = next as f32 as f64;
                }
                param.data_mut()[j] = next;
            }
            idx += 1;
        });
        match mismatch {
            Some(msg) => Err(TrainError::BadData(format!("parameter order mismatch: {msg}"))),
            None => Ok(()),
        }
    }
}
