//! Joint training of the target head and the action head.

use super::bc::{BcConfig, BcHead};
use super::cap::{cap_backward, cap_forward_trace, cap_loss, cap_loss_grad, total_loss, CapConfig, CapParams, POSITION, QUAT};
use super::grid::{TokenGrid, GRID_CELLS};
use super::LearnerError;
use crate::dataset::{ChannelStats, Episode, NormStats, TARGET_DIM};
use crate::vehicle::ACTION_DIM;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Normalized state inputs are clipped to this many standard deviations.
const STATE_CLIP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the target loss in the total objective.
    pub alpha: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            learning_rate: 0.3,
            momentum: 0.9,
            batch_size: 32,
            steps: 500,
            seed: 0,
            clip_norm: 5.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let ok = self.alpha >= 0.0
            && self.alpha.is_finite()
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && self.clip_norm >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(LearnerError::Config(format!("invalid loss configuration {self:?}")))
        }
    }
}

/// Maps raw records into network space and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub state: ChannelStats,
    pub target: ChannelStats,
}

impl Normalizer {
    pub fn from_stats(stats: &NormStats) -> Self {
        Self {
            state: stats.state.clone(),
            target: stats.target.clone(),
        }
    }

    pub fn state(&self, raw: &[f64]) -> Vec<f64> {
        self.state
            .normalize(raw)
            .into_iter()
            .map(|v| v.clamp(-STATE_CLIP, STATE_CLIP))
            .collect()
    }

    /// Quaternion kept as is, position standardized.
    pub fn label(&self, target: &[f64]) -> [f64; TARGET_DIM] {
        let mut out = [0.0; TARGET_DIM];
        out[QUAT].copy_from_slice(&target[QUAT]);
        for i in POSITION {
            out[i] = (target[i] - self.target.mean[i]) / self.target.std[i];
        }
        out
    }

    pub fn target(&self, label: &[f64]) -> [f64; TARGET_DIM] {
        let mut out = [0.0; TARGET_DIM];
        out[QUAT].copy_from_slice(&label[QUAT]);
        for i in POSITION {
            out[i] = label[i] * self.target.std[i] + self.target.mean[i];
        }
        out
    }
}

/// One frame prepared for the learner.
#[derive(Debug, Clone)]
pub struct Sample {
    pub grid: TokenGrid,
    /// Normalized state.
    pub state: Vec<f64>,
    pub instruction: usize,
    pub action: [f64; ACTION_DIM],
    /// Raw target label.
    pub target: [f64; TARGET_DIM],
    /// Normalized target label.
    pub label: [f64; TARGET_DIM],
}

/// Converts every frame of an episode; the episode must carry images.
pub fn episode_samples(ep: &Episode, norm: &Normalizer, cells: usize) -> Result<Vec<Sample>, LearnerError> {
    ep.frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let stereo = f.images.as_ref().ok_or_else(|| {
                LearnerError::Config(format!("episode {} frame {k} has no images", ep.meta.episode_id))
            })?;
            Ok(Sample {
                grid: TokenGrid::from_stereo(stereo, cells),
                state: norm.state(&f.state),
                instruction: f.instruction as usize,
                action: f.action,
                target: f.target,
                label: norm.label(&f.target),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cap: CapParams,
    pub bc: BcHead,
    pub norm: Normalizer,
    pub grid_cells: usize,
}

/// Outputs of both heads for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub action: [f64; ACTION_DIM],
    /// Target label in physical units.
    pub target: [f64; TARGET_DIM],
}

impl Model {
    pub fn new(cap: CapConfig, norm: Normalizer, grid_cells: usize, seed: u64) -> Result<Self, LearnerError> {
        let cap = CapParams::init(cap, seed)?;
        let bc = BcHead::init(BcConfig::new(cap.cfg.mid_channels), seed ^ 0xbc);
        Ok(Self {
            cap,
            bc,
            norm,
            grid_cells,
        })
    }

    pub fn default_for(norm: Normalizer, seed: u64) -> Result<Self, LearnerError> {
        Self::new(CapConfig::default(), norm, GRID_CELLS, seed)
    }

    pub fn is_finite(&self) -> bool {
        self.cap.is_finite() && self.bc.is_finite()
    }

    /// `state` is normalized.
    pub fn predict(&self, grid: &TokenGrid, state: &[f64], instruction: usize) -> Result<Prediction, LearnerError> {
        let trace = cap_forward_trace(&self.cap, grid)?;
        let bc = self.bc.forward(self.bc.assemble(state, instruction, &trace.pooled)?);
        let mut action = [0.0; ACTION_DIM];
        for (a, v) in action.iter_mut().zip(&bc.output) {
            *a = v.clamp(-1.0, 1.0);
        }
        Ok(Prediction {
            action,
            target: self.norm.target(&trace.output),
        })
    }

    pub fn predict_sample(&self, s: &Sample) -> Result<Prediction, LearnerError> {
        self.predict(&s.grid, &s.state, s.instruction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub total: f64,
    pub action: f64,
    pub cap: f64,
}

/// Loss curve as comma-separated text with a header row.
pub fn loss_curve_csv(curve: &[LossPoint]) -> String {
    let mut out = String::from("step,total_loss,action_loss,cap_loss\n");
    for p in curve {
        out.push_str(&format!("{},{:.9e},{:.9e},{:.9e}\n", p.step, p.total, p.action, p.cap));
    }
    out
}

/// Mean losses of the model over `samples` (every sample, no sampling).
pub fn batch_losses(model: &Model, samples: &[&Sample], alpha: f64) -> Result<LossPoint, LearnerError> {
    let mut grads = Grads::new(model);
    let (a, c) = accumulate(model, samples, alpha, &mut grads)?;
    Ok(LossPoint {
        step: 0,
        total: total_loss(a, c, alpha),
        action: a,
        cap: c,
    })
}

/// Gradient buffers shaped like the model.
#[derive(Debug, Clone)]
pub struct Grads {
    pub cap: CapParams,
    pub bc: BcHead,
}

impl Grads {
    pub fn new(model: &Model) -> Self {
        Self {
            cap: CapParams::zeros(model.cap.cfg),
            bc: BcHead::zeros(model.bc.cfg),
        }
    }

    fn norm(&self) -> f64 {
        let sq = |t: &Vec<f64>| t.iter().map(|v| v * v).sum::<f64>();
        (self.cap.tensors().into_iter().map(sq).sum::<f64>() + self.bc.tensors().into_iter().map(sq).sum::<f64>()).sqrt()
    }
}

/// Adds batch-mean gradients of the total loss and returns the mean
/// action and target losses.
pub fn accumulate(model: &Model, batch: &[&Sample], alpha: f64, grads: &mut Grads) -> Result<(f64, f64), LearnerError> {
    let inv = 1.0 / batch.len() as f64;
    let (mut l_action, mut l_cap) = (0.0, 0.0);
    for s in batch {
        let trace = cap_forward_trace(&model.cap, &s.grid)?;
        let bc = model.bc.forward(model.bc.assemble(&s.state, s.instruction, &trace.pooled)?);
        l_action += cap_loss(&bc.output, &s.action)? * inv;
        l_cap += cap_loss(&trace.output, &s.label)? * inv;
        let d_action: Vec<f64> = cap_loss_grad(&bc.output, &s.action).iter().map(|g| g * inv).collect();
        let d_target: Vec<f64> = cap_loss_grad(&trace.output, &s.label).iter().map(|g| g * alpha * inv).collect();
        let d_pooled = model.bc.backward(&bc, &d_action, &mut grads.bc);
        cap_backward(&model.cap, &s.grid, &trace, &d_target, Some(&d_pooled), &mut grads.cap, None);
    }
    Ok((l_action, l_cap))
}

/// SGD with momentum on `L_action + alpha * L_cap`, drawing batches
/// uniformly with replacement. Deterministic for a given seed.
pub fn train(mut model: Model, samples: &[Sample], cfg: &LossConfig) -> Result<(Model, Vec<LossPoint>), LearnerError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(LearnerError::Config("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = Grads::new(&model);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<&Sample> = (0..cfg.batch_size).map(|_| &samples[rng.random_range(0..samples.len())]).collect();
        let mut grads = Grads::new(&model);
        let (l_action, l_cap) = accumulate(&model, &batch, cfg.alpha, &mut grads)?;
        let total = total_loss(l_action, l_cap, cfg.alpha);
        let norm = grads.norm();
        if !total.is_finite() || !norm.is_finite() {
            return Err(LearnerError::Diverged {
                step,
                loss: total,
                detail: format!("action loss {l_action}, target loss {l_cap}, gradient norm {norm}"),
            });
        }
        let scale = if cfg.clip_norm > 0.0 && norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
        let update = |p: &mut Vec<f64>, g: &Vec<f64>, v: &mut Vec<f64>| {
            for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = cfg.momentum * *v + g * scale;
                *p -= cfg.learning_rate * *v;
            }
        };
        for ((p, g), v) in model.cap.tensors_mut().into_iter().zip(grads.cap.tensors()).zip(velocity.cap.tensors_mut()) {
            update(p, g, v);
        }
        for ((p, g), v) in model.bc.tensors_mut().into_iter().zip(grads.bc.tensors()).zip(velocity.bc.tensors_mut()) {
            update(p, g, v);
        }
        curve.push(LossPoint {
            step,
            total,
            action: l_action,
            cap: l_cap,
        });
    }
    if !model.is_finite() {
        return Err(LearnerError::Diverged {
            step: cfg.steps,
            loss: f64::NAN,
            detail: "parameters became non-finite".into(),
        });
    }
    Ok((model, curve))
}

/// Mean of the first and last `window` total losses.
pub fn curve_ends(curve: &[LossPoint], window: usize) -> Option<(f64, f64)> {
    if curve.is_empty() || window == 0 {
        return None;
    }
    let w = window.min(curve.len());
    let mean = |s: &[LossPoint]| s.iter().map(|p| p.total).sum::<f64>() / s.len() as f64;
    Some((mean(&curve[..w]), mean(&curve[curve.len() - w..])))
}
