//! Behavior-cloning action head: one tanh hidden layer over the normalized
//! state, a one-hot instruction and the pooled visual features.

use super::LearnerError;
use crate::dataset::STATE_DIM;
use crate::vehicle::ACTION_DIM;
use crate::tasks::INSTRUCTIONS;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BcConfig {
    pub state: usize,
    pub instructions: usize,
    pub visual: usize,
    pub hidden: usize,
    pub out: usize,
}

impl BcConfig {
    pub fn new(visual: usize) -> Self {
        Self {
            state: STATE_DIM,
            instructions: INSTRUCTIONS.len(),
            visual,
            hidden: 64,
            out: ACTION_DIM,
        }
    }

    pub fn input(&self) -> usize {
        self.state + self.instructions + self.visual
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcHead {
    pub cfg: BcConfig,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Hidden activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BcTrace {
    input: Vec<f64>,
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl BcHead {
    pub fn zeros(cfg: BcConfig) -> Self {
        let n = cfg.input();
        Self {
            cfg,
            w1: vec![0.0; cfg.hidden * n],
            b1: vec![0.0; cfg.hidden],
            w2: vec![0.0; cfg.out * cfg.hidden],
            b2: vec![0.0; cfg.out],
        }
    }

    pub fn init(cfg: BcConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = Self::zeros(cfg);
        let a1 = (6.0 / (cfg.input() + cfg.hidden) as f64).sqrt();
        let a2 = (6.0 / (cfg.hidden + cfg.out) as f64).sqrt();
        head.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        head.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        head
    }

    pub fn tensors(&self) -> [&Vec<f64>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), LearnerError> {
        if values.len() != self.len() {
            return Err(LearnerError::Shape(format!("{} values for {} parameters", values.len(), self.len())));
        }
        let mut it = values.iter();
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Concatenates the three input blocks; `instruction` becomes a one-hot.
    pub fn assemble(&self, state: &[f64], instruction: usize, visual: &[f64]) -> Result<Vec<f64>, LearnerError> {
        let c = &self.cfg;
        if state.len() != c.state || visual.len() != c.visual || instruction >= c.instructions {
            return Err(LearnerError::Shape(format!(
                "action head input: state {} visual {} instruction {instruction}",
                state.len(),
                visual.len()
            )));
        }
        let mut x = Vec::with_capacity(c.input());
        x.extend_from_slice(state);
        x.extend((0..c.instructions).map(|i| if i == instruction { 1.0 } else { 0.0 }));
        x.extend_from_slice(visual);
        Ok(x)
    }

    pub fn forward(&self, input: Vec<f64>) -> BcTrace {
        let (n, h) = (self.cfg.input(), self.cfg.hidden);
        let hidden: Vec<f64> = (0..h)
            .map(|j| (self.b1[j] + self.w1[j * n..(j + 1) * n].iter().zip(&input).map(|(w, x)| w * x).sum::<f64>()).tanh())
            .collect();
        let output = (0..self.cfg.out)
            .map(|o| self.b2[o] + self.w2[o * h..(o + 1) * h].iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        BcTrace { input, hidden, output }
    }

    /// Accumulates parameter gradients and returns the gradient on the visual block.
    pub fn backward(&self, trace: &BcTrace, d_out: &[f64], grads: &mut BcHead) -> Vec<f64> {
        let (n, h) = (self.cfg.input(), self.cfg.hidden);
        let mut d_hidden = vec![0.0; h];
        for o in 0..self.cfg.out {
            grads.b2[o] += d_out[o];
            for j in 0..h {
                grads.w2[o * h + j] += d_out[o] * trace.hidden[j];
                d_hidden[j] += self.w2[o * h + j] * d_out[o];
            }
        }
        let mut d_input = vec![0.0; n];
        for j in 0..h {
            let dz = d_hidden[j] * (1.0 - trace.hidden[j] * trace.hidden[j]);
            grads.b1[j] += dz;
            for i in 0..n {
                grads.w1[j * n + i] += dz * trace.input[i];
                d_input[i] += self.w1[j * n + i] * dz;
            }
        }
        d_input.split_off(n - self.cfg.visual)
    }
}
