//! Closed-loop policy driven by a trained model.

use super::grid::TokenGrid;
use super::train::Model;
use crate::tasks::{Observation, Policy, PolicyError, PolicyOutput, World};
use crate::vehicle::ActionVector;

/// Acts with the action head; needs rendered frames in every observation.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    model: Model,
}

impl LearnedPolicy {
    pub fn new(model: Model) -> Self {
        Self { model }
    }
}

impl Policy for LearnedPolicy {
    fn act(&mut self, _world: &World, obs: &Observation) -> Result<PolicyOutput, PolicyError> {
        let stereo = obs
            .images
            .as_ref()
            .ok_or_else(|| PolicyError::Inference("learned policy needs rendered frames".into()))?;
        let grid = TokenGrid::from_stereo(stereo, self.model.grid_cells);
        let state = self.model.norm.state(&obs.state);
        let pred = self
            .model
            .predict(&grid, &state, obs.instruction as usize)
            .map_err(|e| PolicyError::Inference(e.to_string()))?;
        Ok(PolicyOutput::running(ActionVector(pred.action)))
    }
}
