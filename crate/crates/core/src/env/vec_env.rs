//! Several environments stepped in parallel with results in index order.

use rayon::prelude::*;

use super::observation::Observation;
use super::{EpisodeConfig, GraspEnv, StepResult};
use crate::error::EnvError;
use crate::model::RobotModel;

pub struct VecEnv {
    pub envs: Vec<GraspEnv>,
}

impl VecEnv {
    pub fn new(model: &RobotModel, config: &EpisodeConfig, count: usize) -> Result<Self, EnvError> {
        let envs = (0..count)
            .map(|_| GraspEnv::new(model.clone(), config.clone()))
            .collect::<Result<_, _>>()?;
        Ok(Self { envs })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    /// Resets environment `i` with `seeds[i]`.
    pub fn reset(&mut self, seeds: &[u64]) -> Vec<Result<Observation, EnvError>> {
        self.envs
            .par_iter_mut()
            .zip(seeds.par_iter())
            .map(|(env, s)| env.reset(*s))
            .collect()
    }

    pub fn step(&mut self, actions: &[Vec<f64>]) -> Vec<Result<StepResult, EnvError>> {
        self.envs
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(env, a)| env.step(a))
            .collect()
    }
}
