//! Policies, episode rollouts, records and batch evaluation.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::action::{Action, ACT_DIM};
use super::observation::{Observation, OBS_DIM};
use super::{EpisodeConfig, GraspEnv, Outcome, Placement, StepResult};
use crate::error::EnvError;
use crate::model::{BoxSpec, RobotModel};

pub trait Policy {
    /// Action for observation `obs`; `expert` is the primitive's action for the same step.
    fn act(&mut self, obs: &Observation, expert: &Action) -> Action;
}

/// Plays the motion primitive open loop.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrimitivePolicy;

impl Policy for PrimitivePolicy {
    fn act(&mut self, _obs: &Observation, expert: &Action) -> Action {
        *expert
    }
}

/// Replays a recorded action sequence, holding the last action afterwards.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    actions: Vec<Action>,
    next: usize,
}

impl ReplayPolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, next: 0 }
    }
}

impl Policy for ReplayPolicy {
    fn act(&mut self, _obs: &Observation, expert: &Action) -> Action {
        let a = self
            .actions
            .get(self.next)
            .or(self.actions.last())
            .copied()
            .unwrap_or(*expert);
        self.next += 1;
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub box_spec: BoxSpec,
    pub placement: Placement,
    pub outcome: Outcome,
    pub length: usize,
    pub perturbed: bool,
    pub total_reward: f64,
    pub actions: Vec<Action>,
}

/// One row of the per-step episode log.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub reward: f64,
    pub contacts: usize,
    pub event: Option<Outcome>,
    pub action: Action,
    pub expert: Action,
    pub obs: [f64; OBS_DIM],
}

pub struct Rollout {
    pub record: EpisodeRecord,
    pub rows: Vec<StepRow>,
}

/// Runs one episode to termination or truncation. `keep_rows` retains the
/// per-step log.
pub fn run_episode(
    env: &mut GraspEnv,
    policy: &mut dyn Policy,
    seed: u64,
    keep_rows: bool,
) -> Result<Rollout, EnvError> {
    let mut obs = env.reset(seed)?;
    let mut actions = Vec::new();
    let mut rows = Vec::new();
    let mut total = 0.0;
    loop {
        let expert = env.expert_action().ok_or(EnvError::NotReset)?;
        let a = policy.act(&obs, &expert);
        let StepResult {
            obs: next,
            reward,
            terminated,
            truncated,
            info,
        } = env.step(&a)?;
        actions.push(a);
        total += reward;
        if keep_rows {
            rows.push(StepRow {
                step: info.step,
                reward,
                contacts: info.contacts,
                event: info.outcome,
                action: a,
                expert: info.primitive_action,
                obs: next.normalized,
            });
        }
        obs = next;
        if terminated || truncated {
            let record = EpisodeRecord {
                seed,
                box_spec: env.box_spec().cloned().expect("episode active"),
                placement: env.placement().expect("episode active"),
                outcome: info.outcome.unwrap_or(Outcome::Slip),
                length: info.step,
                perturbed: env.config.perturbation.is_some(),
                total_reward: total,
                actions,
            };
            return Ok(Rollout { record, rows });
        }
    }
}

/// Writes the per-step log: step, reward, contacts, event, the action, the
/// primitive action and the normalized observation.
pub fn write_step_log<W: Write>(mut out: W, rows: &[StepRow]) -> io::Result<()> {
    let mut header = vec!["step".to_string(), "reward".into(), "contacts".into(), "event".into()];
    header.extend((0..ACT_DIM).map(|i| format!("a{i}")));
    header.extend((0..ACT_DIM).map(|i| format!("a_star{i}")));
    header.extend((0..OBS_DIM).map(|i| format!("obs{i}")));
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let mut line = vec![
            r.step.to_string(),
            r.reward.to_string(),
            r.contacts.to_string(),
            r.event.map_or("", |e| e.label()).to_string(),
        ];
        line.extend(r.action.iter().map(f64::to_string));
        line.extend(r.expert.iter().map(f64::to_string));
        line.extend(r.obs.iter().map(f64::to_string));
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Runs one episode per box on a pool of `jobs` threads; records come back in
/// box order. Box `i` uses seed `seed + i`.
pub fn evaluate<P, F>(
    model: &RobotModel,
    config: &EpisodeConfig,
    boxes: &[BoxSpec],
    seed: u64,
    jobs: usize,
    make_policy: F,
) -> Result<Vec<Result<EpisodeRecord, EnvError>>, EnvError>
where
    P: Policy,
    F: Fn(usize) -> P + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EnvError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        boxes
            .par_iter()
            .enumerate()
            .map(|(i, b)| {
                let mut cfg = config.clone();
                cfg.box_spec = Some(b.clone());
                let mut env = GraspEnv::new(model.clone(), cfg)?;
                let mut policy = make_policy(i);
                run_episode(&mut env, &mut policy, seed + i as u64, false).map(|r| r.record)
            })
            .collect()
    }))
}
