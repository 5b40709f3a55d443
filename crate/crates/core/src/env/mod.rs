//! Whole-body grasping environment built on the scene simulator.
//!
//! A policy step holds one command for `substeps` simulator steps. Episodes
//! end on a tip (box axis more than 80 degrees from vertical), a lift (box
//! 0.5 m above its settled height) or truncation after `max_steps` steps,
//! which counts as a slip.

pub mod action;
pub mod episode;
pub mod observation;
pub mod perturbation;
pub mod primitive;
pub mod reward;
pub mod sampling;
pub mod vec_env;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{contact::BodyId, Command, Scene, SimState, CHAMBERS_PER_ARM};
use crate::error::EnvError;
use crate::kinematics::Pose;
use crate::model::{BoxSpec, RobotModel};
use action::{map_action, Action, ActionBounds, ActionFilter};
use observation::Observation;
use perturbation::Perturbation;
use primitive::{primitive_action, Phase, PrimitiveState, Waypoints};
use reward::RewardScheme;

pub use action::ACT_DIM;
pub use observation::OBS_DIM;

/// Placement attempts before giving up on a box that overlaps the robot.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 50;

/// Episode outcome. Categories are ordered (success, slip, tip) everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Lift,
    Slip,
    Tip,
    /// The simulation failed; not one of the three task outcomes.
    Aborted,
}

impl Outcome {
    pub const CATEGORIES: [Outcome; 3] = [Outcome::Lift, Outcome::Slip, Outcome::Tip];

    /// Index in (success, slip, tip) order.
    pub fn category(self) -> Option<usize> {
        Self::CATEGORIES.iter().position(|c| *c == self)
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Lift => "success",
            Outcome::Slip => "slip",
            Outcome::Tip => "tip",
            Outcome::Aborted => "aborted",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        match s.to_ascii_lowercase().as_str() {
            "lift" | "success" => Some(Outcome::Lift),
            "slip" => Some(Outcome::Slip),
            "tip" => Some(Outcome::Tip),
            "aborted" => Some(Outcome::Aborted),
            _ => None,
        }
    }
}

/// Box placement relative to its nominal position: x offset (m) and yaw (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub offset: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Box to grasp; sampled uniformly from the sampling ranges when absent.
    pub box_spec: Option<BoxSpec>,
    /// Fixed placement; sampled from the seed when absent.
    pub placement: Option<Placement>,
    pub max_steps: usize,
    pub policy_rate: f64,
    pub substeps: usize,
    pub dt: f64,
    pub reward: RewardScheme,
    pub perturbation: Option<Perturbation>,
    /// Passive settling before the first observation, s.
    pub settle_time: f64,
    pub tip_angle: f64,
    pub lift_height: f64,
    /// End the episode on a tip or lift. When false the episode runs to
    /// `max_steps` and events are only reported.
    #[serde(default = "default_true")]
    pub terminate_on_event: bool,
}

fn default_true() -> bool {
    true
}

impl EpisodeConfig {
    pub fn from_model(m: &RobotModel) -> Self {
        Self {
            box_spec: Some(m.task.nominal_box.clone()),
            placement: None,
            max_steps: 1200,
            policy_rate: 1.0 / (m.sim.dt * m.sim.substeps as f64),
            substeps: m.sim.substeps,
            dt: m.sim.dt,
            reward: RewardScheme::Guided,
            perturbation: None,
            settle_time: 1.0,
            tip_angle: 80f64.to_radians(),
            lift_height: 0.5,
            terminate_on_event: true,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |s: &str| Err(EnvError::Config(s.to_string()));
        if self.substeps == 0 || self.max_steps == 0 {
            return bad("substeps and max_steps must be positive");
        }
        if !(self.dt > 0.0 && self.policy_rate > 0.0) {
            return bad("dt and policy_rate must be positive");
        }
        if (self.substeps as f64 * self.dt * self.policy_rate - 1.0).abs() > 1e-9 {
            return bad("substeps * dt must equal one policy period");
        }
        if let Some(b) = &self.box_spec {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    /// Primitive action for this step, normalized.
    pub primitive_action: Action,
    pub phase: Phase,
    pub outcome: Option<Outcome>,
    /// Robot/box contact points at the end of the step.
    pub contacts: usize,
    pub tilt: f64,
    pub lift: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    scene: Scene,
    state: SimState,
    filter: ActionFilter,
    primitive: PrimitiveState,
    commands: [[f64; CHAMBERS_PER_ARM]; 2],
    step: usize,
    t0: f64,
    z0: f64,
    placement: Placement,
    done: bool,
}

#[derive(Debug, Clone)]
pub struct GraspEnv {
    model: RobotModel,
    bounds: ActionBounds,
    waypoints: Waypoints,
    pub config: EpisodeConfig,
    episode: Option<Episode>,
}

/// Tilt of the box z axis from vertical, rad.
pub fn box_tilt(state: &SimState) -> f64 {
    let r = state.box_orientation.to_rotation_matrix();
    r[(2, 2)].clamp(-1.0, 1.0).acos()
}

/// Contact points between the robot (arms or chest) and the box.
pub fn robot_box_contacts(contacts: &[crate::dynamics::contact::ContactPoint]) -> usize {
    contacts
        .iter()
        .filter(|c| {
            let robot = |b: BodyId| matches!(b, BodyId::Arm { .. } | BodyId::Chest);
            (c.bodies.0 == BodyId::Box && robot(c.bodies.1))
                || (c.bodies.1 == BodyId::Box && robot(c.bodies.0))
        })
        .count()
}

impl GraspEnv {
    pub fn new(model: RobotModel, config: EpisodeConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let bounds = ActionBounds::from_model(&model);
        let waypoints = Waypoints::from_task(&model.task, model.elevator.h_max);
        Ok(Self {
            model,
            bounds,
            waypoints,
            config,
            episode: None,
        })
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    pub fn scene(&self) -> Option<&Scene> {
        self.episode.as_ref().map(|e| &e.scene)
    }

    pub fn state(&self) -> Option<&SimState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn placement(&self) -> Option<Placement> {
        self.episode.as_ref().map(|e| e.placement)
    }

    pub fn box_spec(&self) -> Option<&BoxSpec> {
        self.scene().map(|s| &s.box_spec)
    }

    pub fn step_index(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.step)
    }

    /// Time since the end of settling, s.
    pub fn episode_time(&self) -> f64 {
        self.episode.as_ref().map_or(0.0, |e| e.state.time - e.t0)
    }

    fn sample_box(&self, rng: &mut ChaCha8Rng) -> BoxSpec {
        let u = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| rng.random_range(lo..hi);
        BoxSpec {
            mass: u(rng, sampling::MASS_RANGE),
            size: sampling::SIZE_RANGES.map(|r| u(rng, r)),
            friction: self.model.contact.mu_box_floor,
        }
    }

    fn box_pose(&self, spec: &BoxSpec, p: Placement) -> Pose {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), p.yaw).into_inner();
        Pose::new(
            rot,
            Vector3::new(self.model.task.box_x + p.offset, 0.0, 0.5 * spec.size[2]),
        )
    }

    /// Starts a new episode and returns the first observation.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = match &self.config.box_spec {
            Some(b) => b.clone(),
            None => self.sample_box(&mut rng),
        };
        let scene = Scene::new(self.model.clone(), spec.clone());
        let t = &self.model.task;
        let mut found = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let placement = self.config.placement.unwrap_or_else(|| Placement {
                offset: rng.random_range(-t.max_offset..=t.max_offset),
                yaw: rng.random_range(-t.max_yaw..=t.max_yaw),
            });
            let state = scene.initial_state(&self.box_pose(&spec, placement));
            let clear = scene
                .contacts(&state)
                .iter()
                .all(|c| c.bodies == (BodyId::Box, BodyId::Floor));
            if clear {
                found = Some((placement, state));
                break;
            }
            if self.config.placement.is_some() {
                break;
            }
        }
        let (placement, mut state) = found.ok_or(EnvError::Placement(MAX_PLACEMENT_ATTEMPTS))?;
        let home = self.bounds.to_command(&self.bounds.unnormalize(&self.bounds.home()));
        let settle = (self.config.settle_time / self.config.dt).round() as usize;
        for _ in 0..settle {
            state = scene.step(&state, &home, &Vector3::zeros(), self.config.dt)?.0;
        }
        let episode = Episode {
            z0: state.box_position.z,
            t0: state.time,
            filter: ActionFilter::new(self.model.action_filter, self.bounds.home()),
            primitive: PrimitiveState::new(self.model.elevator.h_max),
            commands: home.pressures,
            step: 0,
            placement,
            done: false,
            scene,
            state,
        };
        let obs = Observation::new(observation::measure(&episode.scene, &episode.state, &episode.commands));
        self.episode = Some(episode);
        Ok(obs)
    }

    /// Primitive action the next step would use, without advancing the primitive.
    pub fn expert_action(&self) -> Option<Action> {
        let e = self.episode.as_ref()?;
        Some(primitive_action(&e.primitive, e.state.h, &self.waypoints, &self.bounds).0)
    }

    pub fn observe(&self) -> Option<Observation> {
        let e = self.episode.as_ref()?;
        Some(Observation::new(observation::measure(&e.scene, &e.state, &e.commands)))
    }

    pub fn step(&mut self, a: &[f64]) -> Result<StepResult, EnvError> {
        if a.len() != ACT_DIM {
            return Err(EnvError::ActionLength {
                expected: ACT_DIM,
                got: a.len(),
            });
        }
        let cfg = &self.config;
        let e = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if e.done {
            return Err(EnvError::Finished);
        }
        let a: Action = action::clamp_action(&a.try_into().expect("length checked"));
        let (a_star, next_primitive) =
            primitive_action(&e.primitive, e.state.h, &self.waypoints, &self.bounds);
        e.primitive = next_primitive;
        let cmd: Command = map_action(&mut e.filter, &self.bounds, &a);
        e.commands = cmd.pressures;

        let mut error = None;
        let mut contacts = 0;
        for _ in 0..cfg.substeps {
            let force = cfg
                .perturbation
                .map_or(Vector3::zeros(), |p| p.force(e.state.time - e.t0));
            match e.scene.step(&e.state, &cmd, &force, cfg.dt) {
                Ok((next, report)) => {
                    e.state = next;
                    contacts = robot_box_contacts(&report.contacts);
                }
                Err(err) => {
                    error = Some(err.to_string());
                    break;
                }
            }
        }
        e.step += 1;
        let tilt = box_tilt(&e.state);
        let lift = e.state.box_position.z - e.z0;
        let event = if error.is_some() {
            Some(Outcome::Aborted)
        } else if tilt > cfg.tip_angle {
            Some(Outcome::Tip)
        } else if lift >= cfg.lift_height {
            Some(Outcome::Lift)
        } else {
            None
        };
        let terminated =
            event.is_some_and(|o| cfg.terminate_on_event || o == Outcome::Aborted);
        let truncated = !terminated && e.step >= cfg.max_steps;
        let outcome = match event {
            None if truncated && cfg.terminate_on_event => Some(Outcome::Slip),
            _ => event,
        };
        e.done = terminated || truncated;

        let c2b = observation::chest_to_box(&e.scene, &e.state);
        let reward = match cfg.reward {
            RewardScheme::Guided => reward::guided_reward(&a, &a_star, event),
            RewardScheme::Shaped => reward::shaped_reward(
                [c2b.x, c2b.y, c2b.z],
                contacts,
                e.state.box_position.z,
                e.z0,
                event,
            ),
        };
        let obs = Observation::new(observation::measure(&e.scene, &e.state, &e.commands));
        Ok(StepResult {
            obs,
            reward,
            terminated,
            truncated,
            info: StepInfo {
                step: e.step,
                primitive_action: a_star,
                phase: e.primitive.phase,
                outcome,
                contacts,
                tilt,
                lift,
                error,
            },
        })
    }
}
