//! Single-threaded real-time-factor benchmark over time step and disk count.

use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Command, Scene, SimState};
use crate::env::episode::{Policy, PrimitivePolicy};
use crate::env::primitive::Phase;
use crate::env::{EpisodeConfig, GraspEnv, Placement};
use crate::error::EnvError;
use crate::kinematics::Pose;
use crate::model::RobotModel;

pub const DEFAULT_STEPS: usize = 10_000;
pub const WARMUP_STEPS: usize = 100;
pub const DEFAULT_DTS: [f64; 4] = [0.0005, 0.001, 0.005, 0.01];
pub const DEFAULT_DISK_COUNTS: [usize; 4] = [2, 5, 10, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Mid-grasp: arms pressing on the box.
    Contact,
    /// Same command with the box moved out of reach.
    Free,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Contact => "contact",
            Scenario::Free => "free",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contact" => Ok(Scenario::Contact),
            "free" => Ok(Scenario::Free),
            _ => Err(format!("unknown scenario {s:?} (expected contact or free)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub scenario: Scenario,
    pub dt: f64,
    pub disk_count: usize,
    /// Timed steps actually completed.
    pub steps: usize,
    pub sim_time: f64,
    pub wall_time: f64,
    pub rtf: f64,
    pub contacts: usize,
    /// Integration failure, if the run stopped early.
    pub error: Option<String>,
}

/// Starting state and held command of one benchmark run.
pub struct BenchStart {
    pub scene: Scene,
    pub state: SimState,
    pub command: Command,
}

/// Runs the primitive until both arms press on the box during the grasp.
pub fn contact_start(model: &RobotModel) -> Result<BenchStart, EnvError> {
    let mut cfg = EpisodeConfig::from_model(model);
    cfg.placement = Some(Placement { offset: 0.0, yaw: 0.0 });
    let mut env = GraspEnv::new(model.clone(), cfg.clone())?;
    let mut obs = env.reset(0)?;
    let mut policy = PrimitivePolicy;
    for _ in 0..cfg.max_steps {
        let expert = env.expert_action().expect("reset");
        let a = policy.act(&obs, &expert);
        let r = env.step(&a)?;
        if let Some(e) = r.info.error {
            return Err(EnvError::Config(format!("primitive run failed: {e}")));
        }
        if r.info.phase != Phase::Approach && r.info.contacts > 0 {
            let b = env.bounds();
            return Ok(BenchStart {
                scene: env.scene().expect("reset").clone(),
                state: env.state().expect("reset").clone(),
                command: b.to_command(&b.unnormalize(&a)),
            });
        }
        if r.terminated || r.truncated {
            break;
        }
        obs = r.obs;
    }
    Err(EnvError::Config(
        "primitive never reached box contact".into(),
    ))
}

/// The contact start with the box moved 5 m in front of the robot.
pub fn free_start(model: &RobotModel) -> Result<BenchStart, EnvError> {
    let mut s = contact_start(model)?;
    let b = &s.scene.box_spec;
    let pose = Pose::from_translation(Vector3::new(5.0, 0.0, 0.5 * b.size[2]));
    let far = s.scene.initial_state(&pose);
    s.state.box_position = far.box_position;
    s.state.box_orientation = far.box_orientation;
    s.state.box_velocity = Vector3::zeros();
    s.state.box_angular_velocity = Vector3::zeros();
    Ok(s)
}

pub fn start_for(model: &RobotModel, scenario: Scenario) -> Result<BenchStart, EnvError> {
    match scenario {
        Scenario::Contact => contact_start(model),
        Scenario::Free => free_start(model),
    }
}

/// Times `steps` integration steps after an untimed warm-up.
pub fn time_point(start: &BenchStart, dt: f64, steps: usize) -> (usize, f64, usize, Option<String>) {
    let zero = Vector3::zeros();
    let mut state = start.state.clone();
    for _ in 0..WARMUP_STEPS {
        match start.scene.step(&state, &start.command, &zero, dt) {
            Ok((s, _)) => state = s,
            Err(e) => return (0, 0.0, 0, Some(format!("warm-up: {e}"))),
        }
    }
    let mut contacts = 0;
    let t = Instant::now();
    for i in 0..steps {
        match start.scene.step(&state, &start.command, &zero, dt) {
            Ok((s, report)) => {
                state = s;
                contacts = contacts.max(report.contacts.len());
            }
            Err(e) => return (i, t.elapsed().as_secs_f64(), contacts, Some(e.to_string())),
        }
    }
    (steps, t.elapsed().as_secs_f64(), contacts, None)
}

/// Sweeps every (dt, N) pair on the calling thread. A start that cannot be
/// built or a step that fails is recorded on its points.
pub fn run_bench(
    model: &RobotModel,
    dts: &[f64],
    disk_counts: &[usize],
    steps: usize,
    scenario: Scenario,
) -> Vec<BenchPoint> {
    let mut out = Vec::new();
    for &n in disk_counts {
        let start = model
            .with_disk_count(n)
            .map_err(EnvError::from)
            .and_then(|m| start_for(&m, scenario));
        for &dt in dts {
            let (done, wall, contacts, error) = match &start {
                Ok(s) => time_point(s, dt, steps),
                Err(e) => (0, 0.0, 0, Some(e.to_string())),
            };
            let sim_time = done as f64 * dt;
            out.push(BenchPoint {
                scenario,
                dt,
                disk_count: n,
                steps: done,
                sim_time,
                wall_time: wall,
                rtf: if wall > 0.0 { sim_time / wall } else { 0.0 },
                contacts,
                error,
            });
        }
    }
    out
}

pub fn write_bench_csv<W: Write>(mut out: W, points: &[BenchPoint]) -> io::Result<()> {
    writeln!(out, "scenario,dt,N,steps,wall_time_s,rtf,contacts,error")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.scenario.label(),
            p.dt,
            p.disk_count,
            p.steps,
            p.wall_time,
            p.rtf,
            p.contacts,
            p.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        )?;
    }
    Ok(())
}
