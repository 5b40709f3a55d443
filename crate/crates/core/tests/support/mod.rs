//! Scenarios shared by the property tests and the acceptance report.
#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softchain::dynamics::chain::{ArmDynamics, ArmKinematics, ArmLayout};
use softchain::dynamics::contact::BodyId;
use softchain::dynamics::tendon::{chamber_force, uj_tendon_potential, uj_tendon_torque};
use softchain::dynamics::{Command, Scene, SimState};
use softchain::env::action::{Action, ActionBounds};
use softchain::env::episode::{run_episode, Policy, PrimitivePolicy};
use softchain::env::observation::Observation;
use softchain::env::sampling::sample_boxes;
use softchain::env::{EpisodeConfig, GraspEnv, Placement, StepResult};
use softchain::kinematics::{rot_z, Pose};
use softchain::model::{BoxSpec, RobotModel};

pub fn far_box_scene(model: RobotModel) -> (Scene, SimState) {
    let spec = model.task.nominal_box.clone();
    let scene = Scene::new(model, spec.clone());
    let pose = Pose::new(rot_z(0.3), Vector3::new(6.0, 0.0, 0.5 * spec.size[2]));
    let state = scene.initial_state(&pose);
    (scene, state)
}

pub struct Ballistic {
    pub drop: f64,
    pub analytic: f64,
    pub touched: bool,
    pub drift: f64,
}

/// Drops the box from 3 m for 0.5 s at dt = 1 ms, far from the robot.
pub fn ballistic_drop() -> Ballistic {
    let (scene, mut state) = far_box_scene(RobotModel::shipped());
    let z0 = 3.0;
    state.box_position.z = z0;
    let cmd = Command::hold(0.0, scene.model.actuator.p_mean);
    let dt = 1e-3;
    let steps = 500;
    let mut touched = false;
    for _ in 0..steps {
        let (next, report) = scene.step(&state, &cmd, &Vector3::zeros(), dt).unwrap();
        touched |= report
            .contacts
            .iter()
            .any(|c| c.bodies.0 == BodyId::Box || c.bodies.1 == BodyId::Box);
        state = next;
    }
    let t = steps as f64 * dt;
    Ballistic {
        drop: z0 - state.box_position.z,
        analytic: 0.5 * scene.model.sim.gravity * t * t,
        touched,
        drift: (state.box_position.x - 6.0).hypot(state.box_position.y),
    }
}

pub struct EnergyAudit {
    pub worst_rise: f64,
    pub initial: f64,
    pub last: f64,
}

/// Releases both arms from a random bent, moving pose with unpowered chambers.
pub fn passive_energy() -> EnergyAudit {
    let (scene, mut state) = far_box_scene(RobotModel::shipped());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for arm in &mut state.arms {
        for p in arm.phi.iter_mut() {
            *p = rng.random_range(-0.25..0.25);
        }
        for v in arm.phid.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        arm.pressure = [0.0; 12];
    }
    // unpowered chambers and a parked elevator leave only conservative and
    // dissipative forces
    let cmd = Command::hold(0.0, 0.0);
    let dt = scene.model.sim.dt;
    let initial = scene.energy(&state).total();
    let mut e = initial;
    let mut worst_rise = f64::NEG_INFINITY;
    for _ in 0..2000 {
        state = scene.step(&state, &cmd, &Vector3::zeros(), dt).unwrap().0;
        let next = scene.energy(&state).total();
        worst_rise = worst_rise.max(next - e);
        e = next;
    }
    EnergyAudit {
        worst_rise,
        initial,
        last: e,
    }
}

pub struct MassMatrixAudit {
    pub checked: usize,
    pub min_eigenvalue: f64,
    pub max_asymmetry: f64,
    pub cholesky_failures: usize,
}

/// Mass matrices of both arms at `per_arm` random configurations each.
pub fn mass_matrices(per_arm: usize) -> MassMatrixAudit {
    let model = RobotModel::shipped();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let zero = Vector3::zeros();
    let mut audit = MassMatrixAudit {
        checked: 0,
        min_eigenvalue: f64::INFINITY,
        max_asymmetry: 0.0,
        cholesky_failures: 0,
    };
    for spec in model.arms() {
        let layout = ArmLayout::new(spec);
        let limit = spec.joints[0].per_uj_limit();
        for _ in 0..per_arm {
            let torso = Pose::from_translation(Vector3::new(0.0, 0.0, rng.random_range(0.4..2.0)));
            let phi: Vec<f64> = (0..layout.dof()).map(|_| rng.random_range(-limit..limit)).collect();
            let phid: Vec<f64> = (0..layout.dof()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let kin = ArmKinematics::compute(&layout, &torso, &phi);
            let d = ArmDynamics::compute(&layout, &kin, &phid, &zero, &zero, 9.81);
            audit.max_asymmetry = audit.max_asymmetry.max((&d.mass - d.mass.transpose()).abs().max());
            audit.min_eigenvalue = audit
                .min_eigenvalue
                .min(d.mass.clone().symmetric_eigen().eigenvalues.min());
            if d.mass.clone().cholesky().is_none() {
                audit.cholesky_failures += 1;
            }
            audit.checked += 1;
        }
    }
    audit
}

/// Worst relative gap between the analytic tendon torque and central
/// differences of the tendon potential over random joint states.
pub fn tendon_fd_worst() -> f64 {
    let model = RobotModel::shipped();
    let j = &model.left.joints[0];
    let (ell, r) = (j.half_length(), j.tendon_radius());
    let area = model.actuator.area;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let limit = j.per_uj_limit();
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (px, py) = (rng.random_range(-limit..limit), rng.random_range(-limit..limit));
        let f: [f64; 4] = std::array::from_fn(|_| chamber_force(rng.random_range(0.0..300.0), area));
        let (tau, _) = uj_tendon_torque(px, py, ell, r, &f);
        let h = 1e-6;
        let u = |dx: f64, dy: f64| uj_tendon_potential(px + dx, py + dy, ell, r, &f);
        let fd = [
            -(u(h, 0.0) - u(-h, 0.0)) / (2.0 * h),
            -(u(0.0, h) - u(0.0, -h)) / (2.0 * h),
        ];
        let scale = tau[0].abs().max(tau[1].abs()).max(1e-9);
        for k in 0..2 {
            worst = worst.max((fd[k] - tau[k]).abs() / scale);
        }
    }
    worst
}

/// Runs the same seeded 200-step primitive episode twice; true when records,
/// step logs and final states serialize identically.
pub fn replay_identical() -> bool {
    let model = RobotModel::shipped();
    let mut cfg = EpisodeConfig::from_model(&model);
    cfg.max_steps = 200;
    cfg.placement = Some(Placement { offset: 0.03, yaw: 0.2 });
    cfg.box_spec = Some(BoxSpec {
        size: [0.35, 0.4, 0.9],
        mass: 4.0,
        friction: 0.5,
    });
    let run = || {
        let mut env = GraspEnv::new(model.clone(), cfg.clone()).unwrap();
        let r = run_episode(&mut env, &mut PrimitivePolicy, 9, true).unwrap();
        let state = serde_json::to_string(env.state().unwrap()).unwrap();
        (r.record, r.rows, state)
    };
    run() == run()
}

/// Holds the home action: arms straight, elevator up.
pub struct Idle(pub Action);

impl Policy for Idle {
    fn act(&mut self, _obs: &Observation, _expert: &Action) -> Action {
        self.0
    }
}

/// Steps until the episode ends; returns the last two step results.
pub fn play(env: &mut GraspEnv, policy: &mut dyn Policy, seed: u64) -> (Option<StepResult>, StepResult) {
    let mut obs = env.reset(seed).unwrap();
    let mut prev = None;
    loop {
        let a = policy.act(&obs, &env.expert_action().unwrap());
        let r = env.step(&a).unwrap();
        if r.terminated || r.truncated {
            return (prev, r);
        }
        obs = r.obs.clone();
        prev = Some(r);
    }
}

/// Primitive on the nominal box, centred and square to the robot.
pub fn lift_scenario() -> (Option<StepResult>, StepResult) {
    let model = RobotModel::shipped();
    let mut cfg = EpisodeConfig::from_model(&model);
    cfg.placement = Some(Placement { offset: 0.0, yaw: 0.0 });
    let mut env = GraspEnv::new(model, cfg).unwrap();
    play(&mut env, &mut PrimitivePolicy, 0)
}

/// Primitive on a tall, light sampled box that topples.
pub fn tip_scenario() -> (Option<StepResult>, StepResult) {
    let model = RobotModel::shipped();
    let mut cfg = EpisodeConfig::from_model(&model);
    cfg.box_spec = Some(sample_boxes(8, 3, model.contact.mu_box_floor)[4].clone());
    let mut env = GraspEnv::new(model, cfg).unwrap();
    play(&mut env, &mut PrimitivePolicy, 7)
}

/// Idle arms never touch the box, so the episode runs out of steps. Also
/// returns the env to probe stepping after the end.
pub fn slip_scenario() -> (StepResult, GraspEnv, Action) {
    let model = RobotModel::shipped();
    let cfg = EpisodeConfig::from_model(&model);
    let home = ActionBounds::from_model(&model).home();
    let mut env = GraspEnv::new(model, cfg).unwrap();
    let (_, last) = play(&mut env, &mut Idle(home), 2);
    (last, env, home)
}
