//! Fitting UJ chains to constant-curvature arcs and the two accuracy
//! experiments built on it: a CC-vs-UJ sweep over the bending grid and a
//! replay of one grasp episode through coarse chains against a fine one.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{describe, BoxStats};
use crate::env::action::Action;
use crate::env::episode::{run_episode, Policy, PrimitivePolicy, ReplayPolicy};
use crate::env::observation::Observation;
use crate::env::{EpisodeConfig, GraspEnv, Placement};
use crate::error::{EnvError, KinematicsError};
use crate::kinematics::{
    cc_estimate, cc_fk, rot_x, rot_y, so3_left_jacobian_inv, so3_log_unchecked, CcConfig, Pose,
    UjConfig,
};
use crate::model::{BoxSpec, RobotModel};

/// Small enough that the regularizer moves the mean tip position by less
/// than 1e-6 m relative to an unregularized fit.
pub const DEFAULT_ALPHA: f64 = 1e-7;
/// Convergence threshold on the objective gradient norm.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 500;
/// Bending range covered by the sweep grid, rad.
pub const SWEEP_RANGE: f64 = 2.1;

#[derive(Debug, Clone, PartialEq)]
pub struct IkProblem {
    pub target: CcConfig,
    pub disk_count: usize,
    /// Orientation weight, m/rad.
    pub lambda: f64,
    pub alpha: f64,
    /// Extra starting point tried alongside the default starts.
    pub initial: Option<Vec<f64>>,
}

impl IkProblem {
    /// Defaults: `lambda` = joint length, `alpha` = `DEFAULT_ALPHA`.
    pub fn new(target: CcConfig, disk_count: usize) -> Self {
        Self {
            target,
            disk_count,
            lambda: target.length,
            alpha: DEFAULT_ALPHA,
            initial: None,
        }
    }

    pub fn uj_count(&self) -> usize {
        self.disk_count - 1
    }

    pub fn half_length(&self) -> f64 {
        self.target.length / (2.0 * self.uj_count() as f64)
    }

    fn validate(&self) -> Result<(), KinematicsError> {
        if self.disk_count < 2 {
            return Err(KinematicsError::BadAngleCount(0));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(KinematicsError::BadLength(self.lambda));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(KinematicsError::BadLength(self.alpha));
        }
        if let Some(p) = &self.initial {
            if p.len() != 2 * self.uj_count() {
                return Err(KinematicsError::BadAngleCount(p.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    pub phi: UjConfig,
    pub position_error: f64,
    pub orientation_error: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

/// Tip pose of a UJ chain plus the base-frame axis and pivot of every angle.
struct ChainJacobianData {
    tip: Pose,
    axes: Vec<Vector3<f64>>,
    pivots: Vec<Vector3<f64>>,
}

fn chain_with_axes(phi: &[f64], ell: f64) -> ChainJacobianData {
    let mut rot = Matrix3::identity();
    let mut pos = Vector3::zeros();
    let mut axes = Vec::with_capacity(phi.len());
    let mut pivots = Vec::with_capacity(phi.len());
    for pair in phi.chunks_exact(2) {
        let pivot = pos + rot.column(2) * ell;
        axes.push(rot.column(0).into_owned());
        pivots.push(pivot);
        let r1 = rot * rot_x(pair[0]);
        axes.push(r1.column(1).into_owned());
        pivots.push(pivot);
        rot = r1 * rot_y(pair[1]);
        pos = pivot + rot.column(2) * ell;
    }
    ChainJacobianData {
        tip: Pose::new(rot, pos),
        axes,
        pivots,
    }
}

/// Residual `[p - p_cc; lambda * log(R^T R_cc); sqrt(alpha) * phi]` whose squared
/// norm is the IK objective.
pub fn residual(prob: &IkProblem, target: &Pose, phi: &[f64]) -> DVector<f64> {
    residual_and_jacobian(prob, target, phi, false).0
}

/// Residual and its analytic Jacobian.
pub fn residual_and_jacobian(
    prob: &IkProblem,
    target: &Pose,
    phi: &[f64],
    with_jacobian: bool,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = phi.len();
    let c = chain_with_axes(phi, prob.half_length());
    let e = so3_log_unchecked(&(c.tip.rotation.transpose() * target.rotation));
    let sa = prob.alpha.sqrt();
    let mut r = DVector::zeros(6 + n);
    r.fixed_rows_mut::<3>(0).copy_from(&(c.tip.translation - target.translation));
    r.fixed_rows_mut::<3>(3).copy_from(&(e * prob.lambda));
    for (k, p) in phi.iter().enumerate() {
        r[6 + k] = sa * p;
    }
    if !with_jacobian {
        return (r, DMatrix::zeros(0, 0));
    }
    let mut jac = DMatrix::zeros(6 + n, n);
    let jl_inv = so3_left_jacobian_inv(&e);
    let rt = c.tip.rotation.transpose();
    for k in 0..n {
        let a = c.axes[k];
        let dp = a.cross(&(c.tip.translation - c.pivots[k]));
        let de = -(jl_inv * (rt * a)) * prob.lambda;
        jac.fixed_view_mut::<3, 1>(0, k).copy_from(&dp);
        jac.fixed_view_mut::<3, 1>(3, k).copy_from(&de);
        jac[(6 + k, k)] = sa;
    }
    (r, jac)
}

pub fn objective(prob: &IkProblem, phi: &[f64]) -> f64 {
    residual(prob, &cc_fk(&prob.target), phi).norm_squared()
}

/// Planar bend split evenly: every UJ takes `q / (N - 1)`.
pub fn uniform_split(q: [f64; 2], disk_count: usize) -> Vec<f64> {
    let m = (disk_count - 1) as f64;
    (0..disk_count - 1).flat_map(|_| [q[0] / m, q[1] / m]).collect()
}

struct Descent {
    phi: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Levenberg-Marquardt from one start. Only steps that lower the objective
/// are accepted, so the objective never increases.
fn descend(prob: &IkProblem, target: &Pose, start: Vec<f64>) -> Descent {
    let n = start.len();
    let mut phi = start;
    let (mut r, mut jac) = residual_and_jacobian(prob, target, &phi, true);
    let mut f = r.norm_squared();
    let mut history = vec![f];
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        let g = jac.tr_mul(&r);
        if 2.0 * g.norm() < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let jtj = jac.tr_mul(&jac);
        let mut accepted = false;
        while mu < 1e12 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += mu;
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let trial: Vec<f64> = phi.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            if trial.iter().all(|p| p.abs() < std::f64::consts::PI) {
                let rt = residual(prob, target, &trial);
                let ft = rt.norm_squared();
                if ft < f {
                    phi = trial;
                    (r, jac) = residual_and_jacobian(prob, target, &phi, true);
                    f = ft;
                    history.push(f);
                    mu = (mu / 3.0).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted {
            // no descent direction left at working precision
            converged = 2.0 * jac.tr_mul(&r).norm() < GRADIENT_TOLERANCE;
            break;
        }
    }
    Descent {
        phi,
        objective: f,
        iterations,
        converged,
        history,
    }
}

/// Best local minimum over starts from the uniform split, from zero and from
/// the optional user guess.
pub fn solve_uj_from_cc(prob: &IkProblem) -> Result<IkResult, KinematicsError> {
    prob.validate()?;
    let target = cc_fk(&prob.target);
    let mut starts = vec![
        uniform_split(prob.target.q, prob.disk_count),
        vec![0.0; 2 * prob.uj_count()],
    ];
    starts.extend(prob.initial.clone());
    let best = starts
        .into_iter()
        .map(|s| descend(prob, &target, s))
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one start");
    let c = chain_with_axes(&best.phi, prob.half_length());
    let e = so3_log_unchecked(&(c.tip.rotation.transpose() * target.rotation));
    Ok(IkResult {
        position_error: (c.tip.translation - target.translation).norm(),
        orientation_error: e.norm(),
        objective: best.objective,
        iterations: best.iterations,
        converged: best.converged,
        history: best.history,
        phi: UjConfig::new(best.phi, prob.half_length())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub disk_count: usize,
    pub q: [f64; 2],
    pub position_error: f64,
    pub orientation_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub disk_count: usize,
    pub position: BoxStats,
    pub orientation: BoxStats,
    pub nonconverged: usize,
}

/// `resolution` evenly spaced values over `[-SWEEP_RANGE, SWEEP_RANGE]`.
pub fn grid_axis(resolution: usize) -> Vec<f64> {
    if resolution == 1 {
        return vec![0.0];
    }
    (0..resolution)
        .map(|i| -SWEEP_RANGE + 2.0 * SWEEP_RANGE * i as f64 / (resolution - 1) as f64)
        .collect()
}

/// IK fit of every grid point for every disk count. Rows are ordered by disk
/// count, then `q0`, then `q1`.
pub fn sweep_cc_vs_uj(
    disk_counts: &[usize],
    resolution: usize,
    length: f64,
) -> Result<Vec<SweepRow>, KinematicsError> {
    let axis = grid_axis(resolution);
    let mut jobs = Vec::new();
    for &n in disk_counts {
        for &q0 in &axis {
            for &q1 in &axis {
                jobs.push((n, [q0, q1]));
            }
        }
    }
    jobs.par_iter()
        .map(|&(n, q)| {
            let r = solve_uj_from_cc(&IkProblem::new(CcConfig::new(q, length)?, n))?;
            Ok(SweepRow {
                disk_count: n,
                q,
                position_error: r.position_error,
                orientation_error: r.orientation_error,
                converged: r.converged,
            })
        })
        .collect()
}

pub fn summarize_sweep(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut counts: Vec<usize> = rows.iter().map(|r| r.disk_count).collect();
    counts.dedup();
    counts
        .into_iter()
        .filter_map(|n| {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.disk_count == n).collect();
            let pos: Vec<f64> = sel.iter().map(|r| r.position_error).collect();
            let ori: Vec<f64> = sel.iter().map(|r| r.orientation_error).collect();
            Some(SweepSummary {
                disk_count: n,
                position: describe(&pos)?,
                orientation: describe(&ori)?,
                nonconverged: sel.iter().filter(|r| !r.converged).count(),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "N,q0,q1,pos_err_m,ori_err_rad,converged")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.disk_count, r.q[0], r.q[1], r.position_error, r.orientation_error, r.converged
        )?;
    }
    Ok(())
}

pub fn write_box_stats_header<W: Write>(out: &mut W, key: &str) -> io::Result<()> {
    writeln!(
        out,
        "{key},metric,count,min,q1,median,q3,max,mean"
    )
}

pub fn write_box_stats_row<W: Write>(
    out: &mut W,
    key: &str,
    metric: &str,
    s: &BoxStats,
) -> io::Result<()> {
    writeln!(
        out,
        "{key},{metric},{},{},{},{},{},{},{}",
        s.count, s.min, s.q1, s.median, s.q3, s.max, s.mean
    )
}

pub fn write_sweep_summary_csv<W: Write>(mut out: W, s: &[SweepSummary]) -> io::Result<()> {
    write_box_stats_header(&mut out, "N")?;
    for row in s {
        let key = row.disk_count.to_string();
        write_box_stats_row(&mut out, &key, "pos_err_m", &row.position)?;
        write_box_stats_row(&mut out, &key, "ori_err_rad", &row.orientation)?;
    }
    Ok(())
}

/// Settings of the coarse-vs-fine replay experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct NonCcConfig {
    pub disk_counts: Vec<usize>,
    pub reference: usize,
    /// Policy steps to replay (1200 at 20 Hz is 60 s).
    pub steps: usize,
    pub seed: u64,
    pub box_spec: BoxSpec,
    pub placement: Placement,
}

impl NonCcConfig {
    /// The nominal box at 5 kg, centred and square to the robot.
    pub fn from_model(m: &RobotModel) -> Self {
        let mut box_spec = m.task.nominal_box.clone();
        box_spec.mass = 5.0;
        Self {
            disk_counts: vec![2, 4, 8, 16, 32],
            reference: 64,
            steps: 1200,
            seed: 0,
            box_spec,
            placement: Placement { offset: 0.0, yaw: 0.0 },
        }
    }
}

/// Relative base-to-tip pose of every continuum joint, left arm first.
fn joint_poses(env: &GraspEnv) -> Vec<Pose> {
    let (scene, state) = (env.scene().expect("reset"), env.state().expect("reset"));
    (0..2)
        .flat_map(|side| {
            let kin = scene.arm_kinematics(state, side);
            kin.disks
                .iter()
                .map(|d| d[0].inverse().compose(&d[d.len() - 1]))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Joint poses of one replayed episode, per policy step.
struct Trace {
    poses: Vec<Vec<Pose>>,
    contact: Vec<bool>,
    error: Option<String>,
}

struct Recorder<P: Policy> {
    inner: P,
    actions: Vec<Action>,
}

impl<P: Policy> Policy for Recorder<P> {
    fn act(&mut self, obs: &Observation, expert: &Action) -> Action {
        let a = self.inner.act(obs, expert);
        self.actions.push(a);
        a
    }
}

fn replay(model: &RobotModel, cfg: &EpisodeConfig, seed: u64, policy: &mut dyn Policy) -> Result<Trace, EnvError> {
    let mut env = GraspEnv::new(model.clone(), cfg.clone())?;
    let mut obs = env.reset(seed)?;
    let mut trace = Trace {
        poses: Vec::new(),
        contact: Vec::new(),
        error: None,
    };
    loop {
        let expert = env.expert_action().expect("reset");
        let a = policy.act(&obs, &expert);
        let r = env.step(&a)?;
        if let Some(e) = r.info.error {
            trace.error = Some(e);
            break;
        }
        trace.poses.push(joint_poses(&env));
        trace.contact.push(r.info.contacts > 0);
        obs = r.obs;
        if r.terminated || r.truncated {
            break;
        }
    }
    Ok(trace)
}

/// Per-sample errors of one model against the reference chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelErrors {
    /// `N=<count>` for a UJ chain, `CC` for the constant-curvature estimate.
    pub label: String,
    pub disk_count: Option<usize>,
    /// One entry per policy step and continuum joint.
    pub position: Vec<f64>,
    pub orientation: Vec<f64>,
    /// Whether the reference arms touched the box at that sample.
    pub in_contact: Vec<bool>,
    pub error: Option<String>,
}

impl ModelErrors {
    fn stats(&self, v: &[f64], contact_only: bool) -> Option<BoxStats> {
        let sel: Vec<f64> = v
            .iter()
            .zip(&self.in_contact)
            .filter(|(_, c)| !contact_only || **c)
            .map(|(x, _)| *x)
            .collect();
        describe(&sel)
    }

    pub fn position_stats(&self) -> Option<BoxStats> {
        self.stats(&self.position, false)
    }

    pub fn orientation_stats(&self) -> Option<BoxStats> {
        self.stats(&self.orientation, false)
    }

    pub fn contact_position_stats(&self) -> Option<BoxStats> {
        self.stats(&self.position, true)
    }

    pub fn contact_orientation_stats(&self) -> Option<BoxStats> {
        self.stats(&self.orientation, true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonCcReport {
    pub models: Vec<ModelErrors>,
    /// Length of one continuum joint, used to turn a position error into an
    /// angle bound.
    pub joint_length: f64,
    pub steps: usize,
}

/// Orientation error a CC arc of length `length` would need to produce a tip
/// position error of `position_error`: near straight, bending by `d` moves
/// the tip sideways by `length * d / 2`.
pub fn position_implied_orientation(position_error: f64, length: f64) -> f64 {
    2.0 * position_error / length
}

impl NonCcReport {
    pub fn model(&self, label: &str) -> Option<&ModelErrors> {
        self.models.iter().find(|m| m.label == label)
    }
}

fn pose_errors(a: &Pose, b: &Pose) -> (f64, f64) {
    (
        (a.translation - b.translation).norm(),
        so3_log_unchecked(&(a.rotation.transpose() * b.rotation)).norm(),
    )
}

/// Runs the primitive on the reference chain, replays its actions through
/// each coarse chain, and compares joint tip poses step by step. The CC
/// estimate is the arc fitted to each reference joint's tip orientation.
pub fn nonconstant_curvature_experiment(
    model: &RobotModel,
    cfg: &NonCcConfig,
) -> Result<NonCcReport, EnvError> {
    let mut ecfg = EpisodeConfig::from_model(model);
    ecfg.box_spec = Some(cfg.box_spec.clone());
    ecfg.placement = Some(cfg.placement);
    ecfg.max_steps = cfg.steps;
    ecfg.terminate_on_event = false;

    let reference = model.with_disk_count(cfg.reference)?;
    let mut rec = Recorder {
        inner: PrimitivePolicy,
        actions: Vec::new(),
    };
    let ref_trace = replay(&reference, &ecfg, cfg.seed, &mut rec)?;
    if let Some(e) = &ref_trace.error {
        return Err(EnvError::Config(format!("reference run failed: {e}")));
    }
    let joints: Vec<f64> = reference
        .arms()
        .iter()
        .flat_map(|a| a.joints.iter().map(|j| j.length))
        .collect();
    let joint_length = joints[0];
    let contact_flags = |n: usize| -> Vec<bool> {
        ref_trace
            .contact
            .iter()
            .take(n)
            .flat_map(|&c| std::iter::repeat_n(c, joints.len()))
            .collect()
    };

    let mut models: Vec<ModelErrors> = cfg
        .disk_counts
        .par_iter()
        .map(|&n| -> Result<ModelErrors, EnvError> {
            let m = model.with_disk_count(n)?;
            let mut policy = ReplayPolicy::new(rec.actions.clone());
            let trace = replay(&m, &ecfg, cfg.seed, &mut policy)?;
            let (mut position, mut orientation) = (Vec::new(), Vec::new());
            for (coarse, fine) in trace.poses.iter().zip(&ref_trace.poses) {
                for (a, b) in coarse.iter().zip(fine) {
                    let (p, o) = pose_errors(a, b);
                    position.push(p);
                    orientation.push(o);
                }
            }
            Ok(ModelErrors {
                label: format!("N={n}"),
                disk_count: Some(n),
                in_contact: contact_flags(trace.poses.len()),
                position,
                orientation,
                error: trace.error,
            })
        })
        .collect::<Result<_, _>>()?;

    let (mut position, mut orientation) = (Vec::new(), Vec::new());
    for fine in &ref_trace.poses {
        for (b, &len) in fine.iter().zip(&joints) {
            let est = cc_estimate(&b.rotation, len)
                .map_err(|e| EnvError::Config(format!("arc fit failed: {e}")))?;
            let (p, o) = pose_errors(&cc_fk(&est.config), b);
            position.push(p);
            orientation.push(o);
        }
    }
    models.push(ModelErrors {
        label: "CC".into(),
        disk_count: None,
        in_contact: contact_flags(ref_trace.poses.len()),
        position,
        orientation,
        error: None,
    });
    Ok(NonCcReport {
        models,
        joint_length,
        steps: ref_trace.poses.len(),
    })
}

pub fn write_noncc_summary_csv<W: Write>(mut out: W, r: &NonCcReport) -> io::Result<()> {
    write_box_stats_header(&mut out, "model")?;
    for m in &r.models {
        let rows = [
            ("pos_err_m", m.position_stats()),
            ("ori_err_rad", m.orientation_stats()),
            ("pos_err_contact_m", m.contact_position_stats()),
            ("ori_err_contact_rad", m.contact_orientation_stats()),
        ];
        for (metric, s) in rows {
            if let Some(s) = s {
                write_box_stats_row(&mut out, &m.label, metric, &s)?;
            }
        }
    }
    Ok(())
}

/// Helper for tests and tools: run the primitive once and return its actions.
pub fn primitive_actions(
    model: &RobotModel,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<Vec<Action>, EnvError> {
    let mut env = GraspEnv::new(model.clone(), cfg.clone())?;
    Ok(run_episode(&mut env, &mut PrimitivePolicy, seed, false)?
        .record
        .actions)
}
