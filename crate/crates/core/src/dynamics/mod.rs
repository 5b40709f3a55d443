//! Forward dynamics of the full scene: two arms on a prescribed elevator,
//! pneumatic chambers with pressure lag, joint limits, penalty contact and a
//! free box.
//!
//! One step is linearly implicit Euler. Joint springs and dampers, limit and
//! contact penalties, and friction act on the end-of-step velocity; gravity,
//! Coriolis, tendon and gyroscopic terms are explicit. Contact rows that
//! couple an arm to the box are handled with a Woodbury update on top of one
//! Cholesky factor per arm.

pub mod chain;
pub mod contact;
pub mod elevator;
pub mod limits;
pub mod log;
pub mod pressure;
pub mod tendon;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::kinematics::{uj_chain_rotation, Pose};
use crate::model::{BoxSpec, RobotModel};
use chain::{ArmDynamics, ArmKinematics, ArmLayout};
use contact::{BodyId, ContactPoint, Obb};
use elevator::{Elevator, MotionLimits};
use limits::LimitRow;

pub const CHAMBERS_PER_ARM: usize = 12;

/// Samples per box edge used for box/chest contact.
const EDGE_SAMPLES: usize = 3;
/// Extra solves allowed to release contacts that would pull.
const MAX_RELEASE_PASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub phi: Vec<f64>,
    pub phid: Vec<f64>,
    /// Chamber pressures, kPa, four per joint.
    pub pressure: [f64; CHAMBERS_PER_ARM],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub arms: [ArmState; 2],
    pub elevator: Elevator,
    pub h: f64,
    pub hd: f64,
    pub box_position: Vector3<f64>,
    pub box_orientation: UnitQuaternion<f64>,
    pub box_velocity: Vector3<f64>,
    pub box_angular_velocity: Vector3<f64>,
    pub time: f64,
}

impl SimState {
    pub fn box_pose(&self) -> Pose {
        Pose::new(
            self.box_orientation.to_rotation_matrix().into_inner(),
            self.box_position,
        )
    }

    pub fn is_finite(&self) -> bool {
        let arms = self.arms.iter().all(|a| {
            a.phi.iter().chain(&a.phid).chain(&a.pressure).all(|v| v.is_finite())
        });
        arms && self.h.is_finite()
            && self.hd.is_finite()
            && self.box_position.iter().all(|v| v.is_finite())
            && self.box_orientation.coords.iter().all(|v| v.is_finite())
            && self.box_velocity.iter().all(|v| v.is_finite())
            && self.box_angular_velocity.iter().all(|v| v.is_finite())
    }
}

/// Elevator target and desired chamber pressures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub h_des: f64,
    pub pressures: [[f64; CHAMBERS_PER_ARM]; 2],
}

impl Command {
    pub fn hold(h_des: f64, p: f64) -> Self {
        Self {
            h_des,
            pressures: [[p; CHAMBERS_PER_ARM]; 2],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub contacts: Vec<ContactPoint>,
    pub degenerate_tendons: usize,
    pub active_limits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub gravity: f64,
    pub elastic: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.gravity + self.elastic
    }
}

/// Immutable scene: robot model, its discretization and the manipuland.
#[derive(Debug, Clone)]
pub struct Scene {
    pub model: RobotModel,
    pub layouts: [ArmLayout; 2],
    pub box_spec: BoxSpec,
    box_inertia: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Party {
    Floor,
    Chest,
    Box,
    Arm { side: usize, sphere: usize },
}

#[derive(Debug, Clone, Copy)]
struct RawContact {
    a: Party,
    b: Party,
    point: Vector3<f64>,
    normal: Vector3<f64>,
    depth: f64,
    weight: f64,
    mu: f64,
}

/// One linearized constraint row: force `lam0 - coef * (J v)` along `J`.
#[derive(Debug, Clone)]
struct Row {
    side: Option<usize>,
    arm: Vec<f64>,
    boxj: Option<Vector6<f64>>,
    coef: f64,
    lam0: f64,
    contact: usize,
    dir: Vector3<f64>,
    normal: bool,
}

impl Scene {
    pub fn new(model: RobotModel, box_spec: BoxSpec) -> Scene {
        let layouts = [ArmLayout::new(&model.left), ArmLayout::new(&model.right)];
        let box_inertia = box_spec.inertia();
        Scene {
            model,
            layouts,
            box_spec,
            box_inertia,
        }
    }

    pub fn motion_limits(&self) -> MotionLimits {
        let e = &self.model.elevator;
        MotionLimits {
            v_max: e.v_max,
            a_max: e.a_max,
            j_max: e.j_max,
        }
    }

    /// Home pose: straight arms, elevator at 0, every chamber at the mean pressure.
    pub fn initial_state(&self, box_pose: &Pose) -> SimState {
        let arm = |l: &ArmLayout| ArmState {
            phi: vec![0.0; l.dof()],
            phid: vec![0.0; l.dof()],
            pressure: [self.model.actuator.p_mean; CHAMBERS_PER_ARM],
        };
        let e = &self.model.elevator;
        let rot = nalgebra::Rotation3::from_matrix_unchecked(box_pose.rotation);
        SimState {
            arms: [arm(&self.layouts[0]), arm(&self.layouts[1])],
            elevator: Elevator::new(0.0, self.motion_limits(), (e.h_min, e.h_max)),
            h: 0.0,
            hd: 0.0,
            box_position: box_pose.translation,
            box_orientation: UnitQuaternion::from_rotation_matrix(&rot),
            box_velocity: Vector3::zeros(),
            box_angular_velocity: Vector3::zeros(),
            time: 0.0,
        }
    }

    pub fn torso_pose(&self, h: f64) -> Pose {
        Pose::from_translation(Vector3::new(0.0, 0.0, self.model.torso.base_height + h))
    }

    pub fn chest_obb(&self, h: f64) -> Obb {
        let t = &self.model.torso;
        Obb {
            pose: Pose::from_translation(
                self.torso_pose(h).translation + Vector3::from(t.chest_offset),
            ),
            half: Vector3::from(t.chest_half_extents),
        }
    }

    pub fn box_obb(&self, state: &SimState) -> Obb {
        Obb {
            pose: state.box_pose(),
            half: self.box_spec.half_extents(),
        }
    }

    pub fn arm_kinematics(&self, state: &SimState, side: usize) -> ArmKinematics {
        ArmKinematics::compute(
            &self.layouts[side],
            &self.torso_pose(state.h),
            &state.arms[side].phi,
        )
    }

    /// Relative base-to-tip rotation of joint `joint` on arm `side`.
    pub fn joint_rotation(&self, state: &SimState, side: usize, joint: usize) -> Matrix3<f64> {
        let jl = &self.layouts[side].joints[joint];
        uj_chain_rotation(&state.arms[side].phi[jl.first_dof..jl.first_dof + 2 * jl.uj_count])
    }

    fn limit_rows(&self, side: usize, phi: &[f64]) -> Vec<LimitRow> {
        let c = &self.model.contact;
        let mut rows = Vec::new();
        for jl in &self.layouts[side].joints {
            for k in 0..jl.uj_count {
                let d = jl.first_dof + 2 * k;
                if c.hard_limits {
                    for dof in [d, d + 1] {
                        rows.extend(limits::hard_limit_row(
                            dof, phi[dof], jl.limit, c.k_limit, c.c_limit,
                        ));
                    }
                }
                if c.rim_contact {
                    rows.extend(limits::rim_row(
                        [d, d + 1],
                        phi[d],
                        phi[d + 1],
                        jl.half_length,
                        jl.disk_radius,
                        jl.disk_thickness,
                        c.k_n,
                        c.c_n,
                    ));
                }
            }
        }
        rows
    }

    fn tendon_torques(&self, side: usize, phi: &[f64], pressure: &[f64; 12], out: &mut [f64]) -> usize {
        let area = self.model.actuator.area;
        let mut degenerate = 0;
        for (ji, jl) in self.layouts[side].joints.iter().enumerate() {
            let f: [f64; 4] = std::array::from_fn(|c| tendon::chamber_force(pressure[4 * ji + c], area));
            for k in 0..jl.uj_count {
                let d = jl.first_dof + 2 * k;
                let (tau, deg) =
                    tendon::uj_tendon_torque(phi[d], phi[d + 1], jl.half_length, jl.tendon_radius, &f);
                out[d] += tau[0];
                out[d + 1] += tau[1];
                degenerate += deg;
            }
        }
        degenerate
    }

    fn detect(&self, state: &SimState, kins: &[ArmKinematics; 2]) -> Vec<RawContact> {
        let c = &self.model.contact;
        let mut out = Vec::new();
        let bx = self.box_obb(state);
        let chest = self.chest_obb(state.h);
        let reach = bx.half.norm();
        for (side, kin) in kins.iter().enumerate() {
            for (si, s) in self.layouts[side].spheres.iter().enumerate() {
                let p = kin.sphere_center(s);
                let arm = Party::Arm { side, sphere: si };
                if let Some(hit) = contact::sphere_floor(&p, s.radius) {
                    out.push(RawContact {
                        a: arm,
                        b: Party::Floor,
                        point: hit.point,
                        normal: hit.normal,
                        depth: hit.depth,
                        weight: s.weight,
                        mu: c.mu_arm_floor,
                    });
                }
                if (p - bx.pose.translation).norm() > reach + s.radius {
                    continue;
                }
                if let Some(hit) = contact::sphere_obb(&p, s.radius, &bx) {
                    out.push(RawContact {
                        a: arm,
                        b: Party::Box,
                        point: hit.point,
                        normal: hit.normal,
                        depth: hit.depth,
                        weight: s.weight,
                        mu: c.mu_arm_box,
                    });
                }
            }
        }
        for p in bx.corners() {
            if p.z < 0.0 {
                out.push(RawContact {
                    a: Party::Box,
                    b: Party::Floor,
                    point: p,
                    normal: Vector3::z(),
                    depth: -p.z,
                    weight: 1.0,
                    mu: self.box_spec.friction,
                });
            }
        }
        let near = (bx.pose.translation - chest.pose.translation).norm()
            < reach + chest.half.norm();
        if near {
            for p in bx.surface_samples(EDGE_SAMPLES) {
                if let Some(pen) = chest.penetration(&p) {
                    out.push(RawContact {
                        a: Party::Box,
                        b: Party::Chest,
                        point: p,
                        normal: pen.normal,
                        depth: pen.depth,
                        weight: 1.0,
                        mu: c.mu_box_chest,
                    });
                }
            }
            for p in chest.surface_samples(EDGE_SAMPLES) {
                if let Some(pen) = bx.penetration(&p) {
                    out.push(RawContact {
                        a: Party::Chest,
                        b: Party::Box,
                        point: p,
                        normal: pen.normal,
                        depth: pen.depth,
                        weight: 1.0,
                        mu: c.mu_box_chest,
                    });
                }
            }
        }
        out
    }

    fn party_velocity(
        &self,
        party: Party,
        p: &Vector3<f64>,
        state: &SimState,
        kins: &[ArmKinematics; 2],
        base_vel: &Vector3<f64>,
    ) -> Vector3<f64> {
        match party {
            Party::Floor => Vector3::zeros(),
            Party::Chest => *base_vel,
            Party::Box => {
                state.box_velocity + state.box_angular_velocity.cross(&(p - state.box_position))
            }
            Party::Arm { side, sphere } => {
                let s = &self.layouts[side].spheres[sphere];
                kins[side].point_velocity(s.body, p, &state.arms[side].phid, base_vel)
            }
        }
    }

    fn body_id(&self, p: Party) -> BodyId {
        match p {
            Party::Floor => BodyId::Floor,
            Party::Chest => BodyId::Chest,
            Party::Box => BodyId::Box,
            Party::Arm { side, sphere } => BodyId::Arm {
                side: self.layouts[side].side,
                sphere,
            },
        }
    }

    /// Detected contacts with explicit penalty and friction force estimates at
    /// the current state.
    pub fn contacts(&self, state: &SimState) -> Vec<ContactPoint> {
        let kins = [self.arm_kinematics(state, 0), self.arm_kinematics(state, 1)];
        let base_vel = Vector3::new(0.0, 0.0, state.hd);
        let c = &self.model.contact;
        self.detect(state, &kins)
            .into_iter()
            .map(|rc| {
                let va = self.party_velocity(rc.a, &rc.point, state, &kins, &base_vel);
                let vb = self.party_velocity(rc.b, &rc.point, state, &kins, &base_vel);
                let rel = va - vb;
                let vn = rc.normal.dot(&rel);
                let f = rc.weight * contact::penalty_force(c.k_n, c.c_n, rc.depth, -vn);
                let vt = rel - rc.normal * vn;
                let gamma = contact::friction_coefficient(rc.mu, f, vt.norm(), c.friction_velocity);
                ContactPoint {
                    position: rc.point,
                    normal: rc.normal,
                    depth: rc.depth,
                    bodies: (self.body_id(rc.a), self.body_id(rc.b)),
                    force: f,
                    friction: -vt * gamma,
                }
            })
            .collect()
    }

    /// Advances the scene by `dt` under command `cmd` and an external force on
    /// the box centroid. On failure the input state remains the last valid one.
    pub fn step(
        &self,
        state: &SimState,
        cmd: &Command,
        box_force: &Vector3<f64>,
        dt: f64,
    ) -> Result<(SimState, StepReport), SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::BadCommand(format!("dt must be positive, got {dt}")));
        }
        if !cmd.h_des.is_finite() || cmd.pressures.iter().flatten().any(|p| !p.is_finite()) {
            return Err(SimError::BadCommand("non-finite command".into()));
        }
        let model = &self.model;
        let g = model.sim.gravity;
        let act = &model.actuator;
        let cs = &model.contact;
        let mut next = state.clone();
        let mut report = StepReport::default();

        for (arm, cmd_p) in next.arms.iter_mut().zip(&cmd.pressures) {
            for (p, pc) in arm.pressure.iter_mut().zip(cmd_p) {
                *p = pressure::pressure_step_bounded(
                    *p,
                    pc.clamp(act.p_min, act.p_max),
                    dt,
                    act.tau,
                    act.p_min,
                    act.p_max,
                );
            }
        }
        next.elevator.command(cmd.h_des, state.time);
        let elev = next.elevator.sample(state.time + dt);
        let base_vel = Vector3::new(0.0, 0.0, state.hd);
        let base_vel_next = Vector3::new(0.0, 0.0, elev.v);
        let base_acc = Vector3::new(0.0, 0.0, (elev.v - state.hd) / dt);

        let torso = self.torso_pose(state.h);
        let kins = [
            ArmKinematics::compute(&self.layouts[0], &torso, &state.arms[0].phi),
            ArmKinematics::compute(&self.layouts[1], &torso, &state.arms[1].phi),
        ];

        // per-arm implicit system before contact
        let mut a_base: Vec<DMatrix<f64>> = Vec::with_capacity(2);
        let mut r_base: Vec<DVector<f64>> = Vec::with_capacity(2);
        for side in 0..2 {
            let layout = &self.layouts[side];
            let arm = &state.arms[side];
            let n = layout.dof();
            let dynm = ArmDynamics::compute(layout, &kins[side], &arm.phid, &base_vel, &base_acc, g);
            let phid = DVector::from_column_slice(&arm.phid);
            let mut tau = -dynm.bias;
            report.degenerate_tendons +=
                self.tendon_torques(side, &arm.phi, &next.arms[side].pressure, tau.as_mut_slice());
            let mut a = dynm.mass;
            let mut rhs = &a * &phid;
            for i in 0..n {
                tau[i] -= layout.k_diag[i] * arm.phi[i];
                a[(i, i)] += dt * layout.c_diag[i] + dt * dt * layout.k_diag[i];
            }
            rhs.axpy(dt, &tau, 1.0);
            for row in self.limit_rows(side, &arm.phi) {
                report.active_limits += 1;
                let coef = row.stiffness * dt + row.damping;
                let lam0 = -row.stiffness * row.gap;
                for x in 0..row.count {
                    let (dx, gx) = (row.dofs[x], row.grad[x]);
                    rhs[dx] += dt * lam0 * gx;
                    for y in 0..row.count {
                        a[(dx, row.dofs[y])] += dt * coef * gx * row.grad[y];
                    }
                }
            }
            a_base.push(a);
            r_base.push(rhs);
        }

        let m = self.box_spec.mass;
        let rot = state.box_orientation.to_rotation_matrix().into_inner();
        let inertia_w = rot * self.box_inertia * rot.transpose();
        let w = state.box_angular_velocity;
        let mut mb_base = Matrix6::zeros();
        mb_base.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * m));
        mb_base.fixed_view_mut::<3, 3>(3, 3).copy_from(&inertia_w);
        let mut rb_base = Vector6::zeros();
        let lin = state.box_velocity * m + (Vector3::new(0.0, 0.0, -g * m) + box_force) * dt;
        let ang = inertia_w * w - w.cross(&(inertia_w * w)) * dt;
        rb_base.fixed_rows_mut::<3>(0).copy_from(&lin);
        rb_base.fixed_rows_mut::<3>(3).copy_from(&ang);

        // contact rows
        let raw = self.detect(state, &kins);
        let mut rows: Vec<Row> = Vec::with_capacity(raw.len() * 3);
        let mut explicit_normal = vec![0.0; raw.len()];
        for (ci, rc) in raw.iter().enumerate() {
            let va = self.party_velocity(rc.a, &rc.point, state, &kins, &base_vel);
            let vb = self.party_velocity(rc.b, &rc.point, state, &kins, &base_vel);
            let rel = va - vb;
            let vn = rc.normal.dot(&rel);
            let f_n = rc.weight * contact::penalty_force(cs.k_n, cs.c_n, rc.depth, -vn);
            explicit_normal[ci] = f_n;
            if f_n <= 0.0 {
                continue;
            }
            let vt = rel - rc.normal * vn;
            let gamma = contact::friction_coefficient(rc.mu, f_n, vt.norm(), cs.friction_velocity);
            let kin_vel = |p: Party| match p {
                Party::Arm { .. } | Party::Chest => base_vel_next,
                _ => Vector3::zeros(),
            };
            let offset = kin_vel(rc.a) - kin_vel(rc.b);
            let (t1, t2) = contact::tangent_basis(&rc.normal);
            let coef_n = rc.weight * (cs.k_n * dt + cs.c_n);
            let dirs = [
                (rc.normal, coef_n, rc.weight * cs.k_n * rc.depth - coef_n * rc.normal.dot(&offset), true),
                (t1, gamma, -gamma * t1.dot(&offset), false),
                (t2, gamma, -gamma * t2.dot(&offset), false),
            ];
            for (dir, coef, lam0, normal) in dirs {
                if coef <= 0.0 {
                    continue;
                }
                let mut row = Row {
                    side: None,
                    arm: Vec::new(),
                    boxj: None,
                    coef,
                    lam0,
                    contact: ci,
                    dir,
                    normal,
                };
                for (party, sign) in [(rc.a, 1.0), (rc.b, -1.0)] {
                    match party {
                        Party::Arm { side, sphere } => {
                            let s = &self.layouts[side].spheres[sphere];
                            let mut j = vec![0.0; self.layouts[side].dof()];
                            kins[side].force_row(s.body, &rc.point, &(dir * sign), &mut j);
                            row.side = Some(side);
                            row.arm = j;
                        }
                        Party::Box => {
                            let r = rc.point - state.box_position;
                            let d = dir * sign;
                            let mut jb = Vector6::zeros();
                            jb.fixed_rows_mut::<3>(0).copy_from(&d);
                            jb.fixed_rows_mut::<3>(3).copy_from(&r.cross(&d));
                            row.boxj = Some(jb);
                        }
                        Party::Floor | Party::Chest => {}
                    }
                }
                rows.push(row);
            }
        }

        let mut active = vec![true; raw.len()];
        let mut solution = None;
        for _pass in 0..=MAX_RELEASE_PASSES {
            let sol = self.solve(&a_base, &r_base, &mb_base, &rb_base, &rows, &active, dt, state.time)?;
            let mut released = false;
            for (ri, row) in rows.iter().enumerate() {
                if row.normal && active[row.contact] && sol.lambda[ri] < 0.0 {
                    active[row.contact] = false;
                    released = true;
                }
            }
            solution = Some(sol);
            if !released {
                break;
            }
        }
        let sol = solution.expect("at least one solve");

        // contact report
        let mut forces: Vec<(f64, Vector3<f64>)> = vec![(0.0, Vector3::zeros()); raw.len()];
        for (ri, row) in rows.iter().enumerate() {
            if !active[row.contact] {
                continue;
            }
            let lam = sol.lambda[ri];
            if row.normal {
                forces[row.contact].0 = lam.max(0.0);
            } else {
                forces[row.contact].1 += row.dir * lam;
            }
        }
        report.contacts = raw
            .iter()
            .enumerate()
            .filter(|(ci, _)| explicit_normal[*ci] > 0.0 && active[*ci])
            .map(|(ci, rc)| ContactPoint {
                position: rc.point,
                normal: rc.normal,
                depth: rc.depth,
                bodies: (self.body_id(rc.a), self.body_id(rc.b)),
                force: forces[ci].0,
                friction: forces[ci].1,
            })
            .collect();

        for side in 0..2 {
            let v = &sol.arm[side];
            let arm = &mut next.arms[side];
            for i in 0..arm.phi.len() {
                arm.phid[i] = v[i];
                arm.phi[i] += dt * v[i];
            }
        }
        let vb = sol.box_vel;
        next.box_velocity = Vector3::new(vb[0], vb[1], vb[2]);
        next.box_angular_velocity = Vector3::new(vb[3], vb[4], vb[5]);
        next.box_position += next.box_velocity * dt;
        let dq = UnitQuaternion::from_scaled_axis(next.box_angular_velocity * dt);
        next.box_orientation = UnitQuaternion::new_normalize((dq * state.box_orientation).into_inner());
        next.h = elev.q;
        next.hd = elev.v;
        next.time = state.time + dt;

        if !next.is_finite() {
            return Err(SimError::NonFinite {
                time: next.time,
                what: "state",
                last_valid: Box::new(state.clone()),
            });
        }
        Ok((next, report))
    }

    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        a_base: &[DMatrix<f64>],
        r_base: &[DVector<f64>],
        mb_base: &Matrix6<f64>,
        rb_base: &Vector6<f64>,
        rows: &[Row],
        active: &[bool],
        dt: f64,
        time: f64,
    ) -> Result<Solution, SimError> {
        let mut a: Vec<DMatrix<f64>> = a_base.to_vec();
        let mut r: Vec<DVector<f64>> = r_base.to_vec();
        let mut mb = *mb_base;
        let mut rb = *rb_base;
        let mut coupled: Vec<usize> = Vec::new();
        for (ri, row) in rows.iter().enumerate() {
            if !active[row.contact] {
                continue;
            }
            match (row.side, row.boxj) {
                (Some(_), Some(_)) => {
                    coupled.push(ri);
                    let s = row.side.unwrap();
                    r[s].axpy(dt * row.lam0, &DVector::from_column_slice(&row.arm), 1.0);
                    rb += row.boxj.unwrap() * (dt * row.lam0);
                }
                (Some(s), None) => {
                    let j = &row.arm;
                    let len = j.iter().rposition(|v| *v != 0.0).map_or(0, |p| p + 1);
                    let w = dt * row.coef;
                    for x in 0..len {
                        if j[x] == 0.0 {
                            continue;
                        }
                        r[s][x] += dt * row.lam0 * j[x];
                        let wx = w * j[x];
                        for y in 0..len {
                            a[s][(x, y)] += wx * j[y];
                        }
                    }
                }
                (None, Some(jb)) => {
                    mb += jb * jb.transpose() * (dt * row.coef);
                    rb += jb * (dt * row.lam0);
                }
                (None, None) => {}
            }
        }
        let chol: Vec<_> = a
            .into_iter()
            .map(|m| m.cholesky().ok_or(SimError::NotPositiveDefinite { time }))
            .collect::<Result<_, _>>()?;
        let chol_b = mb.cholesky().ok_or(SimError::NotPositiveDefinite { time })?;
        let mut x: Vec<DVector<f64>> = (0..2).map(|s| chol[s].solve(&r[s])).collect();
        let mut xb = chol_b.solve(&rb);

        if !coupled.is_empty() {
            let m = coupled.len();
            let us: Vec<(DVector<f64>, Vector6<f64>)> = coupled
                .iter()
                .map(|&ri| {
                    let row = &rows[ri];
                    let s = row.side.unwrap();
                    (
                        chol[s].solve(&DVector::from_column_slice(&row.arm)),
                        chol_b.solve(&row.boxj.unwrap()),
                    )
                })
                .collect();
            let mut schur = DMatrix::zeros(m, m);
            let mut jy = DVector::zeros(m);
            for (p, &rp) in coupled.iter().enumerate() {
                let row = &rows[rp];
                let sp = row.side.unwrap();
                let jp = DVector::from_column_slice(&row.arm);
                let jbp = row.boxj.unwrap();
                jy[p] = jp.dot(&x[sp]) + jbp.dot(&xb);
                for (q, &rq) in coupled.iter().enumerate() {
                    let sq = rows[rq].side.unwrap();
                    let mut v = jbp.dot(&us[q].1);
                    if sp == sq {
                        v += jp.dot(&us[q].0);
                    }
                    schur[(p, q)] = v;
                }
                schur[(p, p)] += 1.0 / (dt * row.coef);
            }
            let z = schur
                .clone()
                .cholesky()
                .map(|c| c.solve(&jy))
                .or_else(|| schur.lu().solve(&jy))
                .ok_or(SimError::NotPositiveDefinite { time })?;
            for (q, &rq) in coupled.iter().enumerate() {
                let s = rows[rq].side.unwrap();
                x[s].axpy(-z[q], &us[q].0, 1.0);
                xb -= us[q].1 * z[q];
            }
        }

        let lambda = rows
            .iter()
            .map(|row| {
                let mut jv = 0.0;
                if let Some(s) = row.side {
                    jv += row.arm.iter().zip(x[s].iter()).map(|(a, b)| a * b).sum::<f64>();
                }
                if let Some(jb) = row.boxj {
                    jv += jb.dot(&xb);
                }
                row.lam0 - row.coef * jv
            })
            .collect();
        let mut it = x.into_iter();
        Ok(Solution {
            arm: [it.next().unwrap(), it.next().unwrap()],
            box_vel: xb,
            lambda,
        })
    }

    /// Mechanical energy: kinetic, gravitational and stored in springs,
    /// limits and contact penalties.
    pub fn energy(&self, state: &SimState) -> Energy {
        let g = self.model.sim.gravity;
        let base_vel = Vector3::new(0.0, 0.0, state.hd);
        let zero = Vector3::zeros();
        let mut e = Energy {
            kinetic: 0.0,
            gravity: 0.0,
            elastic: 0.0,
        };
        let mut kins = Vec::with_capacity(2);
        for side in 0..2 {
            let layout = &self.layouts[side];
            let arm = &state.arms[side];
            let kin = self.arm_kinematics(state, side);
            let d = ArmDynamics::compute(layout, &kin, &arm.phid, &base_vel, &zero, g);
            e.kinetic += d.kinetic_energy;
            e.gravity += d.potential_energy;
            e.elastic += arm
                .phi
                .iter()
                .zip(layout.k_diag.iter())
                .map(|(p, k)| 0.5 * k * p * p)
                .sum::<f64>();
            e.elastic += self
                .limit_rows(side, &arm.phi)
                .iter()
                .map(LimitRow::potential)
                .sum::<f64>();
            kins.push(kin);
        }
        let m = self.box_spec.mass;
        let rot = state.box_orientation.to_rotation_matrix().into_inner();
        let iw = rot * self.box_inertia * rot.transpose();
        let w = state.box_angular_velocity;
        e.kinetic += 0.5 * m * state.box_velocity.norm_squared() + 0.5 * w.dot(&(iw * w));
        e.gravity += m * g * state.box_position.z;
        let kins = [kins.remove(0), kins.remove(0)];
        e.elastic += self
            .detect(state, &kins)
            .iter()
            .map(|c| 0.5 * c.weight * self.model.contact.k_n * c.depth * c.depth)
            .sum::<f64>();
        e
    }
}

struct Solution {
    arm: [DVector<f64>; 2],
    box_vel: Vector6<f64>,
    lambda: Vec<f64>,
}
