//! Reduced-coordinate dynamics of one arm.
//!
//! Every UJ contributes two revolute DoFs, x then y, about a common pivot.
//! Each DoF owns the body it moves: the body after an x DoF is massless, the
//! body after a y DoF is the next disk. A joint's tip disk carries the rigid
//! link and the following joint's base disk as one composite body.
//!
//! Spatial quantities are Plücker coordinates in the world orientation about
//! the arm's mount point, with motion vectors ordered (angular, linear).

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::kinematics::{rot_x, rot_y, Pose};
use crate::model::{ArmSpec, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyProps {
    pub mass: f64,
    /// Centre of mass in the body frame.
    pub com: Vector3<f64>,
    /// Inertia about the centre of mass in the body frame.
    pub inertia: Matrix3<f64>,
}

impl BodyProps {
    pub const MASSLESS: BodyProps = BodyProps {
        mass: 0.0,
        com: Vector3::new(0.0, 0.0, 0.0),
        inertia: Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    };

    /// Combines two bodies expressed in the same frame.
    pub fn combine(&self, other: &BodyProps) -> BodyProps {
        let m = self.mass + other.mass;
        if m == 0.0 {
            return BodyProps::MASSLESS;
        }
        let com = (self.com * self.mass + other.com * other.mass) / m;
        let shift = |b: &BodyProps| {
            let d = b.com - com;
            b.inertia + (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * b.mass
        };
        BodyProps {
            mass: m,
            com,
            inertia: shift(self) + shift(other),
        }
    }
}

/// Solid cylinder along z, centred at `center`.
pub fn cylinder(mass: f64, radius: f64, length: f64, center: Vector3<f64>) -> BodyProps {
    let ixy = mass * (3.0 * radius * radius + length * length) / 12.0;
    BodyProps {
        mass,
        com: center,
        inertia: Matrix3::from_diagonal(&Vector3::new(ixy, ixy, 0.5 * mass * radius * radius)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLayout {
    pub first_dof: usize,
    pub uj_count: usize,
    pub half_length: f64,
    pub tendon_radius: f64,
    pub disk_radius: f64,
    pub disk_thickness: f64,
    pub k_disk: f64,
    pub c_disk: f64,
    pub limit: f64,
}

/// A collision sphere rigidly attached to an arm body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDef {
    /// DoF whose child body carries the sphere.
    pub body: usize,
    pub local: Vector3<f64>,
    pub radius: f64,
    /// Share of the contact stiffness; spheres packed closer than their radius
    /// split it so that a line contact does not stiffen as disks are added.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct ArmLayout {
    pub side: Side,
    /// Mount frame relative to the torso origin.
    pub mount: Pose,
    pub joints: Vec<JointLayout>,
    pub link_lengths: Vec<f64>,
    pub bodies: Vec<BodyProps>,
    pub spheres: Vec<SphereDef>,
    pub k_diag: DVector<f64>,
    pub c_diag: DVector<f64>,
}

impl ArmLayout {
    pub fn new(spec: &ArmSpec) -> ArmLayout {
        let mut joints = Vec::with_capacity(3);
        let mut first = 0;
        for j in &spec.joints {
            joints.push(JointLayout {
                first_dof: first,
                uj_count: j.uj_count(),
                half_length: j.half_length(),
                tendon_radius: j.tendon_radius(),
                disk_radius: j.disk_radius,
                disk_thickness: j.disk_thickness(),
                k_disk: j.k_disk(),
                c_disk: j.c_disk(),
                limit: j.per_uj_limit(),
            });
            first += 2 * j.uj_count();
        }
        let n = first;
        let mut bodies = vec![BodyProps::MASSLESS; n];
        let mut spheres = Vec::new();
        let mut k_diag = DVector::zeros(n);
        let mut c_diag = DVector::zeros(n);
        for (ji, (j, jl)) in spec.joints.iter().zip(&joints).enumerate() {
            let disk = cylinder(j.disk_mass(), j.disk_radius, jl.disk_thickness, Vector3::zeros());
            let spacing = 2.0 * jl.half_length;
            let disk_weight = (spacing / j.disk_radius).min(1.0);
            for k in 0..jl.uj_count {
                let y_dof = jl.first_dof + 2 * k + 1;
                bodies[y_dof] = disk;
                spheres.push(SphereDef {
                    body: y_dof,
                    local: Vector3::zeros(),
                    radius: j.disk_radius,
                    weight: disk_weight,
                });
            }
            for d in jl.first_dof..jl.first_dof + 2 * jl.uj_count {
                k_diag[d] = jl.k_disk;
                c_diag[d] = jl.c_disk;
            }
            if let Some(link) = spec.links.get(ji) {
                let tip = jl.first_dof + 2 * jl.uj_count - 1;
                let next = &spec.joints[ji + 1];
                let next_thickness = joints[ji + 1].disk_thickness;
                let link_body = cylinder(
                    link.mass,
                    link.radius,
                    link.length,
                    Vector3::new(0.0, 0.0, 0.5 * link.length),
                );
                let base_disk = cylinder(
                    next.disk_mass(),
                    next.disk_radius,
                    next_thickness,
                    Vector3::new(0.0, 0.0, link.length),
                );
                bodies[tip] = bodies[tip].combine(&link_body).combine(&base_disk);
                let count = ((link.length / link.radius).ceil() as usize).saturating_sub(1).max(1);
                let step = link.length / (count + 1) as f64;
                for s in 1..=count {
                    spheres.push(SphereDef {
                        body: tip,
                        local: Vector3::new(0.0, 0.0, s as f64 * step),
                        radius: link.radius,
                        weight: (step / link.radius).min(1.0),
                    });
                }
                let next_spacing = 2.0 * joints[ji + 1].half_length;
                spheres.push(SphereDef {
                    body: tip,
                    local: Vector3::new(0.0, 0.0, link.length),
                    radius: next.disk_radius,
                    weight: (next_spacing / next.disk_radius).min(1.0),
                });
            }
        }
        ArmLayout {
            side: spec.side,
            mount: Pose::new(spec.mount_rotation(), spec.mount_position()),
            joints,
            link_lengths: spec.links.iter().map(|l| l.length).collect(),
            bodies,
            spheres,
            k_diag,
            c_diag,
        }
    }

    pub fn dof(&self) -> usize {
        self.bodies.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }
}

/// World-frame kinematics of one arm at one configuration.
#[derive(Debug, Clone)]
pub struct ArmKinematics {
    /// World pose of the mount frame (base disk of the first joint).
    pub base: Pose,
    pub axes: Vec<Vector3<f64>>,
    pub origins: Vec<Vector3<f64>>,
    pub body_poses: Vec<Pose>,
    /// Disk poses per joint, base disk first.
    pub disks: Vec<Vec<Pose>>,
}

impl ArmKinematics {
    pub fn compute(layout: &ArmLayout, torso: &Pose, phi: &[f64]) -> ArmKinematics {
        let n = layout.dof();
        let base = torso.compose(&layout.mount);
        let mut axes = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut body_poses = Vec::with_capacity(n);
        let mut disks = Vec::with_capacity(layout.joints.len());
        let mut frame = base;
        for (ji, jl) in layout.joints.iter().enumerate() {
            if ji > 0 {
                let lift = Vector3::new(0.0, 0.0, layout.link_lengths[ji - 1]);
                frame = Pose::new(frame.rotation, frame.transform_point(&lift));
            }
            let mut poses = Vec::with_capacity(jl.uj_count + 1);
            poses.push(frame);
            let ell = Vector3::new(0.0, 0.0, jl.half_length);
            for k in 0..jl.uj_count {
                let d = jl.first_dof + 2 * k;
                let pivot = frame.transform_point(&ell);
                let r1 = frame.rotation * rot_x(phi[d]);
                axes.push(frame.rotation.column(0).into_owned());
                origins.push(pivot);
                body_poses.push(Pose::new(r1, pivot));
                let r2 = r1 * rot_y(phi[d + 1]);
                axes.push(r1.column(1).into_owned());
                origins.push(pivot);
                frame = Pose::new(r2, pivot + r2 * ell);
                body_poses.push(frame);
                poses.push(frame);
            }
            disks.push(poses);
        }
        ArmKinematics {
            base,
            axes,
            origins,
            body_poses,
            disks,
        }
    }

    pub fn sphere_center(&self, s: &SphereDef) -> Vector3<f64> {
        self.body_poses[s.body].transform_point(&s.local)
    }

    /// `d(world point velocity)/d(phid_i)` for every DoF up to `body`.
    #[inline]
    pub fn point_velocity_column(&self, i: usize, p: &Vector3<f64>) -> Vector3<f64> {
        self.axes[i].cross(&(p - self.origins[i]))
    }

    /// Generalized force row `J^T dir` of a unit force `dir` at `p` on `body`,
    /// written into `out[..=body]`.
    pub fn force_row(&self, body: usize, p: &Vector3<f64>, dir: &Vector3<f64>, out: &mut [f64]) {
        for i in 0..=body {
            out[i] = self.axes[i].dot(&(p - self.origins[i]).cross(dir));
        }
    }

    /// World velocity of a point on `body`, with the arm base translating at `base_vel`.
    pub fn point_velocity(
        &self,
        body: usize,
        p: &Vector3<f64>,
        phid: &[f64],
        base_vel: &Vector3<f64>,
    ) -> Vector3<f64> {
        let mut v = *base_vel;
        for i in 0..=body {
            v += self.point_velocity_column(i, p) * phid[i];
        }
        v
    }

    /// Relative rotation from the base disk to the tip disk of joint `j`.
    pub fn joint_relative_rotation(&self, j: usize) -> Matrix3<f64> {
        let d = &self.disks[j];
        d[0].rotation.transpose() * d[d.len() - 1].rotation
    }
}

/// Spatial inertia about the reference point: mass, first moment and
/// rotational inertia about that point.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SpatialInertia {
    m: f64,
    h: Vector3<f64>,
    i: Matrix3<f64>,
}

impl SpatialInertia {
    const ZERO: SpatialInertia = SpatialInertia {
        m: 0.0,
        h: Vector3::new(0.0, 0.0, 0.0),
        i: Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    };

    fn of_body(props: &BodyProps, pose: &Pose, reference: &Vector3<f64>) -> SpatialInertia {
        if props.mass == 0.0 {
            return Self::ZERO;
        }
        let c = pose.transform_point(&props.com) - reference;
        let ic = pose.rotation * props.inertia * pose.rotation.transpose();
        SpatialInertia {
            m: props.mass,
            h: c * props.mass,
            i: ic + (Matrix3::identity() * c.norm_squared() - c * c.transpose()) * props.mass,
        }
    }

    fn add(&self, o: &SpatialInertia) -> SpatialInertia {
        SpatialInertia {
            m: self.m + o.m,
            h: self.h + o.h,
            i: self.i + o.i,
        }
    }

    /// Momentum (angular, linear) of motion (w, v).
    #[inline]
    fn apply(&self, w: &Vector3<f64>, v: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        (self.i * w + self.h.cross(v), v * self.m - self.h.cross(w))
    }
}

/// Mass matrix, bias forces and body velocities of one arm.
#[derive(Debug, Clone)]
pub struct ArmDynamics {
    pub mass: DMatrix<f64>,
    /// `C(phi, phid) phid + g(phi)`, including the inertial effect of the base
    /// acceleration.
    pub bias: DVector<f64>,
    pub kinetic_energy: f64,
    pub potential_energy: f64,
}

impl ArmDynamics {
    /// `base_vel` and `base_acc` are the translational velocity and acceleration
    /// of the torso; `gravity` points down with magnitude `g`.
    pub fn compute(
        layout: &ArmLayout,
        kin: &ArmKinematics,
        phid: &[f64],
        base_vel: &Vector3<f64>,
        base_acc: &Vector3<f64>,
        g: f64,
    ) -> ArmDynamics {
        let n = layout.dof();
        let o = kin.base.translation;
        let inertias: Vec<SpatialInertia> = (0..n)
            .map(|i| SpatialInertia::of_body(&layout.bodies[i], &kin.body_poses[i], &o))
            .collect();
        let s_lin: Vec<Vector3<f64>> = (0..n)
            .map(|i| (kin.origins[i] - o).cross(&kin.axes[i]))
            .collect();

        let mut composite = vec![SpatialInertia::ZERO; n];
        let mut acc = SpatialInertia::ZERO;
        for i in (0..n).rev() {
            acc = acc.add(&inertias[i]);
            composite[i] = acc;
        }
        let mut mass = DMatrix::zeros(n, n);
        for j in 0..n {
            let (fa, fl) = composite[j].apply(&kin.axes[j], &s_lin[j]);
            for i in 0..=j {
                let mij = kin.axes[i].dot(&fa) + s_lin[i].dot(&fl);
                mass[(i, j)] = mij;
                mass[(j, i)] = mij;
            }
        }

        // recursive Newton-Euler with zero joint acceleration; gravity enters
        // as an upward acceleration of the base
        let mut w = Vector3::zeros();
        let mut v = *base_vel;
        let mut aw = Vector3::zeros();
        let mut av = base_acc + Vector3::new(0.0, 0.0, g);
        let mut fw = vec![Vector3::zeros(); n];
        let mut fv = vec![Vector3::zeros(); n];
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for i in 0..n {
            let sw = kin.axes[i] * phid[i];
            let sv = s_lin[i] * phid[i];
            w += sw;
            v += sv;
            aw += w.cross(&sw);
            av += w.cross(&sv) + v.cross(&sw);
            let b = &inertias[i];
            if b.m > 0.0 {
                let (hw, hv) = b.apply(&w, &v);
                let (iaw, iav) = b.apply(&aw, &av);
                fw[i] = iaw + w.cross(&hw) + v.cross(&hv);
                fv[i] = iav + w.cross(&hv);
                kinetic += 0.5 * (w.dot(&hw) + v.dot(&hv));
                let com_z = kin.body_poses[i].transform_point(&layout.bodies[i].com).z;
                potential += b.m * g * com_z;
            }
        }
        let mut bias = DVector::zeros(n);
        let mut tw = Vector3::zeros();
        let mut tv = Vector3::zeros();
        for i in (0..n).rev() {
            tw += fw[i];
            tv += fv[i];
            bias[i] = kin.axes[i].dot(&tw) + s_lin[i].dot(&tv);
        }
        ArmDynamics {
            mass,
            bias,
            kinetic_energy: kinetic,
            potential_energy: potential,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RobotModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n_disks: usize) -> (ArmLayout, Pose) {
        let m = RobotModel::shipped().with_disk_count(n_disks).unwrap();
        let torso = Pose::from_translation(Vector3::new(0.0, 0.0, 1.5));
        (ArmLayout::new(&m.left), torso)
    }

    fn random_phi(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-amp..amp)).collect()
    }

    #[test]
    fn kinematics_matches_uj_chain() {
        let (layout, torso) = setup(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_phi(&mut rng, layout.dof(), 0.4);
        let kin = ArmKinematics::compute(&layout, &torso, &phi);
        for (ji, jl) in layout.joints.iter().enumerate() {
            let local = &phi[jl.first_dof..jl.first_dof + 2 * jl.uj_count];
            let fk = crate::kinematics::uj_fk_angles(local, jl.half_length);
            let base = kin.disks[ji][0];
            let tip = base.compose(fk.tip());
            let got = kin.disks[ji][jl.uj_count];
            assert!((tip.translation - got.translation).norm() < 1e-12);
            assert!((tip.rotation - got.rotation).abs().max() < 1e-12);
        }
    }

    #[test]
    fn straight_arm_length() {
        let (layout, torso) = setup(5);
        let kin = ArmKinematics::compute(&layout, &torso, &vec![0.0; layout.dof()]);
        let tip = kin.disks[2].last().unwrap().translation;
        let m = RobotModel::shipped();
        let total: f64 = m.left.joints.iter().map(|j| j.length).sum::<f64>()
            + m.left.links.iter().map(|l| l.length).sum::<f64>();
        assert!(((tip - kin.base.translation).norm() - total).abs() < 1e-12);
    }

    #[test]
    fn mass_matrix_is_spd_and_matches_body_jacobians() {
        let (layout, torso) = setup(4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = layout.dof();
        let phi = random_phi(&mut rng, n, 0.5);
        let kin = ArmKinematics::compute(&layout, &torso, &phi);
        let zero = Vector3::zeros();
        let dynm = ArmDynamics::compute(&layout, &kin, &vec![0.0; n], &zero, &zero, 9.81);
        // oracle: sum over bodies of Jv^T m Jv + Jw^T I Jw
        let mut oracle = DMatrix::zeros(n, n);
        for b in 0..n {
            let props = &layout.bodies[b];
            if props.mass == 0.0 {
                continue;
            }
            let pose = &kin.body_poses[b];
            let c = pose.transform_point(&props.com);
            let iw = pose.rotation * props.inertia * pose.rotation.transpose();
            let mut jv = DMatrix::zeros(3, n);
            let mut jw = DMatrix::zeros(3, n);
            for i in 0..=b {
                jv.column_mut(i).copy_from(&kin.point_velocity_column(i, &c));
                jw.column_mut(i).copy_from(&kin.axes[i]);
            }
            let iw_d = DMatrix::from_column_slice(3, 3, iw.as_slice());
            oracle += jv.transpose() * &jv * props.mass + jw.transpose() * iw_d * &jw;
        }
        assert!((&dynm.mass - &oracle).abs().max() < 1e-10);
        assert!(dynm.mass.clone().cholesky().is_some());
    }

    #[test]
    fn gravity_bias_is_potential_gradient() {
        let (layout, torso) = setup(3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = layout.dof();
        let phi = random_phi(&mut rng, n, 0.6);
        let zero = Vector3::zeros();
        let energy = |p: &[f64]| {
            let kin = ArmKinematics::compute(&layout, &torso, p);
            ArmDynamics::compute(&layout, &kin, &vec![0.0; n], &zero, &zero, 9.81).potential_energy
        };
        let kin = ArmKinematics::compute(&layout, &torso, &phi);
        let d = ArmDynamics::compute(&layout, &kin, &vec![0.0; n], &zero, &zero, 9.81);
        let h = 1e-6;
        for i in 0..n {
            let mut a = phi.clone();
            let mut b = phi.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (energy(&a) - energy(&b)) / (2.0 * h);
            assert!((fd - d.bias[i]).abs() < 1e-6, "dof {i}: {fd} vs {}", d.bias[i]);
        }
    }

    #[test]
    fn velocity_bias_matches_lagrangian_oracle() {
        // C(q, qd) qd = Mdot qd - 1/2 d/dq (qd^T M qd)
        let (layout, torso) = setup(3);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = layout.dof();
        let phi = random_phi(&mut rng, n, 0.6);
        let phid = random_phi(&mut rng, n, 2.0);
        let zero = Vector3::zeros();
        let mass_at = |p: &[f64]| {
            let kin = ArmKinematics::compute(&layout, &torso, p);
            ArmDynamics::compute(&layout, &kin, &vec![0.0; n], &zero, &zero, 0.0).mass
        };
        let kin = ArmKinematics::compute(&layout, &torso, &phi);
        let d = ArmDynamics::compute(&layout, &kin, &phid, &zero, &zero, 0.0);
        let h = 1e-6;
        let qd = DVector::from_column_slice(&phid);
        let shifted = |s: f64| -> Vec<f64> { phi.iter().zip(&phid).map(|(p, v)| p + s * v).collect() };
        let mdot = (mass_at(&shifted(h)) - mass_at(&shifted(-h))) / (2.0 * h);
        let mut oracle = &mdot * &qd;
        for i in 0..n {
            let mut a = phi.clone();
            let mut b = phi.clone();
            a[i] += h;
            b[i] -= h;
            let ta = qd.dot(&(mass_at(&a) * &qd));
            let tb = qd.dot(&(mass_at(&b) * &qd));
            oracle[i] -= 0.25 * (ta - tb) / h;
        }
        let err = (&d.bias - &oracle).abs().max();
        assert!(err < 1e-5 * (1.0 + oracle.abs().max()), "err {err}");
        let ke = 0.5 * qd.dot(&(&d.mass * &qd));
        assert!((ke - d.kinetic_energy).abs() < 1e-10 * (1.0 + ke));
    }

    #[test]
    fn composite_body_combination() {
        let a = cylinder(1.0, 0.1, 0.2, Vector3::zeros());
        let b = cylinder(1.0, 0.1, 0.2, Vector3::new(0.0, 0.0, 0.2));
        let c = a.combine(&b);
        let whole = cylinder(2.0, 0.1, 0.4, Vector3::new(0.0, 0.0, 0.1));
        assert!((c.com - whole.com).norm() < 1e-15);
        assert!((c.inertia - whole.inertia).abs().max() < 1e-12);
    }
}
