//! Spatial-tendon actuation. Each joint has four chambers whose attachment
//! points sit at the tendon radius on every disk, in the order +y, -y, -x, +x
//! of the disk frame. A chamber at pressure `p` pushes each pair of adjacent
//! attachment points apart with force `A_eff * p` along the line joining them.
//! Chambers 0/1 drive the first bending DoF and 2/3 the second, so that
//! a positive differential on either pair gives a positive CC bend.

use nalgebra::Vector3;

use crate::kinematics::rot_x;
use crate::model::{ActuatorSpec, ContinuumJointSpec};

pub const CHAMBER_DIRECTIONS: [[f64; 2]; 4] = [[0.0, 1.0], [0.0, -1.0], [-1.0, 0.0], [1.0, 0.0]];

/// Below this separation a chamber pair is treated as degenerate.
const MIN_SEPARATION: f64 = 1e-12;

#[inline]
pub fn chamber_force(pressure_kpa: f64, area: f64) -> f64 {
    area * pressure_kpa * 1e3
}

fn attachment(c: usize, r_t: f64) -> Vector3<f64> {
    let d = CHAMBER_DIRECTIONS[c];
    Vector3::new(r_t * d[0], r_t * d[1], 0.0)
}

/// Generalized forces on one UJ's two DoFs and the number of degenerate
/// chamber pairs that were skipped. Everything is expressed in the frame of
/// the UJ's proximal disk.
pub fn uj_tendon_torque(
    phi_x: f64,
    phi_y: f64,
    ell: f64,
    r_t: f64,
    forces: &[f64; 4],
) -> ([f64; 2], usize) {
    let rx = rot_x(phi_x);
    let rot = rx * crate::kinematics::rot_y(phi_y);
    let pivot = Vector3::new(0.0, 0.0, ell);
    let axis_y = rx * Vector3::y();
    let mut tau = [0.0; 2];
    let mut degenerate = 0;
    for (c, &f) in forces.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        let a = attachment(c, r_t);
        let q = rot * (a + pivot) + pivot;
        let d = q - a;
        let len = d.norm();
        if len < MIN_SEPARATION {
            degenerate += 1;
            continue;
        }
        let moment = (q - pivot).cross(&(d * (f / len)));
        tau[0] += moment.x;
        tau[1] += axis_y.dot(&moment);
    }
    (tau, degenerate)
}

/// Chamber potential whose negative gradient is `uj_tendon_torque`.
pub fn uj_tendon_potential(phi_x: f64, phi_y: f64, ell: f64, r_t: f64, forces: &[f64; 4]) -> f64 {
    let rot = rot_x(phi_x) * crate::kinematics::rot_y(phi_y);
    let pivot = Vector3::new(0.0, 0.0, ell);
    forces
        .iter()
        .enumerate()
        .map(|(c, &f)| {
            let a = attachment(c, r_t);
            -f * (rot * (a + pivot) + pivot - a).norm()
        })
        .sum()
}

/// Total bend a joint settles at, in the absence of gravity and contact, when
/// one chamber pair is driven to its full differential and the other sits at
/// the mean pressure. Used to check that stiffness and actuation are tuned so
/// that this matches the joint's maximum bend.
pub fn soft_limit_bend(joint: &ContinuumJointSpec, act: &ActuatorSpec) -> f64 {
    let ell = joint.half_length();
    let r_t = joint.tendon_radius();
    let k = joint.k_disk();
    let forces = [
        chamber_force(act.p_mean, act.area),
        chamber_force(act.p_mean, act.area),
        chamber_force(act.p_max, act.area),
        chamber_force(act.p_min, act.area),
    ];
    let residual = |phi: f64| uj_tendon_torque(0.0, phi, ell, r_t, &forces).0[1] - k * phi;
    let (mut lo, mut hi) = (0.0, std::f64::consts::FRAC_PI_2 - 1e-9);
    if residual(hi) > 0.0 {
        return hi * joint.uj_count() as f64;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) * joint.uj_count() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_pressures_straight_give_no_torque() {
        let f = [chamber_force(150.0, 1.2e-3); 4];
        let (tau, deg) = uj_tendon_torque(0.0, 0.0, 0.04, 0.07, &f);
        assert_eq!(deg, 0);
        assert!(tau[0].abs() < 1e-12 && tau[1].abs() < 1e-12);
    }

    #[test]
    fn plus_x_chamber_bends_about_negative_y() {
        let f = [0.0, 0.0, 0.0, chamber_force(200.0, 1.2e-3)];
        let (tau, _) = uj_tendon_torque(0.0, 0.0, 0.04, 0.07, &f);
        assert!(tau[1] < 0.0);
        assert!((tau[1] + 0.07 * f[3]).abs() < 1e-9);
        assert!(tau[0].abs() < 1e-12);
        let f = [chamber_force(200.0, 1.2e-3), 0.0, 0.0, 0.0];
        assert!(uj_tendon_torque(0.0, 0.0, 0.04, 0.07, &f).0[0] > 0.0);
    }

    #[test]
    fn torque_matches_potential_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (px, py) = (rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
            let f: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..360.0));
            let (ell, r) = (0.0375, 0.07);
            let (tau, _) = uj_tendon_torque(px, py, ell, r, &f);
            let h = 1e-6;
            let gx = -(uj_tendon_potential(px + h, py, ell, r, &f)
                - uj_tendon_potential(px - h, py, ell, r, &f))
                / (2.0 * h);
            let gy = -(uj_tendon_potential(px, py + h, ell, r, &f)
                - uj_tendon_potential(px, py - h, ell, r, &f))
                / (2.0 * h);
            let scale = tau[0].abs().max(tau[1].abs()).max(1e-3);
            assert!((gx - tau[0]).abs() < 1e-5 * scale, "{gx} {}", tau[0]);
            assert!((gy - tau[1]).abs() < 1e-5 * scale, "{gy} {}", tau[1]);
        }
    }

    #[test]
    fn torque_is_linear_in_area() {
        let f1: [f64; 4] = [10.0, 50.0, 80.0, 5.0];
        let f2 = f1.map(|v| 2.0 * v);
        let (a, _) = uj_tendon_torque(0.3, -0.2, 0.03, 0.06, &f1);
        let (b, _) = uj_tendon_torque(0.3, -0.2, 0.03, 0.06, &f2);
        assert!((b[0] - 2.0 * a[0]).abs() < 1e-12 && (b[1] - 2.0 * a[1]).abs() < 1e-12);
    }
}
