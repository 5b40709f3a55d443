//! The 93-dimensional measurement vector and its normalization.

use nalgebra::Vector3;

use crate::dynamics::{Scene, SimState};
use crate::kinematics::so3_log_unchecked;
use std::f64::consts::PI;

pub const OBS_DIM: usize = 93;

/// Named blocks of the measurement vector in order, with their bounds.
pub const LAYOUT: [(&str, usize, f64, f64); 16] = [
    ("box_size", 3, f64::NAN, f64::NAN),
    ("box_position", 3, f64::NAN, f64::NAN),
    ("box_quaternion", 4, -1.0, 1.0),
    ("box_velocity", 3, -2.0, 2.0),
    ("box_angular_velocity", 3, -PI, PI),
    ("chest_to_box", 3, -1.25, 1.25),
    ("elevator_height", 1, -1.5, 0.0),
    ("elevator_velocity", 1, -1.0, 1.0),
    ("left_joint_angles", 6, -PI, PI),
    ("right_joint_angles", 6, -PI, PI),
    ("left_joint_velocities", 6, -2.0 * PI, 2.0 * PI),
    ("right_joint_velocities", 6, -2.0 * PI, 2.0 * PI),
    ("left_pressures", 12, 0.0, 300.0),
    ("right_pressures", 12, 0.0, 300.0),
    ("left_pressure_commands", 12, 0.0, 300.0),
    ("right_pressure_commands", 12, 0.0, 300.0),
];

const SIZE_MIN: [f64; 3] = [0.2, 0.2, 0.5];
const SIZE_MAX: [f64; 3] = [0.6, 0.6, 1.25];
const POS_MIN: [f64; 3] = [-3.0, -3.0, 0.0];
const POS_MAX: [f64; 3] = [3.0, 3.0, 2.0];

/// Per-component lower and upper normalization bounds.
pub fn bounds() -> ([f64; OBS_DIM], [f64; OBS_DIM]) {
    let mut lo = [0.0; OBS_DIM];
    let mut hi = [0.0; OBS_DIM];
    let mut k = 0;
    for (name, dim, l, h) in LAYOUT {
        for i in 0..dim {
            (lo[k], hi[k]) = match name {
                "box_size" => (SIZE_MIN[i], SIZE_MAX[i]),
                "box_position" => (POS_MIN[i], POS_MAX[i]),
                _ => (l, h),
            };
            k += 1;
        }
    }
    (lo, hi)
}

/// Affine map to [-1, 1], clamped.
pub fn normalize(o: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
    let (lo, hi) = bounds();
    std::array::from_fn(|i| (2.0 * (o[i] - lo[i]) / (hi[i] - lo[i]) - 1.0).clamp(-1.0, 1.0))
}

pub fn unnormalize(n: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
    let (lo, hi) = bounds();
    std::array::from_fn(|i| lo[i] + 0.5 * (n[i] + 1.0) * (hi[i] - lo[i]))
}

/// Raw measurement and its normalized copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub raw: [f64; OBS_DIM],
    pub normalized: [f64; OBS_DIM],
}

impl Observation {
    pub fn new(raw: [f64; OBS_DIM]) -> Self {
        Self {
            normalized: normalize(&raw),
            raw,
        }
    }
}

/// Step used for the central difference of the CC estimate along the joint
/// velocity direction, s.
const RATE_STEP: f64 = 1e-6;

/// CC bending angles of every joint of one arm, from the relative rotation
/// between each joint's base and tip disk.
pub fn cc_angles(scene: &Scene, state: &SimState, side: usize) -> [f64; 6] {
    let mut q = [0.0; 6];
    for j in 0..3 {
        let w = so3_log_unchecked(&scene.joint_rotation(state, side, j));
        q[2 * j] = w.x;
        q[2 * j + 1] = w.y;
    }
    q
}

/// CC angle rates by central difference along the UJ velocity.
pub fn cc_rates(scene: &Scene, state: &SimState, side: usize) -> [f64; 6] {
    let shifted = |sign: f64| {
        let mut s = state.clone();
        let arm = &mut s.arms[side];
        for (p, v) in arm.phi.iter_mut().zip(&state.arms[side].phid) {
            *p += sign * RATE_STEP * v;
        }
        cc_angles(scene, &s, side)
    };
    let (plus, minus) = (shifted(1.0), shifted(-1.0));
    std::array::from_fn(|i| (plus[i] - minus[i]) / (2.0 * RATE_STEP))
}

/// Chest centre minus box centre, world frame.
pub fn chest_to_box(scene: &Scene, state: &SimState) -> Vector3<f64> {
    scene.chest_obb(state.h).pose.translation - state.box_position
}

/// Assembles the measurement vector in layout order.
pub fn measure(scene: &Scene, state: &SimState, commands: &[[f64; 12]; 2]) -> [f64; OBS_DIM] {
    let mut o = Vec::with_capacity(OBS_DIM);
    o.extend(scene.box_spec.size);
    o.extend(state.box_position.iter());
    let q = state.box_orientation.quaternion();
    o.extend([q.w, q.i, q.j, q.k]);
    o.extend(state.box_velocity.iter());
    o.extend(state.box_angular_velocity.iter());
    o.extend(chest_to_box(scene, state).iter());
    o.push(state.h);
    o.push(state.hd);
    o.extend(cc_angles(scene, state, 0));
    o.extend(cc_angles(scene, state, 1));
    o.extend(cc_rates(scene, state, 0));
    o.extend(cc_rates(scene, state, 1));
    o.extend(state.arms[0].pressure);
    o.extend(state.arms[1].pressure);
    o.extend(commands[0]);
    o.extend(commands[1]);
    o.try_into().expect("layout sums to OBS_DIM")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sums_to_obs_dim() {
        assert_eq!(LAYOUT.iter().map(|l| l.1).sum::<usize>(), OBS_DIM);
    }

    #[test]
    fn normalization_is_invertible_in_range() {
        let (lo, hi) = bounds();
        let o: [f64; OBS_DIM] = std::array::from_fn(|i| lo[i] + (hi[i] - lo[i]) * ((i * 37 % 101) as f64 / 100.0));
        let back = unnormalize(&normalize(&o));
        for i in 0..OBS_DIM {
            assert!((back[i] - o[i]).abs() < 1e-12);
        }
        assert_eq!(normalize(&hi), [1.0; OBS_DIM]);
        assert_eq!(normalize(&lo), [-1.0; OBS_DIM]);
    }
}
