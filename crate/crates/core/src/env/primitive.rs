//! The waypoint motion primitive: approach, grasp, lift.
//!
//! The update follows the state machine step by step, including the fact
//! that commands persist between calls whenever a branch does not assign
//! them. The approach ramp therefore holds at `(N-1)/N` of the approach
//! waypoint while waiting for the elevator, and the grasp ramp ends at
//! `(N-1)/N` of the way to the grasp waypoint.

use serde::{Deserialize, Serialize};

use super::action::{Action, ActionBounds, PhysicalAction, ARM_ACT_DIM};
use crate::model::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Approach,
    Grasp,
    Lift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoints {
    pub approach: [[f64; ARM_ACT_DIM]; 2],
    pub grasp: [[f64; ARM_ACT_DIM]; 2],
    pub steps: usize,
    pub approach_height: f64,
    pub lift_height: f64,
    pub tolerance: f64,
}

impl Waypoints {
    pub fn from_task(t: &TaskSpec, lift_height: f64) -> Self {
        Self {
            approach: [t.approach_left, t.approach_right],
            grasp: [t.grasp_left, t.grasp_right],
            steps: t.waypoint_steps,
            approach_height: t.approach_height,
            lift_height,
            tolerance: t.height_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveState {
    pub phase: Phase,
    pub n: usize,
    /// Last assigned command, carried across calls.
    pub h_des: f64,
    pub dp: [[f64; ARM_ACT_DIM]; 2],
}

impl PrimitiveState {
    /// Initial state; the commands start at the home pose.
    pub fn new(home_height: f64) -> Self {
        Self {
            phase: Phase::Approach,
            n: 0,
            h_des: home_height,
            dp: [[0.0; ARM_ACT_DIM]; 2],
        }
    }
}

fn lerp(a: &[f64; ARM_ACT_DIM], b: &[f64; ARM_ACT_DIM], s: f64) -> [f64; ARM_ACT_DIM] {
    std::array::from_fn(|i| (1.0 - s) * a[i] + s * b[i])
}

/// One primitive update given the measured elevator height `h`. Returns the
/// normalized action and the next state.
pub fn primitive_action(
    ps: &PrimitiveState,
    h: f64,
    wp: &Waypoints,
    bounds: &ActionBounds,
) -> (Action, PrimitiveState) {
    let mut s = *ps;
    let big_n = wp.steps;
    match s.phase {
        Phase::Approach => {
            if s.n < big_n {
                let frac = s.n as f64 / big_n as f64;
                s.h_des = wp.approach_height;
                s.dp = [0, 1].map(|i| wp.approach[i].map(|v| frac * v));
                s.n += 1;
            } else if (h - wp.approach_height).abs() < wp.tolerance {
                s.n = 0;
                s.phase = Phase::Grasp;
            }
        }
        Phase::Grasp => {
            let frac = s.n as f64 / big_n as f64;
            s.dp = [0, 1].map(|i| lerp(&wp.approach[i], &wp.grasp[i], frac));
            s.n += 1;
            if s.n == big_n {
                s.phase = Phase::Lift;
            }
        }
        Phase::Lift => {
            s.h_des = wp.lift_height;
        }
    }
    let a = bounds.normalize(&PhysicalAction {
        h_des: s.h_des,
        dp: s.dp,
    });
    (a, s)
}
