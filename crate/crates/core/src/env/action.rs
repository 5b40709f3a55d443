//! Action normalization, low-pass filtering and the antagonistic pressure map.

use crate::dynamics::{Command, CHAMBERS_PER_ARM};
use crate::model::RobotModel;

pub const ACT_DIM: usize = 13;
/// Differential pressure DoFs per arm.
pub const ARM_ACT_DIM: usize = 6;

pub type Action = [f64; ACT_DIM];

/// Physical action: elevator target and per-arm differential pressures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalAction {
    pub h_des: f64,
    pub dp: [[f64; ARM_ACT_DIM]; 2],
}

/// Bounds used to (un)normalize actions, taken from the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBounds {
    pub h_min: f64,
    pub h_max: f64,
    pub p_mean: f64,
    /// Largest differential pressure magnitude.
    pub dp_max: f64,
}

impl ActionBounds {
    pub fn from_model(m: &RobotModel) -> Self {
        let a = &m.actuator;
        Self {
            h_min: m.elevator.h_min,
            h_max: m.elevator.h_max,
            p_mean: a.p_mean,
            dp_max: (a.p_max - a.p_mean).min(a.p_mean - a.p_min),
        }
    }

    pub fn normalize(&self, a: &PhysicalAction) -> Action {
        let mut out = [0.0; ACT_DIM];
        out[0] = 2.0 * (a.h_des - self.h_min) / (self.h_max - self.h_min) - 1.0;
        for (arm, dp) in a.dp.iter().enumerate() {
            for (i, v) in dp.iter().enumerate() {
                out[1 + arm * ARM_ACT_DIM + i] = v / self.dp_max;
            }
        }
        out
    }

    pub fn unnormalize(&self, a: &Action) -> PhysicalAction {
        let mut dp = [[0.0; ARM_ACT_DIM]; 2];
        for (arm, d) in dp.iter_mut().enumerate() {
            for (i, v) in d.iter_mut().enumerate() {
                *v = a[1 + arm * ARM_ACT_DIM + i] * self.dp_max;
            }
        }
        PhysicalAction {
            h_des: self.h_min + 0.5 * (a[0] + 1.0) * (self.h_max - self.h_min),
            dp,
        }
    }

    /// Chamber commands: each DoF drives a pair `(p_mean + dp, p_mean - dp)`.
    pub fn to_command(&self, a: &PhysicalAction) -> Command {
        let mut pressures = [[0.0; CHAMBERS_PER_ARM]; 2];
        for (arm, dp) in a.dp.iter().enumerate() {
            for (i, v) in dp.iter().enumerate() {
                pressures[arm][2 * i] = self.p_mean + v;
                pressures[arm][2 * i + 1] = self.p_mean - v;
            }
        }
        Command {
            h_des: a.h_des,
            pressures,
        }
    }

    /// Normalized action of the home pose: elevator up, no differential pressure.
    pub fn home(&self) -> Action {
        self.normalize(&PhysicalAction {
            h_des: self.h_max,
            dp: [[0.0; ARM_ACT_DIM]; 2],
        })
    }
}

/// Clamps every component to [-1, 1]; NaN maps to 0.
pub fn clamp_action(a: &Action) -> Action {
    a.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) })
}

/// First-order low-pass filter on normalized actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionFilter {
    pub alpha: f64,
    pub state: Action,
}

impl ActionFilter {
    pub fn new(alpha: f64, initial: Action) -> Self {
        Self {
            alpha,
            state: initial,
        }
    }

    pub fn apply(&mut self, a: &Action) -> Action {
        let a = clamp_action(a);
        for (s, v) in self.state.iter_mut().zip(a) {
            *s = self.alpha * v + (1.0 - self.alpha) * *s;
        }
        self.state
    }
}

/// Filters, unnormalizes and maps a policy action to a simulator command.
pub fn map_action(filter: &mut ActionFilter, bounds: &ActionBounds, a: &Action) -> Command {
    let filtered = filter.apply(a);
    bounds.to_command(&bounds.unnormalize(&filtered))
}
