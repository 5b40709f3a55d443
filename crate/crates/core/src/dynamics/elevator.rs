//! Jerk-limited point-to-point trajectories for the torso elevator.
//!
//! A plan is an initial state followed by piecewise-constant jerk segments.
//! Moves use the seven-segment double-S profile with a non-zero initial
//! velocity and zero initial acceleration. When the target lies behind the
//! current motion, or too close to stop in time, the elevator first brakes
//! to rest and then runs a rest-to-rest profile.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JerkSegment {
    pub duration: f64,
    pub jerk: f64,
}

/// Position, velocity, acceleration and jerk at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSample {
    pub q: f64,
    pub v: f64,
    pub a: f64,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevatorPlan {
    /// Absolute time at which the plan starts.
    pub start_time: f64,
    pub q0: f64,
    pub v0: f64,
    pub target: f64,
    pub segments: Vec<JerkSegment>,
}

impl ElevatorPlan {
    pub fn hold(q: f64, start_time: f64) -> Self {
        Self {
            start_time,
            q0: q,
            v0: 0.0,
            target: q,
            segments: Vec::new(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// State at absolute time `t`. Before the start the initial state is
    /// returned; after the end the plan rests at its target.
    pub fn sample(&self, t: f64) -> MotionSample {
        let mut tau = (t - self.start_time).max(0.0);
        let (mut q, mut v, mut a) = (self.q0, self.v0, 0.0);
        for seg in &self.segments {
            if tau <= seg.duration {
                return advance(q, v, a, seg.jerk, tau);
            }
            let s = advance(q, v, a, seg.jerk, seg.duration);
            (q, v, a) = (s.q, s.v, s.a);
            tau -= seg.duration;
        }
        MotionSample {
            q: self.target,
            v: 0.0,
            a: 0.0,
            j: 0.0,
        }
    }
}

#[inline]
fn advance(q: f64, v: f64, a: f64, j: f64, t: f64) -> MotionSample {
    MotionSample {
        q: q + v * t + 0.5 * a * t * t + j * t * t * t / 6.0,
        v: v + a * t + 0.5 * j * t * t,
        a: a + j * t,
        j,
    }
}

/// Time and jerk duration needed to brake from speed `v >= 0` to rest.
fn braking_profile(v: f64, lim: &MotionLimits) -> (f64, f64) {
    if v * lim.j_max < lim.a_max * lim.a_max {
        let tj = (v / lim.j_max).sqrt();
        (tj, 2.0 * tj)
    } else {
        let tj = lim.a_max / lim.j_max;
        (tj, tj + v / lim.a_max)
    }
}

/// Plans from `(q0, v0)` with zero acceleration to rest at `q1`.
pub fn plan(q0: f64, v0: f64, q1: f64, lim: &MotionLimits, start_time: f64) -> ElevatorPlan {
    let v0 = v0.clamp(-lim.v_max, lim.v_max);
    let mut segments = Vec::with_capacity(10);
    let dq = q1 - q0;
    if dq.abs() < 1e-12 && v0.abs() < 1e-12 {
        return ElevatorPlan::hold(q1, start_time);
    }
    let sigma = if dq != 0.0 { dq.signum() } else { -v0.signum() };
    let vs = sigma * v0;
    let (tj_stop, t_stop) = braking_profile(vs.abs(), lim);
    let stop_distance = 0.5 * vs * t_stop;
    let feasible = vs >= 0.0 && sigma * dq > stop_distance + 1e-12;
    if feasible {
        double_s(sigma * dq, vs, lim, sigma, &mut segments);
    } else {
        // brake to rest, then run rest-to-rest from wherever that leaves us
        let s = v0.signum();
        push(&mut segments, tj_stop, -s * lim.j_max);
        push(&mut segments, t_stop - 2.0 * tj_stop, 0.0);
        push(&mut segments, tj_stop, s * lim.j_max);
        let q_stop = q0 + 0.5 * v0 * t_stop;
        let rest = q1 - q_stop;
        if rest.abs() > 1e-12 {
            double_s(rest.abs(), 0.0, lim, rest.signum(), &mut segments);
        }
    }
    ElevatorPlan {
        start_time,
        q0,
        v0,
        target: q1,
        segments,
    }
}

fn push(segments: &mut Vec<JerkSegment>, duration: f64, jerk: f64) {
    if duration > 0.0 {
        segments.push(JerkSegment { duration, jerk });
    }
}

/// Double-S profile over distance `h > 0` starting at speed `v0 >= 0`,
/// ending at rest; jerks are scaled by `sigma` to restore the direction.
fn double_s(h: f64, v0: f64, lim: &MotionLimits, sigma: f64, out: &mut Vec<JerkSegment>) {
    let MotionLimits {
        v_max,
        a_max,
        j_max,
    } = *lim;
    let (mut tj1, mut ta) = if (v_max - v0) * j_max < a_max * a_max {
        let tj = ((v_max - v0) / j_max).sqrt();
        (tj, 2.0 * tj)
    } else {
        (a_max / j_max, a_max / j_max + (v_max - v0) / a_max)
    };
    let (mut tj2, mut td) = braking_profile(v_max, lim);
    let mut tv = h / v_max - 0.5 * ta * (1.0 + v0 / v_max) - 0.5 * td;
    if tv <= 0.0 {
        // the cruise velocity is never reached
        tv = 0.0;
        let mut a = a_max;
        loop {
            let tj = a / j_max;
            let delta = a.powi(4) / (j_max * j_max)
                + 2.0 * v0 * v0
                + a * (4.0 * h - 2.0 * tj * v0);
            let sq = delta.sqrt();
            ta = (a * a / j_max - 2.0 * v0 + sq) / (2.0 * a);
            td = (a * a / j_max + sq) / (2.0 * a);
            tj1 = tj;
            tj2 = tj;
            if ta < 0.0 {
                ta = 0.0;
                tj1 = 0.0;
                td = 2.0 * h / v0;
                tj2 = (j_max * h - (j_max * (j_max * h * h - v0.powi(3))).max(0.0).sqrt())
                    / (j_max * v0);
                break;
            }
            if (ta >= 2.0 * tj && td >= 2.0 * tj) || a < 1e-9 {
                break;
            }
            a *= 0.99;
        }
    }
    let j = sigma * j_max;
    push(out, tj1, j);
    push(out, ta - 2.0 * tj1, 0.0);
    push(out, tj1, -j);
    push(out, tv, 0.0);
    push(out, tj2, -j);
    push(out, td - 2.0 * tj2, 0.0);
    push(out, tj2, j);
}

/// Elevator state carried in the simulation: current target and active plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elevator {
    pub limits: MotionLimits,
    pub range: (f64, f64),
    pub plan: ElevatorPlan,
}

impl Elevator {
    pub fn new(h: f64, limits: MotionLimits, range: (f64, f64)) -> Self {
        Self {
            limits,
            range,
            plan: ElevatorPlan::hold(h, 0.0),
        }
    }

    pub fn target(&self) -> f64 {
        self.plan.target
    }

    /// Replans from the current motion when the clamped command differs from
    /// the active target.
    pub fn command(&mut self, h_des: f64, now: f64) {
        let h_des = h_des.clamp(self.range.0, self.range.1);
        if h_des != self.plan.target {
            let s = self.plan.sample(now);
            self.plan = plan(s.q, s.v, h_des, &self.limits, now);
        }
    }

    pub fn sample(&self, t: f64) -> MotionSample {
        self.plan.sample(t)
    }
}
