//! First-order pressure lag of the pneumatic chambers.

pub const PRESSURE_MIN_KPA: f64 = 0.0;
pub const PRESSURE_MAX_KPA: f64 = 300.0;

/// Exact discretization of `tau * dp/dt = p_cmd - p` over `dt`, clamped to the
/// chamber range.
pub fn pressure_step(p: f64, p_cmd: f64, dt: f64, tau: f64) -> f64 {
    pressure_step_bounded(p, p_cmd, dt, tau, PRESSURE_MIN_KPA, PRESSURE_MAX_KPA)
}

pub fn pressure_step_bounded(p: f64, p_cmd: f64, dt: f64, tau: f64, lo: f64, hi: f64) -> f64 {
    let gain = -(-dt / tau).exp_m1();
    (p + (p_cmd - p) * gain).clamp(lo, hi)
}
