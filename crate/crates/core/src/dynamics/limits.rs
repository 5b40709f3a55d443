//! Joint-limit mechanisms. The hard limit is a unilateral spring on each UJ
//! axis past the per-UJ share of the joint's range. Rim contact measures the
//! gap between the facing rims of adjacent disks on the compressed side.
//! The soft limit has no force of its own; it lives in the stiffness tuning
//! checked at model load.

/// A unilateral penalty acting on a gap function `s(phi)` of a few DoFs.
/// Penetration is `-s` when `s < 0`; `grad` holds `ds/dphi` for `dofs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRow {
    pub dofs: [usize; 2],
    pub grad: [f64; 2],
    pub count: usize,
    pub gap: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl LimitRow {
    /// Explicit force `-(k s + c ds/dt)` along the gap, clamped at zero.
    pub fn force(&self, phid: &[f64]) -> f64 {
        let rate: f64 = (0..self.count).map(|i| self.grad[i] * phid[self.dofs[i]]).sum();
        (-self.stiffness * self.gap - self.damping * rate).max(0.0)
    }

    pub fn potential(&self) -> f64 {
        0.5 * self.stiffness * self.gap.min(0.0).powi(2)
    }
}

/// Method 1 row for one UJ axis, if it is past its limit.
pub fn hard_limit_row(dof: usize, phi: f64, limit: f64, k: f64, c: f64) -> Option<LimitRow> {
    let gap = limit - phi.abs();
    (gap < 0.0).then(|| LimitRow {
        dofs: [dof, dof],
        grad: [-phi.signum(), 0.0],
        count: 1,
        gap,
        stiffness: k,
        damping: c,
    })
}

/// Generalized forces of the hard limit taken explicitly: zero inside the
/// range and `k * excess` opposing the excess outside it.
pub fn hard_limit_torque(phi: f64, limit: f64, k: f64) -> f64 {
    let excess = phi.abs() - limit;
    if excess > 0.0 {
        -phi.signum() * k * excess
    } else {
        0.0
    }
}

/// Relative tilt between adjacent disk normals.
#[inline]
pub fn uj_tilt(phi_x: f64, phi_y: f64) -> f64 {
    (phi_x.cos() * phi_y.cos()).clamp(-1.0, 1.0).acos()
}

/// Rim gap of two disks of radius `radius` and thickness `thickness` whose
/// centres sit `half_length` on either side of the pivot.
pub fn rim_gap(tilt: f64, half_length: f64, radius: f64, thickness: f64) -> f64 {
    let arm = half_length - 0.5 * thickness;
    2.0 * (arm * (0.5 * tilt).cos() - radius * (0.5 * tilt).sin())
}

/// Planar tilt at which the rims touch.
pub fn rim_contact_angle(half_length: f64, radius: f64, thickness: f64) -> f64 {
    2.0 * ((half_length - 0.5 * thickness) / radius).atan()
}

/// Method 3 row for one UJ, if its rims overlap.
#[allow(clippy::too_many_arguments)]
pub fn rim_row(
    dofs: [usize; 2],
    phi_x: f64,
    phi_y: f64,
    half_length: f64,
    radius: f64,
    thickness: f64,
    k: f64,
    c: f64,
) -> Option<LimitRow> {
    let tilt = uj_tilt(phi_x, phi_y);
    let gap = rim_gap(tilt, half_length, radius, thickness);
    if gap >= 0.0 {
        return None;
    }
    let arm = half_length - 0.5 * thickness;
    let dgap = -(arm * (0.5 * tilt).sin() + radius * (0.5 * tilt).cos());
    let st = tilt.sin().max(1e-12);
    let (sx, cx) = phi_x.sin_cos();
    let (sy, cy) = phi_y.sin_cos();
    Some(LimitRow {
        dofs,
        grad: [dgap * sx * cy / st, dgap * cx * sy / st],
        count: 2,
        gap,
        stiffness: k,
        damping: c,
    })
}
