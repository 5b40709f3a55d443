//! Spatial math and the three kinematic models of a continuum joint: a single
//! universal joint (UJ), a serial chain of UJs, and the two-DoF constant
//! curvature (CC) arc.
//!
//! Conventions: a continuum joint extends along its local +z axis. A UJ first
//! rotates about the local x axis (`phi[2i]`) and then about the rotated y axis
//! (`phi[2i + 1]`), with a segment of half-length `ell` on either side of the
//! pivot. The CC bending vector `q = (q0, q1)` is the x/y part of the
//! axis-angle vector of the tip orientation, so a positive `q0` tilts the tip
//! toward -y and a positive `q1` toward +x, matching the UJ sign pattern.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;

/// Twist (third log component) above which a CC estimate is flagged degraded.
pub const TWIST_DEGRADED_RAD: f64 = 0.05;

/// Angle above which `so3_log` switches to the diagonal axis extraction.
const LOG_NEAR_PI: f64 = 3.0;

const ORTHO_TOL: f64 = 1e-9;

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// `self * other`: express `other` (given in this frame) in the parent frame.
    #[inline]
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[inline]
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Pose {
        Pose {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }
}

/// True when `r` is orthonormal with determinant +1 within `tol`.
pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    err <= tol && (r.determinant() - 1.0).abs() <= tol && r.iter().all(|v| v.is_finite())
}

#[inline]
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

#[inline]
pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

#[inline]
pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

#[inline]
pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rodrigues' formula.
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let (a, b) = if theta2 < 1e-12 {
        // series of sin(t)/t and (1 - cos t)/t^2
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Axis-angle vector of a rotation, norm in `[0, pi]`.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, KinematicsError> {
    if !is_rotation(r, ORTHO_TOL) {
        return Err(KinematicsError::NotARotation);
    }
    Ok(so3_log_unchecked(r))
}

/// `so3_log` without the orthonormality check, for hot loops on matrices that
/// are rotations by construction.
pub fn so3_log_unchecked(r: &Matrix3<f64>) -> Vector3<f64> {
    let skew = vee(&(r - r.transpose())) * 0.5; // sin(theta) * axis
    let s = skew.norm();
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);
    if theta < LOG_NEAR_PI {
        if s < 1e-300 {
            return Vector3::zeros();
        }
        return skew * (theta / s);
    }
    // Near pi the skew part vanishes; recover the axis from the symmetric part.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
    let (mut i, mut best) = (0, sym[(0, 0)]);
    for k in 1..3 {
        if sym[(k, k)] > best {
            best = sym[(k, k)];
            i = k;
        }
    }
    let mut axis = sym.column(i).into_owned();
    let n = axis.norm();
    if n < 1e-300 {
        return Vector3::zeros();
    }
    axis /= n;
    if skew.norm() > 0.0 {
        if axis.dot(&skew) < 0.0 {
            axis = -axis;
        }
    } else if axis[i] < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Forward kinematics of one universal joint: `Tz(ell) Rx(phi1) Ry(phi2) Tz(ell)`.
pub fn uj_fk_single(phi1: f64, phi2: f64, ell: f64) -> Pose {
    let (s1, c1) = phi1.sin_cos();
    let (s2, c2) = phi2.sin_cos();
    let rotation = Matrix3::new(
        c2,
        0.0,
        s2,
        s1 * s2,
        c1,
        -s1 * c2,
        -c1 * s2,
        s1,
        c1 * c2,
    );
    let translation = Vector3::new(ell * s2, -ell * s1 * c2, ell * c1 * c2 + ell);
    Pose {
        rotation,
        translation,
    }
}

/// Angles of a UJ chain approximating one continuum joint.
#[derive(Debug, Clone, PartialEq)]
pub struct UjConfig {
    phi: Vec<f64>,
    half_length: f64,
}

impl UjConfig {
    pub fn new(phi: Vec<f64>, half_length: f64) -> Result<Self, KinematicsError> {
        if phi.len() < 2 || phi.len() % 2 != 0 {
            return Err(KinematicsError::BadAngleCount(phi.len()));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(KinematicsError::BadLength(half_length));
        }
        if let Some(&bad) = phi
            .iter()
            .find(|a| !a.is_finite() || a.abs() >= std::f64::consts::PI)
        {
            return Err(KinematicsError::AngleOutOfRange(bad));
        }
        Ok(Self { phi, half_length })
    }

    /// Straight chain of `segments` UJs for a joint of total `length`.
    pub fn straight(segments: usize, length: f64) -> Result<Self, KinematicsError> {
        Self::new(vec![0.0; 2 * segments], length / (2.0 * segments as f64))
    }

    pub fn angles(&self) -> &[f64] {
        &self.phi
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn segments(&self) -> usize {
        self.phi.len() / 2
    }
}

/// Tip pose of a UJ chain together with every disk pose along it.
#[derive(Debug, Clone)]
pub struct ChainFk {
    /// Disk frames from the base disk (identity) to the tip disk, `segments + 1` entries.
    pub disks: Vec<Pose>,
}

impl ChainFk {
    pub fn tip(&self) -> &Pose {
        self.disks.last().expect("chain has at least one disk")
    }
}

pub fn uj_fk_chain(cfg: &UjConfig) -> ChainFk {
    uj_fk_angles(cfg.angles(), cfg.half_length())
}

/// Chain forward kinematics on raw angles (even length, unchecked).
pub fn uj_fk_angles(phi: &[f64], ell: f64) -> ChainFk {
    let mut disks = Vec::with_capacity(phi.len() / 2 + 1);
    let mut pose = Pose::identity();
    disks.push(pose);
    for pair in phi.chunks_exact(2) {
        pose = pose.compose(&uj_fk_single(pair[0], pair[1], ell));
        disks.push(pose);
    }
    ChainFk { disks }
}

/// Relative orientation of a UJ chain's tip disk with respect to its base.
pub fn uj_chain_rotation(phi: &[f64]) -> Matrix3<f64> {
    phi.chunks_exact(2)
        .fold(Matrix3::identity(), |r, pair| r * rot_x(pair[0]) * rot_y(pair[1]))
}

/// Constant-curvature configuration of one continuum joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcConfig {
    pub q: [f64; 2],
    pub length: f64,
}

impl CcConfig {
    pub fn new(q: [f64; 2], length: f64) -> Result<Self, KinematicsError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(KinematicsError::BadLength(length));
        }
        let theta = q[0].hypot(q[1]);
        if !(theta < std::f64::consts::PI) {
            return Err(KinematicsError::AngleOutOfRange(theta));
        }
        Ok(Self { q, length })
    }

    pub fn bend(&self) -> f64 {
        self.q[0].hypot(self.q[1])
    }
}

/// Tip pose of a circular arc of length `L` bent by `q`.
pub fn cc_fk(cfg: &CcConfig) -> Pose {
    let [q0, q1] = cfg.q;
    let l = cfg.length;
    let theta2 = q0 * q0 + q1 * q1;
    let rotation = so3_exp(&Vector3::new(q0, q1, 0.0));
    // (1 - cos t)/t^2 and sin(t)/t, with series near the straight configuration
    let (one_minus_cos_over_t2, sinc) = if theta2 < 1e-10 {
        (0.5 - theta2 / 24.0, 1.0 - theta2 / 6.0)
    } else {
        let t = theta2.sqrt();
        ((1.0 - t.cos()) / theta2, t.sin() / t)
    };
    let translation = Vector3::new(
        l * q1 * one_minus_cos_over_t2,
        -l * q0 * one_minus_cos_over_t2,
        l * sinc,
    );
    Pose {
        rotation,
        translation,
    }
}

/// CC bending vector recovered from the base-to-tip relative orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcEstimate {
    pub config: CcConfig,
    /// Residual rotation about the joint axis, which the CC model cannot express.
    pub twist: f64,
    pub degraded: bool,
}

pub fn cc_estimate(r_rel: &Matrix3<f64>, length: f64) -> Result<CcEstimate, KinematicsError> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(KinematicsError::BadLength(length));
    }
    let w = so3_log(r_rel)?;
    Ok(cc_estimate_from_log(&w, length))
}

pub(crate) fn cc_estimate_from_log(w: &Vector3<f64>, length: f64) -> CcEstimate {
    CcEstimate {
        config: CcConfig {
            q: [w.x, w.y],
            length,
        },
        twist: w.z,
        degraded: w.z.abs() > TWIST_DEGRADED_RAD,
    }
}

/// Left Jacobian inverse of SO(3), used to differentiate `so3_log`.
pub fn so3_left_jacobian_inv(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let coef = if theta2 < 1e-8 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    Matrix3::identity() - k * 0.5 + k * k * coef
}
