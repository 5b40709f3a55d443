//! Robot and scene description, parameter lumping and the model file format.
//!
//! A model file is TOML preceded by the header line `# softchain-model v1`.
//! Every quantity is SI except pressures, which are kPa.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::kinematics::{rot_x, rot_y, rot_z};

pub const FORMAT_NAME: &str = "softchain-model";
pub const FORMAT_VERSION: u32 = 1;

/// The calibrated model shipped with the crate.
pub const DEFAULT_MODEL_TOML: &str = include_str!("../models/default.toml");

/// Per-UJ spring and damper for a joint of `disk_count` disks whose springs
/// act in series: `1/K = (N - 1)/k_disk`.
pub fn distribute_stiffness(
    stiffness: f64,
    damping: f64,
    disk_count: usize,
) -> Result<(f64, f64), ModelError> {
    if disk_count < 2 {
        return Err(ModelError::invalid("disk_count", disk_count, "must be at least 2"));
    }
    let n = (disk_count - 1) as f64;
    Ok((stiffness * n, damping * n))
}

/// Hard limit per UJ axis when the joint's range is split evenly over its UJs.
pub fn per_uj_limit(max_bend: f64, disk_count: usize) -> f64 {
    max_bend / (disk_count.saturating_sub(1).max(1)) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumJointSpec {
    pub disk_count: usize,
    pub length: f64,
    pub mass: f64,
    /// Overall bending stiffness per axis, N m/rad.
    pub stiffness: f64,
    /// Overall bending damping per axis, N m s/rad.
    pub damping: f64,
    pub disk_radius: f64,
    /// Radial offset of the chamber attachment points; 0.7 disk radii when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tendon_radius: Option<f64>,
    pub max_bend: f64,
    /// Physical disk thickness. When absent it is derived from the disk count
    /// so that adjacent rims touch at 1.1 times the per-UJ hard limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disk_thickness: Option<f64>,
}

/// Ratio between the rim-contact angle and the per-UJ hard limit used when
/// the disk thickness is derived.
pub const RIM_CONTACT_MARGIN: f64 = 1.1;

/// Lower bound on a derived disk thickness as a fraction of the disk spacing.
/// Coarse chains of wide disks cannot reach their per-UJ limit before the
/// rims meet; they get thin disks and rim contact sets their range.
pub const MIN_THICKNESS_FRACTION: f64 = 0.1;

impl ContinuumJointSpec {
    pub fn uj_count(&self) -> usize {
        self.disk_count - 1
    }

    /// Half the spacing between adjacent disk centres.
    pub fn half_length(&self) -> f64 {
        self.length / (2.0 * self.uj_count() as f64)
    }

    pub fn tendon_radius(&self) -> f64 {
        self.tendon_radius.unwrap_or(0.7 * self.disk_radius)
    }

    pub fn k_disk(&self) -> f64 {
        self.stiffness * self.uj_count() as f64
    }

    pub fn c_disk(&self) -> f64 {
        self.damping * self.uj_count() as f64
    }

    pub fn per_uj_limit(&self) -> f64 {
        per_uj_limit(self.max_bend, self.disk_count)
    }

    pub fn disk_mass(&self) -> f64 {
        self.mass / self.disk_count as f64
    }

    pub fn disk_thickness(&self) -> f64 {
        self.disk_thickness.unwrap_or_else(|| {
            let beta = RIM_CONTACT_MARGIN * self.per_uj_limit();
            let spacing = 2.0 * self.half_length();
            let t = if 0.5 * beta < std::f64::consts::FRAC_PI_2 {
                spacing - 2.0 * self.disk_radius * (0.5 * beta).tan()
            } else {
                0.0
            };
            t.max(MIN_THICKNESS_FRACTION * spacing)
        })
    }

    /// Axial clearance between facing surfaces of adjacent disks on the centreline.
    pub fn face_clearance(&self) -> f64 {
        2.0 * self.half_length() - self.disk_thickness()
    }

    fn validate(&self, path: &str) -> Result<(), ModelError> {
        if self.disk_count < 2 {
            return Err(ModelError::invalid(
                format!("{path}.disk_count"),
                self.disk_count,
                "must be at least 2",
            ));
        }
        positive(&format!("{path}.length"), self.length)?;
        positive(&format!("{path}.mass"), self.mass)?;
        positive(&format!("{path}.stiffness"), self.stiffness)?;
        positive(&format!("{path}.damping"), self.damping)?;
        positive(&format!("{path}.disk_radius"), self.disk_radius)?;
        positive(&format!("{path}.tendon_radius"), self.tendon_radius())?;
        if !(self.max_bend > 0.0 && self.max_bend < std::f64::consts::PI) {
            return Err(ModelError::invalid(
                format!("{path}.max_bend"),
                self.max_bend,
                "must lie in (0, pi)",
            ));
        }
        let t = self.disk_thickness();
        if !(t > 0.0 && t.is_finite()) {
            return Err(ModelError::invalid(
                format!("{path}.disk_thickness"),
                t,
                "must be positive; disks too wide for their spacing",
            ));
        }
        if t >= 2.0 * self.half_length() {
            return Err(ModelError::invalid(
                format!("{path}.disk_thickness"),
                t,
                "must be smaller than the disk spacing",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub length: f64,
    pub mass: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub side: Side,
    /// Shoulder position relative to the torso centre.
    pub mount: [f64; 3],
    /// Forward rotation of the hanging arm, rad.
    pub pin_angle: f64,
    pub joints: Vec<ContinuumJointSpec>,
    pub links: Vec<LinkSpec>,
}

impl ArmSpec {
    /// Orientation of the first joint's base disk relative to the torso. The
    /// joint axis points down and tilted forward by the pin angle; the two
    /// arms are mirror images so a positive `q0` bends either arm outward.
    pub fn mount_rotation(&self) -> Matrix3<f64> {
        let hang = rot_y(-self.pin_angle) * rot_x(std::f64::consts::PI);
        match self.side {
            Side::Left => hang,
            Side::Right => hang * rot_z(std::f64::consts::PI),
        }
    }

    pub fn mount_position(&self) -> Vector3<f64> {
        Vector3::from(self.mount)
    }

    pub fn dof(&self) -> usize {
        self.joints.iter().map(|j| 2 * j.uj_count()).sum()
    }

    fn validate(&self, path: &str) -> Result<(), ModelError> {
        if self.joints.len() != 3 {
            return Err(ModelError::invalid(
                format!("{path}.joints"),
                self.joints.len(),
                "an arm has exactly 3 continuum joints",
            ));
        }
        if self.links.len() != 2 {
            return Err(ModelError::invalid(
                format!("{path}.links"),
                self.links.len(),
                "an arm has exactly 2 rigid links",
            ));
        }
        finite(&format!("{path}.pin_angle"), self.pin_angle)?;
        for (i, v) in self.mount.iter().enumerate() {
            finite(&format!("{path}.mount[{i}]"), *v)?;
        }
        for (i, j) in self.joints.iter().enumerate() {
            j.validate(&format!("{path}.joints[{i}]"))?;
        }
        for (i, l) in self.links.iter().enumerate() {
            let p = format!("{path}.links[{i}]");
            positive(&format!("{p}.length"), l.length)?;
            positive(&format!("{p}.mass"), l.mass)?;
            positive(&format!("{p}.radius"), l.radius)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorsoSpec {
    /// Height of the chest centre above the floor when the elevator reads 0.
    pub base_height: f64,
    pub chest_half_extents: [f64; 3],
    /// Chest centre offset from the torso origin.
    #[serde(default)]
    pub chest_offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElevatorSpec {
    pub h_min: f64,
    pub h_max: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSpec {
    pub p_min: f64,
    pub p_max: f64,
    /// Mean of every antagonistic pair, kPa.
    pub p_mean: f64,
    /// Effective piston area of one chamber, m^2.
    pub area: f64,
    /// First-order pressure lag, s.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSpec {
    pub k_n: f64,
    pub c_n: f64,
    pub mu_arm_box: f64,
    pub mu_box_floor: f64,
    pub mu_arm_floor: f64,
    pub mu_box_chest: f64,
    /// Velocity scale of the smooth Coulomb saturation, m/s.
    pub friction_velocity: f64,
    /// Per-UJ hard limit spring, N m/rad.
    pub k_limit: f64,
    pub c_limit: f64,
    pub hard_limits: bool,
    pub rim_contact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    /// Width (x), depth (y), height (z) of the box, m.
    pub size: [f64; 3],
    pub mass: f64,
    pub friction: f64,
}

impl BoxSpec {
    pub fn half_extents(&self) -> Vector3<f64> {
        Vector3::from(self.size) * 0.5
    }

    /// Uniform-density body inertia, diagonal in the box frame.
    pub fn inertia(&self) -> Matrix3<f64> {
        let [w, d, h] = self.size;
        let k = self.mass / 12.0;
        Matrix3::from_diagonal(&Vector3::new(
            k * (d * d + h * h),
            k * (w * w + h * h),
            k * (w * w + d * d),
        ))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, s) in self.size.iter().enumerate() {
            positive(&format!("box.size[{i}]"), *s)?;
        }
        positive("box.mass", self.mass)?;
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(ModelError::invalid("box.friction", self.friction, "must be >= 0"));
        }
        Ok(())
    }
}

/// Scene placement and waypoints of the scripted grasp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub nominal_box: BoxSpec,
    /// Nominal distance of the box centre in front of the torso axis, m.
    pub box_x: f64,
    pub max_offset: f64,
    /// Maximum yaw of the box, rad.
    pub max_yaw: f64,
    pub approach_height: f64,
    pub height_tolerance: f64,
    pub waypoint_steps: usize,
    /// Differential pressures per arm (six DoF each), kPa.
    pub approach_left: [f64; 6],
    pub approach_right: [f64; 6],
    pub grasp_left: [f64; 6],
    pub grasp_right: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: f64,
    pub gravity: f64,
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub sim: SimSpec,
    pub torso: TorsoSpec,
    pub elevator: ElevatorSpec,
    pub actuator: ActuatorSpec,
    pub contact: ContactSpec,
    /// Low-pass coefficient applied to normalized actions.
    pub action_filter: f64,
    pub left: ArmSpec,
    pub right: ArmSpec,
    pub task: TaskSpec,
}

impl RobotModel {
    pub fn shipped() -> RobotModel {
        Self::from_str(DEFAULT_MODEL_TOML).expect("shipped model is valid")
    }

    pub fn arms(&self) -> [&ArmSpec; 2] {
        [&self.left, &self.right]
    }

    /// Copy with every continuum joint rediscretized to `n` disks. Derived
    /// disk thicknesses follow automatically; explicit ones are dropped.
    pub fn with_disk_count(&self, n: usize) -> Result<RobotModel, ModelError> {
        let mut m = self.clone();
        for arm in [&mut m.left, &mut m.right] {
            for j in &mut arm.joints {
                j.disk_count = n;
                j.disk_thickness = None;
            }
        }
        m.validate_structure()?;
        Ok(m)
    }

    pub fn from_str(text: &str) -> Result<RobotModel, ModelError> {
        let expected = format!("# {FORMAT_NAME} v{FORMAT_VERSION}");
        let header = text
            .lines()
            .find(|l| !l.trim().is_empty())
            .map(str::trim)
            .unwrap_or("");
        let prefix = format!("# {FORMAT_NAME} v");
        match header.strip_prefix(&prefix) {
            Some(v) if v == FORMAT_VERSION.to_string() => {}
            Some(v) => return Err(ModelError::UnsupportedVersion(v.to_string())),
            None => return Err(ModelError::MissingHeader { expected }),
        }
        let model: RobotModel =
            toml::from_str(text).map_err(|e| ModelError::Schema(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml(&self) -> Result<String, ModelError> {
        let body = toml::to_string(self).map_err(|e| ModelError::Serialize(e.to_string()))?;
        Ok(format!("# {FORMAT_NAME} v{FORMAT_VERSION}\n{body}"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Structural and physical checks, including the soft-limit calibration.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_structure()?;
        for arm in self.arms() {
            for (i, j) in arm.joints.iter().enumerate() {
                let bend = crate::dynamics::tendon::soft_limit_bend(j, &self.actuator);
                if (bend - j.max_bend).abs() > 0.1 * j.max_bend {
                    return Err(ModelError::invalid(
                        format!("{:?}.joints[{i}].stiffness", arm.side).to_lowercase(),
                        j.stiffness,
                        &format!(
                            "steady bend at full differential pressure is {bend:.3} rad, \
                             more than 10% away from max_bend {:.3} rad",
                            j.max_bend
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    fn validate_structure(&self) -> Result<(), ModelError> {
        positive("sim.dt", self.sim.dt)?;
        positive("sim.gravity", self.sim.gravity)?;
        if self.sim.substeps == 0 {
            return Err(ModelError::invalid("sim.substeps", 0, "must be at least 1"));
        }
        positive("torso.base_height", self.torso.base_height)?;
        for (i, v) in self.torso.chest_half_extents.iter().enumerate() {
            positive(&format!("torso.chest_half_extents[{i}]"), *v)?;
        }
        let e = &self.elevator;
        if !(e.h_min < e.h_max && e.h_min.is_finite() && e.h_max.is_finite()) {
            return Err(ModelError::invalid(
                "elevator.h_min",
                e.h_min,
                "must be finite and below h_max",
            ));
        }
        positive("elevator.v_max", e.v_max)?;
        positive("elevator.a_max", e.a_max)?;
        positive("elevator.j_max", e.j_max)?;
        let a = &self.actuator;
        if !(a.p_min >= 0.0 && a.p_min < a.p_max && a.p_max.is_finite()) {
            return Err(ModelError::invalid(
                "actuator.p_max",
                a.p_max,
                "pressure bounds must satisfy 0 <= p_min < p_max",
            ));
        }
        if !(a.p_mean > a.p_min && a.p_mean < a.p_max) {
            return Err(ModelError::invalid(
                "actuator.p_mean",
                a.p_mean,
                "must lie strictly inside the pressure bounds",
            ));
        }
        positive("actuator.area", a.area)?;
        positive("actuator.tau", a.tau)?;
        let c = &self.contact;
        positive("contact.k_n", c.k_n)?;
        non_negative("contact.c_n", c.c_n)?;
        non_negative("contact.mu_arm_box", c.mu_arm_box)?;
        non_negative("contact.mu_box_floor", c.mu_box_floor)?;
        non_negative("contact.mu_arm_floor", c.mu_arm_floor)?;
        non_negative("contact.mu_box_chest", c.mu_box_chest)?;
        positive("contact.friction_velocity", c.friction_velocity)?;
        positive("contact.k_limit", c.k_limit)?;
        non_negative("contact.c_limit", c.c_limit)?;
        if !(self.action_filter > 0.0 && self.action_filter <= 1.0) {
            return Err(ModelError::invalid(
                "action_filter",
                self.action_filter,
                "must lie in (0, 1]",
            ));
        }
        self.left.validate("left")?;
        self.right.validate("right")?;
        if self.left.side != Side::Left || self.right.side != Side::Right {
            return Err(ModelError::invalid(
                "right.side",
                format!("{:?}", self.right.side),
                "left and right arms must be declared with their own side",
            ));
        }
        let t = &self.task;
        t.nominal_box.validate()?;
        non_negative("task.max_offset", t.max_offset)?;
        non_negative("task.max_yaw", t.max_yaw)?;
        if !(t.approach_height >= e.h_min && t.approach_height <= e.h_max) {
            return Err(ModelError::invalid(
                "task.approach_height",
                t.approach_height,
                "must lie within the elevator range",
            ));
        }
        positive("task.height_tolerance", t.height_tolerance)?;
        if t.waypoint_steps == 0 {
            return Err(ModelError::invalid("task.waypoint_steps", 0, "must be at least 1"));
        }
        let half = 0.5 * (a.p_max - a.p_min);
        for (name, w) in [
            ("approach_left", &t.approach_left),
            ("approach_right", &t.approach_right),
            ("grasp_left", &t.grasp_left),
            ("grasp_right", &t.grasp_right),
        ] {
            for (i, v) in w.iter().enumerate() {
                if !(v.abs() <= half) {
                    return Err(ModelError::invalid(
                        format!("task.{name}[{i}]"),
                        v,
                        "differential pressure exceeds half the pressure range",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Reads and fully validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<RobotModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RobotModel::from_str(&text)
}

fn finite(field: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(field, v, "must be finite"))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(field, v, "must be positive and finite"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ModelError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(field, v, "must be non-negative and finite"))
    }
}
