//! Collision geometry and penalty contact laws.
//!
//! Normals point from the second body of a pair toward the first, so a
//! positive normal force pushes the first body along the normal.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kinematics::Pose;
use crate::model::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyId {
    Floor,
    Chest,
    Box,
    Arm { side: Side, sphere: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub position: Vector3<f64>,
    /// Unit normal from `bodies.1` toward `bodies.0`.
    pub normal: Vector3<f64>,
    pub depth: f64,
    pub bodies: (BodyId, BodyId),
    /// Normal force magnitude, N.
    pub force: f64,
    /// Tangential force on the first body, N.
    pub friction: Vector3<f64>,
}

/// Oriented box given by its pose and half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub pose: Pose,
    pub half: Vector3<f64>,
}

/// Penetration of a point inside an OBB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPenetration {
    /// Outward normal of the face of least penetration, world frame.
    pub normal: Vector3<f64>,
    pub depth: f64,
}

impl Obb {
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|k| {
            let s = Vector3::new(
                if k & 1 == 0 { -1.0 } else { 1.0 },
                if k & 2 == 0 { -1.0 } else { 1.0 },
                if k & 4 == 0 { -1.0 } else { 1.0 },
            );
            self.pose.transform_point(&self.half.component_mul(&s))
        })
    }

    /// Corners plus `per_edge` evenly spaced interior points on every edge.
    pub fn surface_samples(&self, per_edge: usize) -> Vec<Vector3<f64>> {
        let mut pts: Vec<Vector3<f64>> = self.corners().to_vec();
        for axis in 0..3 {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            for sa in [-1.0, 1.0] {
                for sb in [-1.0, 1.0] {
                    for k in 1..=per_edge {
                        let t = -1.0 + 2.0 * k as f64 / (per_edge + 1) as f64;
                        let mut local = Vector3::zeros();
                        local[axis] = t * self.half[axis];
                        local[a] = sa * self.half[a];
                        local[b] = sb * self.half[b];
                        pts.push(self.pose.transform_point(&local));
                    }
                }
            }
        }
        pts
    }

    pub fn closest_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let local = self.pose.inverse().transform_point(p);
        let clamped = Vector3::from_fn(|i, _| local[i].clamp(-self.half[i], self.half[i]));
        self.pose.transform_point(&clamped)
    }

    pub fn penetration(&self, p: &Vector3<f64>) -> Option<PointPenetration> {
        let local = self.pose.rotation.transpose() * (p - self.pose.translation);
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..3 {
            let d = self.half[i] - local[i].abs();
            if d <= 0.0 {
                return None;
            }
            if best.is_none_or(|(_, bd, _)| d < bd) {
                best = Some((i, d, if local[i] >= 0.0 { 1.0 } else { -1.0 }));
            }
        }
        let (i, depth, s) = best?;
        Some(PointPenetration {
            normal: self.pose.rotation.column(i) * s,
            depth,
        })
    }
}

/// Overlap of a sphere with the floor plane `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereHit {
    /// Unit normal pointing toward the sphere.
    pub normal: Vector3<f64>,
    pub depth: f64,
    /// Point midway through the overlap.
    pub point: Vector3<f64>,
}

pub fn sphere_floor(center: &Vector3<f64>, radius: f64) -> Option<SphereHit> {
    let depth = radius - center.z;
    (depth > 0.0).then(|| SphereHit {
        normal: Vector3::z(),
        depth,
        point: Vector3::new(center.x, center.y, 0.5 * (center.z - radius)),
    })
}

pub fn sphere_obb(center: &Vector3<f64>, radius: f64, obb: &Obb) -> Option<SphereHit> {
    let closest = obb.closest_point(center);
    let d = center - closest;
    let dist = d.norm();
    if dist > 1e-12 {
        let depth = radius - dist;
        if depth <= 0.0 {
            return None;
        }
        let normal = d / dist;
        return Some(SphereHit {
            normal,
            depth,
            point: closest + normal * (0.5 * (dist - radius)),
        });
    }
    // centre inside the box: push out through the nearest face
    let pen = obb.penetration(center)?;
    Some(SphereHit {
        normal: pen.normal,
        depth: pen.depth + radius,
        point: center + pen.normal * (pen.depth - radius) * 0.5,
    })
}

/// Explicit penalty normal force, clamped at zero. `depth_rate` is the rate of
/// penetration growth.
#[inline]
pub fn penalty_force(k_n: f64, c_n: f64, depth: f64, depth_rate: f64) -> f64 {
    (k_n * depth + c_n * depth_rate).max(0.0)
}

/// Smoothly saturated Coulomb friction: the viscous coefficient that maps the
/// tangential slip velocity to a force bounded by `mu * f_n`.
#[inline]
pub fn friction_coefficient(mu: f64, f_n: f64, slip_speed: f64, v_eps: f64) -> f64 {
    mu * f_n / (slip_speed * slip_speed + v_eps * v_eps).sqrt()
}

/// Two unit tangents orthogonal to `n` and to each other.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.6 { Vector3::x() } else { Vector3::y() };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::rot_z;

    #[test]
    fn sphere_above_floor_has_no_contact() {
        assert!(sphere_floor(&Vector3::new(0.3, 0.1, 0.11), 0.1).is_none());
    }

    #[test]
    fn penetrating_sphere_pushes_up() {
        let hit = sphere_floor(&Vector3::new(0.0, 0.0, 0.097), 0.1).unwrap();
        assert!((hit.depth - 0.003).abs() < 1e-15);
        assert_eq!(hit.normal, Vector3::z());
        let f = penalty_force(2e4, 200.0, hit.depth, 0.0);
        assert!((f - 2e4 * 0.003).abs() < 1e-9);
        assert_eq!(penalty_force(2e4, 200.0, 0.001, -1.0), 0.0);
    }

    #[test]
    fn sphere_against_rotated_box() {
        let obb = Obb {
            pose: Pose::new(rot_z(0.5), Vector3::new(1.0, 0.0, 0.5)),
            half: Vector3::new(0.2, 0.3, 0.5),
        };
        let face_normal = rot_z(0.5) * Vector3::x();
        let c = obb.pose.translation + face_normal * 0.28;
        let hit = sphere_obb(&c, 0.1, &obb).unwrap();
        assert!((hit.depth - 0.02).abs() < 1e-12);
        assert!((hit.normal - face_normal).norm() < 1e-12);
        assert!(sphere_obb(&(obb.pose.translation + face_normal * 0.31), 0.1, &obb).is_none());
        let inside = sphere_obb(&(obb.pose.translation + face_normal * 0.15), 0.1, &obb).unwrap();
        assert!((inside.depth - 0.15).abs() < 1e-12);
    }

    #[test]
    fn point_penetration_uses_nearest_face() {
        let obb = Obb {
            pose: Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)),
            half: Vector3::new(0.5, 0.5, 0.5),
        };
        let p = obb.penetration(&Vector3::new(0.1, -0.45, 1.2)).unwrap();
        assert!((p.depth - 0.05).abs() < 1e-12);
        assert_eq!(p.normal, -Vector3::y());
        assert!(obb.penetration(&Vector3::new(0.6, 0.0, 1.0)).is_none());
        assert_eq!(obb.surface_samples(2).len(), 8 + 12 * 2);
    }

    #[test]
    fn friction_saturates_at_coulomb_bound() {
        for v in [1e-4, 1e-2, 1.0, 100.0] {
            let g = friction_coefficient(0.8, 50.0, v, 1e-3);
            assert!(g * v <= 0.8 * 50.0 + 1e-12);
        }
        let g = friction_coefficient(0.8, 50.0, 100.0, 1e-3);
        assert!((g * 100.0 - 40.0).abs() < 1e-6);
        let (t1, t2) = tangent_basis(&Vector3::new(0.0, 0.6, 0.8));
        assert!(t1.dot(&t2).abs() < 1e-15 && (t1.norm() - 1.0).abs() < 1e-15);
    }
}
