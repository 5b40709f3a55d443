//! Periodic downward push on the box centroid.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Episode time of the first push, s.
    pub onset: f64,
    pub on: f64,
    pub off: f64,
    /// Force magnitude, N, applied along -z.
    pub magnitude: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            onset: 10.0,
            on: 1.0,
            off: 1.0,
            magnitude: 100.0,
        }
    }
}

impl Perturbation {
    pub fn is_on(&self, t: f64) -> bool {
        if t < self.onset {
            return false;
        }
        let phase = (t - self.onset) % (self.on + self.off);
        phase < self.on
    }

    pub fn force(&self, t: f64) -> Vector3<f64> {
        if self.is_on(t) {
            Vector3::new(0.0, 0.0, -self.magnitude)
        } else {
            Vector3::zeros()
        }
    }

    /// Policy step at which the first push starts, at `rate` steps per second.
    pub fn onset_step(&self, rate: f64) -> usize {
        (self.onset * rate).ceil() as usize
    }
}
