//! Lumped-parameter simulation of a pneumatic soft continuum torso, its
//! whole-body grasping environment and the analysis tools around it.

pub mod analytics;
pub mod bench;
pub mod calib;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod wire;

pub use error::{EnvError, KinematicsError, ModelError, SimError, StatsError};
pub use kinematics::Pose;
