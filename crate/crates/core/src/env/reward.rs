//! Task, guided and shaped rewards.

use super::action::{Action, ACT_DIM};
use super::Outcome;

pub const TIP_REWARD: f64 = -2.0;
pub const LIFT_REWARD: f64 = 10.0;
pub const GUIDE_WEIGHT: f64 = 0.1;
/// Vertical chest offset below which contacts count toward the shaped reward, m.
pub const GRASP_GATE: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardScheme {
    Guided,
    Shaped,
}

pub fn task_reward(event: Option<Outcome>) -> f64 {
    match event {
        Some(Outcome::Tip) => TIP_REWARD,
        Some(Outcome::Lift) => LIFT_REWARD,
        _ => 0.0,
    }
}

/// Similarity of the policy action to the primitive's action.
pub fn guide_term(a: &Action, a_star: &Action) -> f64 {
    let d2: f64 = (0..ACT_DIM).map(|i| (a[i] - a_star[i]).powi(2)).sum();
    GUIDE_WEIGHT * (-0.5 * d2).exp()
}

pub fn guided_reward(a: &Action, a_star: &Action, event: Option<Outcome>) -> f64 {
    task_reward(event) + guide_term(a, a_star)
}

/// Terms of the shaped baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapedTerms {
    pub approach: f64,
    pub grasp: f64,
    pub height: f64,
}

/// `chest_to_box` is the chest centre minus the box centre; `contacts` counts
/// robot/box contact points; `z`, `z0` are current and initial box heights.
pub fn shaped_terms(chest_to_box: [f64; 3], contacts: usize, z: f64, z0: f64) -> ShapedTerms {
    let d2: f64 = chest_to_box.iter().map(|v| v * v).sum();
    ShapedTerms {
        approach: 0.1 * (-4.0 * d2).exp(),
        grasp: if chest_to_box[2].abs() < GRASP_GATE {
            0.1 * contacts as f64
        } else {
            0.0
        },
        height: (z - z0).max(0.0),
    }
}

pub fn shaped_reward(
    chest_to_box: [f64; 3],
    contacts: usize,
    z: f64,
    z0: f64,
    event: Option<Outcome>,
) -> f64 {
    let t = shaped_terms(chest_to_box, contacts, z, z0);
    task_reward(event) + t.approach + t.grasp + t.height
}
