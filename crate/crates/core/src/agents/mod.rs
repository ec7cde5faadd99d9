//! Spotter and Chaser controllers, their perception and the team blackboard.

mod chaser;
mod perception;
mod spotter;
mod team;

pub use chaser::{chaser_policy, compute_target, ChaserMode, ChaserState, TargetPoint};
pub use perception::{perceive_oracle, Blackboard, Detection, Eye, LearnedDetector, Perception, PerceptionMode};
pub use spotter::{spotter_policy, SpotterMode, SpotterState};
pub use team::{TeamConfig, TeamController, TeamKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rink::{wrap_angle, KartState, Vec2};

/// Behavior constants shared by both roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    /// Spotter backs away when the puck is closer than this.
    pub d_near: f64,
    /// Spotter gives chase when the puck is farther than this.
    pub d_far: f64,
    /// Ticks without a sighting before the Spotter searches.
    pub loss_threshold: u64,
    /// Probability threshold for a learned detection.
    pub tau: f64,
    /// Distance of the Chaser's target behind the puck.
    pub target_offset: f64,
    /// Chaser switches from approaching to pushing inside this radius of its target.
    pub capture_radius: f64,
    /// Steering per radian of heading error.
    pub steer_gain: f64,
    /// Spotter keeps throttle at zero while the puck is within this many degrees of its heading.
    pub watch_tolerance_deg: f64,
    /// Learned perception runs every this many ticks and holds its estimate in between.
    pub perception_interval: u64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            d_near: 12.0,
            d_far: 25.0,
            loss_threshold: 30,
            tau: 0.5,
            target_offset: 20.0,
            capture_radius: 6.0,
            steer_gain: 2.5,
            watch_tolerance_deg: 30.0,
            perception_interval: 2,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_near > 0.0 && self.d_far > self.d_near) {
            return Err(Error::Config("need 0 < d_near < d_far".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("tau must lie in [0, 1]".into()));
        }
        if self.target_offset < 0.0 || self.capture_radius <= 0.0 || self.steer_gain <= 0.0 {
            return Err(Error::Config("offset, capture radius and gain must be positive".into()));
        }
        if self.perception_interval == 0 {
            return Err(Error::Config("perception_interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// Signed angle from the kart's heading to `point` (positive = to the left).
pub fn heading_error(me: &KartState, point: Vec2) -> f64 {
    let d = [point[0] - me.position[0], point[1] - me.position[1]];
    if d[0] == 0.0 && d[1] == 0.0 {
        return 0.0;
    }
    wrap_angle(d[1].atan2(d[0]) - me.heading)
}

/// Steering that rotates toward a target `err` radians to the left while driving forward.
pub(crate) fn forward_steer(err: f64, gain: f64) -> f64 {
    (-gain * err).clamp(-1.0, 1.0)
}

/// Steering that rotates toward the same target while reversing.
pub(crate) fn reverse_steer(err: f64, gain: f64) -> f64 {
    (gain * err).clamp(-1.0, 1.0)
}

pub(crate) fn distance(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
