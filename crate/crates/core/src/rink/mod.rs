//! Deterministic top-down hockey rink.
//!
//! Units are rink units and ticks. The rink is a rounded rectangle centered
//! on the origin; the red goal mouth sits on the `x = −half_length` wall and
//! the blue one on `x = +half_length`. Red attacks `+x`.

mod camera;
mod config;
mod physics;
mod render;

pub use camera::{Camera, Projection, SCREEN_HEIGHT, SCREEN_WIDTH};
pub use config::{CameraParams, CharacterParams, PhysicsParams, RinkConfig, RinkSpec};
pub use physics::{Action, KartSnapshot, KartState, PuckState, Snapshot, StepEvents, Team, World, WorldState};
pub use render::{render, render_top_down, Frame, MaskId, View};

/// 2D vector in rink units.
pub type Vec2 = [f64; 2];

pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}
