//! Puck perception and control stack.
//!
//! * [`tensor`]: reverse-mode autodiff over `f64` tensors plus Adam.
//! * [`model`]: the two-headed encoder–decoder puck detector.
//! * [`loss`], [`metrics`]: training objective and evaluation metrics.
//! * [`rink`]: deterministic 2D rink simulator, camera and rasterizer.
//! * [`datagen`]: labeled frame collection, splitting and augmentation.
//! * [`train`]: training loop, early stopping and the L2 sweep.
//! * [`agents`]: Spotter and Chaser controllers and perception.
//! * [`harness`]: matches, tournaments, reports and replays.

pub mod agents;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod image_io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rink;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
