use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::loss::sigmoid;
use crate::model::PuckNet;
use crate::rink::{render, Camera, RinkConfig, Vec2, View, WorldState, SCREEN_HEIGHT, SCREEN_WIDTH};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerceptionMode {
    #[default]
    Oracle,
    Learned,
}

/// One frame's worth of puck evidence from one kart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub visible: bool,
    pub screen: Option<[f64; 2]>,
    pub world: Option<Vec2>,
    pub confidence: f64,
}

impl Detection {
    pub const NONE: Detection = Detection {
        visible: false,
        screen: None,
        world: None,
        confidence: 0.0,
    };
}

/// What a kart currently believes about the puck.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perception {
    pub mode: PerceptionMode,
    pub puck_visible: bool,
    pub puck_screen: Option<[f64; 2]>,
    /// Freshest world estimate; stale when `age_ticks > 0`.
    pub puck_world: Option<Vec2>,
    pub confidence: f64,
    pub age_ticks: u64,
}

impl Perception {
    pub fn unseen(mode: PerceptionMode) -> Self {
        Self {
            mode,
            puck_visible: false,
            puck_screen: None,
            puck_world: None,
            confidence: 0.0,
            age_ticks: 0,
        }
    }
}

/// Ground truth: projects the puck center and tests the frustum.
pub fn perceive_oracle(state: &WorldState, cfg: &RinkConfig, kart: usize) -> Detection {
    let cam = Camera::for_kart(&state.karts[kart], &cfg.camera);
    let p = state.puck.position;
    match cam.to_image([p[0], p[1], cfg.physics.puck_height]).on_screen() {
        Some(screen) => Detection {
            visible: true,
            screen: Some(screen),
            world: Some(p),
            confidence: 1.0,
        },
        None => Detection::NONE,
    }
}

/// Runs a trained network on kart camera frames.
#[derive(Clone, Debug)]
pub struct LearnedDetector {
    pub model: Arc<PuckNet>,
    pub tau: f64,
}

impl LearnedDetector {
    pub fn new(model: Arc<PuckNet>, tau: f64) -> Self {
        Self { model, tau }
    }

    /// Detections for several karts from one batched forward pass.
    pub fn detect(&self, state: &WorldState, cfg: &RinkConfig, karts: &[usize]) -> Result<Vec<Detection>> {
        let mc = self.model.config();
        let (w, h) = (mc.input_width, mc.input_height);
        let frames: Vec<Vec<u8>> = karts
            .iter()
            .map(|&k| render(state, cfg, k, &View::new(SCREEN_WIDTH as usize, SCREEN_HEIGHT as usize)).resize_rgb(w, h))
            .collect();
        let refs: Vec<&[u8]> = frames.iter().map(|f| f.as_slice()).collect();
        let pred = self.model.predict_frames(&refs, w, h)?;
        Ok(karts
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let p = sigmoid(pred.logits[i]);
                let [sx, sy] = pred.coords[i];
                let cam = Camera::for_kart(&state.karts[k], &cfg.camera);
                let world = cam
                    .back_project(sx, sy, cfg.physics.puck_height)
                    .map(|q| cfg.rink.clamp_inside(q, cfg.physics.puck_radius));
                let visible = p >= self.tau && world.is_some();
                Detection {
                    visible,
                    screen: visible.then_some([sx, sy]),
                    world: if visible { world } else { None },
                    confidence: p,
                }
            })
            .collect())
    }
}

/// Per-kart memory turning detections into perceptions with an age.
#[derive(Clone, Debug, PartialEq)]
pub struct Eye {
    current: Perception,
}

impl Eye {
    pub fn new(mode: PerceptionMode) -> Self {
        Self {
            current: Perception::unseen(mode),
        }
    }

    pub fn current(&self) -> &Perception {
        &self.current
    }

    pub fn observe(&mut self, d: Detection) -> Perception {
        let c = &mut self.current;
        if d.visible {
            c.puck_visible = true;
            c.puck_screen = d.screen;
            c.puck_world = d.world;
            c.confidence = d.confidence;
            c.age_ticks = 0;
        } else {
            c.puck_visible = false;
            c.puck_screen = None;
            c.confidence = 0.0;
            c.age_ticks += 1;
        }
        self.current
    }

    /// Ages the last perception by one tick without new evidence.
    pub fn hold(&mut self) -> Perception {
        self.current.age_ticks += 1;
        self.current
    }
}

/// Team-wide puck estimate shared between Spotter and Chaser.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Blackboard {
    pub estimate: Option<Vec2>,
    pub confidence: f64,
    pub age: u64,
    pub visible: bool,
}

impl Blackboard {
    pub fn update(&mut self, spotter: &Perception, chaser: &Perception) {
        let pick = match (spotter.puck_visible, chaser.puck_visible) {
            (true, true) if chaser.confidence > spotter.confidence => Some(chaser),
            (true, _) => Some(spotter),
            (false, true) => Some(chaser),
            (false, false) => None,
        };
        match pick.filter(|p| p.puck_world.is_some()) {
            Some(p) => {
                self.estimate = p.puck_world;
                self.confidence = p.confidence;
                self.age = p.age_ticks;
                self.visible = true;
            }
            None => {
                self.age += 1;
                self.visible = false;
            }
        }
    }

    pub fn as_perception(&self, mode: PerceptionMode) -> Perception {
        Perception {
            mode,
            puck_visible: self.visible,
            puck_screen: None,
            puck_world: self.estimate,
            confidence: self.confidence,
            age_ticks: self.age,
        }
    }
}
