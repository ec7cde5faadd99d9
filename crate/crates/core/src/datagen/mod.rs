//! Synthetic dataset factory: collectors, labeling, splits and augmentation.

mod augment;
mod collect;
mod split;
mod store;

pub use augment::{augment, flip_example, AugmentPolicy, Jitter};
pub use collect::{spotter_collect, spotter_collect_with, zamboni_collect, zamboni_collect_with, SpotterCollectConfig, ZamboniConfig};
pub use split::{split, Split, SplitIndices};
pub use store::{generate_dataset, load_dataset, Dataset, DatasetManifest, LabelRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rink::{Camera, MaskId, RinkConfig, WorldState, SCREEN_HEIGHT, SCREEN_WIDTH};

/// Puck pixels a 400×300 mask needs before the puck counts as present.
pub const PUCK_PIXEL_THRESHOLD: f64 = 20.0;
/// Label coordinates are stored on a 1/1024-px grid so mirroring is exact.
const COORD_QUANTUM: f64 = 1024.0;

/// Threshold rescaled by area for a `width × height` mask.
pub fn pixel_threshold(width: usize, height: usize) -> f64 {
    PUCK_PIXEL_THRESHOLD * (width * height) as f64 / (SCREEN_WIDTH * SCREEN_HEIGHT)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub label: u8,
    /// Screen position in 400×300 space; present whenever `label == 1`.
    pub coords: Option<[f64; 2]>,
    pub count: usize,
}

/// Labels a mask: present iff puck pixels exceed the threshold.
///
/// `puck_screen` is the unclipped projection of the puck center (`None` behind the camera);
/// a visible puck whose center lies outside the frame gets that position clamped to the frame.
pub fn label_example(mask: &[u8], width: usize, height: usize, puck_screen: Option<[f64; 2]>) -> Label {
    let count = mask.iter().filter(|&&m| m == MaskId::Puck as u8).count();
    let label = (count as f64 > pixel_threshold(width, height)) as u8;
    let coords = (label == 1).then(|| {
        let [x, y] = puck_screen.unwrap_or_else(|| mask_centroid(mask, width, height));
        let q = |v: f64, hi: f64| (v.clamp(0.0, hi) * COORD_QUANTUM).round() / COORD_QUANTUM;
        [q(x, SCREEN_WIDTH), q(y, SCREEN_HEIGHT)]
    });
    Label { label, coords, count }
}

/// Puck centroid in 400×300 screen units.
fn mask_centroid(mask: &[u8], width: usize, height: usize) -> [f64; 2] {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for (i, &m) in mask.iter().enumerate() {
        if m == MaskId::Puck as u8 {
            sx += (i % width) as f64 + 0.5;
            sy += (i / width) as f64 + 0.5;
            n += 1.0;
        }
    }
    [sx / n * SCREEN_WIDTH / width as f64, sy / n * SCREEN_HEIGHT / height as f64]
}

/// Unclipped screen position of the puck center seen from `kart`.
pub fn puck_screen(state: &WorldState, cfg: &RinkConfig, kart: usize) -> Option<[f64; 2]> {
    let cam = Camera::for_kart(&state.karts[kart], &cfg.camera);
    let p = state.puck.position;
    cam.project_unbounded([p[0], p[1], cfg.physics.puck_height]).map(|s| [s[0], s[1]])
}

/// One labeled sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: usize,
    /// Interleaved RGB at `frame_width × frame_height`.
    pub frame: Vec<u8>,
    pub frame_width: usize,
    pub frame_height: usize,
    /// Category ids at 400×300.
    pub mask: Vec<u8>,
    pub mask_width: usize,
    pub mask_height: usize,
    pub label: u8,
    pub coords: Option<[f64; 2]>,
    pub count: usize,
    pub collector: String,
    pub seed: u64,
}

/// Resolution and collector settings for a full dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenConfig {
    pub seed: u64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub zamboni: ZamboniConfig,
    pub spotter: SpotterCollectConfig,
    pub fractions: [f64; 3],
    pub rink: RinkConfig,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            frame_width: 128,
            frame_height: 96,
            zamboni: ZamboniConfig::default(),
            spotter: SpotterCollectConfig::default(),
            fractions: [0.70, 0.15, 0.15],
            rink: RinkConfig::default(),
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_width == 0 || self.frame_height == 0 || self.frame_width * 3 != self.frame_height * 4 {
            return Err(Error::Config("frame resolution must be non-empty with a 4:3 aspect".into()));
        }
        self.rink.validate()?;
        self.zamboni.validate(&self.rink)?;
        self.spotter.validate()?;
        split::check_fractions(&self.fractions)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn total_examples(&self) -> usize {
        self.zamboni.count() + self.spotter.count()
    }
}

/// Seed for item `index` of a collector stream.
pub(crate) fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xA24B_AED4_963E_E407))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
