use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Example;
use crate::rink::SCREEN_WIDTH;

/// Flip probability and symmetric jitter half-ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub flip_prob: f64,
    /// Brightness, contrast and saturation factors are drawn from `1 ± range`.
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue shift in turns, drawn from `± hue`.
    pub hue: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            brightness: 0.25,
            contrast: 0.25,
            saturation: 0.25,
            hue: 0.05,
        }
    }
}

impl AugmentPolicy {
    pub fn identity() -> Self {
        Self {
            flip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ranges = [self.brightness, self.contrast, self.saturation];
        let ok = (0.0..=1.0).contains(&self.flip_prob)
            && ranges.iter().all(|r| (0.0..1.0).contains(r))
            && (0.0..=0.5).contains(&self.hue);
        if !ok {
            return Err(crate::Error::Config(format!("augmentation ranges out of bounds: {self:?}")));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Jitter {
        let mut factor = |range: f64| if range > 0.0 { rng.gen_range(1.0 - range..=1.0 + range) } else { 1.0 };
        let brightness = factor(self.brightness);
        let contrast = factor(self.contrast);
        let saturation = factor(self.saturation);
        let hue = if self.hue > 0.0 { rng.gen_range(-self.hue..=self.hue) } else { 0.0 };
        let flip = self.flip_prob > 0.0 && rng.gen::<f64>() < self.flip_prob;
        Jitter {
            flip,
            brightness,
            contrast,
            saturation,
            hue,
        }
    }
}

/// One concrete draw from an [`AugmentPolicy`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    pub flip: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

fn gray(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    } / 6.0;
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

fn flip_rows(data: &[u8], width: usize, channels: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(width * channels) {
        for px in row.chunks_exact(channels).rev() {
            out.extend_from_slice(px);
        }
    }
    out
}

impl Jitter {
    fn is_color_identity(&self) -> bool {
        self.brightness == 1.0 && self.contrast == 1.0 && self.saturation == 1.0 && self.hue == 0.0
    }

    /// Applies the color jitter to interleaved RGB in place.
    pub fn color(&self, rgb: &mut [u8]) {
        if self.is_color_identity() {
            return;
        }
        let mut px: Vec<[f64; 3]> = rgb
            .chunks_exact(3)
            .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
            .collect();
        let clamp = |p: [f64; 3]| p.map(|v| v.clamp(0.0, 1.0));
        if self.brightness != 1.0 {
            px.iter_mut().for_each(|p| *p = clamp(p.map(|v| v * self.brightness)));
        }
        if self.contrast != 1.0 {
            let mean = px.iter().map(|&p| gray(p)).sum::<f64>() / px.len().max(1) as f64;
            px.iter_mut().for_each(|p| *p = clamp(p.map(|v| mean + (v - mean) * self.contrast)));
        }
        if self.saturation != 1.0 {
            px.iter_mut().for_each(|p| {
                let g = gray(*p);
                *p = clamp(p.map(|v| g + (v - g) * self.saturation));
            });
        }
        if self.hue != 0.0 {
            px.iter_mut().for_each(|p| {
                let [h, s, v] = rgb_to_hsv(*p);
                *p = clamp(hsv_to_rgb([h + self.hue, s, v]));
            });
        }
        for (out, p) in rgb.chunks_exact_mut(3).zip(px) {
            for c in 0..3 {
                out[c] = (p[c] * 255.0).round() as u8;
            }
        }
    }

    /// Augments a bare frame and its label coordinates.
    pub fn frame(&self, rgb: &[u8], width: usize, coords: Option<[f64; 2]>) -> (Vec<u8>, Option<[f64; 2]>) {
        let (mut out, coords) = if self.flip {
            (flip_rows(rgb, width, 3), coords.map(|[x, y]| [SCREEN_WIDTH - x, y]))
        } else {
            (rgb.to_vec(), coords)
        };
        self.color(&mut out);
        (out, coords)
    }
}

/// Mirrors frame, mask and coordinates left to right.
pub fn flip_example(e: &Example) -> Example {
    Example {
        frame: flip_rows(&e.frame, e.frame_width, 3),
        mask: flip_rows(&e.mask, e.mask_width, 1),
        coords: e.coords.map(|[x, y]| [SCREEN_WIDTH - x, y]),
        ..e.clone()
    }
}

/// Random flip plus color jitter; label and pixel count are untouched.
pub fn augment<R: Rng>(e: &Example, rng: &mut R, policy: &AugmentPolicy) -> Example {
    let j = policy.sample(rng);
    let mut out = if j.flip { flip_example(e) } else { e.clone() };
    j.color(&mut out.frame);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_round_trip() {
        for p in [[0.2, 0.5, 0.9], [1.0, 0.0, 0.0], [0.3, 0.3, 0.3], [0.9, 0.8, 0.1]] {
            let q = hsv_to_rgb(rgb_to_hsv(p));
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn neutral_jitter_is_identity() {
        let rgb: Vec<u8> = (0..48).map(|i| (i * 5) as u8).collect();
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let j = AugmentPolicy::identity().sample(&mut rng);
        let (out, c) = j.frame(&rgb, 4, Some([1.5, 2.0]));
        assert_eq!(out, rgb);
        assert_eq!(c, Some([1.5, 2.0]));
    }
}
