use serde::{Deserialize, Serialize};

use super::{Camera, RinkConfig, Snapshot, WorldState, SCREEN_HEIGHT, SCREEN_WIDTH};

/// Segmentation ids written into masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum MaskId {
    Background = 0,
    Ice = 1,
    Wall = 2,
    RedGoal = 3,
    BlueGoal = 4,
    RedKart = 5,
    BlueKart = 6,
    Puck = 7,
}

/// RGB pixels plus a pixel-aligned segmentation mask, both row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
    pub mask: Vec<u8>,
}

impl Frame {
    fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rgb: vec![0; width * height * 3],
            mask: vec![0; width * height],
        }
    }

    fn put(&mut self, i: usize, color: [u8; 3], id: MaskId) {
        self.rgb[3 * i..3 * i + 3].copy_from_slice(&color);
        self.mask[i] = id as u8;
    }

    pub fn count(&self, id: MaskId) -> usize {
        self.mask.iter().filter(|&&m| m == id as u8).count()
    }

    /// Mean pixel-center position of `id`, in this frame's pixel units.
    pub fn centroid(&self, id: MaskId) -> Option<[f64; 2]> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, &m) in self.mask.iter().enumerate() {
            if m == id as u8 {
                sx += (i % self.width) as f64 + 0.5;
                sy += (i / self.width) as f64 + 0.5;
                n += 1;
            }
        }
        (n > 0).then(|| [sx / n as f64, sy / n as f64])
    }

    /// Area-averaged RGB resampling to `width × height`.
    pub fn resize_rgb(&self, width: usize, height: usize) -> Vec<u8> {
        let wx = coverage(self.width, width);
        let wy = coverage(self.height, height);
        let mut out = vec![0u8; width * height * 3];
        let mut row = vec![0.0f64; self.width * 3];
        for (oy, ys) in wy.iter().enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            for &(sy, w) in ys {
                let src = &self.rgb[sy * self.width * 3..(sy + 1) * self.width * 3];
                for (r, s) in row.iter_mut().zip(src) {
                    *r += w * *s as f64;
                }
            }
            for (ox, xs) in wx.iter().enumerate() {
                for c in 0..3 {
                    let v: f64 = xs.iter().map(|&(sx, w)| w * row[sx * 3 + c]).sum();
                    out[(oy * width + ox) * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        out
    }
}

/// For each output cell, the source cells it overlaps and their normalized weights.
fn coverage(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let w = (hi.min(s as f64 + 1.0) - lo.max(s as f64)) / scale;
                    (w > 1e-12).then_some((s, w))
                })
                .collect()
        })
        .collect()
}

const ICE: [u8; 3] = [226, 234, 243];
const CREASE: [u8; 3] = [184, 212, 240];
const RED_LINE: [u8; 3] = [205, 72, 72];
const BLUE_LINE: [u8; 3] = [82, 112, 205];
const WALL: [u8; 3] = [112, 117, 132];
const WALL_TRIM: [u8; 3] = [236, 200, 60];
const STANDS: [u8; 3] = [46, 56, 76];
const STANDS_ALT: [u8; 3] = [58, 68, 90];
const RED_GOAL: [u8; 3] = [196, 36, 36];
const BLUE_GOAL: [u8; 3] = [36, 64, 200];
const RED_KART: [u8; 3] = [222, 64, 42];
const BLUE_KART: [u8; 3] = [48, 94, 224];
const TIRES: [u8; 3] = [62, 62, 66];
const PUCK: [u8; 3] = [12, 12, 14];
const FOG: [u8; 3] = [176, 186, 200];

fn mix(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    std::array::from_fn(|i| (a[i] as f64 * (1.0 - t) + b[i] as f64 * t).round() as u8)
}

fn ice_color(x: f64, y: f64, cfg: &RinkConfig) -> [u8; 3] {
    let r = &cfg.rink;
    let ring = x.hypot(y);
    if x.abs() < 0.5 || (ring - 9.0).abs() < 0.4 {
        return RED_LINE;
    }
    if (x.abs() - r.half_length * 0.33).abs() < 0.6 {
        return BLUE_LINE;
    }
    if (r.half_length - x.abs()).hypot(y) < r.goal_width * 0.6 {
        return CREASE;
    }
    ICE
}

/// Render options for a kart camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct View {
    pub width: usize,
    pub height: usize,
    pub draw_puck: bool,
}

impl View {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            draw_puck: true,
        }
    }
}

struct Sprite {
    depth: f64,
    center: [f64; 2],
    half: [f64; 2],
    ellipse: bool,
    color: [u8; 3],
    id: MaskId,
}

/// Rasterizes the view from kart `camera_kart`'s camera.
pub fn render(state: &WorldState, cfg: &RinkConfig, camera_kart: usize, view: &View) -> Frame {
    let kart = &state.karts[camera_kart];
    let cam = Camera::for_kart(kart, &cfg.camera);
    let (w, h) = (view.width, view.height);
    let (kx, ky) = (SCREEN_WIDTH / w as f64, SCREEN_HEIGHT / h as f64);
    let mut frame = Frame::blank(w, h);
    let rink = &cfg.rink;
    let origin = [cam.origin[0], cam.origin[1]];
    for py in 0..h {
        for px in 0..w {
            let d = cam.ray((px as f64 + 0.5) * kx, (py as f64 + 0.5) * ky);
            let exit = rink.exit_distance(origin, [d[0], d[1]]);
            let i = py * w + px;
            let floor = if d[2] < 0.0 { -cam.origin[2] / d[2] } else { f64::INFINITY };
            if floor < exit {
                let (x, y) = (origin[0] + floor * d[0], origin[1] + floor * d[1]);
                let fog = (floor / 160.0).min(1.0) * 0.45;
                frame.put(i, mix(ice_color(x, y, cfg), FOG, fog), MaskId::Ice);
                continue;
            }
            let z = cam.origin[2] + exit * d[2];
            let (x, y) = (origin[0] + exit * d[0], origin[1] + exit * d[1]);
            if z <= rink.wall_height {
                let in_goal = y.abs() < rink.goal_width / 2.0 && x.abs() > rink.half_length - 1e-6;
                if in_goal && z < rink.wall_height * 0.8 {
                    let (c, id) = if x < 0.0 { (RED_GOAL, MaskId::RedGoal) } else { (BLUE_GOAL, MaskId::BlueGoal) };
                    frame.put(i, c, id);
                } else {
                    let c = if z > rink.wall_height * 0.85 { WALL_TRIM } else { WALL };
                    frame.put(i, c, MaskId::Wall);
                }
            } else {
                let band = ((d[1].atan2(d[0]).to_degrees() + 360.0) / 7.5) as i64 % 2 == 0;
                frame.put(i, if band { STANDS } else { STANDS_ALT }, MaskId::Background);
            }
        }
    }

    let scale = |p: [f64; 3]| [p[0] / kx, p[1] / ky, p[2]];
    let mut sprites = Vec::new();
    let half_kart = cfg.physics.kart_radius;
    for (k, other) in state.karts.iter().enumerate() {
        if k == camera_kart {
            continue;
        }
        let (Some(base), Some(top)) = (
            cam.project_unbounded([other.position[0], other.position[1], 0.0]),
            cam.project_unbounded([other.position[0], other.position[1], cfg.physics.kart_height]),
        ) else {
            continue;
        };
        let (base, top) = (scale(base), scale(top));
        let half_w = half_kart * cam.focal / base[2] / kx;
        let (color, id) = match other.team {
            super::Team::Red => (RED_KART, MaskId::RedKart),
            super::Team::Blue => (BLUE_KART, MaskId::BlueKart),
        };
        sprites.push(Sprite {
            depth: base[2],
            center: [base[0], (base[1] + top[1]) / 2.0],
            half: [half_w, (base[1] - top[1]).abs() / 2.0],
            ellipse: false,
            color,
            id,
        });
    }
    if view.draw_puck {
        let p = &state.puck;
        let center = [p.position[0], p.position[1], cfg.physics.puck_height];
        if let Some(c) = cam.project_unbounded(center) {
            let c = scale(c);
            let r = p.radius * cam.focal / c[2];
            let dist = (0..3).map(|i| (center[i] - cam.origin[i]).powi(2)).sum::<f64>().sqrt();
            let sin_down = (cam.origin[2] - center[2]) / dist;
            let cos_down = (1.0 - sin_down * sin_down).sqrt();
            let ry = r * sin_down + cfg.physics.puck_height * cam.focal / c[2] * cos_down * 0.5;
            sprites.push(Sprite {
                depth: c[2],
                center: [c[0], c[1]],
                half: [r / kx, ry / ky],
                ellipse: true,
                color: PUCK,
                id: MaskId::Puck,
            });
        }
    }
    sprites.sort_by(|a, b| b.depth.total_cmp(&a.depth));
    for s in &sprites {
        draw_sprite(&mut frame, s);
    }
    frame
}

fn draw_sprite(frame: &mut Frame, s: &Sprite) {
    if !(s.half[0] > 0.0 && s.half[1] > 0.0) {
        return;
    }
    let x0 = (s.center[0] - s.half[0]).floor().max(0.0) as usize;
    let y0 = (s.center[1] - s.half[1]).floor().max(0.0) as usize;
    let x1 = ((s.center[0] + s.half[0]).ceil().max(0.0) as usize).min(frame.width);
    let y1 = ((s.center[1] + s.half[1]).ceil().max(0.0) as usize).min(frame.height);
    for py in y0..y1 {
        let dy = (py as f64 + 0.5 - s.center[1]) / s.half[1];
        for px in x0..x1 {
            let dx = (px as f64 + 0.5 - s.center[0]) / s.half[0];
            let inside = if s.ellipse { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
            if inside {
                let color = if !s.ellipse && dy > 0.5 { TIRES } else { s.color };
                frame.put(py * frame.width + px, color, s.id);
            }
        }
    }
}

/// Overhead view of a snapshot at `scale` pixels per rink unit.
pub fn render_top_down(snap: &Snapshot, cfg: &RinkConfig, scale: f64) -> Frame {
    let rink = &cfg.rink;
    let margin = 4.0;
    let (ext_x, ext_y) = (rink.half_length + margin, rink.half_width + margin);
    let w = (2.0 * ext_x * scale).round() as usize;
    let h = (2.0 * ext_y * scale).round() as usize;
    let mut frame = Frame::blank(w, h);
    let kart_r = cfg.physics.kart_radius;
    for py in 0..h {
        for px in 0..w {
            let x = (px as f64 + 0.5) / scale - ext_x;
            let y = ext_y - (py as f64 + 0.5) / scale;
            let i = py * w + px;
            let (d, _) = rink.signed_distance([x, y]);
            let goal_depth = x.abs() - rink.half_length;
            if y.abs() < rink.goal_width / 2.0 && goal_depth > 0.0 && goal_depth < 3.0 {
                let (c, id) = if x < 0.0 { (RED_GOAL, MaskId::RedGoal) } else { (BLUE_GOAL, MaskId::BlueGoal) };
                frame.put(i, c, id);
            } else if d <= 0.0 {
                frame.put(i, ice_color(x, y, cfg), MaskId::Ice);
            } else if d < 1.5 {
                frame.put(i, WALL, MaskId::Wall);
            } else {
                frame.put(i, STANDS, MaskId::Background);
            }
            for k in &snap.karts {
                let dx = x - k.position[0];
                let dy = y - k.position[1];
                if dx.hypot(dy) <= kart_r {
                    let nose = dx * k.heading.cos() + dy * k.heading.sin() > kart_r * 0.5;
                    let (c, id) = match k.team {
                        super::Team::Red => (RED_KART, MaskId::RedKart),
                        super::Team::Blue => (BLUE_KART, MaskId::BlueKart),
                    };
                    frame.put(i, if nose { TIRES } else { c }, id);
                }
            }
            let p = &snap.puck;
            if (x - p.position[0]).hypot(y - p.position[1]) <= p.radius {
                frame.put(i, PUCK, MaskId::Puck);
            }
        }
    }
    frame
}
