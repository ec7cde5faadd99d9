use std::f64::consts::{FRAC_PI_2, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, label_example, puck_screen, Example};
use crate::agents::{TeamConfig, TeamController, TeamKind};
use crate::error::{Error, Result};
use crate::rink::{render, Action, CharacterParams, KartState, RinkConfig, Team, Vec2, View, World, SCREEN_HEIGHT, SCREEN_WIDTH};

const ZAMBONI_STREAM: u64 = 1;
const SPOTTER_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZamboniConfig {
    pub rows: usize,
    pub cols: usize,
    pub passes: usize,
    /// Distance kept between the outermost grid points and the boards.
    pub margin: f64,
    /// Chance the puck is dropped inside the camera's view cone instead of anywhere on the ice.
    pub puck_in_view_prob: f64,
    pub other_karts: usize,
}

impl Default for ZamboniConfig {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 10,
            passes: 13,
            margin: 6.0,
            puck_in_view_prob: 0.6,
            other_karts: 3,
        }
    }
}

impl ZamboniConfig {
    pub fn count(&self) -> usize {
        self.rows * self.cols * 4 * self.passes
    }

    pub fn validate(&self, rink: &RinkConfig) -> Result<()> {
        if !(0.0..=1.0).contains(&self.puck_in_view_prob) {
            return Err(Error::Config("puck_in_view_prob must lie in [0, 1]".into()));
        }
        for p in self.grid(rink) {
            if rink.rink.signed_distance(p).0 + rink.physics.kart_radius > 0.0 {
                return Err(Error::Config(format!("zamboni grid point {p:?} does not fit in the rink")));
            }
        }
        Ok(())
    }

    /// Cell centers of an evenly spaced grid inset by `margin`.
    pub fn grid(&self, rink: &RinkConfig) -> Vec<Vec2> {
        let hx = rink.rink.half_length - self.margin;
        let hy = rink.rink.half_width - self.margin;
        let mut pts = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                pts.push([
                    -hx + (c as f64 + 0.5) * 2.0 * hx / self.cols as f64,
                    -hy + (r as f64 + 0.5) * 2.0 * hy / self.rows as f64,
                ]);
            }
        }
        pts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotterCollectConfig {
    pub episodes: usize,
    /// Ticks between random re-placements of the puck and karts.
    pub reset_interval: usize,
    /// Capture the Spotter's camera every this many ticks.
    pub capture_every: usize,
    pub spotter: String,
    pub chaser: String,
}

impl Default for SpotterCollectConfig {
    fn default() -> Self {
        Self {
            episodes: 48,
            reset_interval: 300,
            capture_every: 3,
            spotter: "wilber".into(),
            chaser: "xue".into(),
        }
    }
}

impl SpotterCollectConfig {
    pub fn count(&self) -> usize {
        self.episodes * self.reset_interval.div_ceil(self.capture_every.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.reset_interval == 0 || self.capture_every == 0 {
            return Err(Error::Config("reset_interval and capture_every must be at least 1".into()));
        }
        CharacterParams::by_name(&self.spotter)?;
        CharacterParams::by_name(&self.chaser)?;
        Ok(())
    }
}

fn random_point(rng: &mut ChaCha8Rng, cfg: &RinkConfig, margin: f64) -> Vec2 {
    let r = &cfg.rink;
    loop {
        let p = [
            rng.gen_range(-r.half_length..r.half_length),
            rng.gen_range(-r.half_width..r.half_width),
        ];
        if r.signed_distance(p).0 + margin <= 0.0 {
            return p;
        }
    }
}

/// Kart spot at least two radii from every position in `taken`.
fn free_point(rng: &mut ChaCha8Rng, cfg: &RinkConfig, taken: &[Vec2]) -> Vec2 {
    let r = cfg.physics.kart_radius;
    loop {
        let p = random_point(rng, cfg, r);
        if taken.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= 2.0 * r) {
            return p;
        }
    }
}

fn capture(world: &World, kart: usize, id: usize, collector: &str, seed: u64, frame_size: (usize, usize)) -> Example {
    let (mw, mh) = (SCREEN_WIDTH as usize, SCREEN_HEIGHT as usize);
    let f = render(&world.state, &world.config, kart, &View::new(mw, mh));
    let label = label_example(&f.mask, mw, mh, puck_screen(&world.state, &world.config, kart));
    Example {
        id,
        frame: f.resize_rgb(frame_size.0, frame_size.1),
        frame_width: frame_size.0,
        frame_height: frame_size.1,
        mask: f.mask,
        mask_width: mw,
        mask_height: mh,
        label: label.label,
        coords: label.coords,
        count: label.count,
        collector: collector.into(),
        seed,
    }
}

/// Grid sweep: every cell × four cardinal headings per pass, with random puck and kart placement.
pub fn zamboni_collect_with(
    cfg: &ZamboniConfig,
    rink: &RinkConfig,
    seed: u64,
    frame_size: (usize, usize),
    first_id: usize,
    mut sink: impl FnMut(Example) -> Result<()>,
) -> Result<usize> {
    cfg.validate(rink)?;
    let roster = CharacterParams::roster();
    let grid = cfg.grid(rink);
    let mut n = 0;
    for pass in 0..cfg.passes {
        for &cell in &grid {
            for q in 0..4 {
                let index = n as u64;
                let ex_seed = derive_seed(seed, ZAMBONI_STREAM, index);
                let mut rng = ChaCha8Rng::seed_from_u64(ex_seed);
                let heading = q as f64 * FRAC_PI_2;
                let me = roster.choose(&mut rng).expect("roster").clone();
                let fov = me.fov;
                let mut karts = vec![KartState::new(me, Team::Red, cell, heading)];
                let mut taken = vec![cell];
                for k in 0..cfg.other_karts {
                    let p = free_point(&mut rng, rink, &taken);
                    taken.push(p);
                    let team = if k == 0 { Team::Red } else { Team::Blue };
                    let c = roster.choose(&mut rng).expect("roster").clone();
                    karts.push(KartState::new(c, team, p, rng.gen_range(0.0..TAU)));
                }
                let mut world = World::new(rink.clone(), karts, ex_seed)?;
                world.state.puck.position = place_puck(&mut rng, rink, cell, heading, fov, cfg.puck_in_view_prob);
                sink(capture(&world, 0, first_id + n, &format!("zamboni/{pass}"), ex_seed, frame_size))?;
                n += 1;
            }
        }
    }
    Ok(n)
}

fn place_puck(rng: &mut ChaCha8Rng, rink: &RinkConfig, eye: Vec2, heading: f64, fov: f64, in_view: f64) -> Vec2 {
    let margin = rink.physics.puck_radius;
    if rng.gen::<f64>() < in_view {
        for _ in 0..32 {
            let d = rng.gen_range(3.0..50.0f64);
            let a = heading + rng.gen_range(-0.5..0.5) * fov;
            let p = [eye[0] + d * a.cos(), eye[1] + d * a.sin()];
            if rink.rink.signed_distance(p).0 + margin <= 0.0 {
                return p;
            }
        }
    }
    random_point(rng, rink, margin)
}

pub fn zamboni_collect(cfg: &ZamboniConfig, rink: &RinkConfig, seed: u64, frame_size: (usize, usize)) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    zamboni_collect_with(cfg, rink, seed, frame_size, 0, |e| {
        out.push(e);
        Ok(())
    })?;
    Ok(out)
}

/// Follows a live Spotter through play, re-randomizing the rink every `reset_interval` ticks.
pub fn spotter_collect_with(
    cfg: &SpotterCollectConfig,
    rink: &RinkConfig,
    seed: u64,
    frame_size: (usize, usize),
    first_id: usize,
    mut sink: impl FnMut(Example) -> Result<()>,
) -> Result<usize> {
    cfg.validate()?;
    let roster = CharacterParams::roster();
    let ours = TeamConfig {
        chaser: cfg.chaser.clone(),
        spotter: cfg.spotter.clone(),
        ..TeamConfig::default()
    };
    let mut n = 0;
    for ep in 0..cfg.episodes {
        let ep_seed = derive_seed(seed, SPOTTER_STREAM, ep as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(ep_seed);
        let them = TeamConfig {
            chaser: roster.choose(&mut rng).expect("roster").name.clone(),
            spotter: roster.choose(&mut rng).expect("roster").name.clone(),
            ..TeamConfig::of_kind("scripted", TeamKind::Scripted)
        };
        let mut world = World::faceoff(rink.clone(), &ours.characters()?, &them.characters()?, ep_seed)?;
        let mut taken = Vec::new();
        for k in &mut world.state.karts {
            let p = free_point(&mut rng, rink, &taken);
            taken.push(p);
            k.position = p;
            k.start_position = p;
            k.heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            k.start_heading = k.heading;
        }
        world.state.puck.position = random_point(&mut rng, rink, rink.physics.puck_radius);
        let speed = rng.gen_range(0.0..0.6);
        let dir = rng.gen_range(0.0..TAU);
        world.state.puck.velocity = [speed * f64::cos(dir), speed * f64::sin(dir)];
        let mut red = TeamController::new(&ours, Team::Red, [0, 1], None)?;
        let mut blue = TeamController::new(&them, Team::Blue, [2, 3], None)?;
        for t in 0..cfg.reset_interval {
            if t % cfg.capture_every == 0 {
                sink(capture(&world, 1, first_id + n, &format!("spotter/{ep}"), ep_seed, frame_size))?;
                n += 1;
            }
            let a = red.act(&world)?;
            let b = blue.act(&world)?;
            let actions: [Action; 4] = [a[0], a[1], b[0], b[1]];
            world.step(&actions, 1.0)?;
        }
    }
    Ok(n)
}

pub fn spotter_collect(cfg: &SpotterCollectConfig, rink: &RinkConfig, seed: u64, frame_size: (usize, usize)) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    spotter_collect_with(cfg, rink, seed, frame_size, 0, |e| {
        out.push(e);
        Ok(())
    })?;
    Ok(out)
}
