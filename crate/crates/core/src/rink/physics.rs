use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, norm, sub, wrap_angle, CharacterParams, RinkConfig, Vec2};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Team {
    Red,
    Blue,
}

impl Team {
    pub fn index(self) -> usize {
        match self {
            Team::Red => 0,
            Team::Blue => 1,
        }
    }

    pub fn opponent(self) -> Team {
        match self {
            Team::Red => Team::Blue,
            Team::Blue => Team::Red,
        }
    }

    /// Direction along x this team attacks.
    pub fn attack_sign(self) -> f64 {
        match self {
            Team::Red => 1.0,
            Team::Blue => -1.0,
        }
    }
}

/// Control input for one kart; out-of-range values are clamped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub throttle: f64,
    /// −1 turns left (counter-clockwise), +1 turns right.
    pub steer: f64,
    pub rescue: bool,
}

impl Action {
    pub fn clamped(self) -> Action {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Action {
            throttle: c(self.throttle),
            steer: c(self.steer),
            rescue: self.rescue,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KartState {
    pub position: Vec2,
    pub heading: f64,
    /// Signed speed along the heading; negative while reversing.
    pub speed: f64,
    pub character: CharacterParams,
    pub team: Team,
    pub stunned_ticks: u32,
    /// Pose restored by rescue and after goals.
    pub start_position: Vec2,
    pub start_heading: f64,
}

impl KartState {
    pub fn new(character: CharacterParams, team: Team, position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading,
            speed: 0.0,
            character,
            team,
            stunned_ticks: 0,
            start_position: position,
            start_heading: heading,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }

    fn reset_pose(&mut self) {
        self.position = self.start_position;
        self.heading = self.start_heading;
        self.speed = 0.0;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuckState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub tick: u64,
    pub karts: Vec<KartState>,
    pub puck: PuckState,
    /// Goals for (red, blue).
    pub score: [u32; 2],
    pub rng: ChaCha8Rng,
}

/// What happened during one step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    pub goal: Option<Team>,
    pub puck_wall_contact: bool,
    pub puck_kart_contact: bool,
    pub stunned: Vec<usize>,
    pub rescued: Vec<usize>,
}

impl StepEvents {
    /// True when something other than friction acted on the puck.
    pub fn puck_collision(&self) -> bool {
        self.goal.is_some() || self.puck_wall_contact || self.puck_kart_contact
    }
}

/// Compact per-tick record used by replay files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub score: [u32; 2],
    pub puck: PuckState,
    pub karts: Vec<KartSnapshot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KartSnapshot {
    pub character: String,
    pub team: Team,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub stunned_ticks: u32,
}

/// A rink with its configuration and evolving state.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: RinkConfig,
    pub state: WorldState,
}

impl World {
    /// Builds a world with the puck at rest on center ice.
    pub fn new(config: RinkConfig, karts: Vec<KartState>, seed: u64) -> Result<Self> {
        config.validate()?;
        for k in &karts {
            k.character.validate()?;
            if !config.rink.contains(k.position) {
                return Err(Error::Config(format!("kart {} starts outside the rink", k.character.name)));
            }
        }
        let radius = config.physics.puck_radius;
        Ok(Self {
            state: WorldState {
                tick: 0,
                karts,
                puck: PuckState {
                    position: [0.0, 0.0],
                    velocity: [0.0, 0.0],
                    radius,
                },
                score: [0, 0],
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            config,
        })
    }

    /// Two-on-two faceoff layout: each team's karts start in their own half facing the opponent.
    pub fn faceoff(config: RinkConfig, red: &[CharacterParams], blue: &[CharacterParams], seed: u64) -> Result<Self> {
        let mut karts = Vec::new();
        for (team, roster) in [(Team::Red, red), (Team::Blue, blue)] {
            let sign = team.attack_sign();
            let n = roster.len();
            for (i, c) in roster.iter().enumerate() {
                let y = (i as f64 - (n as f64 - 1.0) / 2.0) * 16.0;
                let heading = if sign > 0.0 { 0.0 } else { std::f64::consts::PI };
                karts.push(KartState::new(c.clone(), team, [-sign * 30.0, y], heading));
            }
        }
        Self::new(config, karts, seed)
    }

    pub fn snapshot(&self) -> Snapshot {
        let s = &self.state;
        Snapshot {
            tick: s.tick,
            score: s.score,
            puck: s.puck.clone(),
            karts: s
                .karts
                .iter()
                .map(|k| KartSnapshot {
                    character: k.character.name.clone(),
                    team: k.team,
                    position: k.position,
                    heading: k.heading,
                    speed: k.speed,
                    stunned_ticks: k.stunned_ticks,
                })
                .collect(),
        }
    }

    /// Re-centers the puck and returns every kart to its start pose.
    pub fn reset_positions(&mut self) {
        let p = &self.config.physics;
        let j = p.puck_spawn_jitter;
        let position = if j > 0.0 {
            [self.state.rng.gen_range(-j..=j), self.state.rng.gen_range(-j..=j)]
        } else {
            [0.0, 0.0]
        };
        self.state.puck.position = position;
        self.state.puck.velocity = [0.0, 0.0];
        for k in &mut self.state.karts {
            k.reset_pose();
            k.stunned_ticks = 0;
        }
    }

    /// Advances one tick of length `dt` (in units of the nominal tick).
    pub fn step(&mut self, actions: &[Action], dt: f64) -> Result<StepEvents> {
        if actions.len() != self.state.karts.len() {
            return Err(Error::contract(
                "step",
                format!("{} actions for {} karts", actions.len(), self.state.karts.len()),
            ));
        }
        let cfg = &self.config;
        let p = &cfg.physics;
        let state = &mut self.state;
        let mut events = StepEvents::default();

        for (i, (kart, action)) in state.karts.iter_mut().zip(actions).enumerate() {
            let a = action.clamped();
            if kart.stunned_ticks == 0 && p.stun_rate > 0.0 && state.rng.gen::<f64>() < p.stun_rate {
                kart.stunned_ticks = p.stun_ticks;
                kart.speed = 0.0;
                kart.heading = wrap_angle(kart.heading + state.rng.gen_range(-1.5..1.5));
                events.stunned.push(i);
            }
            let c = &kart.character;
            if kart.stunned_ticks > 0 {
                kart.stunned_ticks -= 1;
                kart.speed *= 1.0 - (p.kart_drag * dt).min(1.0);
            } else if a.rescue {
                kart.reset_pose();
                events.rescued.push(i);
                continue;
            } else {
                if a.throttle != 0.0 {
                    kart.speed += a.throttle * c.acceleration * dt;
                } else {
                    kart.speed *= 1.0 - (p.kart_drag * dt).min(1.0);
                }
                kart.speed = kart.speed.clamp(-c.max_speed * p.reverse_speed_ratio, c.max_speed);
                let gain = if kart.speed < 0.0 { c.reverse_turn_multiplier } else { 1.0 };
                kart.heading = wrap_angle(kart.heading - a.steer * c.turn_rate * kart.speed * gain * dt);
            }
            let v = kart.velocity();
            kart.position = cfg.rink.clamp_inside(
                [kart.position[0] + v[0] * dt, kart.position[1] + v[1] * dt],
                p.kart_radius,
            );
        }

        separate_karts(&mut state.karts, cfg);

        let puck = &mut state.puck;
        let speed = norm(puck.velocity);
        if speed > 0.0 {
            let slowed = (speed * (1.0 - p.puck_friction * dt) - p.puck_friction_const * dt).max(0.0);
            let scale = slowed / speed;
            puck.velocity = [puck.velocity[0] * scale, puck.velocity[1] * scale];
        }
        puck.position = [puck.position[0] + puck.velocity[0] * dt, puck.position[1] + puck.velocity[1] * dt];

        let reach = p.kart_radius + puck.radius;
        for kart in &state.karts {
            let d = sub(puck.position, kart.position);
            let dist = norm(d);
            if dist >= reach {
                continue;
            }
            let n = if dist > 1e-12 { [d[0] / dist, d[1] / dist] } else { [kart.heading.cos(), kart.heading.sin()] };
            let closing = dot(sub(puck.velocity, kart.velocity()), n);
            if closing < 0.0 {
                let j = (1.0 + p.restitution) * closing;
                puck.velocity = [puck.velocity[0] - j * n[0], puck.velocity[1] - j * n[1]];
            }
            puck.position = [kart.position[0] + n[0] * reach, kart.position[1] + n[1] * reach];
            events.puck_kart_contact = true;
        }
        let speed = norm(puck.velocity);
        if speed > p.puck_max_speed {
            let scale = p.puck_max_speed / speed;
            puck.velocity = [puck.velocity[0] * scale, puck.velocity[1] * scale];
        }

        let rink = &cfg.rink;
        if puck.position[1].abs() < rink.goal_width / 2.0 && puck.position[0].abs() > rink.half_length {
            let scorer = if puck.position[0] > 0.0 { Team::Red } else { Team::Blue };
            state.score[scorer.index()] += 1;
            events.goal = Some(scorer);
        } else {
            let (d, n) = rink.signed_distance(puck.position);
            let in_mouth = puck.position[1].abs() < rink.goal_width / 2.0 && n[1] == 0.0;
            if d + puck.radius > 0.0 && !in_mouth {
                let vn = dot(puck.velocity, n);
                if vn > 0.0 {
                    let j = (1.0 + p.restitution) * vn;
                    puck.velocity = [puck.velocity[0] - j * n[0], puck.velocity[1] - j * n[1]];
                }
                puck.position = rink.clamp_inside(puck.position, puck.radius);
                events.puck_wall_contact = true;
            }
        }
        state.tick += 1;
        if events.goal.is_some() {
            self.reset_positions();
        }
        Ok(events)
    }
}

fn separate_karts(karts: &mut [KartState], cfg: &RinkConfig) {
    let r = cfg.physics.kart_radius;
    for i in 0..karts.len() {
        for j in i + 1..karts.len() {
            let d = sub(karts[j].position, karts[i].position);
            let dist = norm(d);
            if dist >= 2.0 * r {
                continue;
            }
            let n = if dist > 1e-12 { [d[0] / dist, d[1] / dist] } else { [1.0, 0.0] };
            let push = (2.0 * r - dist) / 2.0;
            let pi = [karts[i].position[0] - n[0] * push, karts[i].position[1] - n[1] * push];
            let pj = [karts[j].position[0] + n[0] * push, karts[j].position[1] + n[1] * push];
            karts[i].position = cfg.rink.clamp_inside(pi, r);
            karts[j].position = cfg.rink.clamp_inside(pj, r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> RinkConfig {
        let mut cfg = RinkConfig::default();
        cfg.physics.stun_rate = 0.0;
        cfg.physics.puck_spawn_jitter = 0.0;
        cfg
    }

    fn one_kart(cfg: RinkConfig, position: Vec2, heading: f64) -> World {
        let kart = KartState::new(CharacterParams::by_name("xue").unwrap(), Team::Red, position, heading);
        World::new(cfg, vec![kart], 1).unwrap()
    }

    #[test]
    fn idle_world_only_advances_tick() {
        let mut w = one_kart(quiet_config(), [-20.0, 5.0], 0.3);
        let before = w.state.clone();
        w.step(&[Action::default()], 1.0).unwrap();
        assert_eq!(w.state.tick, 1);
        let mut after = w.state.clone();
        after.tick = 0;
        assert_eq!(after, before);
    }

    #[test]
    fn constant_friction_decays_linearly() {
        let mut cfg = quiet_config();
        cfg.physics.puck_friction = 0.0;
        cfg.physics.puck_friction_const = 0.01;
        let mut w = World::new(cfg, vec![], 0).unwrap();
        w.state.puck.position = [-40.0, 0.0];
        w.state.puck.velocity = [0.3, 0.0];
        for k in 1..=40u32 {
            w.step(&[], 1.0).unwrap();
            let expected = (0.3 - k as f64 * 0.01).max(0.0);
            assert!((w.state.puck.velocity[0] - expected).abs() < 1e-12, "tick {k}");
        }
    }

    #[test]
    fn goal_in_aperture_scores_for_attacker() {
        let mut w = World::new(quiet_config(), vec![], 0).unwrap();
        w.state.puck.position = [54.5, 1.0];
        w.state.puck.velocity = [1.0, 0.0];
        let ev = w.step(&[], 1.0).unwrap();
        assert_eq!(ev.goal, Some(Team::Red));
        assert_eq!(w.state.score, [1, 0]);
        assert_eq!(w.state.puck.position, [0.0, 0.0]);

        w.state.puck.position = [54.5, 15.0];
        w.state.puck.velocity = [1.0, 0.0];
        let ev = w.step(&[], 1.0).unwrap();
        assert!(ev.goal.is_none() && ev.puck_wall_contact);
        assert!(w.state.puck.velocity[0] < 0.0);
    }

    #[test]
    fn steering_left_turns_counter_clockwise_and_reverse_turns_faster() {
        let mut w = one_kart(quiet_config(), [0.0, 0.0], 0.0);
        let left = Action { throttle: 1.0, steer: -1.0, rescue: false };
        for _ in 0..10 {
            w.step(&[left], 1.0).unwrap();
        }
        assert!(w.state.karts[0].heading > 0.0);

        let forward_turn = |speed: f64| {
            let mut w = one_kart(quiet_config(), [0.0, 0.0], 0.0);
            w.state.karts[0].speed = speed;
            w.step(&[Action { throttle: speed.signum(), steer: -1.0, rescue: false }], 1.0).unwrap();
            w.state.karts[0].heading.abs()
        };
        assert!(forward_turn(-0.15) > forward_turn(0.15));
    }

    #[test]
    fn kart_pushes_puck_forward() {
        let mut w = one_kart(quiet_config(), [0.0, 0.0], 0.0);
        w.state.puck.position = [6.0, 0.0];
        for _ in 0..60 {
            w.step(&[Action { throttle: 1.0, steer: 0.0, rescue: false }], 1.0).unwrap();
        }
        assert!(w.state.puck.velocity[0] > 0.3);
        assert!(w.state.puck.velocity[1].abs() < 1e-12);
    }

    #[test]
    fn rescue_restores_start_pose() {
        let mut w = one_kart(quiet_config(), [-10.0, 3.0], 1.0);
        for _ in 0..20 {
            w.step(&[Action { throttle: 1.0, steer: 0.5, rescue: false }], 1.0).unwrap();
        }
        let ev = w.step(&[Action { rescue: true, ..Action::default() }], 1.0).unwrap();
        assert_eq!(ev.rescued, vec![0]);
        assert_eq!(w.state.karts[0].position, [-10.0, 3.0]);
        assert_eq!(w.state.karts[0].speed, 0.0);
    }

    #[test]
    fn action_count_is_checked() {
        let mut w = one_kart(quiet_config(), [0.0, 0.0], 0.0);
        assert!(w.step(&[], 1.0).is_err());
    }
}
