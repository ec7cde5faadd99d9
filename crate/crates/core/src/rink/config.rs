use serde::{Deserialize, Serialize};

use super::{norm, Vec2};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RinkSpec {
    pub half_length: f64,
    pub half_width: f64,
    pub corner_radius: f64,
    pub goal_width: f64,
    pub wall_height: f64,
}

impl Default for RinkSpec {
    fn default() -> Self {
        Self {
            half_length: 55.0,
            half_width: 40.0,
            corner_radius: 10.0,
            goal_width: 10.0,
            wall_height: 2.0,
        }
    }
}

impl RinkSpec {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.half_length, self.half_width, self.corner_radius, self.goal_width, self.wall_height]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(Error::Config("rink extents must be positive".into()));
        }
        if self.goal_width >= 2.0 * self.half_width {
            return Err(Error::Config("goal must be narrower than the rink".into()));
        }
        if self.corner_radius >= self.half_width.min(self.half_length) {
            return Err(Error::Config("corner radius too large for the rink".into()));
        }
        if self.goal_width / 2.0 >= self.half_width - self.corner_radius {
            return Err(Error::Config("goal mouth overlaps the rounded corners".into()));
        }
        Ok(())
    }

    /// Signed distance to the boundary (negative inside) and the outward
    /// normal of the nearest boundary point.
    pub fn signed_distance(&self, p: Vec2) -> (f64, Vec2) {
        let r = self.corner_radius;
        let inner = [self.half_length - r, self.half_width - r];
        let q = [p[0].abs() - inner[0], p[1].abs() - inner[1]];
        let sx = if p[0] < 0.0 { -1.0 } else { 1.0 };
        let sy = if p[1] < 0.0 { -1.0 } else { 1.0 };
        if q[0] > 0.0 && q[1] > 0.0 {
            let d = norm(q);
            let n = if d > 0.0 { [sx * q[0] / d, sy * q[1] / d] } else { [sx, 0.0] };
            (d - r, n)
        } else if q[0] > q[1] {
            (q[0] - r, [sx, 0.0])
        } else {
            (q[1] - r, [0.0, sy])
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.signed_distance(p).0 <= 0.0
    }

    /// Moves `p` inward until it clears the boundary by `margin`.
    pub fn clamp_inside(&self, p: Vec2, margin: f64) -> Vec2 {
        let (d, n) = self.signed_distance(p);
        if d + margin > 0.0 {
            [p[0] - (d + margin) * n[0], p[1] - (d + margin) * n[1]]
        } else {
            p
        }
    }

    /// Ray parameter at which `origin + t·dir` leaves the rink (origin inside).
    pub fn exit_distance(&self, origin: Vec2, dir: Vec2) -> f64 {
        let slab = |o: f64, d: f64, h: f64| {
            if d > 0.0 {
                (h - o) / d
            } else if d < 0.0 {
                (-h - o) / d
            } else {
                f64::INFINITY
            }
        };
        let t = slab(origin[0], dir[0], self.half_length).min(slab(origin[1], dir[1], self.half_width));
        let p = [origin[0] + t * dir[0], origin[1] + t * dir[1]];
        let r = self.corner_radius;
        let inner = [self.half_length - r, self.half_width - r];
        if p[0].abs() <= inner[0] || p[1].abs() <= inner[1] {
            return t;
        }
        // Leaves through a rounded corner: far root of |o + t·d − c| = r.
        let c = [inner[0].copysign(p[0]), inner[1].copysign(p[1])];
        let o = [origin[0] - c[0], origin[1] - c[1]];
        let a = dir[0] * dir[0] + dir[1] * dir[1];
        let b = o[0] * dir[0] + o[1] * dir[1];
        let cc = o[0] * o[0] + o[1] * o[1] - r * r;
        let disc = (b * b - a * cc).max(0.0);
        (-b + disc.sqrt()) / a
    }

    /// Center of the goal mouth a team defends.
    pub fn goal_center(&self, team: super::Team) -> Vec2 {
        match team {
            super::Team::Red => [-self.half_length, 0.0],
            super::Team::Blue => [self.half_length, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    /// Tick length multiplier applied to all rates.
    pub dt: f64,
    pub kart_radius: f64,
    pub kart_height: f64,
    /// Fraction of speed a coasting kart loses per tick.
    pub kart_drag: f64,
    /// Fraction of forward speed available in reverse.
    pub reverse_speed_ratio: f64,
    pub puck_radius: f64,
    /// Nominal height of the puck center, used for projection.
    pub puck_height: f64,
    /// Proportional puck friction: fraction of speed lost per tick.
    pub puck_friction: f64,
    /// Constant puck deceleration per tick, applied after the proportional term.
    pub puck_friction_const: f64,
    pub puck_max_speed: f64,
    pub restitution: f64,
    /// Per-kart, per-tick probability of a stun event.
    pub stun_rate: f64,
    pub stun_ticks: u32,
    /// Half-extent of the random puck spawn square around center ice.
    pub puck_spawn_jitter: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            dt: 1.0,
            kart_radius: 4.0,
            kart_height: 2.0,
            kart_drag: 0.02,
            reverse_speed_ratio: 0.6,
            puck_radius: 1.5,
            puck_height: 0.75,
            puck_friction: 0.005,
            puck_friction_const: 0.0005,
            puck_max_speed: 1.2,
            restitution: 0.8,
            stun_rate: 0.0003,
            stun_ticks: 40,
            puck_spawn_jitter: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraParams {
    pub height: f64,
    pub pitch_deg: f64,
    pub near: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            height: 2.5,
            pitch_deg: 12.0,
            near: 0.5,
        }
    }
}

/// Handling and camera of one kart character.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterParams {
    pub name: String,
    /// Units per tick.
    pub max_speed: f64,
    /// Speed gained per tick at full throttle.
    pub acceleration: f64,
    /// Heading change per unit of distance travelled at full steer.
    pub turn_rate: f64,
    /// Turning gain while reversing, relative to driving forward (> 1).
    pub reverse_turn_multiplier: f64,
    /// Horizontal field of view in radians.
    pub fov: f64,
}

impl CharacterParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.max_speed, self.acceleration, self.turn_rate, self.fov]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
            && self.reverse_turn_multiplier > 1.0
            && self.fov < std::f64::consts::PI;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid character parameters for {}", self.name)))
        }
    }

    /// The built-in roster, in the order of the character tournament table.
    pub fn roster() -> Vec<CharacterParams> {
        // name, max speed, acceleration, turn rate, reverse multiplier, fov (deg)
        const TABLE: [(&str, f64, f64, f64, f64, f64); 18] = [
            ("xue", 0.36, 0.012, 0.13, 1.6, 90.0),
            ("amanda", 0.35, 0.011, 0.12, 1.5, 88.0),
            ("wilber", 0.32, 0.013, 0.15, 1.8, 100.0),
            ("hexley", 0.33, 0.010, 0.12, 1.5, 85.0),
            ("gnu", 0.34, 0.009, 0.11, 1.5, 90.0),
            ("sara_the_racer", 0.38, 0.008, 0.10, 1.4, 80.0),
            ("kiki", 0.33, 0.011, 0.13, 1.5, 85.0),
            ("suzanne", 0.32, 0.010, 0.12, 1.6, 85.0),
            ("tux", 0.34, 0.010, 0.11, 1.5, 90.0),
            ("sara_the_wizard", 0.35, 0.009, 0.11, 1.4, 85.0),
            ("adiumy", 0.31, 0.012, 0.13, 1.5, 90.0),
            ("gavroche", 0.33, 0.009, 0.12, 1.5, 80.0),
            ("nolok", 0.36, 0.008, 0.10, 1.4, 85.0),
            ("pidgin", 0.32, 0.011, 0.12, 1.5, 90.0),
            ("emule", 0.34, 0.009, 0.11, 1.5, 85.0),
            ("beastie", 0.35, 0.008, 0.10, 1.4, 80.0),
            ("puffy", 0.30, 0.010, 0.12, 1.7, 85.0),
            ("konqi", 0.37, 0.007, 0.09, 1.3, 80.0),
        ];
        TABLE
            .iter()
            .map(|&(name, max_speed, acceleration, turn_rate, rev, fov)| CharacterParams {
                name: name.to_string(),
                max_speed,
                acceleration,
                turn_rate,
                reverse_turn_multiplier: rev,
                fov: fov.to_radians(),
            })
            .collect()
    }

    pub fn by_name(name: &str) -> Result<CharacterParams> {
        Self::roster()
            .into_iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("unknown character {name:?}")))
    }
}

/// Everything that parameterizes the simulator; loadable from TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RinkConfig {
    pub rink: RinkSpec,
    pub physics: PhysicsParams,
    pub camera: CameraParams,
}

impl RinkConfig {
    pub fn validate(&self) -> Result<()> {
        self.rink.validate()?;
        let p = &self.physics;
        if !(p.dt > 0.0 && p.kart_radius > 0.0 && p.puck_radius > 0.0) {
            return Err(Error::Config("physics extents must be positive".into()));
        }
        if !(0.0..=1.0).contains(&p.restitution) || !(0.0..1.0).contains(&p.puck_friction) {
            return Err(Error::Config("restitution and friction must lie in [0, 1]".into()));
        }
        if p.puck_friction_const < 0.0 || !(0.0..=1.0).contains(&p.stun_rate) {
            return Err(Error::Config("invalid friction or stun rate".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
