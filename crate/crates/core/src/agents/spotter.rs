use serde::{Deserialize, Serialize};

use super::{distance, forward_steer, heading_error, reverse_steer, AgentParams, Perception};
use crate::rink::{Action, KartState, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpotterMode {
    RushMid,
    Watch,
    TrackReverse,
    Chase,
    Search,
    Recover,
}

impl SpotterMode {
    pub const ALL: [SpotterMode; 6] = [
        SpotterMode::RushMid,
        SpotterMode::Watch,
        SpotterMode::TrackReverse,
        SpotterMode::Chase,
        SpotterMode::Search,
        SpotterMode::Recover,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotterState {
    pub mode: SpotterMode,
    pub ticks_in_state: u64,
    pub last_seen: Option<Vec2>,
    pub lost_ticks: u64,
    /// Position on the previous tick, used to notice teleports.
    pub last_position: Option<Vec2>,
}

impl Default for SpotterState {
    fn default() -> Self {
        Self {
            mode: SpotterMode::RushMid,
            ticks_in_state: 0,
            last_seen: None,
            lost_ticks: 0,
            last_position: None,
        }
    }
}

/// Heading error below which a recovering Spotter counts as re-oriented.
const ORIENTED: f64 = 0.35;
/// Longest a recovery may spend turning.
const RECOVER_TICKS: u64 = 60;
/// Radius around center ice where the initial rush stops and turns.
const MID_RADIUS: f64 = 5.0;

fn classify(d: f64, params: &AgentParams) -> SpotterMode {
    if d < params.d_near {
        SpotterMode::TrackReverse
    } else if d > params.d_far {
        SpotterMode::Chase
    } else {
        SpotterMode::Watch
    }
}

/// Turns in place toward `err`; reversing turns tighter.
fn reverse_turn(err: f64, gain: f64) -> Action {
    Action {
        throttle: -0.6,
        steer: reverse_steer(err, gain),
        rescue: false,
    }
}

fn drive(err: f64, throttle: f64, gain: f64) -> Action {
    Action {
        throttle,
        steer: forward_steer(err, gain),
        rescue: false,
    }
}

/// One tick of the Spotter state machine.
pub fn spotter_policy(perc: &Perception, me: &KartState, state: &SpotterState, params: &AgentParams) -> (Action, SpotterState) {
    let seen = perc.puck_visible && perc.puck_world.is_some();
    let last_seen = if seen { perc.puck_world } else { state.last_seen };
    let lost_ticks = if seen { 0 } else { state.lost_ticks + 1 };
    let jump = state
        .last_position
        .map_or(0.0, |p| distance(p, me.position));
    let displaced = jump > 2.0 * me.character.max_speed + 1.0;
    let err_last = last_seen.map_or(0.0, |p| heading_error(me, p));
    let from_sighting = |p: Option<Vec2>| classify(p.map_or(f64::INFINITY, |p| distance(p, me.position)), params);

    use SpotterMode::*;
    let mode = if me.stunned_ticks > 0 || displaced {
        Recover
    } else {
        match state.mode {
            Recover => {
                let oriented = err_last.abs() < ORIENTED || state.ticks_in_state >= RECOVER_TICKS;
                match (seen, oriented) {
                    (true, _) => from_sighting(last_seen),
                    (false, true) => Search,
                    (false, false) => Recover,
                }
            }
            RushMid | Search if !seen => state.mode,
            _ if seen => from_sighting(last_seen),
            _ if lost_ticks > params.loss_threshold => Search,
            m => m,
        }
    };

    let gain = params.steer_gain;
    let action = match mode {
        RushMid => {
            let center = [0.0, 0.0];
            if distance(center, me.position) > MID_RADIUS {
                drive(heading_error(me, center), 1.0, gain)
            } else {
                reverse_turn(1.0, gain)
            }
        }
        Watch => {
            if err_last.abs() * 180.0 / std::f64::consts::PI < params.watch_tolerance_deg {
                Action {
                    throttle: 0.0,
                    steer: forward_steer(err_last, gain),
                    rescue: false,
                }
            } else {
                reverse_turn(err_last, gain)
            }
        }
        TrackReverse => Action {
            throttle: -1.0,
            steer: reverse_steer(err_last, gain),
            rescue: false,
        },
        Chase => drive(err_last, 1.0, gain),
        Search => match last_seen {
            Some(_) if err_last.abs() > ORIENTED => reverse_turn(err_last, gain),
            Some(_) => drive(err_last, 0.5, gain),
            None => reverse_turn(1.0, gain),
        },
        Recover => {
            if me.stunned_ticks > 0 {
                Action::default()
            } else {
                reverse_turn(err_last, gain)
            }
        }
    };
    let next = SpotterState {
        mode,
        ticks_in_state: if mode == state.mode { state.ticks_in_state + 1 } else { 0 },
        last_seen,
        lost_ticks,
        last_position: Some(me.position),
    };
    (action, next)
}
