use serde::{Deserialize, Serialize};

use super::{distance, forward_steer, heading_error, reverse_steer, AgentParams, Perception};
use crate::error::{Error, Result};
use crate::rink::{Action, KartState, RinkSpec, Vec2};

/// Point behind the puck on the ray from the opponent goal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub position: Vec2,
    /// Position before clamping into the rink.
    pub unclamped: Vec2,
    pub puck: Vec2,
    pub goal: Vec2,
}

/// `puck + offset · normalize(puck − opp_goal)`, clamped `margin` inside the rink when one is given.
pub fn compute_target(puck: Vec2, opp_goal: Vec2, offset: f64, rink: Option<(&RinkSpec, f64)>) -> Result<TargetPoint> {
    let d = [puck[0] - opp_goal[0], puck[1] - opp_goal[1]];
    let len = d[0].hypot(d[1]);
    if !(len > 0.0) {
        return Err(Error::DegenerateGeometry(format!("puck {puck:?} coincides with goal {opp_goal:?}")));
    }
    let unclamped = [puck[0] + offset * d[0] / len, puck[1] + offset * d[1] / len];
    let position = match rink {
        Some((r, margin)) => r.clamp_inside(unclamped, margin),
        None => unclamped,
    };
    Ok(TargetPoint {
        position,
        unclamped,
        puck,
        goal: opp_goal,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChaserMode {
    /// No puck estimate yet.
    #[default]
    Seek,
    /// Driving to the target point behind the puck.
    Approach,
    /// Lined up behind the puck, driving it toward the goal.
    Push,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChaserState {
    pub mode: ChaserMode,
    pub ticks_in_mode: u64,
    pub target: Option<TargetPoint>,
    /// Committed to a reverse turn until the aim point is roughly ahead again.
    pub reversing: bool,
}

/// Beyond this heading error a nearby aim point is reached by reversing.
const REVERSE_ERR: f64 = 1.9;
/// Reverse turns end once the error drops below this.
const REVERSE_DONE: f64 = 0.7;
const REVERSE_RANGE: f64 = 15.0;
/// Half-angle (tangent) of the cone behind the puck where pushing starts and continues.
const PUSH_ENTER: f64 = 0.45;
const PUSH_KEEP: f64 = 0.85;
/// Kart speed while steering the puck with soft touches.
const DRIBBLE_SPEED: f64 = 0.2;

fn steer_toward(me: &KartState, aim: Vec2, gain: f64, reversing: bool) -> (Action, bool) {
    let err = heading_error(me, aim);
    let close = distance(aim, me.position) < REVERSE_RANGE;
    let reverse = close && if reversing { err.abs() > REVERSE_DONE } else { err.abs() > REVERSE_ERR };
    let action = if reverse {
        Action {
            throttle: -1.0,
            steer: reverse_steer(err, gain),
            rescue: false,
        }
    } else {
        Action {
            throttle: 1.0,
            steer: forward_steer(err, gain),
            rescue: false,
        }
    };
    (action, reverse)
}

/// One tick of the Chaser: retarget behind the puck, then push it along the goal line.
pub fn chaser_policy(
    perc: &Perception,
    me: &KartState,
    opp_goal: Vec2,
    state: &ChaserState,
    params: &AgentParams,
    rink: &RinkSpec,
    kart_radius: f64,
) -> (Action, ChaserState) {
    let gain = params.steer_gain;
    let ticks = |mode| if mode == state.mode { state.ticks_in_mode + 1 } else { 0 };
    let Some(puck) = perc.puck_world else {
        let (action, reversing) = steer_toward(me, [0.0, 0.0], gain, state.reversing);
        let next = ChaserState {
            mode: ChaserMode::Seek,
            ticks_in_mode: ticks(ChaserMode::Seek),
            target: None,
            reversing,
        };
        return (action, next);
    };
    let target = compute_target(puck, opp_goal, params.target_offset, Some((rink, kart_radius))).ok();
    let to_goal = [opp_goal[0] - puck[0], opp_goal[1] - puck[1]];
    let goal_len = to_goal[0].hypot(to_goal[1]).max(1e-12);
    let u = [to_goal[0] / goal_len, to_goal[1] / goal_len];
    let perp = [-u[1], u[0]];
    let rel = [me.position[0] - puck[0], me.position[1] - puck[1]];
    // Kart position in the puck frame: `along < 0` is behind the puck.
    let along = rel[0] * u[0] + rel[1] * u[1];
    let lat = rel[0] * perp[0] + rel[1] * perp[1];
    let reach = kart_radius + 1.5;
    let in_cone = |tan: f64| along < -0.5 * reach && lat.abs() < 2.0 + (-along) * tan;

    let mode = match state.mode {
        ChaserMode::Push if in_cone(PUSH_KEEP) && -along < params.target_offset + 15.0 => ChaserMode::Push,
        _ if in_cone(PUSH_ENTER) && -along < params.target_offset + 8.0 => ChaserMode::Push,
        _ if along < -reach && target.is_some_and(|t| distance(t.position, me.position) < params.capture_radius) => {
            ChaserMode::Push
        }
        _ => ChaserMode::Approach,
    };
    let at = |back: f64, side: f64| {
        rink.clamp_inside([puck[0] - u[0] * back + perp[0] * side, puck[1] - u[1] * back + perp[1] * side], kart_radius)
    };
    let aim = match mode {
        // Line up first when off the line, then drive through the puck.
        ChaserMode::Push => at((lat.abs() * 2.5).min(8.0), 0.0),
        _ if along > -reach => {
            // Beside or ahead of the puck: go around on this side.
            let side = if lat >= 0.0 { 1.0 } else { -1.0 };
            at(reach + 2.0, side * (reach + 3.0))
        }
        _ => match target {
            Some(t) if distance(t.position, me.position) > params.target_offset => t.position,
            _ => at((lat.abs() * 1.5).clamp(reach + 2.0, params.target_offset), 0.0),
        },
    };
    let (mut action, reversing) = steer_toward(me, aim, gain, state.reversing);
    if mode == ChaserMode::Push && !reversing {
        // Dribble with soft touches until lined up near the goal, then shoot.
        let shoot = lat.abs() < 0.8 && goal_len < 30.0;
        let wanted = if shoot { me.character.max_speed } else { DRIBBLE_SPEED.min(me.character.max_speed) };
        action.throttle = ((wanted - me.speed) * 20.0).clamp(-1.0, 1.0);
    }
    let next = ChaserState {
        mode,
        ticks_in_mode: ticks(mode),
        target,
        reversing,
    };
    (action, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::PerceptionMode;
    use crate::rink::{CharacterParams, Team};

    #[test]
    fn target_sits_behind_puck() {
        let t = compute_target([0.0, 0.0], [55.0, 0.0], 20.0, None).unwrap();
        assert_eq!(t.position, [-20.0, 0.0]);
        let t = compute_target([3.0, 4.0], [55.0, 0.0], 0.0, None).unwrap();
        assert_eq!(t.position, [3.0, 4.0]);
        assert!(compute_target([55.0, 0.0], [55.0, 0.0], 20.0, None).is_err());
    }

    #[test]
    fn steering_saturates_and_centers() {
        let me = KartState::new(CharacterParams::by_name("xue").unwrap(), Team::Red, [0.0, 0.0], 0.0);
        let (a, _) = steer_toward(&me, [30.0, 0.0], 2.5, false);
        assert_eq!((a.throttle, a.steer), (1.0, 0.0));
        let (a, _) = steer_toward(&me, [0.0, 30.0], 2.5, false);
        assert_eq!((a.throttle, a.steer), (1.0, -1.0));
        let (a, rev) = steer_toward(&me, [-5.0, 0.5], 2.5, false);
        assert!(rev && a.throttle == -1.0);
    }

    #[test]
    fn approaches_around_the_puck() {
        let me = KartState::new(CharacterParams::by_name("xue").unwrap(), Team::Red, [20.0, 0.0], 0.0);
        let perc = Perception {
            mode: PerceptionMode::Oracle,
            puck_visible: true,
            puck_screen: None,
            puck_world: Some([10.0, 0.0]),
            confidence: 1.0,
            age_ticks: 0,
        };
        let rink = RinkSpec::default();
        let (_, s) = chaser_policy(&perc, &me, [55.0, 0.0], &ChaserState::default(), &AgentParams::default(), &rink, 4.0);
        assert_eq!(s.mode, ChaserMode::Approach);
        let (_, s) = chaser_policy(&perc, &KartState { position: [-2.0, 0.5], ..me }, [55.0, 0.0], &s, &AgentParams::default(), &rink, 4.0);
        assert_eq!(s.mode, ChaserMode::Push);
    }
}
