//! Seeded agent scenarios shared by the agent tests and the acceptance run.

use pucknet::agents::{
    chaser_policy, compute_target, perceive_oracle, spotter_policy, AgentParams, ChaserState, Perception,
    PerceptionMode, SpotterMode, SpotterState,
};
use pucknet::rink::{CharacterParams, KartState, RinkConfig, Team, Vec2, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BLUE_GOAL: Vec2 = [55.0, 0.0];

pub fn oracle_perception(w: &World) -> Perception {
    let d = perceive_oracle(&w.state, &w.config, 0);
    Perception {
        mode: PerceptionMode::Oracle,
        puck_visible: true,
        puck_screen: d.screen,
        puck_world: Some(w.state.puck.position),
        confidence: 1.0,
        age_ticks: 0,
    }
}

/// Runs a lone red Chaser until a goal or `ticks`; returns the tick red scored at.
pub fn run_chaser(mut w: World, ticks: u64) -> Option<u64> {
    let params = AgentParams::default();
    let mut st = ChaserState::default();
    let radius = w.config.physics.kart_radius;
    for t in 0..ticks {
        let perc = oracle_perception(&w);
        let rink = w.config.rink.clone();
        let (a, next) = chaser_policy(&perc, &w.state.karts[0], BLUE_GOAL, &st, &params, &rink, radius);
        st = next;
        let ev = w.step(&[a], 1.0).unwrap();
        if let Some(team) = ev.goal {
            return (team == Team::Red).then_some(t);
        }
    }
    None
}

/// Empty rink, xue at a seeded pose, puck at a jittered center.
pub fn chaser_pose(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = [rng.gen_range(-45.0..45.0), rng.gen_range(-30.0..30.0)];
    let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let kart = KartState::new(CharacterParams::by_name("xue").unwrap(), Team::Red, pos, heading);
    let mut w = World::new(RinkConfig::default(), vec![kart], seed).unwrap();
    w.reset_positions();
    w
}

/// Number of the first `n` seeded poses the Chaser scores from within 3000 ticks.
pub fn chaser_scoring_count(n: u64) -> u64 {
    (0..n).filter(|&s| run_chaser(chaser_pose(s), 3000).is_some()).count() as u64
}

/// Worst collinearity and offset-length errors of `compute_target` over `n` random geometries.
pub fn target_invariant_errors(n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut col, mut len) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let puck = [rng.gen_range(-60.0..60.0), rng.gen_range(-45.0..45.0)];
        let goal = [rng.gen_range(-60.0..60.0), rng.gen_range(-45.0..45.0)];
        let offset = rng.gen_range(0.0..40.0);
        let t = compute_target(puck, goal, offset, None).unwrap();
        let u = [puck[0] - goal[0], puck[1] - goal[1]];
        let v = [t.unclamped[0] - goal[0], t.unclamped[1] - goal[1]];
        let cross = (u[0] * v[1] - u[1] * v[0]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
        col = col.max(cross.abs());
        let d = (t.unclamped[0] - puck[0]).hypot(t.unclamped[1] - puck[1]);
        len = len.max((d - offset).abs());
    }
    (col, len)
}

fn wilber(position: Vec2, heading: f64) -> KartState {
    KartState::new(CharacterParams::by_name("wilber").unwrap(), Team::Red, position, heading)
}

fn sees(p: Vec2) -> Perception {
    Perception {
        mode: PerceptionMode::Oracle,
        puck_visible: true,
        puck_screen: Some([200.0, 150.0]),
        puck_world: Some(p),
        confidence: 1.0,
        age_ticks: 0,
    }
}

/// Drives the Spotter FSM through a fixed script; returns `(step, expected, actual)`
/// for every step.
pub fn spotter_script() -> Vec<(usize, SpotterMode, SpotterMode)> {
    use SpotterMode::*;
    let params = AgentParams::default();
    let blind = Perception::unseen(PerceptionMode::Oracle);
    let me = wilber([-20.0, 0.0], 0.0);
    let mut stunned = me.clone();
    stunned.stunned_ticks = 10;

    let mut script: Vec<(KartState, Perception, SpotterMode)> = vec![
        (me.clone(), blind, RushMid),
        (me.clone(), blind, RushMid),
        (me.clone(), sees([-2.0, 0.0]), Watch),
        (me.clone(), sees([-14.0, 0.0]), TrackReverse),
        (me.clone(), sees([20.0, 0.0]), Chase),
    ];
    // Lost for exactly loss_threshold ticks: keep chasing the last sighting.
    for _ in 0..params.loss_threshold {
        script.push((me.clone(), blind, Chase));
    }
    script.push((me.clone(), blind, Search));
    script.push((me.clone(), blind, Search));
    script.push((stunned, blind, Recover));
    // Facing the last sighting (dead ahead) once the stun ends.
    script.push((me.clone(), blind, Search));
    script.push((me, sees([-5.0, 0.0]), Watch));

    let mut state = SpotterState::default();
    script
        .into_iter()
        .enumerate()
        .map(|(i, (kart, perc, want))| {
            let (_, next) = spotter_policy(&perc, &kart, &state, &params);
            state = next;
            (i, want, state.mode)
        })
        .collect()
}
