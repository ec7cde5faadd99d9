//! Match and tournament execution, reports and replays.

mod replay;
mod report;

pub use replay::{read_replay, render_replay, ReplayHeader, ReplayWriter};
pub use report::{match_markdown, tournament_markdown, MatchReport, Outcome, TournamentReport, TournamentRow};

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{TeamConfig, TeamController};
use crate::error::Result;
use crate::model::PuckNet;
use crate::rink::{RinkConfig, Team, World};

/// Settings shared by every match of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSettings {
    pub ticks: u64,
    pub dt: f64,
    pub rink: RinkConfig,
}

impl Default for MatchSettings {
    fn default() -> Self {
        Self {
            ticks: 3000,
            dt: 1.0,
            rink: RinkConfig::default(),
        }
    }
}

/// A team with its network loaded once and shared across matches.
#[derive(Clone, Debug)]
pub struct PreparedTeam {
    pub config: TeamConfig,
    pub model: Option<Arc<PuckNet>>,
}

impl PreparedTeam {
    pub fn new(config: TeamConfig) -> Result<Self> {
        let model = config.load_model()?;
        Ok(Self { config, model })
    }
}

/// Plays `team` (red) against `opponent` (blue); the report takes `team`'s view.
pub fn play_match(
    team: &PreparedTeam,
    opponent: &PreparedTeam,
    seed: u64,
    settings: &MatchSettings,
    replay: Option<&Path>,
) -> Result<MatchReport> {
    let red = team.config.characters()?;
    let blue = opponent.config.characters()?;
    let mut world = World::faceoff(settings.rink.clone(), &red, &blue, seed)?;
    world.reset_positions();
    let mut controllers = [
        TeamController::new(&team.config, Team::Red, [0, 1], team.model.clone())?,
        TeamController::new(&opponent.config, Team::Blue, [2, 3], opponent.model.clone())?,
    ];
    let mut writer = match replay {
        Some(path) => Some(ReplayWriter::create(
            path,
            &ReplayHeader {
                seed,
                red: team.config.name.clone(),
                blue: opponent.config.name.clone(),
                rink: settings.rink.clone(),
            },
        )?),
        None => None,
    };
    if let Some(w) = writer.as_mut() {
        w.push(&world.snapshot())?;
    }
    for _ in 0..settings.ticks {
        let a = controllers[0].act(&world)?;
        let b = controllers[1].act(&world)?;
        world.step(&[a[0], a[1], b[0], b[1]], settings.dt)?;
        if let Some(w) = writer.as_mut() {
            w.push(&world.snapshot())?;
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    let [red_goals, blue_goals] = world.state.score;
    Ok(MatchReport::new(
        &team.config.name,
        &opponent.config.name,
        red_goals,
        blue_goals,
        seed,
        settings.ticks,
        replay.map(|p| p.display().to_string()),
    ))
}

/// Runs `rounds` matches per team against `opponent` with seeds `base_seed + i`.
pub fn tournament(
    teams: &[PreparedTeam],
    opponent: &PreparedTeam,
    rounds: u64,
    base_seed: u64,
    settings: &MatchSettings,
) -> Result<(TournamentReport, Vec<MatchReport>)> {
    if rounds == 0 {
        return Err(crate::Error::Config("a tournament needs at least one round".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..teams.len()).flat_map(|t| (0..rounds).map(move |r| (t, r))).collect();
    let matches: Vec<MatchReport> = jobs
        .par_iter()
        .map(|&(t, r)| play_match(&teams[t], opponent, base_seed + r, settings, None))
        .collect::<Result<_>>()?;
    Ok((TournamentReport::aggregate(&matches, rounds), matches))
}
