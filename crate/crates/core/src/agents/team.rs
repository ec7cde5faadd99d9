use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    chaser_policy, perceive_oracle, spotter_policy, AgentParams, Blackboard, ChaserState, Detection, Eye,
    LearnedDetector, Perception, PerceptionMode, SpotterState,
};
use crate::error::{Error, Result};
use crate::model::PuckNet;
use crate::rink::{Action, CharacterParams, Team, World};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeamKind {
    /// Never touches the controls.
    NoOp,
    /// Baseline opponent: both karts drive at the puck toward goal with ground-truth positions.
    Scripted,
    /// Spotter plus Chaser.
    #[default]
    PuckNet,
}

/// Agent config file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeamConfig {
    pub name: String,
    pub kind: TeamKind,
    pub chaser: String,
    pub spotter: String,
    pub perception: PerceptionMode,
    pub checkpoint: Option<PathBuf>,
    pub params: AgentParams,
}

impl Default for TeamConfig {
    fn default() -> Self {
        Self {
            name: "pucknet".into(),
            kind: TeamKind::PuckNet,
            chaser: "xue".into(),
            spotter: "wilber".into(),
            perception: PerceptionMode::Oracle,
            checkpoint: None,
            params: AgentParams::default(),
        }
    }
}

impl TeamConfig {
    pub fn of_kind(name: &str, kind: TeamKind) -> Self {
        Self {
            name: name.into(),
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.characters()?;
        if self.needs_model() && self.checkpoint.is_none() {
            return Err(Error::Config(format!("team {:?} uses learned perception but has no checkpoint", self.name)));
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

    /// Characters in kart order: Chaser, then Spotter.
    pub fn characters(&self) -> Result<[CharacterParams; 2]> {
        Ok([CharacterParams::by_name(&self.chaser)?, CharacterParams::by_name(&self.spotter)?])
    }

    pub fn needs_model(&self) -> bool {
        self.kind == TeamKind::PuckNet && self.perception == PerceptionMode::Learned
    }

    /// Loads the checkpoint a learned team needs.
    pub fn load_model(&self) -> Result<Option<Arc<PuckNet>>> {
        self.validate()?;
        if !self.needs_model() {
            return Ok(None);
        }
        let path = self.checkpoint.as_ref().expect("validated");
        PuckNet::load(path)
            .map(|m| Some(Arc::new(m)))
            .map_err(|e| Error::Config(format!("team {:?}: cannot load checkpoint {}: {e}", self.name, path.display())))
    }
}

/// Drives one team's two karts through a match.
#[derive(Clone, Debug)]
pub struct TeamController {
    config: TeamConfig,
    team: Team,
    /// Kart indices of the Chaser and the Spotter.
    karts: [usize; 2],
    eyes: [Eye; 2],
    blackboard: Blackboard,
    spotter: SpotterState,
    chasers: [ChaserState; 2],
    detector: Option<LearnedDetector>,
}

impl TeamController {
    pub fn new(config: &TeamConfig, team: Team, karts: [usize; 2], model: Option<Arc<PuckNet>>) -> Result<Self> {
        config.validate()?;
        let detector = match (config.needs_model(), model) {
            (true, Some(m)) => Some(LearnedDetector::new(m, config.params.tau)),
            (true, None) => return Err(Error::Config(format!("team {:?} needs a loaded model", config.name))),
            (false, _) => None,
        };
        Ok(Self {
            config: config.clone(),
            team,
            karts,
            eyes: [Eye::new(config.perception), Eye::new(config.perception)],
            blackboard: Blackboard::default(),
            spotter: SpotterState::default(),
            chasers: [ChaserState::default(), ChaserState::default()],
            detector,
        })
    }

    pub fn team(&self) -> Team {
        self.team
    }

    pub fn blackboard(&self) -> &Blackboard {
        &self.blackboard
    }

    pub fn spotter_state(&self) -> &SpotterState {
        &self.spotter
    }

    fn perceive(&mut self, world: &World) -> Result<[Perception; 2]> {
        let tick = world.state.tick;
        let dets = match &self.detector {
            Some(d) if tick % self.config.params.perception_interval == 0 => {
                let v = d.detect(&world.state, &world.config, &self.karts)?;
                Some([v[0], v[1]])
            }
            Some(_) => None,
            None => Some(self.karts.map(|k| perceive_oracle(&world.state, &world.config, k))),
        };
        Ok(match dets {
            Some(d) => [self.eyes[0].observe(d[0]), self.eyes[1].observe(d[1])],
            None => [self.eyes[0].hold(), self.eyes[1].hold()],
        })
    }

    /// Actions for (Chaser, Spotter) this tick.
    pub fn act(&mut self, world: &World) -> Result<[Action; 2]> {
        let cfg = &world.config;
        let opp_goal = cfg.rink.goal_center(self.team.opponent());
        let kart_radius = cfg.physics.kart_radius;
        let params = self.config.params.clone();
        match self.config.kind {
            TeamKind::NoOp => Ok([Action::default(); 2]),
            TeamKind::Scripted => {
                let truth = Detection {
                    visible: true,
                    screen: None,
                    world: Some(world.state.puck.position),
                    confidence: 1.0,
                };
                let mut actions = [Action::default(); 2];
                for (i, &k) in self.karts.iter().enumerate() {
                    let perc = self.eyes[i].observe(truth);
                    let p = AgentParams {
                        target_offset: 8.0 * (i + 1) as f64,
                        ..params.clone()
                    };
                    let me = &world.state.karts[k];
                    let (a, s) = chaser_policy(&perc, me, opp_goal, &self.chasers[i], &p, &cfg.rink, kart_radius);
                    actions[i] = a;
                    self.chasers[i] = s;
                }
                Ok(actions)
            }
            TeamKind::PuckNet => {
                let [chaser_perc, spotter_perc] = self.perceive(world)?;
                self.blackboard.update(&spotter_perc, &chaser_perc);
                let spotter_kart = &world.state.karts[self.karts[1]];
                let (spot, s) = spotter_policy(&spotter_perc, spotter_kart, &self.spotter, &params);
                self.spotter = s;
                let shared = self.blackboard.as_perception(self.config.perception);
                let chaser_kart = &world.state.karts[self.karts[0]];
                let (chase, c) = chaser_policy(&shared, chaser_kart, opp_goal, &self.chasers[0], &params, &cfg.rink, kart_radius);
                self.chasers[0] = c;
                Ok([chase, spot])
            }
        }
    }
}
