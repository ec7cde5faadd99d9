use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Win,
    Tie,
    Loss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub team: String,
    pub opponent: String,
    /// Final score as (red, blue); `team` plays red.
    pub score: [u32; 2],
    pub outcome: Outcome,
    pub goals_for: u32,
    pub goals_against: u32,
    pub seed: u64,
    pub ticks: u64,
    pub replay: Option<String>,
}

impl MatchReport {
    pub fn new(team: &str, opponent: &str, goals_for: u32, goals_against: u32, seed: u64, ticks: u64, replay: Option<String>) -> Self {
        let outcome = match goals_for.cmp(&goals_against) {
            std::cmp::Ordering::Greater => Outcome::Win,
            std::cmp::Ordering::Equal => Outcome::Tie,
            std::cmp::Ordering::Less => Outcome::Loss,
        };
        Self {
            team: team.into(),
            opponent: opponent.into(),
            score: [goals_for, goals_against],
            outcome,
            goals_for,
            goals_against,
            seed,
            ticks,
            replay,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TournamentRow {
    pub name: String,
    pub wins: u64,
    pub ties: u64,
    pub losses: u64,
    pub net: i64,
    pub avg_goals: f64,
    pub avg_net_goals: f64,
    pub rounds: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TournamentReport {
    pub rounds: u64,
    pub rows: Vec<TournamentRow>,
}

impl TournamentReport {
    /// Groups matches by team in first-appearance order, then sorts rows by net wins, highest first.
    pub fn aggregate(matches: &[MatchReport], rounds: u64) -> Self {
        let mut rows: Vec<TournamentRow> = Vec::new();
        let mut goals: Vec<(u64, u64)> = Vec::new();
        for m in matches {
            let i = match rows.iter().position(|r| r.name == m.team) {
                Some(i) => i,
                None => {
                    rows.push(TournamentRow {
                        name: m.team.clone(),
                        wins: 0,
                        ties: 0,
                        losses: 0,
                        net: 0,
                        avg_goals: 0.0,
                        avg_net_goals: 0.0,
                        rounds: 0,
                    });
                    goals.push((0, 0));
                    rows.len() - 1
                }
            };
            let r = &mut rows[i];
            match m.outcome {
                Outcome::Win => r.wins += 1,
                Outcome::Tie => r.ties += 1,
                Outcome::Loss => r.losses += 1,
            }
            r.rounds += 1;
            goals[i].0 += m.goals_for as u64;
            goals[i].1 += m.goals_against as u64;
        }
        for (r, (gf, ga)) in rows.iter_mut().zip(goals) {
            r.net = r.wins as i64 - r.losses as i64;
            r.avg_goals = gf as f64 / r.rounds as f64;
            r.avg_net_goals = (gf as f64 - ga as f64) / r.rounds as f64;
        }
        rows.sort_by(|a, b| b.net.cmp(&a.net));
        Self { rounds, rows }
    }
}

pub fn match_markdown(m: &MatchReport) -> String {
    format!(
        "| Team | Opponent | Score | Outcome | Seed | Ticks |\n|---|---|---|---|---|---|\n| {} | {} | {}–{} | {:?} | {} | {} |\n",
        m.team, m.opponent, m.goals_for, m.goals_against, m.outcome, m.seed, m.ticks
    )
}

pub fn tournament_markdown(report: &TournamentReport) -> String {
    let mut s = String::from("| Team | Wins | Ties | Losses | Net | Avg Goals | Avg Net Goals |\n|---|---|---|---|---|---|---|\n");
    for r in &report.rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.2} | {:.2} |\n",
            r.name, r.wins, r.ties, r.losses, r.net, r.avg_goals, r.avg_net_goals
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_follows_score() {
        assert_eq!(MatchReport::new("a", "b", 2, 1, 0, 1, None).outcome, Outcome::Win);
        assert_eq!(MatchReport::new("a", "b", 0, 0, 0, 1, None).outcome, Outcome::Tie);
        assert_eq!(MatchReport::new("a", "b", 0, 3, 0, 1, None).outcome, Outcome::Loss);
    }

    #[test]
    fn always_tie_row() {
        let ms: Vec<_> = (0..4).map(|s| MatchReport::new("t", "o", 1, 1, s, 10, None)).collect();
        let rep = TournamentReport::aggregate(&ms, 4);
        let r = &rep.rows[0];
        assert_eq!((r.wins, r.ties, r.losses, r.net, r.avg_goals, r.avg_net_goals), (0, 4, 0, 0, 1.0, 0.0));
    }
}
