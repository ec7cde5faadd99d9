//! Command-line front end. Every subcommand writes into a run directory.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::agents::{PerceptionMode, TeamConfig, TeamKind};
use crate::datagen::{generate_dataset, load_dataset, DatagenConfig, Split};
use crate::error::{Error, Result};
use crate::harness::{
    match_markdown, play_match, render_replay, tournament, tournament_markdown, MatchSettings, PreparedTeam,
};
use crate::model::PuckNet;
use crate::rink::RinkConfig;
use crate::train::{evaluate, sweep, train, EvalReport, TrainConfig, DEFAULT_LAMBDAS};

#[derive(Debug, Parser)]
#[command(name = "pucknet", version, about = "Puck detection, rink simulation and agent matches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled dataset with the collectors.
    GenData(GenDataArgs),
    /// Train a detector and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Train once per L2 strength and tabulate the results.
    Sweep(SweepArgs),
    /// Score a checkpoint on one dataset split.
    Eval(EvalArgs),
    /// Play one match against an opponent team.
    Match(MatchArgs),
    /// Play several rounds per team against one opponent.
    Tournament(TournamentArgs),
    /// Draw a replay as numbered top-down PNG frames.
    RenderReplay(RenderReplayArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Collector {
    All,
    Zamboni,
    Spotter,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Dataset config (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    collector: Collector,
    /// Zamboni grid as ROWSxCOLS; implies one pass unless --passes is given.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    passes: Option<usize>,
    /// Spotter episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Frames captured per Spotter episode.
    #[arg(long)]
    frames_per_episode: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainOverrides {
    /// Training config (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    early_stop_tolerance: Option<usize>,
    /// Train on at most this many examples of the train split.
    #[arg(long)]
    max_train: Option<usize>,
    /// Wall-clock cap in seconds; no epoch starts that would overrun it.
    #[arg(long)]
    time_budget: Option<f64>,
    /// Disable augmentation.
    #[arg(long)]
    no_augment: bool,
}

impl TrainOverrides {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::from_toml(&read_text(p)?)?,
            None => TrainConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.lr, self.lr);
        set(&mut cfg.l2_lambda, self.l2);
        set(&mut cfg.batch_size, self.batch_size);
        set(&mut cfg.max_epochs, self.epochs);
        set(&mut cfg.early_stop_tolerance, self.early_stop_tolerance);
        if self.max_train.is_some() {
            cfg.max_train_examples = self.max_train;
        }
        if self.time_budget.is_some() {
            cfg.time_budget_secs = self.time_budget;
        }
        if self.no_augment {
            cfg.augment = crate::datagen::AugmentPolicy::identity();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated L2 strengths.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
struct MatchFlags {
    /// Opponent team: noop, scripted, oracle, learned:CKPT or a team TOML file.
    #[arg(long, default_value = "scripted")]
    opponent: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    ticks: Option<u64>,
    /// Rink and physics config (TOML).
    #[arg(long)]
    rink: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

impl MatchFlags {
    fn settings(&self) -> Result<MatchSettings> {
        let mut s = MatchSettings::default();
        if let Some(p) = &self.rink {
            s.rink = RinkConfig::from_toml(&read_text(p)?)?;
        }
        set(&mut s.ticks, self.ticks);
        Ok(s)
    }
}

#[derive(Debug, Args)]
struct MatchArgs {
    /// Team under test, same forms as --opponent.
    #[arg(long, default_value = "oracle")]
    team: String,
    /// Skip writing replay.jsonl.
    #[arg(long)]
    no_replay: bool,
    #[command(flatten)]
    flags: MatchFlags,
}

#[derive(Debug, Args)]
struct TournamentArgs {
    /// Teams under test, same forms as --opponent; repeat for several.
    #[arg(long = "team", required = true)]
    teams: Vec<String>,
    #[arg(long, default_value_t = 10)]
    rounds: u64,
    #[command(flatten)]
    flags: MatchFlags,
}

#[derive(Debug, Args)]
struct RenderReplayArgs {
    #[arg(long)]
    replay: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep every n-th tick.
    #[arg(long, default_value_t = 1)]
    every: usize,
    /// Pixels per rink unit.
    #[arg(long, default_value_t = 4.0)]
    scale: f64,
    /// Accepted for uniformity; rendering draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(r)?, p(c)?))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parses a team spec: a builtin name, `learned:CKPT`, or a TOML file.
pub fn team_from_spec(spec: &str) -> Result<TeamConfig> {
    let cfg = match spec {
        "noop" => TeamConfig::of_kind("noop", TeamKind::NoOp),
        "scripted" => TeamConfig::of_kind("scripted", TeamKind::Scripted),
        "oracle" => TeamConfig::of_kind("oracle", TeamKind::PuckNet),
        _ => match spec.strip_prefix("learned:") {
            Some(ckpt) => TeamConfig {
                name: "learned".into(),
                perception: PerceptionMode::Learned,
                checkpoint: Some(PathBuf::from(ckpt)),
                ..TeamConfig::default()
            },
            None => TeamConfig::from_toml(&read_text(Path::new(spec))?)?,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn eval_markdown(r: &EvalReport) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"));
    format!(
        "| split | n | positives | loss | ROC AUC | PR AUC | MAE (px) |\n|---|---:|---:|---:|---:|---:|---:|\n| {:?} | {} | {} | {:.4} | {} | {} | {} |\n",
        r.split,
        r.n,
        r.positives,
        r.loss.total,
        f(r.roc_auc),
        f(r.pr_auc),
        f(r.mae)
    )
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => DatagenConfig::from_toml(&read_text(p)?)?,
        None => DatagenConfig::default(),
    };
    set(&mut cfg.seed, a.seed);
    if let Some((rows, cols)) = a.grid {
        cfg.zamboni.rows = rows;
        cfg.zamboni.cols = cols;
        cfg.zamboni.passes = 1;
    }
    set(&mut cfg.zamboni.passes, a.passes);
    set(&mut cfg.spotter.episodes, a.episodes);
    if let Some(n) = a.frames_per_episode {
        cfg.spotter.reset_interval = n * cfg.spotter.capture_every;
    }
    match a.collector {
        Collector::All => {}
        Collector::Zamboni => cfg.spotter.episodes = 0,
        Collector::Spotter => cfg.zamboni.passes = 0,
    }
    let manifest = generate_dataset(&a.out, &cfg)?;
    write_text(&a.out.join("datagen.toml"), &cfg.to_toml()?)?;
    eprintln!(
        "wrote {} examples ({} positive) to {}",
        manifest.count,
        manifest.positives,
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = a.train.resolve()?;
    let ds = load_dataset(&a.dataset)?;
    make_dir(&a.out)?;
    write_text(&a.out.join("train.toml"), &cfg.to_toml()?)?;
    let out = train(&ds, &cfg, |e| {
        eprintln!(
            "epoch {:>3}  train {:.4}  val {:.4}  roc {}  mae {}",
            e.epoch,
            e.train.total,
            e.val.loss.total,
            e.val.roc_auc.map_or("n/a".into(), |v| format!("{v:.4}")),
            e.val.mae.map_or("n/a".into(), |v| format!("{v:.2}"))
        )
    })?;
    out.save(&a.out)?;
    let test = evaluate(&out.model, &ds, Split::Test, cfg.eval_batch_size)?;
    write_json(&a.out.join("test.json"), &test)?;
    write_text(&a.out.join("test.md"), &eval_markdown(&test))?;
    eprint!("{}", eval_markdown(&test));
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let cfg = a.train.resolve()?;
    let lambdas = a.lambdas.unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    let ds = load_dataset(&a.dataset)?;
    make_dir(&a.out)?;
    write_text(&a.out.join("train.toml"), &cfg.to_toml()?)?;
    let (report, outcomes) = sweep(&ds, &cfg, &lambdas, |l, e| {
        eprintln!("l2 {l:e}  epoch {:>3}  val {:.4}", e.epoch, e.val.loss.total)
    })?;
    for (row, out) in report.rows.iter().zip(&outcomes) {
        out.save(&a.out.join(format!("l2_{:e}", row.l2_lambda)))?;
    }
    write_json(&a.out.join("sweep.json"), &report)?;
    write_text(&a.out.join("sweep.md"), &report.markdown())?;
    eprint!("{}", report.markdown());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let model = PuckNet::load(&a.checkpoint)?;
    let report = evaluate(&model, &ds, a.split.into(), 64)?;
    make_dir(&a.out)?;
    write_json(&a.out.join("eval.json"), &report)?;
    write_text(&a.out.join("eval.md"), &eval_markdown(&report))?;
    eprint!("{}", eval_markdown(&report));
    Ok(())
}

fn match_cmd(a: MatchArgs) -> Result<()> {
    let settings = a.flags.settings()?;
    let team = PreparedTeam::new(team_from_spec(&a.team)?)?;
    let opponent = PreparedTeam::new(team_from_spec(&a.flags.opponent)?)?;
    make_dir(&a.flags.out)?;
    let replay = (!a.no_replay).then(|| a.flags.out.join("replay.jsonl"));
    let mut report = play_match(&team, &opponent, a.flags.seed, &settings, replay.as_deref())?;
    if replay.is_some() {
        report.replay = Some("replay.jsonl".into());
    }
    write_json(&a.flags.out.join("match.json"), &report)?;
    write_text(&a.flags.out.join("match.md"), &match_markdown(&report))?;
    eprint!("{}", match_markdown(&report));
    Ok(())
}

fn tournament_cmd(a: TournamentArgs) -> Result<()> {
    let settings = a.flags.settings()?;
    let teams = a
        .teams
        .iter()
        .map(|s| team_from_spec(s).and_then(PreparedTeam::new))
        .collect::<Result<Vec<_>>>()?;
    let opponent = PreparedTeam::new(team_from_spec(&a.flags.opponent)?)?;
    let (report, matches) = tournament(&teams, &opponent, a.rounds, a.flags.seed, &settings)?;
    make_dir(&a.flags.out)?;
    write_json(&a.flags.out.join("tournament.json"), &report)?;
    write_json(&a.flags.out.join("matches.json"), &matches)?;
    write_text(&a.flags.out.join("tournament.md"), &tournament_markdown(&report))?;
    eprint!("{}", tournament_markdown(&report));
    Ok(())
}

fn render_replay_cmd(a: RenderReplayArgs) -> Result<()> {
    if a.every == 0 || !(a.scale > 0.0) {
        return Err(Error::Config("--every and --scale must be positive".into()));
    }
    make_dir(&a.out)?;
    let n = render_replay(&a.replay, &a.out, a.every, a.scale)?;
    eprintln!("wrote {n} frames to {}", a.out.display());
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Shape { .. } => "shape",
        Error::Contract { .. } => "contract",
        Error::DegenerateVariance { .. } => "degenerate_variance",
        Error::Config(_) => "config",
        Error::UndefinedMetric(_) => "undefined_metric",
        Error::DegenerateGeometry(_) => "degenerate_geometry",
        Error::Divergence { .. } => "divergence",
        Error::Checkpoint(_) => "checkpoint",
        Error::Io { .. } => "io",
        Error::Json(_) | Error::TomlDe(_) | Error::TomlSer(_) => "format",
        Error::Png(_) => "png",
    }
}

/// Runs the command line and returns the process exit code:
/// 0 on success, 1 on a runtime failure, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Match(a) => match_cmd(a),
        Command::Tournament(a) => tournament_cmd(a),
        Command::RenderReplay(a) => render_replay_cmd(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", error_kind(&e));
            1
        }
    }
}
