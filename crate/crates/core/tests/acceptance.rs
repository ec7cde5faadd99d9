//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! The 10k dataset, the trained detector and the sweep are cached under
//! `target/acceptance/`; delete that directory to rerun them from scratch.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::gradcheck::{check_all_ops, pucknet_input_rel_error, INSTANCES, TOL};
use common::oracles::{brute_force_ap, pairwise_auc};
use common::scenarios::{chaser_scoring_count, spotter_script, target_invariant_errors};
use pucknet::agents::SpotterMode;
use pucknet::cli::team_from_spec;
use pucknet::datagen::{generate_dataset, label_example, load_dataset, DatagenConfig, Dataset, Split};
use pucknet::harness::{play_match, MatchSettings, Outcome, PreparedTeam};
use pucknet::loss::{bce_with_logits, combined_masked_loss, smooth_l1_term};
use pucknet::metrics::{pr_auc, roc_auc};
use pucknet::model::PuckNet;
use pucknet::rink::{Action, CharacterParams, RinkConfig, World};
use pucknet::train::{evaluate, sweep, train, SweepReport, TrainConfig, TrainHistory, DEFAULT_LAMBDAS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const TRAIN_LIMIT_SECS: f64 = 1800.0;
/// Leaves room for the final test-split evaluation inside the limit.
const TRAIN_BUDGET_SECS: f64 = 1740.0;
const SWEEP_TRAIN_EXAMPLES: usize = 1000;
const SWEEP_EPOCHS: usize = 3;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn cache_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance")
}

fn gradients(r: &mut Report) {
    let t = Instant::now();
    let ops = check_all_ops(1);
    let worst = ops.iter().map(|o| o.worst).fold(0.0, f64::max);
    let enough = ops.iter().all(|o| o.instances >= INSTANCES);
    let e2e = pucknet_input_rel_error(21);
    let secs = t.elapsed().as_secs_f64();
    let pass = worst <= TOL && enough && e2e <= 1e-3 && secs < 120.0;
    r.line(
        "gradient checks",
        pass,
        format!("{} ops, worst op rel err {worst:.2e}, network input rel err {e2e:.2e}, {secs:.1} s", ops.len()),
    );
}

fn loss_identities(r: &mut Report) {
    let below = smooth_l1_term(f64::from_bits(1.0f64.to_bits() - 1));
    let above = smooth_l1_term(f64::from_bits(1.0f64.to_bits() + 1));
    let continuity = smooth_l1_term(1.0) == 0.5
        && smooth_l1_term(-1.0) == 0.5
        && (below - 0.5).abs() <= 4.0 * f64::EPSILON
        && (above - 0.5).abs() <= 4.0 * f64::EPSILON;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut masked = true;
    for _ in 0..100 {
        let n = rng.gen_range(1..40);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let coords: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.0..400.0)).collect();
        let targets: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.0..400.0)).collect();
        let base = combined_masked_loss(&logits, &labels, &coords, &targets).unwrap();
        let mut moved = coords.clone();
        for (i, &l) in labels.iter().enumerate() {
            if l == 0.0 {
                moved[2 * i] += rng.gen_range(-1e3..1e3);
                moved[2 * i + 1] += rng.gen_range(-1e3..1e3);
            }
        }
        let after = combined_masked_loss(&logits, &labels, &moved, &targets).unwrap();
        masked &= base.total.to_bits() == after.total.to_bits();
    }

    let bce = bce_with_logits(&[0.0], &[1.0]).unwrap();
    let bce_ok = (bce - std::f64::consts::LN_2).abs() <= 1e-12;
    r.line(
        "loss identities",
        continuity && masked && bce_ok,
        format!(
            "smooth-L1 at |d|=1 {}, negative coords ignored {}, BCE(0,1)-ln2 = {:.1e}",
            continuity,
            masked,
            bce - std::f64::consts::LN_2
        ),
    );
}

fn metric_oracles(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut roc_err, mut pr_err) = (0.0f64, 0.0f64);
    for set in 0..100 {
        let n = rng.gen_range(2..=200);
        // Every other set draws from a coarse grid so ties are common.
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.gen_range(0.0..1.0);
                if set % 2 == 0 { (s * 10.0).floor() / 10.0 } else { s }
            })
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        roc_err = roc_err.max((roc_auc(&scores, &labels).unwrap() - pairwise_auc(&scores, &labels)).abs());
        pr_err = pr_err.max((pr_auc(&scores, &labels).unwrap() - brute_force_ap(&scores, &labels)).abs());
    }
    r.line(
        "metric oracles",
        roc_err <= 1e-12 && pr_err <= 1e-9,
        format!("max |roc - pairwise| {roc_err:.1e}, max |pr - sweep| {pr_err:.1e} over 100 sets"),
    );
}

fn dataset() -> Dataset {
    let dir = cache_dir().join("dataset");
    let cfg = DatagenConfig::default();
    let cached = load_dataset(&dir).ok().filter(|d| d.manifest.config == cfg);
    cached.unwrap_or_else(|| {
        let t = Instant::now();
        let _ = std::fs::remove_dir_all(&dir);
        generate_dataset(&dir, &cfg).expect("dataset generation");
        eprintln!("generated dataset in {:.0} s", t.elapsed().as_secs_f64());
        load_dataset(&dir).expect("dataset loads")
    })
}

#[derive(Serialize, Deserialize)]
struct TrainRecord {
    train_secs: f64,
    history: TrainHistory,
}

fn trained(ds: &Dataset) -> (PuckNet, TrainRecord) {
    let dir = cache_dir().join("train");
    let cfg = TrainConfig {
        time_budget_secs: Some(TRAIN_BUDGET_SECS),
        ..TrainConfig::default()
    };
    let record_path = dir.join("record.json");
    if let (Ok(text), Ok(model)) = (std::fs::read_to_string(&record_path), PuckNet::load(&dir.join("best.ckpt"))) {
        if let Ok(rec) = serde_json::from_str::<TrainRecord>(&text) {
            if rec.history.config == cfg {
                return (model, rec);
            }
        }
    }
    let t = Instant::now();
    let out = train(ds, &cfg, |e| {
        eprintln!(
            "epoch {} train {:.4} val {:.4} auc {:?} ({:.0} s)",
            e.epoch,
            e.train.total,
            e.val.loss.total,
            e.val.roc_auc,
            t.elapsed().as_secs_f64()
        )
    })
    .expect("training");
    let rec = TrainRecord {
        train_secs: t.elapsed().as_secs_f64(),
        history: out.history.clone(),
    };
    out.save(&dir).expect("save run");
    std::fs::write(&record_path, serde_json::to_string_pretty(&rec).unwrap()).unwrap();
    (out.model, rec)
}

fn swept(ds: &Dataset) -> SweepReport {
    let path = cache_dir().join("sweep.json");
    let cfg = TrainConfig {
        max_train_examples: Some(SWEEP_TRAIN_EXAMPLES),
        max_epochs: SWEEP_EPOCHS,
        early_stop_tolerance: SWEEP_EPOCHS - 1,
        ..TrainConfig::default()
    };
    if let Some(rep) = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str::<(TrainConfig, SweepReport)>(&t).ok())
        .filter(|(c, _)| *c == cfg)
    {
        return rep.1;
    }
    let (rep, _) = sweep(ds, &cfg, &DEFAULT_LAMBDAS, |l, e| eprintln!("l2 {l:e} epoch {} val {:.4}", e.epoch, e.val.loss.total))
        .expect("sweep");
    std::fs::write(&path, serde_json::to_string(&(cfg, &rep)).unwrap()).unwrap();
    rep
}

fn training(r: &mut Report, ds: &Dataset, model: &PuckNet, rec: &TrainRecord) {
    let t = Instant::now();
    let test = evaluate(model, ds, Split::Test, 64).expect("test evaluation");
    let total = rec.train_secs + t.elapsed().as_secs_f64();
    let (auc, mae) = (test.roc_auc.unwrap_or(0.0), test.mae.unwrap_or(f64::INFINITY));
    r.line(
        "training target",
        auc >= 0.95 && mae <= 20.0 && total <= TRAIN_LIMIT_SECS,
        format!(
            "test ROC-AUC {auc:.4}, test MAE {mae:.2} px, {} epochs (best {}), {total:.0} s",
            rec.history.epochs.len(),
            rec.history.best_epoch
        ),
    );

    let sw = swept(ds);
    let norms: Vec<String> = sw.rows.iter().map(|row| format!("{:e}:{:.3}", row.l2_lambda, row.parameter_norm)).collect();
    r.line(
        "L2 sweep",
        sw.rows.len() == DEFAULT_LAMBDAS.len() && sw.norm_shrinks_with_lambda() == Some(true),
        format!("weight norms {}", norms.join(", ")),
    );
}

fn threshold_fixture(r: &mut Report) {
    let got: Vec<u8> = [0usize, 1, 19, 20, 21, 500]
        .iter()
        .map(|&count| {
            let mut mask = vec![1u8; 400 * 300];
            mask[..count].iter_mut().for_each(|m| *m = 7);
            label_example(&mask, 400, 300, None).label
        })
        .collect();
    r.line("pixel-count labels", got == [0, 0, 0, 0, 1, 1], format!("{got:?}"));
}

fn random_actions(rng: &mut ChaCha8Rng) -> Vec<Action> {
    (0..4)
        .map(|_| Action {
            throttle: rng.gen_range(-1.0..1.0),
            steer: rng.gen_range(-1.0..1.0),
            rescue: rng.gen_bool(0.001),
        })
        .collect()
}

fn simulator(r: &mut Report) {
    let run = || {
        let roster = CharacterParams::roster();
        let red = [roster[0].clone(), roster[2].clone()];
        let blue = [roster[5].clone(), roster[9].clone()];
        let mut w = World::faceoff(RinkConfig::default(), &red, &blue, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut escapes, mut speedups) = (0usize, 0usize);
        let mut speed = w.state.puck.velocity[0].hypot(w.state.puck.velocity[1]);
        let mut trace = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            let ev = w.step(&random_actions(&mut rng), 1.0).unwrap();
            let p = w.state.puck.position;
            if !(w.config.rink.contains(p) || p[1].abs() < w.config.rink.goal_width / 2.0) {
                escapes += 1;
            }
            let now = w.state.puck.velocity[0].hypot(w.state.puck.velocity[1]);
            if !ev.puck_collision() && now > speed {
                speedups += 1;
            }
            speed = now;
            trace.push(serde_json::to_string(&w.snapshot()).unwrap());
        }
        (escapes, speedups, trace)
    };
    let (escapes, speedups, a) = run();
    let (_, _, b) = run();
    let same = a == b;
    r.line(
        "simulator properties",
        escapes == 0 && speedups == 0 && same,
        format!("1e5 ticks: {escapes} out-of-bounds, {speedups} free speed-ups, bitwise repeat {same}"),
    );
}

fn agents(r: &mut Report) {
    let scored = chaser_scoring_count(50);
    let steps = spotter_script();
    let scripted = steps.iter().all(|(_, want, got)| want == got);
    let visited = SpotterMode::ALL.iter().all(|m| steps.iter().any(|s| s.2 == *m));
    let (col, off) = target_invariant_errors(1000, 4);
    r.line(
        "agent behavior",
        scored >= 45 && scripted && visited && col <= 1e-9 && off <= 1e-9,
        format!(
            "chaser scored {scored}/50, spotter script followed {scripted} (all states {visited}), target errors {col:.1e}/{off:.1e}"
        ),
    );
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn reproducibility(r: &mut Report) {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_pucknet");
    let run = |tag: &str| -> Option<PathBuf> {
        let root = tmp.path().join(tag);
        let p = |s: &str| root.join(s).to_str().unwrap().to_string();
        let team = format!("learned:{}", p("train/best.ckpt"));
        let steps: [Vec<String>; 3] = [
            ["gen-data", "--collector", "zamboni", "--grid", "5x5", "--seed", "7", "--out", &p("data")].map(String::from).to_vec(),
            ["train", "--dataset", &p("data"), "--out", &p("train"), "--seed", "1", "--epochs", "2", "--early-stop-tolerance", "1"]
                .map(String::from)
                .to_vec(),
            ["match", "--team", &team, "--opponent", "noop", "--seed", "3", "--ticks", "300", "--out", &p("match")]
                .map(String::from)
                .to_vec(),
        ];
        for args in &steps {
            if !Command::new(bin).args(args).output().ok()?.status.success() {
                return None;
            }
        }
        Some(root)
    };
    let (a, b) = (run("a"), run("b"));
    let detail = match (a, b) {
        (Some(a), Some(b)) => {
            let (fa, fb) = (files(&a), files(&b));
            let differing = fa
                .iter()
                .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
                .count();
            (fa == fb && differing == 0, format!("{} files compared, {differing} differ", fa.len()))
        }
        _ => (false, "a pipeline step failed".to_string()),
    };
    r.line("end-to-end reproducibility", detail.0, detail.1);
}

fn learned_play(r: &mut Report) {
    let ckpt = cache_dir().join("train/best.ckpt");
    let learned = PreparedTeam::new(team_from_spec(&format!("learned:{}", ckpt.display())).unwrap()).unwrap();
    let noop = PreparedTeam::new(team_from_spec("noop").unwrap()).unwrap();
    let settings = MatchSettings::default();
    let mut wins = 0;
    let mut scores = Vec::new();
    for seed in 0..10 {
        let m = play_match(&learned, &noop, seed, &settings, None).unwrap();
        wins += usize::from(m.outcome == Outcome::Win);
        scores.push(format!("{}-{}", m.goals_for, m.goals_against));
    }
    r.line("learned team vs idle team", wins >= 7, format!("{wins}/10 wins ({})", scores.join(" ")));
}

fn main() {
    std::fs::create_dir_all(cache_dir()).unwrap();
    let mut r = Report { failures: 0 };
    gradients(&mut r);
    loss_identities(&mut r);
    metric_oracles(&mut r);
    let ds = dataset();
    let (model, rec) = trained(&ds);
    training(&mut r, &ds, &model, &rec);
    threshold_fixture(&mut r);
    simulator(&mut r);
    agents(&mut r);
    reproducibility(&mut r);
    learned_play(&mut r);
    println!("{} criteria failed", r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
