use std::path::Path;
use std::process::Command;

fn pucknet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pucknet")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = pucknet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn same_bytes(a: &Path, b: &Path) {
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{} vs {}", a.display(), b.display());
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(pucknet(&["match", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(pucknet(&["bogus"]).status.code(), Some(2));
    assert_eq!(pucknet(&["gen-data", "--grid", "5by5", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one_with_a_tagged_message() {
    let out = pucknet(&["match", "--team", "learned:/no/such.ckpt", "--out", "/tmp/pucknet-never"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]"));
}

#[test]
fn pipeline_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let root = tmp.path().join(tag);
        let data = root.join("data");
        ok(&["gen-data", "--collector", "zamboni", "--grid", "5x5", "--seed", "7", "--out", s(&data)]);
        let labels = std::fs::read_to_string(data.join("labels.jsonl")).unwrap();
        assert_eq!(labels.lines().count(), 100);
        assert_eq!(std::fs::read_dir(data.join("frames")).unwrap().count(), 100);

        let trained = root.join("train");
        ok(&[
            "train", "--dataset", s(&data), "--out", s(&trained), "--seed", "1", "--epochs", "2",
            "--early-stop-tolerance", "1",
        ]);
        let ckpt = trained.join("best.ckpt");
        let team = format!("learned:{}", ckpt.display());
        let game = root.join("match");
        ok(&["match", "--team", &team, "--opponent", "noop", "--seed", "3", "--ticks", "150", "--out", s(&game)]);
        root
    };
    let (a, b) = (run("a"), run("b"));
    for f in [
        "data/labels.jsonl",
        "data/manifest.json",
        "data/frames/000042.png",
        "train/best.ckpt",
        "train/history.json",
        "train/test.json",
        "match/match.json",
        "match/match.md",
        "match/replay.jsonl",
    ] {
        same_bytes(&a.join(f), &b.join(f));
    }

    let frames = tmp.path().join("frames");
    ok(&["render-replay", "--replay", s(&a.join("match/replay.jsonl")), "--out", s(&frames), "--every", "50"]);
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 4);

    let eval = tmp.path().join("eval");
    ok(&["eval", "--dataset", s(&a.join("data")), "--checkpoint", s(&a.join("train/best.ckpt")), "--split", "val", "--out", s(&eval)]);
    assert!(eval.join("eval.json").exists());

    let sweep = tmp.path().join("sweep");
    ok(&["sweep", "--dataset", s(&a.join("data")), "--out", s(&sweep), "--epochs", "2", "--early-stop-tolerance", "1", "--seed", "1"]);
    let md = std::fs::read_to_string(sweep.join("sweep.md")).unwrap();
    assert_eq!(md.lines().count(), 2 + 4);
    assert!(sweep.join("l2_1e-3/best.ckpt").exists());
}

#[test]
fn tournament_reports_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let go = |tag: &str| {
        let out = tmp.path().join(tag);
        ok(&[
            "tournament", "--team", "oracle", "--team", "noop", "--opponent", "scripted", "--rounds", "3", "--ticks", "500",
            "--seed", "5", "--out", s(&out),
        ]);
        out
    };
    let (a, b) = (go("a"), go("b"));
    for f in ["tournament.json", "tournament.md", "matches.json"] {
        same_bytes(&a.join(f), &b.join(f));
    }
    let md = std::fs::read_to_string(a.join("tournament.md")).unwrap();
    assert_eq!(md.lines().count(), 4);
}
