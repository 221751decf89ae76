use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ctfn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctfn")).args(args).output().expect("spawn ctfn")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn synth(dir: &Path, count: usize, size: usize) {
    let o = ctfn(&[
        "synth",
        "--seed",
        "5",
        "--count",
        &count.to_string(),
        "--size",
        &size.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_ok(&o);
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 3, 48);
    let csv = dir.path().join("pr.csv");
    let o = ctfn(&[
        "eval",
        "--pred",
        dir.path().join("gt").to_str().unwrap(),
        "--gt",
        dir.path().join("manifest.tsv").to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_ok(&o);
    assert!(stdout(&o).contains("ODS=1.0000 OIS=1.0000"), "{}", stdout(&o));
    let table = std::fs::read_to_string(csv).unwrap();
    assert!(table.contains("# AGGREGATE"));
    assert!(table.lines().last().unwrap().starts_with("# ODS=1.0000@"));
}

#[test]
fn vgg_head_stays_under_budget() {
    let o = ctfn(&["params", "--config", config("vgg16-shape.cfg").to_str().unwrap()]);
    assert_ok(&o);
    let out = stdout(&o);
    let field = |key: &str| -> usize {
        out.lines()
            .find_map(|l| l.strip_prefix(key)?.trim().parse().ok())
            .unwrap_or_else(|| panic!("no {key} in {out}"))
    };
    assert_eq!(field("backbone "), 14_714_688);
    assert!(field("non_backbone ") < 150_000);
}

#[test]
fn gradcheck_passes() {
    let o = ctfn(&["gradcheck"]);
    assert_ok(&o);
    assert!(stdout(&o).lines().count() >= 20);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(ctfn(&["train"]).status.code(), Some(2));
    assert_eq!(ctfn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ctfn(&["synth", "--out", "x", "--count", "many"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let o = ctfn(&["eval", "--pred", dir.path().to_str().unwrap(), "--gt", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.tsv"));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "[backbone]\npreset = \"tiny\"\nwidth = 3\n").unwrap();
    assert_eq!(ctfn(&["params", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn synth_train_predict_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let pred = dir.path().join("pred");
    synth(&data, 2, 32);
    let manifest = data.join("manifest.tsv");

    let o = ctfn(&[
        "train",
        "--config",
        config("tiny.cfg").to_str().unwrap(),
        "--data",
        manifest.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--epochs",
        "2",
    ]);
    assert_ok(&o);
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3, "{log}");
    assert!(run.join("best.ckpt").exists() && run.join("final.ckpt").exists());

    for id in ["0000", "0001"] {
        let image = data.join("images").join(format!("{id}.png"));
        let o = ctfn(&[
            "predict",
            "--ckpt",
            run.join("final.ckpt").to_str().unwrap(),
            "--image",
            image.to_str().unwrap(),
            "--out",
            pred.to_str().unwrap(),
        ]);
        assert_ok(&o);
        for side in 1..=5 {
            assert!(pred.join(format!("{id}_side{side}.pgm")).exists());
        }
    }

    let o = ctfn(&["eval", "--pred", pred.to_str().unwrap(), "--gt", manifest.to_str().unwrap()]);
    assert_ok(&o);
    assert!(stdout(&o).starts_with("ODS="));
    assert!(pred.join("pr.csv").exists());
}
