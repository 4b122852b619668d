use std::path::Path;
use std::process::{Command, Output};

use owis::formats::{read_checkpoint, read_report};

fn owis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owis"))
        .current_dir(dir)
        .env_remove("OWIS_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = owis(dir, args);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "owis {args:?} failed: {stderr}");
    stderr
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    owis(dir, args).status.code().unwrap()
}

#[test]
fn staged_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("cfg.json"), r#"{"epochs": [2, 2, 2]}"#).unwrap();
    ok(d, &["gen", "--scenes", "10", "--test-scenes", "4", "--seed", "3", "--out", "data"]);
    ok(d, &["split", "--kind", "freq", "--data", "data", "--sizes", "4,4,4", "--out", "split.json"]);
    ok(d, &["train", "--split", "split.json", "--task", "1", "--data", "data", "--config", "cfg.json", "--out", "t1"]);
    assert!(d.join("t1/train_log.json").exists());
    ok(d, &["eval", "--ckpt", "t1/checkpoint.json", "--task", "1", "--data", "data", "--report", "t1.json", "--csv", "t1.csv"]);
    let r1 = read_report(&d.join("t1.json")).unwrap();
    assert!(r1.map_prev.is_none());
    assert!(std::fs::read_to_string(d.join("t1.csv")).unwrap().starts_with("t1_wi,t1_a_ose,t1_u_recall,t1_map_curr"));

    ok(d, &["advance", "--ckpt", "t1/checkpoint.json", "--split", "split.json", "--out", "t2.json"]);
    assert_eq!(read_checkpoint(&d.join("t2.json")).unwrap().learner.state.task, 1);
    ok(d, &["train", "--split", "split.json", "--task", "2", "--data", "data", "--ckpt", "t2.json", "--epochs", "1", "--out", "t2"]);
    ok(d, &["finetune", "--ckpt", "t2/checkpoint.json", "--exemplars", "ex.json", "--data", "data", "--epochs", "1", "--out", "t2ft.json"]);
    assert!(d.join("ex.json").exists());
    let note = ok(d, &["eval", "--ckpt", "t2ft.json", "--task", "2", "--data", "data", "--report", "t2.json.report", "--no-pc", "--no-ct"]);
    assert!(note.contains("no effect"));
    assert!(read_report(&d.join("t2.json.report")).unwrap().map_prev.is_some());

    // The checkpoint is at task 2; claiming task 1 is rejected as bad input.
    assert_eq!(code(d, &["eval", "--ckpt", "t2ft.json", "--task", "1", "--data", "data", "--report", "x.json"]), 2);
}

#[test]
fn same_seed_same_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen", "--scenes", "3", "--seed", "8", "--out", "a"]);
    let out = Command::new(env!("CARGO_BIN_EXE_owis"))
        .current_dir(d)
        .env("OWIS_SEED", "8")
        .args(["gen", "--scenes", "3", "--out", "b"])
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["catalog.json", "train/scene_0000.json"] {
        let (a, b) = (d.join("a").join(f), d.join("b").join(f));
        if a.exists() {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{f}");
        }
    }
    assert_eq!(
        std::fs::read_dir(d.join("a/train")).unwrap().count(),
        std::fs::read_dir(d.join("b/train")).unwrap().count()
    );
}

#[test]
fn oracle_on_handwritten_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("gt.json"),
        r#"{"scenes": [{"id": "s", "voxels": [[0,0,0,0,0,0],[1,0,0,0,0,0],[2,0,0,0,0,0],[3,0,0,0,0,0]],
            "instances": [{"mask_indices": [0, 1], "label": 1}, {"mask_indices": [2, 3], "label": 0}]}]}"#,
    )
    .unwrap();
    std::fs::write(
        d.join("pred.json"),
        r#"{"prev": [], "curr": [1], "scenes": [{"id": "s", "detections": [
            {"label": 1, "confidence": 0.9, "mask_indices": [0, 1]},
            {"label": 0, "confidence": 0.8, "mask_indices": [2, 3]}]}]}"#,
    )
    .unwrap();
    ok(d, &["oracle", "--predictions", "pred.json", "--gt", "gt.json", "--report", "r.json"]);
    let r = read_report(&d.join("r.json")).unwrap();
    assert_eq!(r.map_curr, Some(1.0));
    assert_eq!(r.u_recall, Some(1.0));
    assert_eq!(r.wi, 0.0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // Missing file: I/O failure.
    assert_eq!(code(d, &["protocol", "--config", "nope.json", "--out", "o"]), 1);
    assert_eq!(code(d, &["eval", "--ckpt", "nope.json", "--task", "1", "--data", "nodata", "--report", "r.json"]), 1);
    // Malformed and invalid configs: bad input.
    std::fs::write(d.join("bad.json"), "{\n  \"seeds\": [1,\n}").unwrap();
    assert_eq!(code(d, &["protocol", "--config", "bad.json", "--out", "o"]), 2);
    std::fs::write(d.join("empty.json"), r#"{"seeds": []}"#).unwrap();
    assert_eq!(code(d, &["protocol", "--config", "empty.json", "--out", "o"]), 2);
    // Command-line usage errors come from clap.
    assert_eq!(code(d, &["train"]), 2);
}
