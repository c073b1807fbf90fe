use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salient3d")).current_dir(cwd).args(args).output().unwrap()
}

fn ok(cwd: &Path, args: &[&str]) -> Value {
    let out = run(cwd, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "one JSON line expected: {stdout}");
    serde_json::from_str(&stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn ncut_chain_finds_the_object_and_trains_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = ok(d, &["synth", "--seed", "7"]);
    assert!(synth["foreground"].as_u64().unwrap() > 0);
    let fused = ok(d, &["fuse"]);
    assert!(fused["points"].as_u64().unwrap() > 0);
    let seg = ok(d, &["segment-ncut"]);
    assert!(seg["foreground"].as_u64().unwrap() > 0);
    ok(d, &["box", "--seed", "7"]);
    let pseudo = ok(d, &["pseudo-labels"]);
    assert!(pseudo["positive"].as_u64().unwrap() > 0 && pseudo["negative"].as_u64().unwrap() > 0);

    let ap = ok(d, &["eval-detection"]);
    assert_eq!(ap.as_object().unwrap().len(), 2);
    assert_eq!(ap["ap@0.5"], 1.0);

    let trained = ok(d, &["train", "--steps", "5"]);
    assert!(d.join("weights.artw").is_file());
    let log = fs::read_to_string(d.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(trained["final_loss"].as_f64().unwrap().is_finite());
    let t = ok(d, &["segment-transformer", "--weights", "weights.artw", "--out", "t.ply"]);
    assert_eq!(t["points"], fused["points"]);
}

#[test]
fn missing_weights_is_a_contract_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--foreground-points", "40", "--ground-points", "40", "--clutter-points", "10"]);
    ok(dir.path(), &["fuse"]);
    let out = run(dir.path(), &["segment-transformer"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("weights"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["fuse"])), 2);
}

#[test]
fn usage_errors_and_help() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 64);
    assert_eq!(code(&run(dir.path(), &[])), 64);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["box", "--ransac-iters", "many"])), 1);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.cfg"), "# scene\nseed = 3\noutput_dir = from_file\n").unwrap();
    ok(d, &["--config", "a.cfg", "synth", "--foreground-points", "30", "--ground-points", "30", "--clutter-points", "5"]);
    assert!(d.join("from_file").is_dir());
    ok(d, &["--config", "a.cfg", "--output-dir", "from_flag", "synth", "--foreground-points", "30", "--ground-points", "30", "--clutter-points", "5"]);
    assert!(d.join("from_flag").is_dir());
    // Same seed from the file, so the two scenes agree.
    let a = fs::read(d.join("from_file/gt_box.json")).unwrap();
    assert_eq!(a, fs::read(d.join("from_flag/gt_box.json")).unwrap());

    fs::write(d.join("bad.cfg"), "colour = red\n").unwrap();
    let out = run(d, &["--config", "bad.cfg", "synth"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

const SAMPLES: &str = r#"{
  "reference": [[0,0,0],[0.1,0,0],[0.2,0,0],[0,0.1,0],[0.1,0.1,0],[0.2,0.1,0],
                [0,0,0.1],[0.1,0,0.1],[0.2,0,0.1],[0,0.1,0.1],[0.1,0.1,0.1],[0.2,0.1,0.1]],
  "ground": {"points": [[0,0,-0.3]], "sdf": [0.1]},
  "foreground": {"points": [[0.1,0.1,0.3]], "sdf": [0.5], "gradients": [[0,0,2]]},
  "opacities": [0.5],
  "l_color": 0.25
}"#;

#[test]
fn losses_eval_matches_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("s.json"), SAMPLES).unwrap();
    let base = ["losses-eval", "--samples", "s.json", "--knn-k", "1", "--lambda", "0", "--epsilon", "0.1"];
    let v = ok(d, &base);
    let close = |key: &str, want: f64| assert!((v[key].as_f64().unwrap() - want).abs() < 1e-9, "{key}: {}", v[key]);
    // Nearest reference points sit at distance 0.3 and 0.2.
    close("l_g", 0.2);
    close("l_fg", 0.3);
    close("l_eik", 1.0);
    let l_bin = 2.0 * 0.6f64.ln() - 0.1f64.ln() - 1.1f64.ln();
    close("l_bin", l_bin);
    close("total", 0.25 + 0.1 * (1.0 + 0.2 + 0.3 + l_bin));

    let annealed = ok(d, &[&base[..], &["--step", "5", "--anneal-steps", "10"]].concat());
    let w = &annealed["weights"];
    assert_eq!(w["alpha"], 0.1);
    assert_eq!(w["zeta"], 0.1);
    assert!((w["beta"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert!((w["gamma"].as_f64().unwrap() - 0.05).abs() < 1e-12);

    fs::write(d.join("typo.json"), r#"{"l_colour": 1.0}"#).unwrap();
    assert_eq!(code(&run(d, &["losses-eval", "--samples", "typo.json"])), 1);
}
