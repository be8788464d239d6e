//! Drives the `volreg` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use volreg::io::{parse_config, write_volume, Volume};
use volreg::{DisplacementField, WorldGrid};

const SPEC: &str = "dims = 32 32 32\nspacing = 3 3 3\namplitude = 6\nsigma = 25\nstructures = 60\nkeypoints = 50\nlandmarks = 30\n";

fn volreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volreg")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn phantom_case(dir: &Path, seed: u64) -> PathBuf {
    let spec = dir.join("spec.txt");
    std::fs::write(&spec, SPEC).unwrap();
    let out = dir.join(format!("case{seed}"));
    let o = volreg(&["phantom", "--spec", s(&spec), "--seed", &seed.to_string(), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn json_block(report: &str) -> Value {
    let (_, block) = report.split_once("--- json ---\n").expect("report has a JSON block");
    serde_json::from_str(block).unwrap()
}

fn line_value<'a>(report: &'a str, key: &str) -> &'a str {
    report.lines().find_map(|l| l.strip_prefix(&format!("{key}: "))).unwrap_or_else(|| panic!("no `{key}` line"))
}

#[test]
fn missing_moving_is_a_usage_error() {
    let o = volreg(&["register", "--fixed", "f.mha"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--moving") && err.contains("Usage"), "{err}");
}

#[test]
fn unreadable_input_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.mha");
    let o = volreg(&["register", "--fixed", s(&missing), "--moving", s(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.mha"));
}

#[test]
fn phantom_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ca, cb) = (phantom_case(a.path(), 7), phantom_case(b.path(), 7));
    for f in ["fixed.mha", "moving.mha", "fixed_mask.mha", "moving_mask.mha", "true_field.mha", "keypoints.txt", "landmarks.txt"] {
        assert_eq!(std::fs::read(ca.join(f)).unwrap(), std::fs::read(cb.join(f)).unwrap(), "{f}");
    }
    let c = phantom_case(a.path(), 8);
    assert_ne!(std::fs::read(ca.join("moving.mha")).unwrap(), std::fs::read(c.join("moving.mha")).unwrap());
}

#[test]
fn register_writes_field_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let c = phantom_case(dir.path(), 1);
    let (field, report, warped) = (dir.path().join("u.mha"), dir.path().join("run.txt"), dir.path().join("w.mha"));
    let o = volreg(&[
        "register",
        "--fixed", s(&c.join("fixed.mha")),
        "--moving", s(&c.join("moving.mha")),
        "--fixed-mask", s(&c.join("fixed_mask.mha")),
        "--moving-mask", s(&c.join("moving_mask.mha")),
        "--keypoints", s(&c.join("keypoints.txt")),
        "--out-field", s(&field),
        "--out-warped", s(&warped),
        "--report", s(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(field.exists() && warped.exists());

    let text = std::fs::read_to_string(&report).unwrap();
    let t0: f64 = line_value(&text, "initial_tre_mm").parse().unwrap();
    let t1: f64 = line_value(&text, "tre_mm").parse().unwrap();
    assert!(t1 < t0, "TRE {t0} -> {t1}");
    assert!(text.contains("runtime_s: "));

    let j = json_block(&text);
    assert_eq!(j["tool"], format!("volreg {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(j["seed"], 0);
    assert_eq!(j["inputs"]["keypoints"], s(&c.join("keypoints.txt")));
    assert_eq!(j["history"].as_array().unwrap().len(), 3);
    assert_eq!(j["history"][2]["losses"].as_array().unwrap().len(), 151);
    assert!(j["timings"]["levels_s"].as_array().unwrap().len() == 3);

    // The config snapshot reproduces the run.
    let snapshot = parse_config(j["config"].as_str().unwrap(), Path::new("manifest")).unwrap();
    assert_eq!(snapshot, volreg::RegistrationConfig::default());
    let cfg = dir.path().join("snap.cfg");
    std::fs::write(&cfg, j["config"].as_str().unwrap()).unwrap();
    let again = dir.path().join("u2.mha");
    let o = volreg(&[
        "register",
        "--fixed", s(&c.join("fixed.mha")),
        "--moving", s(&c.join("moving.mha")),
        "--fixed-mask", s(&c.join("fixed_mask.mha")),
        "--moving-mask", s(&c.join("moving_mask.mha")),
        "--keypoints", s(&c.join("keypoints.txt")),
        "--config", s(&cfg),
        "--out-field", s(&again),
        "--report", s(&dir.path().join("run2.txt")),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&field).unwrap(), std::fs::read(&again).unwrap());

    // Held-out landmarks through `evaluate`.
    let o = volreg(&["evaluate", "--field", s(&field), "--keypoints", s(&c.join("landmarks.txt"))]);
    assert!(o.status.success());
    let ev = String::from_utf8(o.stdout).unwrap();
    let l0: f64 = line_value(&ev, "initial_tre_mm").parse().unwrap();
    let l1: f64 = line_value(&ev, "tre_mm").parse().unwrap();
    assert!(l1 < 0.5 * l0, "landmark TRE {l0} -> {l1}");
}

#[test]
fn levels_flag_matches_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let c = phantom_case(dir.path(), 2);
    let cfg = dir.path().join("one.cfg");
    std::fs::write(&cfg, "levels = 1\n").unwrap();
    let (fixed, moving) = (c.join("fixed.mha"), c.join("moving.mha"));
    let run = |extra: &[&str], out: &Path| {
        let mut args = vec!["register", "--fixed", s(&fixed), "--moving", s(&moving)];
        args.extend_from_slice(extra);
        let report = out.with_extension("txt");
        args.extend_from_slice(&["--out-field", s(out), "--report", s(&report), "--deterministic"]);
        let o = volreg(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(&report).unwrap()
    };
    let (a, b) = (dir.path().join("a.mha"), dir.path().join("b.mha"));
    let ra = run(&["--levels", "1"], &a);
    let rb = run(&["--config", s(&cfg)], &b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (ra, rb) = (String::from_utf8(ra).unwrap(), String::from_utf8(rb).unwrap());
    assert_eq!(json_block(&ra)["config"], json_block(&rb)["config"]);
    assert_eq!(line_value(&ra, "levels"), "1");
    assert!(!ra.contains("runtime_s"));

    // A level count beyond the config file is rejected.
    let o = volreg(&[
        "register", "--fixed", s(&c.join("fixed.mha")), "--moving", s(&c.join("moving.mha")),
        "--config", s(&cfg), "--levels", "2",
        "--out-field", s(&dir.path().join("x.mha")), "--report", s(&dir.path().join("x.txt")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_finite_loss_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let c = phantom_case(dir.path(), 3);
    let kp = dir.path().join("bad.txt");
    std::fs::write(&kp, "40 40 40 1e308 1e308 1e308\n").unwrap();
    let o = volreg(&[
        "register", "--fixed", s(&c.join("fixed.mha")), "--moving", s(&c.join("moving.mha")),
        "--keypoints", s(&kp), "--levels", "1",
        "--out-field", s(&dir.path().join("u.mha")), "--report", s(&dir.path().join("r.txt")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
    assert!(!dir.path().join("u.mha").exists());
}

#[test]
fn jacobian_of_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let grid = WorldGrid::new([6, 5, 4], [1.0, 2.0, 3.0], [0.0; 3]).unwrap();
    let field = dir.path().join("zero.mha");
    write_volume(&Volume::Field(DisplacementField::zeros(grid)), &field, None).unwrap();
    let det = dir.path().join("det.mha");
    let o = volreg(&["jacobian", "--field", s(&field), "--out", s(&det)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(line_value(&text, "folding_fraction"), "0");
    assert_eq!(line_value(&text, "det_min"), "1");
    assert_eq!(line_value(&text, "det_max"), "1");
    assert_eq!(line_value(&text, "counted_voxels"), "120");
    let d = volreg::io::volume::read_scalar(&det).unwrap();
    assert!(d.data().iter().all(|&v| v == 1.0));
}

#[test]
fn evaluate_identical_masks() {
    let dir = tempfile::tempdir().unwrap();
    let c = phantom_case(dir.path(), 4);
    let field = dir.path().join("zero.mha");
    let grid = *volreg::io::volume::read_scalar(&c.join("fixed.mha")).unwrap().grid();
    write_volume(&Volume::Field(DisplacementField::zeros(grid)), &field, None).unwrap();
    let mask = c.join("moving_mask.mha");
    let o = volreg(&["evaluate", "--field", s(&field), "--fixed-mask", s(&mask), "--moving-mask", s(&mask)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let labels = json_block(&text)["metrics"]["labels"].as_array().unwrap().clone();
    assert_eq!(labels.len(), 5);
    for l in labels {
        assert_eq!(l["dice"], 1.0);
        assert_eq!(l["asd"], 0.0);
        assert_eq!(l["hausdorff"], 0.0);
    }
    assert_eq!(line_value(&text, "mean_dice"), "1");
}

#[test]
fn warp_with_true_field_reproduces_fixed_labels() {
    let dir = tempfile::tempdir().unwrap();
    let c = phantom_case(dir.path(), 5);
    let out = dir.path().join("warped_mask.mha");
    let o = volreg(&["warp", "--field", s(&c.join("true_field.mha")), "--input", s(&c.join("moving_mask.mha")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let warped = volreg::io::volume::read_labels(&out).unwrap();
    let fixed = volreg::io::volume::read_labels(&c.join("fixed_mask.mha")).unwrap();
    let d = volreg::metrics::dice_per_label(&fixed, &warped).unwrap();
    assert!(d.iter().all(|&x| x > 0.9), "{d:?}");

    let img = dir.path().join("warped.mha");
    let o = volreg(&["warp", "--field", s(&c.join("true_field.mha")), "--input", s(&c.join("moving.mha")), "--out", s(&img)]);
    assert!(o.status.success());
    let o = volreg(&["warp", "--field", s(&c.join("true_field.mha")), "--input", s(&c.join("true_field.mha")), "--out", s(&img)]);
    assert_eq!(o.status.code(), Some(2));
}
