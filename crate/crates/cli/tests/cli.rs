use std::path::Path;
use std::process::{Command, Output};

use anglekit::dataset::{read_labels, Manifest};
use anglekit::features::read_features;

fn anglekit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anglekit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ANGLEKIT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = anglekit(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["--size", "32,32"];

#[test]
fn velocity_prints_meters_per_second() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["velocity", "--fd", "1000", "--f0", "5e6", "--c", "1540", "--theta", "0"], dir.path());
    assert_eq!(out.trim(), "0.154");

    let out = ok(&["velocity", "--fd", "3246.75", "--f0", "5e6", "--theta", "80", "--delta", "5"], dir.path());
    let lines: Vec<f64> = out.lines().map(|l| l.parse().unwrap()).collect();
    assert!((lines[1] - 0.9924).abs() < 1e-3);

    let o = anglekit(&["velocity", "--fd", "1", "--f0", "5e6", "--theta", "90"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("angle-singular"));

    let o = anglekit(&["velocity", "--fd", "1", "--f0", "-5", "--theta", "10"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["velocity", "--fd", "1", "--f0", "5e6", "--theta", "0", "--bogus"][..],
        &["no-such-command"],
        &["synth"],
        &["velocity", "--fd", "abc", "--f0", "5e6", "--theta", "0"],
    ] {
        let o = anglekit(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn help_lists_defaults_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let top = ok(&["--help"], dir.path());
    let subs = [
        "synth", "split", "ingest", "augment", "features", "train", "eval", "report", "velocity",
        "annotate",
    ];
    for s in subs {
        assert!(top.contains(s), "{s} missing from top-level help");
        let help = ok(&[s, "--help"], dir.path());
        assert!(help.contains("--threads"), "{s}");
        assert!(help.contains("--seed") && help.contains("ANGLEKIT_SEED"), "{s}");
    }
    let train = ok(&["train", "--help"], dir.path());
    for flag in [
        "--epochs <EPOCHS>",
        "--batch-size",
        "--alpha",
        "--beta1",
        "--beta2",
        "--adam-epsilon",
        "--hidden",
        "--dropout",
        "--bn-momentum",
        "--bn-epsilon",
        "--target-scale",
        "--val-fraction",
        "--augmentation",
        "--clahe-tiles",
        "--clahe-clip",
        "--stages",
    ] {
        assert!(train.contains(flag), "{flag}");
    }
    for default in ["[default: 200]", "[default: 32]", "[default: 0.0001]", "[default: 256 64]", "[default: grid-offline]"] {
        assert!(train.contains(default), "{default}");
    }
    let features = ok(&["features", "--help"], dir.path());
    for default in ["[default: 8 8]", "[default: 0.01]", "[default: 8 16 32 64]", "[default: 128 128]"] {
        assert!(features.contains(default), "{default}");
    }
    let annotate = ok(&["annotate", "--help"], dir.path());
    assert!(annotate.contains("[default: 8080]"));
}

#[test]
fn synth_then_grid_augment_gives_2100_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut args = vec!["synth", "--count", "84", "--seed", "7", "--out", "d"];
    args.extend(SMALL);
    ok(&args, p);
    ok(&["augment", "--manifest", "d/manifest.csv", "--mode", "grid", "--out", "a"], p);

    let m = Manifest::read(p.join("a/manifest.csv")).unwrap();
    assert_eq!(m.len(), 2100);
    let origins = m.origin_ids();
    assert_eq!(origins.len(), 84);
    for o in &origins {
        assert_eq!(m.samples.iter().filter(|s| &s.origin_id == o).count(), 25);
    }
    for s in &m.samples {
        let anglekit::dataset::ImageSource::Path(path) = &s.source else {
            panic!("manifest rows are file-backed")
        };
        assert!(path.exists(), "{}", path.display());
    }
    let labels = read_labels(std::fs::File::open(p.join("d/labels.csv")).unwrap()).unwrap();
    let originals = Manifest::read(p.join("d/manifest.csv")).unwrap();
    assert_eq!(labels.len(), 84);
    for (l, s) in labels.iter().zip(&originals.samples) {
        assert_eq!(l.image_id, s.image_id);
        assert!((l.theta_deg - s.theta.value()).abs() < 1e-9);
    }
}

#[test]
fn random_augment_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut args = vec!["synth", "--count", "5", "--out", "d"];
    args.extend(SMALL);
    ok(&args, p);
    for out in ["r1", "r2"] {
        ok(&["augment", "--manifest", "d/manifest.csv", "--mode", "random", "--copies", "3", "--seed", "4", "--out", out], p);
    }
    ok(&["augment", "--manifest", "d/manifest.csv", "--mode", "random", "--copies", "3", "--seed", "5", "--out", "r3"], p);
    let a = std::fs::read(p.join("r1/manifest.csv")).unwrap();
    let b = std::fs::read(p.join("r2/manifest.csv")).unwrap();
    let c = std::fs::read(p.join("r3/manifest.csv")).unwrap();
    assert_eq!(a.replace_paths(), b.replace_paths());
    assert_ne!(a.replace_paths(), c.replace_paths());
    let m = Manifest::read(p.join("r1/manifest.csv")).unwrap();
    assert_eq!(m.len(), 15);
    assert!(m.samples.iter().all(|s| (-60.0..=60.0).contains(&s.applied_rotation)));
}

trait ReplacePaths {
    fn replace_paths(&self) -> String;
}

impl ReplacePaths for Vec<u8> {
    /// The manifest with the output directory name blanked.
    fn replace_paths(&self) -> String {
        String::from_utf8_lossy(self).replace("r1/", "").replace("r2/", "").replace("r3/", "")
    }
}

#[test]
fn env_seed_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let run = |seed_env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_anglekit"));
        cmd.args(args).current_dir(p).env_remove("ANGLEKIT_SEED");
        if let Some(s) = seed_env {
            cmd.env("ANGLEKIT_SEED", s);
        }
        assert!(cmd.output().unwrap().status.success());
    };
    run(Some("11"), &["synth", "--count", "3", "--size", "16,16", "--out", "env"]);
    run(None, &["synth", "--count", "3", "--size", "16,16", "--seed", "11", "--out", "flag"]);
    run(Some("11"), &["synth", "--count", "3", "--size", "16,16", "--seed", "12", "--out", "both"]);
    let read = |d: &str| std::fs::read(p.join(d).join("labels.csv")).unwrap();
    assert_eq!(read("env"), read("flag"));
    assert_ne!(read("both"), read("flag"));
}

#[test]
fn config_file_sets_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("c.json"), r#"{"count": 4, "size": [16, 16], "seed": 3, "out": "cfg"}"#).unwrap();
    assert_eq!(ok(&["synth", "--config", "c.json"], p).trim(), "4");
    ok(&["synth", "--count", "4", "--size", "16,16", "--seed", "3", "--out", "flags"], p);
    assert_eq!(
        std::fs::read(p.join("cfg/labels.csv")).unwrap(),
        std::fs::read(p.join("flags/labels.csv")).unwrap()
    );
    // explicit flags win over the file
    assert_eq!(ok(&["--config", "c.json", "synth", "--count", "2"], p).trim(), "2");

    std::fs::write(p.join("bad.json"), r#"{"not-a-flag": 1}"#).unwrap();
    let o = anglekit(&["--config", "bad.json", "synth", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not-a-flag"));

    let o = anglekit(&["--config", "missing.json", "synth", "--out", "x"], p);
    assert_eq!(o.status.code(), Some(1));
}

fn tiny_dataset(p: &Path) {
    ok(&["synth", "--count", "12", "--size", "32,32", "--out", "d"], p);
    ok(&["split", "--manifest", "d/manifest.csv", "--train-fraction", "0.75", "--out", "s"], p);
    ok(&["augment", "--manifest", "s/train.csv", "--out", "atr"], p);
    ok(&["augment", "--manifest", "s/test.csv", "--out", "ate"], p);
    for (m, f) in [("atr/manifest.csv", "f/train.ft"), ("ate/manifest.csv", "f/test.ft")] {
        ok(&["features", "--manifest", m, "--out", f, "--input-size", "32,32", "--stages", "4,8"], p);
    }
}

#[test]
fn batch_size_one_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny_dataset(p);
    let o = anglekit(
        &["train", "--manifest", "atr/manifest.csv", "--features", "f/train.ft", "--out", "m", "--batch-size", "1"],
        p,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("batch normalization"), "{}", stderr(&o));
    assert!(!p.join("m/model.akpt").exists());

    let o = anglekit(&["train", "--manifest", "atr/manifest.csv", "--out", "m"], p);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--features"));
}

#[test]
fn small_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny_dataset(p);
    let train = |out: &str| {
        ok(
            &["train", "--manifest", "atr/manifest.csv", "--features", "f/train.ft", "--out", out,
              "--epochs", "3", "--hidden", "16,8", "--batch-size", "16"],
            p,
        );
        ok(&["eval", "--model", &format!("{out}/model.akpt"), "--manifest", "ate/manifest.csv",
             "--features", "f/test.ft", "--out", &format!("{out}/preds.csv")], p);
        ok(&["report", "--predictions", &format!("{out}/preds.csv"), "--out", &format!("{out}/report"),
             "--run-config", &format!("{out}/config.json")], p);
    };
    train("m1");
    train("m2");
    for f in ["model.akpt", "history.csv", "config.json", "preds.csv", "report/report.json", "report/scatter.csv"] {
        assert_eq!(
            std::fs::read(p.join("m1").join(f)).unwrap(),
            std::fs::read(p.join("m2").join(f)).unwrap(),
            "{f}"
        );
    }
    let history = std::fs::read_to_string(p.join("m1/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.join("m1/report/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_samples"], 75);
    assert_eq!(report["config"]["training"]["epochs"], 3);
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(p.join("f/train.ft.json")).unwrap()).unwrap();
    assert_eq!(sidecar["kind"], "builtin");
    assert_eq!(sidecar["n_samples"], 225);
}

#[test]
fn random_on_the_fly_trains_from_originals() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny_dataset(p);
    ok(
        &["train", "--manifest", "s/train.csv", "--out", "m", "--augmentation", "random-on-the-fly",
          "--epochs", "2", "--batch-size", "2", "--val-fraction", "0", "--hidden", "8",
          "--dropout", "0", "--input-size", "32,32", "--stages", "4,8"],
        p,
    );
    ok(&["eval", "--model", "m/model.akpt", "--manifest", "ate/manifest.csv", "--features", "f/test.ft", "--out", "p.csv"], p);
    assert_eq!(std::fs::read_to_string(p.join("p.csv")).unwrap().lines().count(), 76);
}

#[test]
fn feature_import_checks_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    tiny_dataset(p);
    ok(&["features", "--manifest", "ate/manifest.csv", "--import", "f/test.ft", "--out", "g/test.ft"], p);
    assert_eq!(
        read_features(p.join("g/test.ft")).unwrap(),
        read_features(p.join("f/test.ft")).unwrap()
    );
    let o = anglekit(&["features", "--manifest", "atr/manifest.csv", "--import", "f/test.ft", "--out", "g/x.ft"], p);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(p.join("junk.ft"), b"NOPE").unwrap();
    let o = anglekit(&["features", "--manifest", "ate/manifest.csv", "--import", "junk.ft", "--out", "g/y.ft"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("format error"), "{}", stderr(&o));
}

#[test]
fn ingest_builds_manifest_from_labels() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["synth", "--count", "3", "--size", "16,16", "--out", "d"], p);
    assert_eq!(ok(&["ingest", "--labels", "d/labels.csv", "--images", "d/images", "--out", "i/manifest.csv"], p).trim(), "3");
    let a = Manifest::read(p.join("i/manifest.csv")).unwrap();
    let b = Manifest::read(p.join("d/manifest.csv")).unwrap();
    assert_eq!(a.len(), 3);
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.image_id, y.image_id);
        assert!((x.theta.value() - y.theta.value()).abs() < 1e-9);
    }
}
