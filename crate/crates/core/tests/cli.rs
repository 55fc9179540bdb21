use std::path::Path;
use std::process::{Command, Output};

fn eegart(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegart"))
        .arg("--out")
        .arg(root)
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("EEGART_ROOT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: [&str; 4] = ["--set", "synth.n_patients=2", "--set", "synth.duration_s=30"];

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eegart(dir.path(), &["--help"])), 0);
    assert_eq!(code(&eegart(dir.path(), &[])), 1);
    assert_eq!(code(&eegart(dir.path(), &["--bogus", "synth"])), 1);
    assert_eq!(code(&eegart(dir.path(), &["--window-len", "2", "synth"])), 1);
    assert_eq!(code(&eegart(dir.path(), &["--type", "blink", "synth"])), 1);
    let o = eegart(dir.path(), &["--set", "synth.no_such_key=1", "synth"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no_such_key"), "{}", stderr(&o));
    assert_eq!(code(&eegart(dir.path(), &["--set", "synth.n_patients=many", "synth"])), 1);
    assert_eq!(code(&eegart(dir.path(), &["train-segment"])), 1);
}

#[test]
fn missing_prerequisites_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for args in [
        &["preprocess"][..],
        &["train-channel"],
        &["extract-features"],
        &["train-segment", "--mode", "binary"],
        &["eval"],
    ] {
        let o = eegart(root, args);
        assert_eq!(code(&o), 3, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("eegart "), "{args:?} should name the step to run: {}", stderr(&o));
    }
    // No stale lock is left behind by failed runs.
    assert!(!root.join(".eegart.lock").exists());
}

#[test]
fn zero_event_corpus_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = TINY.to_vec();
    for t in ["chew", "elec", "eyem", "musc", "shiv"] {
        args.push("--set");
        args.push(Box::leak(format!("synth.events.{t}=0").into_boxed_str()));
    }
    args.push("synth");
    let o = eegart(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("reports/corpus_summary.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let types: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(types, ["chew", "elec", "eyem", "musc", "shiv", "bckg", "total"]);
    for r in &rows[..5] {
        assert_eq!(r[2], "0", "{r:?}");
    }
    assert_eq!(rows[5][3], "60.0");
    assert!(stdout(&o).contains("Background"));
}

#[test]
fn lock_conflict_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(".eegart.lock"), "1\n").unwrap();
    let mut args = TINY.to_vec();
    args.push("synth");
    let o = eegart(dir.path(), &args);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("locked"), "{}", stderr(&o));
    assert!(!dir.path().join("corpus").exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "[synth]\nn_patients = 3\nduration_s = 20.0\nseed = 4\n").unwrap();
    let cfg_s = cfg.to_str().unwrap();
    let root = dir.path().join("exp");
    let o = eegart(&root, &["--config", cfg_s, "--set", "synth.n_patients=1", "synth"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = std::fs::read_dir(root.join("corpus"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "eegr"))
        .count();
    assert_eq!(recs, 1);
    let rec = eegart::dataio::load_recording(&root.join("corpus/synth000.eegr")).unwrap();
    assert_eq!(rec.duration_s(), 20.0);

    std::fs::write(&cfg, "[synth\n").unwrap();
    assert_eq!(code(&eegart(&root, &["--config", cfg_s, "synth"])), 1);
    assert_eq!(code(&eegart(&root, &["--config", "/no/such/file.toml", "synth"])), 1);
}

#[test]
fn channel_training_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let quick = [
        "--set",
        "synth.n_patients=3",
        "--set",
        "synth.duration_s=40",
        "--set",
        "train.max_epochs=1",
        "--set",
        "train.max_train_per_class=16",
        "--set",
        "train.max_val_per_class=8",
        "--set",
        "train.probe_size=8",
        "--type",
        "eyem",
        "--window-len",
        "1",
    ];
    let run = |cmd: &[&str]| {
        let mut a = quick.to_vec();
        a.extend_from_slice(cmd);
        eegart(root, &a)
    };
    for step in [&["synth"][..], &["preprocess"], &["train-channel"]] {
        let o = run(step);
        assert_eq!(code(&o), 0, "{step:?}: {}", stderr(&o));
    }
    let model = root.join("models");
    let stamp = |p: &Path| {
        std::fs::read_dir(p)
            .unwrap()
            .map(|e| std::fs::read(e.unwrap().path()).unwrap())
            .collect::<Vec<_>>()
    };
    let before = stamp(&model);
    let o = run(&["train-channel"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    assert_eq!(stamp(&model), before);
    let o = run(&["--force", "train-channel"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    // Detection needs segment models that were never trained.
    let rec = root.join("corpus/synth000.eegr");
    let o = run(&["detect", rec.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}
