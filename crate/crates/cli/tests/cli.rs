use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fixture")
}

fn emojinet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emojinet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies the fixture, letting `edit` change the train split first.
fn edited_fixture(dir: &Path, edit: impl FnOnce(String) -> String) -> PathBuf {
    let data = dir.join("data");
    fs::create_dir_all(&data).unwrap();
    for f in ["train.tsv", "validation.tsv", "test.tsv", "labels.txt"] {
        fs::copy(fixture().join(f), data.join(f)).unwrap();
    }
    let train = fs::read_to_string(data.join("train.tsv")).unwrap();
    fs::write(data.join("train.tsv"), edit(train)).unwrap();
    data
}

#[test]
fn check_data_summarizes_the_fixture() {
    let o = emojinet(&["check-data", "--data-dir", s(&fixture())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("train            120 examples"), "{out}");
    assert!(out.contains("validation        30 examples"));
    assert!(out.contains("test              50 examples"));
    let heart = out.lines().find(|l| l.starts_with(":heart: ")).unwrap();
    assert_eq!(heart.split_whitespace().collect::<Vec<_>>(), [":heart:", "16", "5", "8"]);
    assert!(out.contains("imbalance ratio (most / least frequent): 5.33"));
}

#[test]
fn check_data_failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let empty = edited_fixture(&dir.path().join("a"), |_| String::new());
    let o = emojinet(&["check-data", "--data-dir", s(&empty)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train.tsv"), "{}", stderr(&o));

    let no_fire = edited_fixture(&dir.path().join("b"), |t| {
        t.lines().filter(|l| !l.ends_with("\t4")).map(|l| format!("{l}\n")).collect()
    });
    let o = emojinet(&["check-data", "--data-dir", s(&no_fire)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":fire:"));

    let o = emojinet(&["check-data", "--data-dir", s(&dir.path().join("nowhere"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let d = fixture();
    for args in [
        vec!["train", "--arch", "rnn", "--data-dir", s(&d)],
        vec!["train", "--arch", "cnn", "--data-dir", s(&d), "--loss", "hinge"],
        vec!["train", "--arch", "cnn", "--data-dir", s(&d), "--lr=-1"],
        vec!["train", "--arch", "cnn", "--data-dir", s(&d), "--preset", "fast"],
        vec!["train", "--data-dir", s(&d)],
        vec!["frobnicate"],
    ] {
        let o = emojinet(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "epochs = two\n").unwrap();
    let o = emojinet(&["train", "--arch", "cnn", "--data-dir", s(&d), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn train_writes_every_artifact_and_evaluate_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ff");
    let o = emojinet(&[
        "train", "--data-dir", s(&fixture()), "--arch", "feedforward", "--epochs", "3", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "model.ckpt", "vocab.txt", "config_resolved", "curves.csv", "curves.svg", "report.txt", "report.json",
        "confusion.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 4);
    let resolved = fs::read_to_string(out.join("config_resolved")).unwrap();
    assert!(resolved.contains("epochs = 3\n") && resolved.contains("optimizer = adam\n"), "{resolved}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["total"], 50);

    let eval_out = dir.path().join("eval");
    let o = emojinet(&[
        "evaluate", "--checkpoint", s(&out.join("model.ckpt")), "--split", "validation", "--limit", "10", "--out",
        s(&eval_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["total"], 10);
    let confusion = fs::read_to_string(eval_out.join("confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 21);

    // a vocabulary from different data is refused
    let other = dir.path().join("other_vocab.txt");
    let o = emojinet(&["build-vocab", "--data-dir", s(&fixture()), "--min-freq", "1", "--out", s(&other)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = emojinet(&["evaluate", "--checkpoint", s(&out.join("model.ckpt")), "--vocab", s(&other)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not the one the checkpoint was trained with"), "{}", stderr(&o));
}

#[test]
fn presets_set_epoch_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (arch, epochs) in [("cnn", 5), ("feedforward", 10)] {
        let out = dir.path().join(arch);
        let o = emojinet(&[
            "train", "--data-dir", s(&fixture()), "--arch", arch, "--preset", "paper", "--seed", "1", "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let resolved = fs::read_to_string(out.join("config_resolved")).unwrap();
        assert!(resolved.contains(&format!("epochs = {epochs}\n")), "{resolved}");
        // early stopping may end the run sooner, never later
        let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
        assert!(curves.lines().count() - 1 <= epochs);
    }
}

/// Checkpoint parameter bytes; the header line also records the run's paths.
fn weights(run: &Path) -> Vec<u8> {
    let bytes = fs::read(run.join("model.ckpt")).unwrap();
    let body = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    bytes[body..].to_vec()
}

#[test]
fn runs_repeat_byte_for_byte_and_from_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["train", "--data-dir", s(&data), "--arch", "cnn", "--epochs", "2"];
        args.extend_from_slice(if extra.is_empty() { &["--seed", "4"] } else { extra });
        let out_s = out.to_str().unwrap().to_string();
        args.extend(["--out", &out_s]);
        let o = emojinet(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        (fs::read(out.join("report.json")).unwrap(), out)
    };
    let (a, out_a) = run("a", &[]);
    let (b, _) = run("b", &[]);
    assert_eq!(a, b);
    let cfg = out_a.join("config_resolved");
    let cfg_s = cfg.to_str().unwrap().to_string();
    let (c, out_c) = run("c", &["--config", &cfg_s]);
    assert_eq!(a, c);
    assert_eq!(weights(&out_a), weights(&out_c));
    let (_, out_d) = run("d", &["--seed", "5"]);
    assert_ne!(weights(&out_a), weights(&out_d));
}

#[test]
fn compare_tabulates_each_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = emojinet(&["compare", "--data-dir", s(&fixture()), "--epochs", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with("model"));
    for arch in ["feedforward", "cnn", "transformer", "multiscale"] {
        assert!(table.lines().any(|l| l.starts_with(arch)), "{table}");
        assert!(out.join(arch).join("report.json").is_file());
    }
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
