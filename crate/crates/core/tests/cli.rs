use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_armrl");

const TINY: &str = r#"
seed = 3
epochs = 3
cycles_per_epoch = 2
rollouts_per_cycle = 2
batches_per_cycle = 4
batch_size = 32
buffer_size = 2000
hidden_layers = [16, 16]
test_rollouts = 2
"#;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("ARMRL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn eval_args(ckpt: &str) -> [&str; 7] {
    [
        "eval",
        "--checkpoint",
        ckpt,
        "--scenario",
        "s2",
        "--reward",
        "sparse",
    ]
}

fn write_tiny(dir: &Path) -> String {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn train_then_eval_prints_outcome_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out = dir.path().join("run");
    let o = run(
        &["train", "--config", &cfg, "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "train failed: {}", stderr(&o));
    for f in ["checkpoint.bin", "replay.bin", "metrics.csv", "config.toml"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("epoch")).count(), 3);

    let ckpt = out.join("checkpoint.bin");
    let o = run(
        &[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--scenario",
            "s2",
            "--reward",
            "dense",
            "--episodes",
            "20",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "eval failed: {}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Success Rate(%)"));
    assert!(text.contains("Case 2 (dense reward)"));
    assert!(text.contains("episodes: 20"));

    let o = run(
        &[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--scenario",
            "s1",
            "--reward",
            "sparse",
            "--episodes",
            "10",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("NA"));
}

#[test]
fn plot_data_has_one_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out = dir.path().join("run");
    let o = run(
        &[
            "train",
            "--quiet",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = dir.path().join("plot.csv");
    let o = run(
        &[
            "plot-data",
            "--log",
            out.join("metrics.csv").to_str().unwrap(),
            "--out",
            table.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&table).unwrap();
    // header plus one line per epoch
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn out_dir_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let env_out = dir.path().join("from_env");
    let o = Command::new(BIN)
        .args(["train", "--quiet", "--config", &cfg, "--out", "ignored"])
        .current_dir(dir.path())
        .env("ARMRL_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_out.join("checkpoint.bin").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn missing_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&eval_args("nope.bin"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).is_empty());
    let err = stderr(&o);
    assert!(
        err.starts_with("error:") && err.contains("nope.bin"),
        "{err}"
    );
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn corrupt_checkpoint_reports_reason() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.bin"), b"ARMRLCKP\x01").unwrap();
    let o = run(&eval_args("bad.bin"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("truncated"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["train", "--bogus"][..],
        &["eval"][..],
        &["eval", "--checkpoint", "x", "--scenario", "s3"][..],
        &["frobnicate"][..],
    ] {
        let o = run(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!stderr(&o).is_empty());
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn invalid_config_is_rejected_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "batch_size = 0\n").unwrap();
    let out = dir.path().join("run");
    let o = run(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("batch_size"));
    assert!(!out.exists());
}

#[test]
fn verify_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).matches("[PASS]").count(), 4);
}
