use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn nirec(stage: &str, workdir: &Path, extra: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nirec"));
    cmd.arg(stage)
        .arg("--config")
        .arg(fixture("toy.toml"))
        .arg("--set")
        .arg(format!("paths.workdir={:?}", workdir.display().to_string()));
    for e in extra {
        cmd.arg("--set").arg(e);
    }
    cmd.output().expect("spawn nirec")
}

fn run_all(workdir: &Path) {
    for stage in ["preprocess", "build-graph", "train", "evaluate", "analyze"] {
        let out = nirec(stage, workdir, &[]);
        assert!(
            out.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn toy_pipeline_trains_and_evaluates_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    run_all(dir.path());
    assert!(start.elapsed() < Duration::from_secs(60), "{:?}", start.elapsed());

    let metrics = String::from_utf8(read(dir.path().join("eval/metrics.txt"))).unwrap();
    assert!(metrics.contains("auc = "), "{metrics}");
    assert!(metrics.contains("[topn]"), "{metrics}");
    let manifest = String::from_utf8(read(dir.path().join("train/run.manifest"))).unwrap();
    assert!(manifest.contains("encoder = gat"));
    let train = String::from_utf8(read(dir.path().join("train/train.manifest"))).unwrap();
    assert!(train.contains("graph.bin\t") && train.contains("checkpoint_sha256"), "{train}");
}

#[test]
fn train_prints_one_line_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["preprocess", "build-graph"] {
        assert!(nirec(stage, dir.path(), &[]).status.success());
    }
    let out = nirec("train", dir.path(), &["train.max_epochs=3", "train.patience=5"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let epochs: Vec<&str> = stdout.lines().filter(|l| l.starts_with("epoch=")).collect();
    assert_eq!(epochs.len(), 3, "{stdout}");
    assert!(epochs[0].contains(" train_loss=") && epochs[0].contains(" val_auc="));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path());
    run_all(b.path());
    for f in [
        "split/train.tsv",
        "graph/graph.bin",
        "train/model.ckpt",
        "train/run.manifest",
        "eval/metrics.txt",
        "eval/topn.tsv",
        "eval/scores.tsv",
        "analyze/entropy_hist.tsv",
        "analyze/case_0.txt",
    ] {
        assert_eq!(read(a.path().join(f)), read(b.path().join(f)), "{f} differs");
    }
}

#[test]
fn missing_triples_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(nirec("preprocess", dir.path(), &[]).status.success());
    let out = nirec("build-graph", dir.path(), &["paths.triples=\"/nonexistent/triples.tsv\"", "model.encoder=gat"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("paths.triples"), "{stderr}");
}

#[test]
fn bad_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = nirec("train", dir.path(), &["train.lr=-1.0", "train.batch_size=0"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("lr must be"), "{stderr}");
    assert!(stderr.contains("batch_size must be positive"), "{stderr}");
    assert!(stderr.contains("graph.bin"), "{stderr}");

    let out = nirec("train", dir.path(), &["train.unknown=1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "u0\ti0\t7\n").unwrap();
    let out = nirec("preprocess", dir.path(), &[&format!("paths.interactions={:?}", bad.display().to_string())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
