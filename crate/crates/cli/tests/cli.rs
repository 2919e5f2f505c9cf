use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tsmil::imaging::RgbImage;
use tsmil::synth::{read_manifest, Split};

const SMALL: &str = r#"{
  "dataset": {"n_per_class": 6, "patients_per_class": 3},
  "experiment": {
    "model": {"hidden": 8, "feature_dim": 8, "init_candidates": 1},
    "pretrain": {"slides_per_class": 2, "tiles_per_class": 30, "train": {"epochs": 2}},
    "train": {"epochs": 3, "warmup_epochs": 2}
  }
}"#;

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("small.json"), SMALL).unwrap();
        Self { _dir: dir, root }
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_tsmil"));
        cmd.current_dir(&self.root).args(["--config", "small.json", "--dataset-dir", "data", "--run-dir", "run"]).args(args);
        cmd.output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn usage_errors_exit_with_two() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["--no-such-flag", "generate"])), 2);
    assert_eq!(code(&ws.run(&["--budget", "0", "generate"])), 2);
    assert_eq!(code(&ws.run(&["--threads", "0", "generate"])), 2);
    assert_eq!(code(&ws.run(&["--variant", "nonsense", "train"])), 2);
    assert_eq!(code(&ws.run(&["preprocess"])), 2, "missing dataset");
    assert_eq!(code(&ws.run(&["eval"])), 2, "missing checkpoint");
    assert_eq!(code(&ws.run(&["--ablation-seeds", "1,2", "ablate"])), 2);
    fs::write(ws.path("bad.json"), r#"{"sed": 1}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tsmil")).current_dir(&ws.root).args(["--config", "bad.json", "generate"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn corrupt_slide_is_a_runtime_error() {
    let ws = Workspace::new();
    ws.ok(&["generate"]);
    let entry = read_manifest(ws.path("data/manifest.jsonl")).unwrap().remove(0);
    fs::write(ws.path("data").join(&entry.path), b"not a png").unwrap();
    let out = ws.run(&["preprocess"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_is_reproducible() {
    let (a, b) = (Workspace::new(), Workspace::new());
    a.ok(&["generate"]);
    b.ok(&["generate"]);
    let (fa, fb) = (files(&a.path("data")), files(&b.path("data")));
    assert_eq!(fa.len(), 18 + 18 + 2);
    assert!(fa == fb, "datasets differ");
    let c = Workspace::new();
    c.ok(&["--seed", "1", "generate"]);
    assert!(files(&c.path("data")) != fa);
}

#[test]
fn train_eval_and_visualize() {
    let ws = Workspace::new();
    ws.ok(&["generate"]);
    ws.ok(&["preprocess"]);
    let tiles = fs::read_to_string(ws.path("run/reports/tiles.csv")).unwrap();
    assert_eq!(tiles.lines().count(), 1 + 18);

    ws.ok(&["--variant", "att-two-stage", "train"]);
    for stage in ["stage1", "stage2"] {
        let log = fs::read_to_string(ws.path(&format!("run/logs/att-two-stage-{stage}.csv"))).unwrap();
        assert_eq!(log.lines().count(), 1 + 3, "{stage} log:\n{log}");
    }
    let checkpoint = files(&ws.path("run/checkpoints/att-two-stage"));
    assert_eq!(code(&ws.run(&["--variant", "att-two-stage", "train"])), 2, "retraining without --force");
    ws.ok(&["--variant", "att-two-stage", "train", "--force"]);
    assert!(files(&ws.path("run/checkpoints/att-two-stage")) == checkpoint, "retraining changed the checkpoint");

    ws.ok(&["--variant", "att-two-stage", "eval", "--split", "test"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.path("run/reports/att-two-stage-test-eval.json")).unwrap()).unwrap();
    let confusion: Vec<Vec<u64>> = serde_json::from_value(report["confusion"].clone()).unwrap();
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..3).map(|i| confusion[i][i]).sum();
    let tests = read_manifest(ws.path("data/manifest.jsonl")).unwrap().into_iter().filter(|e| e.split == Split::Test).count();
    assert_eq!(total as usize, tests);
    assert_eq!(report["accuracy"].as_f64().unwrap(), trace as f64 / total as f64);
    let csv = fs::read_to_string(ws.path("run/reports/att-two-stage-test-confusion.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "truth,benign,low,high");

    let entry = read_manifest(ws.path("data/manifest.jsonl")).unwrap().into_iter().find(|e| e.class.is_cancer()).unwrap();
    ws.ok(&["--variant", "att-two-stage", "visualize", "--slide", &entry.slide_id, "--out", "overlay.png"]);
    let overlay = RgbImage::load_png(ws.path("overlay.png")).unwrap();
    let slide = RgbImage::load_png(ws.path("data").join(&entry.path)).unwrap();
    assert_eq!((overlay.width(), overlay.height()), (slide.width(), slide.height()));
    assert_ne!(overlay, slide);
    assert!(ws.path("overlay.csv").is_file());
    assert_eq!(code(&ws.run(&["--variant", "att-two-stage", "visualize", "--slide", "missing"])), 2);
}
