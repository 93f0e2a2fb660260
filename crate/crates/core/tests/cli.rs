use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const BIN: &str = env!("CARGO_BIN_EXE_affect-e2e");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("AFFECT_E2E_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn path(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }
}

/// A small synthetic corpus and one trained checkpoint, shared by the tests below.
fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let ws = Workspace { _dir: dir, root };
        let corpus = ws.path("corpus");
        ok(&["synth", "--out", &corpus, "--seed", "4", "--train-per-class", "4", "--test-per-class", "2"]);
        ok_owned(&train_args(&ws, "a.afe"));
        ws
    })
}

fn train_args(ws: &Workspace, out: &str) -> Vec<String> {
    [
        "train", "--task", "emotion", "--front-end", "raw", "--manifest", &ws.path("corpus/manifest.csv"),
        "--out", &ws.path(out), "--seed", "7", "--filters", "8", "--epochs", "2", "--lr", "0.001",
    ]
    .map(String::from)
    .to_vec()
}

fn ok_owned(args: &[String]) -> Output {
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let ws = workspace();
    let out = ok_owned(&train_args(ws, "b.afe"));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seed") && stderr.contains("lr"), "resolved config not printed:\n{stderr}");
    assert_eq!(std::fs::read(ws.path("a.afe")).unwrap(), std::fs::read(ws.path("b.afe")).unwrap());
}

#[test]
fn eval_writes_per_language_sections() {
    let ws = workspace();
    let out = ok(&["eval", "--checkpoint", &ws.path("a.afe"), "--manifest", &ws.path("corpus/manifest.csv")]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("method,language,class,P,R,F1\n"), "{csv}");
    for section in ["la", "lb", "lc", "overall"] {
        assert!(csv.lines().any(|l| l.split(',').nth(1) == Some(section)), "missing {section}");
    }
    let again = ok(&["eval", "--checkpoint", &ws.path("a.afe"), "--manifest", &ws.path("corpus/manifest.csv")]);
    assert_eq!(csv.as_bytes(), &again.stdout[..]);
}

#[test]
fn predict_prints_a_distribution() {
    let ws = workspace();
    let wav = std::fs::read_dir(ws.root.join("corpus/la")).unwrap().next().unwrap().unwrap().path();
    let out = ok(&["predict", "--checkpoint", &ws.path("a.afe"), "--wav", &wav.display().to_string()]);
    let text = String::from_utf8(out.stdout).unwrap();
    let probs: Vec<f64> = text
        .lines()
        .filter_map(|l| l.split(',').nth(1)?.parse().ok())
        .collect();
    assert_eq!(probs.len(), 4, "{text}");
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn analysis_exports_have_headers() {
    let ws = workspace();
    let ck = ws.path("a.afe");
    let manifest = ws.path("corpus/manifest.csv");
    let filters = ok(&["analyze-filters", "--checkpoint", &ck]).stdout;
    assert!(filters.starts_with(b"channel,filter_index,sorted_rank,peak_hz,bin_0_db"));
    let acts = ok(&["analyze-activations", "--checkpoint", &ck, "--manifest", &manifest]).stdout;
    assert!(acts.starts_with(b"sample_id,layer,frame_index,time_s,w_t\n"));
    let out = ws.path("emb.csv");
    ok(&["export-embeddings", "--checkpoint", &ck, "--manifest", &manifest, "--layers", "pool0,fc", "--out", &out]);
    let emb = std::fs::read_to_string(out).unwrap();
    assert!(emb.starts_with("sample_id,language,label,layer,v0"));
    // 24 test samples, two layers each
    assert_eq!(emb.lines().count(), 1 + 24 * 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let ws = workspace();
    let cfg = ws.path("run.cfg");
    std::fs::write(&cfg, "# recipe\nepochs = 9\nlr=0.5\nfilters=8\n").unwrap();
    let mut args = train_args(ws, "c.afe");
    args.extend(["--config".into(), cfg]);
    ok_owned(&args);
    assert_eq!(std::fs::read(ws.path("a.afe")).unwrap(), std::fs::read(ws.path("c.afe")).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--bogus-flag", "1"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn missing_files_are_named_in_the_error() {
    let missing = Path::new("/nonexistent/dir/model.afe");
    let out = run(&["analyze-filters", "--checkpoint", &missing.display().to_string()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/dir/model.afe"));
}
