use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const TINY: &str = r#"
seed = 5

[paths]
data_root = "data"
dataset = "work/dataset.safetensors"
artifact_dir = "work/model"
report_dir = "work/report"
output_dir = "work/generated"

[extraction]
min_category_count = 1

[model]
attention_head_size = 4
feedforward_dim = 16
attention_heads = 2
condition_embedding_dim = 4
conv_channels = 8
recurrent_hidden = 8
transformer_blocks = 1

[train]
epochs = 2
batch_size = 16
learning_rate = 0.001
beta_warmup_epochs = 1
"#;

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("{TINY}{extra}")).unwrap();
    (dir, cfg)
}

fn roundgen(cfg: &Path, args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_roundgen"))
        .arg("--config")
        .arg(cfg)
        .args(args)
        .env_remove("ROUNDGEN_DATA_ROOT")
        .output()
        .unwrap();
    if !out.status.success() {
        eprintln!("{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap()
}

/// Relative path to contents for every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn first_category(work: &Path) -> u32 {
    let vocab: Vec<u32> = serde_json::from_str(&fs::read_to_string(work.join("model/vocabulary.json")).unwrap()).unwrap();
    vocab[0]
}

fn full_run(cfg: &Path, work: &Path) {
    assert_eq!(roundgen(cfg, &["synth", "--recordings", "2", "--vehicles", "40"]), 0);
    assert_eq!(roundgen(cfg, &["extract"]), 0);
    assert_eq!(roundgen(cfg, &["train"]), 0);
    let c = first_category(work).to_string();
    assert_eq!(roundgen(cfg, &["generate", "--condition", &c, "--count", "6"]), 0);
    let gen = work.join("generated");
    assert_eq!(
        roundgen(cfg, &["evaluate", "--set-a", "dataset:test", "--set-b", gen.to_str().unwrap()]),
        0
    );
    let recon = work.join("recon");
    assert_eq!(
        roundgen(
            cfg,
            &["evaluate", "--set-a", "dataset:validation", "--reconstruct", "--out", recon.to_str().unwrap()]
        ),
        0
    );
    assert_eq!(roundgen(cfg, &["traverse", "--condition", &c]), 0);
}

#[test]
fn full_pipeline_is_reproducible() {
    let (a, cfg_a) = setup("");
    let (b, cfg_b) = setup("");
    full_run(&cfg_a, &a.path().join("work"));
    full_run(&cfg_b, &b.path().join("work"));

    let work = a.path().join("work");
    let generated = snapshot(&work.join("generated"));
    assert_eq!(generated.keys().filter(|k| k.to_string_lossy().starts_with("scenario_")).count(), 6);
    assert!(generated.contains_key(Path::new("manifest.json")));
    let report = snapshot(&work.join("report"));
    for f in ["kpi_a.csv", "kpi_b.csv", "pet_hist_a.csv", "pet_hist_b.csv", "pet_vs_ttc.csv"] {
        assert!(report.contains_key(Path::new(f)), "{f} missing");
    }
    assert!(!report.contains_key(Path::new("rmse.csv")));
    let traversals = report.keys().filter(|k| k.to_string_lossy().starts_with("traversal_dim")).count();
    assert_eq!(traversals, 20);
    let grid = String::from_utf8(report[Path::new("traversal_dim0.csv")].clone()).unwrap();
    assert_eq!(grid.lines().count(), 1 + 5 * 234);
    assert!(snapshot(&work.join("recon")).contains_key(Path::new("rmse.csv")));

    let kpi_rows = String::from_utf8(report[Path::new("kpi_b.csv")].clone()).unwrap().lines().count();
    assert_eq!(kpi_rows, 1 + 6);

    let mut sa = snapshot(a.path());
    let mut sb = snapshot(b.path());
    // The config file names its own directory nowhere, so whole trees compare.
    sa.remove(Path::new("run.toml"));
    sb.remove(Path::new("run.toml"));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(sb[k] == *v, "{} differs between runs", k.display());
    }
}

#[test]
fn evaluating_a_set_against_itself_gives_identical_histograms() {
    let (dir, cfg) = setup("");
    assert_eq!(roundgen(&cfg, &["synth", "--vehicles", "60"]), 0);
    assert_eq!(roundgen(&cfg, &["extract"]), 0);
    assert_eq!(
        roundgen(&cfg, &["evaluate", "--set-a", "dataset:train", "--set-b", "dataset:train", "--paired"]),
        0
    );
    let report = snapshot(&dir.path().join("work/report"));
    assert_eq!(report[Path::new("pet_hist_a.csv")], report[Path::new("pet_hist_b.csv")]);
    let rmse = String::from_utf8(report[Path::new("rmse.csv")].clone()).unwrap();
    assert!(rmse.lines().skip(1).all(|l| l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0)));
}

#[test]
fn out_of_range_dimension_is_an_argument_error() {
    let (dir, cfg) = setup("");
    assert_eq!(roundgen(&cfg, &["synth", "--vehicles", "40"]), 0);
    assert_eq!(roundgen(&cfg, &["extract"]), 0);
    assert_eq!(roundgen(&cfg, &["train"]), 0);
    let c = first_category(&dir.path().join("work")).to_string();
    let out = dir.path().join("trav");
    assert_eq!(
        roundgen(&cfg, &["traverse", "--condition", &c, "--dims", "0,25", "--out", out.to_str().unwrap()]),
        1
    );
    assert!(!out.exists());
    assert_eq!(roundgen(&cfg, &["generate", "--condition", "79"]), 1);
    assert!(!dir.path().join("work/generated").exists());
}

#[test]
fn invalid_config_is_rejected_before_any_output() {
    let (dir, cfg) = setup("[kpi]\npet_bin_width = 0.0\n");
    assert_eq!(roundgen(&cfg, &["synth"]), 1);
    assert!(!dir.path().join("data").exists());

    let (dir, cfg) = setup("bogus = 1\n");
    assert_eq!(roundgen(&cfg, &["synth"]), 1);
    assert!(!dir.path().join("data").exists());
}

#[test]
fn parse_errors_and_help() {
    let (_dir, cfg) = setup("");
    assert_eq!(roundgen(&cfg, &["frobnicate"]), 1);
    assert_eq!(roundgen(&cfg, &["generate"]), 1);
    assert_eq!(roundgen(&cfg, &["--help"]), 0);
}

#[test]
fn runtime_failures_exit_2() {
    let (dir, cfg) = setup("");
    assert_eq!(roundgen(&cfg, &["train"]), 2, "no dataset yet");
    assert_eq!(roundgen(&cfg, &["synth", "--vehicles", "40"]), 0);
    assert_eq!(roundgen(&cfg, &["extract"]), 0);
    let model = dir.path().join("work/model");
    fs::create_dir_all(&model).unwrap();
    fs::write(model.join(".lock"), "").unwrap();
    assert_eq!(roundgen(&cfg, &["train"]), 2, "locked artifact dir");
    assert!(model.join(".lock").exists());
    assert!(!model.join("weights.safetensors").exists());
}

#[test]
fn environment_overrides_the_data_root() {
    let (dir, cfg) = setup("");
    let elsewhere = dir.path().join("elsewhere");
    let status = Command::new(env!("CARGO_BIN_EXE_roundgen"))
        .arg("--config")
        .arg(&cfg)
        .arg("synth")
        .env("ROUNDGEN_DATA_ROOT", &elsewhere)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(elsewhere.join("00_tracks.csv").exists());
    assert!(elsewhere.join("00_routes.csv").exists());
    assert!(!dir.path().join("data").exists());
}

#[test]
fn resume_extends_the_history() {
    let (dir, cfg) = setup("");
    assert_eq!(roundgen(&cfg, &["synth", "--vehicles", "40"]), 0);
    assert_eq!(roundgen(&cfg, &["extract"]), 0);
    assert_eq!(roundgen(&cfg, &["train"]), 0);
    assert_eq!(roundgen(&cfg, &["train", "--resume", "1"]), 0);
    let history = fs::read_to_string(dir.path().join("work/model/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 3);
}
