use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tmoe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmoe"))
        .current_dir(dir)
        .env_remove("TMOE_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_CONFIG: &str = r#"{
  "version": 1,
  "data": {"path": "data.csv"},
  "split": "general",
  "model": {
    "patch": {"lookback": 32, "patch_len": 8, "stride": 8},
    "num_layers": 1,
    "d_ff": 16,
    "horizon": 8,
    "tmoe": {"d_model": 8, "num_heads": 2, "top_k": 2}
  },
  "train": {"epochs": 1, "batch_size": 16, "lr": 0.001},
  "output_dir": "out"
}"#;

/// Temp dir holding a small synthetic series and a matching config.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    let o = tmoe(
        dir.path(),
        &["synth", "--periods", "12", "--noise", "0.1", "--T", "400", "--seed", "3", "--out", "data.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(dir.path().join("cfg.json"), SMALL_CONFIG).unwrap();
    dir
}

#[test]
fn gradcheck_tiny_passes() {
    let dir = TempDir::new().unwrap();
    let o = tmoe(dir.path(), &["gradcheck", "--tiny", "--out", "gc"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("max rel. error"));
    let suite = read_json(dir.path().join("gc/gradcheck.json"));
    assert_eq!(suite["checks"].as_array().unwrap().len(), 3);
    assert_eq!(read_json(dir.path().join("gc/run.json"))["command"], "gradcheck");
}

#[test]
fn synth_then_train_writes_checkpoint_and_manifest() {
    let dir = workspace();
    let o = tmoe(dir.path(), &["train", "--config", "cfg.json", "--seed", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let ckpt = std::fs::read(out.join("model.ckpt")).unwrap();
    assert_eq!(&ckpt[..4], b"TMOE");
    let manifest = read_json(out.join("run.json"));
    assert_eq!(manifest["tool"], "tmoe");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["train"]["seed"], 11);
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(read_json(out.join("history.json"))["epochs"].as_array().unwrap().len(), 1);
}

#[test]
fn training_is_reproducible_from_the_command_line() {
    let dir = workspace();
    let run = |out: &str| {
        let o = tmoe(dir.path(), &["train", "--config", "cfg.json", "--out", out, "--workers", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("model.ckpt")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn seed_env_is_a_fallback_only() {
    let dir = workspace();
    let with_env = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_tmoe"))
            .current_dir(dir.path())
            .env("TMOE_SEED", "77")
            .args(args)
            .output()
            .unwrap()
    };
    let o = with_env(&["train", "--config", "cfg.json", "--out", "env"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(dir.path().join("env/run.json"))["seed"], 77);
    let o = with_env(&["train", "--config", "cfg.json", "--out", "flag", "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(dir.path().join("flag/run.json"))["seed"], 5);
}

#[test]
fn eval_and_predict_write_outputs() {
    let dir = workspace();
    assert!(tmoe(dir.path(), &["train", "--config", "cfg.json"]).status.success());
    let o = tmoe(dir.path(), &["eval", "--config", "cfg.json", "--checkpoint", "out/model.ckpt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(dir.path().join("out/eval.json"));
    assert_eq!(report["model"]["schema_version"], 1);
    assert_eq!(report["baseline"]["variant"], "repeat_last");
    assert_eq!(report["model"]["horizons"][0]["horizon"], 8);

    let o = tmoe(dir.path(), &["predict", "--config", "cfg.json", "--checkpoint", "out/model.ckpt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/forecast.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("window_id,channel,step,prediction,truth"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len() % 8, 0);
    // With stride 1 the final row is the last step of the last test window,
    // whose truth is the final value of the file in its original units.
    let data = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let field = |line: &str, i: usize| -> f64 { line.split(',').nth(i).unwrap().parse().unwrap() };
    let last_value = field(data.lines().last().unwrap(), 1);
    let last_truth = field(rows.last().unwrap(), 4);
    assert!((last_value - last_truth).abs() < 1e-4, "{last_value} vs {last_truth}");
}

#[test]
fn ablation_commands_write_tables() {
    let dir = workspace();
    let o = tmoe(dir.path(), &["ablate-attention", "--config", "cfg.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/ablate_attention.csv")).unwrap();
    assert!(csv.starts_with("arm,horizon,mse,mae\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2);

    let o = tmoe(dir.path(), &["sweep-topk", "--config", "cfg.json", "--k", "1,4", "--reference-seeds", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reference = std::fs::read_to_string(dir.path().join("out/sweep_topk_reference.csv")).unwrap();
    assert!(reference.starts_with("horizon,seeds,mse_mean"));
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let dir = TempDir::new().unwrap();
    let o = tmoe(dir.path(), &["train", "--config", "no/such.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no/such.json"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_and_unknown_config_key_are_rejected() {
    let dir = workspace();
    let o = tmoe(dir.path(), &["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));

    let bad = SMALL_CONFIG.replace("\"num_layers\"", "\"num_layerz\"");
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let o = tmoe(dir.path(), &["train", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("num_layerz"), "{}", stderr(&o));
}

#[test]
fn invalid_values_exit_one() {
    let dir = workspace();
    let o = tmoe(dir.path(), &["train", "--config", "cfg.json", "--lr", "-1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = tmoe(dir.path(), &["sweep-topk", "--config", "cfg.json", "--k", "0"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn eval_rejects_a_checkpoint_from_another_config() {
    let dir = workspace();
    assert!(tmoe(dir.path(), &["train", "--config", "cfg.json"]).status.success());
    let other = SMALL_CONFIG.replace("\"d_ff\": 16", "\"d_ff\": 24");
    std::fs::write(dir.path().join("other.json"), other).unwrap();
    let o = tmoe(dir.path(), &["eval", "--config", "other.json", "--checkpoint", "out/model.ckpt"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn help_exits_zero() {
    let dir = TempDir::new().unwrap();
    let o = tmoe(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ablate-attention"));
}

#[test]
fn bundled_configs_run() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = TempDir::new().unwrap();
    for name in ["etth1_excerpt.json", "sinusoid.json"] {
        let cfg = configs.join(name);
        let out = dir.path().join(name);
        let o = tmoe(
            dir.path(),
            &["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--max-steps", "2"],
        );
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(out.join("model.ckpt").exists());
    }
}
