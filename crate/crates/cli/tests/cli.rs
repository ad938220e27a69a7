use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const QUADRATIC: &str = r#"
[find]
batch_size = 4
total_steps = 12
seed = 3

[generator]
kind = "identity"

[reward]
kind = "neg_sq_dist"
target = [1.0, -0.5]
"#;

const SYMMETRIC: &str = r#"
[generator]
kind = "exact_ddim"
stride = 20
schedule = { steps = 1000 }
mixture = { weights = [0.5, 0.5], means = [[-3.0], [3.0]], stds = [[1.0], [1.0]] }

[reward]
kind = "mode_indicator"
component = 1
mixture = { weights = [0.5, 0.5], means = [[-3.0], [3.0]], stds = [[1.0], [1.0]] }
"#;

fn noise_tuner(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noise-tuner"))
        .args(args)
        .env("NOISE_TUNER_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUADRATIC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = noise_tuner(&["train", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for file in ["metrics.csv", "smoothed.csv", "checkpoint.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 13);
    assert!(metrics.starts_with("iter,reward,baseline,calibrated,mean_eta,clip_fraction,mu_norm,mean_sigma"));

    let c = dir.path().join("c");
    let res = noise_tuner(&["train", "--config", &config, "--seed", "4", "--out", c.to_str().unwrap()]);
    assert!(res.status.success());
    assert_ne!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(c.join("metrics.csv")).unwrap());
}

#[test]
fn zero_steps_checkpoints_standard_normal() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", &QUADRATIC.replace("total_steps = 12", "total_steps = 0"));
    let out = dir.path().join("run");
    let res = noise_tuner(&["train", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let ckpt: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ckpt["policy"]["mu"], serde_json::json!([0.0, 0.0]));
    assert_eq!(ckpt["policy"]["log_sigma"], serde_json::json!([0.0, 0.0]));
    assert_eq!(ckpt["iteration"], 0);
}

#[test]
fn eval_reports_hit_rate_on_symmetric_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "sym.toml", SYMMETRIC);
    let out = dir.path().join("eval");
    let res = noise_tuner(&["eval", "--config", &config, "--n", "2000", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let rate = report["hit_rate"]["mean"].as_f64().unwrap();
    assert!((rate - 0.5).abs() < 0.05, "hit rate {rate}");
    assert!(out.join("eval.json").exists());

    let res = noise_tuner(&["eval", "--config", &config, "--n", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn eval_uses_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "q.toml", QUADRATIC);
    let out = dir.path().join("run");
    assert!(noise_tuner(&["train", "--config", &config, "--out", out.to_str().unwrap()]).status.success());
    let ckpt = out.join("checkpoint.json");
    let res = noise_tuner(&[
        "eval", "--config", &config, "--checkpoint", ckpt.to_str().unwrap(), "--n", "100",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["samples"], 100);
    assert!(report.get("hit_rate").is_none());
}

#[test]
fn oracle_subcommands_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "sym.toml", SYMMETRIC);
    let out = dir.path().join("oracle");
    let res = noise_tuner(&["oracle", "hit-rate", "--config", &config, "--n", "1000", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["oracle"], "hit_rate");

    let q = write_config(dir.path(), "q.toml", QUADRATIC);
    let res = noise_tuner(&["oracle", "fd-gradient", "--config", &q, "--n", "500", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    // closed form at mu = 0, sigma = 1: d/dmu = 2 t, d/dlog_sigma = -2
    let g_mu = report["gradient"]["mu"][0]["mean"].as_f64().unwrap();
    assert!((g_mu - 2.0).abs() < 0.2, "{g_mu}");

    let res = noise_tuner(&["oracle", "hit-rate", "--config", &q, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", &format!("[find]\nlambda = -0.1\n{}", &QUADRATIC[8..]));
    let res = noise_tuner(&["train", "--config", &bad]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("find.lambda"));

    let res = noise_tuner(&["train", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}
