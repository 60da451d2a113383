//! End-to-end checks of the `tabadv` binary: exit codes, staged runs, and
//! resume verbs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tabadv"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config_path() -> PathBuf {
    repo_root().join("configs/synthetic.toml")
}

fn small_config(dir: &Path) -> PathBuf {
    // Shrink the bundled config so the CLI round trip stays quick.
    let text = std::fs::read_to_string(config_path()).unwrap();
    let text = text.replace("per_class = 15", "per_class = 5");
    let text = text.replace(
        "data = \"../data/synthetic.csv\"",
        &format!(
            "data = \"{}\"",
            repo_root().join("data/synthetic.csv").display()
        ),
    );
    let text = text.replace(
        "schema = \"../data/synthetic.schema.toml\"",
        &format!(
            "schema = \"{}\"",
            repo_root().join("data/synthetic.schema.toml").display()
        ),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_accepts_bundled_config() {
    let out = bin()
        .args(["validate", "--config"])
        .arg(config_path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn validate_rejects_broken_config_with_exit_2() {
    let dir = std::env::temp_dir().join("tabadv_cli_bad");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.toml");
    std::fs::write(&path, "master_seed = 1\n").unwrap();
    let out = bin()
        .args(["validate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_exit_3() {
    let dir = std::env::temp_dir().join("tabadv_cli_missing");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = small_config(&dir);
    let text = std::fs::read_to_string(&cfg).unwrap();
    let broken = text.replace("synthetic.csv", "nope.csv");
    let path = dir.join("broken.toml");
    std::fs::write(&path, broken).unwrap();
    let out = bin()
        .args(["validate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn staged_run_and_resume_verbs_agree() {
    let dir = std::env::temp_dir().join("tabadv_cli_roundtrip");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = small_config(&dir);

    // Full run.
    let full_out = dir.join("full");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&full_out)
        .args(["--jobs", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    for artifact in ["report.json", "models.json", "ledgers.json"] {
        assert!(full_out.join(artifact).exists(), "missing {artifact}");
    }
    assert!(full_out.join("plots/perturbation_norms.csv").exists());
    assert!(full_out.join("plots/detection_rates.csv").exists());
    let attributions = std::fs::read_to_string(full_out.join("plots/attributions.csv")).unwrap();
    assert!(
        attributions.lines().count() > 1,
        "attributions.csv has data rows"
    );

    // Staged: train only, then attack / evaluate / stats resume verbs.
    let staged_out = dir.join("staged");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&staged_out)
        .args(["--stage", "train"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(staged_out.join("models.json").exists());
    assert!(!staged_out.join("ledgers.json").exists());

    for verb in ["attack", "evaluate", "stats"] {
        let status = bin()
            .args([verb, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&staged_out)
            .status()
            .unwrap();
        assert!(status.success(), "{verb} failed");
    }

    // The staged pipeline reproduces the full run's report modulo timestamp.
    let normalize = |path: &Path| -> String {
        let text = std::fs::read_to_string(path).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["environment"]["created_at"] = serde_json::Value::String(String::new());
        serde_json::to_string(&value).unwrap()
    };
    assert_eq!(
        normalize(&full_out.join("report.json")),
        normalize(&staged_out.join("report.json"))
    );
}
