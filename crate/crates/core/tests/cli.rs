//! End-to-end CLI checks: artifact production, format expectations, and the
//! documented exit codes.

use std::path::Path;
use std::process::Command;

fn advgame() -> Command {
    Command::new(env!("CARGO_BIN_EXE_advgame"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn gen_data_writes_a_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("circles.csv");
    let output = advgame()
        .args(["gen-data", "--family", "circles", "--n", "50", "--seed", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("fingerprint"), "{stdout}");

    let text = read(&out);
    assert!(text.starts_with("x1,x2,label\n"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn unknown_family_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nope.csv");
    let output = advgame()
        .args(["gen-data", "--family", "spirals", "--n", "50", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("spirals"), "{stderr}");
}

#[test]
fn invalid_config_value_names_the_field_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // Build a config with several violations via reproduce --config.
    let cfg_path = dir.path().join("bad.json");
    let base = advgame()
        .args(["reproduce", "circles-linf", "--epochs", "1", "--n", "20"])
        .arg("--out")
        .arg(dir.path().join("probe"))
        .output()
        .unwrap();
    assert!(base.status.success());
    let mut cfg: serde_json::Value = serde_json::from_str(&read(
        &dir.path().join("probe").join("config.resolved.json"),
    ))
    .unwrap();
    cfg["constraint"]["delta"] = serde_json::json!(-0.5);
    cfg["training"]["alpha"] = serde_json::json!(3.0);
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();

    let output = advgame()
        .args(["reproduce", "circles-linf", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("bad-run"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    // Every violation is listed, not just the first.
    assert!(stderr.contains("delta"), "{stderr}");
    assert!(stderr.contains("alpha"), "{stderr}");
}

#[test]
fn train_attack_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data_csv = dir.path().join("moons.csv");
    assert!(advgame()
        .args(["gen-data", "--family", "moons", "--n", "120", "--seed", "5", "--out"])
        .arg(&data_csv)
        .status()
        .unwrap()
        .success());

    // Short clean training.
    let clean_dir = dir.path().join("clean");
    assert!(advgame()
        .args(["train-clean", "--epochs", "40", "--seed", "5", "--data"])
        .arg(&data_csv)
        .arg("--out")
        .arg(&clean_dir)
        .status()
        .unwrap()
        .success());
    let ckpt = clean_dir.join("defense_clean.json");
    assert!(ckpt.exists());
    assert!(clean_dir.join("training.csv").exists());

    // FGSM attack file.
    let attack_csv = dir.path().join("fgsm.csv");
    assert!(advgame()
        .args(["attack", "--method", "fgsm", "--p", "inf", "--delta", "0.2", "--model"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data_csv)
        .arg("--out")
        .arg(&attack_csv)
        .status()
        .unwrap()
        .success());
    let attack_text = read(&attack_csv);
    assert!(attack_text.starts_with("x1,x2,adv1,adv2,label,loss_clean,loss_adv\n"));
    // Perturbations obey the budget.
    for line in attack_text.lines().skip(1) {
        let f: Vec<f64> = line
            .split(',')
            .take(4)
            .map(|v| v.parse().unwrap())
            .collect();
        assert!((f[2] - f[0]).abs() <= 0.2 + 1e-9);
        assert!((f[3] - f[1]).abs() <= 0.2 + 1e-9);
    }

    // FGSM is rejected for non-inf budgets with a config exit.
    let rejected = advgame()
        .args(["attack", "--method", "fgsm", "--p", "2", "--delta", "0.2", "--model"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&data_csv)
        .arg("--out")
        .arg(dir.path().join("nope.csv"))
        .output()
        .unwrap();
    assert_eq!(rejected.status.code(), Some(2));

    // Evaluation matrix over the clean defense.
    let eval_dir = dir.path().join("eval");
    let output = advgame()
        .args(["eval", "--p", "inf", "--delta", "0.2", "--steps", "10", "--restarts", "2"])
        .arg("--defense")
        .arg(&ckpt)
        .args(["--attack", "none", "--attack", "pgd", "--attack", "fgsm"])
        .arg("--data")
        .arg(&data_csv)
        .arg("--out")
        .arg(&eval_dir)
        .output()
        .unwrap();
    assert!(output.status.success());
    let matrix = read(&eval_dir.join("matrix.csv"));
    assert!(matrix.starts_with("defense,attack,mean_loss,sum_loss,error_rate\n"));
    assert_eq!(matrix.lines().count(), 4, "{matrix}");
    assert!(eval_dir.join("manifest.json").exists());
}

#[test]
fn flow_writes_trajectory_and_kkt_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let output = advgame()
        .args([
            "flow",
            "--function",
            "quadratic",
            "--p",
            "2",
            "--delta",
            "0.2",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = read(&out);
    assert!(text.starts_with("t,x1,x2,f\n"));
    assert!(text.lines().count() > 10);
    // Monotone loss column.
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    for w in values.windows(2) {
        assert!(w[1] >= w[0] - 1e-8);
    }

    let kkt: serde_json::Value =
        serde_json::from_str(&read(&out.with_extension("kkt.json"))).unwrap();
    assert_eq!(kkt["passed"], serde_json::json!(true));
    assert_eq!(kkt["interior"], serde_json::json!(true));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("converged: true"), "{stdout}");
}

#[test]
fn flow_saddle_deflection_via_cli_escapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("saddle.csv");
    let output = advgame()
        .args([
            "flow",
            "--function",
            "saddle",
            "--saddle",
            "deflect",
            "--p",
            "inf",
            "--delta",
            "0.2",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = read(&out);
    let first: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let last: f64 = text
        .lines()
        .last()
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(last > first + 1e-3, "saddle escape: {first} -> {last}");
}

#[test]
fn export_grid_after_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(advgame()
        .args([
            "reproduce",
            "circles-linf",
            "--epochs",
            "3",
            "--n",
            "80",
            "--seed",
            "2",
            "--out",
        ])
        .arg(&run)
        .status()
        .unwrap()
        .success());

    let grid_csv = dir.path().join("grid.csv");
    let status = advgame()
        .args(["export-grid", "--resolution", "7"])
        .arg("--defense")
        .arg(run.join("checkpoints/defense_game.json"))
        .arg("--attack")
        .arg(run.join("checkpoints/attack_game.json"))
        .arg("--labeler")
        .arg(run.join("checkpoints/defense_clean.json"))
        .arg("--out")
        .arg(&grid_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = read(&grid_csv);
    assert!(text.starts_with("x1,x2,label,loss,g1,g2,a1,a2\n"));
    assert_eq!(text.lines().count(), 50);

    // The run directory is self-describing.
    let manifest: serde_json::Value = serde_json::from_str(&read(&run.join("manifest.json"))).unwrap();
    assert!(manifest["dataset_fingerprint"].is_string());
    assert_eq!(manifest["config"]["seed"], serde_json::json!(2));
    assert!(manifest["artifact_version"].is_string());
}

#[test]
fn regression_csv_pipeline_via_cli() {
    let dir = tempfile::tempdir().unwrap();
    let data_csv = dir.path().join("reg.csv");
    assert!(advgame()
        .args([
            "gen-data",
            "--family",
            "synth-reg",
            "--n",
            "80",
            "--d",
            "3",
            "--seed",
            "4",
            "--out",
        ])
        .arg(&data_csv)
        .status()
        .unwrap()
        .success());
    let text = read(&data_csv);
    assert!(text.starts_with("x1,x2,x3,target\n"));

    let out = dir.path().join("game");
    assert!(advgame()
        .args([
            "train-game",
            "--p",
            "2",
            "--delta",
            "0.2",
            "--epochs",
            "5",
            "--seed",
            "4",
            "--data",
        ])
        .arg(&data_csv)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    assert!(out.join("defense_game.json").exists());
    assert!(out.join("attack_game.json").exists());
}
