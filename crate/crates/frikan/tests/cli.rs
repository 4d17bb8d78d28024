//! End-to-end tests of the `frikan` binary: every subcommand runs against
//! small synthetic datasets in a temp directory and the emitted artifacts
//! are checked for shape, content and determinism.

use std::path::Path;
use std::process::{Command, Output};

use frikan::data::FrictionDataset;
use frikan::friction::{axis_params, stribeck};

fn frikan() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_frikan"));
    cmd.env_remove("FRIKAN_OUT_DIR");
    cmd
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary should spawn");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout should be utf-8")
}

fn run_err(cmd: &mut Command) -> (Output, String) {
    let out = cmd.output().expect("binary should spawn");
    assert!(!out.status.success(), "command unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    (out, stderr)
}

fn read_json(path: impl AsRef<Path>) -> serde_json::Value {
    let text = std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("{} unreadable: {e}", path.as_ref().display()));
    serde_json::from_str(&text).expect("report should be valid JSON")
}

/// Generates a clean axis CSV in `dir` and returns its path.
fn generate(dir: &Path, axis: usize, n: usize, seed: u64) -> std::path::PathBuf {
    run_ok(
        frikan()
            .args(["generate", "--axis", &axis.to_string(), "--n", &n.to_string()])
            .args(["--seed", &seed.to_string()])
            .arg("--out-dir")
            .arg(dir),
    );
    dir.join(format!("axis{axis}.csv"))
}

#[test]
fn generate_writes_clean_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), 3, 250, 9);

    let raw = std::fs::read_to_string(&path).unwrap();
    assert!(raw.starts_with("velocity,torque\n"));

    let data = FrictionDataset::read_csv(&path).unwrap();
    assert_eq!(data.len(), 250);
    let params = axis_params(3).unwrap();
    for (&v, &t) in data.velocities.iter().zip(&data.torques) {
        assert!((-1.0..=1.0).contains(&v));
        assert_eq!(t, stribeck(v, &params));
    }
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        frikan()
            .args(["generate", "--axis", "1", "--n", "50"])
            .env("FRIKAN_OUT_DIR", dir.path()),
    );
    assert!(dir.path().join("axis1.csv").exists());
}

#[test]
fn generate_rejects_axis_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let (_, stderr) =
        run_err(frikan().args(["generate", "--axis", "7"]).arg("--out-dir").arg(dir.path()));
    assert!(stderr.contains("1..=6"), "stderr should name the valid range: {stderr}");
}

#[test]
fn missing_data_file_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, stderr) = run_err(
        frikan()
            .args(["fit-known", "--data", "no_such_file.csv"])
            .arg("--out-dir")
            .arg(dir.path()),
    );
    assert!(stderr.starts_with("error:"), "stderr should be a single error line: {stderr}");
}

#[test]
fn fit_known_recovers_axis_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 1, 300, 1);
    run_ok(
        frikan()
            .arg("fit-known")
            .arg("--data")
            .arg(&data)
            .args(["--algorithm", "lbfgs", "--iters", "150", "--truth-axis", "1"])
            .arg("--out-dir")
            .arg(dir.path()),
    );

    let report = read_json(dir.path().join("known_fit_report.json"));
    assert!(report["r_squared"].as_f64().unwrap() > 0.99999);
    for k in ["k1", "k2", "k3", "k4"] {
        let rel = report["truth"]["relative_errors"][k].as_f64().unwrap();
        assert!(rel < 1e-3, "{k} relative error {rel}");
    }
    assert!(dir.path().join("known_fit_predictions.csv").exists());
}

#[test]
fn fit_kan_writes_snapshots_and_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let train = generate(dir.path(), 1, 200, 2);
    run_ok(
        frikan()
            .arg("fit-kan")
            .arg("--data")
            .arg(&train)
            .args(["--grid", "5", "--steps", "60", "--snapshots", "3"])
            .arg("--test")
            .arg(&train)
            .arg("--out-dir")
            .arg(dir.path()),
    );

    assert!(dir.path().join("kan_checkpoint.json").exists());
    assert!(dir.path().join("kan_checkpoint_step_20.json").exists());
    assert!(dir.path().join("kan_checkpoint_step_40.json").exists());

    let report = read_json(dir.path().join("kan_fit_report.json"));
    assert!(report["r_squared"].as_f64().unwrap() > 0.99);
    assert_eq!(report["tests"][0]["r_squared"], report["r_squared"]);
    assert!(report["tests"][0]["residuals"]["rmse"].as_f64().unwrap() >= 0.0);

    let csv = std::fs::read_to_string(dir.path().join("kan_predictions.csv")).unwrap();
    assert!(csv.starts_with("velocity,truth,prediction\n"));
}

#[test]
fn prune_then_symbolify_chain_works_on_saved_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let train = generate(dir.path(), 2, 200, 3);
    run_ok(
        frikan()
            .arg("fit-kan")
            .arg("--data")
            .arg(&train)
            .args(["--arch", "[1,[5,2],1]", "--grid", "3", "--steps", "150"])
            .arg("--out-dir")
            .arg(dir.path()),
    );
    run_ok(
        frikan()
            .arg("prune")
            .arg("--checkpoint")
            .arg(dir.path().join("kan_checkpoint.json"))
            .arg("--data")
            .arg(&train)
            .args(["--refit-steps", "30"])
            .arg("--out-dir")
            .arg(dir.path()),
    );
    assert!(dir.path().join("pruned_checkpoint.json").exists());
    let prune_text = std::fs::read_to_string(dir.path().join("prune_report.txt")).unwrap();
    assert!(prune_text.contains("node layer"));

    run_ok(
        frikan()
            .arg("symbolify")
            .arg("--checkpoint")
            .arg(dir.path().join("pruned_checkpoint.json"))
            .arg("--data")
            .arg(&train)
            .arg("--out-dir")
            .arg(dir.path()),
    );
    let expr = std::fs::read_to_string(dir.path().join("expression.txt")).unwrap();
    assert!(expr.contains('v'));
    let report = read_json(dir.path().join("symbolic_report.json"));
    assert!(report["model"]["r_squared_vs_network"].as_f64().unwrap() > 0.95);
}

#[test]
fn pipeline_emits_every_stage_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let train = generate(dir.path(), 1, 250, 4);
    run_ok(
        frikan()
            .arg("pipeline")
            .arg("--data")
            .arg(&train)
            .args(["--fit-steps", "150", "--refit-steps", "30", "--truth-axis", "1"])
            .arg("--svg")
            .arg("--out-dir")
            .arg(dir.path()),
    );

    for name in [
        "pre_prune_checkpoint.json",
        "prune_report.txt",
        "post_prune_checkpoint.json",
        "expression.txt",
        "symbolic_report.json",
        "pipeline_report.json",
        "pipeline_predictions.csv",
        "pipeline_plot.svg",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let report = read_json(dir.path().join("pipeline_report.json"));
    let vs_truth = report["stages"]["symbolic"]["r_squared_vs_truth"].as_f64().unwrap();
    assert!(vs_truth > 0.98, "r^2 vs clean truth {vs_truth}");
}

#[test]
fn eval_reproduces_the_training_r_squared_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let train = generate(dir.path(), 2, 200, 5);
    run_ok(
        frikan()
            .arg("fit-kan")
            .arg("--data")
            .arg(&train)
            .args(["--grid", "5", "--steps", "60"])
            .arg("--out-dir")
            .arg(dir.path()),
    );
    run_ok(
        frikan()
            .arg("eval")
            .arg("--model")
            .arg(dir.path().join("kan_checkpoint.json"))
            .arg("--data")
            .arg(&train)
            .arg("--out-dir")
            .arg(dir.path()),
    );

    let fit = read_json(dir.path().join("kan_fit_report.json"));
    let eval = read_json(dir.path().join("eval_report.json"));
    let a = fit["r_squared"].as_f64().unwrap();
    let b = eval["r_squared"].as_f64().unwrap();
    assert_eq!(a.to_bits(), b.to_bits(), "checkpoint round trip changed r^2: {a} vs {b}");
}

#[test]
fn eval_accepts_expression_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 2, 150, 6);
    let model = dir.path().join("law.txt");
    std::fs::write(&model, "((23 * tanh((50 * v))) + (0.16 * v))\n").unwrap();
    run_ok(
        frikan()
            .arg("eval")
            .arg("--model")
            .arg(&model)
            .arg("--data")
            .arg(&data)
            .arg("--out-dir")
            .arg(dir.path()),
    );
    let report = read_json(dir.path().join("eval_report.json"));
    assert_eq!(report["model_kind"], "expression");
    assert!(report["r_squared"].as_f64().unwrap() > 0.9);
}

#[test]
fn correlate_lists_every_channel_and_rejects_constant_ones() {
    let dir = tempfile::tempdir().unwrap();
    let varying = dir.path().join("varying.csv");
    std::fs::write(
        &varying,
        "velocity,torque,temperature\n-0.5,-21.0,19.0\n-0.1,-20.0,19.5\n0.2,20.5,20.0\n0.6,21.5,20.5\n",
    )
    .unwrap();
    let stdout = run_ok(
        frikan().arg("correlate").arg("--data").arg(&varying).arg("--out-dir").arg(dir.path()),
    );
    assert!(stdout.contains("velocity"));
    assert!(stdout.contains("temperature"));
    let report = read_json(dir.path().join("correlation_report.json"));
    assert!(report["correlations"]["velocity"].as_f64().unwrap() > 0.5);

    let constant = dir.path().join("constant.csv");
    std::fs::write(
        &constant,
        "velocity,torque,load\n-0.5,-21.0,5.0\n-0.1,-20.0,5.0\n0.2,20.5,5.0\n0.6,21.5,5.0\n",
    )
    .unwrap();
    let (_, stderr) = run_err(
        frikan().arg("correlate").arg("--data").arg(&constant).arg("--out-dir").arg(dir.path()),
    );
    assert!(stderr.contains("load"), "stderr should name the constant channel: {stderr}");
}

#[test]
fn repeated_runs_are_byte_identical_up_to_timing() {
    let dir = tempfile::tempdir().unwrap();
    let train = generate(dir.path(), 1, 150, 7);
    for sub in ["a", "b"] {
        run_ok(
            frikan()
                .arg("fit-kan")
                .arg("--data")
                .arg(&train)
                .args(["--grid", "5", "--steps", "40"])
                .arg("--out-dir")
                .arg(dir.path().join(sub)),
        );
    }

    let checkpoint_a = std::fs::read(dir.path().join("a/kan_checkpoint.json")).unwrap();
    let checkpoint_b = std::fs::read(dir.path().join("b/kan_checkpoint.json")).unwrap();
    assert_eq!(checkpoint_a, checkpoint_b, "checkpoints differ between identical runs");

    let mut report_a = read_json(dir.path().join("a/kan_fit_report.json"));
    let mut report_b = read_json(dir.path().join("b/kan_fit_report.json"));
    report_a.as_object_mut().unwrap().remove("timing_seconds");
    report_b.as_object_mut().unwrap().remove("timing_seconds");
    assert_eq!(report_a, report_b, "reports differ beyond timing");

    let pred_a = std::fs::read(dir.path().join("a/kan_predictions.csv")).unwrap();
    let pred_b = std::fs::read(dir.path().join("b/kan_predictions.csv")).unwrap();
    assert_eq!(pred_a, pred_b);
}
