use std::path::Path;
use std::process::{Command, Output};

fn tiny_spec(dir: &Path, acceptance: &str) -> String {
    let spec = format!(
        r#"{{
            "tag": "sdof-case1",
            "protocol": {{"kind": "orbit", "t_end": 6.0, "rollout_steps": 128}},
            "variants": [{{
                "name": "attention",
                "model": {{"arch": "transformer", "input_dim": 1, "cond_dim": 0, "context_len": 2,
                          "d_model": 1, "head": "linear", "mlp_hidden": [], "pos_encoding": "learned",
                          "activation": "tanh", "fixed_embedding": true, "causal": true, "seed": 0}},
                "train": {{"lr": 0.01, "lr_final": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
                          "batch_size": 32, "epochs": 20, "patience": 20, "seed": 0}}
            }}],
            "acceptance": {acceptance}
        }}"#
    );
    let path = dir.join("spec.json");
    std::fs::write(&path, spec).unwrap();
    path.display().to_string()
}

const LENIENT: &str = r#"{"min_pass_fraction": 0.0}"#;
const IMPOSSIBLE: &str = r#"{"min_pass_fraction": 1.0, "min_prominence": 1e12}"#;

fn run(stage: &str, spec: &str, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attn-dyn"))
        .args([stage, "--spec", spec, "--out"])
        .arg(out)
        .args(["--seeds", "0..1", "--jobs", "1"])
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_run_in_order_and_reruns_do_no_work() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec(tmp.path(), LENIENT);
    let out = tmp.path().join("run");
    for (stage, line) in [
        ("generate", "generate: 1 job(s) run, 0 up to date"),
        ("train", "train: 2 job(s) run, 0 up to date"),
        ("analyze", "analyze: 2 job(s) run, 0 up to date"),
    ] {
        let o = run(stage, &spec, &out);
        assert_eq!(o.status.code(), Some(0), "{stage}: {}", stderr(&o));
        assert!(stdout(&o).contains(line), "{}", stdout(&o));
    }
    let o = run("report", &spec, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("report: sdof-case1"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"], serde_json::json!([0, 1]));

    let o = run("train", &spec, &out);
    assert!(
        stdout(&o).contains("train: 0 job(s) run, 2 up to date"),
        "{}",
        stdout(&o)
    );
    let o = run("generate", &spec, &out);
    assert!(
        stdout(&o).contains("generate: 0 job(s) run, 1 up to date"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn failed_verdicts_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec(tmp.path(), IMPOSSIBLE);
    let out = tmp.path().join("run");
    for stage in ["generate", "train", "analyze"] {
        assert_eq!(run(stage, &spec, &out).status.code(), Some(0));
    }
    let o = run("report", &spec, &out);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn missing_upstream_stage_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec(tmp.path(), LENIENT);
    let out = tmp.path().join("run");
    let o = run("train", &spec, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing artifact"), "{}", stderr(&o));
    assert!(stderr(&o).contains("run generate first"));
}

#[test]
fn stale_data_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tiny_spec(tmp.path(), LENIENT);
    let out = tmp.path().join("run");
    assert_eq!(run("generate", &spec, &out).status.code(), Some(0));
    let summary = out.join("data").join("summary.json");
    let mut text = std::fs::read_to_string(&summary).unwrap();
    text.push('\n');
    std::fs::write(&summary, text).unwrap();
    let o = run("train", &spec, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hash mismatch"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let o = Command::new(env!("CARGO_BIN_EXE_attn-dyn"))
        .arg("frobnicate")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let o = run("generate", "no-such-experiment", tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_attn-dyn"))
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}
