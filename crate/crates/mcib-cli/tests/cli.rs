//! Exit codes, config-file semantics, and artifact layout.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcib"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn mcib")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_dataset(root: &Path) -> std::path::PathBuf {
    let out = root.join("syn");
    assert_ok(&run(bin().args([
        "synth",
        "--n",
        "80",
        "--c",
        "0.4",
        "--seed",
        "2",
        "--dims",
        "8,8,8",
        "--signal-dims",
        "2",
        "--distractor-slots",
        "2",
        "--out",
    ])
    .arg(&out)));
    out.join("dataset.feat")
}

fn fast_train_args() -> Vec<&'static str> {
    vec![
        "--epochs",
        "2",
        "--encoder",
        "mlp",
        "--hidden-dim",
        "8",
        "--num-layers",
        "1",
        "--num-heads",
        "2",
        "--latent-dim",
        "2",
        "--decoder-hidden",
        "8",
        "--mc-samples",
        "1",
    ]
}

#[test]
fn unknown_config_key_is_rejected_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "epochs = 3\nnot_a_real_key = 1\n").unwrap();
    let out = run(bin().arg("train").arg("--config").arg(&cfg));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not_a_real_key"), "stderr: {err}");
}

#[test]
fn config_referencing_missing_path_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "data = \"/nonexistent/features.feat\"\n").unwrap();
    let out = run(bin().arg("train").arg("--config").arg(&cfg));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_feature_file_is_exit_3_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let feat = dir.path().join("bad.feat");
    std::fs::write(
        &feat,
        "MCIB-FEAT v1; n=1; C=2; d0=2; d1=2; d2=2; tokens=1\n0,1.0,2.0,3.0\n",
    )
    .unwrap();
    let out = run(bin()
        .arg("train")
        .args(fast_train_args())
        .arg("--data")
        .arg(&feat)
        .arg("--out")
        .arg(dir.path().join("run")));
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 0"), "stderr: {err}");
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        format!(
            "# experiment defaults\ndata = \"{}\"\nseed = 9\nepochs = 2\n\
             encoder = \"mlp\"\nhidden_dim = 8\nnum_layers = 1\nnum_heads = 2\n\
             latent_dim = 2\ndecoder_hidden = 8\nmc_samples = 1\nbeta = 2.5\n",
            data.display()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    assert_ok(&run(bin()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .arg("--seed")
        .arg("11")
        .arg("--out")
        .arg(&out_dir)));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["seed"], 11, "flag overrides file seed");
    assert_eq!(manifest["config"]["weights"]["beta"], 2.5, "file key applies");
    assert_eq!(manifest["config"]["epochs"], 2);
}

#[test]
fn train_writes_declared_run_layout() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out_dir = dir.path().join("run");
    assert_ok(&run(bin()
        .arg("train")
        .args(fast_train_args())
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out_dir)));
    for f in ["manifest.json", "history.csv", "metrics.json", "model.json", "predictions.csv"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,total_loss,val_weighted_f1\n"));
}

#[test]
fn ablate_emits_declared_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out_dir = dir.path().join("ab");
    assert_ok(&run(bin()
        .arg("ablate")
        .args(fast_train_args())
        .arg("--data")
        .arg(&data)
        .arg("--descriptors")
        .arg("single:a,pair:va")
        .arg("--ablate-seeds")
        .arg("2")
        .arg("--out")
        .arg(&out_dir)));
    let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    assert!(csv.starts_with("config,precision,recall,f1,seed_count\n"));
    assert!(csv.contains("single:a,"));
    assert!(csv.contains("pair:va,"));
    assert!(out_dir.join("ablation_runs.json").exists());
}

#[test]
fn unknown_ablate_descriptor_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out = run(bin()
        .arg("ablate")
        .args(fast_train_args())
        .arg("--data")
        .arg(&data)
        .arg("--descriptors")
        .arg("bogus:thing")
        .arg("--out")
        .arg(dir.path().join("ab")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_rejects_mismatched_splits_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "id,truth,pred\n0,1,1\n1,0,0\n").unwrap();
    std::fs::write(&b, "id,truth,pred\n0,1,1\n2,0,0\n").unwrap();
    let out = run(bin()
        .arg("analyze")
        .arg("--fused")
        .arg(&a)
        .arg("--single")
        .arg(&b)
        .arg("--out")
        .arg(dir.path().join("an")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_emits_report_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let fused = dir.path().join("fused.csv");
    let single = dir.path().join("text.csv");
    std::fs::write(&fused, "id,truth,pred\n0,1,1\n1,0,0\n2,1,0\n3,0,0\n").unwrap();
    std::fs::write(&single, "id,truth,pred\n0,1,0\n1,0,0\n2,1,1\n3,0,1\n").unwrap();
    let out_dir = dir.path().join("an");
    assert_ok(&run(bin()
        .arg("analyze")
        .arg("--fused")
        .arg(&fused)
        .arg("--single")
        .arg(&single)
        .arg("--out")
        .arg(&out_dir)));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("fusion_gain.json")).unwrap())
            .unwrap();
    let regions = &report[0]["regions"];
    assert!(regions.get("only_A").is_some(), "schema uses only_A: {report}");
    assert!(out_dir.join("figures/venn_text_fused.svg").exists());
    let svg = std::fs::read_to_string(out_dir.join("figures/venn_text_fused.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn gradcheck_passes_and_prints_error() {
    let out = run(bin().args(["gradcheck", "--batch", "2", "--seed", "1", "--encoder", "mlp"]));
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max relative error"), "stdout: {stdout}");
    assert!(stdout.contains("PASS"), "stdout: {stdout}");
}

#[test]
fn gradcheck_over_tolerance_exits_nonzero() {
    // An unreachable tolerance exercises the failure branch.
    let out = run(bin().args([
        "gradcheck",
        "--batch",
        "2",
        "--seed",
        "1",
        "--encoder",
        "mlp",
        "--tolerance",
        "1e-30",
    ]));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gradient check failed"), "stderr: {err}");
}

#[test]
fn audit_unknown_label_is_exit_3_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("f.tsv");
    std::fs::write(&ann, "u1\tSheldon\t1\nu2\tLeonard\tmaybe\n").unwrap();
    let out = run(bin()
        .arg("audit")
        .arg("--annotations")
        .arg(&ann)
        .arg("--out")
        .arg(dir.path().join("aud")));
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
    assert!(err.contains("maybe"), "stderr: {err}");
}

#[test]
fn audit_emits_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("f.tsv");
    std::fs::write(
        &ann,
        "u1\tSheldon\t1\tjoy\tdisgust\nu2\tSheldon\t1\tjoy\tanger\n\
         u3\tLeonard\t0\tjoy\tjoy\nu4\tLeonard\t0\tanger\tanger\n\
         u5\tPenny\t1\tfear\tjoy\nu6\tPenny\t0\tjoy\tjoy\n",
    )
    .unwrap();
    let out_dir = dir.path().join("aud");
    assert_ok(&run(bin()
        .arg("audit")
        .arg("--annotations")
        .arg(&ann)
        .arg("--out")
        .arg(&out_dir)));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("audit.json")).unwrap())
            .unwrap();
    assert!(report["character"]["chi_square"]["statistic"].as_f64().is_some());
    assert!(report["consistency"]["phi"].as_f64().is_some());
    let csv = std::fs::read_to_string(out_dir.join("audit.csv")).unwrap();
    assert!(csv.starts_with("section,metric,value\n"));
}

#[test]
fn search_records_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let out_dir = dir.path().join("search");
    assert_ok(&run(bin()
        .arg("search")
        .args(fast_train_args())
        .arg("--data")
        .arg(&data)
        .arg("--trials")
        .arg("2")
        .arg("--out")
        .arg(&out_dir)));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("search_trace.json")).unwrap())
            .unwrap();
    assert_eq!(trace["trials"].as_array().unwrap().len(), 2);
}
