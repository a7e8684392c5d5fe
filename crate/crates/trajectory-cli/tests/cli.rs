//! Drives the installed binary through a full synth -> prepare -> train ->
//! report run on a throwaway directory, the way a user would from a shell.

use std::path::Path;
use std::process::{Command, Output};

use trajectory::config::ExperimentConfig;
use trajectory::synth::SyntheticCohortSpec;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajectory"))
}

fn write_config(root: &Path) -> std::path::PathBuf {
    let mut config = ExperimentConfig::default();
    let data = root.join("data");
    config.experiment.name = "cli-smoke".into();
    config.experiment.n_folds = 3;
    config.paths.data_dir = data.clone();
    config.paths.out_dir = root.join("out");
    config.paths.code_embedding_store = Some(data.join("embeddings/codes.vstore"));
    config.paths.diag_universe = Some(data.join("vocab/diag_parent.vocab"));
    config.paths.proc_universe = Some(data.join("vocab/proc_parent.vocab"));
    config.features.use_med = false;
    config.features.temporal_hidden = 8;
    config.features.code_bottleneck = 16;
    config.train.batch_size = 32;
    config.train.max_epochs = 2;
    config.synth = SyntheticCohortSpec {
        n_patients: 60,
        diag_classes: 25,
        proc_parents: 10,
        med_codes: 10,
        max_chunks_per_admission: 0,
        ..SyntheticCohortSpec::default()
    };
    let path = root.join("experiment.toml");
    std::fs::write(&path, config.to_toml_string().unwrap()).unwrap();
    path
}

fn run_ok(config: &Path, subcommand: &str) -> Output {
    let output = binary()
        .arg("-c")
        .arg(config)
        .arg(subcommand)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "`trajectory {subcommand}` failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
    output
}

#[test]
fn pipeline_runs_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());

    let synth = run_ok(&config, "synth");
    let text = String::from_utf8_lossy(&synth.stdout);
    assert!(text.contains("synthesized 60 patients"), "unexpected synth output: {text}");

    let prepare = run_ok(&config, "prepare");
    let text = String::from_utf8_lossy(&prepare.stdout);
    assert!(text.contains("prepared 60 patients"), "unexpected prepare output: {text}");
    assert!(text.contains("25 diagnosis codes"), "universe should drive the vocab: {text}");

    let train = run_ok(&config, "train");
    let text = String::from_utf8_lossy(&train.stdout);
    assert!(text.contains("trained 3 folds"), "unexpected train output: {text}");
    assert!(dir.path().join("out/reports/readmission_admission.jsonl").exists());

    let report = run_ok(&config, "report");
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("roc_auc"), "summary should name metrics: {text}");
    assert!(text.contains("fold"), "summary should be per fold: {text}");
}

#[test]
fn missing_config_is_a_clean_error() {
    let output = binary()
        .args(["-c", "/nonexistent/experiment.toml", "train"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error["), "errors must be tagged: {stderr}");
}

#[test]
fn out_flag_redirects_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    run_ok(&config, "synth");

    // everything derived, prepared records included, follows the override
    let elsewhere = dir.path().join("elsewhere");
    for subcommand in ["prepare", "train"] {
        let output = binary()
            .arg("-c")
            .arg(&config)
            .arg("--out")
            .arg(&elsewhere)
            .arg(subcommand)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "`trajectory --out ... {subcommand}` failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    assert!(elsewhere.join("reports/readmission_admission.jsonl").exists());
    assert!(!dir.path().join("out").exists());
}
