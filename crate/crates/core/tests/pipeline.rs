//! End-to-end runs of the experiment pipeline on small chains.

use std::fs;
use std::path::{Path, PathBuf};

use mechrom::experiment::{self, ExperimentConfig, Layout, Method};
use mechrom::model::{save_system, uniform_chain, SystemFiles};
use mechrom::{Error, Execution};

const SMALL: &str = r#"
seed = 3
methods = ["pod", "opinf", "copinf"]

[system]
kind = "chain"
n = 12
stiffness = 100.0
alpha_r = 0.01
beta_r = 1.0e-4
input_nodes = [11]

[integrator]
dt = 0.01

[signal]
kind = "sine"
amplitude = 1.0
frequency = 0.5

[horizon]
train = 4.0
test = 8.0

[basis]
rank = 4
"#;

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(SMALL).unwrap()
}

/// Every file below `root`, relative path → contents.
fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn stages_in_sequence_match_a_full_run() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let rows = experiment::run(&cfg, &Layout::new(a.path()), Execution::default()).unwrap();

    let layout = Layout::new(b.path());
    experiment::stage_simulate(&cfg, &layout).unwrap();
    let r = experiment::stage_basis(&cfg, &layout).unwrap();
    experiment::stage_infer(&cfg, &layout, Execution::Sequential).unwrap();
    experiment::stage_infer_constrained(&cfg, &layout).unwrap();
    let chained = experiment::stage_evaluate(&cfg, &layout, Execution::Sequential).unwrap();

    assert_eq!(r, 4);
    assert_eq!(rows, chained);
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(
        ta.iter().map(|(p, _)| p).collect::<Vec<_>>(),
        tb.iter().map(|(p, _)| p).collect::<Vec<_>>()
    );
    for ((path, x), (_, y)) in ta.iter().zip(&tb) {
        assert!(x == y, "{} differs", path.display());
    }
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let rows = experiment::run(&small(), &Layout::new(dir.path()), Execution::default()).unwrap();
    assert_eq!(rows.iter().map(|r| r.method).collect::<Vec<_>>(), [Method::Pod, Method::Opinf, Method::Copinf]);
    assert!(rows.iter().all(|r| r.rank == 4 && r.max_eps.is_finite()));
    assert!(rows[1].lambda.is_some());
    assert!(rows[0].lambda.is_none() && rows[2].lambda.is_none());

    let expected = [
        "manifest.toml",
        "summary.csv",
        "system/M.mtx",
        "system/E.mtx",
        "system/K.mtx",
        "system/B.mtx",
        "snapshots/train_X.csv",
        "snapshots/train_Xd.csv",
        "snapshots/train_Xdd.csv",
        "snapshots/train_U.csv",
        "snapshots/train_F.csv",
        "snapshots/test_X.csv",
        "basis/V.mtx",
        "basis/singular_values.csv",
        "pod/M.mtx",
        "pod/K.mtx",
        "opinf/E.mtx",
        "opinf/K.mtx",
        "opinf/B.mtx",
        "opinf/lambda_table.csv",
        "opinf/report.csv",
        "copinf/M.mtx",
        "copinf/E.mtx",
        "copinf/K.mtx",
        "copinf/report.csv",
        "pod/error.csv",
        "opinf/trajectory_X.csv",
        "copinf/error.csv",
    ];
    for rel in expected {
        assert!(dir.path().join(rel).is_file(), "missing {rel}");
    }
    assert!(!dir.path().join("timings.csv").exists());

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    let error = fs::read_to_string(dir.path().join("pod/error.csv")).unwrap();
    assert!(error.lines().any(|l| l.ends_with(",train")));
    assert!(error.lines().any(|l| l.ends_with(",test")));
}

#[test]
fn manifest_records_the_resolved_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.output_dir = Some(dir.path().to_path_buf());
    experiment::stage_simulate(&cfg, &Layout::new(dir.path())).unwrap();
    let text = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    for key in ["seed = 3", "gamma", "beta", "lambdas", "omega", "max_iter", "derivatives", "version"] {
        assert!(text.contains(key), "manifest lacks {key}:\n{text}");
    }
    // The output location is not part of the experiment.
    assert!(!text.contains(&*dir.path().to_string_lossy()));
    // Apart from the tool stamp, the manifest parses back to the same experiment.
    let mut table: toml::Table = text.parse().unwrap();
    assert_eq!(table.remove("tool").unwrap().as_str(), Some("mechrom"));
    assert!(table.remove("version").is_some());
    let mut back = ExperimentConfig::from_toml_str(&toml::to_string(&table).unwrap()).unwrap();
    back.output_dir = cfg.output_dir.clone();
    assert_eq!(back.to_toml().unwrap(), cfg.to_toml().unwrap());
}

#[test]
fn pod_only_run_skips_inference() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.methods = vec![Method::Pod];
    let rows = experiment::run(&cfg, &Layout::new(dir.path()), Execution::default()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(!dir.path().join("opinf").exists());
    assert!(!dir.path().join("copinf").exists());
    assert!(dir.path().join("pod/error.csv").is_file());
}

#[test]
fn record_timings_writes_a_separate_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.methods = vec![Method::Pod];
    cfg.record_timings = true;
    experiment::run(&cfg, &Layout::new(dir.path()), Execution::default()).unwrap();
    let timings = fs::read_to_string(dir.path().join("timings.csv")).unwrap();
    assert!(timings.starts_with("stage,seconds"));
    assert!(!fs::read_to_string(dir.path().join("summary.csv")).unwrap().contains("seconds"));
}

fn files_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, body).unwrap();
    path
}

const FILES_CONFIG: &str = r#"
seed = 1
methods = ["pod", "opinf", "copinf"]

[system]
kind = "files"
mass = "model/M.mtx"
damping = "model/E.mtx"
stiffness = "model/K.mtx"
input = "model/B.mtx"

[integrator]
dt = 0.01

[signal]
kind = "sine"
amplitude = 1.0
frequency = 0.15915494309189535

[horizon]
train = 7.0
test = 21.0

[basis]
rank = 4
"#;

#[test]
fn file_based_model_with_unit_sine_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let system = uniform_chain(24, 1.0, 50.0, 0.02, 1e-3, &[23]).unwrap();
    let model = dir.path().join("model");
    fs::create_dir_all(&model).unwrap();
    save_system(&system, &SystemFiles::in_dir(&model)).unwrap();

    let cfg = ExperimentConfig::load(&files_config(dir.path(), FILES_CONFIG)).unwrap();
    assert_eq!(cfg.signal, mechrom::signal::Waveform::unit_sine_rad());
    let out = dir.path().join("out");
    let rows = experiment::run(&cfg, &Layout::new(&out), Execution::default()).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row.rank, 4);
        assert!(row.max_eps.is_finite(), "{row:?}");
    }
    let test = fs::read_to_string(out.join("snapshots/test_X.csv")).unwrap();
    assert_eq!(test.lines().count(), 1 + 2100);
    let train = fs::read_to_string(out.join("snapshots/train_X.csv")).unwrap();
    assert_eq!(train.lines().count(), 1 + 700);
}

#[test]
fn missing_matrix_fails_in_load_system() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model");
    fs::create_dir_all(&model).unwrap();
    let system = uniform_chain(6, 1.0, 10.0, 0.0, 0.0, &[5]).unwrap();
    save_system(&system, &SystemFiles::in_dir(&model)).unwrap();
    fs::remove_file(model.join("K.mtx")).unwrap();

    let cfg = ExperimentConfig::load(&files_config(dir.path(), FILES_CONFIG)).unwrap();
    let err = experiment::run(&cfg, &Layout::new(dir.path().join("out")), Execution::default()).unwrap_err();
    assert_eq!(err.stage, "load_system");
    assert!(matches!(err.source, Error::Io { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("K.mtx"));
}

#[test]
fn truncated_test_snapshots_are_reported_with_both_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.methods = vec![Method::Pod];
    let layout = Layout::new(dir.path());
    experiment::stage_simulate(&cfg, &layout).unwrap();
    experiment::stage_basis(&cfg, &layout).unwrap();
    for entry in fs::read_dir(dir.path().join("snapshots")).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap().to_string_lossy().starts_with("test_") {
            let text = fs::read_to_string(&path).unwrap();
            let kept: Vec<&str> = text.lines().take(1 + 790).collect();
            fs::write(&path, kept.join("\n") + "\n").unwrap();
        }
    }
    let err = experiment::stage_evaluate(&cfg, &layout, Execution::Sequential).unwrap_err();
    assert_eq!(err.stage, "evaluate");
    let msg = err.to_string();
    assert!(msg.contains("790") && msg.contains("800"), "{msg}");
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = experiment::run(&cfg, &Layout::new(a.path()), Execution::Sequential).unwrap();
    let rb = experiment::run(&cfg, &Layout::new(b.path()), Execution::default()).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn shipped_example_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/chain200.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.methods, [Method::Pod, Method::Opinf, Method::Copinf]);
    assert!(cfg.copinf.trace);
}
