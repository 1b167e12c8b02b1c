//! End-to-end checks of the command layer: exit codes, overrides, and the
//! identify round trip.

use std::fs;
use std::path::{Path, PathBuf};

use chanloop_cli::{
    apply_overrides, cmd_analyze, cmd_compare, cmd_identify, cmd_run, RunOptions, EXIT_ANALYSIS,
    EXIT_INPUT,
};
use chanloop_core::files;
use chanloop_core::metrics::ReportConfig;
use chanloop_core::statespace::{Matrix, StateSpaceModel, Vector};

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn options(scenario: PathBuf, out: &Path) -> RunOptions {
    RunOptions {
        scenario,
        out_dir: out.to_path_buf(),
        seed: None,
        overrides: vec![],
        report: ReportConfig::default(),
    }
}

#[test]
fn run_writes_three_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = cmd_run(&options(
        repo_path("scenarios/steady_underload.toml"),
        tmp.path(),
    ))
    .unwrap();
    assert!(summary.contains("ran 2000 ticks"));
    for file in ["series.csv", "report.txt", "histogram.csv"] {
        assert!(tmp.path().join(file).exists(), "{file} missing");
    }
}

#[test]
fn run_rejects_negative_capacity_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("bad.toml");
    let src = fs::read_to_string(repo_path("scenarios/steady_underload.toml")).unwrap();
    fs::write(&scenario, src.replace("capacity = 100.0", "capacity = -1.0")).unwrap();
    let err = cmd_run(&options(scenario, &tmp.path().join("out"))).unwrap_err();
    assert_eq!(err.code, EXIT_INPUT);
    assert!(err.message.contains("line"), "message: {}", err.message);
    assert!(err.message.contains("capacity"), "message: {}", err.message);
}

#[test]
fn run_missing_file_is_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = cmd_run(&options(PathBuf::from("/nonexistent.toml"), tmp.path())).unwrap_err();
    assert_eq!(err.code, EXIT_INPUT);
}

#[test]
fn set_override_equals_edited_file() {
    let tmp = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(repo_path("scenarios/steady_underload.toml")).unwrap();

    // Arm one: the original file plus --set.
    let original = tmp.path().join("original.toml");
    fs::write(&original, &src).unwrap();
    let mut opts = options(original, &tmp.path().join("a"));
    opts.overrides = vec!["controller.enabled=false".to_string()];
    cmd_run(&opts).unwrap();

    // Arm two: a file with the field edited by hand.
    let edited = tmp.path().join("edited.toml");
    fs::write(&edited, src.replace("enabled = true", "enabled = false")).unwrap();
    cmd_run(&options(edited, &tmp.path().join("b"))).unwrap();

    for file in ["series.csv", "report.txt", "histogram.csv"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between override and edited file");
    }
}

#[test]
fn compare_underload_arms_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    cmd_compare(&options(
        repo_path("scenarios/steady_underload.toml"),
        tmp.path(),
    ))
    .unwrap();
    for file in ["series.csv", "report.txt", "histogram.csv"] {
        let a = fs::read(tmp.path().join("without_control").join(file)).unwrap();
        let b = fs::read(tmp.path().join("with_control").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs though the controller never fires");
    }
    let comparison = fs::read_to_string(tmp.path().join("comparison.txt")).unwrap();
    assert!(comparison.contains("total_dropped"));
}

#[test]
fn analyze_reports_radius_and_ranks() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("diag.toml");
    fs::write(&model, "n = 2\nm = 1\na = [0.5, 0.0, 0.0, 0.9]\nb = [1.0, 1.0]\n").unwrap();
    let out = cmd_analyze(&model).unwrap();
    assert!(out.contains("spectral radius: 0.9"), "got: {out}");
    assert!(out.contains("stable: yes"), "got: {out}");

    let bundled = cmd_analyze(&repo_path("models/two_state.toml")).unwrap();
    assert!(bundled.contains("controllability rank: 2/2"), "got: {bundled}");
    assert!(bundled.contains("observability rank: 2/2"), "got: {bundled}");

    let zero_b = tmp.path().join("zero_b.toml");
    fs::write(&zero_b, "n = 2\nm = 1\na = [0.5, 0.0, 0.0, 0.9]\nb = [0.0, 0.0]\n").unwrap();
    let out = cmd_analyze(&zero_b).unwrap();
    assert!(out.contains("not controllable"), "got: {out}");
}

#[test]
fn analyze_bad_model_is_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("broken.toml");
    fs::write(&model, "n = 2\nm = 1\na = [0.5]\nb = [1.0, 0.0]\n").unwrap();
    assert_eq!(cmd_analyze(&model).unwrap_err().code, EXIT_INPUT);
}

#[test]
fn identify_roundtrips_a_simulated_model() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);

    let a0 = Matrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.7]);
    let b0 = Matrix::from_row_slice(2, 1, &[0.5, 1.0]);
    let model = StateSpaceModel::new(a0.clone(), b0.clone()).unwrap();
    let inputs: Vec<Vector> = (0..80)
        .map(|_| Vector::from_vec(vec![rng.random_range(-1.0..1.0)]))
        .collect();
    let traj = model
        .simulate(&Vector::from_vec(vec![0.1, -0.3]), &inputs)
        .unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let traj_path = tmp.path().join("trajectory.csv");
    fs::write(&traj_path, files::trajectory_csv(&traj)).unwrap();

    let summary = cmd_identify(&traj_path, tmp.path()).unwrap();
    assert!(summary.contains("residual"));

    let fitted = files::parse_model(
        &fs::read_to_string(tmp.path().join("identified.toml")).unwrap(),
    )
    .unwrap();
    assert!((fitted.a() - a0).norm() <= 1e-8);
    assert!((fitted.b() - b0).norm() <= 1e-8);
}

#[test]
fn identify_two_row_trajectory_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let traj_path = tmp.path().join("short.csv");
    fs::write(&traj_path, "t,x1,x2,u1\n0,1.0,2.0,0.5\n1,0.9,1.8,0\n").unwrap();
    let err = cmd_identify(&traj_path, tmp.path()).unwrap_err();
    assert_eq!(err.code, EXIT_ANALYSIS);
}

#[test]
fn identify_zero_trajectory_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let traj_path = tmp.path().join("zero.csv");
    let mut src = String::from("t,x1,x2,u1\n");
    for t in 0..30 {
        src.push_str(&format!("{t},0,0,0\n"));
    }
    fs::write(&traj_path, src).unwrap();
    let err = cmd_identify(&traj_path, tmp.path()).unwrap_err();
    assert_eq!(err.code, EXIT_ANALYSIS);
}

#[test]
fn trace_backed_scenario_runs_and_exhausts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut trace = String::new();
    for t in 0..40 {
        trace.push_str(&format!("{t},feed,{}\n", 5 + (t % 3)));
    }
    fs::write(tmp.path().join("feed.csv"), &trace).unwrap();

    let scenario = tmp.path().join("traced.toml");
    let body = r#"
[channel]
capacity = 50.0
ticks = 40
seed = 1

[[classes]]
id = "feed"
priority = 1
initial_width = 50.0
critical_min = 5.0

[classes.source]
kind = "trace"
file = "feed.csv"
"#;
    fs::write(&scenario, body).unwrap();
    cmd_run(&options(scenario.clone(), &tmp.path().join("out"))).unwrap();

    // Asking for more ticks than the trace holds is a runtime error unless
    // the trace is looped.
    let mut opts = options(scenario.clone(), &tmp.path().join("out2"));
    opts.overrides = vec!["channel.ticks=60".to_string()];
    let err = cmd_run(&opts).unwrap_err();
    assert_eq!(err.code, chanloop_cli::EXIT_RUNTIME, "{}", err.message);

    let looped = tmp.path().join("looped.toml");
    fs::write(&looped, body.replace("file = \"feed.csv\"", "file = \"feed.csv\"\nloop = true")).unwrap();
    let mut opts = options(looped, &tmp.path().join("out3"));
    opts.overrides = vec!["channel.ticks=60".to_string()];
    cmd_run(&opts).unwrap();
}

#[test]
fn malformed_trace_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.csv"), "0,feed,1.0\n1,feed\n").unwrap();
    let scenario = tmp.path().join("traced.toml");
    fs::write(
        &scenario,
        r#"
[channel]
capacity = 50.0
ticks = 2
seed = 1

[[classes]]
id = "feed"
priority = 1
initial_width = 50.0
critical_min = 5.0

[classes.source]
kind = "trace"
file = "bad.csv"
"#,
    )
    .unwrap();
    let err = cmd_run(&options(scenario, &tmp.path().join("out"))).unwrap_err();
    assert_eq!(err.code, EXIT_INPUT);
    assert!(err.message.contains("line 2"), "message: {}", err.message);
}

#[test]
fn scenario_roundtrip_through_emitter() {
    let src = fs::read_to_string(repo_path("scenarios/two_class_burst.toml")).unwrap();
    let spec = files::parse_scenario(&src, None).unwrap();
    let emitted = files::emit_scenario(&spec);
    let reparsed = files::parse_scenario(&emitted, None).unwrap();
    assert_eq!(spec, reparsed);
}

#[test]
fn apply_overrides_is_pure_text_transform() {
    let src = "[channel]\ncapacity = 100.0\nticks = 5\n";
    assert_eq!(apply_overrides(src, &[]).unwrap(), src);
}
