//! Command implementations behind the `chanloop` binary. Each command
//! returns its stdout text or a [`CmdError`] carrying the process exit code:
//! 1 for input errors, 2 for runtime errors, 3 for analysis failures.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chanloop_core::error::Error as CoreError;
use chanloop_core::files;
use chanloop_core::metrics::{compare, ReportConfig, RunReport};
use chanloop_core::plant::{run_scenario, RunOutput, ScenarioSpec};
use chanloop_core::statespace::{identify, spectral_radius, StateSpaceModel};

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_ANALYSIS: i32 = 3;

#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CmdError {}

fn input_err(context: &str, e: impl std::fmt::Display) -> CmdError {
    CmdError {
        code: EXIT_INPUT,
        message: format!("{context}: {e}"),
    }
}

fn runtime_err(context: &str, e: impl std::fmt::Display) -> CmdError {
    CmdError {
        code: EXIT_RUNTIME,
        message: format!("{context}: {e}"),
    }
}

fn read_input(path: &Path) -> Result<String, CmdError> {
    fs::read_to_string(path).map_err(|e| input_err(&path.display().to_string(), e))
}

fn write_output(path: &Path, contents: &str) -> Result<(), CmdError> {
    fs::write(path, contents).map_err(|e| runtime_err(&path.display().to_string(), e))
}

/// Shared flags for `run` and `compare`.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub scenario: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    /// `dotted.key=value` overrides applied to the scenario document.
    pub overrides: Vec<String>,
    pub report: ReportConfig,
}

fn parse_override(entry: &str) -> Result<(&str, &str), CmdError> {
    entry
        .split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| {
            input_err(
                "--set",
                format!("`{entry}` is not of the form dotted.key=value"),
            )
        })
}

fn toml_value_for(existing: Option<&toml::Value>, raw: &str) -> toml::Value {
    use toml::Value;
    match existing {
        Some(Value::Boolean(_)) => {
            if let Ok(b) = raw.parse::<bool>() {
                return Value::Boolean(b);
            }
        }
        Some(Value::Integer(_)) => {
            if let Ok(i) = raw.parse::<i64>() {
                return Value::Integer(i);
            }
        }
        Some(Value::Float(_)) => {
            if let Ok(f) = raw.parse::<f64>() {
                return Value::Float(f);
            }
        }
        Some(Value::String(_)) => return Value::String(raw.to_string()),
        _ => {}
    }
    if let Ok(b) = raw.parse::<bool>() {
        Value::Boolean(b)
    } else if let Ok(i) = raw.parse::<i64>() {
        Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        Value::Float(f)
    } else {
        Value::String(raw.to_string())
    }
}

/// Apply `dotted.key=value` overrides to a scenario document. Segments that
/// parse as integers index into arrays (`classes.0.initial_width=…`).
pub fn apply_overrides(src: &str, sets: &[String]) -> Result<String, CmdError> {
    if sets.is_empty() {
        return Ok(src.to_string());
    }
    let mut table: toml::Table =
        toml::from_str(src).map_err(|e| input_err("scenario", e.message()))?;
    for entry in sets {
        let (key, raw_value) = parse_override(entry)?;
        let segments: Vec<&str> = key.split('.').collect();
        set_path(&mut toml::Value::Table(std::mem::take(&mut table)), &segments, raw_value)
            .map_err(|msg| input_err("--set", format!("`{key}`: {msg}")))
            .and_then(|v| match v {
                toml::Value::Table(t) => {
                    table = t;
                    Ok(())
                }
                _ => Err(input_err("--set", "document root must stay a table")),
            })?;
    }
    toml::to_string(&table).map_err(|e| runtime_err("scenario", e))
}

fn set_path(
    value: &mut toml::Value,
    segments: &[&str],
    raw: &str,
) -> Result<toml::Value, String> {
    fn go(node: &mut toml::Value, segments: &[&str], raw: &str) -> Result<(), String> {
        let (head, rest) = segments
            .split_first()
            .ok_or_else(|| "empty key".to_string())?;
        match node {
            toml::Value::Table(table) => {
                if rest.is_empty() {
                    let existing = table.get(*head);
                    let new = toml_value_for(existing, raw);
                    table.insert((*head).to_string(), new);
                    Ok(())
                } else {
                    let child = table
                        .get_mut(*head)
                        .ok_or_else(|| format!("no key `{head}`"))?;
                    go(child, rest, raw)
                }
            }
            toml::Value::Array(items) => {
                let idx: usize = head
                    .parse()
                    .map_err(|_| format!("`{head}` is not an array index"))?;
                let child = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("index {idx} out of range"))?;
                if rest.is_empty() {
                    *child = toml_value_for(Some(child), raw);
                    Ok(())
                } else {
                    go(child, rest, raw)
                }
            }
            _ => Err(format!("`{head}` does not address a table or array")),
        }
    }
    go(value, segments, raw)?;
    Ok(std::mem::replace(value, toml::Value::Boolean(false)))
}

fn load_scenario(opts: &RunOptions) -> Result<ScenarioSpec, CmdError> {
    let src = read_input(&opts.scenario)?;
    let mut sets = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        sets.push(format!("channel.seed={seed}"));
    }
    let patched = apply_overrides(&src, &sets)?;
    let dir = opts
        .scenario
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    files::parse_scenario(&patched, Some(&dir))
        .map_err(|e| input_err(&opts.scenario.display().to_string(), e))
}

fn execute(spec: &ScenarioSpec, report_cfg: &ReportConfig) -> Result<(RunOutput, RunReport), CmdError> {
    let output = run_scenario(spec).map_err(|e| runtime_err("simulation", e))?;
    let report = RunReport::from_series(&output.series, report_cfg, output.activations)
        .map_err(|e| runtime_err("report", e))?;
    Ok((output, report))
}

fn write_run_outputs(
    dir: &Path,
    output: &RunOutput,
    report: &RunReport,
) -> Result<(), CmdError> {
    fs::create_dir_all(dir).map_err(|e| runtime_err(&dir.display().to_string(), e))?;
    write_output(&dir.join("series.csv"), &files::series_csv(&output.series))?;
    write_output(&dir.join("report.txt"), &files::report_text(report))?;
    write_output(
        &dir.join("histogram.csv"),
        &files::histogram_csv(&report.histogram),
    )?;
    Ok(())
}

/// `chanloop run`: simulate one scenario and write series, report, histogram.
pub fn cmd_run(opts: &RunOptions) -> Result<String, CmdError> {
    let spec = load_scenario(opts)?;
    let (output, report) = execute(&spec, &opts.report)?;
    write_run_outputs(&opts.out_dir, &output, &report)?;
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "ran {} ticks, {} control activations",
        spec.ticks, output.activations
    );
    let _ = writeln!(
        summary,
        "total dropped: {:.6} (drop ratio {:.6})",
        report.total.dropped,
        report.total.drop_ratio()
    );
    let _ = write!(summary, "outputs in {}", opts.out_dir.display());
    Ok(summary)
}

/// `chanloop compare`: run the scenario with control off and on (identical
/// seeds) and write both runs plus the comparison.
pub fn cmd_compare(opts: &RunOptions) -> Result<String, CmdError> {
    let spec = load_scenario(opts)?;
    let mut without = spec.clone();
    without.control_enabled = false;
    let mut with = spec;
    with.control_enabled = true;

    let (out_base, report_base) = execute(&without, &opts.report)?;
    let (out_ctrl, report_ctrl) = execute(&with, &opts.report)?;

    write_run_outputs(&opts.out_dir.join("without_control"), &out_base, &report_base)?;
    write_run_outputs(&opts.out_dir.join("with_control"), &out_ctrl, &report_ctrl)?;

    let comparison = compare(&report_base, &report_ctrl).map_err(|e| runtime_err("compare", e))?;
    let text = files::comparison_text(&comparison);
    write_output(&opts.out_dir.join("comparison.txt"), &text)?;

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "dropped without control: {:.6}",
        comparison.base_dropped
    );
    let _ = writeln!(
        summary,
        "dropped with control:    {:.6}",
        comparison.controlled_dropped
    );
    let _ = writeln!(
        summary,
        "tail mass without/with:  {:.6} / {:.6}",
        comparison.base_tail_mass, comparison.controlled_tail_mass
    );
    let _ = write!(summary, "outputs in {}", opts.out_dir.display());
    Ok(summary)
}

/// `chanloop analyze`: stability, controllability, observability of a model.
pub fn cmd_analyze(model_path: &Path) -> Result<String, CmdError> {
    let src = read_input(model_path)?;
    let model = files::parse_model(&src)
        .map_err(|e| input_err(&model_path.display().to_string(), e))?;
    let radius =
        spectral_radius(model.a()).map_err(|e| runtime_err("spectral radius", e))?;
    let n = model.state_dim();
    let ctrb_rank = chanloop_core::numerical_rank(&model.controllability_matrix(), n);
    let obsv_rank = chanloop_core::numerical_rank(&model.observability_matrix(), n);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "model: n={} m={} p={}",
        n,
        model.input_dim(),
        model.output_dim()
    );
    let _ = writeln!(out, "spectral radius: {radius:.9}");
    let _ = writeln!(out, "stable: {}", if radius < 1.0 { "yes" } else { "no" });
    let _ = writeln!(
        out,
        "controllability rank: {ctrb_rank}/{n} ({})",
        if ctrb_rank == n {
            "controllable"
        } else {
            "not controllable"
        }
    );
    let _ = write!(
        out,
        "observability rank: {obsv_rank}/{n} ({})",
        if obsv_rank == n {
            "observable"
        } else {
            "not observable"
        }
    );
    Ok(out)
}

/// `chanloop identify`: fit (A, B) to a recorded trajectory and write the
/// result as a model file.
pub fn cmd_identify(trajectory_path: &Path, out_dir: &Path) -> Result<String, CmdError> {
    let src = read_input(trajectory_path)?;
    let traj = files::parse_trajectory(&src)
        .map_err(|e| input_err(&trajectory_path.display().to_string(), e))?;
    let fit = identify(&traj).map_err(|e| match e {
        CoreError::InsufficientSamples { .. } | CoreError::Unidentifiable(_) => CmdError {
            code: EXIT_ANALYSIS,
            message: format!("identification: {e}"),
        },
        other => runtime_err("identification", other),
    })?;
    let model = StateSpaceModel::new(fit.a, fit.b)
        .map_err(|e| runtime_err("identified model", e))?;
    fs::create_dir_all(out_dir).map_err(|e| runtime_err(&out_dir.display().to_string(), e))?;
    let path = out_dir.join("identified.toml");
    write_output(&path, &files::emit_model(&model, Some(fit.residual)))?;
    Ok(format!(
        "identified n={} m={} model, residual {:.3e}\nwritten to {}",
        model.state_dim(),
        model.input_dim(),
        fit.residual,
        path.display()
    ))
}
