//! Scenario files: a `[channel]` section, one `[[classes]]` entry per traffic
//! class with its `[classes.source]`, and an optional `[controller]` section.
//! Unknown keys are rejected; malformed values report their line.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use crate::controller::{ControllerConfig, ThresholdBasis, TrafficClassSpec};
use crate::error::{Error, Result};
use crate::forecast::ForecastMethod;
use crate::plant::{ClassScenario, ScenarioSpec, SourceKind, TrafficSource};

use super::{fmt_float, line_of};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    channel: RawChannel,
    #[serde(default)]
    classes: Vec<RawClass>,
    controller: Option<RawController>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    capacity: Spanned<f64>,
    ticks: Spanned<i64>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    id: String,
    priority: Spanned<i64>,
    initial_width: Spanned<f64>,
    critical_min: Spanned<f64>,
    buffer: Option<Spanned<f64>>,
    source: RawSource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    kind: Spanned<String>,
    rate: Option<Spanned<f64>>,
    on_rate: Option<Spanned<f64>>,
    off_rate: Option<Spanned<f64>>,
    on_len: Option<Spanned<i64>>,
    off_len: Option<Spanned<i64>>,
    phase: Option<u64>,
    mean: Option<Spanned<f64>>,
    file: Option<Spanned<String>>,
    samples: Option<Vec<f64>>,
    #[serde(rename = "loop")]
    looped: Option<bool>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    enabled: Option<bool>,
    threshold: Option<Spanned<f64>>,
    beta: Option<Spanned<f64>>,
    cooldown: Option<Spanned<i64>>,
    window: Option<Spanned<i64>>,
    horizon: Option<Spanned<i64>>,
    method: Option<Spanned<String>>,
    threshold_basis: Option<Spanned<String>>,
}

fn err_at<T>(src: &str, spanned: &Spanned<T>, msg: impl Into<String>) -> Error {
    Error::parse(line_of(src, spanned.span().start), msg)
}

fn positive_f64(src: &str, value: &Spanned<f64>, what: &str) -> Result<f64> {
    let v = *value.get_ref();
    if !v.is_finite() || v <= 0.0 {
        return Err(err_at(src, value, format!("{what} must be finite and positive")));
    }
    Ok(v)
}

fn non_negative_f64(src: &str, value: &Spanned<f64>, what: &str) -> Result<f64> {
    let v = *value.get_ref();
    if !v.is_finite() || v < 0.0 {
        return Err(err_at(src, value, format!("{what} must be finite and >= 0")));
    }
    Ok(v)
}

fn positive_i64(src: &str, value: &Spanned<i64>, what: &str) -> Result<u64> {
    let v = *value.get_ref();
    if v < 1 {
        return Err(err_at(src, value, format!("{what} must be at least 1")));
    }
    Ok(v as u64)
}

fn forbid<T>(src: &str, field: &Option<Spanned<T>>, kind: &str, name: &str) -> Result<()> {
    if let Some(f) = field {
        return Err(err_at(
            src,
            f,
            format!("`{name}` does not apply to a `{kind}` source"),
        ));
    }
    Ok(())
}

fn convert_source(
    src: &str,
    raw: &RawSource,
    class_id: &str,
    trace_dir: Option<&Path>,
) -> Result<TrafficSource> {
    let kind_name = raw.kind.get_ref().as_str();
    let kind = match kind_name {
        "constant" => {
            forbid(src, &raw.on_rate, kind_name, "on_rate")?;
            forbid(src, &raw.off_rate, kind_name, "off_rate")?;
            forbid(src, &raw.on_len, kind_name, "on_len")?;
            forbid(src, &raw.off_len, kind_name, "off_len")?;
            forbid(src, &raw.mean, kind_name, "mean")?;
            forbid(src, &raw.file, kind_name, "file")?;
            let rate = raw
                .rate
                .as_ref()
                .ok_or_else(|| err_at(src, &raw.kind, "constant source needs `rate`"))?;
            SourceKind::Constant {
                rate: non_negative_f64(src, rate, "rate")?,
            }
        }
        "on-off" => {
            forbid(src, &raw.rate, kind_name, "rate")?;
            forbid(src, &raw.mean, kind_name, "mean")?;
            forbid(src, &raw.file, kind_name, "file")?;
            let missing = || err_at(
                src,
                &raw.kind,
                "on-off source needs `on_rate`, `off_rate`, `on_len`, `off_len`",
            );
            let on_rate = raw.on_rate.as_ref().ok_or_else(missing)?;
            let off_rate = raw.off_rate.as_ref().ok_or_else(missing)?;
            let on_len = raw.on_len.as_ref().ok_or_else(missing)?;
            let off_len = raw.off_len.as_ref().ok_or_else(missing)?;
            let on_len_v = *on_len.get_ref();
            let off_len_v = *off_len.get_ref();
            if on_len_v < 0 || off_len_v < 0 {
                return Err(err_at(src, on_len, "phase lengths must be >= 0"));
            }
            if on_len_v + off_len_v == 0 {
                return Err(err_at(src, on_len, "on-off period must be positive"));
            }
            SourceKind::OnOff {
                on_rate: non_negative_f64(src, on_rate, "on_rate")?,
                off_rate: non_negative_f64(src, off_rate, "off_rate")?,
                on_len: on_len_v as u64,
                off_len: off_len_v as u64,
                phase: raw.phase.unwrap_or(0),
            }
        }
        "poisson" => {
            forbid(src, &raw.rate, kind_name, "rate")?;
            forbid(src, &raw.on_rate, kind_name, "on_rate")?;
            forbid(src, &raw.file, kind_name, "file")?;
            let mean = raw
                .mean
                .as_ref()
                .ok_or_else(|| err_at(src, &raw.kind, "poisson source needs `mean`"))?;
            SourceKind::Poisson {
                mean: non_negative_f64(src, mean, "mean")?,
            }
        }
        "trace" => {
            forbid(src, &raw.rate, kind_name, "rate")?;
            forbid(src, &raw.on_rate, kind_name, "on_rate")?;
            forbid(src, &raw.mean, kind_name, "mean")?;
            let samples = match (&raw.file, &raw.samples) {
                (Some(_), Some(_)) => {
                    return Err(err_at(
                        src,
                        &raw.kind,
                        "trace source takes either `file` or `samples`, not both",
                    ))
                }
                (None, Some(samples)) => samples.clone(),
                (Some(file), None) => {
                    let dir = trace_dir.ok_or_else(|| {
                        err_at(src, file, "trace `file` needs a base directory to resolve against")
                    })?;
                    let path = dir.join(file.get_ref());
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        err_at(src, file, format!("cannot read trace {}: {e}", path.display()))
                    })?;
                    let mut per_class = super::trace::parse_trace(&text)?;
                    per_class.remove(class_id).ok_or_else(|| {
                        err_at(
                            src,
                            file,
                            format!("trace {} has no rows for class `{class_id}`", path.display()),
                        )
                    })?
                }
                (None, None) => {
                    return Err(err_at(
                        src,
                        &raw.kind,
                        "trace source needs `file` or `samples`",
                    ))
                }
            };
            if samples.is_empty() {
                return Err(err_at(src, &raw.kind, "trace samples must not be empty"));
            }
            if let Some(bad) = samples.iter().find(|s| !s.is_finite() || **s < 0.0) {
                return Err(err_at(
                    src,
                    &raw.kind,
                    format!("trace sample {bad} must be finite and >= 0"),
                ));
            }
            SourceKind::Trace {
                samples,
                looped: raw.looped.unwrap_or(false),
            }
        }
        other => {
            return Err(err_at(
                src,
                &raw.kind,
                format!("unknown source kind `{other}` (expected constant, on-off, poisson, trace)"),
            ))
        }
    };
    Ok(TrafficSource {
        kind,
        seed: raw.seed.unwrap_or(0),
    })
}

fn convert_controller(src: &str, raw: Option<&RawController>) -> Result<(bool, ControllerConfig)> {
    let mut config = ControllerConfig::default();
    let Some(raw) = raw else {
        return Ok((false, config));
    };
    if let Some(threshold) = &raw.threshold {
        let v = *threshold.get_ref();
        if !(v > 0.0 && v < 1.0) {
            return Err(err_at(src, threshold, "threshold must lie strictly in (0, 1)"));
        }
        config.threshold = v;
    }
    if let Some(beta) = &raw.beta {
        config.beta = positive_f64(src, beta, "beta")?;
    }
    if let Some(cooldown) = &raw.cooldown {
        config.cooldown = positive_i64(src, cooldown, "cooldown")?;
    }
    if let Some(window) = &raw.window {
        let v = *window.get_ref();
        if v < 2 {
            return Err(err_at(src, window, "window must be at least 2"));
        }
        config.forecast.window = v as usize;
    }
    if let Some(horizon) = &raw.horizon {
        config.forecast.horizon = positive_i64(src, horizon, "horizon")?;
    }
    if let Some(method) = &raw.method {
        config.forecast.method = match method.get_ref().as_str() {
            "linear-trend" => ForecastMethod::LinearTrend,
            "model-bank" => ForecastMethod::ModelBank,
            other => {
                return Err(err_at(
                    src,
                    method,
                    format!("unknown forecast method `{other}` (expected linear-trend or model-bank)"),
                ))
            }
        };
    }
    if let Some(basis) = &raw.threshold_basis {
        config.basis = match basis.get_ref().as_str() {
            "allocation" => ThresholdBasis::Allocation,
            "capacity" => ThresholdBasis::Capacity,
            other => {
                return Err(err_at(
                    src,
                    basis,
                    format!("unknown threshold basis `{other}` (expected allocation or capacity)"),
                ))
            }
        };
    }
    Ok((raw.enabled.unwrap_or(true), config))
}

/// Parse scenario TOML. `trace_dir` is the directory trace `file` entries are
/// resolved against (normally the scenario file's parent).
pub fn parse_scenario(src: &str, trace_dir: Option<&Path>) -> Result<ScenarioSpec> {
    let raw: RawScenario = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of(src, s.start)).unwrap_or(1);
        Error::parse(line, e.message().to_string())
    })?;

    let capacity = positive_f64(src, &raw.channel.capacity, "capacity")?;
    let ticks = positive_i64(src, &raw.channel.ticks, "ticks")?;
    let seed = raw.channel.seed.unwrap_or(0);

    let mut classes = Vec::with_capacity(raw.classes.len());
    for class in &raw.classes {
        let priority = positive_i64(src, &class.priority, "priority")?;
        if priority > u32::MAX as u64 {
            return Err(err_at(src, &class.priority, "priority is out of range"));
        }
        let critical_min = non_negative_f64(src, &class.critical_min, "critical_min")?;
        let initial_width = non_negative_f64(src, &class.initial_width, "initial_width")?;
        if initial_width < critical_min {
            return Err(err_at(
                src,
                &class.initial_width,
                "initial_width must be at least critical_min",
            ));
        }
        let buffer_size = match &class.buffer {
            Some(buffer) => non_negative_f64(src, buffer, "buffer")?,
            None => 2.0 * initial_width,
        };
        let source = convert_source(src, &class.source, &class.id, trace_dir)?;
        classes.push(ClassScenario {
            spec: TrafficClassSpec {
                class_id: class.id.clone(),
                priority: priority as u32,
                critical_min_width: critical_min,
                initial_width,
            },
            buffer_size,
            source,
        });
    }

    let (control_enabled, controller) = convert_controller(src, raw.controller.as_ref())?;

    let spec = ScenarioSpec {
        capacity,
        ticks,
        seed,
        classes,
        control_enabled,
        controller,
    };
    spec.validate()?;
    Ok(spec)
}

/// Render a scenario back to TOML. `parse_scenario(emit_scenario(s))` equals `s`.
pub fn emit_scenario(spec: &ScenarioSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[channel]");
    let _ = writeln!(out, "capacity = {}", fmt_float(spec.capacity));
    let _ = writeln!(out, "ticks = {}", spec.ticks);
    let _ = writeln!(out, "seed = {}", spec.seed);

    for class in &spec.classes {
        let _ = writeln!(out);
        let _ = writeln!(out, "[[classes]]");
        let _ = writeln!(out, "id = {:?}", class.spec.class_id);
        let _ = writeln!(out, "priority = {}", class.spec.priority);
        let _ = writeln!(out, "initial_width = {}", fmt_float(class.spec.initial_width));
        let _ = writeln!(out, "critical_min = {}", fmt_float(class.spec.critical_min_width));
        let _ = writeln!(out, "buffer = {}", fmt_float(class.buffer_size));
        let _ = writeln!(out);
        let _ = writeln!(out, "[classes.source]");
        match &class.source.kind {
            SourceKind::Constant { rate } => {
                let _ = writeln!(out, "kind = \"constant\"");
                let _ = writeln!(out, "rate = {}", fmt_float(*rate));
            }
            SourceKind::OnOff {
                on_rate,
                off_rate,
                on_len,
                off_len,
                phase,
            } => {
                let _ = writeln!(out, "kind = \"on-off\"");
                let _ = writeln!(out, "on_rate = {}", fmt_float(*on_rate));
                let _ = writeln!(out, "off_rate = {}", fmt_float(*off_rate));
                let _ = writeln!(out, "on_len = {on_len}");
                let _ = writeln!(out, "off_len = {off_len}");
                if *phase != 0 {
                    let _ = writeln!(out, "phase = {phase}");
                }
            }
            SourceKind::Poisson { mean } => {
                let _ = writeln!(out, "kind = \"poisson\"");
                let _ = writeln!(out, "mean = {}", fmt_float(*mean));
            }
            SourceKind::Trace { samples, looped } => {
                let _ = writeln!(out, "kind = \"trace\"");
                let rendered: Vec<String> = samples.iter().map(|s| fmt_float(*s)).collect();
                let _ = writeln!(out, "samples = [{}]", rendered.join(", "));
                if *looped {
                    let _ = writeln!(out, "loop = true");
                }
            }
        }
        if class.source.seed != 0 {
            let _ = writeln!(out, "seed = {}", class.source.seed);
        }
    }

    let _ = writeln!(out);
    let _ = writeln!(out, "[controller]");
    let _ = writeln!(out, "enabled = {}", spec.control_enabled);
    let _ = writeln!(out, "threshold = {}", fmt_float(spec.controller.threshold));
    let _ = writeln!(out, "beta = {}", fmt_float(spec.controller.beta));
    let _ = writeln!(out, "cooldown = {}", spec.controller.cooldown);
    let _ = writeln!(out, "window = {}", spec.controller.forecast.window);
    let _ = writeln!(out, "horizon = {}", spec.controller.forecast.horizon);
    let method = match spec.controller.forecast.method {
        ForecastMethod::LinearTrend => "linear-trend",
        ForecastMethod::ModelBank => "model-bank",
    };
    let _ = writeln!(out, "method = {method:?}");
    let basis = match spec.controller.basis {
        ThresholdBasis::Allocation => "allocation",
        ThresholdBasis::Capacity => "capacity",
    };
    let _ = writeln!(out, "threshold_basis = {basis:?}");
    out
}
