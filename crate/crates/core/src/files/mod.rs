//! On-disk formats: scenario and model files (TOML), trace and trajectory
//! files (CSV), and the CSV/text writers for series, histograms, and reports.

mod model;
mod report;
mod scenario;
mod trace;

pub use model::{emit_model, parse_model};
pub use report::{comparison_text, histogram_csv, report_text, series_csv};
pub use scenario::{emit_scenario, parse_scenario};
pub use trace::{parse_trace, parse_trajectory, trajectory_csv};

/// Exact-roundtrip float formatting for the TOML emitters; integral values
/// keep a trailing `.0` so they stay floats on re-parse.
pub(crate) fn fmt_float(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// 1-based line number of byte offset `at` in `src`.
pub(crate) fn line_of(src: &str, at: usize) -> usize {
    let end = at.min(src.len());
    src.as_bytes()[..end].iter().filter(|b| **b == b'\n').count() + 1
}
