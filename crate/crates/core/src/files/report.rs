//! Plot-ready CSV and human-readable text writers. Column order is stable so
//! outputs can be diffed across runs.

use std::fmt::Write as _;

use crate::metrics::{ComparisonReport, LoadHistogram, RunReport};
use crate::plant::LoadSeries;

/// One row per tick per class: `tick,class,offered,carried,backlog,dropped,width`.
pub fn series_csv(series: &LoadSeries) -> String {
    let mut out = String::from("tick,class,offered,carried,backlog,dropped,width\n");
    for m in series {
        for c in &m.classes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m.tick, c.class_id, c.offered, c.carried, c.backlog, c.dropped, c.width
            );
        }
    }
    out
}

/// `bin_lo,bin_hi,frequency` rows.
pub fn histogram_csv(hist: &LoadHistogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,frequency\n");
    for (i, f) in hist.frequencies.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", hist.bin_edges[i], hist.bin_edges[i + 1], f);
    }
    out
}

pub fn report_text(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ticks:               {}", report.ticks);
    let _ = writeln!(out, "control activations: {}", report.activations);
    let _ = writeln!(out, "peak utilization:    {:.6}", report.peak_utilization);
    let _ = writeln!(
        out,
        "tail mass (>{:.2}):   {:.6}",
        report.tail_threshold, report.tail_mass
    );
    if report.histogram.clamped > 0 {
        let _ = writeln!(
            out,
            "warning: {} utilization samples above 1.0 clamped into the last bin",
            report.histogram.clamped
        );
    }
    let _ = writeln!(out, "total offered:       {:.6}", report.total.offered);
    let _ = writeln!(out, "total carried:       {:.6}", report.total.carried);
    let _ = writeln!(out, "total dropped:       {:.6}", report.total.dropped);
    let _ = writeln!(out, "total drop ratio:    {:.6}", report.total.drop_ratio());
    let _ = writeln!(out);
    let _ = writeln!(out, "class,offered,carried,dropped,drop_ratio");
    for (id, totals) in &report.per_class {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            id,
            totals.offered,
            totals.carried,
            totals.dropped,
            totals.drop_ratio()
        );
    }
    out
}

pub fn comparison_text(cmp: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "metric,without_control,with_control,delta");
    let _ = writeln!(
        out,
        "total_dropped,{:.6},{:.6},{:.6}",
        cmp.base_dropped, cmp.controlled_dropped, cmp.drop_delta
    );
    let _ = writeln!(
        out,
        "tail_mass,{:.6},{:.6},{:.6}",
        cmp.base_tail_mass, cmp.controlled_tail_mass, cmp.tail_delta
    );
    let _ = writeln!(
        out,
        "peak_utilization,{:.6},{:.6},{:.6}",
        cmp.base_peak,
        cmp.controlled_peak,
        cmp.controlled_peak - cmp.base_peak
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "drop ratio (with/without): {:.6}", cmp.drop_ratio);
    let _ = writeln!(
        out,
        "drops improved:            {}",
        if cmp.improved_drops { "yes" } else { "no" }
    );
    let _ = writeln!(
        out,
        "tail mass improved:        {}",
        if cmp.improved_tail { "yes" } else { "no" }
    );
    let _ = writeln!(out, "control activations:       {}", cmp.controlled_activations);
    let _ = writeln!(out);
    let _ = writeln!(out, "class,drop_delta");
    for (id, delta) in &cmp.per_class_drop_delta {
        let _ = writeln!(out, "{id},{delta:.6}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{histogram, ReportConfig};
    use crate::plant::{ClassMeasure, Measurement};

    fn tiny_series() -> LoadSeries {
        vec![Measurement {
            tick: 0,
            classes: vec![ClassMeasure {
                class_id: "c".into(),
                offered: 10.0,
                carried: 8.0,
                backlog: 1.0,
                dropped: 1.0,
                width: 8.0,
            }],
            utilization: 0.8,
        }]
    }

    #[test]
    fn series_csv_shape() {
        let csv = series_csv(&tiny_series());
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "tick,class,offered,carried,backlog,dropped,width"
        );
        assert_eq!(lines.next().unwrap(), "0,c,10,8,1,1,8");
    }

    #[test]
    fn histogram_csv_rows_match_bins() {
        let hist = histogram(&[0.1, 0.9], 4).unwrap();
        let csv = histogram_csv(&hist);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0.25,"));
    }

    #[test]
    fn report_text_is_stable() {
        let report = RunReport::from_series(&tiny_series(), &ReportConfig::default(), 0).unwrap();
        let a = report_text(&report);
        let b = report_text(&report);
        assert_eq!(a, b);
        assert!(a.contains("total dropped"));
    }
}
