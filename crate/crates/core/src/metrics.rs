//! Histograms, drop statistics, and controlled-vs-uncontrolled comparison.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::plant::LoadSeries;

/// Equal-width empirical histogram over utilization in [0, 1]. The last bin
/// is right-inclusive; samples above 1 are clamped into it and counted.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadHistogram {
    pub bin_edges: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Number of samples above 1.0 that were clamped into the last bin.
    pub clamped: usize,
}

impl LoadHistogram {
    pub fn nbins(&self) -> usize {
        self.frequencies.len()
    }
}

pub fn histogram(samples: &[f64], nbins: usize) -> Result<LoadHistogram> {
    if samples.is_empty() {
        return Err(Error::Empty("histogram samples"));
    }
    if nbins < 1 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let mut counts = vec![0usize; nbins];
    let mut clamped = 0usize;
    for &s in samples {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::invalid(format!("utilization sample {s} outside [0, 1]")));
        }
        let idx = if s > 1.0 {
            clamped += 1;
            nbins - 1
        } else {
            // Right-inclusive last bin: 1.0 lands in bin nbins-1.
            ((s * nbins as f64).floor() as usize).min(nbins - 1)
        };
        counts[idx] += 1;
    }
    let total = samples.len() as f64;
    Ok(LoadHistogram {
        bin_edges: (0..=nbins).map(|i| i as f64 / nbins as f64).collect(),
        frequencies: counts.iter().map(|&c| c as f64 / total).collect(),
        clamped,
    })
}

/// Fraction of samples strictly above `threshold`.
pub fn tail_mass(samples: &[f64], threshold: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("tail mass samples"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid("tail threshold must lie in [0, 1]"));
    }
    let above = samples.iter().filter(|s| **s > threshold).count();
    Ok(above as f64 / samples.len() as f64)
}

/// Offered/carried/dropped sums for one class or the whole channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Totals {
    pub offered: f64,
    pub carried: f64,
    pub dropped: f64,
}

impl Totals {
    pub fn drop_ratio(&self) -> f64 {
        if self.offered > 0.0 {
            self.dropped / self.offered
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportConfig {
    pub nbins: usize,
    pub tail_threshold: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            nbins: 20,
            tail_threshold: 0.9,
        }
    }
}

/// Summary of one run: totals, drop ratios, the utilization histogram, tail
/// mass, peak utilization, and how often the controller fired.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub per_class: BTreeMap<String, Totals>,
    pub total: Totals,
    pub histogram: LoadHistogram,
    pub tail_threshold: f64,
    pub tail_mass: f64,
    pub peak_utilization: f64,
    pub activations: usize,
    pub ticks: usize,
}

impl RunReport {
    pub fn from_series(series: &LoadSeries, cfg: &ReportConfig, activations: usize) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Empty("load series"));
        }
        let mut per_class: BTreeMap<String, Totals> = BTreeMap::new();
        let mut total = Totals {
            offered: 0.0,
            carried: 0.0,
            dropped: 0.0,
        };
        let mut utilizations = Vec::with_capacity(series.len());
        for m in series {
            utilizations.push(m.utilization);
            for c in &m.classes {
                let entry = per_class.entry(c.class_id.clone()).or_insert(Totals {
                    offered: 0.0,
                    carried: 0.0,
                    dropped: 0.0,
                });
                entry.offered += c.offered;
                entry.carried += c.carried;
                entry.dropped += c.dropped;
                total.offered += c.offered;
                total.carried += c.carried;
                total.dropped += c.dropped;
            }
        }
        let hist = histogram(&utilizations, cfg.nbins)?;
        let tail = tail_mass(&utilizations, cfg.tail_threshold)?;
        let peak = utilizations.iter().cloned().fold(0.0, f64::max);
        Ok(RunReport {
            per_class,
            total,
            histogram: hist,
            tail_threshold: cfg.tail_threshold,
            tail_mass: tail,
            peak_utilization: peak,
            activations,
            ticks: series.len(),
        })
    }
}

/// Deltas between two runs of the same scenario, control off vs. on.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub base_dropped: f64,
    pub controlled_dropped: f64,
    pub drop_delta: f64,
    /// controlled/base; 1.0 when the base saw no drops.
    pub drop_ratio: f64,
    pub improved_drops: bool,
    pub base_tail_mass: f64,
    pub controlled_tail_mass: f64,
    pub tail_delta: f64,
    pub improved_tail: bool,
    pub base_peak: f64,
    pub controlled_peak: f64,
    pub controlled_activations: usize,
    pub per_class_drop_delta: BTreeMap<String, f64>,
}

pub fn compare(base: &RunReport, controlled: &RunReport) -> Result<ComparisonReport> {
    let base_ids: Vec<&String> = base.per_class.keys().collect();
    let controlled_ids: Vec<&String> = controlled.per_class.keys().collect();
    if base_ids != controlled_ids {
        return Err(Error::invalid(
            "comparison requires identical class sets in both reports",
        ));
    }
    let per_class_drop_delta = base
        .per_class
        .iter()
        .map(|(id, b)| {
            let c = &controlled.per_class[id];
            (id.clone(), c.dropped - b.dropped)
        })
        .collect();
    Ok(ComparisonReport {
        base_dropped: base.total.dropped,
        controlled_dropped: controlled.total.dropped,
        drop_delta: controlled.total.dropped - base.total.dropped,
        drop_ratio: if base.total.dropped > 0.0 {
            controlled.total.dropped / base.total.dropped
        } else {
            1.0
        },
        improved_drops: controlled.total.dropped < base.total.dropped,
        base_tail_mass: base.tail_mass,
        controlled_tail_mass: controlled.tail_mass,
        tail_delta: controlled.tail_mass - base.tail_mass,
        improved_tail: controlled.tail_mass < base.tail_mass,
        base_peak: base.peak_utilization,
        controlled_peak: controlled.peak_utilization,
        controlled_activations: controlled.activations,
        per_class_drop_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn histogram_single_value() {
        let h = histogram(&[0.5; 12], 10).unwrap();
        assert_eq!(h.frequencies[5], 1.0);
        assert_eq!(h.frequencies.iter().filter(|f| **f > 0.0).count(), 1);
    }

    #[test]
    fn histogram_hand_binned() {
        let h = histogram(&[0.05, 0.15, 0.95], 10).unwrap();
        for (i, f) in h.frequencies.iter().enumerate() {
            let expected = if i == 0 || i == 1 || i == 9 { 1.0 / 3.0 } else { 0.0 };
            assert_abs_diff_eq!(*f, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn histogram_frequencies_sum_to_one() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(1..500);
            let samples: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let nbins = rng.random_range(1..40);
            let h = histogram(&samples, nbins).unwrap();
            assert_abs_diff_eq!(h.frequencies.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn histogram_last_bin_right_inclusive_and_clamps() {
        let h = histogram(&[1.0, 1.3], 10).unwrap();
        assert_eq!(h.frequencies[9], 1.0);
        assert_eq!(h.clamped, 1);
    }

    #[test]
    fn histogram_refinement_preserves_mass() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..=1.0)).collect();
        let coarse = histogram(&samples, 10).unwrap();
        let fine = histogram(&samples, 20).unwrap();
        for k in 0..10 {
            let merged = fine.frequencies[2 * k] + fine.frequencies[2 * k + 1];
            assert_abs_diff_eq!(coarse.frequencies[k], merged, epsilon = 1e-12);
        }
    }

    #[test]
    fn histogram_rejects_empty() {
        assert!(matches!(histogram(&[], 10).unwrap_err(), Error::Empty(_)));
    }

    #[test]
    fn tail_mass_counts_strictly_above() {
        let samples = [0.5, 0.95, 0.99];
        assert_abs_diff_eq!(tail_mass(&samples, 0.9).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tail_mass(&samples, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        let with_zero = [0.0, 0.0, 0.5];
        assert_abs_diff_eq!(
            tail_mass(&with_zero, 0.0).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn tail_mass_monotone_in_threshold() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..=1.0)).collect();
        let mut last = 1.0;
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let mass = tail_mass(&samples, t).unwrap();
            assert!(mass <= last + 1e-15);
            last = mass;
        }
    }

    fn report_with(dropped: f64, tail: f64) -> RunReport {
        RunReport {
            per_class: [(
                "c".to_string(),
                Totals {
                    offered: 1000.0,
                    carried: 1000.0 - dropped,
                    dropped,
                },
            )]
            .into(),
            total: Totals {
                offered: 1000.0,
                carried: 1000.0 - dropped,
                dropped,
            },
            histogram: histogram(&[0.5], 10).unwrap(),
            tail_threshold: 0.9,
            tail_mass: tail,
            peak_utilization: 0.97,
            activations: 0,
            ticks: 100,
        }
    }

    #[test]
    fn compare_identical_reports_is_zero_delta() {
        let r = report_with(100.0, 0.2);
        let c = compare(&r, &r).unwrap();
        assert_eq!(c.drop_delta, 0.0);
        assert_eq!(c.tail_delta, 0.0);
        assert!(!c.improved_drops);
        assert!(!c.improved_tail);
    }

    #[test]
    fn compare_reports_improvement() {
        let base = report_with(100.0, 0.2);
        let controlled = report_with(60.0, 0.1);
        let c = compare(&base, &controlled).unwrap();
        assert_abs_diff_eq!(c.drop_delta, -40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.drop_ratio, 0.6, epsilon = 1e-12);
        assert!(c.improved_drops);
        assert!(c.improved_tail);
    }

    #[test]
    fn compare_rejects_mismatched_classes() {
        let base = report_with(100.0, 0.2);
        let mut controlled = report_with(60.0, 0.1);
        controlled.per_class.insert(
            "extra".to_string(),
            Totals {
                offered: 0.0,
                carried: 0.0,
                dropped: 0.0,
            },
        );
        assert!(compare(&base, &controlled).is_err());
    }

    #[test]
    fn drop_ratio_bounds() {
        let t = Totals {
            offered: 0.0,
            carried: 0.0,
            dropped: 0.0,
        };
        assert_eq!(t.drop_ratio(), 0.0);
        let t = Totals {
            offered: 10.0,
            carried: 4.0,
            dropped: 6.0,
        };
        assert!(t.drop_ratio() >= 0.0 && t.drop_ratio() <= 1.0);
    }
}
