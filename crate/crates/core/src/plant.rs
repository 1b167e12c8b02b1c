//! Fluid simulation of the shared channel.
//!
//! Each tick every class offers load, the channel carries up to the class's
//! width, the remainder queues into a finite per-class buffer, and the excess
//! is dropped. Accounting is exact: per class and tick,
//! `offered + backlog_before == carried + backlog_after + dropped` holds
//! bit-for-bit because `dropped` is computed as the residual of that identity.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::controller::{
    AllocationState, ControlDecision, Controller, ControllerConfig, TrafficClassSpec,
};
use crate::error::{Error, Result};
use crate::forecast::LoadHistory;

/// splitmix64; used to derive independent per-source, per-tick RNG keys.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceKind {
    Constant {
        rate: f64,
    },
    /// Alternating on/off phases; `phase` shifts the cycle start.
    OnOff {
        on_rate: f64,
        off_rate: f64,
        on_len: u64,
        off_len: u64,
        phase: u64,
    },
    Poisson {
        mean: f64,
    },
    /// Fixed samples, optionally wrapped around at the end.
    Trace {
        samples: Vec<f64>,
        looped: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSource {
    pub kind: SourceKind,
    pub seed: u64,
}

impl TrafficSource {
    pub fn constant(rate: f64) -> Self {
        TrafficSource {
            kind: SourceKind::Constant { rate },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            SourceKind::Constant { rate } => {
                if !rate.is_finite() || *rate < 0.0 {
                    return Err(Error::invalid("constant source rate must be >= 0"));
                }
            }
            SourceKind::OnOff {
                on_rate,
                off_rate,
                on_len,
                off_len,
                ..
            } => {
                if !on_rate.is_finite() || *on_rate < 0.0 || !off_rate.is_finite() || *off_rate < 0.0
                {
                    return Err(Error::invalid("on/off source rates must be >= 0"));
                }
                if on_len + off_len == 0 {
                    return Err(Error::invalid("on/off source period must be positive"));
                }
            }
            SourceKind::Poisson { mean } => {
                if !mean.is_finite() || *mean < 0.0 {
                    return Err(Error::invalid("poisson source mean must be >= 0"));
                }
            }
            SourceKind::Trace { samples, .. } => {
                if samples.is_empty() {
                    return Err(Error::Empty("trace source samples"));
                }
                if samples.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Error::invalid("trace samples must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Offered load at tick `t`. Pure: the value depends only on the source
    /// parameters, the seed, and `t`.
    pub fn generate(&self, t: u64) -> Result<f64> {
        match &self.kind {
            SourceKind::Constant { rate } => Ok(*rate),
            SourceKind::OnOff {
                on_rate,
                off_rate,
                on_len,
                off_len,
                phase,
            } => {
                let period = on_len + off_len;
                let pos = (t + phase) % period;
                Ok(if pos < *on_len { *on_rate } else { *off_rate })
            }
            SourceKind::Poisson { mean } => {
                if *mean == 0.0 {
                    return Ok(0.0);
                }
                let mut rng =
                    ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(t)));
                let dist = Poisson::new(*mean)
                    .map_err(|e| Error::invalid(format!("poisson source: {e}")))?;
                Ok(dist.sample(&mut rng))
            }
            SourceKind::Trace { samples, looped } => {
                let idx = t as usize;
                if *looped {
                    Ok(samples[idx % samples.len()])
                } else {
                    samples.get(idx).copied().ok_or(Error::TraceExhausted {
                        tick: t,
                        len: samples.len(),
                    })
                }
            }
        }
    }
}

/// Finite per-class buffer holding load the channel could not carry.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassQueue {
    pub class_id: String,
    pub buffer_size: f64,
    pub backlog: f64,
}

impl ClassQueue {
    pub fn new(class_id: impl Into<String>, buffer_size: f64) -> Result<Self> {
        if !buffer_size.is_finite() || buffer_size < 0.0 {
            return Err(Error::invalid("buffer size must be finite and >= 0"));
        }
        Ok(ClassQueue {
            class_id: class_id.into(),
            buffer_size,
            backlog: 0.0,
        })
    }
}

/// Per-class figures for one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMeasure {
    pub class_id: String,
    pub offered: f64,
    pub carried: f64,
    pub backlog: f64,
    pub dropped: f64,
    pub width: f64,
}

/// Everything observed in one tick, plus channel utilization
/// (total carried over capacity).
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub tick: u64,
    pub classes: Vec<ClassMeasure>,
    pub utilization: f64,
}

impl Measurement {
    pub fn class(&self, id: &str) -> Option<&ClassMeasure> {
        self.classes.iter().find(|c| c.class_id == id)
    }

    pub fn total_carried(&self) -> f64 {
        self.classes.iter().map(|c| c.carried).sum()
    }

    pub fn total_dropped(&self) -> f64 {
        self.classes.iter().map(|c| c.dropped).sum()
    }
}

pub type LoadSeries = Vec<Measurement>;

/// Serve one tick: per class carry up to the width, queue the remainder into
/// the buffer, drop the excess.
pub fn channel_tick(
    tick: u64,
    offered: &BTreeMap<String, f64>,
    widths: &BTreeMap<String, f64>,
    queues: &mut BTreeMap<String, ClassQueue>,
    capacity: f64,
) -> Result<Measurement> {
    for id in offered.keys() {
        if !widths.contains_key(id) || !queues.contains_key(id) {
            return Err(Error::UnknownClass(id.clone()));
        }
    }
    if offered.len() != widths.len() || offered.len() != queues.len() {
        return Err(Error::invalid("class sets of offered/widths/queues differ"));
    }

    let mut classes = Vec::with_capacity(offered.len());
    for (id, load) in offered {
        if !load.is_finite() || *load < 0.0 {
            return Err(Error::NegativeLoad { class: id.clone() });
        }
        let width = widths[id];
        let queue = queues.get_mut(id).expect("checked above");

        let demand = *load + queue.backlog;
        let carried = demand.min(width);
        let rest = demand - carried;
        let backlog_after = rest.min(queue.buffer_size);
        // Residual form keeps the conservation identity exact in floats.
        let dropped = rest - backlog_after;
        queue.backlog = backlog_after;

        classes.push(ClassMeasure {
            class_id: id.clone(),
            offered: *load,
            carried,
            backlog: backlog_after,
            dropped,
            width,
        });
    }
    let utilization = classes.iter().map(|c| c.carried).sum::<f64>() / capacity;
    Ok(Measurement {
        tick,
        classes,
        utilization,
    })
}

/// Per-class scenario entry: priority spec, buffer size, and traffic source.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassScenario {
    pub spec: TrafficClassSpec,
    pub buffer_size: f64,
    pub source: TrafficSource,
}

/// A complete experiment: channel, classes, controller settings, seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub capacity: f64,
    pub ticks: u64,
    pub seed: u64,
    pub classes: Vec<ClassScenario>,
    pub control_enabled: bool,
    pub controller: ControllerConfig,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.capacity.is_finite() || self.capacity <= 0.0 {
            return Err(Error::invalid("capacity must be finite and positive"));
        }
        if self.ticks < 1 {
            return Err(Error::invalid("tick count must be at least 1"));
        }
        if self.classes.is_empty() {
            return Err(Error::Empty("scenario classes"));
        }
        let mut widths = BTreeMap::new();
        let mut priorities = std::collections::BTreeSet::new();
        for class in &self.classes {
            class.spec.validate()?;
            class.source.validate()?;
            if !class.buffer_size.is_finite() || class.buffer_size < 0.0 {
                return Err(Error::invalid(format!(
                    "class `{}`: buffer size must be finite and >= 0",
                    class.spec.class_id
                )));
            }
            if widths
                .insert(class.spec.class_id.clone(), class.spec.initial_width)
                .is_some()
            {
                return Err(Error::invalid(format!(
                    "duplicate class id `{}`",
                    class.spec.class_id
                )));
            }
            if !priorities.insert(class.spec.priority) {
                return Err(Error::invalid(format!(
                    "duplicate priority {}",
                    class.spec.priority
                )));
            }
        }
        // Sum in the same (sorted) order the allocation uses each tick, so
        // the two capacity checks cannot disagree in the last ulp.
        let total_width: f64 = widths.values().sum();
        if total_width > self.capacity {
            return Err(Error::invalid(format!(
                "initial widths sum to {total_width}, above capacity {}",
                self.capacity
            )));
        }
        self.controller.validate()
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.classes
            .iter()
            .map(|c| c.spec.class_id.clone())
            .collect()
    }

    /// Effective RNG seed for class index `idx`: the master seed mixed with
    /// the class position and the per-source seed.
    fn source_seed(&self, idx: usize) -> u64 {
        let class = &self.classes[idx];
        splitmix64(self.seed ^ splitmix64(class.source.seed ^ (idx as u64 + 1)))
    }
}

/// Full output of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub series: LoadSeries,
    pub decisions: Vec<ControlDecision>,
    pub activations: usize,
}

/// Run the closed loop: generate offered loads, serve the channel, record
/// measurements, and (when enabled) let the controller adjust widths with a
/// one-tick actuation delay. Fully deterministic given the scenario.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunOutput> {
    spec.validate()?;

    let sources: Vec<TrafficSource> = spec
        .classes
        .iter()
        .enumerate()
        .map(|(idx, class)| TrafficSource {
            kind: class.source.kind.clone(),
            seed: spec.source_seed(idx),
        })
        .collect();

    let mut widths: BTreeMap<String, f64> = spec
        .classes
        .iter()
        .map(|c| (c.spec.class_id.clone(), c.spec.initial_width))
        .collect();
    let mut queues: BTreeMap<String, ClassQueue> = spec
        .classes
        .iter()
        .map(|c| {
            Ok((
                c.spec.class_id.clone(),
                ClassQueue::new(c.spec.class_id.clone(), c.buffer_size)?,
            ))
        })
        .collect::<Result<_>>()?;
    let history_cap = spec.controller.forecast.window.max(2);
    let mut histories: BTreeMap<String, LoadHistory> = spec
        .classes
        .iter()
        .map(|c| {
            (
                c.spec.class_id.clone(),
                LoadHistory::new(c.spec.class_id.clone(), history_cap),
            )
        })
        .collect();

    let mut controller = Controller::new(
        spec.controller.clone(),
        spec.classes.iter().map(|c| c.spec.clone()).collect(),
    )?;

    let mut series = Vec::with_capacity(spec.ticks as usize);
    let mut decisions = Vec::new();
    let mut activations = 0usize;
    let mut pending: Option<BTreeMap<String, f64>> = None;

    for t in 0..spec.ticks {
        // Decisions actuate one tick after they are taken.
        if let Some(next) = pending.take() {
            widths = next;
        }

        let mut offered = BTreeMap::new();
        for (idx, class) in spec.classes.iter().enumerate() {
            offered.insert(class.spec.class_id.clone(), sources[idx].generate(t)?);
        }

        let measurement = channel_tick(t, &offered, &widths, &mut queues, spec.capacity)?;
        for class in &measurement.classes {
            histories
                .get_mut(&class.class_id)
                .expect("history exists")
                .push(t, class.offered)?;
        }
        series.push(measurement);

        // The forecaster needs two samples per class, so control starts at
        // the second tick.
        if spec.control_enabled && t >= 1 {
            let alloc = AllocationState::new(spec.capacity, widths.clone())?;
            let decision = controller.tick(t, &offered, &alloc, &histories)?;
            if decision.activated {
                activations += 1;
                pending = Some(decision.new_widths.clone());
                decisions.push(decision);
            }
        }
    }

    Ok(RunOutput {
        series,
        decisions,
        activations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ForecastConfig;

    fn one_class_maps(
        offered: f64,
        width: f64,
        buffer: f64,
        backlog: f64,
    ) -> (
        BTreeMap<String, f64>,
        BTreeMap<String, f64>,
        BTreeMap<String, ClassQueue>,
    ) {
        let mut q = ClassQueue::new("c", buffer).unwrap();
        q.backlog = backlog;
        (
            [("c".to_string(), offered)].into(),
            [("c".to_string(), width)].into(),
            [("c".to_string(), q)].into(),
        )
    }

    #[test]
    fn generate_constant() {
        let src = TrafficSource::constant(5.0);
        for t in [0, 1, 7, 1_000_000] {
            assert_eq!(src.generate(t).unwrap(), 5.0);
        }
    }

    #[test]
    fn generate_on_off_phases() {
        let src = TrafficSource {
            kind: SourceKind::OnOff {
                on_rate: 10.0,
                off_rate: 0.0,
                on_len: 3,
                off_len: 2,
                phase: 0,
            },
            seed: 0,
        };
        let got: Vec<f64> = (0..5).map(|t| src.generate(t).unwrap()).collect();
        assert_eq!(got, vec![10.0, 10.0, 10.0, 0.0, 0.0]);
    }

    #[test]
    fn generate_on_off_phase_shift() {
        let src = TrafficSource {
            kind: SourceKind::OnOff {
                on_rate: 10.0,
                off_rate: 0.0,
                on_len: 3,
                off_len: 2,
                phase: 3,
            },
            seed: 0,
        };
        let got: Vec<f64> = (0..5).map(|t| src.generate(t).unwrap()).collect();
        assert_eq!(got, vec![0.0, 0.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn generate_poisson_reproducible() {
        let src = TrafficSource {
            kind: SourceKind::Poisson { mean: 8.0 },
            seed: 99,
        };
        let first: Vec<f64> = (0..50).map(|t| src.generate(t).unwrap()).collect();
        let second: Vec<f64> = (0..50).map(|t| src.generate(t).unwrap()).collect();
        assert_eq!(first, second);
        assert!(first.iter().any(|v| *v > 0.0));
        let other_seed = TrafficSource {
            kind: SourceKind::Poisson { mean: 8.0 },
            seed: 100,
        };
        let third: Vec<f64> = (0..50).map(|t| other_seed.generate(t).unwrap()).collect();
        assert_ne!(first, third);
    }

    #[test]
    fn generate_trace_and_exhaustion() {
        let src = TrafficSource {
            kind: SourceKind::Trace {
                samples: vec![1.0, 2.0, 3.0],
                looped: false,
            },
            seed: 0,
        };
        assert_eq!(src.generate(2).unwrap(), 3.0);
        assert!(matches!(
            src.generate(3).unwrap_err(),
            Error::TraceExhausted { tick: 3, len: 3 }
        ));

        let looped = TrafficSource {
            kind: SourceKind::Trace {
                samples: vec![1.0, 2.0, 3.0],
                looped: true,
            },
            seed: 0,
        };
        assert_eq!(looped.generate(4).unwrap(), 2.0);
    }

    #[test]
    fn channel_tick_underload() {
        let (offered, widths, mut queues) = one_class_maps(10.0, 20.0, 5.0, 0.0);
        let m = channel_tick(0, &offered, &widths, &mut queues, 20.0).unwrap();
        let c = m.class("c").unwrap();
        assert_eq!((c.carried, c.backlog, c.dropped), (10.0, 0.0, 0.0));
        assert_eq!(m.utilization, 0.5);
    }

    #[test]
    fn channel_tick_overload_queues_then_drops() {
        let (offered, widths, mut queues) = one_class_maps(30.0, 20.0, 5.0, 0.0);
        let m = channel_tick(0, &offered, &widths, &mut queues, 20.0).unwrap();
        let c = m.class("c").unwrap();
        assert_eq!((c.carried, c.backlog, c.dropped), (20.0, 5.0, 5.0));
    }

    #[test]
    fn channel_tick_drains_queue() {
        let (offered, widths, mut queues) = one_class_maps(0.0, 20.0, 10.0, 7.0);
        let m = channel_tick(0, &offered, &widths, &mut queues, 20.0).unwrap();
        let c = m.class("c").unwrap();
        assert_eq!((c.carried, c.backlog, c.dropped), (7.0, 0.0, 0.0));
    }

    #[test]
    fn channel_tick_rejects_negative_load() {
        let (mut offered, widths, mut queues) = one_class_maps(0.0, 20.0, 10.0, 0.0);
        offered.insert("c".to_string(), -1.0);
        assert!(matches!(
            channel_tick(0, &offered, &widths, &mut queues, 20.0).unwrap_err(),
            Error::NegativeLoad { .. }
        ));
    }

    fn tiny_scenario(control: bool, ticks: u64) -> ScenarioSpec {
        ScenarioSpec {
            capacity: 100.0,
            ticks,
            seed: 7,
            classes: vec![
                ClassScenario {
                    spec: TrafficClassSpec {
                        class_id: "gold".into(),
                        priority: 1,
                        critical_min_width: 10.0,
                        initial_width: 50.0,
                    },
                    buffer_size: 100.0,
                    source: TrafficSource {
                        kind: SourceKind::OnOff {
                            on_rate: 70.0,
                            off_rate: 5.0,
                            on_len: 20,
                            off_len: 20,
                            phase: 0,
                        },
                        seed: 1,
                    },
                },
                ClassScenario {
                    spec: TrafficClassSpec {
                        class_id: "best-effort".into(),
                        priority: 2,
                        critical_min_width: 5.0,
                        initial_width: 50.0,
                    },
                    buffer_size: 100.0,
                    source: TrafficSource {
                        kind: SourceKind::Poisson { mean: 20.0 },
                        seed: 2,
                    },
                },
            ],
            control_enabled: control,
            controller: ControllerConfig {
                forecast: ForecastConfig {
                    window: 8,
                    horizon: 3,
                    ..ForecastConfig::default()
                },
                ..ControllerConfig::default()
            },
        }
    }

    #[test]
    fn run_without_control_keeps_widths() {
        let out = run_scenario(&tiny_scenario(false, 100)).unwrap();
        assert_eq!(out.activations, 0);
        for m in &out.series {
            for c in &m.classes {
                assert_eq!(c.width, 50.0);
            }
        }
    }

    #[test]
    fn run_underload_never_drops() {
        let mut spec = tiny_scenario(false, 200);
        for class in &mut spec.classes {
            class.source = TrafficSource::constant(10.0);
        }
        let out = run_scenario(&spec).unwrap();
        assert_eq!(
            out.series.iter().map(Measurement::total_dropped).sum::<f64>(),
            0.0
        );
    }

    #[test]
    fn run_is_deterministic() {
        let spec = tiny_scenario(true, 300);
        let a = run_scenario(&spec).unwrap();
        let b = run_scenario(&spec).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.activations, b.activations);
    }

    #[test]
    fn conservation_holds_exactly_over_run() {
        let out = run_scenario(&tiny_scenario(true, 500)).unwrap();
        let mut prev: BTreeMap<String, f64> = BTreeMap::new();
        for m in &out.series {
            for c in &m.classes {
                let before = prev.get(&c.class_id).copied().unwrap_or(0.0);
                let residual = (((c.offered + before) - c.carried) - c.backlog) - c.dropped;
                assert_eq!(residual, 0.0, "conservation broke at tick {}", m.tick);
                prev.insert(c.class_id.clone(), c.backlog);
            }
        }
    }

    #[test]
    fn widths_respect_safety_during_controlled_run() {
        let out = run_scenario(&tiny_scenario(true, 500)).unwrap();
        for m in &out.series {
            let total: f64 = m.classes.iter().map(|c| c.width).sum();
            assert!(total <= 100.0 + 1e-12);
            for c in &m.classes {
                assert!(c.carried <= c.width + 1e-12);
            }
        }
    }

    #[test]
    fn raising_width_never_increases_drops() {
        // Control off, single class, same offered sequence, wider pipe.
        let offered: Vec<f64> = (0..200)
            .map(|t| if (t / 10) % 2 == 0 { 35.0 } else { 5.0 })
            .collect();
        let drops = |width: f64| -> f64 {
            let mut queues: BTreeMap<String, ClassQueue> =
                [("c".to_string(), ClassQueue::new("c", 20.0).unwrap())].into();
            let widths: BTreeMap<String, f64> = [("c".to_string(), width)].into();
            offered
                .iter()
                .enumerate()
                .map(|(t, load)| {
                    let o: BTreeMap<String, f64> = [("c".to_string(), *load)].into();
                    channel_tick(t as u64, &o, &widths, &mut queues, 100.0)
                        .unwrap()
                        .total_dropped()
                })
                .sum()
        };
        let mut last = f64::INFINITY;
        for width in [10.0, 15.0, 20.0, 25.0, 30.0, 40.0] {
            let d = drops(width);
            assert!(d <= last + 1e-12, "drops rose when width grew");
            last = d;
        }
    }
}
