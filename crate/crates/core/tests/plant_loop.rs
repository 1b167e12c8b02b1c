//! Closed-loop simulation checks: the loop agrees with a manual replay of
//! `channel_tick`, and per-tick accounting survives arbitrary load patterns.

use std::collections::BTreeMap;

use chanloop_core::controller::{ControllerConfig, TrafficClassSpec};
use chanloop_core::forecast::ForecastConfig;
use chanloop_core::plant::{
    channel_tick, run_scenario, ClassQueue, ClassScenario, ScenarioSpec, SourceKind, TrafficSource,
};
use proptest::prelude::*;

fn burst_scenario(control: bool) -> ScenarioSpec {
    ScenarioSpec {
        capacity: 100.0,
        ticks: 400,
        seed: 11,
        classes: vec![
            ClassScenario {
                spec: TrafficClassSpec {
                    class_id: "a".into(),
                    priority: 1,
                    critical_min_width: 8.0,
                    initial_width: 50.0,
                },
                buffer_size: 120.0,
                source: TrafficSource {
                    kind: SourceKind::OnOff {
                        on_rate: 70.0,
                        off_rate: 4.0,
                        on_len: 30,
                        off_len: 30,
                        phase: 0,
                    },
                    seed: 0,
                },
            },
            ClassScenario {
                spec: TrafficClassSpec {
                    class_id: "b".into(),
                    priority: 2,
                    critical_min_width: 8.0,
                    initial_width: 50.0,
                },
                buffer_size: 120.0,
                source: TrafficSource {
                    kind: SourceKind::Poisson { mean: 25.0 },
                    seed: 5,
                },
            },
        ],
        control_enabled: control,
        controller: ControllerConfig {
            forecast: ForecastConfig {
                window: 10,
                horizon: 4,
                ..ForecastConfig::default()
            },
            ..ControllerConfig::default()
        },
    }
}

#[test]
fn uncontrolled_loop_matches_manual_replay() {
    let spec = burst_scenario(false);
    let out = run_scenario(&spec).unwrap();

    // Rebuild the identical source set the scenario uses and replay the
    // channel tick by tick; the offered loads in the series are the source
    // outputs, so replaying from them must reproduce every figure.
    let mut queues: BTreeMap<String, ClassQueue> = spec
        .classes
        .iter()
        .map(|c| {
            (
                c.spec.class_id.clone(),
                ClassQueue::new(c.spec.class_id.clone(), c.buffer_size).unwrap(),
            )
        })
        .collect();
    let widths: BTreeMap<String, f64> = spec
        .classes
        .iter()
        .map(|c| (c.spec.class_id.clone(), c.spec.initial_width))
        .collect();

    let mut replay_drops = 0.0;
    for m in &out.series {
        let offered: BTreeMap<String, f64> = m
            .classes
            .iter()
            .map(|c| (c.class_id.clone(), c.offered))
            .collect();
        let replay = channel_tick(m.tick, &offered, &widths, &mut queues, spec.capacity).unwrap();
        assert_eq!(&replay, m, "replay diverged at tick {}", m.tick);
        replay_drops += replay.total_dropped();
    }
    let loop_drops: f64 = out.series.iter().map(|m| m.total_dropped()).sum();
    assert_eq!(loop_drops, replay_drops);
}

#[test]
fn controlled_run_reduces_drops_on_bursts() {
    let base = run_scenario(&burst_scenario(false)).unwrap();
    let controlled = run_scenario(&burst_scenario(true)).unwrap();
    let base_drops: f64 = base.series.iter().map(|m| m.total_dropped()).sum();
    let controlled_drops: f64 = controlled.series.iter().map(|m| m.total_dropped()).sum();
    assert!(controlled.activations > 0);
    assert!(
        controlled_drops < base_drops,
        "control did not help: {controlled_drops} vs {base_drops}"
    );
}

proptest! {
    #[test]
    fn conservation_is_exact_for_arbitrary_loads(
        loads in proptest::collection::vec(0.0f64..80.0, 1..120),
        width in 1.0f64..60.0,
        buffer in 0.0f64..40.0,
    ) {
        let widths: BTreeMap<String, f64> = [("c".to_string(), width)].into();
        let mut queues: BTreeMap<String, ClassQueue> =
            [("c".to_string(), ClassQueue::new("c", buffer).unwrap())].into();
        let mut backlog_before = 0.0;
        for (t, load) in loads.iter().enumerate() {
            let offered: BTreeMap<String, f64> = [("c".to_string(), *load)].into();
            let m = channel_tick(t as u64, &offered, &widths, &mut queues, 100.0).unwrap();
            let c = m.class("c").unwrap();
            let residual = (((c.offered + backlog_before) - c.carried) - c.backlog) - c.dropped;
            prop_assert_eq!(residual, 0.0);
            prop_assert!(c.carried <= width);
            prop_assert!(c.backlog <= buffer);
            prop_assert!(c.dropped >= 0.0);
            backlog_before = c.backlog;
        }
    }
}
