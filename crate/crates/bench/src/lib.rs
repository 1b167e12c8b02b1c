//! Shared fixtures for the benchmarks.

use std::collections::BTreeMap;

use chanloop_core::controller::{AllocationState, ControllerConfig, TrafficClassSpec};
use chanloop_core::forecast::{Forecast, ForecastConfig, TrendSign};
use chanloop_core::plant::{ClassScenario, ScenarioSpec, SourceKind, TrafficSource};
use chanloop_core::statespace::{Matrix, StateSpaceModel, Trajectory, Vector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Anti-phased two-class burst scenario, the same shape the acceptance suite
/// runs, parameterized by length.
pub fn burst_scenario(ticks: u64, control: bool) -> ScenarioSpec {
    let class = |id: &str, priority: u32, phase: u64| ClassScenario {
        spec: TrafficClassSpec {
            class_id: id.to_string(),
            priority,
            critical_min_width: 14.0,
            initial_width: 50.0,
        },
        buffer_size: 300.0,
        source: TrafficSource {
            kind: SourceKind::OnOff {
                on_rate: 78.0,
                off_rate: 4.0,
                on_len: 60,
                off_len: 60,
                phase,
            },
            seed: 0,
        },
    };
    ScenarioSpec {
        capacity: 100.0,
        ticks,
        seed: 42,
        classes: vec![class("gold", 1, 0), class("bulk", 2, 60)],
        control_enabled: control,
        controller: ControllerConfig {
            forecast: ForecastConfig {
                window: 12,
                horizon: 4,
                ..ForecastConfig::default()
            },
            ..ControllerConfig::default()
        },
    }
}

/// A six-class allocation with mixed trends for the reallocation benchmark.
pub fn six_class_allocation() -> (
    AllocationState,
    Vec<TrafficClassSpec>,
    BTreeMap<String, Forecast>,
) {
    let mut specs = Vec::new();
    let mut widths = BTreeMap::new();
    let mut forecasts = BTreeMap::new();
    for i in 0..6u32 {
        let id = format!("c{i}");
        specs.push(TrafficClassSpec {
            class_id: id.clone(),
            priority: i + 1,
            critical_min_width: 5.0,
            initial_width: 100.0,
        });
        widths.insert(id.clone(), 100.0);
        let trend = match i % 3 {
            0 => TrendSign::Increase,
            1 => TrendSign::Decrease,
            _ => TrendSign::Flat,
        };
        forecasts.insert(
            id.clone(),
            Forecast {
                class_id: id,
                predicted_load: 40.0 + 25.0 * i as f64,
                trend,
            },
        );
    }
    (
        AllocationState::new(600.0, widths).unwrap(),
        specs,
        forecasts,
    )
}

/// Noiseless trajectory from a random stable three-state system.
pub fn identification_fixture(len: usize) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = Matrix::from_row_slice(3, 3, &[0.6, 0.1, 0.0, -0.2, 0.5, 0.1, 0.0, 0.3, 0.4]);
    let b = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, -0.5]);
    let model = StateSpaceModel::new(a, b).unwrap();
    let inputs: Vec<Vector> = (0..len - 1)
        .map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    model
        .simulate(&Vector::from_vec(vec![0.1, -0.2, 0.3]), &inputs)
        .unwrap()
}

/// Deterministic pseudo-utilization samples in [0, 1].
pub fn utilization_samples(count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    (0..count).map(|_| rng.random_range(0.0..=1.0)).collect()
}
