//! Closed-loop simulation of a shared channel carrying prioritized traffic
//! classes, plus a discrete-time linear state-space toolkit.
//!
//! The pieces fit together as a classic feedback loop: the [`plant`] simulates
//! per-class queues behind a shared channel, the [`forecast`] module predicts
//! per-class load from monitored history, and the [`controller`] reallocates
//! channel widths by priority whenever utilization crosses a threshold.
//! [`metrics`] turns runs into histograms and drop statistics so a controlled
//! run can be compared against its uncontrolled twin. The [`statespace`]
//! module carries the underlying dynamic-model toolkit: constrained
//! simulation, stability, controllability, observability, and least-squares
//! identification.

pub mod controller;
pub mod error;
pub mod files;
pub mod forecast;
pub mod metrics;
pub mod plant;
pub mod statespace;

pub use controller::{
    needs_control, reallocate, AllocationEvent, AllocationState, ControlDecision, Controller,
    ControllerConfig, ThresholdBasis, TrafficClassSpec,
};
pub use error::{Error, Result};
pub use forecast::{
    fit_trend, predict, trend_sign_with, BankModel, Forecast, ForecastConfig, ForecastMethod,
    LoadHistory, ModelBank, TrendSign,
};
pub use metrics::{
    compare, histogram, tail_mass, ComparisonReport, LoadHistogram, ReportConfig, RunReport,
    Totals,
};
pub use plant::{
    channel_tick, run_scenario, ClassMeasure, ClassQueue, ClassScenario, LoadSeries, Measurement,
    RunOutput, ScenarioSpec, SourceKind, TrafficSource,
};
pub use statespace::{
    identify, is_stable, numerical_rank, spectral_radius, Bounds, Identified, Matrix,
    StateSpaceModel, Step, Trajectory, Vector,
};
