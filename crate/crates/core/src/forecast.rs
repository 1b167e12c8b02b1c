//! Per-class load forecasting over a sliding window.
//!
//! The default predictor is an ordinary least-squares line fitted to the most
//! recent window of samples and extrapolated to the forecast horizon. The
//! alternative is a bank of prefitted one-dimensional models switched by
//! recent one-step prediction error.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Relative dead-band around the last observed load inside which the trend
/// counts as flat.
pub const TREND_DEAD_BAND: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrendSign {
    Increase,
    Decrease,
    Flat,
}

impl TrendSign {
    pub fn as_str(self) -> &'static str {
        match self {
            TrendSign::Increase => "increase",
            TrendSign::Decrease => "decrease",
            TrendSign::Flat => "flat",
        }
    }
}

/// Monitored load samples for one traffic class, ticks strictly increasing.
/// Bounded: pushing beyond `capacity` drops the oldest sample.
#[derive(Clone, Debug)]
pub struct LoadHistory {
    class_id: String,
    samples: VecDeque<(u64, f64)>,
    capacity: usize,
}

impl LoadHistory {
    pub fn new(class_id: impl Into<String>, capacity: usize) -> Self {
        LoadHistory {
            class_id: class_id.into(),
            samples: VecDeque::with_capacity(capacity.max(2)),
            capacity: capacity.max(2),
        }
    }

    pub fn push(&mut self, tick: u64, load: f64) -> Result<()> {
        if !load.is_finite() || load < 0.0 {
            return Err(Error::NegativeLoad {
                class: self.class_id.clone(),
            });
        }
        if let Some(&(last, _)) = self.samples.back() {
            if tick <= last {
                return Err(Error::invalid(format!(
                    "load history for `{}`: tick {tick} not after {last}",
                    self.class_id
                )));
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((tick, load));
        Ok(())
    }

    pub fn class_id(&self) -> &str {
        &self.class_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<(u64, f64)> {
        self.samples.back().copied()
    }

    /// The most recent `window` samples, oldest first.
    pub fn recent(&self, window: usize) -> impl Iterator<Item = (u64, f64)> + '_ {
        let skip = self.samples.len().saturating_sub(window);
        self.samples.iter().skip(skip).copied()
    }

    /// Build a history from explicit samples (for tests and trace playback).
    pub fn from_samples(
        class_id: impl Into<String>,
        samples: impl IntoIterator<Item = (u64, f64)>,
    ) -> Result<Self> {
        let samples: Vec<_> = samples.into_iter().collect();
        let mut history = LoadHistory::new(class_id, samples.len().max(2));
        for (t, v) in samples {
            history.push(t, v)?;
        }
        Ok(history)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForecastMethod {
    LinearTrend,
    ModelBank,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForecastConfig {
    /// Number of most recent samples fed to the fit.
    pub window: usize,
    /// Ticks ahead at which the load is predicted.
    pub horizon: u64,
    pub method: ForecastMethod,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            window: 20,
            horizon: 5,
            method: ForecastMethod::LinearTrend,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::invalid("forecast window must be at least 2"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("forecast horizon must be at least 1"));
        }
        Ok(())
    }
}

/// Predicted load for one class at `t_last + horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub class_id: String,
    pub predicted_load: f64,
    pub trend: TrendSign,
}

/// Ordinary least squares over the last `min(window, available)` samples.
/// Returns `(slope, intercept)` in absolute tick coordinates.
pub fn fit_trend(history: &LoadHistory, window: usize) -> Result<(f64, f64)> {
    let pts: Vec<(u64, f64)> = history.recent(window).collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientSamples {
            context: "trend fit",
            needed: 2,
            got: pts.len(),
        });
    }
    let k = pts.len() as f64;
    let mean_t = pts.iter().map(|&(t, _)| t as f64).sum::<f64>() / k;
    let mean_y = pts.iter().map(|&(_, y)| y).sum::<f64>() / k;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for &(t, y) in &pts {
        let dt = t as f64 - mean_t;
        sxy += dt * (y - mean_y);
        sxx += dt * dt;
    }
    // Ticks are strictly increasing, so sxx > 0 whenever there are >= 2 points.
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    Ok((slope, intercept))
}

/// Classify a prediction against the last observation with a relative
/// dead-band; `dead_band = 0` degenerates to a pure sign comparison.
pub fn trend_sign_with(predicted: f64, last: f64, dead_band: f64) -> TrendSign {
    if predicted > last * (1.0 + dead_band) {
        TrendSign::Increase
    } else if predicted < last * (1.0 - dead_band) {
        TrendSign::Decrease
    } else {
        TrendSign::Flat
    }
}

fn trend_sign(predicted: f64, last: f64) -> TrendSign {
    trend_sign_with(predicted, last, TREND_DEAD_BAND)
}

/// Extrapolate the fitted line to `t_last + horizon`, clamping at zero.
pub fn predict(history: &LoadHistory, cfg: &ForecastConfig) -> Result<Forecast> {
    cfg.validate()?;
    let (slope, intercept) = fit_trend(history, cfg.window)?;
    let (t_last, last_load) = history.last().expect("fit_trend checked non-empty");
    let raw = slope * (t_last + cfg.horizon) as f64 + intercept;
    let predicted = raw.max(0.0);
    Ok(Forecast {
        class_id: history.class_id().to_string(),
        predicted_load: predicted,
        trend: trend_sign(predicted, last_load),
    })
}

/// One-dimensional candidate forecaster for the model bank. All three kinds
/// are affine one-step maps `next = a * last + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BankModel {
    /// Always predicts the same level.
    Constant { level: f64 },
    /// Predicts the last value plus a fixed step.
    Drift { step: f64 },
    /// First-order autoregression with offset.
    Ar1 { a: f64, b: f64 },
}

impl BankModel {
    pub fn one_step(&self, last: f64) -> f64 {
        match *self {
            BankModel::Constant { level } => level,
            BankModel::Drift { step } => last + step,
            BankModel::Ar1 { a, b } => a * last + b,
        }
    }

    /// Iterate the one-step map `horizon` times.
    pub fn predict(&self, last: f64, horizon: u64) -> f64 {
        let mut value = last;
        for _ in 0..horizon {
            value = self.one_step(value);
        }
        value
    }
}

/// An ordered set of candidate forecasters plus the index selected last.
#[derive(Clone, Debug)]
pub struct ModelBank {
    models: Vec<BankModel>,
    active: usize,
}

impl ModelBank {
    pub fn new(models: Vec<BankModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("model bank"));
        }
        Ok(ModelBank { models, active: 0 })
    }

    /// Fit a default bank from the window: a constant at the window mean, a
    /// drift with the mean first difference, and a least-squares AR(1).
    pub fn fit(history: &LoadHistory, window: usize) -> Result<Self> {
        let pts: Vec<f64> = history.recent(window).map(|(_, y)| y).collect();
        if pts.len() < 2 {
            return Err(Error::InsufficientSamples {
                context: "model bank fit",
                needed: 2,
                got: pts.len(),
            });
        }
        let k = pts.len() as f64;
        let mean = pts.iter().sum::<f64>() / k;
        let mean_step =
            pts.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (pts.len() - 1) as f64;

        // Regress y(t+1) on y(t); degenerate windows fall back to the mean.
        let xs = &pts[..pts.len() - 1];
        let ys = &pts[1..];
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let ar1 = if sxx > 0.0 {
            let a = sxy / sxx;
            BankModel::Ar1 { a, b: my - a * mx }
        } else {
            BankModel::Ar1 { a: 0.0, b: my }
        };

        ModelBank::new(vec![
            BankModel::Constant { level: mean },
            BankModel::Drift { step: mean_step },
            ar1,
        ])
    }

    pub fn models(&self) -> &[BankModel] {
        &self.models
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn active(&self) -> &BankModel {
        &self.models[self.active]
    }

    /// Pick the candidate with the smallest mean absolute one-step error over
    /// the last `window` samples; ties go to the lowest index.
    pub fn select(&mut self, history: &LoadHistory, window: usize) -> Result<usize> {
        let pts: Vec<f64> = history.recent(window).map(|(_, y)| y).collect();
        if pts.len() < 2 {
            return Err(Error::InsufficientSamples {
                context: "model bank selection",
                needed: 2,
                got: pts.len(),
            });
        }
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for (idx, model) in self.models.iter().enumerate() {
            let err: f64 = pts
                .windows(2)
                .map(|w| (model.one_step(w[0]) - w[1]).abs())
                .sum::<f64>()
                / (pts.len() - 1) as f64;
            if err < best_err {
                best_err = err;
                best = idx;
            }
        }
        self.active = best;
        Ok(best)
    }

    /// Re-select on the window, then forecast with the winning candidate.
    pub fn predict(&mut self, history: &LoadHistory, cfg: &ForecastConfig) -> Result<Forecast> {
        cfg.validate()?;
        self.select(history, cfg.window)?;
        let (_, last_load) = history.last().expect("select checked non-empty");
        let predicted = self.active().predict(last_load, cfg.horizon).max(0.0);
        Ok(Forecast {
            class_id: history.class_id().to_string(),
            predicted_load: predicted,
            trend: trend_sign(predicted, last_load),
        })
    }
}
