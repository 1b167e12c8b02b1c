//! Feedback bandwidth reallocation across prioritized traffic classes.
//!
//! The control loop watches per-class utilization, activates once any class
//! reaches the threshold share of its width, and then redistributes channel
//! width by priority: decreasing classes release width, increasing classes
//! grow toward a headroom target, and when released width and slack run out
//! the most junior classes are drained toward their critical minima to fund
//! seniors. Total width never exceeds capacity and no class ever drops below
//! its critical minimum.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::forecast::{
    Forecast, ForecastConfig, ForecastMethod, LoadHistory, ModelBank, TrendSign,
};

/// One prioritized traffic class. Priority 1 is the most senior.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficClassSpec {
    pub class_id: String,
    pub priority: u32,
    pub critical_min_width: f64,
    pub initial_width: f64,
}

impl TrafficClassSpec {
    pub fn validate(&self) -> Result<()> {
        if self.priority == 0 {
            return Err(Error::invalid(format!(
                "class `{}`: priority must be a positive integer",
                self.class_id
            )));
        }
        if !self.critical_min_width.is_finite() || self.critical_min_width < 0.0 {
            return Err(Error::invalid(format!(
                "class `{}`: critical minimum width must be finite and >= 0",
                self.class_id
            )));
        }
        if !self.initial_width.is_finite() || self.initial_width < self.critical_min_width {
            return Err(Error::invalid(format!(
                "class `{}`: initial width must be finite and >= critical minimum",
                self.class_id
            )));
        }
        Ok(())
    }
}

/// Current split of the channel: total capacity and one width per class.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationState {
    capacity: f64,
    widths: BTreeMap<String, f64>,
}

impl AllocationState {
    pub fn new(capacity: f64, widths: BTreeMap<String, f64>) -> Result<Self> {
        if !capacity.is_finite() || capacity <= 0.0 {
            return Err(Error::invalid("capacity must be finite and positive"));
        }
        let mut total = 0.0;
        for (id, w) in &widths {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::invalid(format!(
                    "width for class `{id}` must be finite and >= 0"
                )));
            }
            total += *w;
        }
        if total > capacity {
            return Err(Error::invalid(format!(
                "total width {total} exceeds capacity {capacity}"
            )));
        }
        Ok(AllocationState { capacity, widths })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn widths(&self) -> &BTreeMap<String, f64> {
        &self.widths
    }

    pub fn width(&self, class_id: &str) -> Result<f64> {
        self.widths
            .get(class_id)
            .copied()
            .ok_or_else(|| Error::UnknownClass(class_id.to_string()))
    }

    pub fn total_width(&self) -> f64 {
        self.widths.values().sum()
    }

    pub fn slack(&self) -> f64 {
        (self.capacity - self.total_width()).max(0.0)
    }
}

/// What the per-class utilization threshold is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdBasis {
    /// Any class load vs. that class's allocated width (the default).
    Allocation,
    /// Total load vs. total channel capacity.
    Capacity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    /// Activation threshold as a fraction of width (or capacity).
    pub threshold: f64,
    /// Headroom factor applied to the predicted load when sizing widths.
    pub beta: f64,
    /// Minimum ticks between consecutive reallocations.
    pub cooldown: u64,
    pub forecast: ForecastConfig,
    pub basis: ThresholdBasis,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            threshold: 0.7,
            beta: 1.1,
            cooldown: 1,
            forecast: ForecastConfig::default(),
            basis: ThresholdBasis::Allocation,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("threshold must lie strictly in (0, 1)"));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::invalid("beta must be finite and positive"));
        }
        if self.cooldown < 1 {
            return Err(Error::invalid("cooldown must be at least 1 tick"));
        }
        self.forecast.validate()
    }
}

/// Structured notes describing what a reallocation did.
#[derive(Clone, Debug, PartialEq)]
pub enum AllocationEvent {
    /// A decreasing class gave back width voluntarily.
    Released { class_id: String, amount: f64 },
    /// An increasing class received width.
    Granted { class_id: String, amount: f64 },
    /// A junior class was shrunk to fund a senior.
    Drained { class_id: String, amount: f64 },
    /// A class now sits exactly at its critical minimum.
    HitMinimum { class_id: String },
    /// A growing class could not be granted its full desired width.
    InsufficientCapacity { class_id: String, shortfall: f64 },
}

/// Outcome of one control tick.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlDecision {
    pub activated: bool,
    pub tick: u64,
    pub new_widths: BTreeMap<String, f64>,
    pub events: Vec<AllocationEvent>,
}

impl ControlDecision {
    fn inactive(tick: u64, alloc: &AllocationState) -> Self {
        ControlDecision {
            activated: false,
            tick,
            new_widths: alloc.widths.clone(),
            events: Vec::new(),
        }
    }
}

/// True iff any class's measured load has reached `threshold` times its
/// width. A zero-width class with positive load counts as over threshold.
pub fn needs_control(
    loads: &BTreeMap<String, f64>,
    alloc: &AllocationState,
    threshold: f64,
) -> Result<bool> {
    for (id, load) in loads {
        let width = alloc.width(id)?;
        if width > 0.0 {
            if *load >= threshold * width {
                return Ok(true);
            }
        } else if *load > 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

fn check_class_sets<T>(
    what: &str,
    map: &BTreeMap<String, T>,
    alloc: &AllocationState,
) -> Result<()> {
    for id in alloc.widths.keys() {
        if !map.contains_key(id) {
            return Err(Error::invalid(format!("{what} missing for class `{id}`")));
        }
    }
    for id in map.keys() {
        if !alloc.widths.contains_key(id) {
            return Err(Error::UnknownClass(id.clone()));
        }
    }
    Ok(())
}

/// Nudge the freshly granted width down until the allocation sums within
/// capacity again. The correction is a few ulps at most; without it the
/// floating-point sum can land just above capacity. `floor` is the grantee's
/// pre-grant width: at the floor the sum reverts to its pre-grant value,
/// which already satisfied the capacity bound, so the loop terminates.
fn settle_capacity(widths: &mut BTreeMap<String, f64>, grantee: &str, capacity: f64, floor: f64) {
    loop {
        let total: f64 = widths.values().sum();
        if total <= capacity {
            return;
        }
        let w = widths.get_mut(grantee).expect("grantee exists");
        let reduced = (*w - (total - capacity)).max(floor);
        if reduced >= *w {
            *w = floor;
        } else {
            *w = reduced;
        }
    }
}

/// Redistribute widths given per-class forecasts.
///
/// Processing order is ascending priority number (seniors first); donors are
/// drained in descending priority (juniors first) and only ever classes
/// strictly junior to the grantee.
pub fn reallocate(
    alloc: &AllocationState,
    forecasts: &BTreeMap<String, Forecast>,
    specs: &[TrafficClassSpec],
    beta: f64,
) -> Result<ControlDecision> {
    reallocate_at(0, alloc, forecasts, specs, beta)
}

fn reallocate_at(
    tick: u64,
    alloc: &AllocationState,
    forecasts: &BTreeMap<String, Forecast>,
    specs: &[TrafficClassSpec],
    beta: f64,
) -> Result<ControlDecision> {
    check_class_sets("forecast", forecasts, alloc)?;
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::invalid("beta must be finite and positive"));
    }
    let mut by_id: BTreeMap<&str, &TrafficClassSpec> = BTreeMap::new();
    for spec in specs {
        spec.validate()?;
        if by_id.insert(spec.class_id.as_str(), spec).is_some() {
            return Err(Error::invalid(format!(
                "duplicate class spec `{}`",
                spec.class_id
            )));
        }
    }
    for (id, w) in alloc.widths() {
        let spec = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::invalid(format!("spec missing for class `{id}`")))?;
        if *w < spec.critical_min_width {
            return Err(Error::invalid(format!(
                "class `{id}` is below its critical minimum before reallocation"
            )));
        }
    }
    if by_id.len() != alloc.widths().len() {
        return Err(Error::invalid(
            "class specs do not match the allocation state".to_string(),
        ));
    }

    // Seniors first; distinct priorities are expected, ids break ties anyway.
    let mut order: Vec<&TrafficClassSpec> = specs.iter().collect();
    order.sort_by(|a, b| {
        a.priority
            .cmp(&b.priority)
            .then_with(|| a.class_id.cmp(&b.class_id))
    });

    let capacity = alloc.capacity();
    let mut widths = alloc.widths().clone();
    let mut events = Vec::new();

    let desired: BTreeMap<&str, f64> = order
        .iter()
        .map(|spec| {
            let f = &forecasts[&spec.class_id];
            (
                spec.class_id.as_str(),
                (beta * f.predicted_load).max(spec.critical_min_width),
            )
        })
        .collect();

    // Step one: decreasing classes release width down to their target.
    for spec in &order {
        let id = spec.class_id.as_str();
        if forecasts[id].trend != TrendSign::Decrease {
            continue;
        }
        let current = widths[id];
        let target = desired[id].min(current);
        let released = current - target;
        if released > 0.0 {
            *widths.get_mut(id).unwrap() = target;
            events.push(AllocationEvent::Released {
                class_id: id.to_string(),
                amount: released,
            });
            if target <= spec.critical_min_width {
                events.push(AllocationEvent::HitMinimum {
                    class_id: id.to_string(),
                });
            }
        }
    }

    // Step two: increasing classes grow toward their target, seniors first,
    // funded by slack and then by draining juniors toward their minima.
    for (rank, spec) in order.iter().enumerate() {
        let id = spec.class_id.as_str();
        if forecasts[id].trend != TrendSign::Increase {
            continue;
        }
        let need = desired[id] - widths[id];
        if need <= 0.0 {
            continue;
        }

        let mut available: f64 = capacity - widths.values().sum::<f64>();
        if available < need {
            // Most junior donors first; only classes strictly junior to the
            // grantee may be drained.
            for donor in order[rank + 1..].iter().rev() {
                if available >= need {
                    break;
                }
                let donor_id = donor.class_id.as_str();
                let donor_width = widths[donor_id];
                let give_cap = donor_width - donor.critical_min_width;
                if give_cap <= 0.0 {
                    continue;
                }
                let take = (need - available).min(give_cap);
                let new_donor = (donor_width - take).max(donor.critical_min_width);
                let taken = donor_width - new_donor;
                if taken > 0.0 {
                    *widths.get_mut(donor_id).unwrap() = new_donor;
                    available += taken;
                    events.push(AllocationEvent::Drained {
                        class_id: donor_id.to_string(),
                        amount: taken,
                    });
                    if new_donor <= donor.critical_min_width {
                        events.push(AllocationEvent::HitMinimum {
                            class_id: donor_id.to_string(),
                        });
                    }
                }
            }
            available = capacity - widths.values().sum::<f64>();
        }

        let before = widths[id];
        let grant = need.min(available).max(0.0);
        if grant > 0.0 {
            *widths.get_mut(id).unwrap() = before + grant;
            settle_capacity(&mut widths, id, capacity, before);
            let granted = widths[id] - before;
            if granted > 0.0 {
                events.push(AllocationEvent::Granted {
                    class_id: id.to_string(),
                    amount: granted,
                });
            }
        }
        let shortfall = desired[id] - widths[id];
        if shortfall > 1e-9 {
            events.push(AllocationEvent::InsufficientCapacity {
                class_id: id.to_string(),
                shortfall,
            });
        }
    }

    Ok(ControlDecision {
        activated: true,
        tick,
        new_widths: widths,
        events,
    })
}

/// The control state machine: activation threshold, cooldown bookkeeping,
/// and per-class forecasting. Advanced by exactly one caller.
#[derive(Clone, Debug)]
pub struct Controller {
    config: ControllerConfig,
    specs: Vec<TrafficClassSpec>,
    banks: BTreeMap<String, ModelBank>,
    last_activation: Option<u64>,
}

impl Controller {
    pub fn new(config: ControllerConfig, specs: Vec<TrafficClassSpec>) -> Result<Self> {
        config.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        let mut priorities = std::collections::BTreeSet::new();
        for spec in &specs {
            spec.validate()?;
            if !seen.insert(spec.class_id.clone()) {
                return Err(Error::invalid(format!(
                    "duplicate class `{}`",
                    spec.class_id
                )));
            }
            if !priorities.insert(spec.priority) {
                return Err(Error::invalid(format!(
                    "duplicate priority {} (priorities must be distinct)",
                    spec.priority
                )));
            }
        }
        Ok(Controller {
            config,
            specs,
            banks: BTreeMap::new(),
            last_activation: None,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn specs(&self) -> &[TrafficClassSpec] {
        &self.specs
    }

    pub fn last_activation(&self) -> Option<u64> {
        self.last_activation
    }

    fn forecast_one(&mut self, history: &LoadHistory) -> Result<Forecast> {
        match self.config.forecast.method {
            ForecastMethod::LinearTrend => {
                crate::forecast::predict(history, &self.config.forecast)
            }
            ForecastMethod::ModelBank => {
                // The bank is fitted once, on the first full window, and kept
                // fixed afterwards; until then fall back to the trend fit.
                if !self.banks.contains_key(history.class_id())
                    && history.len() >= self.config.forecast.window
                {
                    let bank = ModelBank::fit(history, self.config.forecast.window)?;
                    self.banks.insert(history.class_id().to_string(), bank);
                }
                match self.banks.get_mut(history.class_id()) {
                    Some(bank) => bank.predict(history, &self.config.forecast),
                    None => crate::forecast::predict(history, &self.config.forecast),
                }
            }
        }
    }

    /// Run one control step: threshold check, cooldown check, forecasting,
    /// reallocation. Returns an inactive decision when nothing is to be done.
    pub fn tick(
        &mut self,
        tick: u64,
        loads: &BTreeMap<String, f64>,
        alloc: &AllocationState,
        histories: &BTreeMap<String, LoadHistory>,
    ) -> Result<ControlDecision> {
        check_class_sets("load", loads, alloc)?;
        check_class_sets("history", histories, alloc)?;

        if let Some(last) = self.last_activation {
            if tick - last < self.config.cooldown {
                return Ok(ControlDecision::inactive(tick, alloc));
            }
        }
        let triggered = match self.config.basis {
            ThresholdBasis::Allocation => needs_control(loads, alloc, self.config.threshold)?,
            ThresholdBasis::Capacity => {
                loads.values().sum::<f64>() >= self.config.threshold * alloc.capacity()
            }
        };
        if !triggered {
            return Ok(ControlDecision::inactive(tick, alloc));
        }

        let mut forecasts = BTreeMap::new();
        for (id, history) in histories {
            forecasts.insert(id.clone(), self.forecast_one(history)?);
        }
        let decision = reallocate_at(tick, alloc, &forecasts, &self.specs, self.config.beta)?;
        self.last_activation = Some(tick);
        Ok(decision)
    }
}
