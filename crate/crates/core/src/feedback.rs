//! Two-server bandwidth-sharing model where the environment reacts to `Y`.
//!
//! State `(x1, x2, y)`: `x1` is the active server, `x2` its bandwidth level
//! out of `k`, `y` the customer count. A server switch flips `x1` and hands
//! the complementary bandwidth `k − x2` to the newly active server; each
//! departure uses up one bandwidth level.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::open_uniform;
use crate::stats::ols_slope;

pub const DEFAULT_FEEDBACK_MAX_EVENTS: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    /// Switch rate out of `x1 = 0`.
    pub lambda0: f64,
    /// Switch rate out of `x1 = 1`.
    pub lambda1: f64,
    /// Arrival rate.
    pub lambda: f64,
    pub q1: f64,
    pub q2: f64,
    pub k: u32,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        Self { lambda0: 1.0, lambda1: 1.0, lambda: 10.0, q1: 1.0, q2: 1.0, k: 5 }
    }
}

impl FeedbackParams {
    /// Switch rates must be positive; the other rates may be zero.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda0", self.lambda0), ("lambda1", self.lambda1)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda", self.lambda), ("q1", self.q1), ("q2", self.q2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.k < 1 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }

    /// `λ/2 · (1/λ0 + 1/λ1)`; the count is transient when `k` is below it.
    pub fn transience_threshold(&self) -> f64 {
        0.5 * self.lambda * (1.0 / self.lambda0 + 1.0 / self.lambda1)
    }

    pub fn is_transient_regime(&self) -> bool {
        (self.k as f64) < self.transience_threshold()
    }

    /// Lower bound on the mean increment of `Y` over one switching cycle.
    pub fn cycle_drift_bound(&self) -> f64 {
        self.lambda * (1.0 / self.lambda0 + 1.0 / self.lambda1) - 2.0 * self.k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeedbackState {
    pub x1: u8,
    pub x2: u32,
    pub y: u64,
}

/// Every jump of the feedback chain, plus the horizon point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeedbackPath {
    pub times: Vec<f64>,
    pub states: Vec<FeedbackState>,
}

impl FeedbackPath {
    pub fn counts(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.y as f64).collect()
    }

    pub fn terminal(&self) -> FeedbackState {
        *self.states.last().expect("paths hold the initial state")
    }

    /// Increments of `Y` between consecutive entries into `x1 = 1`.
    pub fn cycle_increments(&self) -> Vec<f64> {
        let entries: Vec<usize> = self
            .states
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].x1 == 0 && w[1].x1 == 1)
            .map(|(i, _)| i + 1)
            .collect();
        entries
            .windows(2)
            .map(|w| self.states[w[1]].y as f64 - self.states[w[0]].y as f64)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "count", "x1", "x2"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            w.write_record([t.to_string(), s.y.to_string(), s.x1.to_string(), s.x2.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates the chain from `(0, k, y0)` up to `horizon`.
pub fn simulate_feedback<R: Rng>(
    params: &FeedbackParams,
    y0: u64,
    horizon: f64,
    rng: &mut R,
) -> Result<FeedbackPath> {
    simulate_feedback_capped(params, y0, horizon, DEFAULT_FEEDBACK_MAX_EVENTS, rng)
}

pub fn simulate_feedback_capped<R: Rng>(
    params: &FeedbackParams,
    y0: u64,
    horizon: f64,
    max_events: u64,
    rng: &mut R,
) -> Result<FeedbackPath> {
    params.validate()?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let k = params.k;
    let mut s = FeedbackState { x1: 0, x2: k, y: y0 };
    let mut path = FeedbackPath { times: vec![0.0], states: vec![s] };
    let mut t = 0.0;
    let mut events = 0u64;
    loop {
        let switch = if s.x1 == 0 { params.lambda0 } else { params.lambda1 };
        let q = if s.x1 == 0 { params.q1 } else { params.q2 };
        let depart = q * s.x2 as f64 * s.y as f64;
        let total = switch + params.lambda + depart;
        t += -open_uniform(rng).ln() / total;
        if t >= horizon {
            break;
        }
        events += 1;
        if events > max_events {
            return Err(Error::Explosion { what: "feedback events", cap: max_events });
        }
        let u = rng.random::<f64>() * total;
        if u < switch {
            s.x1 = 1 - s.x1;
            s.x2 = k - s.x2;
        } else if u < switch + params.lambda {
            s.y += 1;
        } else {
            s.x2 -= 1;
            s.y -= 1;
        }
        path.times.push(t);
        path.states.push(s);
    }
    path.times.push(horizon);
    path.states.push(s);
    Ok(path)
}

/// Least-squares slope of the count against time over the second half of
/// the observation window.
pub fn growth_rate(times: &[f64], counts: &[f64]) -> Result<f64> {
    if times.len() != counts.len() || times.len() < 2 {
        return Err(Error::Degenerate("growth rate needs at least two points".into()));
    }
    let start = times[0];
    let end = *times.last().expect("nonempty");
    if !(end > start) {
        return Err(Error::Degenerate("zero time span".into()));
    }
    let mid = 0.5 * (start + end);
    let from = times.partition_point(|&t| t < mid);
    let (ts, ys) = (&times[from..], &counts[from..]);
    if ts.len() < 2 || ts.first() == ts.last() {
        // too few jumps in the second half; fall back to the whole path
        return ols_slope(times, counts);
    }
    ols_slope(ts, ys)
}

pub fn path_growth_rate(path: &FeedbackPath) -> Result<f64> {
    growth_rate(&path.times, &path.counts())
}
