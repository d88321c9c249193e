//! The modulated infinite-server count process.
//!
//! Two exact simulators are provided. The conditional one applies the
//! one-segment transition law `Bin(y, e^{-μt}) ⊗ Poi(g(μ, λ, t))` per
//! environment sojourn; the event-driven one races arrival and departure
//! clocks inside each sojourn.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::open_uniform;
use crate::semi_markov::{SemiMarkovModel, Segment, Trajectory, DEFAULT_MAX_SEGMENTS};

pub const DEFAULT_MAX_EVENTS: u64 = 100_000_000;

/// Below this mean the binomial and Poisson draws use sequential inversion.
const INVERSION_MEAN_MAX: f64 = 30.0;

/// Arrival rates `λ(·)` and per-customer service rates `μ(·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMap {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl RateMap {
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if lambda.len() != mu.len() {
            return Err(Error::InvalidRates(format!(
                "lambda has {} entries but mu has {}",
                lambda.len(),
                mu.len()
            )));
        }
        for (name, v) in [("lambda", &lambda), ("mu", &mu)] {
            if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidRates(format!(
                    "{name}[{i}] = {} must be finite and >= 0",
                    v[i]
                )));
            }
        }
        Ok(Self { lambda, mu })
    }

    pub fn constant(k: usize, lambda: f64, mu: f64) -> Result<Self> {
        Self::new(vec![lambda; k], vec![mu; k])
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Checks the dimension against `model`.
    pub fn check_for(&self, model: &SemiMarkovModel) -> Result<()> {
        if self.len() != model.len() {
            return Err(Error::InvalidRates(format!(
                "rates cover {} states but the model has {}",
                self.len(),
                model.len()
            )));
        }
        Ok(())
    }

    /// `Σ_j π_j λ(j)`.
    pub fn mean_lambda(&self, pi: &[f64]) -> f64 {
        pi.iter().zip(&self.lambda).map(|(p, l)| p * l).sum()
    }

    /// `Σ_j π_j μ(j)`.
    pub fn mean_mu(&self, pi: &[f64]) -> f64 {
        pi.iter().zip(&self.mu).map(|(p, m)| p * m).sum()
    }

    /// Stability condition: the stationary mean service rate is positive.
    pub fn check_stable(&self, pi: &[f64]) -> Result<()> {
        let m = self.mean_mu(pi);
        if m > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidRates(format!(
                "stationary mean service rate is {m}; it must be positive"
            )))
        }
    }
}

/// `g(c, d, x) = x·d` if `c = 0`, otherwise `(d/c)(1 − e^{−xc})`.
#[inline]
pub fn g_function(c: f64, d: f64, x: f64) -> f64 {
    if c == 0.0 {
        x * d
    } else {
        // expm1 keeps the small-c branch continuous
        d * (-(-x * c).exp_m1()) / c
    }
}

/// Exact binomial draw.
pub fn sample_binomial<R: Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if p > 0.5 {
        return n - sample_binomial(n, 1.0 - p, rng);
    }
    if (n as f64) * p < INVERSION_MEAN_MAX {
        binomial_inversion(n, p, rng)
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

fn binomial_inversion<R: Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    let q = 1.0 - p;
    let ratio = p / q;
    let mut pk = if n <= i32::MAX as u64 { q.powi(n as i32) } else { q.powf(n as f64) };
    let mut cum = pk;
    let u = rng.random::<f64>();
    let mut k = 0u64;
    while u >= cum && k < n {
        pk *= ratio * (n - k) as f64 / (k + 1) as f64;
        k += 1;
        cum += pk;
        if pk == 0.0 && cum < u {
            // rounding left a sliver of mass unassigned
            break;
        }
    }
    k
}

/// Exact Poisson draw.
pub fn sample_poisson<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < INVERSION_MEAN_MAX {
        let mut pk = (-mean).exp();
        let mut cum = pk;
        let u = rng.random::<f64>();
        let mut k = 0u64;
        while u >= cum {
            k += 1;
            pk *= mean / k as f64;
            cum += pk;
            if pk == 0.0 {
                break;
            }
        }
        k
    } else {
        Poisson::new(mean).expect("valid poisson").sample(rng) as u64
    }
}

/// One constant-rate segment: `Bin(y0, e^{−μ·dt}) + Poi(g(μ, λ, dt))`.
#[inline]
pub fn interval_update<R: Rng>(y0: u64, lam: f64, mu: f64, dt: f64, rng: &mut R) -> u64 {
    if mu == 0.0 {
        return y0 + sample_poisson(lam * dt, rng);
    }
    // one expm1 serves both the survival probability and g(μ, λ, dt)
    let em1 = (-mu * dt).exp_m1();
    let survivors = sample_binomial(y0, 1.0 + em1, rng);
    survivors + sample_poisson(-lam * em1 / mu, rng)
}

/// Counts observed at a nondecreasing sequence of times.
#[derive(Debug, Clone, PartialEq)]
pub struct QueuePath {
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
    pub environment: Trajectory,
}

impl QueuePath {
    pub fn terminal(&self) -> u64 {
        *self.counts.last().expect("paths hold at least the initial point")
    }

    /// Time average of the piecewise-constant count over `[from, to]`.
    pub fn time_average(&self, from: f64, to: f64) -> f64 {
        let mut area = 0.0;
        for w in 0..self.times.len() {
            let a = self.times[w].max(from);
            let b = self.times.get(w + 1).copied().unwrap_or(to).min(to);
            if b > a {
                area += self.counts[w] as f64 * (b - a);
            }
        }
        area / (to - from)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "count"])?;
        for (t, c) in self.times.iter().zip(&self.counts) {
            w.write_record([t.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Applies [`interval_update`] across every segment, recording `Y` at each
/// segment boundary.
pub fn simulate_conditional<R: Rng>(
    traj: &Trajectory,
    rates: &RateMap,
    y0: u64,
    rng: &mut R,
) -> Result<QueuePath> {
    let mut times = Vec::with_capacity(traj.len() + 1);
    let mut counts = Vec::with_capacity(traj.len() + 1);
    let mut t = 0.0;
    let mut y = y0;
    times.push(t);
    counts.push(y);
    for s in traj.segments() {
        check_state(rates, s.state)?;
        y = interval_update(y, rates.lambda[s.state], rates.mu[s.state], s.sojourn, rng);
        t += s.sojourn;
        times.push(t);
        counts.push(y);
    }
    Ok(QueuePath { times, counts, environment: traj.clone() })
}

fn check_state(rates: &RateMap, state: usize) -> Result<()> {
    if state >= rates.len() {
        return Err(Error::InvalidRates(format!("no rates for state {state}")));
    }
    Ok(())
}

/// Terminal count of [`simulate_conditional`] without storing the path.
///
/// Produces exactly the value obtained from `sample_trajectory(horizon,
/// env_rng)` followed by `simulate_conditional(.., queue_rng)`.
pub fn conditional_terminal<R: Rng, Q: Rng>(
    model: &SemiMarkovModel,
    rates: &RateMap,
    y0: u64,
    horizon: f64,
    env_rng: &mut R,
    queue_rng: &mut Q,
) -> Result<u64> {
    rates.check_for(model)?;
    let mut y = y0;
    model.walk(horizon, DEFAULT_MAX_SEGMENTS, env_rng, |state, sojourn| {
        y = interval_update(y, rates.lambda[state], rates.mu[state], sojourn, queue_rng);
    })?;
    Ok(y)
}

/// Event-driven simulation recording every jump of `Y`.
pub fn simulate_gillespie<R: Rng>(
    model: &SemiMarkovModel,
    rates: &RateMap,
    y0: u64,
    horizon: f64,
    rng: &mut R,
) -> Result<QueuePath> {
    simulate_gillespie_capped(model, rates, y0, horizon, DEFAULT_MAX_EVENTS, rng)
}

pub fn simulate_gillespie_capped<R: Rng>(
    model: &SemiMarkovModel,
    rates: &RateMap,
    y0: u64,
    horizon: f64,
    max_events: u64,
    rng: &mut R,
) -> Result<QueuePath> {
    let mut times = vec![0.0];
    let mut counts = vec![y0];
    let mut segments = Vec::new();
    gillespie_core(model, rates, y0, horizon, max_events, rng, |t, y| {
        times.push(t);
        counts.push(y);
    }, |state, sojourn| segments.push(Segment { state, sojourn }))?;
    if times.last() != Some(&horizon) {
        times.push(horizon);
        counts.push(*counts.last().expect("nonempty"));
    }
    Ok(QueuePath { times, counts, environment: Trajectory::new(segments) })
}

/// Terminal count of the event-driven simulator.
pub fn gillespie_terminal<R: Rng>(
    model: &SemiMarkovModel,
    rates: &RateMap,
    y0: u64,
    horizon: f64,
    rng: &mut R,
) -> Result<u64> {
    gillespie_core(model, rates, y0, horizon, DEFAULT_MAX_EVENTS, rng, |_, _| {}, |_, _| {})
}

#[allow(clippy::too_many_arguments)]
fn gillespie_core<R: Rng>(
    model: &SemiMarkovModel,
    rates: &RateMap,
    y0: u64,
    horizon: f64,
    max_events: u64,
    rng: &mut R,
    mut on_jump: impl FnMut(f64, u64),
    mut on_segment: impl FnMut(usize, f64),
) -> Result<u64> {
    rates.check_for(model)?;
    let mut y = y0;
    let mut t0 = 0.0;
    let mut events = 0u64;
    let mut overflow = false;
    // the environment draws come first in each sojourn, then the queue events
    // inside it; both share `rng`, so the walk is driven by hand here
    let mut env = |state: usize, sojourn: f64, rng: &mut R| -> bool {
        on_segment(state, sojourn);
        let lam = rates.lambda[state];
        let mu = rates.mu[state];
        let end = t0 + sojourn;
        let mut t = t0;
        loop {
            let total = lam + mu * y as f64;
            if total <= 0.0 {
                break;
            }
            t += -open_uniform(rng).ln() / total;
            if t >= end {
                break;
            }
            events += 1;
            if events > max_events {
                return false;
            }
            if rng.random::<f64>() * total < lam {
                y += 1;
            } else {
                y -= 1;
            }
            on_jump(t, y);
        }
        t0 = end;
        true
    };
    model.ensure_valid()?;
    let start = model.sample_initial(rng);
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let mut state = start;
    let mut segments = 0u64;
    let mut t = 0.0;
    loop {
        let (next, sojourn) = model.step(state, rng);
        segments += 1;
        if segments > DEFAULT_MAX_SEGMENTS {
            return Err(Error::Explosion { what: "environment segments", cap: DEFAULT_MAX_SEGMENTS });
        }
        let last = t + sojourn >= horizon;
        let len = if last { horizon - t } else { sojourn };
        if !env(state, len, rng) {
            overflow = true;
            break;
        }
        if last {
            break;
        }
        t += sojourn;
        state = next;
    }
    if overflow {
        return Err(Error::Explosion { what: "queue events", cap: max_events });
    }
    Ok(y)
}

/// `(Φ, I)` of a piecewise-constant path: `Φ = exp(−∫μ(X))` and
/// `I = ∫ λ(X_s) exp(−∫_s^t μ(X)) ds`, evaluated with one reverse pass.
pub fn phi_and_i(traj: &Trajectory, rates: &RateMap) -> (f64, f64) {
    let mut mass_after = 0.0f64;
    let mut i = 0.0;
    for s in traj.segments().iter().rev() {
        let (lam, mu) = (rates.lambda[s.state], rates.mu[s.state]);
        i += (-mass_after).exp() * g_function(mu, lam, s.sojourn);
        mass_after += mu * s.sojourn;
    }
    ((-mass_after).exp(), i)
}
