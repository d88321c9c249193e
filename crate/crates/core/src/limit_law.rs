//! Sampling and moments of the time-asymptotic law of `(Y, X)`.
//!
//! In the limit `X ~ π` and, given `X = j`, `Y ~ Poisson(W_j)` with
//! `W_j = g(μ_j, λ_j, T_j) + e^{−μ_j T_j} V*_j`, where `T_j` follows the
//! residual law at `j` and `V*_j` solves the perpetuity over regeneration
//! cycles at `j`. `V*_j` is approximated by `n_j` steps of the forward
//! recursion; per-state machinery is built lazily on first use, so states
//! that are never visited cost nothing.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue::{g_function, sample_poisson, RateMap};
use crate::rng::{pick_cumulative, Streams};
use crate::semi_markov::SemiMarkovModel;
use crate::sre::{
    choose_n, estimate_constants, sample_cycle_pair, CyclePair,
    SreDiagnostics, DEFAULT_MAX_CYCLE_SEGMENTS,
};
use crate::stats::poisson_upper_tail;

pub const STIRLING_MAX: usize = 64;
/// States with a smaller stationary weight are left out of moment sums.
pub const MIN_MOMENT_WEIGHT: f64 = 1e-9;
const PILOT_TAG: u64 = 0x5049_4c4f_54;
const POOL_TAG: u64 = 0x504f_4f4c;

/// Stirling number of the second kind, `S(n, k)`, for `k ≤ n ≤ 64`.
pub fn stirling2(n: usize, k: usize) -> Result<u128> {
    if k > n || n > STIRLING_MAX {
        return Err(Error::StirlingRange { n, k });
    }
    // rows hold None once an entry overflows
    let mut row: Vec<Option<u128>> = vec![Some(1)];
    for i in 1..=n {
        let mut next = vec![Some(0u128); i + 1];
        next[0] = Some(0);
        for j in 1..=i {
            let keep = if j < i { row[j].and_then(|v| v.checked_mul(j as u128)) } else { Some(0) };
            next[j] = match (keep, row[j - 1]) {
                (Some(a), Some(b)) => a.checked_add(b),
                _ => None,
            };
        }
        row = next;
    }
    row[k].ok_or(Error::StirlingRange { n, k })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Target bound on the Wasserstein error of each `W_j` draw.
    pub epsilon: f64,
    /// Fixed recursion depth for every state, overriding `epsilon`.
    pub depth: Option<usize>,
    /// Cycles simulated per state to estimate the bound constants.
    pub pilot_cycles: usize,
    /// Stop the pilot early once this many sojourns were simulated...
    pub pilot_segment_budget: u64,
    /// ...but never with fewer cycles than this.
    pub min_pilot_cycles: usize,
    /// Draw cycles from a shared pool of this size instead of fresh.
    /// Faster, but the draws are no longer independent.
    pub pool: Option<usize>,
    pub max_cycle_segments: u64,
    /// Seed for the pilot and pool streams.
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            depth: None,
            pilot_cycles: 10_000,
            pilot_segment_budget: 50_000_000,
            min_pilot_cycles: 200,
            pool: None,
            max_cycle_segments: DEFAULT_MAX_CYCLE_SEGMENTS,
            seed: 0,
        }
    }
}

/// Per-state constants and pilot cycles.
#[derive(Debug, Clone)]
pub struct StateKit {
    pub diagnostics: SreDiagnostics,
    pub depth: usize,
    pub pilot: Vec<CyclePair>,
    pub pool: Option<Vec<CyclePair>>,
}

/// One draw from the limit law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitDraw {
    pub state: usize,
    pub w: f64,
    pub count: u64,
}

#[derive(Debug)]
pub struct LimitLawSampler {
    model: SemiMarkovModel,
    rates: RateMap,
    pi: Vec<f64>,
    pi_cum: Vec<f64>,
    cycle_len: Vec<f64>,
    e_pi_lambda: f64,
    config: SamplerConfig,
    kits: Vec<OnceLock<Result<Arc<StateKit>>>>,
}

impl LimitLawSampler {
    pub fn new(model: SemiMarkovModel, rates: RateMap, config: SamplerConfig) -> Result<Self> {
        model.ensure_valid()?;
        rates.check_for(&model)?;
        if !(config.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if config.depth == Some(0) {
            return Err(Error::InvalidArgument("recursion depth must be at least 1".into()));
        }
        if config.pilot_cycles == 0 {
            return Err(Error::InvalidArgument("pilot needs at least one cycle".into()));
        }
        let pi = model.stationary_time()?;
        if let Some(j) = pi.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::Degenerate(format!("stationary weight of state {j} is not positive")));
        }
        rates.check_stable(&pi)?;
        let cycle_len = (0..model.len())
            .map(|j| model.mean_cycle_length(j))
            .collect::<Result<Vec<_>>>()?;
        let mut acc = 0.0;
        let pi_cum = pi
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let e_pi_lambda = rates.mean_lambda(&pi);
        let kits = (0..model.len()).map(|_| OnceLock::new()).collect();
        Ok(Self { model, rates, pi, pi_cum, cycle_len, e_pi_lambda, config, kits })
    }

    pub fn model(&self) -> &SemiMarkovModel {
        &self.model
    }

    pub fn rates(&self) -> &RateMap {
        &self.rates
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Time-stationary law of the environment.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// `E|I_j|`, the mean regeneration-cycle length at `j`.
    pub fn mean_cycle_length(&self, j: usize) -> f64 {
        self.cycle_len[j]
    }

    pub fn e_pi_lambda(&self) -> f64 {
        self.e_pi_lambda
    }

    fn check_state(&self, j: usize) -> Result<()> {
        if j >= self.model.len() {
            return Err(Error::InvalidArgument(format!("state {j} out of range")));
        }
        Ok(())
    }

    /// Pilot cycles, bound constants and depth for state `j`.
    pub fn kit(&self, j: usize) -> Result<Arc<StateKit>> {
        self.check_state(j)?;
        self.kits[j].get_or_init(|| self.build_kit(j).map(Arc::new)).clone()
    }

    fn build_kit(&self, j: usize) -> Result<StateKit> {
        let cfg = &self.config;
        let streams = Streams::new(cfg.seed);
        let mut rng = streams.derive(PILOT_TAG).stream(j as u64);
        let mut pilot = Vec::with_capacity(cfg.pilot_cycles);
        let mut segments = 0u64;
        while pilot.len() < cfg.pilot_cycles {
            let mut pair = CyclePair { c: 1.0, d: 0.0 };
            let rates = &self.rates;
            self.model.for_each_cycle_segment(j, cfg.max_cycle_segments, &mut rng, |s, len| {
                segments += 1;
                let decay = (-rates.mu[s] * len).exp();
                pair.c *= decay;
                pair.d = pair.d * decay + g_function(rates.mu[s], rates.lambda[s], len);
            })?;
            pilot.push(pair);
            if segments > cfg.pilot_segment_budget && pilot.len() >= cfg.min_pilot_cycles {
                break;
            }
        }
        let diagnostics = estimate_constants(&pilot, self.e_pi_lambda, self.cycle_len[j])?;
        let depth = match cfg.depth {
            Some(n) => n,
            None => choose_n(&diagnostics, cfg.epsilon)?,
        };
        let pool = match cfg.pool {
            Some(size) if size > 0 => {
                let mut rng = streams.derive(POOL_TAG).stream(j as u64);
                Some(
                    (0..size)
                        .map(|_| {
                            sample_cycle_pair(&self.model, &self.rates, j, cfg.max_cycle_segments, &mut rng)
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            Some(_) => return Err(Error::InvalidArgument("pool size must be positive".into())),
            None => None,
        };
        Ok(StateKit { diagnostics, depth, pilot, pool })
    }

    pub fn diagnostics(&self, j: usize) -> Result<SreDiagnostics> {
        Ok(self.kit(j)?.diagnostics)
    }

    pub fn depth(&self, j: usize) -> Result<usize> {
        Ok(self.kit(j)?.depth)
    }

    pub fn sample_state<R: Rng>(&self, rng: &mut R) -> usize {
        pick_cumulative(rng, &self.pi_cum)
    }

    /// `V_{(j,n)}` from fresh cycles, or from the pool if configured.
    pub fn sample_v<R: Rng>(&self, j: usize, depth: usize, rng: &mut R) -> Result<f64> {
        let kit = self.kit(j)?;
        let mut v = 0.0;
        match &kit.pool {
            Some(pool) => {
                for _ in 0..depth {
                    v = pool[rng.random_range(0..pool.len())].apply(v);
                }
            }
            None => {
                for _ in 0..depth {
                    let p = sample_cycle_pair(
                        &self.model,
                        &self.rates,
                        j,
                        self.config.max_cycle_segments,
                        rng,
                    )?;
                    v = p.apply(v);
                }
            }
        }
        Ok(v)
    }

    /// `(a(T), b(T)) = (g(μ_j, λ_j, T), e^{−μ_j T})` for a residual draw `T`.
    pub fn sample_ab<R: Rng>(&self, j: usize, rng: &mut R) -> Result<(f64, f64)> {
        self.check_state(j)?;
        let t = self.model.residual_sample(j, rng)?;
        let (lam, mu) = (self.rates.lambda[j], self.rates.mu[j]);
        Ok((g_function(mu, lam, t), (-mu * t).exp()))
    }

    /// One draw of `W_j` at the configured depth.
    pub fn sample_w<R: Rng>(&self, j: usize, rng: &mut R) -> Result<f64> {
        let depth = self.depth(j)?;
        self.sample_w_at(j, depth, rng)
    }

    /// One draw of `W_j` with an explicit recursion depth.
    pub fn sample_w_at<R: Rng>(&self, j: usize, depth: usize, rng: &mut R) -> Result<f64> {
        let (a, b) = self.sample_ab(j, rng)?;
        let v = self.sample_v(j, depth, rng)?;
        Ok(a + b * v)
    }

    /// `(y, j)` with `j ~ π` and `y ~ Poisson(W_j)`.
    pub fn sample_limit_pair<R: Rng>(&self, rng: &mut R) -> Result<(u64, usize)> {
        let d = self.draw(rng)?;
        Ok((d.count, d.state))
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Result<LimitDraw> {
        let state = self.sample_state(rng);
        let w = self.sample_w(state, rng)?;
        let count = sample_poisson(w, rng);
        Ok(LimitDraw { state, w, count })
    }

    /// `n` draws, draw `i` using stream `i`; the result does not depend on
    /// the number of worker threads.
    pub fn draw_many(&self, n: usize, streams: &Streams) -> Result<Vec<LimitDraw>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.draw(&mut streams.stream(i)))
            .collect()
    }

    /// `n` draws of `W_j` at depth `depth`, draw `i` using stream `i`.
    pub fn sample_w_many(
        &self,
        j: usize,
        depth: usize,
        n: usize,
        streams: &Streams,
    ) -> Result<Vec<f64>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.sample_w_at(j, depth, &mut streams.stream(i)))
            .collect()
    }

    /// `n` draws of `V_{(j,depth)}`, draw `i` using stream `i`.
    pub fn sample_v_many(
        &self,
        j: usize,
        depth: usize,
        n: usize,
        streams: &Streams,
    ) -> Result<Vec<f64>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.sample_v(j, depth, &mut streams.stream(i)))
            .collect()
    }

    /// Perpetuity moments at `j` from the pilot cycles.
    pub fn state_moments(&self, j: usize, order: usize) -> Result<SreMoments> {
        let kit = self.kit(j)?;
        sre_moments(&JointMoments::from_pairs(&kit.pilot, order)?, order)
    }

    /// `∫ yⁿ π̃₁(dy) = Σ_j π_j Σ_k S(n,k) E[W_j^k]`, from the pilot moments.
    pub fn limit_moment<R: Rng>(&self, n: usize, t_samples: usize, rng: &mut R) -> Result<Estimate> {
        let moments = self.moment_inputs(n)?;
        self.limit_moment_with(&moments, n, t_samples, rng)
    }

    /// Per-state perpetuity moments up to `order`; states with negligible
    /// weight are `None`.
    pub fn moment_inputs(&self, order: usize) -> Result<Vec<Option<SreMoments>>> {
        (0..self.model.len())
            .map(|j| {
                if self.pi[j] < MIN_MOMENT_WEIGHT {
                    Ok(None)
                } else {
                    self.state_moments(j, order).map(Some)
                }
            })
            .collect()
    }

    /// Mixture moment of order `n` from supplied perpetuity moments.
    ///
    /// `E[W_j^k]` expands `(a + b·V)^k` binomially and averages the powers of
    /// `a(T)`, `b(T)` over `t_samples` residual draws.
    pub fn limit_moment_with<R: Rng>(
        &self,
        moments: &[Option<SreMoments>],
        n: usize,
        t_samples: usize,
        rng: &mut R,
    ) -> Result<Estimate> {
        if moments.len() != self.model.len() {
            return Err(Error::InvalidArgument("one moment entry per state is required".into()));
        }
        if n == 0 {
            return Ok(Estimate { value: 1.0, std_error: 0.0 });
        }
        if t_samples < 2 {
            return Err(Error::InvalidArgument("need at least two residual draws".into()));
        }
        let stirling: Vec<f64> =
            (0..=n).map(|k| stirling2(n, k).map(|s| s as f64)).collect::<Result<_>>()?;
        let mut value = 0.0;
        let mut variance = 0.0;
        for (j, m) in moments.iter().enumerate() {
            let Some(m) = m else { continue };
            if m.values.len() <= n {
                return Err(Error::InvalidArgument(format!(
                    "moments of state {j} stop at order {}, need {n}",
                    m.values.len() - 1
                )));
            }
            // coefficient of m^(l) in Σ_k S(n,k) (a + bV)^k, per residual draw
            let mut coef_sum = vec![0.0; n + 1];
            let mut h = Vec::with_capacity(t_samples);
            for _ in 0..t_samples {
                let (a, b) = self.sample_ab(j, rng)?;
                let mut hv = 0.0;
                for (l, cs) in coef_sum.iter_mut().enumerate() {
                    let c: f64 = (l.max(1)..=n)
                        .map(|k| stirling[k] * binomial(k, l) * a.powi((k - l) as i32))
                        .sum::<f64>()
                        * b.powi(l as i32);
                    *cs += c;
                    hv += c * m.values[l];
                }
                h.push(hv);
            }
            let t = t_samples as f64;
            let mean_h = h.iter().sum::<f64>() / t;
            let var_h = h.iter().map(|x| (x - mean_h).powi(2)).sum::<f64>() / (t - 1.0) / t;
            let weights: Vec<f64> = coef_sum.iter().map(|c| c / t).collect();
            let var_m = m.linear_variance(&weights);
            value += self.pi[j] * mean_h;
            variance += self.pi[j].powi(2) * (var_h + var_m);
        }
        Ok(Estimate { value, std_error: variance.sqrt() })
    }

    /// Moment table up to `n_max`.
    pub fn moment_table<R: Rng>(
        &self,
        n_max: usize,
        t_samples: usize,
        rng: &mut R,
    ) -> Result<MomentTable> {
        let inputs = self.moment_inputs(n_max)?;
        let mixture = (1..=n_max)
            .map(|n| self.limit_moment_with(&inputs, n, t_samples, rng))
            .collect::<Result<Vec<_>>>()?;
        let states = inputs
            .iter()
            .enumerate()
            .filter_map(|(j, m)| {
                m.as_ref().map(|m| StateMoments {
                    state: j,
                    name: self.model.names()[j].clone(),
                    weight: self.pi[j],
                    values: m.values.clone(),
                    std_errors: m.std_errors.clone(),
                })
            })
            .collect();
        let skipped = inputs.iter().enumerate().filter(|(_, m)| m.is_none()).map(|(j, _)| j).collect();
        Ok(MomentTable { states, mixture, skipped })
    }

    /// Monte Carlo mean of `P[Poisson(W) ≥ c]` over `j ~ π` and `W ~ W_j`.
    pub fn exceedance(&self, c: u64, k_reps: usize, streams: &Streams) -> Result<Estimate> {
        if k_reps == 0 {
            return Err(Error::InvalidArgument("need at least one replication".into()));
        }
        if c == 0 {
            return Ok(Estimate { value: 1.0, std_error: 0.0 });
        }
        let probs: Vec<f64> = (0..k_reps as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = streams.stream(i);
                let j = self.sample_state(&mut rng);
                Ok(poisson_upper_tail(self.sample_w(j, &mut rng)?, c))
            })
            .collect::<Result<_>>()?;
        let s = crate::stats::MeanSe::of(&probs);
        Ok(Estimate { value: s.mean, std_error: if k_reps > 1 { s.std_error } else { f64::NAN } })
    }
}

/// Sample or analytic joint moments `E[C^k D^m]` for `1 ≤ k + m ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMoments {
    order: usize,
    index: Vec<(usize, usize)>,
    mean: Vec<f64>,
    /// Covariance of the mean estimators, if sampled.
    cov: Option<Vec<Vec<f64>>>,
}

impl JointMoments {
    fn layout(order: usize) -> Vec<(usize, usize)> {
        (1..=order).flat_map(|l| (0..=l).map(move |k| (k, l - k))).collect()
    }

    pub fn from_pairs(pairs: &[CyclePair], order: usize) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::Empty("need at least two cycle pairs"));
        }
        let index = Self::layout(order);
        let p = index.len();
        let n = pairs.len() as f64;
        let features = |pair: &CyclePair| -> Vec<f64> {
            index.iter().map(|&(k, m)| pair.c.powi(k as i32) * pair.d.powi(m as i32)).collect()
        };
        let mut mean = vec![0.0; p];
        for pair in pairs {
            for (a, f) in mean.iter_mut().zip(features(pair)) {
                *a += f / n;
            }
        }
        let mut cov = vec![vec![0.0; p]; p];
        for pair in pairs {
            let f = features(pair);
            for a in 0..p {
                let da = f[a] - mean[a];
                for b in a..p {
                    cov[a][b] += da * (f[b] - mean[b]);
                }
            }
        }
        for a in 0..p {
            for b in a..p {
                let v = cov[a][b] / (n - 1.0) / n;
                cov[a][b] = v;
                cov[b][a] = v;
            }
        }
        Ok(Self { order, index, mean, cov: Some(cov) })
    }

    /// Exact moments from `f(k, m) = E[C^k D^m]`.
    pub fn analytic(order: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let index = Self::layout(order);
        let mean = index.iter().map(|&(k, m)| f(k, m)).collect();
        Self { order, index, mean, cov: None }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn position(&self, k: usize, m: usize) -> usize {
        let l = k + m;
        l * (l + 1) / 2 - 1 + k
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.mean[self.position(k, m)]
    }

    pub fn std_error(&self, k: usize, m: usize) -> f64 {
        let i = self.position(k, m);
        self.cov.as_ref().map_or(0.0, |c| c[i][i].sqrt())
    }
}

/// `m^(l) = E[(V*)^l]` for `l = 0..=order` with delta-method errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SreMoments {
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    #[serde(skip)]
    gradients: Vec<Vec<f64>>,
    #[serde(skip)]
    cov: Option<Vec<Vec<f64>>>,
}

impl SreMoments {
    /// Delta-method variance of `Σ_l w_l m^(l)`.
    pub fn linear_variance(&self, weights: &[f64]) -> f64 {
        let Some(cov) = &self.cov else { return 0.0 };
        let p = cov.len();
        let g: Vec<f64> = (0..p)
            .map(|i| weights.iter().zip(&self.gradients).map(|(w, gr)| w * gr[i]).sum())
            .collect();
        let mut v = 0.0;
        for a in 0..p {
            for b in 0..p {
                v += g[a] * cov[a][b] * g[b];
            }
        }
        v.max(0.0)
    }
}

fn recursion(jm: &JointMoments, mean: &[f64], order: usize) -> Vec<f64> {
    let mut m = vec![1.0];
    for l in 1..=order {
        let sum: f64 = (0..l)
            .map(|k| binomial(l, k) * mean[jm.position(k, l - k)] * m[k])
            .sum();
        m.push(sum / (1.0 - mean[jm.position(l, 0)]));
    }
    m
}

/// Moment recursion `m^(l) = (1 − E C^l)⁻¹ Σ_{k<l} C(l,k) E[C^k D^{l−k}] m^(k)`.
pub fn sre_moments(jm: &JointMoments, order: usize) -> Result<SreMoments> {
    if order > jm.order {
        return Err(Error::InvalidArgument(format!(
            "joint moments stop at order {}, need {order}",
            jm.order
        )));
    }
    for l in 1..=order {
        let value = jm.get(l, 0);
        let upper = value + 3.0 * jm.std_error(l, 0);
        if !(upper < 1.0) {
            return Err(Error::MomentCondition { order: l, value, upper });
        }
    }
    let values = recursion(jm, &jm.mean, order);
    let p = jm.mean.len();
    let mut gradients = vec![vec![0.0; p]; order + 1];
    if jm.cov.is_some() {
        let mut x = jm.mean.clone();
        for i in 0..p {
            let h = 1e-6 * jm.mean[i].abs().max(1e-6);
            x[i] = jm.mean[i] + h;
            let up = recursion(jm, &x, order);
            x[i] = jm.mean[i] - h;
            let down = recursion(jm, &x, order);
            x[i] = jm.mean[i];
            for l in 0..=order {
                gradients[l][i] = (up[l] - down[l]) / (2.0 * h);
            }
        }
    }
    let mut out = SreMoments { values, std_errors: Vec::new(), gradients, cov: jm.cov.clone() };
    out.std_errors = (0..=order)
        .map(|l| {
            let mut w = vec![0.0; order + 1];
            w[l] = 1.0;
            out.linear_variance(&w).sqrt()
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateMoments {
    pub state: usize,
    pub name: String,
    pub weight: f64,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Perpetuity moments per state and mixture moments `n = 1..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub states: Vec<StateMoments>,
    pub mixture: Vec<Estimate>,
    /// States left out because their stationary weight is negligible.
    pub skipped: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::stats::{count_histogram, pmf_tv, poisson_pmf, MeanSe};

    fn constant_sampler(lam: f64, mu: f64) -> LimitLawSampler {
        let (m, _) = presets::example1();
        let rates = RateMap::constant(m.len(), lam, mu).unwrap();
        let cfg = SamplerConfig { epsilon: 1e-20, pilot_cycles: 2000, ..Default::default() };
        LimitLawSampler::new(m, rates, cfg).unwrap()
    }

    fn falling(x: u64, k: usize) -> u128 {
        (0..k as u64).fold(1u128, |acc, i| acc * (x.saturating_sub(i)) as u128)
    }

    #[test]
    fn stirling_values() {
        assert_eq!(stirling2(0, 0).unwrap(), 1);
        for n in 1..20 {
            assert_eq!(stirling2(n, 1).unwrap(), 1);
            assert_eq!(stirling2(n, n).unwrap(), 1);
            assert_eq!(stirling2(n, 0).unwrap(), 0);
        }
        assert_eq!(stirling2(3, 2).unwrap(), 3);
        assert_eq!(stirling2(10, 4).unwrap(), 34105);
        assert!(stirling2(3, 4).is_err());
        assert!(stirling2(65, 2).is_err());
        assert_eq!(stirling2(64, 1).unwrap(), 1);
        assert_eq!(stirling2(64, 2).unwrap(), (1u128 << 63) - 1);
        // middle of row 64 exceeds u128
        assert!(matches!(stirling2(64, 30), Err(Error::StirlingRange { .. })));
    }

    #[test]
    fn stirling_falling_factorial_identity() {
        for x in 1..=5u64 {
            for n in 0..=8usize {
                let s: u128 = (0..=n).map(|k| stirling2(n, k).unwrap() * falling(x, k)).sum();
                assert_eq!(s, (x as u128).pow(n as u32));
            }
        }
    }

    #[test]
    fn constant_rates_are_exact() {
        let s = constant_sampler(2.0, 1.0);
        let mut rng = Streams::new(1).stream(0);
        for j in 0..s.model().len() {
            for _ in 0..50 {
                let w = s.sample_w(j, &mut rng).unwrap();
                assert!((w - 2.0).abs() < 1e-12, "state {j}: {w}");
            }
        }
        let draws = s.draw_many(20_000, &Streams::new(2)).unwrap();
        let counts: Vec<u64> = draws.iter().map(|d| d.count).collect();
        let exact: Vec<f64> = (0..40).map(|k| poisson_pmf(2.0, k)).collect();
        assert!(pmf_tv(&count_histogram(&counts), &exact).unwrap() < 0.02);
    }

    #[test]
    fn zero_arrivals_give_zero() {
        let s = constant_sampler(0.0, 1.0);
        let mut rng = Streams::new(3).stream(0);
        for _ in 0..100 {
            let (y, _) = s.sample_limit_pair(&mut rng).unwrap();
            assert_eq!(y, 0);
        }
        assert_eq!(s.limit_moment(2, 100, &mut rng).unwrap().value, 0.0);
    }

    #[test]
    fn unstable_rates_rejected() {
        let (m, _) = presets::example1();
        let rates = RateMap::constant(m.len(), 1.0, 0.0).unwrap();
        assert!(LimitLawSampler::new(m, rates, SamplerConfig::default()).is_err());
    }

    #[test]
    fn draws_are_deterministic_and_state_frequencies_follow_pi() {
        let (m, r) = presets::example1();
        let s = LimitLawSampler::new(m, r, SamplerConfig::default()).unwrap();
        let a = s.draw_many(5000, &Streams::new(4)).unwrap();
        let b = s.draw_many(5000, &Streams::new(4)).unwrap();
        assert_eq!(a, b);
        let n = a.len() as f64;
        for (j, p) in s.pi().iter().enumerate() {
            let f = a.iter().filter(|d| d.state == j).count() as f64 / n;
            assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / n).sqrt() + 1e-9);
        }
    }

    #[test]
    fn constant_rate_moments() {
        let (lam, mu) = (3.0, 1.5);
        // with D = (λ/μ)(1 − C) every moment of V* is (λ/μ)^l
        let s = constant_sampler(lam, mu);
        let pairs = &s.kit(2).unwrap().pilot;
        let m = sre_moments(&JointMoments::from_pairs(pairs, 3).unwrap(), 3).unwrap();
        for l in 0..=3 {
            assert!((m.values[l] - (lam / mu).powi(l as i32)).abs() < 1e-9, "{:?}", m.values);
        }
        let mut rng = Streams::new(5).stream(0);
        let e = s.limit_moment(1, 200, &mut rng).unwrap();
        assert!((e.value - 2.0).abs() < 1e-9);
        // second moment of Poisson(2) is 2 + 4
        let e2 = s.limit_moment(2, 200, &mut rng).unwrap();
        assert!((e2.value - 6.0).abs() < 1e-8);
    }

    #[test]
    fn analytic_joint_moments() {
        // C ≡ 1/2, D ≡ 1: V* = 2 exactly
        let jm = JointMoments::analytic(4, |k, m| 0.5f64.powi(k as i32) * 1f64.powi(m as i32));
        let m = sre_moments(&jm, 4).unwrap();
        for l in 0..=4 {
            assert!((m.values[l] - 2f64.powi(l as i32)).abs() < 1e-12);
            assert_eq!(m.std_errors[l], 0.0);
        }
        assert_eq!(m.values[0], 1.0);
        let bad = JointMoments::analytic(2, |k, _| if k == 2 { 1.0 } else { 0.5 });
        assert!(matches!(sre_moments(&bad, 2), Err(Error::MomentCondition { order: 2, .. })));
        assert!(sre_moments(&jm, 5).is_err());
    }

    #[test]
    fn poisson_factorial_moments() {
        let n = 200_000;
        for (i, &w) in [0.5, 1.0, 2.0].iter().enumerate() {
            let mut rng = Streams::new(6).stream(i as u64);
            let ys: Vec<u64> = (0..n).map(|_| sample_poisson(w, &mut rng)).collect();
            for k in 1..=4 {
                let f: Vec<f64> = ys.iter().map(|&y| falling(y, k) as f64).collect();
                let s = MeanSe::of(&f);
                let target = f64::powi(w, k as i32);
                assert!((s.mean - target).abs() < 3.0 * s.std_error + 1e-12, "w {w} k {k}");
            }
        }
    }

    #[test]
    fn exceedance_constant_rates() {
        let s = constant_sampler(1.0, 1.0);
        let st = Streams::new(7);
        assert_eq!(s.exceedance(0, 10, &st).unwrap().value, 1.0);
        let e = s.exceedance(3, 2000, &st).unwrap();
        let exact = 1.0 - (-1.0f64).exp() * 2.5;
        assert!((e.value - exact).abs() < 1e-12);
    }

    #[test]
    fn exceedance_is_monotone() {
        let (m, r) = presets::example1();
        let s = LimitLawSampler::new(m, r, SamplerConfig::default()).unwrap();
        let st = Streams::new(8);
        let vals: Vec<f64> = (0..8).map(|c| s.exceedance(c, 3000, &st).unwrap().value).collect();
        assert_eq!(vals[0], 1.0);
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pool_mode_is_close_to_fresh() {
        let (m, r) = presets::example1();
        let fresh = LimitLawSampler::new(m.clone(), r.clone(), SamplerConfig::default()).unwrap();
        let pooled = LimitLawSampler::new(
            m,
            r,
            SamplerConfig { pool: Some(20_000), ..Default::default() },
        )
        .unwrap();
        let a = fresh.sample_w_many(2, fresh.depth(2).unwrap(), 20_000, &Streams::new(9)).unwrap();
        let b = pooled.sample_w_many(2, pooled.depth(2).unwrap(), 20_000, &Streams::new(10)).unwrap();
        let (sa, sb) = (MeanSe::of(&a), MeanSe::of(&b));
        assert!((sa.mean - sb.mean).abs() < 4.0 * (sa.std_error.powi(2) + sb.std_error.powi(2)).sqrt());
    }

    #[test]
    fn pareto_state_zero_is_heavy_tailed() {
        let (m, r) = presets::example2_pareto(1.0, 20, 2.2).unwrap();
        let s = LimitLawSampler::new(m, r, SamplerConfig { pilot_cycles: 2000, ..Default::default() })
            .unwrap();
        let mut w = s.sample_w_many(0, s.depth(0).unwrap(), 10_000, &Streams::new(11)).unwrap();
        w.sort_by(f64::total_cmp);
        let p99 = w[(0.99 * w.len() as f64) as usize];
        let max = *w.last().unwrap();
        assert!(max > 5.0 * p99, "max {max}, p99 {p99}");
    }
}
