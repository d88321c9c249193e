//! Regeneration-cycle functionals and the perpetuity `V = C·V + D`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue::{phi_and_i, RateMap};
use crate::semi_markov::{decompose_cycles, SemiMarkovModel, Trajectory};
use crate::stats::MeanSe;

/// Default cap on the number of sojourns inside one regeneration cycle.
pub const DEFAULT_MAX_CYCLE_SEGMENTS: u64 = 100_000_000;

/// `C = exp(−∫μ(X))` and `D = ∫λ(X_s) exp(−∫_s μ(X))` over one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclePair {
    pub c: f64,
    pub d: f64,
}

impl CyclePair {
    /// The affine map `v ↦ c·v + d`.
    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        self.c * v + self.d
    }
}

/// Plug-in constants for the geometric error bound `a1·e^{−r·n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SreDiagnostics {
    pub mean_c: f64,
    pub se_c: f64,
    pub mean_d: f64,
    pub a1: f64,
    pub r: f64,
    pub mean_log_c: f64,
    pub mean_log_plus_d: f64,
    pub pairs: usize,
}

pub fn cycle_functionals(cycle: &Trajectory, rates: &RateMap) -> CyclePair {
    let (c, d) = phi_and_i(cycle, rates);
    CyclePair { c, d }
}

/// Cycle pair of a fresh regeneration cycle at `anchor`, accumulated
/// segment by segment without storing the cycle.
pub fn sample_cycle_pair<R: Rng>(
    model: &SemiMarkovModel,
    rates: &RateMap,
    anchor: usize,
    max_segments: u64,
    rng: &mut R,
) -> Result<CyclePair> {
    let mut pair = CyclePair { c: 1.0, d: 0.0 };
    model.for_each_cycle_segment(anchor, max_segments, rng, |state, len| {
        let (lam, mu) = (rates.lambda[state], rates.mu[state]);
        if mu == 0.0 {
            pair.d += lam * len;
        } else {
            let em1 = (-mu * len).exp_m1();
            let decay = 1.0 + em1;
            pair.c *= decay;
            pair.d = pair.d * decay - lam * em1 / mu;
        }
    })?;
    Ok(pair)
}

/// `n` independent cycle pairs at anchor `j`.
pub fn sample_cycles<R: Rng>(
    model: &SemiMarkovModel,
    rates: &RateMap,
    j: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<CyclePair>> {
    rates.check_for(model)?;
    (0..n)
        .map(|_| sample_cycle_pair(model, rates, j, DEFAULT_MAX_CYCLE_SEGMENTS, rng))
        .collect()
}

/// Pairs of the complete cycles at `j` inside one long trajectory.
pub fn chop_cycles(traj: &Trajectory, rates: &RateMap, j: usize) -> Vec<CyclePair> {
    decompose_cycles(traj, j)
        .cycles
        .iter()
        .map(|c| cycle_functionals(c, rates))
        .collect()
}

/// `V_i = C_i·V_{i−1} + D_i` folded over `pairs` from `v0`.
pub fn forward_recursion(pairs: &[CyclePair], v0: f64) -> f64 {
    pairs.iter().fold(v0, |v, p| p.apply(v))
}

/// Plug-in `A₁ = E_πλ · E|I_j| / (1 − E C)` and `r = −ln E C`.
pub fn estimate_constants(
    pairs: &[CyclePair],
    e_pi_lambda: f64,
    mean_cycle_len: f64,
) -> Result<SreDiagnostics> {
    if pairs.is_empty() {
        return Err(Error::Empty("cycle pairs"));
    }
    let cs: Vec<f64> = pairs.iter().map(|p| p.c).collect();
    let c = MeanSe::of(&cs);
    if !(c.mean < 1.0) {
        return Err(Error::InvalidRate { mean_c: c.mean });
    }
    let n = pairs.len() as f64;
    let mean_d = pairs.iter().map(|p| p.d).sum::<f64>() / n;
    let mean_log_c = pairs.iter().map(|p| p.c.ln()).sum::<f64>() / n;
    let mean_log_plus_d = pairs.iter().map(|p| p.d.ln().max(0.0)).sum::<f64>() / n;
    Ok(SreDiagnostics {
        mean_c: c.mean,
        se_c: if c.std_error.is_finite() { c.std_error } else { 0.0 },
        mean_d,
        a1: e_pi_lambda * mean_cycle_len / (1.0 - c.mean),
        r: -c.mean.ln(),
        mean_log_c,
        mean_log_plus_d,
        pairs: pairs.len(),
    })
}

/// Smallest `n ≥ 1` with `a1·e^{−r·n} ≤ epsilon`.
pub fn choose_n(diag: &SreDiagnostics, epsilon: f64) -> Result<usize> {
    if !(diag.r > 0.0) {
        return Err(Error::InvalidRate { mean_c: diag.mean_c });
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if diag.a1 <= epsilon {
        return Ok(1);
    }
    let n = ((diag.a1 / epsilon).ln() / diag.r).ceil();
    if !n.is_finite() || n > usize::MAX as f64 {
        return Err(Error::InvalidArgument(format!("recursion depth {n} is not representable")));
    }
    Ok((n as usize).max(1))
}

pub fn write_pairs_csv<W: Write>(pairs: &[CyclePair], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in pairs {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(input: R) -> Result<Vec<CyclePair>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
