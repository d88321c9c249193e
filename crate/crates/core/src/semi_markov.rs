//! Semi-Markov environment: embedded kernel, sojourn family, initial law.
//!
//! The model is immutable once built. Sampling goes through [`SemiMarkovModel::walk`],
//! which every simulator shares, so a trajectory sampled up front and a
//! trajectory streamed segment by segment consume the RNG identically.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::pick_cumulative;
use crate::sojourn::SojournDist;

/// Row sums must match 1 to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Largest state space solved densely; bigger models use power iteration.
pub const DENSE_SOLVE_MAX: usize = 200;
pub const POWER_ITERATION_CAP: usize = 1_000_000;
pub const DEFAULT_MAX_SEGMENTS: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub state: usize,
    pub sojourn: f64,
}

/// Piecewise-constant environment path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    segments: Vec<Segment>,
    total_time: f64,
}

impl Trajectory {
    pub fn new(segments: Vec<Segment>) -> Self {
        let total_time = segments.iter().map(|s| s.sojourn).sum();
        Self { segments, total_time }
    }

    fn with_total(segments: Vec<Segment>, total_time: f64) -> Self {
        Self { segments, total_time }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start_state(&self) -> Option<usize> {
        self.segments.first().map(|s| s.state)
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Fraction of time spent in each of `k` states.
    pub fn occupation(&self, k: usize) -> Vec<f64> {
        let mut occ = vec![0.0; k];
        for s in &self.segments {
            occ[s.state] += s.sojourn;
        }
        let total: f64 = occ.iter().sum();
        if total > 0.0 {
            occ.iter_mut().for_each(|o| *o /= total);
        }
        occ
    }
}

/// A path split at every instant a sojourn in `anchor` begins.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleDecomposition {
    pub anchor: usize,
    pub pre_cycle: Trajectory,
    pub cycles: Vec<Trajectory>,
    pub residual: Trajectory,
}

impl CycleDecomposition {
    /// Concatenation of all pieces, segment for segment.
    pub fn reassemble(&self) -> Trajectory {
        let mut segments = self.pre_cycle.segments.clone();
        for c in &self.cycles {
            segments.extend_from_slice(&c.segments);
        }
        segments.extend_from_slice(&self.residual.segments);
        Trajectory::new(segments)
    }
}

/// Splits `traj` into a pre-cycle, complete regeneration cycles at `anchor`,
/// and the residual piece that starts at the last visit.
pub fn decompose_cycles(traj: &Trajectory, anchor: usize) -> CycleDecomposition {
    let hits: Vec<usize> = traj
        .segments
        .iter()
        .enumerate()
        .filter(|(_, s)| s.state == anchor)
        .map(|(i, _)| i)
        .collect();
    let piece = |a: usize, b: usize| Trajectory::new(traj.segments[a..b].to_vec());
    match (hits.first(), hits.last()) {
        (Some(&first), Some(&last)) => CycleDecomposition {
            anchor,
            pre_cycle: piece(0, first),
            cycles: hits.windows(2).map(|w| piece(w[0], w[1])).collect(),
            residual: piece(last, traj.segments.len()),
        },
        _ => CycleDecomposition {
            anchor,
            pre_cycle: traj.clone(),
            cycles: Vec::new(),
            residual: Trajectory::default(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    Shape,
    ZeroDiagonal,
    RowStochastic,
    Irreducible,
    SojournsPresent,
    FiniteMeans,
    InitialLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub clause: Clause,
    pub passed: bool,
    pub detail: String,
}

/// Per-clause outcome of model validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn clause(&self, clause: Clause) -> Option<&Check> {
        self.checks.iter().find(|c| c.clause == clause)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "[{mark}] {:?}: {}", c.clause, c.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Successor {
    target: usize,
    dist: SojournDist,
}

/// Semi-Markov environment built from (kernel, sojourn family, initial law).
#[derive(Debug, Clone)]
pub struct SemiMarkovModel {
    names: Vec<String>,
    kernel: Vec<Vec<f64>>,
    sojourns: Vec<Vec<Option<SojournDist>>>,
    initial: Vec<f64>,
    successors: Vec<Vec<Successor>>,
    successor_cum: Vec<Vec<f64>>,
    residual_cum: Vec<Vec<f64>>,
    initial_cum: Vec<f64>,
    report: ValidationReport,
    valid: bool,
}

impl SemiMarkovModel {
    /// Builds a model. Only structural problems (dimensions, non-finite
    /// entries, unknown states) are errors here; semantic problems are
    /// recorded in the validation report.
    pub fn new(
        names: Vec<String>,
        kernel: Vec<Vec<f64>>,
        sojourns: Vec<((usize, usize), SojournDist)>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::InvalidModel("model has no states".into()));
        }
        let unique: HashSet<&String> = names.iter().collect();
        if unique.len() != k {
            return Err(Error::InvalidModel("state names are not unique".into()));
        }
        if kernel.len() != k || kernel.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidModel(format!("kernel must be {k}x{k}")));
        }
        if kernel.iter().flatten().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidModel(
                "kernel entries must be finite and nonnegative".into(),
            ));
        }
        if initial.len() != k {
            return Err(Error::InvalidModel(format!("initial law must have {k} entries")));
        }
        if initial.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidModel(
                "initial law entries must be finite and nonnegative".into(),
            ));
        }
        let mut table: Vec<Vec<Option<SojournDist>>> = vec![vec![None; k]; k];
        for ((i, j), d) in sojourns {
            if i >= k || j >= k {
                return Err(Error::InvalidModel(format!("sojourn ({i},{j}) out of range")));
            }
            table[i][j] = Some(d);
        }
        let mut model = Self {
            names,
            kernel,
            sojourns: table,
            initial,
            successors: Vec::new(),
            successor_cum: Vec::new(),
            residual_cum: Vec::new(),
            initial_cum: Vec::new(),
            report: ValidationReport { checks: Vec::new() },
            valid: false,
        };
        model.report = model.run_checks();
        model.valid = model.report.passed();
        model.build_tables();
        Ok(model)
    }

    fn build_tables(&mut self) {
        let k = self.len();
        self.successors = (0..k)
            .map(|i| {
                (0..k)
                    .filter(|&j| self.kernel[i][j] > 0.0)
                    .filter_map(|j| {
                        self.sojourns[i][j]
                            .clone()
                            .map(|dist| Successor { target: j, dist })
                    })
                    .collect()
            })
            .collect();
        self.successor_cum = self
            .successors
            .iter()
            .enumerate()
            .map(|(i, succ)| cumulative(succ.iter().map(|s| self.kernel[i][s.target])))
            .collect();
        self.residual_cum = self
            .successors
            .iter()
            .enumerate()
            .map(|(i, succ)| {
                cumulative(succ.iter().map(|s| self.kernel[i][s.target] * s.dist.mean()))
            })
            .collect();
        self.initial_cum = cumulative(self.initial.iter().copied());
    }

    fn run_checks(&self) -> ValidationReport {
        let k = self.len();
        let mut checks = Vec::new();

        let bad_diag: Vec<usize> = (0..k).filter(|&i| self.kernel[i][i] != 0.0).collect();
        checks.push(Check {
            clause: Clause::ZeroDiagonal,
            passed: bad_diag.is_empty(),
            detail: if bad_diag.is_empty() {
                "all diagonal entries are zero".into()
            } else {
                format!("nonzero diagonal at rows {}", self.list_states(&bad_diag))
            },
        });

        let bad_rows: Vec<(usize, f64)> = (0..k)
            .map(|i| (i, self.kernel[i].iter().sum::<f64>()))
            .filter(|(_, s)| (s - 1.0).abs() > ROW_SUM_TOL)
            .collect();
        checks.push(Check {
            clause: Clause::RowStochastic,
            passed: bad_rows.is_empty(),
            detail: if bad_rows.is_empty() {
                "every row sums to 1".into()
            } else {
                bad_rows
                    .iter()
                    .map(|(i, s)| format!("row {} ({}) sums to {s}", i, self.names[*i]))
                    .collect::<Vec<_>>()
                    .join("; ")
            },
        });

        let unreachable = self.unreachable_pairs();
        checks.push(Check {
            clause: Clause::Irreducible,
            passed: unreachable.is_none(),
            detail: match unreachable {
                None => "every state reaches every other state".into(),
                Some((i, j)) => format!(
                    "state {} ({}) cannot reach state {} ({})",
                    i, self.names[i], j, self.names[j]
                ),
            },
        });

        let missing: Vec<String> = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .filter(|&(i, j)| self.kernel[i][j] > 0.0 && self.sojourns[i][j].is_none())
            .map(|(i, j)| format!("({},{})", self.names[i], self.names[j]))
            .collect();
        checks.push(Check {
            clause: Clause::SojournsPresent,
            passed: missing.is_empty(),
            detail: if missing.is_empty() {
                "every allowed transition has a sojourn law".into()
            } else {
                format!("missing sojourn for {}", missing.join(", "))
            },
        });

        let sup_mean = self
            .sojourns
            .iter()
            .flatten()
            .flatten()
            .map(SojournDist::mean)
            .fold(0.0f64, f64::max);
        checks.push(Check {
            clause: Clause::FiniteMeans,
            passed: sup_mean.is_finite(),
            detail: format!("sup of sojourn means = {sup_mean}"),
        });

        let mass: f64 = self.initial.iter().sum();
        checks.push(Check {
            clause: Clause::InitialLaw,
            passed: (mass - 1.0).abs() <= 1e-9,
            detail: format!("initial law has total mass {mass}"),
        });

        ValidationReport { checks }
    }

    fn list_states(&self, idx: &[usize]) -> String {
        idx.iter()
            .map(|&i| format!("{i} ({})", self.names[i]))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// First (i, j) with j not reachable from i, if any.
    fn unreachable_pairs(&self) -> Option<(usize, usize)> {
        let k = self.len();
        for start in 0..k {
            let mut seen = vec![false; k];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for j in 0..k {
                    if self.kernel[i][j] > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            // a state must also be able to return to itself
            let returns = (0..k).any(|i| seen[i] && self.kernel[i][start] > 0.0);
            if k > 1 || returns {
                if let Some(j) = seen.iter().position(|s| !s) {
                    return Some((start, j));
                }
            }
            if !returns {
                return Some((start, start));
            }
        }
        None
    }

    pub fn validate(&self) -> &ValidationReport {
        &self.report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        if self.valid {
            Ok(())
        } else {
            let msg = self
                .report
                .failures()
                .map(|c| c.detail.clone())
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidModel(msg))
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn sojourn(&self, i: usize, j: usize) -> Option<&SojournDist> {
        self.sojourns.get(i)?.get(j)?.as_ref()
    }

    /// `m_i = Σ_j P_ij m_ij`.
    pub fn mean_sojourn(&self, i: usize) -> f64 {
        (0..self.len())
            .filter(|&j| self.kernel[i][j] > 0.0)
            .map(|j| {
                let m = self.sojourns[i][j].as_ref().map_or(f64::NAN, SojournDist::mean);
                self.kernel[i][j] * m
            })
            .sum()
    }

    /// Stationary law of the embedded chain with `‖μP − μ‖₁ < tol`.
    pub fn stationary_embedded(&self, tol: f64) -> Result<Vec<f64>> {
        self.ensure_valid()?;
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if self.len() <= DENSE_SOLVE_MAX {
            let mu = self.stationary_dense()?;
            let residual = self.stationary_residual(&mu);
            if residual < tol {
                return Ok(mu);
            }
            // dense solve lost accuracy; polish with the iterative solver
        }
        self.stationary_power(tol, POWER_ITERATION_CAP)
    }

    /// Dense LU solve of `μ(P − I) = 0`, `Σμ = 1`.
    pub fn stationary_dense(&self) -> Result<Vec<f64>> {
        let k = self.len();
        let mut a = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                // row j of (P − I)^T
                a[(j, i)] = self.kernel[i][j] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for i in 0..k {
            a[(k - 1, i)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(k);
        b[k - 1] = 1.0;
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Degenerate("singular stationary system".into()))?;
        Ok(normalise(x.iter().map(|v| v.max(0.0)).collect()))
    }

    /// Lazy power iteration `μ ← (μ + μP)/2`; the lazy step removes periodicity.
    pub fn stationary_power(&self, tol: f64, cap: usize) -> Result<Vec<f64>> {
        let k = self.len();
        let mut mu = vec![1.0 / k as f64; k];
        let mut residual = f64::INFINITY;
        for _ in 0..cap {
            let next = self.left_multiply(&mu);
            residual = mu.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            if residual < tol {
                return Ok(normalise(mu));
            }
            mu = mu.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        }
        Err(Error::NoConvergence { cap, residual })
    }

    fn left_multiply(&self, mu: &[f64]) -> Vec<f64> {
        let k = self.len();
        let mut out = vec![0.0; k];
        for i in 0..k {
            if mu[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                out[j] += mu[i] * self.kernel[i][j];
            }
        }
        out
    }

    /// `‖μP − μ‖₁`.
    pub fn stationary_residual(&self, mu: &[f64]) -> f64 {
        self.left_multiply(mu)
            .iter()
            .zip(mu)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Time-stationary law `π_j ∝ μ_j m_j`.
    pub fn stationary_time(&self) -> Result<Vec<f64>> {
        let mu = self.stationary_embedded(1e-12)?;
        Ok(normalise(
            mu.iter()
                .enumerate()
                .map(|(j, m)| m * self.mean_sojourn(j))
                .collect(),
        ))
    }

    /// Expected length of a regeneration cycle at `j`: `Σ_k μ_k m_k / μ_j`.
    pub fn mean_cycle_length(&self, j: usize) -> Result<f64> {
        let mu = self.stationary_embedded(1e-12)?;
        let total: f64 = mu.iter().enumerate().map(|(k, m)| m * self.mean_sojourn(k)).sum();
        Ok(total / mu[j])
    }

    pub fn sample_initial<R: Rng>(&self, rng: &mut R) -> usize {
        pick_cumulative(rng, &self.initial_cum)
    }

    /// Next state and the sojourn spent in `state` before jumping there.
    #[inline]
    pub fn step<R: Rng>(&self, state: usize, rng: &mut R) -> (usize, f64) {
        let succ = &self.successors[state];
        let idx = pick_cumulative(rng, &self.successor_cum[state]);
        let s = &succ[idx];
        (s.target, s.dist.sample(rng))
    }

    /// Streams the environment on `[0, horizon]` from `start`, calling `visit`
    /// with each (state, sojourn) piece; the last piece is cut at the horizon.
    /// Returns the number of pieces.
    pub fn walk_from<R: Rng>(
        &self,
        start: usize,
        horizon: f64,
        max_segments: u64,
        rng: &mut R,
        mut visit: impl FnMut(usize, f64),
    ) -> Result<u64> {
        let mut t = 0.0;
        let mut state = start;
        let mut count = 0u64;
        loop {
            let (next, sojourn) = self.step(state, rng);
            count += 1;
            if count > max_segments {
                return Err(Error::Explosion { what: "environment segments", cap: max_segments });
            }
            if t + sojourn >= horizon {
                visit(state, horizon - t);
                return Ok(count);
            }
            visit(state, sojourn);
            t += sojourn;
            state = next;
        }
    }

    /// [`walk_from`](Self::walk_from) with the start drawn from the initial law.
    pub fn walk<R: Rng>(
        &self,
        horizon: f64,
        max_segments: u64,
        rng: &mut R,
        visit: impl FnMut(usize, f64),
    ) -> Result<u64> {
        self.ensure_valid()?;
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be finite and >= 0, got {horizon}")));
        }
        let start = self.sample_initial(rng);
        self.walk_from(start, horizon, max_segments, rng, visit)
    }

    pub fn sample_trajectory<R: Rng>(&self, horizon: f64, rng: &mut R) -> Result<Trajectory> {
        self.sample_trajectory_capped(horizon, DEFAULT_MAX_SEGMENTS, rng)
    }

    pub fn sample_trajectory_capped<R: Rng>(
        &self,
        horizon: f64,
        max_segments: u64,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let mut segments = Vec::new();
        self.walk(horizon, max_segments, rng, |state, sojourn| {
            segments.push(Segment { state, sojourn })
        })?;
        Ok(Trajectory::with_total(segments, horizon))
    }

    /// One regeneration cycle: starts at `anchor`, ends just before the next
    /// sojourn at `anchor` begins.
    pub fn sample_cycle<R: Rng>(
        &self,
        anchor: usize,
        max_segments: u64,
        rng: &mut R,
    ) -> Result<Trajectory> {
        let mut segments = Vec::new();
        self.for_each_cycle_segment(anchor, max_segments, rng, |state, sojourn| {
            segments.push(Segment { state, sojourn })
        })?;
        Ok(Trajectory::new(segments))
    }

    /// Allocation-free form of [`sample_cycle`](Self::sample_cycle).
    pub fn for_each_cycle_segment<R: Rng>(
        &self,
        anchor: usize,
        max_segments: u64,
        rng: &mut R,
        mut visit: impl FnMut(usize, f64),
    ) -> Result<()> {
        self.ensure_valid()?;
        if anchor >= self.len() {
            return Err(Error::InvalidArgument(format!("state {anchor} out of range")));
        }
        let mut state = anchor;
        let mut count = 0u64;
        loop {
            let (next, sojourn) = self.step(state, rng);
            count += 1;
            if count > max_segments {
                return Err(Error::Explosion { what: "segments in one cycle", cap: max_segments });
            }
            visit(state, sojourn);
            if next == anchor {
                return Ok(());
            }
            state = next;
        }
    }

    /// Draw from the size-biased residual law at `j`: successor `k` with
    /// probability `P_jk m_jk / m_j`, then an equilibrium draw of `F_jk`.
    pub fn residual_sample<R: Rng>(&self, j: usize, rng: &mut R) -> Result<f64> {
        self.ensure_valid()?;
        let idx = pick_cumulative(rng, &self.residual_cum[j]);
        self.successors[j][idx].dist.equilibrium_sample(rng)
    }

    /// `π*_j[x, ∞) = Σ_k P_jk ∫ₓ^∞ (1 − F_jk) / m_j`.
    pub fn residual_tail(&self, j: usize, x: f64) -> Result<f64> {
        let mut num = 0.0;
        for s in &self.successors[j] {
            num += self.kernel[j][s.target] * s.dist.tail_integral(x)?;
        }
        Ok(num / self.mean_sojourn(j))
    }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn normalise(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::rng::Streams;
    use crate::stats::MeanSe;

    fn two_state(m1: f64, m2: f64) -> SemiMarkovModel {
        SemiMarkovModel::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![
                ((0, 1), SojournDist::exponential(1.0 / m1).unwrap()),
                ((1, 0), SojournDist::exponential(1.0 / m2).unwrap()),
            ],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    /// Binomial(10, 5/9) computed directly from its definition.
    fn binomial_10_5_9() -> Vec<f64> {
        let p: f64 = 5.0 / 9.0;
        (0..=10)
            .map(|i| {
                let c = (1..=i).fold(1.0, |acc, t| acc * (10 - t + 1) as f64 / t as f64);
                c * p.powi(i) * (1.0 - p).powi(10 - i)
            })
            .collect()
    }

    #[test]
    fn validation_passes_for_simple_and_example1() {
        assert!(two_state(1.0, 1.0).validate().passed());
        let (m, _) = presets::example1();
        assert!(m.validate().passed(), "{}", m.validate());
    }

    #[test]
    fn validation_flags_each_clause() {
        let m = SemiMarkovModel::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 0.9], vec![1.0, 0.0]],
            vec![
                ((0, 1), SojournDist::exponential(1.0).unwrap()),
                ((1, 0), SojournDist::exponential(1.0).unwrap()),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        let r = m.validate();
        assert!(!r.clause(Clause::RowStochastic).unwrap().passed);
        assert!(r.clause(Clause::RowStochastic).unwrap().detail.contains("row 0"));
        assert!(r.clause(Clause::ZeroDiagonal).unwrap().passed);

        let diag = SemiMarkovModel::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![0.5, 0.5]],
            vec![
                ((0, 1), SojournDist::exponential(1.0).unwrap()),
                ((1, 0), SojournDist::exponential(1.0).unwrap()),
                ((1, 1), SojournDist::exponential(1.0).unwrap()),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert!(!diag.validate().clause(Clause::ZeroDiagonal).unwrap().passed);
        assert!(diag.stationary_embedded(1e-12).is_err());

        let missing = SemiMarkovModel::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![((0, 1), SojournDist::exponential(1.0).unwrap())],
            vec![1.0, 0.0],
        )
        .unwrap();
        let c = missing.validate().clause(Clause::SojournsPresent).unwrap().clone();
        assert!(!c.passed && c.detail.contains("(b,a)"));

        let reducible = SemiMarkovModel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0]],
            vec![
                ((0, 1), SojournDist::exponential(1.0).unwrap()),
                ((1, 0), SojournDist::exponential(1.0).unwrap()),
                ((2, 0), SojournDist::exponential(1.0).unwrap()),
                ((2, 1), SojournDist::exponential(1.0).unwrap()),
            ],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        assert!(!reducible.validate().clause(Clause::Irreducible).unwrap().passed);

        // one state cannot have a zero diagonal and a stochastic row at once
        let single = SemiMarkovModel::new(
            vec!["a".into()],
            vec![vec![0.0]],
            vec![],
            vec![1.0],
        )
        .unwrap();
        assert!(!single.validate().passed());
    }

    #[test]
    fn structural_errors() {
        assert!(SemiMarkovModel::new(vec![], vec![], vec![], vec![]).is_err());
        assert!(SemiMarkovModel::new(
            vec!["a".into(), "a".into()],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![],
            vec![1.0, 0.0]
        )
        .is_err());
        assert!(SemiMarkovModel::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0]],
            vec![],
            vec![1.0, 0.0]
        )
        .is_err());
    }

    #[test]
    fn stationary_two_state() {
        let m = two_state(1.0, 1.0);
        let mu = m.stationary_embedded(1e-12).unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-14 && (mu[1] - 0.5).abs() < 1e-14);
        assert_eq!(m.stationary_time().unwrap(), vec![0.5, 0.5]);
        let pi = two_state(1.0, 3.0).stationary_time().unwrap();
        assert!((pi[0] - 0.25).abs() < 1e-14 && (pi[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn example1_stationary_laws() {
        let (m, _) = presets::example1();
        let binom = binomial_10_5_9();
        let pi = m.stationary_time().unwrap();
        for (a, b) in pi.iter().zip(&binom) {
            assert!((a - b).abs() < 1e-10);
        }
        // embedded law is proportional to Binomial(10, 5/9)_i * (50 - i)
        let mu = m.stationary_embedded(1e-12).unwrap();
        let raw: Vec<f64> = binom.iter().enumerate().map(|(i, b)| b * (50 - i) as f64).collect();
        let s: f64 = raw.iter().sum();
        for (a, b) in mu.iter().zip(&raw) {
            assert!((a - b / s).abs() < 1e-12);
        }
        // power iteration reaches the same answer despite the period-2 chain
        let power = m.stationary_power(1e-13, POWER_ITERATION_CAP).unwrap();
        for (a, b) in mu.iter().zip(&power) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn mean_sojourns() {
        let (m, _) = presets::example1();
        for i in 0..=10 {
            assert!((m.mean_sojourn(i) - 1.0 / (50 - i) as f64).abs() < 1e-15);
        }
        let single = SemiMarkovModel::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![
                ((0, 1), SojournDist::exponential(2.0).unwrap()),
                ((1, 0), SojournDist::exponential(1.0).unwrap()),
            ],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert_eq!(single.mean_sojourn(0), 0.5);
        let split = SemiMarkovModel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            vec![
                ((0, 1), SojournDist::exponential(1.0).unwrap()),
                ((0, 2), SojournDist::exponential(1.0 / 3.0).unwrap()),
                ((1, 0), SojournDist::exponential(1.0).unwrap()),
                ((2, 0), SojournDist::exponential(1.0).unwrap()),
            ],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        assert!((split.mean_sojourn(0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_horizon_gives_single_empty_segment() {
        let m = two_state(1.0, 1.0);
        let t = m.sample_trajectory(0.0, &mut Streams::new(1).stream(0)).unwrap();
        assert_eq!(t.segments(), &[Segment { state: 0, sojourn: 0.0 }]);
        assert_eq!(t.total_time(), 0.0);
    }

    #[test]
    fn trajectory_invariants_and_segment_count() {
        let m = two_state(1.0, 1.0);
        let mut rng = Streams::new(2).stream(0);
        let t = m.sample_trajectory(1000.0, &mut rng).unwrap();
        for w in t.segments().windows(2) {
            assert_ne!(w[0].state, w[1].state);
        }
        let sum: f64 = t.segments().iter().map(|s| s.sojourn).sum();
        assert!((sum - 1000.0).abs() < 1e-9);
        assert_eq!(t.total_time(), 1000.0);
        // renewal count over 1000 time units with unit-mean gaps
        let n = t.len() as f64;
        assert!((n - 1000.0).abs() < 5.0 * 1000f64.sqrt(), "segments {n}");
    }

    #[test]
    fn segment_cap_is_enforced() {
        let m = two_state(1.0, 1.0);
        let r = m.sample_trajectory_capped(1e6, 10, &mut Streams::new(3).stream(0));
        assert!(matches!(r, Err(Error::Explosion { .. })));
    }

    #[test]
    fn occupation_matches_time_stationary_law() {
        let (m, _) = presets::example1();
        let pi = m.stationary_time().unwrap();
        // batch means over independent replications give the Monte Carlo error
        let reps = 40;
        let per_rep: Vec<Vec<f64>> = (0..reps)
            .map(|r| {
                let t = m.sample_trajectory(2500.0, &mut Streams::new(4).stream(r)).unwrap();
                t.occupation(m.len())
            })
            .collect();
        for j in 0..m.len() {
            let xs: Vec<f64> = per_rep.iter().map(|o| o[j]).collect();
            let s = MeanSe::of(&xs);
            assert!(
                (s.mean - pi[j]).abs() < 3.0 * s.std_error + 1e-6,
                "state {j}: {} vs {}",
                s.mean,
                pi[j]
            );
        }
    }

    #[test]
    fn decompose_simple_path() {
        let seg = |state, sojourn| Segment { state, sojourn };
        // j a j b j
        let t = Trajectory::new(vec![seg(0, 1.0), seg(1, 2.0), seg(0, 0.5), seg(2, 1.5), seg(0, 0.25)]);
        let d = decompose_cycles(&t, 0);
        assert!(d.pre_cycle.is_empty());
        assert_eq!(d.cycles.len(), 2);
        assert_eq!(d.cycles[0].segments(), &[seg(0, 1.0), seg(1, 2.0)]);
        assert_eq!(d.cycles[1].segments(), &[seg(0, 0.5), seg(2, 1.5)]);
        assert_eq!(d.residual.segments(), &[seg(0, 0.25)]);
        assert_eq!(d.reassemble(), t);

        let none = decompose_cycles(&t, 5);
        assert!(none.cycles.is_empty());
        assert_eq!(none.pre_cycle, t);

        let late = Trajectory::new(vec![seg(1, 1.0), seg(0, 1.0), seg(1, 1.0), seg(0, 1.0)]);
        let d = decompose_cycles(&late, 0);
        assert_eq!(d.pre_cycle.segments(), &[seg(1, 1.0)]);
        assert_eq!(d.cycles.len(), 1);
    }

    #[test]
    fn decomposition_round_trips_sampled_paths() {
        let (m, _) = presets::example1();
        for r in 0..20 {
            let t = m.sample_trajectory(30.0, &mut Streams::new(5).stream(r)).unwrap();
            for j in [0, 2, 5] {
                let d = decompose_cycles(&t, j);
                assert_eq!(d.reassemble().segments(), t.segments());
                for c in &d.cycles {
                    assert_eq!(c.start_state(), Some(j));
                    assert!(c.segments()[1..].iter().all(|s| s.state != j));
                }
            }
        }
    }

    #[test]
    fn mean_cycle_length_renewal_identity() {
        let (m, _) = presets::example1();
        let j = 2;
        let expected = m.mean_cycle_length(j).unwrap();
        let mut rng = Streams::new(6).stream(0);
        let lens: Vec<f64> = (0..10_000)
            .map(|_| m.sample_cycle(j, 1_000_000, &mut rng).unwrap().total_time())
            .collect();
        let s = MeanSe::of(&lens);
        assert!((s.mean - expected).abs() < 3.0 * s.std_error, "{} vs {expected}", s.mean);
    }

    #[test]
    fn residual_law_exponential_mixture() {
        // F_0k = Exp(λ_0k): residual tail Σ_k (P/λ) e^{-λx} / Σ_k (P/λ)
        let m = SemiMarkovModel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.0, 0.3, 0.7], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            vec![
                ((0, 1), SojournDist::exponential(0.5).unwrap()),
                ((0, 2), SojournDist::exponential(4.0).unwrap()),
                ((1, 0), SojournDist::exponential(1.0).unwrap()),
                ((2, 0), SojournDist::exponential(1.0).unwrap()),
            ],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        let closed = |x: f64| {
            let w: [(f64, f64); 2] = [(0.3 / 0.5, 0.5), (0.7 / 4.0, 4.0)];
            let num: f64 = w.iter().map(|(a, l)| a * (-l * x).exp()).sum();
            num / (0.3 / 0.5 + 0.7 / 4.0)
        };
        let mut rng = Streams::new(7).stream(0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| m.residual_sample(0, &mut rng).unwrap()).collect();
        for &x in &[0.1, 0.5, 1.0, 3.0, 6.0] {
            let p = closed(x);
            assert!((m.residual_tail(0, x).unwrap() - p).abs() < 1e-14);
            let frac = xs.iter().filter(|&&v| v >= x).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((frac - p).abs() < 4.0 * se, "x = {x}");
        }
    }

    #[test]
    fn residual_law_ctmc_and_pareto() {
        let (m, _) = presets::example1();
        let mut rng = Streams::new(8).stream(0);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| m.residual_sample(3, &mut rng).unwrap()).collect();
        let ks = crate::stats::ks_stat(&xs, |x| 1.0 - (-47.0 * x).exp()).unwrap();
        assert!(ks < 1.63 / (n as f64).sqrt());

        let (p, _) = presets::example2_pareto(1.0, 20, 2.2).unwrap();
        let ys: Vec<f64> = (0..n).map(|_| p.residual_sample(0, &mut rng).unwrap()).collect();
        let ks = crate::stats::ks_stat(&ys, |x| 1.0 - (1.0 + x).powf(-1.2)).unwrap();
        assert!(ks < 1.63 / (n as f64).sqrt());
    }
}
