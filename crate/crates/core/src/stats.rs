//! Distances and summary statistics used to check samplers against oracles.

use rand::Rng;

use crate::error::{Error, Result};

/// A finite, optionally weighted, sample on the real line.
#[derive(Debug, Clone)]
pub struct EmpiricalCloud {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl EmpiricalCloud {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("empirical cloud"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("cloud values must be finite".into()));
        }
        Ok(Self { values, weights: None })
    }

    /// Weights are normalised to sum to one.
    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut cloud = Self::new(values)?;
        if weights.len() != cloud.values.len() {
            return Err(Error::InvalidArgument("weights and values differ in length".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        cloud.weights = Some(weights.into_iter().map(|w| w / total).collect());
        Ok(cloud)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// (value, mass) pairs sorted by value.
    fn sorted_atoms(&self) -> Vec<(f64, f64)> {
        let n = self.values.len() as f64;
        let mut atoms: Vec<(f64, f64)> = match &self.weights {
            Some(w) => self.values.iter().copied().zip(w.iter().copied()).collect(),
            None => self.values.iter().map(|&v| (v, 1.0 / n)).collect(),
        };
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }
}

/// Wasserstein-1 distance between two empirical measures.
///
/// Equal-size unweighted clouds use the sorted (quantile) coupling; anything
/// else integrates `|F_a − F_b|` over the merged breakpoints, which is exact
/// for piecewise-constant distribution functions.
pub fn empirical_w1(a: &EmpiricalCloud, b: &EmpiricalCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("empirical cloud"));
    }
    if a.weights.is_none() && b.weights.is_none() && a.len() == b.len() {
        let mut xa = a.values.clone();
        let mut xb = b.values.clone();
        xa.sort_by(f64::total_cmp);
        xb.sort_by(f64::total_cmp);
        let total: f64 = xa.iter().zip(&xb).map(|(x, y)| (x - y).abs()).sum();
        return Ok(total / xa.len() as f64);
    }
    let pa = a.sorted_atoms();
    let pb = b.sorted_atoms();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut prev: Option<f64> = None;
    let mut area = 0.0;
    while i < pa.len() || j < pb.len() {
        let next = match (pa.get(i), pb.get(j)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            area += (fa - fb).abs() * (next - p);
        }
        while i < pa.len() && pa[i].0 == next {
            fa += pa[i].1;
            i += 1;
        }
        while j < pb.len() && pb[j].0 == next {
            fb += pb[j].1;
            j += 1;
        }
        prev = Some(next);
    }
    Ok(area)
}

/// Total variation distance between two histograms indexed by integer value.
/// Each histogram is normalised to total mass one first.
pub fn pmf_tv(a: &[f64], b: &[f64]) -> Result<f64> {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if sa <= 0.0 || sb <= 0.0 {
        return Err(Error::Empty("histogram"));
    }
    let n = a.len().max(b.len());
    let tv = (0..n)
        .map(|i| {
            let p = a.get(i).copied().unwrap_or(0.0) / sa;
            let q = b.get(i).copied().unwrap_or(0.0) / sb;
            (p - q).abs()
        })
        .sum::<f64>()
        * 0.5;
    Ok(tv.min(1.0))
}

/// Histogram of nonnegative integer observations: entry `i` counts value `i`.
pub fn count_histogram(values: &[u64]) -> Vec<f64> {
    let max = values.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0.0; max + 1];
    for &v in values {
        h[v as usize] += 1.0;
    }
    h
}

/// Kolmogorov–Smirnov statistic of `samples` against a continuous `cdf`.
pub fn ks_stat(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("ks samples"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("ks samples"));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Two-sample KS critical value at level `alpha` (asymptotic).
pub fn ks_two_sample_critical(na: usize, nb: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}

/// z-score of the sample `order`-th raw moment against `predicted`.
///
/// Constant samples that match the prediction exactly give 0; constant
/// samples that miss it have no finite z-score and are an error.
pub fn moment_z(samples: &[f64], predicted: f64, order: u32) -> Result<f64> {
    if samples.len() < 30 {
        return Err(Error::InvalidArgument(format!(
            "moment_z needs at least 30 samples, got {}",
            samples.len()
        )));
    }
    let powered: Vec<f64> = samples.iter().map(|x| x.powi(order as i32)).collect();
    let summary = MeanSe::of(&powered);
    if summary.std_error == 0.0 {
        if summary.mean == predicted {
            return Ok(0.0);
        }
        return Err(Error::Degenerate("zero sample variance".into()));
    }
    Ok((summary.mean - predicted) / summary.std_error)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, variance: f64::NAN, std_error: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, variance, std_error: (variance / n as f64).sqrt(), n }
    }
}

/// `ln n!` via the log-gamma function.
pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

pub fn poisson_pmf(rate: f64, k: u64) -> f64 {
    if rate == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * rate.ln() - rate - ln_factorial(k)).exp()
}

/// `P[Poisson(rate) ≥ c]`, the regularised lower incomplete gamma `P(c, rate)`.
pub fn poisson_upper_tail(rate: f64, c: u64) -> f64 {
    if c == 0 {
        return 1.0;
    }
    if rate <= 0.0 {
        return 0.0;
    }
    statrs::function::gamma::gamma_lr(c as f64, rate).clamp(0.0, 1.0)
}

/// Least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Degenerate("need at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(Error::Degenerate("zero spread in the abscissa".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// Percentile bootstrap confidence interval for the mean.
pub fn bootstrap_mean_ci<R: Rng>(
    xs: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::Empty("bootstrap sample"));
    }
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| {
        let idx = ((means.len() - 1) as f64 * q).round() as usize;
        means[idx.min(means.len() - 1)]
    };
    Ok((at(tail), at(1.0 - tail)))
}
