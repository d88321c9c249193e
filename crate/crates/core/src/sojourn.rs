//! Sojourn-time distributions on `[0, ∞)`.
//!
//! Each distribution exposes its mean, the integrated tail
//! `x ↦ ∫ₓ^∞ (1 − F(y)) dy`, an inverse-CDF sampler and a sampler for the
//! equilibrium (integrated-tail) law with density `(1 − F(y)) / m`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::open_uniform;

pub type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;
pub type TailFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance of the bracketed inversion used for custom equilibrium draws.
pub const CUSTOM_INVERSION_TOL: f64 = 1e-10;

/// User-supplied distribution. Absolute continuity and `F(0) = 0` are caller
/// obligations; only the mean is checked.
#[derive(Clone)]
pub struct CustomDist {
    sampler: SamplerFn,
    mean: f64,
    tail: Option<TailFn>,
}

impl CustomDist {
    pub fn new(sampler: SamplerFn, mean: f64, tail: Option<TailFn>) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "custom mean must be finite and positive, got {mean}"
            )));
        }
        Ok(Self { sampler, mean, tail })
    }

    /// Builds a custom distribution whose mean is read off the tail integral at 0.
    pub fn from_tail(sampler: SamplerFn, tail: TailFn) -> Result<Self> {
        let mean = tail(0.0);
        Self::new(sampler, mean, Some(tail))
    }
}

impl fmt::Debug for CustomDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDist")
            .field("mean", &self.mean)
            .field("has_tail", &self.tail.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum SojournDist {
    Exponential { rate: f64 },
    /// Law of `Pareto(1, shape) − 1`.
    ShiftedPareto { shape: f64 },
    Custom(CustomDist),
}

/// JSON form of the built-in distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SojournSpec {
    #[serde(rename = "exp")]
    Exp { rate: f64 },
    #[serde(rename = "pareto_shifted")]
    ParetoShifted { shape: f64 },
}

impl TryFrom<SojournSpec> for SojournDist {
    type Error = Error;

    fn try_from(spec: SojournSpec) -> Result<Self> {
        match spec {
            SojournSpec::Exp { rate } => SojournDist::exponential(rate),
            SojournSpec::ParetoShifted { shape } => SojournDist::shifted_pareto(shape),
        }
    }
}

impl SojournDist {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "exponential rate must be finite and positive, got {rate}"
            )));
        }
        Ok(SojournDist::Exponential { rate })
    }

    /// Rejects `shape <= 1` up front: the mean would be infinite.
    pub fn shifted_pareto(shape: f64) -> Result<Self> {
        if shape.is_nan() || shape <= 1.0 {
            return Err(Error::InfiniteMean { shape });
        }
        if !shape.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "pareto shape must be finite, got {shape}"
            )));
        }
        Ok(SojournDist::ShiftedPareto { shape })
    }

    pub fn custom(dist: CustomDist) -> Self {
        SojournDist::Custom(dist)
    }

    pub fn spec(&self) -> Result<SojournSpec> {
        match *self {
            SojournDist::Exponential { rate } => Ok(SojournSpec::Exp { rate }),
            SojournDist::ShiftedPareto { shape } => Ok(SojournSpec::ParetoShifted { shape }),
            SojournDist::Custom(_) => Err(Error::Unsupported(
                "custom distributions have no JSON form".into(),
            )),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            SojournDist::Exponential { rate } => 1.0 / rate,
            SojournDist::ShiftedPareto { shape } => 1.0 / (shape - 1.0),
            SojournDist::Custom(c) => c.mean,
        }
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            SojournDist::Exponential { rate } => rng.sample::<f64, _>(Exp1) / rate,
            SojournDist::ShiftedPareto { shape } => open_uniform(rng).powf(-1.0 / shape) - 1.0,
            SojournDist::Custom(c) => (c.sampler)(rng),
        }
    }

    /// `∫ₓ^∞ (1 − F(y)) dy`.
    pub fn tail_integral(&self, x: f64) -> Result<f64> {
        let x = x.max(0.0);
        match self {
            SojournDist::Exponential { rate } => Ok((-rate * x).exp() / rate),
            SojournDist::ShiftedPareto { shape } => {
                Ok((1.0 + x).powf(-(shape - 1.0)) / (shape - 1.0))
            }
            SojournDist::Custom(c) => match &c.tail {
                Some(_) if x == 0.0 => Ok(c.mean),
                Some(tail) => Ok(tail(x)),
                None => Err(Error::Unsupported(
                    "custom distribution has no tail integral".into(),
                )),
            },
        }
    }

    /// Draw from the equilibrium law, density `(1 − F(y)) / m`.
    pub fn equilibrium_sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        match self {
            // memoryless: the equilibrium law is the law itself
            SojournDist::Exponential { rate } => Ok(-open_uniform(rng).ln() / rate),
            // tail (1 + x)^-(shape - 1): shifted Pareto with shape - 1
            SojournDist::ShiftedPareto { shape } => {
                Ok(open_uniform(rng).powf(-1.0 / (shape - 1.0)) - 1.0)
            }
            SojournDist::Custom(c) => {
                let tail = c.tail.as_ref().ok_or_else(|| {
                    Error::Unsupported(
                        "equilibrium sampling needs a tail integral for custom distributions"
                            .into(),
                    )
                })?;
                let u = rng.random::<f64>();
                invert_equilibrium(tail.as_ref(), c.mean, u)
            }
        }
    }

    /// Distribution function, where known in closed form.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        if x <= 0.0 {
            return Some(0.0);
        }
        match self {
            SojournDist::Exponential { rate } => Some(1.0 - (-rate * x).exp()),
            SojournDist::ShiftedPareto { shape } => Some(1.0 - (1.0 + x).powf(-shape)),
            SojournDist::Custom(_) => None,
        }
    }

    /// Distribution function of the equilibrium law: `1 − tail(x)/m`.
    pub fn equilibrium_cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 - self.tail_integral(x)? / self.mean())
    }
}

/// Solves `1 − tail(x)/m = u` by doubling a bracket and bisecting.
fn invert_equilibrium(tail: &(dyn Fn(f64) -> f64 + Send + Sync), mean: f64, u: f64) -> Result<f64> {
    let cdf = |x: f64| 1.0 - tail(x) / mean;
    let mut lo = 0.0;
    let mut hi = mean.max(1e-12);
    let mut doublings = 0;
    while cdf(hi) < u {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Unsupported(
                "custom tail integral could not be bracketed for inversion".into(),
            ));
        }
    }
    while hi - lo > CUSTOM_INVERSION_TOL {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;
    use crate::stats::ks_stat;
    use rand::SeedableRng;

    /// Composite Simpson on `[a, b]`, the quadrature oracle for tail integrals.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn exp1_custom() -> CustomDist {
        let sampler: SamplerFn = Arc::new(|rng: &mut dyn RngCore| {
            let u = 1.0 - (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            -u.ln()
        });
        let tail: TailFn = Arc::new(|x: f64| simpson(|t| (-t).exp(), x, x + 60.0, 20_000));
        CustomDist::from_tail(sampler, tail).unwrap()
    }

    #[test]
    fn means() {
        assert_eq!(SojournDist::exponential(2.0).unwrap().mean(), 0.5);
        let p = SojournDist::shifted_pareto(2.2).unwrap();
        assert!((p.mean() - 1.0 / 1.2).abs() < 1e-15);
        let c = SojournDist::custom(exp1_custom());
        assert!((c.mean() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn pareto_with_infinite_mean_is_rejected() {
        assert!(matches!(
            SojournDist::shifted_pareto(1.0),
            Err(Error::InfiniteMean { .. })
        ));
        assert!(SojournDist::shifted_pareto(0.5).is_err());
        assert!(SojournDist::exponential(0.0).is_err());
        assert!(SojournDist::exponential(f64::NAN).is_err());
    }

    /// Feeds a fixed 53-bit pattern so that the uniform draw is known exactly.
    struct FixedBits(u64);
    impl RngCore for FixedBits {
        fn next_u32(&mut self) -> u32 {
            self.0 as u32
        }
        fn next_u64(&mut self) -> u64 {
            self.0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            for (i, b) in dst.iter_mut().enumerate() {
                *b = (self.0 >> (8 * (i % 8))) as u8;
            }
        }
    }

    #[test]
    fn sampling_formulas() {
        let mut rng = FixedBits(1u64 << 63);
        // random::<f64>() = 0.5 here, so the open uniform is 0.5 as well
        let u = open_uniform(&mut FixedBits(1u64 << 63));
        assert_eq!(u, 0.5);
        // exponential draws scale a unit ziggurat draw by the rate
        let e = SojournDist::exponential(3.0).unwrap().sample(&mut rng);
        let unit: f64 = FixedBits(1u64 << 63).sample(Exp1);
        assert!((e - unit / 3.0).abs() < 1e-15);
        let p = SojournDist::shifted_pareto(2.5).unwrap().sample(&mut rng);
        assert!((p - (0.5f64.powf(-1.0 / 2.5) - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn exponential_sample_mean_clt() {
        let d = SojournDist::exponential(3.0).unwrap();
        let mut rng = Streams::new(11).stream(0);
        let n = 1_000_000;
        let m: f64 = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        let se = (1.0 / 3.0) / (n as f64).sqrt();
        assert!((m - 1.0 / 3.0).abs() < 4.0 * se, "mean {m}");
    }

    #[test]
    fn sample_means_converge_for_every_variant() {
        let n = 100_000;
        let cases = [
            SojournDist::exponential(0.7).unwrap(),
            // shape > 2 so the variance exists and 5 sd/sqrt(n) is meaningful
            SojournDist::shifted_pareto(4.5).unwrap(),
            SojournDist::custom(exp1_custom()),
        ];
        for (i, d) in cases.iter().enumerate() {
            let mut rng = Streams::new(5).stream(i as u64);
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(
                (mean - d.mean()).abs() < 5.0 * var.sqrt() / (n as f64).sqrt(),
                "variant {i}: {mean} vs {}",
                d.mean()
            );
        }
    }

    #[test]
    fn tail_integrals() {
        let e = SojournDist::exponential(2.0).unwrap();
        assert!((e.tail_integral(0.7).unwrap() - (-1.4f64).exp() / 2.0).abs() < 1e-15);
        assert_eq!(e.tail_integral(0.0).unwrap(), e.mean());
        let p = SojournDist::shifted_pareto(2.2).unwrap();
        assert_eq!(p.tail_integral(0.0).unwrap(), p.mean());
        // oracle: integrate the survival function (1 + y)^-2.2 numerically
        for &x in &[0.0, 0.5, 3.0] {
            let q = simpson(|y| (1.0 + y).powf(-2.2), x, x + 1.0e4, 2_000_000)
                + (1.0 + x + 1.0e4f64).powf(-1.2) / 1.2;
            assert!((p.tail_integral(x).unwrap() - q).abs() < 1e-8, "x = {x}");
        }
        let c = SojournDist::custom(exp1_custom());
        assert_eq!(c.tail_integral(0.0).unwrap(), c.mean());
    }

    #[test]
    fn tail_integral_is_nonincreasing_and_convex() {
        for d in [
            SojournDist::exponential(1.3).unwrap(),
            SojournDist::shifted_pareto(2.2).unwrap(),
        ] {
            let xs: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
            let t: Vec<f64> = xs.iter().map(|&x| d.tail_integral(x).unwrap()).collect();
            for w in t.windows(2) {
                assert!(w[1] <= w[0]);
            }
            for w in t.windows(3) {
                assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-15);
            }
        }
    }

    #[test]
    fn equilibrium_of_exponential_is_exponential() {
        let d = SojournDist::exponential(1.0).unwrap();
        let mut rng = Streams::new(3).stream(0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| d.equilibrium_sample(&mut rng).unwrap())
            .collect();
        let ks = ks_stat(&xs, |x| d.cdf(x).unwrap()).unwrap();
        assert!(ks < 1.63 / (n as f64).sqrt(), "ks {ks}");
    }

    #[test]
    fn equilibrium_of_pareto_has_reduced_shape() {
        let d = SojournDist::shifted_pareto(2.2).unwrap();
        let mut rng = Streams::new(4).stream(0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| d.equilibrium_sample(&mut rng).unwrap())
            .collect();
        for &x in &[0.1, 1.0, 5.0, 40.0] {
            let frac = xs.iter().filter(|&&v| v > x).count() as f64 / n as f64;
            let p = (1.0 + x).powf(-1.2);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((frac - p).abs() < 4.0 * se, "x = {x}: {frac} vs {p}");
        }
    }

    #[test]
    fn custom_equilibrium_inverts_tail() {
        let d = SojournDist::custom(exp1_custom());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| d.equilibrium_sample(&mut rng).unwrap())
            .collect();
        let ks = ks_stat(&xs, |x| 1.0 - (-x).exp()).unwrap();
        assert!(ks < 1.63 / (n as f64).sqrt(), "ks {ks}");
    }

    #[test]
    fn custom_without_tail_cannot_equilibrate() {
        let sampler: SamplerFn = Arc::new(|_: &mut dyn RngCore| 1.0);
        let d = SojournDist::custom(CustomDist::new(sampler, 1.0, None).unwrap());
        let mut rng = Streams::new(0).stream(0);
        assert!(matches!(
            d.equilibrium_sample(&mut rng),
            Err(Error::Unsupported(_))
        ));
        assert!(d.tail_integral(1.0).is_err());
    }

    #[test]
    fn json_forms() {
        let d: SojournSpec = serde_json::from_str(r#"{"kind":"exp","rate":2.5}"#).unwrap();
        assert_eq!(d, SojournSpec::Exp { rate: 2.5 });
        let p: SojournSpec =
            serde_json::from_str(r#"{"kind":"pareto_shifted","shape":2.2}"#).unwrap();
        let dist = SojournDist::try_from(p).unwrap();
        assert_eq!(
            serde_json::to_string(&dist.spec().unwrap()).unwrap(),
            r#"{"kind":"pareto_shifted","shape":2.2}"#
        );
        let bad: SojournSpec =
            serde_json::from_str(r#"{"kind":"pareto_shifted","shape":0.9}"#).unwrap();
        assert!(SojournDist::try_from(bad).is_err());
    }
}
