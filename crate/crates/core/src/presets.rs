//! Built-in models with their default rate maps.

use crate::error::{Error, Result};
use crate::feedback::FeedbackParams;
use crate::queue::RateMap;
use crate::semi_markov::SemiMarkovModel;
use crate::sojourn::SojournDist;

pub const BUILTIN_NAMES: [&str; 5] =
    ["intro_ctmc", "example1", "example2_exp", "example2_pareto", "feedback"];

/// Default truncation level for the countable birth-reset chain.
pub const DEFAULT_TRUNCATION: usize = 20;
pub const DEFAULT_PARETO_SHAPE: f64 = 2.2;

/// A named preset: an environment with rates, or the feedback model.
#[derive(Debug, Clone)]
pub enum Builtin {
    Modulated(SemiMarkovModel, RateMap),
    Feedback(FeedbackParams),
}

pub fn builtin(name: &str) -> Option<Builtin> {
    let m = |(model, rates)| Some(Builtin::Modulated(model, rates));
    match name {
        "intro_ctmc" => m(intro_ctmc()),
        "example1" => m(example1()),
        "example2_exp" => m(example2_exp(1.0, DEFAULT_TRUNCATION).expect("valid preset")),
        "example2_pareto" => m(
            example2_pareto(1.0, DEFAULT_TRUNCATION, DEFAULT_PARETO_SHAPE).expect("valid preset"),
        ),
        "feedback" => Some(Builtin::Feedback(FeedbackParams::default())),
        _ => None,
    }
}

/// Alternating two-state environment with exponential sojourns of the given
/// rates, started in state 0. Rates are not attached.
pub fn two_state_exp(rate0: f64, rate1: f64) -> SemiMarkovModel {
    SemiMarkovModel::new(
        vec!["0".into(), "1".into()],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![
            ((0, 1), SojournDist::exponential(rate0).expect("positive rate")),
            ((1, 0), SojournDist::exponential(rate1).expect("positive rate")),
        ],
        vec![1.0, 0.0],
    )
    .expect("well-formed two-state model")
}

/// Two-state CTMC leaving 0 at rate 0.001 and 1 at rate 1, with
/// `λ ≡ 1` and `μ(x) = x`.
pub fn intro_ctmc() -> (SemiMarkovModel, RateMap) {
    let model = two_state_exp(0.001, 1.0);
    let rates = RateMap::new(vec![1.0, 1.0], vec![0.0, 1.0]).expect("valid rates");
    (model, rates)
}

/// Birth-death environment on `(i, 10 − i)`, `i = 0..=10`, with exponential
/// sojourns of rate `50 − i`, `λ(i) = i` and `μ(i) = 10 − i`. Starts
/// uniformly.
pub fn example1() -> (SemiMarkovModel, RateMap) {
    let k = 11;
    let names = (0..k).map(|i| format!("({},{})", i, 10 - i)).collect();
    let mut kernel = vec![vec![0.0; k]; k];
    let mut sojourns = Vec::new();
    for (i, row) in kernel.iter_mut().enumerate() {
        let denom = (50 - i) as f64;
        if i == 0 {
            row[1] = 1.0;
        } else if i == 10 {
            row[9] = 1.0;
        } else {
            row[i - 1] = 4.0 * i as f64 / denom;
            row[i + 1] = 5.0 * (10 - i) as f64 / denom;
        }
        let f = SojournDist::exponential(denom).expect("positive rate");
        for j in [i.wrapping_sub(1), i + 1] {
            if j < k && row[j] > 0.0 {
                sojourns.push(((i, j), f.clone()));
            }
        }
    }
    let model = SemiMarkovModel::new(names, kernel, sojourns, vec![1.0 / k as f64; k])
        .expect("well-formed preset");
    let rates = RateMap::new(
        (0..k).map(|i| i as f64).collect(),
        (0..k).map(|i| (10 - i) as f64).collect(),
    )
    .expect("valid rates");
    (model, rates)
}

/// Index of the state `(2, 8)` used as the default anchor in Example 1.
pub const EXAMPLE1_ANCHOR: usize = 2;

/// Birth-reset chain `P_{i,i+1} = λ/(i+1)`, `P_{i,0} = 1 − P_{i,i+1}`,
/// truncated at `truncation` by sending the last state back to 0.
pub fn example2_kernel(lambda: f64, truncation: usize) -> Result<Vec<Vec<f64>>> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "birth parameter must lie in (0, 1], got {lambda}"
        )));
    }
    if truncation < 1 {
        return Err(Error::InvalidArgument("truncation must be at least 1".into()));
    }
    let k = truncation + 1;
    let mut kernel = vec![vec![0.0; k]; k];
    for (i, row) in kernel.iter_mut().enumerate() {
        let up = if i == truncation { 0.0 } else { lambda / (i + 1) as f64 };
        if i + 1 < k {
            row[i + 1] = up;
        }
        // for lambda < 1 state 0 would keep a self-loop; validation reports it
        row[0] += 1.0 - up;
    }
    Ok(kernel)
}

fn example2(
    lambda: f64,
    truncation: usize,
    sojourn: impl Fn(usize) -> Result<SojournDist>,
) -> Result<(SemiMarkovModel, RateMap)> {
    let kernel = example2_kernel(lambda, truncation)?;
    let k = kernel.len();
    let mut sojourns = Vec::new();
    for (i, row) in kernel.iter().enumerate() {
        let f = sojourn(i)?;
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                sojourns.push(((i, j), f.clone()));
            }
        }
    }
    let mut initial = vec![0.0; k];
    initial[0] = 1.0;
    let model =
        SemiMarkovModel::new((0..k).map(|i| i.to_string()).collect(), kernel, sojourns, initial)?;
    let rates = RateMap::new(
        (0..k).map(|j| 1.0 + 2.0 * j as f64).collect(),
        (0..k).map(|j| j as f64).collect(),
    )?;
    Ok((model, rates))
}

/// Birth-reset environment with `F_ij = Exp(3i + 1)`, `λ(j) = 1 + 2j`, `μ(j) = j`.
pub fn example2_exp(lambda: f64, truncation: usize) -> Result<(SemiMarkovModel, RateMap)> {
    example2(lambda, truncation, |i| SojournDist::exponential(3.0 * i as f64 + 1.0))
}

/// Birth-reset environment with shifted Pareto sojourns of a common shape.
pub fn example2_pareto(
    lambda: f64,
    truncation: usize,
    shape: f64,
) -> Result<(SemiMarkovModel, RateMap)> {
    example2(lambda, truncation, |_| SojournDist::shifted_pareto(shape))
}
