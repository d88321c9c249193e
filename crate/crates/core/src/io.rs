//! JSON model and rate files.
//!
//! Explicit models:
//! `{"states": [..], "P": [[..]], "sojourns": {"a->b": {"kind": "exp", "rate": 2}}, "initial": [..]}`.
//! Transition keys may use state names or indices. `initial` defaults to the
//! uniform law.
//!
//! Rule models: `{"rule": "example2", "lambda": 1.0, "truncation": 20,
//! "sojourn": "exp" | "pareto_shifted", "shape": 2.2}`.
//!
//! Rates: `{"lambda": [..] | x, "mu": [..] | x}`; a scalar is used for every
//! state.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::feedback::FeedbackParams;
use crate::presets::{self, Builtin, DEFAULT_PARETO_SHAPE, DEFAULT_TRUNCATION};
use crate::queue::RateMap;
use crate::semi_markov::SemiMarkovModel;
use crate::sojourn::{SojournDist, SojournSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitModel {
    states: Vec<String>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    sojourns: BTreeMap<String, SojournSpec>,
    #[serde(default)]
    initial: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleModel {
    rule: String,
    #[serde(default = "one")]
    lambda: f64,
    #[serde(default = "default_truncation")]
    truncation: usize,
    #[serde(default = "default_sojourn")]
    sojourn: String,
    #[serde(default = "default_shape")]
    shape: f64,
}

fn one() -> f64 {
    1.0
}
fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}
fn default_sojourn() -> String {
    "exp".into()
}
fn default_shape() -> f64 {
    DEFAULT_PARETO_SHAPE
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RateValues {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateFile {
    lambda: RateValues,
    mu: RateValues,
}

/// A model read from JSON, with the rates that come with a rule model.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: SemiMarkovModel,
    pub default_rates: Option<RateMap>,
}

fn parse_error(source: &str, e: serde_json::Error) -> Error {
    Error::Parse(format!("{source}: line {}, column {}: {e}", e.line(), e.column()))
}

/// Parses a model from JSON text; `source` labels error messages.
pub fn parse_model(text: &str, source: &str) -> Result<LoadedModel> {
    // decode generically first so syntax errors keep their position
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(source, e))?;
    if value.get("rule").is_some() {
        let rule: RuleModel = serde_json::from_value(value)
            .map_err(|e| Error::Parse(format!("{source}: {e}")))?;
        return build_rule(rule);
    }
    let explicit: ExplicitModel =
        serde_json::from_str(text).map_err(|e| parse_error(source, e))?;
    build_explicit(explicit).map(|model| LoadedModel { model, default_rates: None })
}

fn build_rule(rule: RuleModel) -> Result<LoadedModel> {
    if rule.rule != "example2" {
        return Err(Error::Parse(format!("unknown model rule '{}'", rule.rule)));
    }
    let (model, rates) = match rule.sojourn.as_str() {
        "exp" => presets::example2_exp(rule.lambda, rule.truncation)?,
        "pareto_shifted" => presets::example2_pareto(rule.lambda, rule.truncation, rule.shape)?,
        other => return Err(Error::Parse(format!("unknown sojourn family '{other}'"))),
    };
    Ok(LoadedModel { model, default_rates: Some(rates) })
}

fn resolve_state(names: &[String], token: &str) -> Result<usize> {
    let token = token.trim();
    if let Some(i) = names.iter().position(|n| n == token) {
        return Ok(i);
    }
    match token.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => Err(Error::InvalidModel(format!("unknown state '{token}' in sojourn key"))),
    }
}

fn build_explicit(m: ExplicitModel) -> Result<SemiMarkovModel> {
    let k = m.states.len();
    let mut sojourns = Vec::with_capacity(m.sojourns.len());
    for (key, spec) in m.sojourns {
        let (a, b) = key
            .split_once("->")
            .ok_or_else(|| Error::InvalidModel(format!("sojourn key '{key}' is not of the form 'i->j'")))?;
        let pair = (resolve_state(&m.states, a)?, resolve_state(&m.states, b)?);
        let dist = SojournDist::try_from(spec)
            .map_err(|e| Error::InvalidModel(format!("sojourn '{key}': {e}")))?;
        sojourns.push((pair, dist));
    }
    let initial = m.initial.unwrap_or_else(|| vec![1.0 / k.max(1) as f64; k]);
    SemiMarkovModel::new(m.states, m.p, sojourns, initial)
}

pub fn read_model_file(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, &path.display().to_string())
}

/// What `--model` resolved to.
#[derive(Debug, Clone)]
pub enum ModelSource {
    Modulated { model: SemiMarkovModel, rates: Option<RateMap> },
    Feedback(FeedbackParams),
}

/// A built-in name or a path to a model file.
pub fn load_model(arg: &str) -> Result<ModelSource> {
    match presets::builtin(arg) {
        Some(Builtin::Modulated(model, rates)) => {
            return Ok(ModelSource::Modulated { model, rates: Some(rates) })
        }
        Some(Builtin::Feedback(p)) => return Ok(ModelSource::Feedback(p)),
        None => {}
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "'{arg}' is neither a built-in model ({}) nor an existing file",
            presets::BUILTIN_NAMES.join(", ")
        )));
    }
    let loaded = read_model_file(path)?;
    Ok(ModelSource::Modulated { model: loaded.model, rates: loaded.default_rates })
}

/// Parses rates for `k` states from JSON text.
pub fn parse_rates(text: &str, k: usize, source: &str) -> Result<RateMap> {
    let file: RateFile = serde_json::from_str(text).map_err(|e| parse_error(source, e))?;
    let expand = |name: &str, v: RateValues| -> Result<Vec<f64>> {
        match v {
            RateValues::Scalar(x) => Ok(vec![x; k]),
            RateValues::List(xs) if xs.len() == k => Ok(xs),
            RateValues::List(xs) => Err(Error::InvalidRates(format!(
                "{name} has {} entries, the model has {k} states",
                xs.len()
            ))),
        }
    };
    RateMap::new(expand("lambda", file.lambda)?, expand("mu", file.mu)?)
}

/// Inline JSON (starting with `{`) or a path to a rates file.
pub fn load_rates(arg: &str, k: usize) -> Result<RateMap> {
    if arg.trim_start().starts_with('{') {
        parse_rates(arg, k, "--rates")
    } else {
        let text = std::fs::read_to_string(arg)?;
        parse_rates(&text, k, arg)
    }
}
