//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::feedback::{path_growth_rate, simulate_feedback, FeedbackParams};
use crate::io::{load_model, load_rates, ModelSource};
use crate::limit_law::{LimitLawSampler, SamplerConfig};
use crate::queue::{
    conditional_terminal, gillespie_terminal, sample_poisson, simulate_conditional,
    simulate_gillespie, RateMap,
};
use crate::rng::Streams;
use crate::semi_markov::SemiMarkovModel;
use crate::stats::{bootstrap_mean_ci, MeanSe};

const QUEUE_TAG: u64 = 1;
const PILOT_TAG: u64 = 2;
const MOMENT_TAG: u64 = 3;
const BOOTSTRAP_TAG: u64 = 4;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "modq", version, about = "Infinite-server queues in a semi-Markov environment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model against the structural assumptions.
    Validate(ValidateArgs),
    /// Simulate the count process.
    Simulate(SimulateArgs),
    /// Draw from the limiting law.
    LimitSample(LimitSampleArgs),
    /// Moments of the limiting count.
    Moments(MomentsArgs),
    /// Exceedance probabilities of the limiting count.
    Exceedance(ExceedanceArgs),
    /// Growth-rate diagnostics for the feedback model.
    Transience(TransienceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Built-in model name or path to a model JSON file.
    #[arg(long)]
    pub model: String,
    /// Rates as inline JSON or a path: {"lambda": [..] | x, "mu": [..] | x}.
    #[arg(long)]
    pub rates: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; output does not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: String,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Simulator {
    Conditional,
    Gillespie,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 100.0)]
    pub horizon: f64,
    /// With more than one replication only terminal counts are written.
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub y0: u64,
    #[arg(long, value_enum, default_value_t = Simulator::Conditional)]
    pub simulator: Simulator,
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Fixed recursion depth, overriding --epsilon.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Pilot cycles per state.
    #[arg(long, default_value_t = 10_000)]
    pub pilot: usize,
    /// Reuse a shared pool of this many cycles per state (approximate).
    #[arg(long)]
    pub pool: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct LimitSampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// Sample W for this state (name or index) instead of the mixture.
    #[arg(long)]
    pub anchor: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Residual-time draws per state.
    #[arg(long, default_value_t = 10_000)]
    pub t_samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ExceedanceArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// One or more thresholds c in P[Y >= c].
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub threshold: Vec<u64>,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TransienceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 2000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Arrival rate.
    #[arg(long)]
    pub arrival: Option<f64>,
    #[arg(long)]
    pub q1: Option<f64>,
    #[arg(long)]
    pub q2: Option<f64>,
    #[arg(long)]
    pub k: Option<u32>,
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let threads = match &cli.command {
        Command::Validate(_) => None,
        Command::Simulate(a) => a.common.threads,
        Command::LimitSample(a) => a.common.threads,
        Command::Moments(a) => a.common.threads,
        Command::Exceedance(a) => a.common.threads,
        Command::Transience(a) => a.common.threads,
    };
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Simulate(a) => cmd_simulate(&a).map(|_| EXIT_OK),
        Command::LimitSample(a) => cmd_limit_sample(&a).map(|_| EXIT_OK),
        Command::Moments(a) => cmd_moments(&a).map(|_| EXIT_OK),
        Command::Exceedance(a) => cmd_exceedance(&a).map(|_| EXIT_OK),
        Command::Transience(a) => cmd_transience(&a).map(|_| EXIT_OK),
    }
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn modulated(common: &Common) -> Result<(SemiMarkovModel, RateMap)> {
    match load_model(&common.model)? {
        ModelSource::Modulated { model, rates } => {
            let rates = match (&common.rates, rates) {
                (Some(arg), _) => load_rates(arg, model.len())?,
                (None, Some(r)) => r,
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "this model has no built-in rates; pass --rates".into(),
                    ))
                }
            };
            rates.check_for(&model)?;
            Ok((model, rates))
        }
        ModelSource::Feedback(_) => Err(Error::InvalidArgument(
            "the feedback model is only available to simulate and transience".into(),
        )),
    }
}

fn resolve_state(model: &SemiMarkovModel, token: &str) -> Result<usize> {
    if let Some(i) = model.state_index(token) {
        return Ok(i);
    }
    match token.parse::<usize>() {
        Ok(i) if i < model.len() => Ok(i),
        _ => Err(Error::InvalidArgument(format!("unknown state '{token}'"))),
    }
}

fn sampler(common: &Common, args: &SamplerArgs) -> Result<LimitLawSampler> {
    let (model, rates) = modulated(common)?;
    let config = SamplerConfig {
        epsilon: args.epsilon,
        depth: args.depth,
        pilot_cycles: args.pilot,
        pool: args.pool,
        seed: Streams::new(common.seed).derive(PILOT_TAG).seed(),
        ..Default::default()
    };
    LimitLawSampler::new(model, rates, config)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let model = match load_model(&args.model) {
        Ok(ModelSource::Modulated { model, .. }) => model,
        Ok(ModelSource::Feedback(p)) => {
            let ok = p.validate().is_ok();
            println!("feedback model parameters: {}", if ok { "ok" } else { "invalid" });
            write_json(&args.out, &json!({ "passed": ok, "params": p }))?;
            return Ok(if ok { EXIT_OK } else { EXIT_INVALID });
        }
        Err(e @ (Error::Parse(_) | Error::InvalidModel(_) | Error::InvalidDistribution(_) | Error::InfiniteMean { .. })) => {
            eprintln!("{e}");
            return Ok(EXIT_INVALID);
        }
        Err(e) => return Err(e),
    };
    let report = model.validate();
    print!("{report}");
    if let Some(path) = &args.out {
        write_json(&Some(path.clone()), report)?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_INVALID })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let streams = Streams::new(args.common.seed);
    if args.reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    if let ModelSource::Feedback(p) = load_model(&args.common.model)? {
        return simulate_feedback_cmd(args, &p, &streams);
    }
    let (model, rates) = modulated(&args.common)?;
    let queue = streams.derive(QUEUE_TAG);
    if args.reps == 1 {
        let path = match args.simulator {
            Simulator::Conditional => {
                let traj = model.sample_trajectory(args.horizon, &mut streams.stream(0))?;
                simulate_conditional(&traj, &rates, args.y0, &mut queue.stream(0))?
            }
            Simulator::Gillespie => {
                simulate_gillespie(&model, &rates, args.y0, args.horizon, &mut streams.stream(0))?
            }
        };
        let mut w = output(&args.common.out)?;
        path.write_csv(&mut w)?;
        w.flush()?;
        return Ok(());
    }
    let counts: Vec<u64> = (0..args.reps as u64)
        .into_par_iter()
        .map(|i| match args.simulator {
            Simulator::Conditional => conditional_terminal(
                &model,
                &rates,
                args.y0,
                args.horizon,
                &mut streams.stream(i),
                &mut queue.stream(i),
            ),
            Simulator::Gillespie => {
                gillespie_terminal(&model, &rates, args.y0, args.horizon, &mut streams.stream(i))
            }
        })
        .collect::<Result<_>>()?;
    write_terminal(&args.common.out, &counts)
}

fn write_terminal(out: &Option<PathBuf>, counts: &[u64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(["rep", "count"])?;
    for (i, c) in counts.iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn simulate_feedback_cmd(args: &SimulateArgs, p: &FeedbackParams, streams: &Streams) -> Result<()> {
    if args.reps == 1 {
        let path = simulate_feedback(p, args.y0, args.horizon, &mut streams.stream(0))?;
        let mut w = output(&args.common.out)?;
        path.write_csv(&mut w)?;
        w.flush()?;
        return Ok(());
    }
    let counts: Vec<u64> = (0..args.reps as u64)
        .into_par_iter()
        .map(|i| Ok(simulate_feedback(p, args.y0, args.horizon, &mut streams.stream(i))?.terminal().y))
        .collect::<Result<_>>()?;
    write_terminal(&args.common.out, &counts)
}

fn hist_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_hist.csv"))
}

pub fn cmd_limit_sample(args: &LimitSampleArgs) -> Result<()> {
    let s = sampler(&args.common, &args.sampler)?;
    let streams = Streams::new(args.common.seed);
    let draws = match &args.anchor {
        Some(token) => {
            let j = resolve_state(s.model(), token)?;
            let depth = s.depth(j)?;
            (0..args.reps as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = streams.stream(i);
                    let w = s.sample_w_at(j, depth, &mut rng)?;
                    Ok((j, w, sample_poisson(w, &mut rng)))
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => s
            .draw_many(args.reps, &streams)?
            .into_iter()
            .map(|d| (d.state, d.w, d.count))
            .collect(),
    };
    let names = s.model().names();
    let mut w = csv::Writer::from_writer(output(&args.common.out)?);
    w.write_record(["state", "w", "poisson_count"])?;
    for (j, wv, y) in &draws {
        w.write_record([names[*j].clone(), wv.to_string(), y.to_string()])?;
    }
    w.flush()?;
    if let Some(out) = &args.common.out {
        let mut hist = std::collections::BTreeMap::<(usize, u64), u64>::new();
        for (j, _, y) in &draws {
            *hist.entry((*j, *y)).or_default() += 1;
        }
        let mut h = csv::Writer::from_path(hist_path(out))?;
        h.write_record(["state", "bin", "count"])?;
        for ((j, bin), count) in hist {
            h.write_record([names[j].clone(), bin.to_string(), count.to_string()])?;
        }
        h.flush()?;
    }
    Ok(())
}

pub fn cmd_moments(args: &MomentsArgs) -> Result<()> {
    let s = sampler(&args.common, &args.sampler)?;
    let mut rng = Streams::new(args.common.seed).derive(MOMENT_TAG).stream(0);
    let table = s.moment_table(args.order, args.t_samples, &mut rng)?;
    write_json(
        &args.common.out,
        &json!({
            "model": args.common.model,
            "order": args.order,
            "t_samples": args.t_samples,
            "pilot_cycles": args.sampler.pilot,
            "table": table,
        }),
    )
}

pub fn cmd_exceedance(args: &ExceedanceArgs) -> Result<()> {
    let s = sampler(&args.common, &args.sampler)?;
    let streams = Streams::new(args.common.seed);
    let estimates = args
        .threshold
        .iter()
        .map(|&c| {
            let e = s.exceedance(c, args.reps, &streams)?;
            Ok(json!({ "threshold": c, "value": e.value, "std_error": e.std_error }))
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(
        &args.common.out,
        &json!({ "model": args.common.model, "reps": args.reps, "estimates": estimates }),
    )
}

pub fn cmd_transience(args: &TransienceArgs) -> Result<()> {
    let mut p = match load_model(&args.common.model)? {
        ModelSource::Feedback(p) => p,
        ModelSource::Modulated { .. } => {
            return Err(Error::InvalidArgument("transience needs --model feedback".into()))
        }
    };
    if let Some(v) = args.lambda0 {
        p.lambda0 = v;
    }
    if let Some(v) = args.lambda1 {
        p.lambda1 = v;
    }
    if let Some(v) = args.arrival {
        p.lambda = v;
    }
    if let Some(v) = args.q1 {
        p.q1 = v;
    }
    if let Some(v) = args.q2 {
        p.q2 = v;
    }
    if let Some(v) = args.k {
        p.k = v;
    }
    p.validate()?;
    if args.reps < 2 {
        return Err(Error::InvalidArgument("need at least two replications".into()));
    }
    let report = transience_report(&p, args.horizon, args.reps, args.resamples, args.level, args.common.seed)?;
    write_json(&args.common.out, &report)
}

/// Growth-rate and per-cycle drift summary over independent paths.
#[derive(Debug, Clone, Serialize)]
pub struct TransienceReport {
    pub params: FeedbackParams,
    pub threshold: f64,
    pub transient_regime: bool,
    pub horizon: f64,
    pub reps: usize,
    pub growth_rates: Vec<f64>,
    pub mean_growth_rate: f64,
    pub level: f64,
    pub ci: (f64, f64),
    pub cycles: usize,
    pub mean_cycle_increment: f64,
    pub cycle_increment_se: f64,
    pub cycle_drift_bound: f64,
}

pub fn transience_report(
    p: &FeedbackParams,
    horizon: f64,
    reps: usize,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<TransienceReport> {
    let streams = Streams::new(seed);
    let per_rep: Vec<(f64, Vec<f64>)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let path = simulate_feedback(p, 0, horizon, &mut streams.stream(i))?;
            Ok((path_growth_rate(&path)?, path.cycle_increments()))
        })
        .collect::<Result<_>>()?;
    let growth_rates: Vec<f64> = per_rep.iter().map(|(g, _)| *g).collect();
    let increments: Vec<f64> = per_rep.iter().flat_map(|(_, inc)| inc.iter().copied()).collect();
    let mut rng = streams.derive(BOOTSTRAP_TAG).stream(0);
    let ci = bootstrap_mean_ci(&growth_rates, resamples, level, &mut rng)?;
    let inc = MeanSe::of(&increments);
    Ok(TransienceReport {
        params: *p,
        threshold: p.transience_threshold(),
        transient_regime: p.is_transient_regime(),
        horizon,
        reps,
        mean_growth_rate: MeanSe::of(&growth_rates).mean,
        growth_rates,
        level,
        ci,
        cycles: increments.len(),
        mean_cycle_increment: inc.mean,
        cycle_increment_se: inc.std_error,
        cycle_drift_bound: p.cycle_drift_bound(),
    })
}
