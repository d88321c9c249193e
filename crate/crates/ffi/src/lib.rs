//! C ABI for `modq`.
//!
//! Models and samplers are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`ModqStatus`]; on failure the
//! message is available from [`modq_last_error_message`] on the same thread.
//! Random output depends only on the seed and matches the `modq` command
//! line for the same seed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use modq::io::{load_model, parse_model, ModelSource};
use modq::limit_law::{LimitLawSampler, SamplerConfig};
use modq::queue::{conditional_terminal, RateMap};
use modq::rng::Streams;
use modq::semi_markov::SemiMarkovModel;
use modq::Error;

/// Result codes; `MODQ_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    Parse = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Semi-Markov environment with optional arrival and service rates.
pub struct ModqModel {
    model: SemiMarkovModel,
    rates: Option<RateMap>,
}

/// Limit-law sampler bound to a model and its rates.
pub struct ModqSampler {
    inner: LimitLawSampler,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> ModqStatus {
    match e {
        Error::InvalidDistribution(_)
        | Error::InfiniteMean { .. }
        | Error::InvalidModel(_)
        | Error::InvalidRates(_) => ModqStatus::InvalidModel,
        Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Empty(_) | Error::StirlingRange { .. } => {
            ModqStatus::InvalidArgument
        }
        Error::Parse(_) => ModqStatus::Parse,
        Error::Io(_) | Error::Csv(_) => ModqStatus::Io,
        Error::NoConvergence { .. }
        | Error::Explosion { .. }
        | Error::InvalidRate { .. }
        | Error::MomentCondition { .. }
        | Error::Degenerate(_) => ModqStatus::Numerical,
    }
}

struct Failure(ModqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ModqStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ModqStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ModqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ModqStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ModqStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn put<T>(out: *mut T, value: T) {
    if !out.is_null() {
        unsafe { out.write(value) };
    }
}

fn publish(out: *mut *mut ModqModel, model: ModqModel) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { out.write(Box::into_raw(Box::new(model))) };
    Ok(())
}

fn rates_of(m: &ModqModel) -> Result<&RateMap, Failure> {
    m.rates.as_ref().ok_or_else(|| invalid("model has no rates; call modq_model_set_rates"))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn modq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next `modq_*` call on the same thread.
#[no_mangle]
pub extern "C" fn modq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Built-in modulated model by name, with its rates.
///
/// # Safety
/// `name` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn modq_model_builtin(name: *const c_char, out: *mut *mut ModqModel) -> ModqStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if !modq::presets::BUILTIN_NAMES.contains(&name) {
            return Err(invalid(format!("unknown built-in model '{name}'")));
        }
        match load_model(name)? {
            ModelSource::Modulated { model, rates } => publish(out, ModqModel { model, rates }),
            ModelSource::Feedback(_) => Err(invalid("the feedback model has no semi-Markov environment")),
        }
    })
}

/// Model from JSON text, in the same format as model files.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn modq_model_from_json(json: *const c_char, out: *mut *mut ModqModel) -> ModqStatus {
    guard(|| {
        let loaded = parse_model(str_arg(json, "json")?, "json")?;
        publish(out, ModqModel { model: loaded.model, rates: loaded.default_rates })
    })
}

/// Replaces the rates; both arrays hold one entry per state.
///
/// # Safety
/// `model` must come from this library; `lambda` and `mu` must point to
/// `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn modq_model_set_rates(
    model: *mut ModqModel,
    lambda: *const f64,
    mu: *const f64,
    len: usize,
) -> ModqStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        if lambda.is_null() || mu.is_null() {
            return Err(null("rates"));
        }
        let rates = RateMap::new(
            std::slice::from_raw_parts(lambda, len).to_vec(),
            std::slice::from_raw_parts(mu, len).to_vec(),
        )?;
        rates.check_for(&m.model)?;
        m.rates = Some(rates);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn modq_model_free(model: *mut ModqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of states, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn modq_model_num_states(model: *const ModqModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.len())
}

/// `MODQ_STATUS_OK` if the model meets every structural assumption; otherwise
/// `MODQ_STATUS_INVALID_MODEL` with the failed clauses in the error message.
///
/// # Safety
/// `model` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn modq_model_validate(model: *const ModqModel) -> ModqStatus {
    guard(|| {
        let m = handle(model, "model")?;
        m.model.ensure_valid()?;
        Ok(())
    })
}

/// Long-run fraction of time in each state, written to `out[0..len]`;
/// `len` must equal the number of states.
///
/// # Safety
/// `model` must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn modq_model_stationary_time(
    model: *const ModqModel,
    out: *mut f64,
    len: usize,
) -> ModqStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if len != m.model.len() {
            return Err(invalid(format!("buffer holds {len} entries, model has {}", m.model.len())));
        }
        out_slice(out, len, "out")?.copy_from_slice(&m.model.stationary_time()?);
        Ok(())
    })
}

/// Terminal counts of `reps` conditional simulations on `[0, horizon]`.
///
/// # Safety
/// `model` must come from this library; `out_counts` must hold `reps`
/// values.
#[no_mangle]
pub unsafe extern "C" fn modq_simulate_terminal(
    model: *const ModqModel,
    y0: u64,
    horizon: f64,
    reps: usize,
    seed: u64,
    out_counts: *mut u64,
) -> ModqStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let rates = rates_of(m)?;
        let out = out_slice(out_counts, reps, "out_counts")?;
        let env = Streams::new(seed);
        let queue = env.derive(1);
        for (i, slot) in out.iter_mut().enumerate() {
            let i = i as u64;
            *slot = conditional_terminal(&m.model, rates, y0, horizon, &mut env.stream(i), &mut queue.stream(i))?;
        }
        Ok(())
    })
}

/// Builds a limit-law sampler. `depth` of 0 picks the recursion depth per
/// state from `epsilon`; `pilot_cycles` of 0 uses the default.
///
/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn modq_sampler_new(
    model: *const ModqModel,
    epsilon: f64,
    depth: usize,
    pilot_cycles: usize,
    seed: u64,
    out: *mut *mut ModqSampler,
) -> ModqStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let defaults = SamplerConfig::default();
        let config = SamplerConfig {
            epsilon,
            depth: (depth > 0).then_some(depth),
            pilot_cycles: if pilot_cycles == 0 { defaults.pilot_cycles } else { pilot_cycles },
            // same pilot stream as the command line
            seed: Streams::new(seed).derive(2).seed(),
            ..defaults
        };
        let inner = LimitLawSampler::new(m.model.clone(), rates_of(m)?.clone(), config)?;
        out.write(Box::into_raw(Box::new(ModqSampler { inner })));
        Ok(())
    })
}

/// # Safety
/// `sampler` must come from this library and not be used afterwards. NULL
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn modq_sampler_free(sampler: *mut ModqSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// `n` draws `(state, W, count)` from the limit law. Any output array may be
/// NULL if not wanted.
///
/// # Safety
/// `sampler` must come from this library; non-NULL outputs must hold `n`
/// values.
#[no_mangle]
pub unsafe extern "C" fn modq_sampler_draw(
    sampler: *const ModqSampler,
    n: usize,
    seed: u64,
    states: *mut usize,
    w: *mut f64,
    counts: *mut u64,
) -> ModqStatus {
    guard(|| {
        let s = handle(sampler, "sampler")?;
        let draws = s.inner.draw_many(n, &Streams::new(seed))?;
        if !states.is_null() {
            for (o, d) in out_slice(states, n, "states")?.iter_mut().zip(&draws) {
                *o = d.state;
            }
        }
        if !w.is_null() {
            for (o, d) in out_slice(w, n, "w")?.iter_mut().zip(&draws) {
                *o = d.w;
            }
        }
        if !counts.is_null() {
            for (o, d) in out_slice(counts, n, "counts")?.iter_mut().zip(&draws) {
                *o = d.count;
            }
        }
        Ok(())
    })
}

/// Estimate of `P[Y >= c]` under the limit law, from `reps` draws.
///
/// # Safety
/// `sampler` must come from this library; `value` and `std_error` may be
/// NULL.
#[no_mangle]
pub unsafe extern "C" fn modq_exceedance(
    sampler: *const ModqSampler,
    c: u64,
    reps: usize,
    seed: u64,
    value: *mut f64,
    std_error: *mut f64,
) -> ModqStatus {
    guard(|| {
        let s = handle(sampler, "sampler")?;
        let e = s.inner.exceedance(c, reps, &Streams::new(seed))?;
        put(value, e.value);
        put(std_error, e.std_error);
        Ok(())
    })
}

/// Raw moment `E[Y^n]` of the limit law.
///
/// # Safety
/// `sampler` must come from this library; `value` and `std_error` may be
/// NULL.
#[no_mangle]
pub unsafe extern "C" fn modq_limit_moment(
    sampler: *const ModqSampler,
    n: usize,
    t_samples: usize,
    seed: u64,
    value: *mut f64,
    std_error: *mut f64,
) -> ModqStatus {
    guard(|| {
        let s = handle(sampler, "sampler")?;
        let mut rng = Streams::new(seed).derive(3).stream(0);
        let e = s.inner.limit_moment(n, t_samples, &mut rng)?;
        put(value, e.value);
        put(std_error, e.std_error);
        Ok(())
    })
}
