//! C ABI over `dtl-core`.
//!
//! Every entry point returns a [`DtlStatus`]. On failure the message is kept
//! per thread and can be read with [`dtl_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `_free` function. Panics never unwind into C; they surface as
//! `DTL_STATUS_PANIC`.
//!
//! Array outputs follow one convention: the caller passes a buffer and its
//! length, `*needed` receives the full length, and a short buffer yields
//! `DTL_STATUS_BUFFER_TOO_SMALL` without writing.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dtl_core::algorithms::{self, Algo, AlgoConfig, RunLog};
use dtl_core::envs::{self, Environment};
use dtl_core::harness::resolve_env;
use dtl_core::mdp::{seeded_rng, Policy};
use dtl_core::oracles::{error_bound, BoundInputs};
use dtl_core::{Error, Mdp};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    Assumption = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtlAlgo {
    SemiGradient = 0,
    Target = 1,
    TargetTrunc = 2,
    TargetProj = 3,
}

fn algo_from_raw(raw: u32) -> Result<Algo, Fail> {
    Ok(match raw {
        x if x == DtlAlgo::SemiGradient as u32 => Algo::SemiGradient,
        x if x == DtlAlgo::Target as u32 => Algo::Target,
        x if x == DtlAlgo::TargetTrunc as u32 => Algo::TargetTrunc,
        x if x == DtlAlgo::TargetProj as u32 => Algo::TargetProj,
        other => return Err(Fail(DtlStatus::InvalidArgument, format!("unknown algorithm code {other}"))),
    })
}

/// Run parameters. Start from [`dtl_run_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DtlRunConfig {
    /// A `DtlAlgo` value, kept as an integer so foreign code cannot smuggle
    /// in an invalid enum.
    pub algo: u32,
    pub outer: usize,
    pub inner: usize,
    pub alpha: f64,
    /// Truncation radius; NaN selects the environment default.
    pub radius: f64,
    pub seed: u64,
    pub divergence_guard: f64,
    pub log_every: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DtlRecord {
    pub t: usize,
    pub samples: u64,
    pub sup_error: f64,
    pub theta_norm: f64,
    pub diverged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DtlBoundInputs {
    pub gamma: f64,
    pub outer: usize,
    pub inner: usize,
    pub alpha: f64,
    pub t_alpha: usize,
    pub lambda_min: f64,
    pub e_approx: f64,
    pub init_gap: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DtlBoundTerms {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub total: f64,
    pub stepsize_warning: bool,
}

/// Opaque environment handle.
pub struct DtlEnv(Environment);

/// Opaque run-log handle.
pub struct DtlRunLog(RunLog);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DtlStatus {
    match e {
        Error::Dimension { .. } | Error::InvalidArgument(_) | Error::Precondition(_) => DtlStatus::InvalidArgument,
        Error::InvalidModel(_) | Error::Json(_) | Error::Csv(_) => DtlStatus::InvalidModel,
        Error::Assumption(_) => DtlStatus::Assumption,
        Error::Rank(_) | Error::NonConvergence { .. } | Error::MixingCap(_) | Error::Sampling(_) => {
            DtlStatus::Numerical
        }
        Error::Io(_) => DtlStatus::Io,
    }
}

struct Fail(DtlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DtlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DtlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DtlStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DtlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DtlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize, needed: *mut usize) -> Result<(), Fail> {
    *out_arg(needed, "needed")? = src.len();
    if len < src.len() {
        return Err(Fail(
            DtlStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} required", src.len()),
        ));
    }
    if out.is_null() {
        return Err(null("out"));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dtl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated crate version.
#[no_mangle]
pub extern "C" fn dtl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a named environment: `baird`, `example1`, `random:SEED:S:A`,
/// `uniform:SEED:S:A`, or a path to an MDP JSON file. A NaN `gamma` keeps
/// the file's discount and is rejected for built-ins.
///
/// # Safety
/// `name` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dtl_env_new(name: *const c_char, gamma: f64, out: *mut *mut DtlEnv) -> DtlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let name = str_arg(name, "name")?;
        let gamma = (!gamma.is_nan()).then_some(gamma);
        let env = resolve_env(name, gamma, None, false)?;
        *out = Box::into_raw(Box::new(DtlEnv(env)));
        Ok(())
    })
}

/// Builds an environment from MDP JSON text (`n_states`, `n_actions`,
/// `gamma`, `rewards`, `transitions`) with a uniform behavior policy and
/// tabular features.
///
/// # Safety
/// `json` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dtl_env_from_json(json: *const c_char, out: *mut *mut DtlEnv) -> DtlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mdp = Mdp::from_json(str_arg(json, "json")?)?;
        let behavior = Policy::uniform(mdp.n_states(), mdp.n_actions());
        let env = envs::tabular(mdp, behavior)?;
        *out = Box::into_raw(Box::new(DtlEnv(env)));
        Ok(())
    })
}

/// # Safety
/// `env` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dtl_env_free(env: *mut DtlEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Writes the number of states, actions and features.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtl_env_dims(
    env: *const DtlEnv,
    n_states: *mut usize,
    n_actions: *mut usize,
    dim: *mut usize,
) -> DtlStatus {
    guard(|| {
        let env = &env.as_ref().ok_or_else(|| null("env"))?.0;
        *out_arg(n_states, "n_states")? = env.mdp.n_states();
        *out_arg(n_actions, "n_actions")? = env.mdp.n_actions();
        *out_arg(dim, "dim")? = env.features.dim();
        Ok(())
    })
}

/// Copies `Q*` indexed by `s * n_actions + a`.
///
/// # Safety
/// `env` and `needed` must be valid; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dtl_env_q_star(
    env: *const DtlEnv,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> DtlStatus {
    guard(|| {
        let env = &env.as_ref().ok_or_else(|| null("env"))?.0;
        copy_out(env.q_star.as_slice(), out, len, needed)
    })
}

/// Defaults: target network with truncation, `T = 50`, `K = 1000`,
/// `alpha = 0.01`, environment radius, seed 0, guard `1e8`, log every step.
#[no_mangle]
pub extern "C" fn dtl_run_config_default() -> DtlRunConfig {
    let base = AlgoConfig::new(50, 1000, 0.01);
    DtlRunConfig {
        algo: DtlAlgo::TargetTrunc as u32,
        outer: base.outer,
        inner: base.inner,
        alpha: base.alpha,
        radius: f64::NAN,
        seed: base.seed,
        divergence_guard: base.divergence_guard,
        log_every: base.log_every,
    }
}

/// Runs one seed. Divergence is reported in the log, not as an error.
///
/// # Safety
/// `env` and `cfg` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dtl_run(
    env: *const DtlEnv,
    cfg: *const DtlRunConfig,
    out: *mut *mut DtlRunLog,
) -> DtlStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let env = &env.as_ref().ok_or_else(|| null("env"))?.0;
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let algo = algo_from_raw(c.algo)?;
        let mut config = AlgoConfig::new(c.outer, c.inner, c.alpha)
            .with_guard(c.divergence_guard)
            .with_log_every(c.log_every);
        config.seed = c.seed;
        if !c.radius.is_nan() {
            config = config.with_radius(c.radius);
        }
        let log = algorithms::run(env, algo, &config, &mut seeded_rng(c.seed))?;
        *out = Box::into_raw(Box::new(DtlRunLog(log)));
        Ok(())
    })
}

/// # Safety
/// `log` must come from [`dtl_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dtl_runlog_free(log: *mut DtlRunLog) {
    if !log.is_null() {
        drop(Box::from_raw(log));
    }
}

/// Number of logged records, excluding the initial point.
///
/// # Safety
/// `log` must be valid or null (null yields 0).
#[no_mangle]
pub unsafe extern "C" fn dtl_runlog_len(log: *const DtlRunLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.records.len())
}

/// # Safety
/// `log` must be valid or null (null yields false).
#[no_mangle]
pub unsafe extern "C" fn dtl_runlog_diverged(log: *const DtlRunLog) -> bool {
    log.as_ref().is_some_and(|l| l.0.diverged)
}

/// Record `index`; index 0 is the first logged outer step.
///
/// # Safety
/// `log` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtl_runlog_record(log: *const DtlRunLog, index: usize, out: *mut DtlRecord) -> DtlStatus {
    guard(|| {
        let log = &log.as_ref().ok_or_else(|| null("log"))?.0;
        let out = out_arg(out, "out")?;
        let r = log.records.get(index).ok_or_else(|| {
            Fail(
                DtlStatus::InvalidArgument,
                format!("index {index} out of range for {} records", log.records.len()),
            )
        })?;
        *out = DtlRecord {
            t: r.t,
            samples: r.samples,
            sup_error: r.sup_error,
            theta_norm: r.theta_norm,
            diverged: r.diverged,
        };
        Ok(())
    })
}

/// Copies the final parameter vector.
///
/// # Safety
/// `log` and `needed` must be valid; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dtl_runlog_theta(
    log: *const DtlRunLog,
    out: *mut f64,
    len: usize,
    needed: *mut usize,
) -> DtlStatus {
    guard(|| {
        let log = &log.as_ref().ok_or_else(|| null("log"))?.0;
        copy_out(&log.final_theta, out, len, needed)
    })
}

/// Evaluates the four-term finite-sample error bound.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dtl_error_bound(inputs: *const DtlBoundInputs, out: *mut DtlBoundTerms) -> DtlStatus {
    guard(|| {
        let i = inputs.as_ref().ok_or_else(|| null("inputs"))?;
        let out = out_arg(out, "out")?;
        let b = error_bound(&BoundInputs {
            gamma: i.gamma,
            outer: i.outer,
            inner: i.inner,
            alpha: i.alpha,
            t_alpha: i.t_alpha,
            lambda_min: i.lambda_min,
            e_approx: i.e_approx,
            init_gap: i.init_gap,
        })?;
        *out = DtlBoundTerms {
            e1: b.e1,
            e2: b.e2,
            e3: b.e3,
            e4: b.e4,
            total: b.total,
            stepsize_warning: b.stepsize_warning,
        };
        Ok(())
    })
}
