//! C interface to `pdro`. Objects cross the boundary as opaque handles that
//! the caller releases with the matching `_free` function. Every fallible
//! call returns a [`PdroStatus`]; the message of the last failure on the
//! calling thread is available from [`pdro_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use pdro::bench::{fit_model, run_trials, Estimator, FittedModel};
use pdro::cli::{parse_config, ResultsTable};
use pdro::cost::{Cost, DownsideRiskCost, FeasibleSet, SimplexFloorSet};
use pdro::dist::{validate_simplex, DivergenceKind, EmpiricalDist};
use pdro::dro::{
    chi2_worst_case, kl_worst_case, solve_outer, w1_worst_case_lipschitz, AmbiguitySpec,
    ObjectiveKind, SolverConfig,
};
use pdro::nalgebra::DMatrix;
use pdro::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdroStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    InsufficientData = 4,
    Unsupported = 5,
    Solver = 6,
    Config = 7,
    Parse = 8,
    Io = 9,
    Panic = 10,
}

/// Weighted atoms, one row per atom.
pub struct PdroEmpirical {
    inner: EmpiricalDist,
}

/// A fitted estimator.
pub struct PdroModel {
    inner: FittedModel,
}

/// Records of a benchmark run, held as the results CSV text.
pub struct PdroResults {
    records: usize,
    csv: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PdroStatus {
    match e {
        Error::Config(_) => PdroStatus::Config,
        Error::Dimension { .. } => PdroStatus::Dimension,
        Error::InsufficientData { .. } => PdroStatus::InsufficientData,
        Error::InvalidArgument(_) => PdroStatus::InvalidArgument,
        Error::Unsupported(_) => PdroStatus::Unsupported,
        Error::Solver(_) => PdroStatus::Solver,
        Error::Parse { .. } => PdroStatus::Parse,
        Error::Io { .. } => PdroStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PdroStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PdroStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            PdroStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PdroStatus::Panic
        }
    }
}

fn nonnull<T>(p: *const T, what: &'static str) -> Result<*const T, Fail> {
    if p.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(p)
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    let p = nonnull(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

unsafe fn array<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    Ok(slice::from_raw_parts(nonnull(p, what)?, len))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns its full length in bytes.
/// `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pdro_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a distribution from `m × d` row-major `atoms` and optional
/// probabilities `weights` (uniform when null).
///
/// # Safety
/// `atoms` must hold `m * d` values, `weights` must be null or hold `m`
/// values, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdro_empirical_new(
    atoms: *const f64,
    m: usize,
    d: usize,
    weights: *const f64,
    out: *mut *mut PdroEmpirical,
) -> PdroStatus {
    guard(|| {
        nonnull(out, "out")?;
        let data = array(atoms, m * d, "atoms")?;
        let mat = DMatrix::from_row_slice(m, d, data);
        let inner = if weights.is_null() {
            EmpiricalDist::uniform(mat)?
        } else {
            EmpiricalDist::new(mat, array(weights, m, "weights")?.to_vec())?
        };
        *out = Box::into_raw(Box::new(PdroEmpirical { inner }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdro_empirical_free(h: *mut PdroEmpirical) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of atoms, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdro_empirical_len(h: *const PdroEmpirical) -> usize {
    h.as_ref().map_or(0, |e| e.inner.len())
}

/// Dimension of the atoms, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdro_empirical_dim(h: *const PdroEmpirical) -> usize {
    h.as_ref().map_or(0, |e| e.inner.dim())
}

/// Writes the weighted mean into `out[0..d]`.
///
/// # Safety
/// `h` must be a live handle and `out` must hold `d` writable values.
#[no_mangle]
pub unsafe extern "C" fn pdro_empirical_mean(h: *const PdroEmpirical, out: *mut f64, d: usize) -> PdroStatus {
    guard(|| {
        let e = &nonnull(h, "handle")?.as_ref().expect("checked").inner;
        if d != e.dim() {
            return Err(Error::Dimension { expected: e.dim(), got: d }.into());
        }
        nonnull(out, "out")?;
        let mean = e.mean();
        ptr::copy_nonoverlapping(mean.as_ptr(), out, d);
        Ok(())
    })
}

/// Fits `estimator` (`"empirical"`, `"beta"`, `"normal"` or
/// `"noncontext-p"`) to `data`; `r` is the Beta support half-width.
///
/// # Safety
/// `estimator` must be a NUL-terminated string, `data` a live handle and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdro_model_fit(
    estimator: *const c_char,
    data: *const PdroEmpirical,
    r: f64,
    out: *mut *mut PdroModel,
) -> PdroStatus {
    guard(|| {
        nonnull(out, "out")?;
        let est: Estimator = text(estimator, "estimator")?.parse()?;
        let data = &nonnull(data, "data")?.as_ref().expect("checked").inner;
        let (inner, _) = fit_model(est, data, None, r)?;
        *out = Box::into_raw(Box::new(PdroModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdro_model_free(h: *mut PdroModel) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Draws the `m`-atom Monte Carlo center of `model` with `seed`. The
/// empirical estimator returns its training sample.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdro_model_sample(
    model: *const PdroModel,
    m: usize,
    seed: u64,
    out: *mut *mut PdroEmpirical,
) -> PdroStatus {
    guard(|| {
        nonnull(out, "out")?;
        let model = &nonnull(model, "model")?.as_ref().expect("checked").inner;
        let inner = model.center(m, seed, None)?;
        *out = Box::into_raw(Box::new(PdroEmpirical { inner }));
        Ok(())
    })
}

/// Worst-case expectation of `values` over the `kind` ball (`"chi2"`,
/// `"kl"` or `"w1"`) of radius `eps` around `base` (uniform when null).
/// `lipschitz` is used by `"w1"` only. When `out_weights` is non-null and
/// the solver produces worst-case probabilities they are written there.
///
/// # Safety
/// `values` must hold `m` values, `base` and `out_weights` must be null or
/// hold `m` values, and `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdro_worst_case(
    kind: *const c_char,
    values: *const f64,
    base: *const f64,
    m: usize,
    eps: f64,
    lipschitz: f64,
    out_value: *mut f64,
    out_weights: *mut f64,
) -> PdroStatus {
    guard(|| {
        nonnull(out_value, "out_value")?;
        let kind: DivergenceKind = text(kind, "kind")?.parse()?;
        let v = array(values, m, "values")?;
        let q = if base.is_null() { vec![1.0 / m.max(1) as f64; m] } else { array(base, m, "base")?.to_vec() };
        let res = match kind {
            DivergenceKind::Chi2 => chi2_worst_case(v, &q, eps)?,
            DivergenceKind::Kl => kl_worst_case(v, &q, eps)?,
            DivergenceKind::W1 => {
                validate_simplex(&q)?;
                w1_worst_case_lipschitz(v.iter().zip(&q).map(|(a, b)| a * b).sum(), lipschitz, eps)?
            }
            other => return Err(Error::Unsupported(format!("no worst-case solver for {other}")).into()),
        };
        *out_value = res.value;
        if let (false, Some(w)) = (out_weights.is_null(), res.weights.as_ref()) {
            ptr::copy_nonoverlapping(w.as_ptr(), out_weights, m);
        }
        Ok(())
    })
}

/// Minimizes the downside risk `(mu − ξᵀx)_+^gamma` over
/// `{x : Σx = 1, x ≥ −tau}` against `center`. `kind` null means empirical
/// risk; otherwise `"chi2"`, `"kl"` or `"w1"` with radius `eps`.
///
/// # Safety
/// `center` must be a live handle, `kind` null or NUL-terminated, `x_out`
/// must hold `d` writable values and `objective_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pdro_solve_portfolio(
    center: *const PdroEmpirical,
    mu: f64,
    gamma: f64,
    tau: f64,
    kind: *const c_char,
    eps: f64,
    max_iter: usize,
    x_out: *mut f64,
    d: usize,
    objective_out: *mut f64,
) -> PdroStatus {
    guard(|| {
        let q = &nonnull(center, "center")?.as_ref().expect("checked").inner;
        nonnull(x_out, "x_out")?;
        nonnull(objective_out, "objective_out")?;
        if d != q.dim() {
            return Err(Error::Dimension { expected: q.dim(), got: d }.into());
        }
        let cost: Cost = DownsideRiskCost::new(mu, gamma)?.into();
        let set: FeasibleSet = SimplexFloorSet::new(tau, d)?.into();
        let objective = if kind.is_null() {
            ObjectiveKind::Erm
        } else {
            ObjectiveKind::Dro(AmbiguitySpec::new(text(kind, "kind")?.parse()?, eps)?)
        };
        let cfg = SolverConfig { max_iter, ..SolverConfig::default() };
        let sol = solve_outer(&cost, &set, &objective, q, &cfg, None)?;
        ptr::copy_nonoverlapping(sol.x.as_ptr(), x_out, d);
        *objective_out = sol.objective;
        Ok(())
    })
}

/// Runs the experiment described by `config` (the flat `key = value` text
/// accepted by the command line tool) and returns its records.
///
/// # Safety
/// `config` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pdro_run_experiment(config: *const c_char, out: *mut *mut PdroResults) -> PdroStatus {
    guard(|| {
        nonnull(out, "out")?;
        let cfg = parse_config(text(config, "config")?, None)?;
        let trials = run_trials(&cfg.spec)?;
        let csv = CString::new(ResultsTable::from_trials(&trials).to_csv()).expect("CSV has no NUL bytes");
        *out = Box::into_raw(Box::new(PdroResults { records: trials.len(), csv }));
        Ok(())
    })
}

/// # Safety
/// `h` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pdro_results_free(h: *mut PdroResults) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of trial records, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdro_results_len(h: *const PdroResults) -> usize {
    h.as_ref().map_or(0, |r| r.records)
}

/// The results CSV, valid while `h` lives; null for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdro_results_csv(h: *const PdroResults) -> *const c_char {
    h.as_ref().map_or(ptr::null(), |r| r.csv.as_ptr())
}
