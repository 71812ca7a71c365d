//! C interface to `eqstate`.
//!
//! Objects are opaque handles created by `eq_*_new`/`eq_*_from_json` and
//! released with the matching `eq_*_free`. Every fallible call returns an
//! [`EqStatus`]; on failure the message is kept per thread and can be read
//! with [`eq_last_error`]. Strings returned to the caller are freed with
//! [`eq_string_free`]. Symbol and atom indices are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eqstate::statistics::{self, Estimator};
use eqstate::{equilibrium, hypotheses, CylinderModel, Error, MapSpec, MarkovMap, Observable, Potential, RunConfig};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed input: bad JSON, out-of-range argument, buffer too small.
    InvalidArgument = 2,
    InvalidMap = 3,
    /// A standing hypothesis does not hold.
    Hypothesis = 4,
    /// Iteration did not converge or another numerical failure.
    Numerical = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// A Markov map.
pub struct EqMap(MarkovMap);

/// A potential.
pub struct EqPotential(Potential);

/// A discretized transfer operator with its leading spectral data.
pub struct EqModel(CylinderModel);

/// Entropy, potential integral and pressure of the equilibrium state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EqEntropy {
    pub entropy: f64,
    pub potential_integral: f64,
    pub pressure: f64,
    pub identity_defect: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EqStatus {
    match e {
        Error::Hypothesis { .. } => EqStatus::Hypothesis,
        Error::InvalidMap(_) => EqStatus::InvalidMap,
        Error::Contract(_) | Error::Config(_) | Error::Inadmissible(_) | Error::Boundary { .. } | Error::Horizon { .. } => {
            EqStatus::InvalidArgument
        }
        Error::RootFinding { .. } | Error::Convergence(_) | Error::Numerical(_) => EqStatus::Numerical,
    }
}

/// Run `f` behind a panic guard, recording any error message.
fn guard<F: FnOnce() -> Result<(), (EqStatus, String)>>(f: F) -> EqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EqStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside eqstate".into());
            EqStatus::Panic
        }
    }
}

fn lib<T>(r: eqstate::Result<T>) -> Result<T, (EqStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (EqStatus, String) {
    (EqStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: impl Into<String>) -> (EqStatus, String) {
    (EqStatus::InvalidArgument, msg.into())
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, (EqStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|_| invalid("string is not valid UTF-8"))
}

unsafe fn read_json<T: serde::de::DeserializeOwned>(s: *const c_char) -> Result<T, (EqStatus, String)> {
    serde_json::from_str(read_str(s)?).map_err(|e| invalid(e.to_string()))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), (EqStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), (EqStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    *out = CString::new(s).map_err(|_| invalid("output contains a NUL byte"))?.into_raw();
    Ok(())
}

unsafe fn get<'a, T>(p: *const T) -> Result<&'a T, (EqStatus, String)> {
    p.as_ref().ok_or_else(null)
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn eq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Free a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn eq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build a map from a JSON map description, e.g. `{"kind": "benchmark", "delta0": 0.1}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_map_from_json(json: *const c_char, out: *mut *mut EqMap) -> EqStatus {
    guard(|| {
        let spec: MapSpec = read_json(json)?;
        put(out, EqMap(lib(spec.build())?))
    })
}

/// The benchmark family with parameter `delta0`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_map_benchmark(delta0: f64, out: *mut *mut EqMap) -> EqStatus {
    guard(|| put(out, EqMap(lib(MarkovMap::benchmark(delta0))?)))
}

/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_map_free(map: *mut EqMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Number of atoms of the map; 0 for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_map_num_atoms(map: *const EqMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.num_atoms())
}

/// Evaluate the map at `x` in `[0,1)`.
///
/// # Safety
/// `map` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_map_eval(map: *const EqMap, x: f64, out: *mut f64) -> EqStatus {
    guard(|| {
        let m = get(map)?;
        let v = lib(m.0.eval(x))?;
        *out.as_mut().ok_or_else(null)? = v;
        Ok(())
    })
}

/// Build a potential from JSON, e.g. `{"form": {"kind": "linear", "intercept": 0, "slope": 0.5}, "alpha": 1}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_potential_from_json(json: *const c_char, out: *mut *mut EqPotential) -> EqStatus {
    guard(|| {
        let p: Potential = read_json(json)?;
        lib(Potential::new(p.form.clone(), p.alpha))?;
        put(out, EqPotential(p))
    })
}

/// A potential constant on each atom.
///
/// # Safety
/// `values` must point to `len` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_potential_per_atom(values: *const f64, len: usize, out: *mut *mut EqPotential) -> EqStatus {
    guard(|| {
        if values.is_null() {
            return Err(null());
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        put(out, EqPotential(Potential::per_atom(v)))
    })
}

/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_potential_free(p: *mut EqPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Discretize the transfer operator on cylinders of length `depth` and
/// compute its leading eigendata.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_model_new(map: *const EqMap, potential: *const EqPotential, depth: usize, out: *mut *mut EqModel) -> EqStatus {
    guard(|| {
        let m = get(map)?;
        let p = get(potential)?;
        lib(p.0.check(&m.0))?;
        put(out, EqModel(lib(CylinderModel::new(&m.0, &p.0, depth))?))
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_model_free(model: *mut EqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Spectral radius; NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_model_lambda(model: *const EqModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.lambda())
}

/// Pressure `log lambda`; NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_model_pressure(model: *const EqModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.spectral.pressure)
}

/// Number of cylinders; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_model_len(model: *const EqModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.system.len())
}

/// Copy the density `h` and the eigenmeasure masses `nu` (per cylinder, in
/// lexicographic word order) into caller buffers of length `len`. Either
/// buffer may be null.
///
/// # Safety
/// Non-null buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_model_eigendata(model: *const EqModel, h: *mut f64, nu: *mut f64, len: usize) -> EqStatus {
    guard(|| {
        let m = get(model)?;
        let n = m.0.system.len();
        if len < n {
            return Err(invalid(format!("buffer of length {len} is shorter than {n}")));
        }
        if !h.is_null() {
            ptr::copy_nonoverlapping(m.0.spectral.h.as_ptr(), h, n);
        }
        if !nu.is_null() {
            ptr::copy_nonoverlapping(m.0.spectral.nu.as_ptr(), nu, n);
        }
        Ok(())
    })
}

/// Entropy of the equilibrium state and the free-energy identity.
///
/// # Safety
/// Handles must be live, built from the same potential, and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eq_entropy(model: *const EqModel, potential: *const EqPotential, out: *mut EqEntropy) -> EqStatus {
    guard(|| {
        let m = get(model)?;
        let p = get(potential)?;
        let r = equilibrium::rokhlin_entropy(&p.0, &m.0);
        *out.as_mut().ok_or_else(null)? = EqEntropy {
            entropy: r.entropy,
            potential_integral: r.potential_integral,
            pressure: r.pressure,
            identity_defect: r.identity_defect,
        };
        Ok(())
    })
}

/// Correlations `C(0..=n_max)` of the observable (JSON, e.g.
/// `{"kind": "sine", "frequency": 1}`) with itself, by quadrature.
/// `out` must hold `n_max + 1` doubles.
///
/// # Safety
/// Handles must be live; `observable` NUL-terminated; `out` valid for `n_max + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_correlations(
    map: *const EqMap,
    model: *const EqModel,
    observable: *const c_char,
    n_max: usize,
    out: *mut f64,
) -> EqStatus {
    guard(|| {
        let m = get(map)?;
        let md = get(model)?;
        let u: Observable = read_json(observable)?;
        if out.is_null() {
            return Err(null());
        }
        let s = lib(statistics::correlation(&m.0, &md.0, &u, &u, n_max, Estimator::Quadrature))?;
        ptr::copy_nonoverlapping(s.values.as_ptr(), out, s.values.len());
        Ok(())
    })
}

/// Check the standing hypotheses for a run configuration given as JSON.
/// Writes the report as a JSON string to `report` (free it with
/// [`eq_string_free`]). A failed hypothesis is not an error here: inspect
/// `route_a` in the report.
///
/// # Safety
/// `config` must be NUL-terminated and `report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eq_verify_json(config: *const c_char, report: *mut *mut c_char) -> EqStatus {
    guard(|| {
        let cfg = lib(RunConfig::from_json(read_str(config)?))?;
        let map = lib(cfg.build_map())?;
        let opts = hypotheses::VerifyOptions {
            c: cfg.c,
            gamma0: cfg.gamma0,
            rate: hypotheses::RateSource::Counting { n: cfg.count_n },
        };
        let r = lib(hypotheses::verify_hypotheses(&map, &cfg.potential, cfg.gamma, opts))?;
        put_string(report, serde_json::to_string(&r).map_err(|e| invalid(e.to_string()))?)
    })
}
