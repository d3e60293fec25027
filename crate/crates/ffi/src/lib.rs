//! C ABI over `ctdg-poison`.
//!
//! Objects cross the boundary as opaque handles created by `cp_*_new` or
//! `cp_*_load` style functions and released with the matching `cp_*_free`.
//! Every fallible call returns a [`CpStatus`]; the message of the most
//! recent failure on the calling thread is available from
//! [`cp_last_error_message`]. Panics are caught at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ctdg_poison::attack::validate_constraints;
use ctdg_poison::cli::{attack_graph, load_data, run_pipeline, seeded, splits_for, ExperimentConfig};
use ctdg_poison::ctdg::{load_interactions, save_interactions, DynamicGraph};
use ctdg_poison::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Infeasible = 5,
    Diverged = 6,
    Internal = 7,
    Panic = 8,
}

/// Experiment configuration.
pub struct CpConfig {
    inner: ExperimentConfig,
}

/// Interaction graph, possibly carrying adversarial edges.
pub struct CpGraph {
    inner: DynamicGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CpStatus {
    match e {
        Error::Io { .. } => CpStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::Parse { .. } => CpStatus::Parse,
        Error::Empty | Error::InvalidArgument(_) | Error::Dimension { .. } | Error::OutOfOrder { .. } => {
            CpStatus::InvalidArgument
        }
        Error::Infeasible(_) => CpStatus::Infeasible,
        Error::Diverged { .. } => CpStatus::Diverged,
        Error::Decomposition(_) => CpStatus::Internal,
        Error::Stage { source, .. } => status_of(source),
    }
}

fn guard(f: impl FnOnce() -> Result<(), CpStatus>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CpStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside ctdg-poison".into());
            CpStatus::Panic
        }
    }
}

fn check<T>(r: ctdg_poison::Result<T>) -> Result<T, CpStatus> {
    r.map_err(|e| {
        let s = status_of(&e);
        set_error(e.to_string());
        s
    })
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, CpStatus> {
    if p.is_null() {
        set_error("null string argument".into());
        return Err(CpStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not UTF-8".into());
        CpStatus::InvalidArgument
    })
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, CpStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle".into());
        CpStatus::NullPointer
    })
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, CpStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null output pointer".into());
        CpStatus::NullPointer
    })
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// New configuration with the fast benchmark defaults.
#[no_mangle]
pub extern "C" fn cp_config_new() -> *mut CpConfig {
    Box::into_raw(Box::new(CpConfig {
        inner: ExperimentConfig::benchmark(),
    }))
}

/// Loads a `section.key = value` config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_config_load(path: *const c_char, out: *mut *mut CpConfig) -> CpStatus {
    guard(|| {
        let path = str_arg(path)?;
        let out = out_ptr(out)?;
        let inner = check(ExperimentConfig::load(&PathBuf::from(path)))?;
        *out = Box::into_raw(Box::new(CpConfig { inner }));
        Ok(())
    })
}

/// Sets one dotted key, e.g. `attack.p` to `0.3`.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cp_config_set(cfg: *mut CpConfig, key: *const c_char, value: *const c_char) -> CpStatus {
    guard(|| {
        let cfg = out_ptr(cfg)?;
        let (k, v) = (str_arg(key)?, str_arg(value)?);
        check(cfg.inner.set(k, v))
    })
}

/// # Safety
/// `cfg` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cp_config_free(cfg: *mut CpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Loads or generates the configured graph.
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_from_config(cfg: *const CpConfig, out: *mut *mut CpGraph) -> CpStatus {
    guard(|| {
        let cfg = obj(cfg)?;
        let out = out_ptr(out)?;
        let inner = check(load_data(&cfg.inner.data))?;
        *out = Box::into_raw(Box::new(CpGraph { inner }));
        Ok(())
    })
}

/// Loads a `u,v,t[,features]` interaction file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_load(path: *const c_char, out: *mut *mut CpGraph) -> CpStatus {
    guard(|| {
        let path = str_arg(path)?;
        let out = out_ptr(out)?;
        let inner = check(load_interactions(&PathBuf::from(path), None))?;
        *out = Box::into_raw(Box::new(CpGraph { inner }));
        Ok(())
    })
}

/// # Safety
/// `g` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_save(g: *const CpGraph, path: *const c_char) -> CpStatus {
    guard(|| {
        let g = obj(g)?;
        let path = str_arg(path)?;
        check(save_interactions(&g.inner, &PathBuf::from(path)))
    })
}

/// Number of interactions, 0 for a null handle.
///
/// # Safety
/// `g` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_num_edges(g: *const CpGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.len())
}

/// Number of adversarial interactions, 0 for a null handle.
///
/// # Safety
/// `g` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_num_adversarial(g: *const CpGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.num_adversarial())
}

/// # Safety
/// `g` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_free(g: *mut CpGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Runs the configured attack on `g` with run seed `seed`. Writes the
/// corrupted graph to `out` and whether all four constraints hold to
/// `compliant` (1 or 0).
///
/// # Safety
/// Handles must come from this library; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cp_attack(
    cfg: *const CpConfig,
    g: *const CpGraph,
    seed: u64,
    out: *mut *mut CpGraph,
    compliant: *mut i32,
) -> CpStatus {
    guard(|| {
        let cfg = &obj(cfg)?.inner;
        let g = &obj(g)?.inner;
        let out = out_ptr(out)?;
        let compliant = out_ptr(compliant)?;
        let splits = check(splits_for(g, cfg.split))?;
        let (m, t, a) = seeded(cfg, g, seed);
        let a = match a {
            Some(a) => a,
            None => {
                set_error("no attack configured (attack.kind)".into());
                return Err(CpStatus::InvalidArgument);
            }
        };
        let outcome = check(attack_graph(g, &splits, &a, &m, &t))?;
        *compliant = i32::from(validate_constraints(&outcome.graph, &outcome.perturbations).compliant());
        *out = Box::into_raw(Box::new(CpGraph { inner: outcome.graph }));
        Ok(())
    })
}

/// Runs the full pipeline and writes the mean test MRR over seeds to
/// `mean_test_mrr`.
///
/// # Safety
/// `cfg` must come from this library; `mean_test_mrr` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cp_run_pipeline(cfg: *const CpConfig, mean_test_mrr: *mut f64) -> CpStatus {
    guard(|| {
        let cfg = &obj(cfg)?.inner;
        let out = out_ptr(mean_test_mrr)?;
        let report = check(run_pipeline(cfg))?;
        *out = report.runs.iter().map(|r| r.test.mrr).sum::<f64>() / report.runs.len() as f64;
        Ok(())
    })
}

/// AUROC of `n` scores where `labels[i] != 0` marks an adversarial edge
/// (lower scores should flag adversarial edges).
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cp_auroc(scores: *const f64, labels: *const i32, n: usize, out: *mut f64) -> CpStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() {
            set_error("null array".into());
            return Err(CpStatus::NullPointer);
        }
        let out = out_ptr(out)?;
        let s = std::slice::from_raw_parts(scores, n);
        let l = std::slice::from_raw_parts(labels, n);
        let pairs: Vec<(f64, bool)> = s.iter().zip(l).map(|(&x, &y)| (x, y != 0)).collect();
        *out = check(ctdg_poison::eval::auroc(&pairs))?;
        Ok(())
    })
}
