//! C interface. Scenarios and outcomes are opaque handles owned by the
//! caller and released with their `_free` functions. Every fallible call
//! returns an [`EvcsStatus`]; the message of the last failure on the
//! calling thread is available from [`evcs_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use evcs_core::scenario::load_scenario;
use evcs_core::{run_two_stage, DispatchMode, EngineOptions, Error, HUpdate, RunOutcome, Scenario, SyntheticConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Infeasible = 5,
    QuotaViolation = 6,
    Solver = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Per-slot series exposed by an outcome.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvcsSeries {
    BandLower = 0,
    BandUpper = 1,
    Dispatch = 2,
    GridPower = 3,
    Renewables = 4,
    QuotaBought = 5,
    Carbon = 6,
    Cost = 7,
}

const SERIES: [EvcsSeries; 8] = [
    EvcsSeries::BandLower,
    EvcsSeries::BandUpper,
    EvcsSeries::Dispatch,
    EvcsSeries::GridPower,
    EvcsSeries::Renewables,
    EvcsSeries::QuotaBought,
    EvcsSeries::Carbon,
    EvcsSeries::Cost,
];

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvcsHUpdate {
    Anchored = 0,
    Recursive = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvcsSummary {
    pub slots: usize,
    pub evs: usize,
    pub flexibility_value: f64,
    pub total_cost: f64,
    pub trades: usize,
    pub carbon_max: f64,
    pub carbon_final: f64,
    pub v2: f64,
    pub min_target_margin: f64,
    pub aggregation_residual: f64,
    pub violations: usize,
}

/// Opaque scenario handle.
pub struct EvcsScenario(Scenario);

/// Opaque run result.
pub struct EvcsOutcome {
    outcome: RunOutcome,
    summary: EvcsSummary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> EvcsStatus {
    match err {
        Error::Io { .. } => EvcsStatus::Io,
        Error::Parse { .. } | Error::LengthMismatch { .. } | Error::InvalidSeries { .. } => EvcsStatus::Parse,
        Error::InfeasibleAllocation { .. } | Error::EmptyBand { .. } | Error::OutsideBand { .. } => EvcsStatus::Infeasible,
        Error::QuotaViolation { .. } | Error::Precondition(_) => EvcsStatus::QuotaViolation,
        Error::Lp(_) => EvcsStatus::Solver,
        _ => EvcsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), EvcsStatus>) -> EvcsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EvcsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            EvcsStatus::Panic
        }
    }
}

fn fail(status: EvcsStatus, msg: &str) -> EvcsStatus {
    set_error(msg);
    status
}

fn check<T>(r: evcs_core::Result<T>) -> Result<T, EvcsStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn non_null<'a, T>(p: *const T) -> Result<&'a T, EvcsStatus> {
    // SAFETY: callers pass either null or a live handle created by this library.
    unsafe { p.as_ref() }.ok_or_else(|| fail(EvcsStatus::NullPointer, "null pointer"))
}

fn non_null_mut<'a, T>(p: *mut T) -> Result<&'a mut T, EvcsStatus> {
    // SAFETY: as for `non_null`, with exclusive access guaranteed by the caller.
    unsafe { p.as_mut() }.ok_or_else(|| fail(EvcsStatus::NullPointer, "null pointer"))
}

fn finite(x: f64, name: &str) -> Result<f64, EvcsStatus> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(fail(EvcsStatus::InvalidArgument, &format!("{name} must be finite")))
    }
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), EvcsStatus> {
    let slot = non_null_mut(out)?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn evcs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a synthetic scenario. `slots` must be positive.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_synthetic(seed: u64, evs: usize, slots: usize, out: *mut *mut EvcsScenario) -> EvcsStatus {
    guard(|| {
        let s = check(SyntheticConfig { seed, evs, slots, ..Default::default() }.build())?;
        store(out, EvcsScenario(s))
    })
}

/// Loads a scenario from a config file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_load(path: *const c_char, out: *mut *mut EvcsScenario) -> EvcsStatus {
    guard(|| {
        if path.is_null() {
            return Err(fail(EvcsStatus::NullPointer, "null path"));
        }
        // SAFETY: checked non-null; the caller guarantees NUL termination.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| fail(EvcsStatus::InvalidArgument, "path is not UTF-8"))?;
        let s = check(load_scenario(path))?;
        store(out, EvcsScenario(s))
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_free(s: *mut EvcsScenario) {
    if !s.is_null() {
        // SAFETY: created by `Box::into_raw` in `store`.
        drop(unsafe { Box::from_raw(s) });
    }
}

/// # Safety
/// `s` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_set_v1(s: *mut EvcsScenario, v1: f64) -> EvcsStatus {
    guard(|| {
        let s = non_null_mut(s)?;
        let v1 = finite(v1, "v1")?;
        if v1 < 0.0 {
            return Err(fail(EvcsStatus::InvalidArgument, "v1 must be nonnegative"));
        }
        s.0.v1 = v1;
        Ok(())
    })
}

/// Sets the carbon weight; a negative value restores the default.
///
/// # Safety
/// `s` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_set_v2(s: *mut EvcsScenario, v2: f64) -> EvcsStatus {
    guard(|| {
        let s = non_null_mut(s)?;
        let v2 = finite(v2, "v2")?;
        s.0.v2 = (v2 >= 0.0).then_some(v2);
        Ok(())
    })
}

/// # Safety
/// `s` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_set_alpha(s: *mut EvcsScenario, alpha: f64) -> EvcsStatus {
    guard(|| {
        let s = non_null_mut(s)?;
        let alpha = finite(alpha, "alpha")?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(fail(EvcsStatus::InvalidArgument, "alpha must lie in [0, 1]"));
        }
        s.0.alpha = alpha;
        Ok(())
    })
}

/// Runs both stages; `h_update` is an `EvcsHUpdate` value. With
/// `alpha_dispatch` set the aggregate power is pinned to the alpha point of
/// the band.
///
/// # Safety
/// `s` must be a live scenario handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn evcs_run(
    s: *const EvcsScenario,
    h_update: u32,
    alpha_dispatch: bool,
    out: *mut *mut EvcsOutcome,
) -> EvcsStatus {
    guard(|| {
        let s = &non_null(s)?.0;
        let opts = EngineOptions {
            h_update: match h_update {
                x if x == EvcsHUpdate::Anchored as u32 => HUpdate::Anchored,
                x if x == EvcsHUpdate::Recursive as u32 => HUpdate::Recursive,
                _ => return Err(fail(EvcsStatus::InvalidArgument, "unknown h_update")),
            },
            dispatch: if alpha_dispatch { DispatchMode::Alpha } else { DispatchMode::Stage2 },
        };
        let o = check(run_two_stage(s, &opts))?;
        let summary = EvcsSummary {
            slots: s.grid.slots,
            evs: s.fleet.len(),
            flexibility_value: o.value.total,
            total_cost: o.stage2.total_cost,
            trades: o.stage2.trades(),
            carbon_max: o.stage2.c_max(),
            carbon_final: o.stage2.c_final,
            v2: o.setup.v2,
            min_target_margin: if s.fleet.is_empty() { 0.0 } else { o.min_target_margin(s) },
            aggregation_residual: o.aggregation_residual,
            violations: o.violations.len() + o.stage2.quota_violations.len(),
        };
        store(out, EvcsOutcome { outcome: o, summary })
    })
}

/// # Safety
/// `o` must be null or an outcome handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evcs_outcome_free(o: *mut EvcsOutcome) {
    if !o.is_null() {
        // SAFETY: created by `Box::into_raw` in `store`.
        drop(unsafe { Box::from_raw(o) });
    }
}

/// # Safety
/// `o` must be a live outcome handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn evcs_outcome_summary(o: *const EvcsOutcome, out: *mut EvcsSummary) -> EvcsStatus {
    guard(|| {
        let o = non_null(o)?;
        *non_null_mut(out)? = o.summary;
        Ok(())
    })
}

/// Copies the `EvcsSeries` named by `which` into `buf`, which must hold the horizon
/// length. `len` receives the number of slots in every case, so a null
/// `buf` queries the size.
///
/// # Safety
/// `o` must be a live outcome handle, `len` writable and `buf` null or
/// valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn evcs_outcome_series(
    o: *const EvcsOutcome,
    which: u32,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> EvcsStatus {
    guard(|| {
        let o = &non_null(o)?.outcome;
        let len = non_null_mut(len)?;
        let d = &o.stage2.decisions;
        let which = SERIES
            .into_iter()
            .find(|s| *s as u32 == which)
            .ok_or_else(|| fail(EvcsStatus::InvalidArgument, "unknown series"))?;
        let values: Vec<f64> = match which {
            EvcsSeries::BandLower => o.stage1.band.p_check.clone(),
            EvcsSeries::BandUpper => o.stage1.band.p_hat.clone(),
            EvcsSeries::Dispatch => d.iter().map(|x| x.p_d).collect(),
            EvcsSeries::GridPower => d.iter().map(|x| x.p_g).collect(),
            EvcsSeries::Renewables => d.iter().map(|x| x.p_r).collect(),
            EvcsSeries::QuotaBought => d.iter().map(|x| x.m_b).collect(),
            EvcsSeries::Carbon => o.stage2.c.clone(),
            EvcsSeries::Cost => d.iter().map(|x| x.cost).collect(),
        };
        *len = values.len();
        if buf.is_null() {
            return Ok(());
        }
        if cap < values.len() {
            return Err(fail(EvcsStatus::BufferTooSmall, "buffer shorter than the horizon"));
        }
        // SAFETY: `buf` is valid for `cap >= values.len()` writes.
        unsafe { ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
        Ok(())
    })
}
