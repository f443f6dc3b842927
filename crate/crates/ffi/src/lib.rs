//! C ABI over the `causal-channels` library.
//!
//! Objects cross the boundary as opaque handles built from JSON. Every
//! function returns a [`CcStatus`]; on anything other than `CC_STATUS_OK` the
//! message is available from [`cc_last_error`] on the same thread. Strings
//! handed out by this library must be released with [`cc_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use causal_channels::channels::{choi_of, validate_instrument, CpMap, Instrument};
use causal_channels::composition::compose_loop;
use causal_channels::procmat::{causal_decompose, find_violating_strategies, ClassicalProcess};
use causal_channels::sep::nine_state_report;
use causal_channels::{io, selftest, Error};
use libc::c_char;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcStatus {
    Ok = 0,
    /// The call ran but the property it checks does not hold.
    Failed = 1,
    /// Null pointer or non-UTF-8 string argument.
    InvalidArgument = 2,
    /// Malformed JSON or a schema violation.
    Parse = 3,
    /// Dimension, alphabet, positivity or other precondition error.
    Domain = 4,
    /// A construction could not be carried out on a valid input.
    Verification = 5,
    Panic = 6,
}

/// A completely positive map.
pub struct CcCpMap(CpMap);

/// A classically conditioned instrument.
pub struct CcInstrument(Instrument);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> CcStatus {
    match e {
        Error::Json(_) | Error::Schema { .. } => CcStatus::Parse,
        _ if e.is_verification_failure() => CcStatus::Verification,
        _ => CcStatus::Domain,
    }
}

struct Failure(CcStatus, String);

type FfiResult<T> = std::result::Result<T, Failure>;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any error and converts panics into `Panic`.
fn guard(f: impl FnOnce() -> FfiResult<CcStatus>) -> CcStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            CcStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, name: &str) -> FfiResult<&'a str> {
    if s.is_null() {
        return Err(Failure(CcStatus::InvalidArgument, format!("{name} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(CcStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure(CcStatus::InvalidArgument, format!("{name} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure(CcStatus::InvalidArgument, format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(text: String) -> FfiResult<*mut c_char> {
    CString::new(text)
        .map(CString::into_raw)
        .map_err(|_| Failure(CcStatus::Domain, "output contains a NUL byte".to_string()))
}

fn json_out<T: serde::Serialize>(value: &T) -> FfiResult<*mut c_char> {
    to_c_string(io::to_canonical_string(value)?)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn cc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a CP map from JSON (`{"in_dim", "out_dim", "kraus"}`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_cpmap_from_json(json: *const c_char, out: *mut *mut CcCpMap) -> CcStatus {
    guard(|| {
        let map: CpMap = io::from_str(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(CcCpMap(map))), "out")?;
        Ok(CcStatus::Ok)
    })
}

/// Canonical JSON of a map. Free the result with [`cc_string_free`].
///
/// # Safety
/// `map` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_cpmap_to_json(map: *const CcCpMap, out: *mut *mut c_char) -> CcStatus {
    guard(|| {
        let s = json_out(&deref(map, "map")?.0)?;
        write_out(out, s, "out")?;
        Ok(CcStatus::Ok)
    })
}

/// # Safety
/// `map` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_cpmap_free(map: *mut CcCpMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Input and output dimensions.
///
/// # Safety
/// `map` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_cpmap_dims(map: *const CcCpMap, in_dim: *mut usize, out_dim: *mut usize) -> CcStatus {
    guard(|| {
        let m = &deref(map, "map")?.0;
        write_out(in_dim, m.in_dim(), "in_dim")?;
        write_out(out_dim, m.out_dim(), "out_dim")?;
        Ok(CcStatus::Ok)
    })
}

/// Writes `‖Σ K†K − 𝕀‖_F` to `defect`; returns `Failed` when it exceeds `tol`.
///
/// # Safety
/// `map` must be a live handle; `defect` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_cpmap_check_tp(map: *const CcCpMap, tol: f64, defect: *mut f64) -> CcStatus {
    guard(|| {
        let d = deref(map, "map")?.0.tp_defect();
        write_out(defect, d, "defect")?;
        Ok(if d <= tol { CcStatus::Ok } else { CcStatus::Failed })
    })
}

/// Frobenius distance between the Choi operators of two maps.
///
/// # Safety
/// `a` and `b` must be live handles; `distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_choi_distance(a: *const CcCpMap, b: *const CcCpMap, distance: *mut f64) -> CcStatus {
    guard(|| {
        let d = choi_of(&deref(a, "a")?.0).distance(&choi_of(&deref(b, "b")?.0))?;
        write_out(distance, d, "distance")?;
        Ok(CcStatus::Ok)
    })
}

/// Parses an instrument from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_instrument_from_json(json: *const c_char, out: *mut *mut CcInstrument) -> CcStatus {
    guard(|| {
        let inst: Instrument = io::from_str(read_str(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(CcInstrument(inst))), "out")?;
        Ok(CcStatus::Ok)
    })
}

/// # Safety
/// `inst` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cc_instrument_free(inst: *mut CcInstrument) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// `Ok` when every conditioning symbol sums to a channel within `tol`.
///
/// # Safety
/// `inst` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cc_instrument_validate(inst: *const CcInstrument, tol: f64) -> CcStatus {
    guard(|| {
        let ok = validate_instrument(&deref(inst, "inst")?.0, tol);
        Ok(if ok { CcStatus::Ok } else { CcStatus::Failed })
    })
}

/// Loop composition `Σ_{a,b} A_{a|b} ⊗ B_{b|a}`. The new map handle goes to
/// `out` and its TP defect to `tp_defect` (which may be null).
///
/// # Safety
/// `alice` and `bob` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_compose_loop(
    alice: *const CcInstrument,
    bob: *const CcInstrument,
    out: *mut *mut CcCpMap,
    tp_defect: *mut f64,
) -> CcStatus {
    guard(|| {
        let joint = compose_loop(&deref(alice, "alice")?.0, &deref(bob, "bob")?.0)?;
        if !tp_defect.is_null() {
            tp_defect.write(joint.tp_defect);
        }
        write_out(out, Box::into_raw(Box::new(CcCpMap(joint.map))), "out")?;
        Ok(CcStatus::Ok)
    })
}

/// Runs the nine-state discrimination and writes its JSON report to `report`.
///
/// # Safety
/// `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_discriminate_nine(tol: f64, report: *mut *mut c_char) -> CcStatus {
    guard(|| {
        let r = nine_state_report(tol)?;
        write_out(report, json_out(&r)?, "report")?;
        Ok(if r.pass { CcStatus::Ok } else { CcStatus::Failed })
    })
}

/// Validates a classical process given as JSON. On `Failed`, a violating
/// strategy pair is written to `witness` when it is non-null; otherwise
/// `*witness` is set to null.
///
/// # Safety
/// `json` must be a NUL-terminated string; `witness` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cc_procmat_validate_json(json: *const c_char, witness: *mut *mut c_char) -> CcStatus {
    guard(|| {
        let w: ClassicalProcess = io::from_str(read_str(json, "json")?)?;
        let found = find_violating_strategies(&w);
        if !witness.is_null() {
            witness.write(match &found {
                Some(s) => json_out(s)?,
                None => ptr::null_mut(),
            });
        }
        Ok(if found.is_none() { CcStatus::Ok } else { CcStatus::Failed })
    })
}

/// Splits a valid classical process into one-way components and writes
/// the decomposition as JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_procmat_decompose_json(json: *const c_char, out: *mut *mut c_char) -> CcStatus {
    guard(|| {
        let w: ClassicalProcess = io::from_str(read_str(json, "json")?)?;
        let dec = causal_decompose(&w)?;
        write_out(out, json_out(&dec)?, "out")?;
        Ok(CcStatus::Ok)
    })
}

/// Runs the full self-test and writes its JSON report.
///
/// # Safety
/// `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cc_selftest(seed: u64, report: *mut *mut c_char) -> CcStatus {
    guard(|| {
        let r = selftest::selftest(seed, false);
        write_out(report, json_out(&r)?, "report")?;
        Ok(if r.pass { CcStatus::Ok } else { CcStatus::Failed })
    })
}
