//! C ABI over `comblab`.
//!
//! Documents (combs, conditional combs, testers, protocols) are parsed from
//! JSON into opaque handles. Results come back as JSON strings owned by the
//! library; release them with `comblab_string_free`. Every entry point
//! returns a `ComblabStatus`, and on failure `comblab_last_error` holds a
//! message until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use comblab::comb::validate_deterministic;
use comblab::commitment::{build_cheat, concealment_epsilon, demo, verify_cheat, TOL_VERIFY};
use comblab::conditional::validate_conditional;
use comblab::discrimination::{disc_distance, op_distance};
use comblab::tester::validate_tester;
use comblab::{Document, Error, TesterSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComblabStatus {
    Ok = 0,
    /// The object was checked and found invalid.
    Rejected = 1,
    NullPointer = 2,
    InvalidUtf8 = 3,
    Parse = 4,
    InvalidInput = 5,
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComblabMode {
    /// Operational distance, half the trace norm of the aligned difference.
    Op = 0,
    /// Discrimination distance.
    Disc = 1,
}

/// Parsed JSON document.
pub struct ComblabDocument {
    inner: Document,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(ComblabStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Json(_) => ComblabStatus::Parse,
            Error::NotPsd { .. } | Error::TraceIncreasing { .. } | Error::MarginalMismatch { .. } | Error::Solver(_) | Error::AllDenominatorsZero => {
                ComblabStatus::Numerical
            }
            _ => ComblabStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(ComblabStatus::Parse, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<ComblabStatus, Failure>) -> ComblabStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Failure(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(&format!("panic: {}", msg.unwrap_or_default()));
            ComblabStatus::Panic
        }
    }
}

fn null() -> Failure {
    Failure(ComblabStatus::NullPointer, "null pointer argument".into())
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(ComblabStatus::InvalidUtf8, e.to_string()))
}

unsafe fn doc<'a>(p: *const ComblabDocument) -> Result<&'a Document, Failure> {
    p.as_ref().map(|d| &d.inner).ok_or_else(null)
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    *out = CString::new(s).map_err(|e| Failure(ComblabStatus::InvalidInput, e.to_string()))?.into_raw();
    Ok(())
}

unsafe fn put_doc(out: *mut *mut ComblabDocument, d: Document) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(ComblabDocument { inner: d }));
    Ok(())
}

/// Message for the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call into the library.
#[no_mangle]
pub extern "C" fn comblab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn comblab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `d` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn comblab_document_free(d: *mut ComblabDocument) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn comblab_document_parse(json: *const c_char, out: *mut *mut ComblabDocument) -> ComblabStatus {
    guard(|| {
        let d = Document::parse(text(json)?)?;
        put_doc(out, d)?;
        Ok(ComblabStatus::Ok)
    })
}

/// Kind tag: "comb", "conditional", "tester", "tester-list" or "protocol".
/// Static storage; do not free. Null if `d` is null.
///
/// # Safety
/// `d` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn comblab_document_kind(d: *const ComblabDocument) -> *const c_char {
    let Some(d) = d.as_ref() else { return ptr::null() };
    let s: &'static CStr = match d.inner {
        Document::Comb(_) => c"comb",
        Document::Conditional(_) => c"conditional",
        Document::Tester(_) => c"tester",
        Document::TesterList { .. } => c"tester-list",
        Document::Protocol(_) => c"protocol",
    };
    s.as_ptr()
}

/// # Safety
/// `d` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn comblab_document_to_json(d: *const ComblabDocument, out: *mut *mut c_char) -> ComblabStatus {
    guard(|| {
        put_string(out, doc(d)?.to_json()?)?;
        Ok(ComblabStatus::Ok)
    })
}

/// Demo protocol by name (plaintext, fixed-state, epr, theta:<x>, coin2round).
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn comblab_demo(name: *const c_char, out: *mut *mut ComblabDocument) -> ComblabStatus {
    guard(|| {
        let p = demo(text(name)?)?;
        put_doc(out, Document::Protocol(p))?;
        Ok(ComblabStatus::Ok)
    })
}

/// Normalization check. Returns `Ok` or `Rejected`; `report` (may be null)
/// receives the JSON report.
///
/// # Safety
/// `d` is a live handle; `report` is writable or null.
#[no_mangle]
pub unsafe extern "C" fn comblab_validate(d: *const ComblabDocument, tol: f64, report: *mut *mut c_char) -> ComblabStatus {
    guard(|| {
        let (ok, json) = match doc(d)? {
            Document::Comb(c) => {
                let r = validate_deterministic(c, tol);
                (r.accepted, serde_json::to_string(&r)?)
            }
            Document::Conditional(cc) => {
                let r = validate_conditional(cc, tol)?;
                (r.accepted, serde_json::to_string(&r)?)
            }
            Document::Tester(t) => {
                let r = validate_tester(t);
                (r.normalized, serde_json::to_string(&r)?)
            }
            Document::TesterList { testers } => {
                let rs: Vec<_> = testers.iter().map(validate_tester).collect();
                (rs.iter().all(|r| r.normalized), serde_json::to_string(&rs)?)
            }
            Document::Protocol(p) => {
                let (r0, r1) = p.validate(tol)?;
                (r0.accepted && r1.accepted, serde_json::to_string(&(r0, r1))?)
            }
        };
        if !report.is_null() {
            put_string(report, json)?;
        }
        Ok(if ok { ComblabStatus::Ok } else { ComblabStatus::Rejected })
    })
}

/// Distance between two combs over all testers on their wires, or over the
/// testers in `testers` when it is a tester or tester-list handle.
///
/// # Safety
/// `a`, `b` are live comb handles; `testers` is a live handle or null;
/// `value` is writable.
#[no_mangle]
pub unsafe extern "C" fn comblab_distance(
    a: *const ComblabDocument,
    b: *const ComblabDocument,
    testers: *const ComblabDocument,
    mode: ComblabMode,
    seed: u64,
    value: *mut f64,
) -> ComblabStatus {
    guard(|| {
        let comb = |d: &Document| match d {
            Document::Comb(c) => Ok(c.clone()),
            other => Err(Failure(ComblabStatus::InvalidInput, format!("expected a comb, found {}", other.kind()))),
        };
        let (r0, r1) = (comb(doc(a)?)?, comb(doc(b)?)?);
        let set = match testers.as_ref().map(|t| &t.inner) {
            None => TesterSet::unrestricted(r0.layout()),
            Some(Document::Tester(t)) => TesterSet::explicit(std::slice::from_ref(t), r0.layout())?,
            Some(Document::TesterList { testers }) => TesterSet::explicit(testers, r0.layout())?,
            Some(other) => return Err(Failure(ComblabStatus::InvalidInput, format!("expected testers, found {}", other.kind()))),
        };
        let res = match mode {
            ComblabMode::Op => op_distance(&r0, &r1, &set)?,
            ComblabMode::Disc => disc_distance(&r0, &r1, &set, seed)?,
        };
        if value.is_null() {
            return Err(null());
        }
        *value = res.value;
        Ok(ComblabStatus::Ok)
    })
}

/// Concealment, cheat construction and independent verification for a
/// protocol. `report` receives `{"concealment", "cheat", "verdict"}` as JSON.
/// Returns `Rejected` when verification fails.
///
/// # Safety
/// `p` is a live protocol handle; `report` is writable.
#[no_mangle]
pub unsafe extern "C" fn comblab_conceal(p: *const ComblabDocument, seed: u64, report: *mut *mut c_char) -> ComblabStatus {
    guard(|| {
        let Document::Protocol(p) = doc(p)? else {
            return Err(Failure(ComblabStatus::InvalidInput, "expected a protocol".into()));
        };
        let c = concealment_epsilon(p, seed)?;
        let r = build_cheat(p, seed, TOL_VERIFY)?;
        let v = verify_cheat(p, &r, seed ^ 0x5eed)?;
        let json = serde_json::json!({ "concealment": c, "cheat": r, "verdict": v });
        put_string(report, json.to_string())?;
        Ok(if v.pass { ComblabStatus::Ok } else { ComblabStatus::Rejected })
    })
}
