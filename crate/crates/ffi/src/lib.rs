//! C ABI for the `aqnet` library.
//!
//! Every function returns an [`AqnetStatus`]. On failure the message is kept
//! per thread and can be read with [`aqnet_last_error`]. Strings handed out by
//! the library must be released with [`aqnet_string_free`]; router handles with
//! [`aqnet_router_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use aqnet::cli::{tables, OutputFormat, Scenario};
use aqnet::enumerate::Packet;
use aqnet::policy::{crossing_point, Regime};
use aqnet::routersim::{RouterEvent, RouterState, UserRequest};
use aqnet::{fidelity, Configuration, Error, FidelityParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AqnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Structural = 4,
    Parse = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque router simulation handle.
pub struct AqnetRouter {
    state: RouterState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: AqnetStatus, msg: &str) -> AqnetStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> AqnetStatus {
    let status = match e {
        Error::Domain(_) => AqnetStatus::Domain,
        Error::Structural(_) => AqnetStatus::Structural,
        Error::Parse(_) => AqnetStatus::Parse,
    };
    fail(status, &e.to_string())
}

fn guard<F: FnOnce() -> AqnetStatus>(f: F) -> AqnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == AqnetStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(AqnetStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, AqnetStatus> {
    if s.is_null() {
        return Err(fail(AqnetStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(AqnetStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn hand_out(s: String, out: *mut *mut c_char) -> AqnetStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            AqnetStatus::Ok
        }
        Err(_) => fail(AqnetStatus::Structural, "output contains a NUL byte"),
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

macro_rules! arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn aqnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn aqnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Fidelity of a configuration label such as `"5+2/n7"` or `"4+1/u7"`.
///
/// `p` and `dwell_s` hold `paths` values in arrival order; `t2_s` may be
/// infinite.
///
/// # Safety
/// `label` must be a NUL-terminated string, `p` and `dwell_s` must point to
/// `paths` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_fidelity(
    label: *const c_char,
    p: *const f64,
    dwell_s: *const f64,
    paths: usize,
    t2_s: f64,
    out: *mut f64,
) -> AqnetStatus {
    guard(|| {
        if p.is_null() || dwell_s.is_null() || out.is_null() {
            return fail(AqnetStatus::NullPointer, "null array or output pointer");
        }
        let label = arg!(text(label));
        let config: Configuration = tri!(label.parse());
        let p = std::slice::from_raw_parts(p, paths).to_vec();
        let dwell = std::slice::from_raw_parts(dwell_s, paths).to_vec();
        let params = tri!(FidelityParams::new(p, dwell, t2_s));
        *out = tri!(fidelity::fidelity(&config, &params));
        AqnetStatus::Ok
    })
}

/// Values of p2 in `[lo, hi]` where the two configurations have equal
/// fidelity on a two-path route with path-1 probability `p1`, no storage
/// noise. Writes up to `capacity` roots and their total count.
///
/// # Safety
/// Strings must be NUL-terminated, `roots` must hold `capacity` doubles (it may
/// be null when `capacity` is 0) and `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_crossing_point(
    a: *const c_char,
    b: *const c_char,
    p1: f64,
    lo: f64,
    hi: f64,
    roots: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> AqnetStatus {
    guard(|| {
        if count.is_null() || (roots.is_null() && capacity > 0) {
            return fail(AqnetStatus::NullPointer, "null output pointer");
        }
        let a: Configuration = tri!(arg!(text(a)).parse());
        let b: Configuration = tri!(arg!(text(b)).parse());
        let params = tri!(FidelityParams::two_path(p1, lo, 0.0, f64::INFINITY));
        let found = tri!(crossing_point(&a, &b, &params, lo, hi));
        *count = found.len();
        if found.len() > capacity {
            return fail(AqnetStatus::BufferTooSmall, "more roots than buffer slots");
        }
        if !found.is_empty() {
            ptr::copy_nonoverlapping(found.as_ptr(), roots, found.len());
        }
        AqnetStatus::Ok
    })
}

/// Assignment tables of a TOML scenario as CSV.
///
/// # Safety
/// `scenario_toml` must be NUL-terminated and `csv_out` writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_tables_csv(
    scenario_toml: *const c_char,
    csv_out: *mut *mut c_char,
) -> AqnetStatus {
    guard(|| {
        if csv_out.is_null() {
            return fail(AqnetStatus::NullPointer, "null output pointer");
        }
        let scenario = tri!(Scenario::from_toml(arg!(text(scenario_toml))));
        let mut buf = Vec::new();
        let written = tables(&scenario).and_then(|t| t.write(&mut buf, OutputFormat::Csv));
        if let Err(e) = written {
            return fail(AqnetStatus::Structural, &e.to_string());
        }
        hand_out(String::from_utf8_lossy(&buf).into_owned(), csv_out)
    })
}

/// Creates a router from a TOML scenario.
///
/// # Safety
/// `scenario_toml` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_router_new(
    scenario_toml: *const c_char,
    out: *mut *mut AqnetRouter,
) -> AqnetStatus {
    guard(|| {
        if out.is_null() {
            return fail(AqnetStatus::NullPointer, "null output pointer");
        }
        let scenario = tri!(Scenario::from_toml(arg!(text(scenario_toml))));
        let state = tri!(scenario.router());
        *out = Box::into_raw(Box::new(AqnetRouter { state }));
        AqnetStatus::Ok
    })
}

/// Releases a router. Null is ignored.
///
/// # Safety
/// `router` must come from [`aqnet_router_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn aqnet_router_free(router: *mut AqnetRouter) {
    if !router.is_null() {
        drop(Box::from_raw(router));
    }
}

fn json_lines(events: &[RouterEvent]) -> String {
    events.iter().map(|e| e.to_json() + "\n").collect()
}

/// Queues a request in the current slot. `payload` is `qrs:N` or
/// `unencoded:DxSIZE`; `regime` may be null for greedy; a negative
/// `min_fidelity` means no threshold. The resulting events are returned as
/// JSON lines.
///
/// # Safety
/// `router` must be a live handle, strings NUL-terminated (except a null
/// `regime`) and `events_out` writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_router_submit(
    router: *mut AqnetRouter,
    user: *const c_char,
    payload: *const c_char,
    regime: *const c_char,
    min_fidelity: f64,
    events_out: *mut *mut c_char,
) -> AqnetStatus {
    guard(|| {
        if router.is_null() || events_out.is_null() {
            return fail(AqnetStatus::NullPointer, "null router or output pointer");
        }
        let router = &mut *router;
        let user = arg!(text(user));
        let payload: Packet = tri!(arg!(text(payload)).parse());
        let regime: Regime = if regime.is_null() {
            Regime::Greedy
        } else {
            tri!(arg!(text(regime)).parse())
        };
        let mut request = UserRequest::new(user, payload, regime);
        if min_fidelity >= 0.0 {
            request = request.with_threshold(min_fidelity);
        }
        let events = router.state.submit(request);
        hand_out(json_lines(&events), events_out)
    })
}

/// Processes the queue for the current slot, then advances one slot. The
/// slot's events are returned as JSON lines.
///
/// # Safety
/// `router` must be a live handle and `events_out` writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_router_step(
    router: *mut AqnetRouter,
    events_out: *mut *mut c_char,
) -> AqnetStatus {
    guard(|| {
        if router.is_null() || events_out.is_null() {
            return fail(AqnetStatus::NullPointer, "null router or output pointer");
        }
        let router = &mut *router;
        let events = router.state.process_slot();
        router.state.advance();
        hand_out(json_lines(&events), events_out)
    })
}

/// Number of requests waiting in the router queue.
///
/// # Safety
/// `router` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_router_queue_len(router: *const AqnetRouter, out: *mut usize) -> AqnetStatus {
    guard(|| {
        if router.is_null() || out.is_null() {
            return fail(AqnetStatus::NullPointer, "null router or output pointer");
        }
        *out = (*router).state.queue_len();
        AqnetStatus::Ok
    })
}
