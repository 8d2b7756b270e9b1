//! C ABI over the `signcons` library.
//!
//! Scenarios and trajectories are opaque handles owned by the caller and
//! released with the matching `_free` function. Every fallible call returns
//! a [`SignconsStatus`]; the message for the last failure on the calling
//! thread is available through [`signcons_last_error`]. Panics are caught at
//! the boundary and reported as [`SignconsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use signcons::analysis::{analyze, Prediction};
use signcons::dynamics::{simulate, Classification, Trajectory};
use signcons::filippov::filippov_set;
use signcons::scenario::{LoadError, ScenarioFile};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignconsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    Simulation = 5,
    Filippov = 6,
    BufferTooSmall = 7,
    InvalidArgument = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignconsPrediction {
    ConsensusGuaranteed = 0,
    ErrorConvergenceGuaranteed = 1,
    SlidingPossible = 2,
    NoGuarantee = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignconsClassKind {
    Consensus = 0,
    SlidingConsensus = 1,
    NonConsensus = 2,
    Undetermined = 3,
}

/// Opaque scenario handle.
pub struct SignconsScenario {
    inner: ScenarioFile,
}

/// Opaque trajectory handle.
pub struct SignconsTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: SignconsStatus, msg: impl Into<String>) -> SignconsStatus {
    set_error(msg);
    status
}

fn guard(body: impl FnOnce() -> SignconsStatus) -> SignconsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(SignconsStatus::Panic, msg)
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, SignconsStatus> {
    if p.is_null() {
        return Err(fail(SignconsStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(SignconsStatus::InvalidUtf8, e.to_string()))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Copies the last error message of the calling thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn signcons_last_error(buf: *mut c_char, len: usize) -> usize {
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

/// Parses a scenario from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn signcons_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut SignconsScenario,
) -> SignconsStatus {
    guard(|| {
        if out.is_null() {
            return fail(SignconsStatus::NullPointer, "null output pointer");
        }
        let text = match c_str(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioFile::parse(text) {
            Ok(inner) => {
                emit(out, SignconsScenario { inner });
                SignconsStatus::Ok
            }
            Err(e) => fail(SignconsStatus::Parse, e.to_string()),
        }
    })
}

/// Loads a scenario from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn signcons_scenario_load(
    path: *const c_char,
    out: *mut *mut SignconsScenario,
) -> SignconsStatus {
    guard(|| {
        if out.is_null() {
            return fail(SignconsStatus::NullPointer, "null output pointer");
        }
        let path = match c_str(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioFile::load(Path::new(path)) {
            Ok(inner) => {
                emit(out, SignconsScenario { inner });
                SignconsStatus::Ok
            }
            Err(e @ LoadError::Io { .. }) => fail(SignconsStatus::Io, e.to_string()),
            Err(e) => fail(SignconsStatus::Parse, e.to_string()),
        }
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn signcons_scenario_free(s: *mut SignconsScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn signcons_scenario_dim(s: *const SignconsScenario) -> usize {
    s.as_ref().map_or(0, |s| s.inner.scenario.x0.len())
}

/// Runs the structural analysis and writes the prediction.
///
/// # Safety
/// `s` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn signcons_analyze(s: *const SignconsScenario, out: *mut SignconsPrediction) -> SignconsStatus {
    guard(|| {
        let (Some(s), false) = (s.as_ref(), out.is_null()) else {
            return fail(SignconsStatus::NullPointer, "null argument");
        };
        *out = match analyze(&s.inner.scenario).prediction {
            Prediction::ConsensusGuaranteed => SignconsPrediction::ConsensusGuaranteed,
            Prediction::ErrorConvergenceGuaranteed => SignconsPrediction::ErrorConvergenceGuaranteed,
            Prediction::SlidingPossible => SignconsPrediction::SlidingPossible,
            Prediction::NoGuarantee => SignconsPrediction::NoGuarantee,
        };
        SignconsStatus::Ok
    })
}

/// Writes the analysis report as `key = value` text into `buf`
/// (NUL-terminated). `needed` receives the text length excluding the
/// terminator; if `len` is too small nothing is written and
/// `BufferTooSmall` is returned.
///
/// # Safety
/// `s` must be a live handle, `buf` null or valid for `len` bytes and
/// `needed` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn signcons_analysis_text(
    s: *const SignconsScenario,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SignconsStatus {
    guard(|| {
        let (Some(s), false) = (s.as_ref(), needed.is_null()) else {
            return fail(SignconsStatus::NullPointer, "null argument");
        };
        let text = analyze(&s.inner.scenario).to_text();
        *needed = text.len();
        if buf.is_null() || len <= text.len() {
            return fail(SignconsStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        SignconsStatus::Ok
    })
}

/// Vertices of the Filippov set at `x` (length `n`). Writes the vertex
/// count to `count` and, if `cap >= count * n`, the vertices row by row
/// into `buf`; otherwise returns `BufferTooSmall`.
///
/// # Safety
/// `s` must be a live handle, `x` valid for `n` reads, `buf` null or valid
/// for `cap` writes and `count` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn signcons_filippov_vertices(
    s: *const SignconsScenario,
    x: *const f64,
    n: usize,
    buf: *mut f64,
    cap: usize,
    count: *mut usize,
) -> SignconsStatus {
    guard(|| {
        let (Some(s), false, false) = (s.as_ref(), x.is_null(), count.is_null()) else {
            return fail(SignconsStatus::NullPointer, "null argument");
        };
        let x = std::slice::from_raw_parts(x, n);
        let set = match filippov_set(&s.inner.scenario.protocol, x) {
            Ok(set) => set,
            Err(e) => return fail(SignconsStatus::Filippov, e.to_string()),
        };
        *count = set.vertices.len();
        let total = set.vertices.len() * n;
        if buf.is_null() || cap < total {
            return fail(SignconsStatus::BufferTooSmall, format!("need {total} values"));
        }
        for (k, v) in set.vertices.iter().enumerate() {
            ptr::copy_nonoverlapping(v.as_ptr(), buf.add(k * n), n);
        }
        SignconsStatus::Ok
    })
}

/// Simulates the scenario with its own integrator settings.
///
/// # Safety
/// `s` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn signcons_simulate(
    s: *const SignconsScenario,
    out: *mut *mut SignconsTrajectory,
) -> SignconsStatus {
    guard(|| {
        let (Some(s), false) = (s.as_ref(), out.is_null()) else {
            return fail(SignconsStatus::NullPointer, "null argument");
        };
        match simulate(&s.inner.scenario) {
            Ok(inner) => {
                emit(out, SignconsTrajectory { inner });
                SignconsStatus::Ok
            }
            Err(e) => fail(SignconsStatus::Simulation, e.to_string()),
        }
    })
}

/// # Safety
/// `t` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn signcons_trajectory_free(t: *mut SignconsTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn signcons_trajectory_len(t: *const SignconsTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.inner.times.len())
}

/// Copies sample times into `buf`, which must hold
/// [`signcons_trajectory_len`] values.
///
/// # Safety
/// `t` must be a live handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn signcons_trajectory_times(
    t: *const SignconsTrajectory,
    buf: *mut f64,
    cap: usize,
) -> SignconsStatus {
    guard(|| {
        let (Some(t), false) = (t.as_ref(), buf.is_null()) else {
            return fail(SignconsStatus::NullPointer, "null argument");
        };
        let times = &t.inner.times;
        if cap < times.len() {
            return fail(SignconsStatus::BufferTooSmall, format!("need {} values", times.len()));
        }
        ptr::copy_nonoverlapping(times.as_ptr(), buf, times.len());
        SignconsStatus::Ok
    })
}

/// Copies the state at sample `k` into `buf`, which must hold one value
/// per agent.
///
/// # Safety
/// `t` must be a live handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn signcons_trajectory_state(
    t: *const SignconsTrajectory,
    k: usize,
    buf: *mut f64,
    cap: usize,
) -> SignconsStatus {
    guard(|| {
        let (Some(t), false) = (t.as_ref(), buf.is_null()) else {
            return fail(SignconsStatus::NullPointer, "null argument");
        };
        let Some(x) = t.inner.states.get(k) else {
            return fail(SignconsStatus::InvalidArgument, format!("sample {k} out of range"));
        };
        if cap < x.len() {
            return fail(SignconsStatus::BufferTooSmall, format!("need {} values", x.len()));
        }
        ptr::copy_nonoverlapping(x.as_ptr(), buf, x.len());
        SignconsStatus::Ok
    })
}

/// Classification of the run. `value` receives the consensus value or the
/// sliding rate, and NaN for the other kinds.
///
/// # Safety
/// `t` must be a live handle, `kind` and `value` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn signcons_trajectory_classification(
    t: *const SignconsTrajectory,
    kind: *mut SignconsClassKind,
    value: *mut f64,
) -> SignconsStatus {
    guard(|| {
        let (Some(t), false, false) = (t.as_ref(), kind.is_null(), value.is_null()) else {
            return fail(SignconsStatus::NullPointer, "null argument");
        };
        let (k, v) = match t.inner.classification {
            Classification::Consensus { value } => (SignconsClassKind::Consensus, value),
            Classification::SlidingConsensus { rate } => (SignconsClassKind::SlidingConsensus, rate),
            Classification::NonConsensus => (SignconsClassKind::NonConsensus, f64::NAN),
            Classification::Undetermined => (SignconsClassKind::Undetermined, f64::NAN),
        };
        *kind = k;
        *value = v;
        SignconsStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    const PAIR: &str =
        "x0 = [0.0, 1.0]\n[graph]\nn = 2\nedges = [[1, 2, 1.0]]\n[node_fns]\nall = { kind = \"sign\" }\n";

    fn load(text: &str) -> *mut SignconsScenario {
        let c = CString::new(text).unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(
            unsafe { signcons_scenario_from_toml(c.as_ptr(), &mut s) },
            SignconsStatus::Ok
        );
        s
    }

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        unsafe { signcons_last_error(buf.as_mut_ptr(), buf.len()) };
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn parse_errors_are_reported() {
        let c = CString::new("x0 = [0.0]").unwrap();
        let mut s = ptr::null_mut();
        let st = unsafe { signcons_scenario_from_toml(c.as_ptr(), &mut s) };
        assert_eq!(st, SignconsStatus::Parse);
        assert!(s.is_null());
        assert!(last_error().contains("graph"));
    }

    #[test]
    fn null_arguments() {
        let mut s = ptr::null_mut();
        let st = unsafe { signcons_scenario_from_toml(ptr::null(), &mut s) };
        assert_eq!(st, SignconsStatus::NullPointer);
        let mut p = SignconsPrediction::NoGuarantee;
        assert_eq!(
            unsafe { signcons_analyze(ptr::null(), &mut p) },
            SignconsStatus::NullPointer
        );
        assert_eq!(unsafe { signcons_scenario_dim(ptr::null()) }, 0);
        unsafe { signcons_scenario_free(ptr::null_mut()) };
    }

    #[test]
    fn missing_file_is_io() {
        let c = CString::new("/nonexistent/scenario.toml").unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(
            unsafe { signcons_scenario_load(c.as_ptr(), &mut s) },
            SignconsStatus::Io
        );
    }

    #[test]
    fn analyze_and_simulate() {
        let s = load(PAIR);
        unsafe {
            assert_eq!(signcons_scenario_dim(s), 2);
            let mut p = SignconsPrediction::NoGuarantee;
            assert_eq!(signcons_analyze(s, &mut p), SignconsStatus::Ok);
            assert_eq!(p, SignconsPrediction::ConsensusGuaranteed);

            let mut needed = 0;
            assert_eq!(
                signcons_analysis_text(s, ptr::null_mut(), 0, &mut needed),
                SignconsStatus::BufferTooSmall
            );
            let mut buf = vec![0 as c_char; needed + 1];
            assert_eq!(
                signcons_analysis_text(s, buf.as_mut_ptr(), buf.len(), &mut needed),
                SignconsStatus::Ok
            );
            let text = CStr::from_ptr(buf.as_ptr()).to_string_lossy();
            assert!(text.contains("prediction = ConsensusGuaranteed"));

            let mut t = ptr::null_mut();
            assert_eq!(signcons_simulate(s, &mut t), SignconsStatus::Ok);
            let len = signcons_trajectory_len(t);
            let mut times = vec![0.0; len];
            assert_eq!(
                signcons_trajectory_times(t, times.as_mut_ptr(), len),
                SignconsStatus::Ok
            );
            assert_eq!(times[0], 0.0);
            let mut x = [0.0; 2];
            assert_eq!(
                signcons_trajectory_state(t, len - 1, x.as_mut_ptr(), 2),
                SignconsStatus::Ok
            );
            assert!(x[1].abs() < 1e-3);
            assert_eq!(
                signcons_trajectory_state(t, len, x.as_mut_ptr(), 2),
                SignconsStatus::InvalidArgument
            );
            let (mut kind, mut value) = (SignconsClassKind::Undetermined, 0.0);
            assert_eq!(
                signcons_trajectory_classification(t, &mut kind, &mut value),
                SignconsStatus::Ok
            );
            assert_eq!(kind, SignconsClassKind::Consensus);
            assert!(value.abs() < 1e-3);
            signcons_trajectory_free(t);
            signcons_scenario_free(s);
        }
    }

    #[test]
    fn filippov_vertices_two_step() {
        let s = load(PAIR);
        unsafe {
            let x = [0.0, 0.0];
            let mut count = 0;
            assert_eq!(
                signcons_filippov_vertices(s, x.as_ptr(), 2, ptr::null_mut(), 0, &mut count),
                SignconsStatus::BufferTooSmall
            );
            assert_eq!(count, 2);
            let mut buf = vec![0.0; count * 2];
            assert_eq!(
                signcons_filippov_vertices(s, x.as_ptr(), 2, buf.as_mut_ptr(), buf.len(), &mut count),
                SignconsStatus::Ok
            );
            assert!(buf.iter().step_by(2).all(|&v| v == 0.0));
            let mut sorted: Vec<f64> = buf.iter().skip(1).step_by(2).copied().collect();
            sorted.sort_by(f64::total_cmp);
            assert_eq!(sorted, vec![-1.0, 1.0]);

            assert_eq!(
                signcons_filippov_vertices(s, x.as_ptr(), 3, buf.as_mut_ptr(), buf.len(), &mut count),
                SignconsStatus::Filippov
            );
            signcons_scenario_free(s);
        }
    }
}
