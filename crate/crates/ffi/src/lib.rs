//! C ABI for rwgate.
//!
//! Objects cross the boundary as opaque handles created by `rwg_*_new` or
//! `rwg_*_load` functions and released with the matching `rwg_*_free`. Every
//! fallible call returns an [`RwgStatus`]; on failure the message is
//! available from [`rwg_last_error_message`] on the same thread.
//!
//! Port and photon indices are 1-based. Complex matrices are passed as
//! separate row-major real and imaginary arrays with rows over input ports.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rwgate::adjoint::DesignProblem;
use rwgate::config::RunConfig;
use rwgate::optimizer::Checkpoint;
use rwgate::quantum::{onefold_correlation, truth_table_eval, twofold_correlation, GateSpec, TransferMatrix};
use rwgate::splines::ControlGrid;
use rwgate::{Complex64, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RwgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Mode = 6,
    Solver = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Transfer matrix `g[input][output]` at one wavelength.
pub struct RwgTransfer(TransferMatrix);

/// Truth table and qubit encoding of a gate.
pub struct RwgGate(GateSpec);

/// Simulation grid, port modes and target built from a run configuration.
pub struct RwgProblem(DesignProblem);

/// Spline control net of a design.
pub struct RwgDesign(ControlGrid);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RwgStatus {
    match e {
        Error::Argument(_) => RwgStatus::InvalidArgument,
        Error::Config(_) => RwgStatus::Config,
        Error::Io { .. } => RwgStatus::Io,
        Error::Format(_) => RwgStatus::Format,
        Error::Mode(_) => RwgStatus::Mode,
        Error::Solver(_) => RwgStatus::Solver,
    }
}

/// Run `f`, turning errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (RwgStatus, String)>>(f: F) -> RwgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RwgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RwgStatus::Panic
        }
    }
}

fn lib(e: Error) -> (RwgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RwgStatus, String) {
    (RwgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (RwgStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RwgStatus::InvalidArgument, "path is not valid UTF-8".to_string()))?;
    Ok(Path::new(s))
}

unsafe fn write_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), (RwgStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < values.len() {
        return Err((
            RwgStatus::BufferTooSmall,
            format!("output buffer holds {len} values, {} needed", values.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Message of the last failed call on this thread. Valid until the next call.
#[no_mangle]
pub extern "C" fn rwg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn rwg_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    V.as_ptr()
}

/// Build a transfer matrix from `n_in · n_out` row-major real and imaginary
/// parts.
///
/// # Safety
/// `re` and `im` must point to `n_in · n_out` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwg_transfer_new(
    n_in: usize,
    n_out: usize,
    re: *const f64,
    im: *const f64,
    wavelength: f64,
    out: *mut *mut RwgTransfer,
) -> RwgStatus {
    guard(|| {
        if re.is_null() || im.is_null() {
            return Err(null("matrix data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let n = n_in
            .checked_mul(n_out)
            .ok_or((RwgStatus::InvalidArgument, "matrix too large".to_string()))?;
        let re = std::slice::from_raw_parts(re, n);
        let im = std::slice::from_raw_parts(im, n);
        let rows: Vec<Vec<Complex64>> = (0..n_in)
            .map(|r| (0..n_out).map(|c| Complex64::new(re[r * n_out + c], im[r * n_out + c])).collect())
            .collect();
        let g = TransferMatrix::from_rows(&rows, wavelength).map_err(lib)?;
        *out = Box::into_raw(Box::new(RwgTransfer(g)));
        Ok(())
    })
}

/// # Safety
/// `t` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rwg_transfer_free(t: *mut RwgTransfer) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Copy the matrix out as row-major real and imaginary parts.
///
/// # Safety
/// `re` and `im` must hold `len` values each.
#[no_mangle]
pub unsafe extern "C" fn rwg_transfer_get(t: *const RwgTransfer, re: *mut f64, im: *mut f64, len: usize) -> RwgStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transfer"))?;
        let m = t.0.matrix();
        let r: Vec<f64> = m.iter().map(|c| c.re).collect();
        let i: Vec<f64> = m.iter().map(|c| c.im).collect();
        write_out(&r, re, len)?;
        write_out(&i, im, len)
    })
}

/// Number of input (`side = 0`) or output (`side = 1`) ports, 0 on a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rwg_transfer_ports(t: *const RwgTransfer, side: u32) -> usize {
    match t.as_ref() {
        Some(t) if side == 0 => t.0.n_inputs(),
        Some(t) => t.0.n_outputs(),
        None => 0,
    }
}

/// Two-fold correlations `Γ_mn` for photons entering ports `l` and `k`,
/// written row-major into `out` (`n_out²` values).
///
/// # Safety
/// `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn rwg_twofold_correlation(
    t: *const RwgTransfer,
    l: usize,
    k: usize,
    out: *mut f64,
    len: usize,
) -> RwgStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transfer"))?;
        let c = twofold_correlation(&t.0, l, k).map_err(lib)?;
        write_out(c.values.as_slice().expect("standard layout"), out, len)
    })
}

/// One-fold correlations `Γ_n` for a photon entering port `i`.
///
/// # Safety
/// `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn rwg_onefold_correlation(
    t: *const RwgTransfer,
    i: usize,
    out: *mut f64,
    len: usize,
) -> RwgStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transfer"))?;
        let c = onefold_correlation(&t.0, i).map_err(lib)?;
        write_out(&c.values, out, len)
    })
}

/// Built-in gates: `"cnot"` or `"xgate"`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwg_gate_new(name: *const c_char, out: *mut *mut RwgGate) -> RwgStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = match CStr::from_ptr(name).to_bytes() {
            b"cnot" => GateSpec::cnot(),
            b"xgate" => GateSpec::xgate(),
            other => {
                return Err((
                    RwgStatus::InvalidArgument,
                    format!("unknown gate {:?}", String::from_utf8_lossy(other)),
                ))
            }
        };
        *out = Box::into_raw(Box::new(RwgGate(spec)));
        Ok(())
    })
}

/// # Safety
/// `g` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rwg_gate_free(g: *mut RwgGate) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of truth-table rows, 0 on a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rwg_gate_rows(g: *const RwgGate) -> usize {
    g.as_ref().map_or(0, |g| g.0.table.len())
}

/// Success of every truth-table row into `out`, the minimum into `min`.
///
/// # Safety
/// `out` must hold `len` values; `min` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwg_truth_table(
    t: *const RwgTransfer,
    g: *const RwgGate,
    out: *mut f64,
    len: usize,
    min: *mut f64,
) -> RwgStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transfer"))?;
        let g = g.as_ref().ok_or_else(|| null("gate"))?;
        if min.is_null() {
            return Err(null("min"));
        }
        let report = truth_table_eval(&t.0, &g.0).map_err(lib)?;
        let rows: Vec<f64> = report.rows.iter().map(|r| r.success).collect();
        write_out(&rows, out, len)?;
        *min = report.min;
        Ok(())
    })
}

/// Build the simulation described by a TOML run configuration.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwg_problem_load(path: *const c_char, out: *mut *mut RwgProblem) -> RwgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::load(path_arg(path)?).map_err(lib)?;
        let p = cfg.problem().map_err(lib)?;
        *out = Box::into_raw(Box::new(RwgProblem(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rwg_problem_free(p: *mut RwgProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Load the control net stored in a `design.ckpt` checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwg_design_load(path: *const c_char, out: *mut *mut RwgDesign) -> RwgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| lib(Error::io(path, e)))?;
        let ckpt = Checkpoint::from_json(&text).map_err(lib)?;
        *out = Box::into_raw(Box::new(RwgDesign(ckpt.state.control)));
        Ok(())
    })
}

/// # Safety
/// `d` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rwg_design_free(d: *mut RwgDesign) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Simulate a design: writes the new transfer matrix to `out` and the cost
/// to `cost`.
///
/// # Safety
/// Handles must be live; `out` and `cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rwg_problem_evaluate(
    p: *const RwgProblem,
    d: *const RwgDesign,
    out: *mut *mut RwgTransfer,
    cost: *mut f64,
) -> RwgStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("problem"))?;
        let d = d.as_ref().ok_or_else(|| null("design"))?;
        if out.is_null() || cost.is_null() {
            return Err(null("output"));
        }
        let ev = p.0.evaluate(&d.0, None, false).map_err(lib)?;
        *cost = ev.cost.value;
        *out = Box::into_raw(Box::new(RwgTransfer(ev.transfer)));
        Ok(())
    })
}
