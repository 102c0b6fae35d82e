//! C interface to the `skewprod` core.
//!
//! Objects cross the boundary as opaque handles created by `sp_*_new` and
//! released by the matching `sp_*_free`. Every fallible call returns an
//! [`SpStatus`]; on failure [`sp_last_error_message`] describes the error
//! for the calling thread. Outputs are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use skewprod::config::ExperimentConfig;
use skewprod::phi::{Anchor, PhiSolver, DEFAULT_TAU};
use skewprod::potential::TrigTerm;
use skewprod::rpf::{build_base_operator, rpf_base_solve, rpf_full_solve, RpfSolution};
use skewprod::transfer::FullOperator;
use skewprod::words::count_i_binomial;
use skewprod::{BasePoint, Error, MpFamily, SkewProduct, TrigPotential};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    HypothesisViolated = 5,
    Io = 6,
    Panic = 7,
}

/// A skew product: fiber family plus potential.
pub struct SpSystem {
    inner: SkewProduct,
}

/// Evaluator of the transverse potential on a fixed fiber grid.
pub struct SpPhiSolver {
    inner: PhiSolver,
}

/// Eigendata of a discretized transfer operator.
pub struct SpRpf {
    inner: RpfSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> SpStatus {
    match err {
        Error::InvalidArgument(_) | Error::CapacityExhausted { .. } => SpStatus::InvalidArgument,
        Error::Config(_) | Error::Json(_) => SpStatus::Config,
        Error::HypothesisViolated(_) => SpStatus::HypothesisViolated,
        Error::Io(_) => SpStatus::Io,
        _ => SpStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics to a status.
fn guard(f: impl FnOnce() -> Result<(), (SpStatus, String)>) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            SpStatus::Panic
        }
    }
}

fn core<T>(r: skewprod::Result<T>) -> Result<T, (SpStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (SpStatus, String) {
    (SpStatus::NullPointer, "null pointer argument".into())
}

unsafe fn get<'a, T>(p: *const T) -> Result<&'a T, (SpStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn get_mut<'a, T>(p: *mut T) -> Result<&'a mut T, (SpStatus, String)> {
    p.as_mut().ok_or_else(null)
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), (SpStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

unsafe fn base_point(digits: *const u8, len: usize) -> Result<BasePoint, (SpStatus, String)> {
    if digits.is_null() || len == 0 {
        return Err(null());
    }
    core(BasePoint::from_digits(std::slice::from_raw_parts(
        digits, len,
    )))
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn sp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    static V: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version string"),
        };
    V.as_ptr()
}

/// New system with fiber exponent `p(x) = p0 + p1 (1 − cos 2πx)/2`, neutral
/// band half-width `delta_a` and the zero potential.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_system_new(
    p0: f64,
    p1: f64,
    delta_a: f64,
    out: *mut *mut SpSystem,
) -> SpStatus {
    guard(|| {
        let fam = core(MpFamily::new(p0, p1, delta_a, MpFamily::default().root_tol))?;
        let sys = SkewProduct::new(fam, TrigPotential::constant(0.0));
        put(out, Box::into_raw(Box::new(SpSystem { inner: sys })))
    })
}

/// New system from the `fiber_family` and `potential` of a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_system_from_config_json(
    json: *const c_char,
    out: *mut *mut SpSystem,
) -> SpStatus {
    guard(|| {
        if json.is_null() {
            return Err(null());
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (SpStatus::Config, "configuration is not UTF-8".to_string()))?;
        let cfg = core(ExperimentConfig::from_json(text))?;
        put(
            out,
            Box::into_raw(Box::new(SpSystem {
                inner: cfg.system(),
            })),
        )
    })
}

/// Adds `amplitude · cos(2π(kx·x + ky·y))` to the potential.
///
/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_system_add_term(
    sys: *mut SpSystem,
    kx: i32,
    ky: i32,
    amplitude: f64,
) -> SpStatus {
    guard(|| {
        let s = get_mut(sys)?;
        if !amplitude.is_finite() {
            return Err((SpStatus::InvalidArgument, "amplitude must be finite".into()));
        }
        s.inner
            .potential
            .terms
            .push(TrigTerm::from((kx, ky, amplitude)));
        Ok(())
    })
}

/// Sets the constant part of the potential.
///
/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_system_set_constant(sys: *mut SpSystem, c: f64) -> SpStatus {
    guard(|| {
        if !c.is_finite() {
            return Err((SpStatus::InvalidArgument, "constant must be finite".into()));
        }
        get_mut(sys)?.inner.potential.constant = c;
        Ok(())
    })
}

/// Potential value at `(x, y)`.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_potential_eval(
    sys: *const SpSystem,
    x: f64,
    y: f64,
    out: *mut f64,
) -> SpStatus {
    guard(|| put(out, get(sys)?.inner.potential.eval(x, y)))
}

/// `g_x(y)`.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_fiber_forward(
    sys: *const SpSystem,
    x: f64,
    y: f64,
    out: *mut f64,
) -> SpStatus {
    guard(|| put(out, get(sys)?.inner.family.forward_at(x, y)))
}

/// Both preimages of `t` under `g_x`, neutral branch first, into `out[0..2]`.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for two writes.
#[no_mangle]
pub unsafe extern "C" fn sp_fiber_inverse(
    sys: *const SpSystem,
    x: f64,
    t: f64,
    out: *mut f64,
) -> SpStatus {
    guard(|| {
        let s = get(sys)?;
        if !(0.0..1.0).contains(&t) {
            return Err((SpStatus::InvalidArgument, format!("t = {t} not in [0, 1)")));
        }
        let pre = s.inner.family.inverse_branches_at(x, t);
        if out.is_null() {
            return Err(null());
        }
        std::ptr::copy_nonoverlapping(pre.as_ptr(), out, 2);
        Ok(())
    })
}

/// # Safety
/// `sys` must come from `sp_system_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn sp_system_free(sys: *mut SpSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Solver on an `n`-node fiber grid, paired at the fiber node `anchor`.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_phi_solver_new(
    sys: *const SpSystem,
    grid: usize,
    anchor: f64,
    out: *mut *mut SpPhiSolver,
) -> SpStatus {
    guard(|| {
        let s = get(sys)?;
        let solver = core(PhiSolver::new(s.inner.clone(), grid, Anchor::Node(anchor)))?;
        put(out, Box::into_raw(Box::new(SpPhiSolver { inner: solver })))
    })
}

/// `Φ(x)` to `tol` for the base point with binary digits `digits[0..len]`.
///
/// # Safety
/// `solver` must be a live handle, `digits` readable for `len` bytes and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_phi_compute(
    solver: *const SpPhiSolver,
    digits: *const u8,
    len: usize,
    tol: f64,
    out: *mut f64,
) -> SpStatus {
    guard(|| {
        let s = get(solver)?;
        let x = base_point(digits, len)?;
        let v = core(s.inner.compute(&x, tol, DEFAULT_TAU))?;
        put(out, v.value)
    })
}

/// `Φ_n(x)` for the base point with binary digits `digits[0..len]`.
///
/// # Safety
/// As for [`sp_phi_compute`].
#[no_mangle]
pub unsafe extern "C" fn sp_phi_n(
    solver: *const SpPhiSolver,
    digits: *const u8,
    len: usize,
    n: usize,
    out: *mut f64,
) -> SpStatus {
    guard(|| {
        let s = get(solver)?;
        let x = base_point(digits, len)?;
        put(out, core(s.inner.phi_n(&x, n))?)
    })
}

/// # Safety
/// `solver` must come from `sp_phi_solver_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn sp_phi_solver_free(solver: *mut SpPhiSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Eigendata of the full operator on an `nx × ny` grid.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_rpf_full_solve(
    sys: *const SpSystem,
    nx: usize,
    ny: usize,
    tol: f64,
    max_iter: usize,
    out: *mut *mut SpRpf,
) -> SpStatus {
    guard(|| {
        let s = get(sys)?;
        let op = core(FullOperator::build(&s.inner, nx, ny))?;
        let sol = core(rpf_full_solve(&op, tol, max_iter))?;
        put(out, Box::into_raw(Box::new(SpRpf { inner: sol })))
    })
}

/// Eigendata of `𝓛_Φ` on `nx` base nodes, `Φ` computed by `solver` to `phi_tol`.
///
/// # Safety
/// `solver` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_rpf_base_solve(
    solver: *const SpPhiSolver,
    nx: usize,
    phi_tol: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut SpRpf,
) -> SpStatus {
    guard(|| {
        let s = get(solver)?;
        let op = core(build_base_operator(&s.inner, nx, phi_tol))?;
        let sol = core(rpf_base_solve(&op, tol, max_iter))?;
        put(out, Box::into_raw(Box::new(SpRpf { inner: sol })))
    })
}

/// # Safety
/// `rpf` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_rpf_log_eigenvalue(rpf: *const SpRpf, out: *mut f64) -> SpStatus {
    guard(|| put(out, get(rpf)?.inner.log_eigenvalue))
}

/// Number of grid nodes of the solution.
///
/// # Safety
/// `rpf` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_rpf_len(rpf: *const SpRpf, out: *mut usize) -> SpStatus {
    guard(|| put(out, get(rpf)?.inner.eigenfunction.len()))
}

/// Copies the eigenfunction (`which = 0`) or the eigenmeasure weights
/// (`which = 1`) into `buf[0..len]`; `len` must equal [`sp_rpf_len`].
///
/// # Safety
/// `rpf` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sp_rpf_copy(
    rpf: *const SpRpf,
    which: i32,
    buf: *mut f64,
    len: usize,
) -> SpStatus {
    guard(|| {
        let r = &get(rpf)?.inner;
        let src = match which {
            0 => &r.eigenfunction,
            1 => &r.weights,
            _ => return Err((SpStatus::InvalidArgument, format!("unknown vector {which}"))),
        };
        if len != src.len() {
            return Err((
                SpStatus::InvalidArgument,
                format!("buffer length {len}, need {}", src.len()),
            ));
        }
        if buf.is_null() {
            return Err(null());
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
        Ok(())
    })
}

/// # Safety
/// `rpf` must come from an `sp_rpf_*_solve` call or be null.
#[no_mangle]
pub unsafe extern "C" fn sp_rpf_free(rpf: *mut SpRpf) {
    if !rpf.is_null() {
        drop(Box::from_raw(rpf));
    }
}

/// Number of words of length `n` over `d` letters with at least `iota·n`
/// letters `≤ q`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sp_count_i(iota: f64, n: usize, q: u8, d: u8, out: *mut u64) -> SpStatus {
    guard(|| {
        let c = core(count_i_binomial(iota, n, q, d))?;
        let c = u64::try_from(c).map_err(|_| {
            (
                SpStatus::InvalidArgument,
                "count exceeds 64 bits".to_string(),
            )
        })?;
        put(out, c)
    })
}
