//! C ABI over `scarlab`: opaque graph and scar handles, Jacobi functions and
//! degeneracy counts.
//!
//! Every fallible entry point returns a [`ScarlabStatus`]; outputs go through
//! caller-provided pointers and are written only on `SCARLAB_STATUS_OK`. The
//! message of the last failure on the calling thread is available from
//! [`scarlab_last_error`]. Handles are freed with their `_free` function;
//! passing NULL to a `_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use scarlab::elliptic::{commensurate_q, complete_k, jacobi};
use scarlab::hamiltonian::graph_terms;
use scarlab::lattice::{classify, generate, Classification, GenerateOptions, LatticeKind, ScarGraph};
use scarlab::scar::{gz_state_on_graph, residual, Helicity, ScarSpec};
use scarlab::spectra::scan_degeneracy;
use scarlab::spinops::{expectation_real, LocalSum, StateVector};
use scarlab::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScarlabStatus {
    Ok = 0,
    InvalidInput = 1,
    Numerical = 2,
    NullPointer = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScarlabClassification {
    None = 0,
    LatticeDependent = 1,
    LatticeIndependent = 2,
    Unknown = 3,
}

/// Opaque scar graph.
pub struct ScarlabGraph(ScarGraph);

/// Opaque GZ state together with its Hamiltonian.
pub struct ScarlabScar {
    psi: StateVector,
    h: LocalSum,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NUL removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> ScarlabStatus {
    let status = if e.is_input_error() {
        ScarlabStatus::InvalidInput
    } else {
        ScarlabStatus::Numerical
    };
    set_error(e.to_string());
    status
}

fn null(what: &str) -> ScarlabStatus {
    set_error(format!("{what} is NULL"));
    ScarlabStatus::NullPointer
}

fn guard(f: impl FnOnce() -> ScarlabStatus) -> ScarlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic".into());
            ScarlabStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, ScarlabStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        ScarlabStatus::InvalidInput
    })
}

fn helicity(h: c_int) -> Result<Helicity, ScarlabStatus> {
    match h {
        1 => Ok(Helicity::Positive),
        -1 => Ok(Helicity::Negative),
        _ => {
            set_error(format!("helicity must be +1 or -1, got {h}"));
            Err(ScarlabStatus::InvalidInput)
        }
    }
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! try_scarlab {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return fail(e),
        }
    };
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn scarlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scarlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `sn, cn, dn` of `u` at modulus `kappa`.
///
/// # Safety
/// The output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_jacobi(u: f64, kappa: f64, sn: *mut f64, cn: *mut f64, dn: *mut f64) -> ScarlabStatus {
    guard(|| {
        if sn.is_null() || cn.is_null() || dn.is_null() {
            return null("output");
        }
        let j = try_scarlab!(jacobi(u, kappa));
        *sn = j.sn;
        *cn = j.cn;
        *dn = j.dn;
        ScarlabStatus::Ok
    })
}

/// Complete elliptic integral `K(kappa)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_complete_k(kappa: f64, out: *mut f64) -> ScarlabStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        *out = try_scarlab!(complete_k(kappa));
        ScarlabStatus::Ok
    })
}

/// Generates a lattice by name (e.g. `"square"`) with `ndims` dimensions.
///
/// # Safety
/// `kind` must be a NUL-terminated string, `dims` valid for `ndims` reads and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_graph_generate(
    kind: *const c_char,
    dims: *const usize,
    ndims: usize,
    out: *mut *mut ScarlabGraph,
) -> ScarlabStatus {
    guard(|| {
        let name = try_status!(str_arg(kind, "kind"));
        if dims.is_null() || out.is_null() {
            return null("dims or out");
        }
        let kind: LatticeKind = try_scarlab!(name.parse());
        let dims = std::slice::from_raw_parts(dims, ndims);
        let g = try_scarlab!(generate(kind, dims, &GenerateOptions::default()));
        *out = Box::into_raw(Box::new(ScarlabGraph(g)));
        ScarlabStatus::Ok
    })
}

/// Parses graph JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_graph_from_json(json: *const c_char, out: *mut *mut ScarlabGraph) -> ScarlabStatus {
    guard(|| {
        let text = try_status!(str_arg(json, "json"));
        if out.is_null() {
            return null("out");
        }
        let g = try_scarlab!(ScarGraph::from_json(text));
        *out = Box::into_raw(Box::new(ScarlabGraph(g)));
        ScarlabStatus::Ok
    })
}

/// # Safety
/// `g` must come from a `scarlab_graph_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn scarlab_graph_free(g: *mut ScarlabGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be a live graph handle or NULL; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_graph_vertices(g: *const ScarlabGraph, out: *mut usize) -> ScarlabStatus {
    guard(|| {
        if g.is_null() || out.is_null() {
            return null("graph or out");
        }
        *out = (*g).0.vertices();
        ScarlabStatus::Ok
    })
}

/// Best scar class reachable by re-choosing σ on the CSSE edges.
///
/// # Safety
/// `g` must be a live graph handle or NULL; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_graph_classify(
    g: *const ScarlabGraph,
    out: *mut ScarlabClassification,
) -> ScarlabStatus {
    guard(|| {
        if g.is_null() || out.is_null() {
            return null("graph or out");
        }
        *out = match classify(&(*g).0).classification {
            Classification::None => ScarlabClassification::None,
            Classification::LatticeDependent => ScarlabClassification::LatticeDependent,
            Classification::LatticeIndependent => ScarlabClassification::LatticeIndependent,
            Classification::Unknown => ScarlabClassification::Unknown,
        };
        ScarlabStatus::Ok
    })
}

/// GZ state on `g` at `q = 4K(kappa)·p/denominator`; `helicity` is +1 or
/// −1, `j` and `jprime` scale the CSSE and SU(2) bonds.
///
/// # Safety
/// `g` must be a live graph handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_scar_new(
    g: *const ScarlabGraph,
    spin: f64,
    p: i64,
    denominator: i64,
    kappa: f64,
    gamma: f64,
    helicity_sign: c_int,
    j: f64,
    jprime: f64,
    out: *mut *mut ScarlabScar,
) -> ScarlabStatus {
    guard(|| {
        if g.is_null() || out.is_null() {
            return null("graph or out");
        }
        let h = try_status!(helicity(helicity_sign));
        let graph = &(*g).0;
        let q = try_scarlab!(commensurate_q(p, denominator, kappa));
        let spec = try_scarlab!(ScarSpec::new(h, gamma, q));
        let psi = try_scarlab!(gz_state_on_graph(graph, spin, &spec));
        let h = try_scarlab!(graph_terms(graph, spin, &q, j, jprime));
        *out = Box::into_raw(Box::new(ScarlabScar { psi, h }));
        ScarlabStatus::Ok
    })
}

/// # Safety
/// `s` must come from [`scarlab_scar_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn scarlab_scar_free(s: *mut ScarlabScar) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// `‖Hψ − ⟨H⟩ψ‖`.
///
/// # Safety
/// `s` must be a live scar handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_scar_residual(s: *const ScarlabScar, out: *mut f64) -> ScarlabStatus {
    guard(|| {
        if s.is_null() || out.is_null() {
            return null("scar or out");
        }
        *out = try_scarlab!(residual(&(*s).h, &(*s).psi));
        ScarlabStatus::Ok
    })
}

/// `⟨H⟩`.
///
/// # Safety
/// `s` must be a live scar handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_scar_energy(s: *const ScarlabScar, out: *mut f64) -> ScarlabStatus {
    guard(|| {
        if s.is_null() || out.is_null() {
            return null("scar or out");
        }
        *out = try_scarlab!(expectation_real(&(*s).h, &(*s).psi));
        ScarlabStatus::Ok
    })
}

/// Copies the amplitudes into `re`/`im` (each of length `len`). When `len`
/// is too small, writes the required length to `needed` and returns
/// `SCARLAB_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `re` and `im` must be valid for `len` writes, `needed` for one.
#[no_mangle]
pub unsafe extern "C" fn scarlab_scar_amplitudes(
    s: *const ScarlabScar,
    re: *mut f64,
    im: *mut f64,
    len: usize,
    needed: *mut usize,
) -> ScarlabStatus {
    guard(|| {
        if s.is_null() || needed.is_null() {
            return null("scar or needed");
        }
        let amps = (*s).psi.as_slice();
        *needed = amps.len();
        if len < amps.len() {
            set_error(format!("buffer of {len} for {} amplitudes", amps.len()));
            return ScarlabStatus::BufferTooSmall;
        }
        if re.is_null() || im.is_null() {
            return null("re or im");
        }
        for (k, z) in amps.iter().enumerate() {
            *re.add(k) = z.re;
            *im.add(k) = z.im;
        }
        ScarlabStatus::Ok
    })
}

/// Degeneracy at `E_GZ` of the periodic XYZ chain at `q = 4K·p/n`.
/// `special` is set to 1 when `q` is a multiple of `K`, `resolved` to 1 when
/// the gap audit passes.
///
/// # Safety
/// All output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn scarlab_chain_degeneracy(
    spin: f64,
    n: usize,
    p: i64,
    kappa: f64,
    count: *mut usize,
    expected: *mut usize,
    special: *mut c_int,
    resolved: *mut c_int,
) -> ScarlabStatus {
    guard(|| {
        if count.is_null() || expected.is_null() || special.is_null() || resolved.is_null() {
            return null("output");
        }
        let scan = scan_degeneracy(&[spin], &[n], kappa, &[p]);
        let row = &scan.rows[0];
        if let Some(e) = &row.error {
            set_error(e.clone());
            return ScarlabStatus::InvalidInput;
        }
        *count = row.count;
        *expected = row.expected;
        *special = row.special_q as c_int;
        *resolved = row.resolved as c_int;
        ScarlabStatus::Ok
    })
}
