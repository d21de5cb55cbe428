//! C ABI for the eptomo library: opaque handles, status codes, and a
//! thread-local last-error message. The header is generated by cbindgen
//! into `include/eptomo.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use eptomo::bayes;
use eptomo::cli;
use eptomo::entangle;
use eptomo::events::{fit_fringe, PhaseHistogram};
use eptomo::qmat::{
    read_density_matrix, write_density_matrix, ComplexMatrix, DensityMatrix, PureState,
};
use num_complex::Complex64;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EptStatus {
    EptOk = 0,
    EptNullPointer = 1,
    EptInvalidArgument = 2,
    EptDataError = 3,
    EptNumericalError = 4,
    EptPanic = 5,
}

/// Opaque density-matrix handle.
pub struct EptDensityMatrix {
    inner: DensityMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_from(err: &eptomo::Error) -> EptStatus {
    set_error(&err.to_string());
    match err.class() {
        eptomo::ErrorClass::Data => EptStatus::EptDataError,
        eptomo::ErrorClass::Numerical => EptStatus::EptNumericalError,
    }
}

fn guarded(f: impl FnOnce() -> EptStatus) -> EptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            EptStatus::EptPanic
        }
    }
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ept_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn path_from_c(path: *const c_char) -> Result<PathBuf, EptStatus> {
    if path.is_null() {
        set_error("null path");
        return Err(EptStatus::EptNullPointer);
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(EptStatus::EptInvalidArgument)
        }
    }
}

/// Builds a density matrix from `dim*dim` row-major complex entries given
/// as interleaved `re, im` pairs (`2*dim*dim` doubles). Validates all state
/// invariants.
///
/// # Safety
/// `re_im` must point to `2*dim*dim` readable doubles and `out` to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ept_density_matrix_new(
    re_im: *const f64,
    dim: usize,
    out: *mut *mut EptDensityMatrix,
) -> EptStatus {
    guarded(|| {
        if re_im.is_null() || out.is_null() {
            set_error("null pointer");
            return EptStatus::EptNullPointer;
        }
        let n = dim * dim;
        let slice = std::slice::from_raw_parts(re_im, 2 * n);
        let data: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new(slice[2 * k], slice[2 * k + 1]))
            .collect();
        let mat = match ComplexMatrix::new(dim, dim, data) {
            Ok(m) => m,
            Err(e) => return status_from(&e),
        };
        match DensityMatrix::new(mat) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(EptDensityMatrix { inner }));
                EptStatus::EptOk
            }
            Err(e) => status_from(&e),
        }
    })
}

/// Frees a handle created by this library. Null is a no-op.
///
/// # Safety
/// `handle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ept_density_matrix_free(handle: *mut EptDensityMatrix) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Dimension (2 or 4) of the state; 0 on null input.
///
/// # Safety
/// `handle` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn ept_density_matrix_dim(handle: *const EptDensityMatrix) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).inner.dim()
}

/// Copies the entries out as interleaved `re, im` pairs (`2*dim*dim`
/// doubles, row-major).
///
/// # Safety
/// `out` must point to `2*dim*dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ept_density_matrix_get(
    handle: *const EptDensityMatrix,
    out: *mut f64,
) -> EptStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            set_error("null pointer");
            return EptStatus::EptNullPointer;
        }
        let dm = &(*handle).inner;
        let n = dm.dim() * dm.dim();
        let slice = std::slice::from_raw_parts_mut(out, 2 * n);
        for (k, z) in dm.mat().data().iter().enumerate() {
            slice[2 * k] = z.re;
            slice[2 * k + 1] = z.im;
        }
        EptStatus::EptOk
    })
}

/// Reads a density matrix from the text format (dimension line, then
/// row-major re/im pairs), re-validating all invariants.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ept_density_matrix_read(
    path: *const c_char,
    out: *mut *mut EptDensityMatrix,
) -> EptStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null pointer");
            return EptStatus::EptNullPointer;
        }
        let path = match path_from_c(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let file = match std::fs::File::open(&path) {
            Ok(f) => f,
            Err(e) => return status_from(&eptomo::Error::Io(e)),
        };
        match read_density_matrix(&mut std::io::BufReader::new(file)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(EptDensityMatrix { inner }));
                EptStatus::EptOk
            }
            Err(e) => status_from(&e),
        }
    })
}

/// Writes the state in the text format.
///
/// # Safety
/// `handle` must be valid and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ept_density_matrix_write(
    handle: *const EptDensityMatrix,
    path: *const c_char,
) -> EptStatus {
    guarded(|| {
        if handle.is_null() {
            set_error("null pointer");
            return EptStatus::EptNullPointer;
        }
        let path = match path_from_c(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mut file = match std::fs::File::create(&path) {
            Ok(f) => f,
            Err(e) => return status_from(&eptomo::Error::Io(e)),
        };
        match write_density_matrix(&(*handle).inner, &mut file) {
            Ok(()) => EptStatus::EptOk,
            Err(e) => status_from(&e),
        }
    })
}

unsafe fn scalar_measure(
    handle: *const EptDensityMatrix,
    out: *mut f64,
    f: impl Fn(&DensityMatrix) -> eptomo::Result<f64>,
) -> EptStatus {
    if handle.is_null() || out.is_null() {
        set_error("null pointer");
        return EptStatus::EptNullPointer;
    }
    match f(&(*handle).inner) {
        Ok(v) => {
            *out = v;
            EptStatus::EptOk
        }
        Err(e) => status_from(&e),
    }
}

/// Smallest eigenvalue of the partially transposed state (negative iff
/// entangled).
///
/// # Safety
/// `handle` must be a valid 4x4 state handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ept_ppt_min_eigenvalue(
    handle: *const EptDensityMatrix,
    out: *mut f64,
) -> EptStatus {
    guarded(|| scalar_measure(handle, out, entangle::ppt_min_eigenvalue))
}

/// Wootters concurrence.
///
/// # Safety
/// As [`ept_ppt_min_eigenvalue`].
#[no_mangle]
pub unsafe extern "C" fn ept_concurrence(
    handle: *const EptDensityMatrix,
    out: *mut f64,
) -> EptStatus {
    guarded(|| scalar_measure(handle, out, entangle::concurrence))
}

/// Entanglement of formation.
///
/// # Safety
/// As [`ept_ppt_min_eigenvalue`].
#[no_mangle]
pub unsafe extern "C" fn ept_entanglement_of_formation(
    handle: *const EptDensityMatrix,
    out: *mut f64,
) -> EptStatus {
    guarded(|| scalar_measure(handle, out, entangle::entanglement_of_formation))
}

/// Fidelity with the Bell state `(|L,H⟩+|R,V⟩)/√2` without basis rotation.
///
/// # Safety
/// As [`ept_ppt_min_eigenvalue`].
#[no_mangle]
pub unsafe extern "C" fn ept_bell_fidelity(
    handle: *const EptDensityMatrix,
    out: *mut f64,
) -> EptStatus {
    guarded(|| {
        scalar_measure(handle, out, |rho| {
            eptomo::qmat::state_fidelity(rho, &PureState::bell_phi_plus())
        })
    })
}

/// Bell fidelity maximised over photon-side unitaries. `out_rotation`, when
/// non-null, receives the optimal 2x2 unitary as 8 doubles (row-major
/// interleaved re/im).
///
/// # Safety
/// `handle` must be a valid 4x4 state handle; `out_fidelity` writable;
/// `out_rotation` null or pointing to 8 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ept_bell_fidelity_opt(
    handle: *const EptDensityMatrix,
    out_fidelity: *mut f64,
    out_rotation: *mut f64,
) -> EptStatus {
    guarded(|| {
        if handle.is_null() || out_fidelity.is_null() {
            set_error("null pointer");
            return EptStatus::EptNullPointer;
        }
        match entangle::bell_fidelity_opt(&(*handle).inner) {
            Ok((f, u)) => {
                *out_fidelity = f;
                if !out_rotation.is_null() {
                    let slice = std::slice::from_raw_parts_mut(out_rotation, 8);
                    for (k, z) in u.data().iter().enumerate() {
                        slice[2 * k] = z.re;
                        slice[2 * k + 1] = z.im;
                    }
                }
                EptStatus::EptOk
            }
            Err(e) => status_from(&e),
        }
    })
}

/// Least-squares fit of `y(φ) = A(1 + V cos(φ + φ₀))` to a phase-binned
/// histogram of `len ≥ 8` points.
///
/// # Safety
/// `phases` and `values` must point to `len` readable doubles; the four
/// output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ept_fit_fringe(
    phases: *const f64,
    values: *const f64,
    len: usize,
    out_amplitude: *mut f64,
    out_visibility: *mut f64,
    out_phase: *mut f64,
    out_residual_rms: *mut f64,
) -> EptStatus {
    guarded(|| {
        if phases.is_null()
            || values.is_null()
            || out_amplitude.is_null()
            || out_visibility.is_null()
            || out_phase.is_null()
            || out_residual_rms.is_null()
        {
            set_error("null pointer");
            return EptStatus::EptNullPointer;
        }
        let hist = PhaseHistogram {
            phases: std::slice::from_raw_parts(phases, len).to_vec(),
            values: std::slice::from_raw_parts(values, len).to_vec(),
        };
        match fit_fringe(&hist) {
            Ok(fit) => {
                *out_amplitude = fit.amplitude;
                *out_visibility = fit.visibility;
                *out_phase = fit.phase;
                *out_residual_rms = fit.residual_rms;
                EptStatus::EptOk
            }
            Err(e) => status_from(&e),
        }
    })
}

/// Gelman-Rubin statistic over `n_chains` equal-length scalar series laid
/// out contiguously (`chain 0 first`).
///
/// # Safety
/// `series` must point to `n_chains*len` readable doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ept_gelman_rubin(
    series: *const f64,
    n_chains: usize,
    len: usize,
    out: *mut f64,
) -> EptStatus {
    guarded(|| {
        if series.is_null() || out.is_null() {
            set_error("null pointer");
            return EptStatus::EptNullPointer;
        }
        let flat = std::slice::from_raw_parts(series, n_chains * len);
        let chains: Vec<Vec<f64>> = (0..n_chains)
            .map(|c| flat[c * len..(c + 1) * len].to_vec())
            .collect();
        match bayes::gelman_rubin(&chains) {
            Ok(r) => {
                *out = r;
                EptStatus::EptOk
            }
            Err(e) => status_from(&e),
        }
    })
}

/// Normalised autocorrelation of a scalar series; writes `max_lag + 1`
/// doubles.
///
/// # Safety
/// `series` must point to `len` readable doubles and `out` to `max_lag + 1`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ept_autocorrelation(
    series: *const f64,
    len: usize,
    max_lag: usize,
    out: *mut f64,
) -> EptStatus {
    guarded(|| {
        if series.is_null() || out.is_null() {
            set_error("null pointer");
            return EptStatus::EptNullPointer;
        }
        let data = std::slice::from_raw_parts(series, len);
        match bayes::autocorrelation(data, max_lag) {
            Ok(r) => {
                let slice = std::slice::from_raw_parts_mut(out, max_lag + 1);
                slice.copy_from_slice(&r);
                EptStatus::EptOk
            }
            Err(e) => status_from(&e),
        }
    })
}

/// Runs one CLI command (`simulate`, `pipeline`, `scan-mle`, `reconstruct`,
/// `analyze`, `diagnose`) against a config file. `seed < 0` keeps the
/// config seed; `out_dir` may be null.
///
/// # Safety
/// `command` and `config_path` must be NUL-terminated strings; `out_dir`
/// null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ept_run(
    command: *const c_char,
    config_path: *const c_char,
    seed: i64,
    out_dir: *const c_char,
) -> EptStatus {
    guarded(|| {
        let cmd_name = match path_from_c(command) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let command = match cmd_name.to_str() {
            Some("simulate") => cli::Command::Simulate,
            Some("pipeline") => cli::Command::Pipeline,
            Some("scan-mle") => cli::Command::ScanMle,
            Some("reconstruct") => cli::Command::Reconstruct,
            Some("analyze") => cli::Command::Analyze,
            Some("diagnose") => cli::Command::Diagnose,
            _ => {
                set_error("unknown command");
                return EptStatus::EptInvalidArgument;
            }
        };
        let config = match path_from_c(config_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let out = if out_dir.is_null() {
            None
        } else {
            match path_from_c(out_dir) {
                Ok(p) => Some(p),
                Err(s) => return s,
            }
        };
        let seed = if seed < 0 { None } else { Some(seed as u64) };
        match cli::run(command, Path::new(&config), seed, out, None) {
            Ok(_) => EptStatus::EptOk,
            Err(e) => status_from(&e),
        }
    })
}
