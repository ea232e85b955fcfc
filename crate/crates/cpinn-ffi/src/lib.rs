//! C ABI over the cpinn library.
//!
//! Conventions: every function returns a [`CpinnStatus`]; results come
//! back through out-pointers. Handles ([`CpinnProblem`], [`CpinnNetwork`])
//! are opaque and must be released with their `_free` functions. The last
//! error message is kept per thread and can be copied out with
//! [`cpinn_last_error_message`]. The header is generated into
//! `include/cpinn.h` at build time.

use cpinn::experiments::{self, ManufacturedProblem, TrainConfig};
use cpinn::loss::LossKind;
use cpinn::network::MlpNetwork;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Result code of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpinnStatus {
    Ok = 0,
    /// Bad argument or validation failure; details via
    /// `cpinn_last_error_message`.
    InvalidArgument = 1,
    /// Training exceeded the divergence threshold.
    Diverged = 2,
    /// File could not be read or written.
    Io = 3,
    NullPointer = 4,
    /// Out buffer too small.
    BufferTooSmall = 5,
    /// Internal failure (a panic was caught).
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap();
    });
}

fn status_of(err: &cpinn::Error) -> CpinnStatus {
    set_error(&err.to_string());
    match err {
        cpinn::Error::Diverged { .. } => CpinnStatus::Diverged,
        cpinn::Error::Io(_) => CpinnStatus::Io,
        _ => CpinnStatus::InvalidArgument,
    }
}

fn guard(body: impl FnOnce() -> CpinnStatus) -> CpinnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            CpinnStatus::Internal
        }
    }
}

/// Opaque manufactured-problem handle.
pub struct CpinnProblem {
    inner: ManufacturedProblem,
}

/// Opaque trained-network handle.
pub struct CpinnNetwork {
    inner: MlpNetwork,
}

/// Training options; use `cpinn_train_options_default` to initialize.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CpinnTrainOptions {
    /// 0 = classical squared loss, 1 = consistent squared loss.
    pub loss_kind: u32,
    /// Mesh size per axis.
    pub n: usize,
    pub width: usize,
    pub depth: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Interior exponent of the consistent loss; `<= 0` applies the
    /// dimension rule.
    pub gamma: f64,
    /// Nonzero enables the identity skip connections.
    pub use_skip: u8,
    pub t_final: f64,
}

/// Scalar summary of one training run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CpinnRunSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_pinn_loss: f64,
    pub final_cpinn_loss: f64,
    pub rel_l2_error_percent: f64,
    pub wall_secs: f64,
}

impl CpinnTrainOptions {
    fn to_config(self) -> Result<TrainConfig, cpinn::Error> {
        let loss = match self.loss_kind {
            0 => LossKind::Pinn,
            1 => LossKind::Cpinn,
            other => {
                return Err(cpinn::Error::InvalidSpec(format!(
                    "loss_kind must be 0 or 1, got {other}"
                )))
            }
        };
        let mut cfg = TrainConfig::new(loss, self.n);
        cfg.width = self.width;
        cfg.depth = self.depth;
        cfg.step_size = self.step_size;
        cfg.momentum = self.momentum;
        cfg.iterations = self.iterations;
        cfg.seed = self.seed;
        cfg.gamma = if self.gamma > 0.0 { Some(self.gamma) } else { None };
        cfg.skip = self.use_skip != 0;
        cfg.t_final = self.t_final;
        Ok(cfg)
    }
}

/// Library version string; static storage, do not free.
#[no_mangle]
pub extern "C" fn cpinn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message of this thread into `buf` (NUL-terminated).
///
/// # Safety
/// `buf` must point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cpinn_last_error_message(buf: *mut c_char, len: usize) -> CpinnStatus {
    if buf.is_null() {
        return CpinnStatus::NullPointer;
    }
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if bytes.len() > len {
            return CpinnStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
        CpinnStatus::Ok
    })
}

/// Create a manufactured problem by name (`"u1"` or `"u2"`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpinn_problem_new(
    name: *const c_char,
    out: *mut *mut CpinnProblem,
) -> CpinnStatus {
    if name.is_null() || out.is_null() {
        return CpinnStatus::NullPointer;
    }
    guard(|| {
        let name = match CStr::from_ptr(name).to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("problem name is not valid UTF-8");
                return CpinnStatus::InvalidArgument;
            }
        };
        match experiments::manufactured(name) {
            Ok(problem) => {
                *out = Box::into_raw(Box::new(CpinnProblem { inner: problem }));
                CpinnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Release a problem handle; a null pointer is a no-op.
///
/// # Safety
/// `problem` must come from `cpinn_problem_new` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cpinn_problem_free(problem: *mut CpinnProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Fill `out` with the default training options (consistent loss,
/// N = 15, W = 20, L = 4).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpinn_train_options_default(out: *mut CpinnTrainOptions) -> CpinnStatus {
    if out.is_null() {
        return CpinnStatus::NullPointer;
    }
    let cfg = TrainConfig::new(LossKind::Cpinn, 15);
    *out = CpinnTrainOptions {
        loss_kind: 1,
        n: cfg.n,
        width: cfg.width,
        depth: cfg.depth,
        step_size: cfg.step_size,
        momentum: cfg.momentum,
        iterations: cfg.iterations,
        seed: cfg.seed,
        gamma: 0.0,
        use_skip: cfg.skip as u8,
        t_final: cfg.t_final,
    };
    CpinnStatus::Ok
}

/// Train a network; on success `out_net` owns a new handle and
/// `out_summary` (optional) receives the run summary.
///
/// # Safety
/// All non-null pointers must be valid; `problem` and `options` must
/// outlive the call.
#[no_mangle]
pub unsafe extern "C" fn cpinn_train(
    problem: *const CpinnProblem,
    options: *const CpinnTrainOptions,
    out_net: *mut *mut CpinnNetwork,
    out_summary: *mut CpinnRunSummary,
) -> CpinnStatus {
    if problem.is_null() || options.is_null() || out_net.is_null() {
        return CpinnStatus::NullPointer;
    }
    guard(|| {
        let cfg = match (*options).to_config() {
            Ok(c) => c,
            Err(e) => return status_of(&e),
        };
        match experiments::train(&(*problem).inner, &cfg) {
            Ok((net, report)) => {
                if !out_summary.is_null() {
                    *out_summary = CpinnRunSummary {
                        initial_loss: report.initial_loss,
                        final_loss: report.final_loss,
                        final_pinn_loss: report.final_pinn_loss,
                        final_cpinn_loss: report.final_cpinn_loss,
                        rel_l2_error_percent: report.rel_l2_error_percent,
                        wall_secs: report.wall_secs,
                    };
                }
                *out_net = Box::into_raw(Box::new(CpinnNetwork { inner: net }));
                CpinnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Release a network handle; a null pointer is a no-op.
///
/// # Safety
/// `net` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cpinn_network_free(net: *mut CpinnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of spatial dimensions of the network input.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpinn_network_dim(
    net: *const CpinnNetwork,
    out: *mut usize,
) -> CpinnStatus {
    if net.is_null() || out.is_null() {
        return CpinnStatus::NullPointer;
    }
    *out = (*net).inner.d;
    CpinnStatus::Ok
}

/// Flat parameter count.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpinn_network_param_count(
    net: *const CpinnNetwork,
    out: *mut usize,
) -> CpinnStatus {
    if net.is_null() || out.is_null() {
        return CpinnStatus::NullPointer;
    }
    *out = (*net).inner.param_count();
    CpinnStatus::Ok
}

/// Evaluate the network at `(x[0..d], t)`.
///
/// # Safety
/// `x` must point to `d` readable doubles; `net` must be live.
#[no_mangle]
pub unsafe extern "C" fn cpinn_network_eval(
    net: *const CpinnNetwork,
    x: *const f64,
    d: usize,
    t: f64,
    out: *mut f64,
) -> CpinnStatus {
    if net.is_null() || x.is_null() || out.is_null() {
        return CpinnStatus::NullPointer;
    }
    let net = &(*net).inner;
    if d != net.d {
        set_error("coordinate count does not match the network dimension");
        return CpinnStatus::InvalidArgument;
    }
    guard(|| {
        *out = net.forward(std::slice::from_raw_parts(x, d), t);
        CpinnStatus::Ok
    })
}

/// Evaluate value, spatial gradient (`out_grad[0..d]`), time derivative,
/// and spatial Laplacian at `(x[0..d], t)`. `out_grad` may be null.
///
/// # Safety
/// `x` must point to `d` readable doubles and `out_grad`, when non-null,
/// to `d` writable ones.
#[no_mangle]
pub unsafe extern "C" fn cpinn_network_jet(
    net: *const CpinnNetwork,
    x: *const f64,
    d: usize,
    t: f64,
    out_value: *mut f64,
    out_grad: *mut f64,
    out_dt: *mut f64,
    out_laplacian: *mut f64,
) -> CpinnStatus {
    if net.is_null() || x.is_null() {
        return CpinnStatus::NullPointer;
    }
    let net = &(*net).inner;
    if d != net.d {
        set_error("coordinate count does not match the network dimension");
        return CpinnStatus::InvalidArgument;
    }
    guard(|| {
        let jet = net.jet(std::slice::from_raw_parts(x, d), t);
        if !out_value.is_null() {
            *out_value = jet.value;
        }
        if !out_grad.is_null() {
            std::ptr::copy_nonoverlapping(jet.grad_x.as_ptr(), out_grad, d);
        }
        if !out_dt.is_null() {
            *out_dt = jet.dt;
        }
        if !out_laplacian.is_null() {
            *out_laplacian = jet.laplacian;
        }
        CpinnStatus::Ok
    })
}

/// Relative L2 error (percent) of the network against the problem's
/// exact solution, midpoint quadrature with `probe_res` points per axis.
///
/// # Safety
/// `net` and `problem` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpinn_relative_l2_error(
    net: *const CpinnNetwork,
    problem: *const CpinnProblem,
    probe_res: usize,
    t_final: f64,
    out: *mut f64,
) -> CpinnStatus {
    if net.is_null() || problem.is_null() || out.is_null() {
        return CpinnStatus::NullPointer;
    }
    if probe_res < 2 || t_final <= 0.0 || t_final.is_nan() {
        set_error("probe_res must be >= 2 and t_final positive");
        return CpinnStatus::InvalidArgument;
    }
    guard(|| {
        *out = experiments::relative_l2_error(
            &(*net).inner,
            (*problem).inner.solution.as_ref(),
            t_final,
            probe_res,
        );
        CpinnStatus::Ok
    })
}

/// Evaluate both squared losses of the network on the problem's `N`-mesh
/// data. Either out-pointer may be null.
///
/// # Safety
/// `net` and `problem` must be live handles; non-null out-pointers must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn cpinn_losses(
    net: *const CpinnNetwork,
    problem: *const CpinnProblem,
    n: usize,
    out_pinn: *mut f64,
    out_cpinn: *mut f64,
) -> CpinnStatus {
    if net.is_null() || problem.is_null() {
        return CpinnStatus::NullPointer;
    }
    guard(|| {
        let data = match (*problem).inner.data(n, 1.0) {
            Ok(d) => d,
            Err(e) => return status_of(&e),
        };
        if !out_pinn.is_null() {
            match cpinn::loss::pinn_loss(&(*net).inner, &data) {
                Ok(b) => *out_pinn = b.total,
                Err(e) => return status_of(&e),
            }
        }
        if !out_cpinn.is_null() {
            let gamma = match cpinn::loss::default_gamma(2, data.tensor.m_tilde) {
                Ok(g) => g,
                Err(e) => return status_of(&e),
            };
            match cpinn::loss::cpinn_loss_sq(&(*net).inner, &data, gamma) {
                Ok(b) => *out_cpinn = b.total,
                Err(e) => return status_of(&e),
            }
        }
        CpinnStatus::Ok
    })
}

/// Write the checkpoint (header plus little-endian parameter vector).
///
/// # Safety
/// `path` must be a NUL-terminated string; `net` must be live.
#[no_mangle]
pub unsafe extern "C" fn cpinn_network_save(
    net: *const CpinnNetwork,
    path: *const c_char,
) -> CpinnStatus {
    if net.is_null() || path.is_null() {
        return CpinnStatus::NullPointer;
    }
    guard(|| {
        let path = match cstr_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match (*net).inner.save(&path) {
            Ok(()) => CpinnStatus::Ok,
            Err(e) => status_of(&e),
        }
    })
}

/// Load a checkpoint into a new network handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cpinn_network_load(
    path: *const c_char,
    out: *mut *mut CpinnNetwork,
) -> CpinnStatus {
    if path.is_null() || out.is_null() {
        return CpinnStatus::NullPointer;
    }
    guard(|| {
        let path = match cstr_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match MlpNetwork::load(&path) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(CpinnNetwork { inner: net }));
                CpinnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

unsafe fn cstr_path(path: *const c_char) -> Result<PathBuf, CpinnStatus> {
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(CpinnStatus::InvalidArgument)
        }
    }
}
