//! C ABI over `trafo-nn`.
//!
//! Every function returns a [`TrafoStatus`]; on failure the message is kept per thread and
//! can be copied out with [`trafo_last_error_message`]. Handles are opaque and must be
//! released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use trafo_nn::env::{self, CoreModel, Env, EnvConfig, RemanentFlux};
use trafo_nn::nn::checkpoint::load_checkpoint;
use trafo_nn::nn::Network;
use trafo_nn::{Error, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    InvalidState = 4,
    Integrity = 5,
    Io = 6,
    Divergence = 7,
    Panic = 8,
}

/// Loaded network checkpoint.
pub struct TrafoNetwork {
    net: Network,
    input_len: usize,
    output_len: usize,
}

/// Energization environment with the default core model.
pub struct TrafoEnv {
    env: Env,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> TrafoStatus {
    match e {
        Error::Dimension(_) | Error::Length(_) => TrafoStatus::Dimension,
        Error::Validation(_) | Error::Config(_) => TrafoStatus::InvalidArgument,
        Error::State(_) => TrafoStatus::InvalidState,
        Error::Integrity { .. } | Error::Version { .. } => TrafoStatus::Integrity,
        Error::Io(_) => TrafoStatus::Io,
        Error::Divergence(_) => TrafoStatus::Divergence,
    }
}

fn guard<F: FnOnce() -> Result<(), (TrafoStatus, String)>>(f: F) -> TrafoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrafoStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            TrafoStatus::Panic
        }
    }
}

fn lift(e: Error) -> (TrafoStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TrafoStatus, String) {
    (TrafoStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_flux(phi: *const f64) -> Result<RemanentFlux, (TrafoStatus, String)> {
    if phi.is_null() {
        return Err(null("phi"));
    }
    let p = std::slice::from_raw_parts(phi, 3);
    RemanentFlux::new([p[0], p[1], p[2]]).map_err(lift)
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated, truncated
/// to `len - 1` bytes). Returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn trafo_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a checkpoint file. On success `*out` owns the network.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trafo_network_load(path: *const c_char, out: *mut *mut TrafoNetwork) -> TrafoStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (TrafoStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let net = load_checkpoint(Path::new(path)).map_err(lift)?;
        let shapes = net.spec().layer_shapes().map_err(lift)?;
        let input_len = net.spec().input_shape.iter().product();
        let output_len = shapes.last().map(|s| s.iter().product()).unwrap_or(0);
        *out = Box::into_raw(Box::new(TrafoNetwork {
            net,
            input_len,
            output_len,
        }));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from [`trafo_network_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trafo_network_free(net: *mut TrafoNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Per-sample input and output element counts.
///
/// # Safety
/// `net` must be a live handle; `input_len` and `output_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trafo_network_dims(
    net: *const TrafoNetwork,
    input_len: *mut usize,
    output_len: *mut usize,
) -> TrafoStatus {
    guard(|| {
        let n = net.as_ref().ok_or_else(|| null("net"))?;
        if input_len.is_null() || output_len.is_null() {
            return Err(null("output pointer"));
        }
        *input_len = n.input_len;
        *output_len = n.output_len;
        Ok(())
    })
}

/// Forward pass over `batch` samples laid out row-major in the network's input shape.
/// `output` receives `batch * output_len` values.
///
/// # Safety
/// `input` must hold `batch * input_len` doubles and `output` must have room for
/// `output_cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn trafo_network_predict(
    net: *const TrafoNetwork,
    input: *const f64,
    batch: usize,
    output: *mut f64,
    output_cap: usize,
) -> TrafoStatus {
    guard(|| {
        let n = net.as_ref().ok_or_else(|| null("net"))?;
        if input.is_null() || output.is_null() {
            return Err(null("buffer"));
        }
        if batch == 0 {
            return Err((TrafoStatus::InvalidArgument, "batch must be positive".into()));
        }
        let need = batch * n.output_len;
        if output_cap < need {
            return Err((
                TrafoStatus::Dimension,
                format!("output buffer holds {output_cap} values, need {need}"),
            ));
        }
        let data = std::slice::from_raw_parts(input, batch * n.input_len).to_vec();
        let mut shape = vec![batch];
        shape.extend_from_slice(&n.net.spec().input_shape);
        let x = Tensor::new(shape, data).map_err(lift)?;
        let y = n.net.predict(&x).map_err(lift)?;
        std::slice::from_raw_parts_mut(output, need).copy_from_slice(y.data());
        Ok(())
    })
}

/// Creates an environment with the default core model.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trafo_env_new(seed: u64, flux_max: f64, out: *mut *mut TrafoEnv) -> TrafoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = EnvConfig {
            flux_max,
            seed,
            ..EnvConfig::default()
        };
        let env = Env::new(CoreModel::default(), cfg).map_err(lift)?;
        *out = Box::into_raw(Box::new(TrafoEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from [`trafo_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trafo_env_free(env: *mut TrafoEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts the next episode and writes its remanent flux to `phi_out[0..3]`.
///
/// # Safety
/// `env` must be a live handle; `phi_out` must have room for 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn trafo_env_reset(env: *mut TrafoEnv, phi_out: *mut f64) -> TrafoStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        if phi_out.is_null() {
            return Err(null("phi_out"));
        }
        let phi = e.env.reset().phi();
        std::slice::from_raw_parts_mut(phi_out, 3).copy_from_slice(&phi);
        Ok(())
    })
}

/// Starts an episode from a given remanent flux.
///
/// # Safety
/// `env` must be a live handle; `phi` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn trafo_env_reset_to(env: *mut TrafoEnv, phi: *const f64) -> TrafoStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let f = read_flux(phi)?;
        e.env.reset_to(f);
        Ok(())
    })
}

/// Closes the breaker at `theta_deg`, ending the episode.
///
/// # Safety
/// `env` must be a live handle; `i_max` and `reward` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trafo_env_step(
    env: *mut TrafoEnv,
    theta_deg: f64,
    i_max: *mut f64,
    reward: *mut f64,
) -> TrafoStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        if i_max.is_null() || reward.is_null() {
            return Err(null("output pointer"));
        }
        let t = e.env.step(theta_deg).map_err(lift)?;
        *i_max = t.i_max;
        *reward = t.reward;
        Ok(())
    })
}

/// Peak inrush current (pu) for flux `phi[0..3]` and closing angle `theta_deg`, default core.
///
/// # Safety
/// `phi` must point to 3 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trafo_peak_inrush(phi: *const f64, theta_deg: f64, out: *mut f64) -> TrafoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !theta_deg.is_finite() {
            return Err((TrafoStatus::InvalidArgument, "theta_deg must be finite".into()));
        }
        let f = read_flux(phi)?;
        *out = env::peak_inrush(&f, theta_deg, &CoreModel::default());
        Ok(())
    })
}

/// Grid search for the closing angle with the lowest peak inrush, default core.
///
/// # Safety
/// `phi` must point to 3 doubles; `theta_deg` and `i_max` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trafo_oracle_best_angle(
    phi: *const f64,
    grid_deg: f64,
    theta_deg: *mut f64,
    i_max: *mut f64,
) -> TrafoStatus {
    guard(|| {
        if theta_deg.is_null() || i_max.is_null() {
            return Err(null("output pointer"));
        }
        let f = read_flux(phi)?;
        let (t, i) = env::oracle_best_angle(&f, &CoreModel::default(), grid_deg).map_err(lift)?;
        *theta_deg = t;
        *i_max = i;
        Ok(())
    })
}
