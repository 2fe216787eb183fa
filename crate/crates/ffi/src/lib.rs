//! C ABI for the `convflow` library.
//!
//! Models are opaque [`ConvflowModel`] handles created by one of the
//! constructors and released with [`convflow_model_free`]. Every fallible
//! function returns a [`ConvflowStatus`]; on failure a description is
//! available from [`convflow_last_error_message`] on the same thread.
//! Array arguments are `(pointer, length)` pairs and lengths are checked
//! against the model's dimensions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use convflow::config::{Checkpoint, ModelConfig};
use convflow::density::{log_density, sample};
use convflow::math::RngState;
use convflow::objectives::{train, Energy};
use convflow::{Error, FlowStack};

/// Seed stream used to initialize parameters of newly created models.
pub const CONVFLOW_INIT_STREAM: u64 = 0;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotInvertible = 4,
    NoConvergence = 5,
    Inconsistent = 6,
    Diverged = 7,
    Io = 8,
    Format = 9,
    InvariantViolation = 10,
    Panic = 11,
}

/// Opaque model handle.
pub struct ConvflowModel {
    config: ModelConfig,
    stack: FlowStack,
    energy: Option<Energy>,
    final_loss: Option<f64>,
}

impl ConvflowModel {
    fn checkpoint(&self) -> convflow::Result<Checkpoint> {
        Checkpoint::from_stack(&self.config, &self.stack, self.energy, self.final_loss)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn status_of(e: &Error) -> ConvflowStatus {
    match e {
        Error::DimensionMismatch { .. } => ConvflowStatus::DimensionMismatch,
        Error::InvalidArgument(_) => ConvflowStatus::InvalidArgument,
        Error::InvariantViolation { .. } => ConvflowStatus::InvariantViolation,
        Error::NoConvergence { .. } => ConvflowStatus::NoConvergence,
        Error::NotInvertible(_) => ConvflowStatus::NotInvertible,
        Error::Inconsistent { .. } => ConvflowStatus::Inconsistent,
        Error::Diverged { .. } => ConvflowStatus::Diverged,
        Error::Io { .. } => ConvflowStatus::Io,
        Error::Format { .. } => ConvflowStatus::Format,
    }
}

struct Fail(ConvflowStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ConvflowStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Fail {
    Fail(ConvflowStatus::InvalidArgument, message.into())
}

/// Runs `body`, converting errors and panics into a status code.
fn guard<F>(body: F) -> ConvflowStatus
where
    F: FnOnce() -> Result<(), Fail>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ConvflowStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            ConvflowStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn model_ref<'a>(m: *const ConvflowModel) -> Result<&'a ConvflowModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn model_mut<'a>(m: *mut ConvflowModel) -> Result<&'a mut ConvflowModel, Fail> {
    m.as_mut().ok_or_else(|| null("model"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len != expected {
        return Err(Fail(ConvflowStatus::DimensionMismatch, format!("{what}: expected length {expected}, got {len}")));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len != expected {
        return Err(Fail(ConvflowStatus::DimensionMismatch, format!("{what}: expected length {expected}, got {len}")));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn store_model(out: *mut *mut ConvflowModel, model: ConvflowModel) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(model));
    Ok(())
}

fn new_model(config: ModelConfig, seed: u64) -> Result<ConvflowModel, Fail> {
    let mut rng = RngState::with_stream(seed, CONVFLOW_INIT_STREAM);
    let stack = config.init_stack(&mut rng)?;
    Ok(ConvflowModel { config, stack, energy: None, final_loss: None })
}

/// Message describing the most recent failure on this thread, or NULL if the
/// last call succeeded. The pointer stays valid until the next call into
/// this library on the same thread.
#[no_mangle]
pub extern "C" fn convflow_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a freshly initialized model from a named preset
/// (`synthetic-k8`, `dense-50`, `dense-100`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_from_preset(
    name: *const c_char,
    seed: u64,
    out: *mut *mut ConvflowModel,
) -> ConvflowStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let config = ModelConfig::preset(name)?;
        store_model(out, new_model(config, seed)?)
    })
}

/// Creates a freshly initialized model from a JSON model config document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_from_config_json(
    json: *const c_char,
    seed: u64,
    out: *mut *mut ConvflowModel,
) -> ConvflowStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let config = ModelConfig::from_json(json)?;
        store_model(out, new_model(config, seed)?)
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_load(path: *const c_char, out: *mut *mut ConvflowModel) -> ConvflowStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let checkpoint = Checkpoint::load(path)?;
        let stack = checkpoint.stack()?;
        let model = ConvflowModel {
            config: checkpoint.config,
            stack,
            energy: checkpoint.energy,
            final_loss: checkpoint.final_loss,
        };
        store_model(out, model)
    })
}

/// Writes the model as a checkpoint file.
///
/// # Safety
/// `model` must come from this library and `path` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_save(model: *const ConvflowModel, path: *const c_char) -> ConvflowStatus {
    guard(|| {
        let model = model_ref(model)?;
        let path = str_arg(path, "path")?;
        model.checkpoint()?.save(path)?;
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_free(model: *mut ConvflowModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension of the model, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_dim(model: *const ConvflowModel) -> usize {
    model.as_ref().map_or(0, |m| m.stack.dim())
}

/// Number of parameters, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_param_count(model: *const ConvflowModel) -> usize {
    model.as_ref().map_or(0, |m| m.stack.param_count())
}

/// Copies the flat parameter vector into `out` (length `param_count`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_get_params(
    model: *const ConvflowModel,
    out: *mut f64,
    len: usize,
) -> ConvflowStatus {
    guard(|| {
        let model = model_ref(model)?;
        let out = slice_out(out, len, model.stack.param_count(), "out")?;
        out.copy_from_slice(&model.stack.param_vector());
        Ok(())
    })
}

/// Replaces the flat parameter vector (length `param_count`).
///
/// # Safety
/// `params` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_set_params(
    model: *mut ConvflowModel,
    params: *const f64,
    len: usize,
) -> ConvflowStatus {
    guard(|| {
        let model = model_mut(model)?;
        let params = slice_arg(params, len, model.stack.param_count(), "params")?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        model.stack.load_params(params)?;
        Ok(())
    })
}

/// Maps `z` (length `dim`) to `out` and writes the total log-determinant.
///
/// # Safety
/// `z` and `out` must point to `len` doubles; `logdet` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_forward(
    model: *const ConvflowModel,
    z: *const f64,
    len: usize,
    out: *mut f64,
    logdet: *mut f64,
) -> ConvflowStatus {
    guard(|| {
        let model = model_ref(model)?;
        let d = model.stack.dim();
        let z = slice_arg(z, len, d, "z")?;
        let out = slice_out(out, len, d, "out")?;
        let (x, ld) = model.stack.transform(z)?;
        out.copy_from_slice(&x);
        if let Some(l) = logdet.as_mut() {
            *l = ld;
        }
        Ok(())
    })
}

/// Inverts the model at `x` (length `dim`). Fails with `NotInvertible` for
/// models containing planar or IAF layers.
///
/// # Safety
/// `x` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_inverse(
    model: *const ConvflowModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> ConvflowStatus {
    guard(|| {
        let model = model_ref(model)?;
        let d = model.stack.dim();
        let x = slice_arg(x, len, d, "x")?;
        let out = slice_out(out, len, d, "out")?;
        out.copy_from_slice(&model.stack.inverse(x)?);
        Ok(())
    })
}

/// Exact log-density of the model at `x` (length `dim`).
///
/// # Safety
/// `x` must point to `len` doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_log_density(
    model: *const ConvflowModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> ConvflowStatus {
    guard(|| {
        let model = model_ref(model)?;
        let x = slice_arg(x, len, model.stack.dim(), "x")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = log_density(&model.stack, x)?;
        Ok(())
    })
}

/// Draws `n` samples into `out`, row-major `n × dim` (`len = n · dim`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_sample(
    model: *const ConvflowModel,
    seed: u64,
    n: usize,
    out: *mut f64,
    len: usize,
) -> ConvflowStatus {
    guard(|| {
        let model = model_ref(model)?;
        let d = model.stack.dim();
        let total = n.checked_mul(d).ok_or_else(|| invalid("sample buffer size overflows"))?;
        let out = slice_out(out, len, total, "out")?;
        let draws = sample(&model.stack, &mut RngState::new(seed), n)?;
        for (row, s) in out.chunks_exact_mut(d).zip(&draws) {
            row.copy_from_slice(s);
        }
        Ok(())
    })
}

/// Trains the model in place against energy `"u1"` or `"u2"` (2-d models
/// only) and writes the last batch loss to `final_loss` (may be NULL).
/// Parameters are left unchanged if training fails.
///
/// # Safety
/// `energy` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn convflow_model_train(
    model: *mut ConvflowModel,
    energy: *const c_char,
    steps: usize,
    batch: usize,
    lr: f64,
    seed: u64,
    final_loss: *mut f64,
) -> ConvflowStatus {
    guard(|| {
        let model = model_mut(model)?;
        let energy: Energy = str_arg(energy, "energy")?.parse().map_err(invalid)?;
        let mut training = model.config.training;
        training.steps = steps;
        training.batch = batch;
        training.lr = lr;
        training.seed = seed;
        let cfg = training.to_train_config(steps.max(1));
        let mut stack = model.stack.clone();
        let history = train(&mut stack, energy, &cfg)?;
        let last = history.losses.last().copied();
        model.stack = stack;
        model.config.training = training;
        model.energy = Some(energy);
        model.final_loss = last;
        if let (Some(out), Some(l)) = (final_loss.as_mut(), last) {
            *out = l;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_error_has_a_status() {
        let e = Error::NotInvertible("planar");
        assert_eq!(status_of(&e), ConvflowStatus::NotInvertible);
        let e = Error::Diverged { step: 3, loss: f64::NAN };
        assert_eq!(status_of(&e), ConvflowStatus::Diverged);
    }

    #[test]
    fn guard_catches_panics() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, ConvflowStatus::Panic);
        assert!(!convflow_last_error_message().is_null());
        assert_eq!(guard(|| Ok(())), ConvflowStatus::Ok);
        assert!(convflow_last_error_message().is_null());
    }
}
