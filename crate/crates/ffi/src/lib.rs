//! C ABI over the `xdeepfm` crate.
//!
//! Every fallible call returns an [`XdfmStatus`]; on failure a message is
//! kept per thread and read with [`xdfm_last_error`]. Models are opaque
//! [`XdfmModel`] handles owned by the caller and released with
//! [`xdfm_model_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use xdeepfm::data::Instance;
use xdeepfm::model::Checkpoint;
use xdeepfm::oracle::{analytic_gradient, run_check, VERIFY_CHECKS};
use xdeepfm::{Error, Model, ModelSpec, Preset};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XdfmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Dimension = 5,
    Lookup = 6,
    Metric = 7,
    Internal = 8,
    Panic = 9,
}

/// A model: spec, parameters and, when loaded from a checkpoint written by
/// training, the feature vocabulary.
pub struct XdfmModel {
    ckpt: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(XdfmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => XdfmStatus::Io,
            Error::Checkpoint(_) => XdfmStatus::Checkpoint,
            Error::Dimension(_) => XdfmStatus::Dimension,
            Error::Lookup(_) => XdfmStatus::Lookup,
            Error::Metric(_) => XdfmStatus::Metric,
            Error::Argument(_) | Error::Config(_) => XdfmStatus::InvalidArgument,
            _ => XdfmStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(XdfmStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(XdfmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure or panic, and returns its status.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> XdfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XdfmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            XdfmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn model_ref<'a>(m: *const XdfmModel) -> Result<&'a XdfmModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xdfm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn xdfm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a freshly initialized model from a preset name (`lr`, `fm`,
/// `dnn`, `cin`, `crossnet`, `dcn`, `deepfm`, `xdeepfm`) with default
/// hyper-parameters.
///
/// # Safety
/// `preset` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_new(
    preset: *const c_char,
    num_fields: usize,
    num_features: usize,
    seed: u64,
    out: *mut *mut XdfmModel,
) -> XdfmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(preset, "preset")?;
        let preset: Preset = name.parse().map_err(|e: String| invalid(e))?;
        let spec = ModelSpec::preset(preset, num_fields, num_features);
        spec.validate()?;
        let model = Model::init(spec, xdeepfm::embedding::INIT_STD, seed)?;
        let handle = Box::new(XdfmModel {
            ckpt: Checkpoint {
                spec: model.spec,
                params: model.params,
                seed,
                schema: None,
            },
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// Loads a checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_load(path: *const c_char, out: *mut *mut XdfmModel) -> XdfmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let ckpt = Checkpoint::load(&path)?;
        *out = Box::into_raw(Box::new(XdfmModel { ckpt }));
        Ok(())
    })
}

/// Writes the model as a checkpoint.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_save(model: *const XdfmModel, path: *const c_char) -> XdfmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        m.ckpt.save(&path)?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_free(model: *mut XdfmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of fields `m`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_num_fields(model: *const XdfmModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.spec.num_fields)
}

/// Size of the feature id space, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_num_features(model: *const XdfmModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.spec.num_features)
}

/// Total trainable and frozen parameter count, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_num_parameters(model: *const XdfmModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.params.num_parameters())
}

/// Feature id of a raw value in `field`; unseen values map to the field's
/// out-of-vocabulary id. Fails with `LOOKUP` when the model carries no
/// vocabulary.
///
/// # Safety
/// `model` must come from this library; `value` must be NUL-terminated;
/// `out_id` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_feature_id(
    model: *const XdfmModel,
    field: usize,
    value: *const c_char,
    out_id: *mut usize,
) -> XdfmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let value = str_arg(value, "value")?;
        if out_id.is_null() {
            return Err(null("out_id"));
        }
        let schema = m.ckpt.schema.as_ref().ok_or_else(|| {
            Failure(XdfmStatus::Lookup, "model carries no feature vocabulary".into())
        })?;
        if field >= schema.num_fields() {
            return Err(invalid(format!(
                "field {field} out of range for {} fields",
                schema.num_fields()
            )));
        }
        *out_id = schema.lookup(field, value);
        Ok(())
    })
}

/// Scores `n` instances given in compressed sparse form. With `m` fields,
/// `offsets` has `n·m + 1` entries and the ids active in field `f` of
/// instance `i` are `ids[offsets[i·m + f] .. offsets[i·m + f + 1]]`.
/// Writes `n` click probabilities to `out`.
///
/// # Safety
/// `offsets`, `ids` and `out` must point to arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn xdfm_model_predict(
    model: *const XdfmModel,
    n: usize,
    offsets: *const usize,
    ids: *const usize,
    num_ids: usize,
    out: *mut f64,
) -> XdfmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let fields = m.ckpt.spec.num_fields;
        let slots = n
            .checked_mul(fields)
            .and_then(|s| s.checked_add(1))
            .ok_or_else(|| invalid("instance count overflows"))?;
        let offsets = slice_arg(offsets, slots, "offsets")?;
        let ids = slice_arg(ids, num_ids, "ids")?;
        if n > 0 && out.is_null() {
            return Err(null("out"));
        }
        if offsets[0] != 0 || offsets[n * fields] != num_ids {
            return Err(invalid(format!(
                "offsets must run from 0 to num_ids ({num_ids})"
            )));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("offsets must be non-decreasing"));
        }
        let instances: Vec<Instance> = (0..n)
            .map(|i| Instance {
                label: 0,
                fields: (0..fields)
                    .map(|f| ids[offsets[i * fields + f]..offsets[i * fields + f + 1]].to_vec())
                    .collect(),
            })
            .collect();
        let model = Model {
            spec: m.ckpt.spec.clone(),
            params: m.ckpt.params.clone(),
        };
        let scores = model.predict_all(&instances)?;
        if n > 0 {
            slice::from_raw_parts_mut(out, n).copy_from_slice(&scores);
        }
        Ok(())
    })
}

/// Area under the ROC curve, ties counted one half.
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xdfm_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> XdfmStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let l = slice_arg(labels, n, "labels")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = xdeepfm::metrics::auc(s, l)?;
        Ok(())
    })
}

/// Mean binary cross-entropy with predictions clamped away from 0 and 1.
///
/// # Safety
/// `preds` and `labels` must point to `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xdfm_logloss(
    preds: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> XdfmStatus {
    guard(|| {
        let p = slice_arg(preds, n, "preds")?;
        let l = slice_arg(labels, n, "labels")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = xdeepfm::model::logloss(p, l)?;
        Ok(())
    })
}

/// Runs the built-in verification checks: a comma-separated subset of
/// `collinearity`, `polynomial`, `params`, `fm_reduction`, `gradients`, or
/// all of them when `checks` is null. Sets `*passed` to 1 when every check
/// passes and 0 otherwise.
///
/// # Safety
/// `checks` must be null or NUL-terminated; `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xdfm_verify(checks: *const c_char, seed: u64, passed: *mut c_int) -> XdfmStatus {
    guard(|| {
        if passed.is_null() {
            return Err(null("passed"));
        }
        let names: Vec<String> = if checks.is_null() {
            VERIFY_CHECKS.iter().map(|s| s.to_string()).collect()
        } else {
            str_arg(checks, "checks")?
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        };
        if let Some(bad) = names.iter().find(|n| !VERIFY_CHECKS.contains(&n.as_str())) {
            return Err(invalid(format!("unknown check `{bad}`")));
        }
        let mut ok = true;
        let mut failed = Vec::new();
        for name in &names {
            let report = run_check(name, seed, analytic_gradient)?;
            if !report.passed {
                failed.push(name.clone());
            }
            ok &= report.passed;
        }
        if !ok {
            set_error(format!("failed checks: {}", failed.join(", ")));
        }
        *passed = c_int::from(ok);
        Ok(())
    })
}
