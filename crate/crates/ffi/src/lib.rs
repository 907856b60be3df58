//! C ABI over the `cdrm` crate.
//!
//! Models and datasets cross the boundary as opaque pointers created by a
//! `*_load`, `*_gen_*` or `*_train` call and released with the matching
//! `*_free`. Every fallible call returns a [`CdrmStatus`]; on failure the
//! message is available from [`cdrm_last_error`] on the same thread until the
//! next failing call. Panics are caught and reported as
//! `CDRM_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cdrm::data::{gen_toy, ToyConfig};
use cdrm::io::{load_model, save_model, Provenance};
use cdrm::kde::{BandwidthRule, KdeStats};
use cdrm::train::{init_model, train, NegativeSampler, TrainConfig};
use cdrm::{infer, CdrmError, InferenceConfig, TransitionDataset};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdrmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    InvalidConfig = 4,
    TrainingDiverged = 5,
    SamplingFailed = 6,
    UnpreparedModel = 7,
    DegenerateDataset = 8,
    OutOfBounds = 9,
    Io = 10,
    Parse = 11,
    UnsupportedVersion = 12,
    SelfCheck = 13,
    BufferTooSmall = 14,
    Internal = 99,
}

impl From<&CdrmError> for CdrmStatus {
    fn from(e: &CdrmError) -> Self {
        match e {
            CdrmError::InvalidInput(_) | CdrmError::UndefinedMetric(_) | CdrmError::EmptyValidSet => {
                CdrmStatus::InvalidInput
            }
            CdrmError::DimensionMismatch { .. } => CdrmStatus::DimensionMismatch,
            CdrmError::InvalidConfig(_) => CdrmStatus::InvalidConfig,
            CdrmError::TrainingDivergence { .. } => CdrmStatus::TrainingDiverged,
            CdrmError::SamplingFailure { .. } => CdrmStatus::SamplingFailed,
            CdrmError::UnpreparedModel => CdrmStatus::UnpreparedModel,
            CdrmError::DegenerateDataset(_) => CdrmStatus::DegenerateDataset,
            CdrmError::OutOfBounds { .. } => CdrmStatus::OutOfBounds,
            CdrmError::Io { .. } => CdrmStatus::Io,
            CdrmError::Parse { .. } | CdrmError::Json(_) => CdrmStatus::Parse,
            CdrmError::UnsupportedVersion { .. } => CdrmStatus::UnsupportedVersion,
            CdrmError::SelfCheck(_) => CdrmStatus::SelfCheck,
        }
    }
}

/// Trained model with its KDE statistics.
pub struct CdrmModel(cdrm::CdrmModel);

/// Transition dataset.
pub struct CdrmDataset(TransitionDataset);

/// Training knobs. `batches_per_epoch = 0` means one pass over the data and a
/// negative `final_learning_rate` keeps the rate constant.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CdrmTrainConfig {
    pub epochs: usize,
    pub positive_batch: usize,
    pub negative_batch: usize,
    pub batches_per_epoch: usize,
    pub langevin_steps: usize,
    pub langevin_step_size: f64,
    pub langevin_noise_scale: f64,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    pub stability_eps: f64,
    pub seed: u64,
}

/// Inference knobs.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CdrmInferenceConfig {
    pub n_samples: usize,
    pub steps: usize,
    pub step_size: f64,
    pub noise_scale: f64,
    pub alpha: f64,
    pub dedup_fraction: f64,
}

/// Inference outcome. The prediction itself goes to a caller buffer.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CdrmInferenceResult {
    pub has_prediction: bool,
    pub eu: f64,
    pub has_au: bool,
    pub au: f64,
    pub valid_count: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CdrmToyConfig {
    pub n_per_region: usize,
    pub sigma_eta: f64,
    pub multimodal: bool,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CdrmStatus, String);

impl From<CdrmError> for Failure {
    fn from(e: CdrmError) -> Self {
        Failure(CdrmStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CdrmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CdrmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdrmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            CdrmStatus::Internal
        }
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure(CdrmStatus::InvalidInput, "path is not UTF-8".into()))
}

unsafe fn slice_arg<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn out_arg<'a, T>(out: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    out.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failing call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cdrm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdrm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn cdrm_train_config_default() -> CdrmTrainConfig {
    let t = TrainConfig::default();
    CdrmTrainConfig {
        epochs: t.epochs,
        positive_batch: t.positive_batch,
        negative_batch: t.negative_batch,
        batches_per_epoch: t.batches_per_epoch.unwrap_or(0),
        langevin_steps: t.langevin.steps,
        langevin_step_size: t.langevin.step_size,
        langevin_noise_scale: t.langevin.noise_scale,
        learning_rate: t.learning_rate,
        final_learning_rate: t.final_learning_rate.unwrap_or(-1.0),
        stability_eps: t.stability_eps,
        seed: t.seed,
    }
}

#[no_mangle]
pub extern "C" fn cdrm_inference_config_default() -> CdrmInferenceConfig {
    let c = InferenceConfig::default();
    CdrmInferenceConfig {
        n_samples: c.n_samples,
        steps: c.steps,
        step_size: c.step_size,
        noise_scale: c.noise_scale,
        alpha: c.alpha,
        dedup_fraction: c.dedup_fraction,
    }
}

#[no_mangle]
pub extern "C" fn cdrm_toy_config_default() -> CdrmToyConfig {
    let c = ToyConfig::default();
    CdrmToyConfig {
        n_per_region: c.n_per_region,
        sigma_eta: c.sigma_eta,
        multimodal: c.multimodal,
        seed: c.seed,
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cdrm_dataset_load_csv(path: *const c_char, out: *mut *mut CdrmDataset) -> CdrmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = TransitionDataset::load_csv(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(CdrmDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must point to a valid config and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cdrm_dataset_gen_toy(cfg: *const CdrmToyConfig, out: *mut *mut CdrmDataset) -> CdrmStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out_arg(out, "out")?;
        let ds = gen_toy(&ToyConfig {
            n_per_region: cfg.n_per_region,
            sigma_eta: cfg.sigma_eta,
            multimodal: cfg.multimodal,
            seed: cfg.seed,
        })?;
        *out = Box::into_raw(Box::new(CdrmDataset(ds)));
        Ok(())
    })
}

/// Number of tuples, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn cdrm_dataset_len(ds: *const CdrmDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdrm_dataset_free(ds: *mut CdrmDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains a model with hidden widths `hidden[0..n_hidden]` and fits its KDE
/// statistics with the median bandwidth rule.
///
/// # Safety
/// `ds` and `cfg` must be valid, `hidden` must hold `n_hidden` entries, and
/// `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cdrm_model_train(
    ds: *const CdrmDataset,
    cfg: *const CdrmTrainConfig,
    hidden: *const usize,
    n_hidden: usize,
    out: *mut *mut CdrmModel,
) -> CdrmStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out_arg(out, "out")?;
        let hidden = if n_hidden == 0 {
            &[][..]
        } else if hidden.is_null() {
            return Err(null("hidden"));
        } else {
            std::slice::from_raw_parts(hidden, n_hidden)
        };
        let tc = TrainConfig {
            epochs: c.epochs,
            positive_batch: c.positive_batch,
            negative_batch: c.negative_batch,
            batches_per_epoch: (c.batches_per_epoch > 0).then_some(c.batches_per_epoch),
            langevin: NegativeSampler {
                steps: c.langevin_steps,
                step_size: c.langevin_step_size,
                noise_scale: c.langevin_noise_scale,
            },
            learning_rate: c.learning_rate,
            final_learning_rate: (c.final_learning_rate >= 0.0).then_some(c.final_learning_rate),
            stability_eps: c.stability_eps,
            seed: c.seed,
        };
        let mut model = init_model(ds, hidden, c.seed)?;
        train(&mut model, ds, &tc)?;
        model.set_kde(KdeStats::fit(&ds.inputs(), BandwidthRule::Median, c.seed)?)?;
        *out = Box::into_raw(Box::new(CdrmModel(model)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdrm_model_load(path: *const c_char, out: *mut *mut CdrmModel) -> CdrmStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (model, _) = load_model(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(CdrmModel(model)));
        Ok(())
    })
}

/// Saves with an empty provenance record (`seed` and `epochs` as given).
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cdrm_model_save(
    model: *const CdrmModel,
    path: *const c_char,
    seed: u64,
    epochs: usize,
) -> CdrmStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        save_model(path_arg(path)?, model, Provenance::new("{}", seed, epochs))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdrm_model_free(model: *mut CdrmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be live; each out pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn cdrm_model_dims(
    model: *const CdrmModel,
    d_s: *mut usize,
    d_a: *mut usize,
    d_out: *mut usize,
) -> CdrmStatus {
    guard(|| {
        let dims = model.as_ref().ok_or_else(|| null("model"))?.0.dims();
        for (p, v) in [(d_s, dims.d_s), (d_a, dims.d_a), (d_out, dims.d_out)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Score of one joint tuple `(s, a, s')` of length `len`.
///
/// # Safety
/// `joint` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cdrm_model_score(
    model: *const CdrmModel,
    joint: *const f64,
    len: usize,
    out: *mut f64,
) -> CdrmStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let joint = slice_arg(joint, len, "joint")?;
        let out = out_arg(out, "out")?;
        *out = model.score_joint(joint)?;
        Ok(())
    })
}

/// Runs inference for `(s, a)` given as `input[0..len]`. When a prediction
/// exists it is written to `prediction[0..d_out]`; `prediction_len` must be at
/// least `d_out`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `cfg` may be NULL for
/// defaults.
#[no_mangle]
pub unsafe extern "C" fn cdrm_model_infer(
    model: *const CdrmModel,
    input: *const f64,
    len: usize,
    cfg: *const CdrmInferenceConfig,
    seed: u64,
    result: *mut CdrmInferenceResult,
    prediction: *mut f64,
    prediction_len: usize,
) -> CdrmStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let input = slice_arg(input, len, "input")?;
        let result = out_arg(result, "result")?;
        let d_out = model.dims().d_out;
        if prediction.is_null() || prediction_len < d_out {
            return Err(Failure(
                CdrmStatus::BufferTooSmall,
                format!("prediction buffer needs {d_out} entries"),
            ));
        }
        let c = cfg.as_ref().copied().unwrap_or_else(|| cdrm_inference_config_default());
        let ic = InferenceConfig {
            n_samples: c.n_samples,
            steps: c.steps,
            step_size: c.step_size,
            noise_scale: c.noise_scale,
            alpha: c.alpha,
            dedup_fraction: c.dedup_fraction,
        };
        let r = infer(model, input, &ic, seed)?;
        if let Some(p) = &r.prediction {
            std::slice::from_raw_parts_mut(prediction, d_out).copy_from_slice(p);
        }
        *result = CdrmInferenceResult {
            has_prediction: r.prediction.is_some(),
            eu: r.eu,
            has_au: r.au.is_some(),
            au: r.au.unwrap_or(0.0),
            valid_count: r.valid_count,
        };
        Ok(())
    })
}
