//! C ABI over `nids-core`.
//!
//! Every function returns a [`NidsStatus`]; on failure the message is kept
//! per thread and read back with [`nids_last_error`]. Models and matrices are
//! opaque handles that the caller releases with the matching `_free`.
//! Panics never cross the boundary: they are reported as `NIDS_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nids_core::autodiff::Tensor;
use nids_core::balance::{generate, make_balance_plan, GanModel};
use nids_core::classifier::{predict, ClassifierModel};
use nids_core::dataset::{ClassStats, FeatureMatrix};
use nids_core::explain::{kernel_shap, ClassProbability, FeatureSpace, ShapConfig, ShapMode};
use nids_core::metrics::EvalReport;
use nids_core::Error;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NidsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Contract = 4,
    Numeric = 5,
    Config = 6,
    Parse = 7,
    Format = 8,
    Io = 9,
    Training = 10,
    BufferTooSmall = 11,
    Panic = 12,
    Internal = 13,
}

/// Dense matrix of encoded rows with integer class labels.
pub struct NidsMatrix {
    inner: FeatureMatrix,
}

/// Trained classifier.
pub struct NidsClassifier {
    inner: ClassifierModel,
}

/// Trained conditional GAN.
pub struct NidsGan {
    inner: GanModel,
}

/// Support-weighted scores, all in [0, 1].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NidsScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

struct Fail(NidsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dimension(_) => NidsStatus::Dimension,
            Error::Contract(_) => NidsStatus::Contract,
            Error::Numeric(_) => NidsStatus::Numeric,
            Error::Config(_) | Error::Validation(_) => NidsStatus::Config,
            Error::Parse { .. } | Error::Mapping(_) => NidsStatus::Parse,
            Error::Format(_) | Error::Json(_) => NidsStatus::Format,
            Error::Io { .. } | Error::MissingArtifact { .. } => NidsStatus::Io,
            Error::Training { .. } => NidsStatus::Training,
            Error::Internal(_) => NidsStatus::Internal,
        };
        Fail(status, e.to_string())
    }
}

fn fail(status: NidsStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NidsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NidsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            NidsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| fail(NidsStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(NidsStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(NidsStatus::NullPointer, format!("`{what}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(NidsStatus::NullPointer, format!("`{what}` is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    let s = as_ref(p, "path").map(|c| CStr::from_ptr(c))?;
    let s = s.to_str().map_err(|_| fail(NidsStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn need_len(what: &str, got: usize, want: usize) -> Result<(), Fail> {
    if got < want {
        return Err(fail(NidsStatus::BufferTooSmall, format!("`{what}` holds {got} values, {want} needed")));
    }
    Ok(())
}

fn checked_mul(a: usize, b: usize) -> Result<usize, Fail> {
    a.checked_mul(b).ok_or_else(|| fail(NidsStatus::InvalidArgument, "size overflow"))
}

fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("class{c}")).collect()
}

fn labels_u32(labels: &[u32]) -> Vec<usize> {
    labels.iter().map(|&l| l as usize).collect()
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn nids_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn nids_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a matrix file written by the `nids` tool.
#[no_mangle]
pub unsafe extern "C" fn nids_matrix_load(path_utf8: *const c_char, matrix_out: *mut *mut NidsMatrix) -> NidsStatus {
    guard(|| {
        let slot = out(matrix_out, "matrix_out")?;
        *slot = ptr::null_mut();
        let (inner, _) = FeatureMatrix::load(&path(path_utf8)?)?;
        *slot = Box::into_raw(Box::new(NidsMatrix { inner }));
        Ok(())
    })
}

/// Builds a matrix from row-major `values` (`rows * cols`) and `labels` (`rows`).
/// Every label must be below `num_classes`.
#[no_mangle]
pub unsafe extern "C" fn nids_matrix_new(
    values: *const f64,
    labels: *const u32,
    rows: usize,
    cols: usize,
    num_classes: usize,
    matrix_out: *mut *mut NidsMatrix,
) -> NidsStatus {
    guard(|| {
        let slot = out(matrix_out, "matrix_out")?;
        *slot = ptr::null_mut();
        let v = slice(values, checked_mul(rows, cols)?, "values")?;
        let l = slice(labels, rows, "labels")?;
        let t = Tensor::new(vec![rows, cols], v.to_vec())?;
        let inner = FeatureMatrix::from_parts(t, labels_u32(l), class_names(num_classes))?;
        *slot = Box::into_raw(Box::new(NidsMatrix { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nids_matrix_save(matrix: *const NidsMatrix, path_utf8: *const c_char) -> NidsStatus {
    guard(|| Ok(as_ref(matrix, "matrix")?.inner.save(&path(path_utf8)?, None)?))
}

#[no_mangle]
pub unsafe extern "C" fn nids_matrix_shape(
    matrix: *const NidsMatrix,
    rows_out: *mut usize,
    cols_out: *mut usize,
    classes_out: *mut usize,
) -> NidsStatus {
    guard(|| {
        let m = &as_ref(matrix, "matrix")?.inner;
        *out(rows_out, "rows_out")? = m.rows();
        *out(cols_out, "cols_out")? = m.dim();
        *out(classes_out, "classes_out")? = m.num_classes();
        Ok(())
    })
}

/// Copies the row-major values into `buf` (at least `rows * cols`).
#[no_mangle]
pub unsafe extern "C" fn nids_matrix_values(matrix: *const NidsMatrix, buf: *mut f64, buf_len: usize) -> NidsStatus {
    guard(|| {
        let m = &as_ref(matrix, "matrix")?.inner;
        let data = m.values.data();
        need_len("buf", buf_len, data.len())?;
        slice_mut(buf, data.len(), "buf")?.copy_from_slice(data);
        Ok(())
    })
}

/// Copies the labels into `buf` (at least `rows`).
#[no_mangle]
pub unsafe extern "C" fn nids_matrix_labels(matrix: *const NidsMatrix, buf: *mut u32, buf_len: usize) -> NidsStatus {
    guard(|| {
        let m = &as_ref(matrix, "matrix")?.inner;
        need_len("buf", buf_len, m.rows())?;
        for (b, &l) in slice_mut(buf, m.rows(), "buf")?.iter_mut().zip(&m.labels) {
            *b = l as u32;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nids_matrix_free(matrix: *mut NidsMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Rows to synthesize per class so every class reaches the largest count.
/// `counts` and `plan_out` both hold `num_classes` entries.
#[no_mangle]
pub unsafe extern "C" fn nids_balance_plan(counts: *const usize, num_classes: usize, plan_out: *mut usize) -> NidsStatus {
    guard(|| {
        let c = slice(counts, num_classes, "counts")?;
        let names = class_names(num_classes);
        let stats = ClassStats { class_names: names, counts: c.to_vec() };
        let plan = make_balance_plan(&stats);
        slice_mut(plan_out, num_classes, "plan_out")?.copy_from_slice(&plan.counts);
        Ok(())
    })
}

/// Accuracy and support-weighted precision, recall and F1. Classes with no
/// predicted or true rows contribute 0 to the ratio they would divide by.
#[no_mangle]
pub unsafe extern "C" fn nids_weighted_scores(
    y_true: *const u32,
    y_pred: *const u32,
    n: usize,
    num_classes: usize,
    scores_out: *mut NidsScores,
) -> NidsStatus {
    guard(|| {
        let t = labels_u32(slice(y_true, n, "y_true")?);
        let p = labels_u32(slice(y_pred, n, "y_pred")?);
        let r = EvalReport::compute(&t, &p, &class_names(num_classes))?;
        *out(scores_out, "scores_out")? =
            NidsScores { accuracy: r.accuracy, precision: r.weighted_precision, recall: r.weighted_recall, f1: r.weighted_f1 };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nids_classifier_load(path_utf8: *const c_char, model_out: *mut *mut NidsClassifier) -> NidsStatus {
    guard(|| {
        let slot = out(model_out, "model_out")?;
        *slot = ptr::null_mut();
        let inner = ClassifierModel::load(&path(path_utf8)?)?;
        *slot = Box::into_raw(Box::new(NidsClassifier { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nids_classifier_dims(
    model: *const NidsClassifier,
    input_dim_out: *mut usize,
    num_classes_out: *mut usize,
) -> NidsStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        *out(input_dim_out, "input_dim_out")? = m.input_dim();
        *out(num_classes_out, "num_classes_out")? = m.num_classes();
        Ok(())
    })
}

/// Class probabilities for `rows` row-major inputs of width `cols`.
/// `probs_out` holds `rows * num_classes`; `labels_out` (`rows`) may be null.
#[no_mangle]
pub unsafe extern "C" fn nids_classifier_predict(
    model: *const NidsClassifier,
    x: *const f64,
    rows: usize,
    cols: usize,
    probs_out: *mut f64,
    probs_len: usize,
    labels_out: *mut u32,
) -> NidsStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        let c = m.num_classes();
        need_len("probs_out", probs_len, checked_mul(rows, c)?)?;
        let t = Tensor::new(vec![rows, cols], slice(x, checked_mul(rows, cols)?, "x")?.to_vec())?;
        let pred = predict(m, &t)?;
        slice_mut(probs_out, rows * c, "probs_out")?.copy_from_slice(pred.probs.data());
        if !labels_out.is_null() {
            for (o, &l) in slice_mut(labels_out, rows, "labels_out")?.iter_mut().zip(&pred.labels) {
                *o = l as u32;
            }
        }
        Ok(())
    })
}

/// Kernel SHAP attributions of `P(class | x)` for one row, one value per
/// column. `space` (may be null) supplies column groups, so a one-hot block
/// gets one attribution on its first column and zeros elsewhere.
/// `n_samples == 0` asks for exact enumeration (at most 12 groups).
#[no_mangle]
pub unsafe extern "C" fn nids_classifier_shap(
    model: *const NidsClassifier,
    space: *const NidsMatrix,
    x: *const f64,
    cols: usize,
    background: *const f64,
    background_rows: usize,
    class: usize,
    n_samples: usize,
    seed: u64,
    phi_out: *mut f64,
    phi_len: usize,
    base_value_out: *mut f64,
) -> NidsStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        if class >= m.num_classes() {
            return Err(fail(NidsStatus::InvalidArgument, format!("class {class} outside 0..{}", m.num_classes())));
        }
        need_len("phi_out", phi_len, cols)?;
        let x = slice(x, cols, "x")?;
        let bg = Tensor::new(vec![background_rows, cols], slice(background, checked_mul(background_rows, cols)?, "background")?.to_vec())?;
        let space = match space.as_ref() {
            Some(s) => FeatureSpace::from_matrix(&s.inner),
            None => {
                let names: Vec<String> = (0..cols).map(|j| format!("x{j}")).collect();
                FeatureSpace::per_feature(&names.iter().map(String::as_str).collect::<Vec<_>>())
            }
        };
        let cfg = if n_samples == 0 {
            ShapConfig { mode: ShapMode::Exact, seed, ..ShapConfig::default() }
        } else {
            ShapConfig { mode: ShapMode::Sampled, n_samples, seed }
        };
        let f = ClassProbability { model: m, class };
        let report = kernel_shap(&f, x, &space, &bg, &cfg, 0, "")?;
        let phi = slice_mut(phi_out, cols, "phi_out")?;
        phi.fill(0.0);
        for (g, a) in space.groups.iter().zip(&report.attributions) {
            phi[g.start] = a.attribution;
        }
        *out(base_value_out, "base_value_out")? = report.base_value;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nids_classifier_free(model: *mut NidsClassifier) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn nids_gan_load(path_utf8: *const c_char, model_out: *mut *mut NidsGan) -> NidsStatus {
    guard(|| {
        let slot = out(model_out, "model_out")?;
        *slot = ptr::null_mut();
        let inner = GanModel::load(&path(path_utf8)?)?;
        *slot = Box::into_raw(Box::new(NidsGan { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nids_gan_dims(
    model: *const NidsGan,
    feature_dim_out: *mut usize,
    num_classes_out: *mut usize,
) -> NidsStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        *out(feature_dim_out, "feature_dim_out")? = m.feature_dim();
        *out(num_classes_out, "num_classes_out")? = m.num_classes();
        Ok(())
    })
}

/// `n` synthetic rows of `class` into `rows_out` (`n * feature_dim`).
/// The same seed always gives the same rows.
#[no_mangle]
pub unsafe extern "C" fn nids_gan_generate(
    model: *const NidsGan,
    class: usize,
    n: usize,
    seed: u64,
    rows_out: *mut f64,
    rows_len: usize,
) -> NidsStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.inner;
        let want = checked_mul(n, m.feature_dim())?;
        need_len("rows_out", rows_len, want)?;
        let t = generate(m, class, n, seed)?;
        slice_mut(rows_out, want, "rows_out")?.copy_from_slice(t.data());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nids_gan_free(model: *mut NidsGan) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
