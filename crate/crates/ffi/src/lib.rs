//! C ABI over the `wsol-eval` metrics.
//!
//! Every fallible function returns a [`WsolStatus`]; on failure a message is
//! available from [`wsol_last_error_message`] on the same thread. Evaluators
//! are opaque handles created with `*_new` and released with `*_free`.
//! Buffers are row-major and borrowed only for the duration of the call.
//! A handle must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wsol_eval::box_metrics::{BoxEvalRecord, TauSelection};
use wsol_eval::geometry::{BinaryMask, BoundingBox, ScoreMap};
use wsol_eval::hparam::kendall_tau;
use wsol_eval::mask_metrics::{MaskEvalRecord, PrCurve};
use wsol_eval::pipeline::{evaluate_boxes, evaluate_masks, prepare_scoremap, EvalConfig, Metric};
use wsol_eval::scoremap::{Connectivity, Normalization, ThresholdSpec, DEFAULT_GRID_SPACING};
use wsol_eval::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsolStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Uncalibratable = 5,
    EmptyInput = 6,
    NoForeground = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsolNormalization {
    MinMax = 0,
    Max = 1,
    None = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WsolBoxMetric {
    MaxBoxAcc = 0,
    MaxBoxAccV2 = 1,
}

/// Evaluation settings. [`wsol_default_options`] fills in the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WsolEvalOptions {
    /// Threshold spacing; ignored when `exact_thresholds` is set.
    pub grid_spacing: f64,
    pub exact_thresholds: bool,
    /// 4 or 8.
    pub connectivity: u32,
    pub normalization: WsolNormalization,
    /// Pick one threshold for all IoU levels of MaxBoxAccV2.
    pub shared_tau: bool,
}

pub struct WsolBoxEvaluator {
    config: EvalConfig,
    records: Vec<BoxEvalRecord>,
}

pub struct WsolMaskEvaluator {
    config: EvalConfig,
    records: Vec<MaskEvalRecord>,
    curve: Option<PrCurve>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WsolStatus {
    match e {
        Error::DimensionMismatch { .. } => WsolStatus::DimensionMismatch,
        Error::NonFinite { .. } => WsolStatus::NonFinite,
        Error::Uncalibratable(_) => WsolStatus::Uncalibratable,
        Error::EmptyInput(_) => WsolStatus::EmptyInput,
        Error::NoForeground => WsolStatus::NoForeground,
        Error::Io { .. } | Error::Parse { .. } | Error::Format { .. } | Error::MissingScoreMap { .. } => WsolStatus::Io,
        _ => WsolStatus::InvalidArgument,
    }
}

struct Failure(WsolStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(WsolStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WsolStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WsolStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {message}"));
            WsolStatus::Panic
        }
    }
}

/// # Safety
/// `data` must be NULL or point to `len` readable elements.
unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn config_from(options: *const WsolEvalOptions) -> Result<EvalConfig, Failure> {
    let o = if options.is_null() {
        wsol_default_options()
    } else {
        // SAFETY: non-null pointers must reference a valid options struct.
        unsafe { *options }
    };
    Ok(EvalConfig {
        thresholds: if o.exact_thresholds {
            ThresholdSpec::Exact
        } else {
            ThresholdSpec::Grid(o.grid_spacing)
        },
        connectivity: Connectivity::from_number(o.connectivity)?,
        normalization: match o.normalization {
            WsolNormalization::MinMax => Normalization::MinMax,
            WsolNormalization::Max => Normalization::Max,
            WsolNormalization::None => Normalization::None,
        },
        tau_selection: if o.shared_tau {
            TauSelection::Shared
        } else {
            TauSelection::PerDelta
        },
        ..EvalConfig::default()
    })
}

fn pixel_count(height: usize, width: usize) -> Result<usize, Failure> {
    height.checked_mul(width).filter(|&n| n > 0).ok_or_else(|| {
        Failure(
            WsolStatus::InvalidArgument,
            format!("invalid map size {height}x{width}"),
        )
    })
}

/// # Safety
/// `scores` must point to `height * width` doubles.
unsafe fn read_map(scores: *const f64, height: usize, width: usize, config: &EvalConfig) -> Result<ScoreMap, Failure> {
    let n = pixel_count(height, width)?;
    let raw = ScoreMap::new(height, width, slice(scores, n, "scores")?.to_vec())?;
    Ok(prepare_scoremap(&raw, height, width, config)?)
}

/// # Safety
/// `data` must point to `height * width` bytes.
unsafe fn read_mask(data: *const u8, height: usize, width: usize, what: &str) -> Result<BinaryMask, Failure> {
    let n = pixel_count(height, width)?;
    let bytes = slice(data, n, what)?;
    if let Some(i) = bytes.iter().position(|&b| b > 1) {
        return Err(Failure(
            WsolStatus::InvalidArgument,
            format!("{what}[{i}] is {}; masks hold 0 or 1", bytes[i]),
        ));
    }
    Ok(BinaryMask::from_u8(height, width, bytes)?)
}

/// Default options: grid spacing 0.001, 8-connectivity, min-max normalization,
/// per-delta thresholds.
#[no_mangle]
pub extern "C" fn wsol_default_options() -> WsolEvalOptions {
    WsolEvalOptions {
        grid_spacing: DEFAULT_GRID_SPACING,
        exact_thresholds: false,
        connectivity: 8,
        normalization: WsolNormalization::MinMax,
        shared_tau: false,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wsol_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn wsol_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a box evaluator. `options` may be NULL for the defaults.
///
/// # Safety
/// `out` must be a valid pointer; `options` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn wsol_box_evaluator_new(
    options: *const WsolEvalOptions,
    out: *mut *mut WsolBoxEvaluator,
) -> WsolStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = config_from(options)?;
        *out = Box::into_raw(Box::new(WsolBoxEvaluator {
            config,
            records: Vec::new(),
        }));
        Ok(())
    })
}

/// Adds one image: a `height x width` score map and `n_boxes` boxes given as
/// `x0, y0, x1, y1` quadruples (half-open pixel coordinates).
///
/// # Safety
/// `evaluator` must come from [`wsol_box_evaluator_new`]; `scores` must hold
/// `height * width` values and `boxes` `4 * n_boxes` values.
#[no_mangle]
pub unsafe extern "C" fn wsol_box_evaluator_add(
    evaluator: *mut WsolBoxEvaluator,
    scores: *const f64,
    height: usize,
    width: usize,
    boxes: *const u32,
    n_boxes: usize,
) -> WsolStatus {
    guard(|| {
        let ev = evaluator.as_mut().ok_or_else(|| null("evaluator"))?;
        let map = read_map(scores, height, width, &ev.config)?;
        let coords = slice(boxes, n_boxes.saturating_mul(4), "boxes")?;
        let boxes = coords
            .chunks_exact(4)
            .map(|c| BoundingBox::new(c[0], c[1], c[2], c[3]))
            .collect::<Result<Vec<_>, _>>()?;
        let id = ev.records.len().to_string();
        ev.records.push(BoxEvalRecord::new(id, map, boxes)?);
        Ok(())
    })
}

/// Number of images added so far, or 0 for NULL.
///
/// # Safety
/// `evaluator` must be NULL or come from [`wsol_box_evaluator_new`].
#[no_mangle]
pub unsafe extern "C" fn wsol_box_evaluator_len(evaluator: *const WsolBoxEvaluator) -> usize {
    evaluator.as_ref().map_or(0, |e| e.records.len())
}

/// Evaluates the added images. `deltas` may be NULL with `n_deltas == 0` for
/// the metric's default IoU thresholds (0.5, or 0.3/0.5/0.7 for V2). The
/// optional `per_delta_value` and `per_delta_tau` arrays receive one entry
/// per IoU threshold and must then hold `n_deltas` (or the default count:
/// 1 or 3) elements.
///
/// # Safety
/// Pointers must be valid for the sizes described above.
#[no_mangle]
pub unsafe extern "C" fn wsol_box_evaluator_evaluate(
    evaluator: *const WsolBoxEvaluator,
    metric: WsolBoxMetric,
    deltas: *const f64,
    n_deltas: usize,
    value: *mut f64,
    per_delta_value: *mut f64,
    per_delta_tau: *mut f64,
) -> WsolStatus {
    guard(|| {
        let ev = evaluator.as_ref().ok_or_else(|| null("evaluator"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        let mut config = ev.config.clone();
        if n_deltas > 0 {
            config.deltas = Some(slice(deltas, n_deltas, "deltas")?.to_vec());
        }
        let metric = match metric {
            WsolBoxMetric::MaxBoxAcc => Metric::MaxBoxAcc,
            WsolBoxMetric::MaxBoxAccV2 => Metric::MaxBoxAccV2,
        };
        let (report, _) = evaluate_boxes(&ev.records, metric, &config)?;
        *value = report.value;
        for (i, op) in report.per_delta.iter().enumerate() {
            if !per_delta_value.is_null() {
                *per_delta_value.add(i) = op.value;
            }
            if !per_delta_tau.is_null() {
                *per_delta_tau.add(i) = op.tau;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `evaluator` must be NULL or come from [`wsol_box_evaluator_new`], and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wsol_box_evaluator_free(evaluator: *mut WsolBoxEvaluator) {
    if !evaluator.is_null() {
        drop(Box::from_raw(evaluator));
    }
}

/// Creates a mask evaluator. `options` may be NULL for the defaults.
///
/// # Safety
/// `out` must be a valid pointer; `options` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn wsol_mask_evaluator_new(
    options: *const WsolEvalOptions,
    out: *mut *mut WsolMaskEvaluator,
) -> WsolStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = config_from(options)?;
        *out = Box::into_raw(Box::new(WsolMaskEvaluator {
            config,
            records: Vec::new(),
            curve: None,
        }));
        Ok(())
    })
}

/// Adds one image: scores plus a 0/1 foreground mask and an optional 0/1
/// ignore mask (NULL for none), all `height x width`.
///
/// # Safety
/// `evaluator` must come from [`wsol_mask_evaluator_new`]; buffers must hold
/// `height * width` elements.
#[no_mangle]
pub unsafe extern "C" fn wsol_mask_evaluator_add(
    evaluator: *mut WsolMaskEvaluator,
    scores: *const f64,
    height: usize,
    width: usize,
    mask: *const u8,
    ignore: *const u8,
) -> WsolStatus {
    guard(|| {
        let ev = evaluator.as_mut().ok_or_else(|| null("evaluator"))?;
        let map = read_map(scores, height, width, &ev.config)?;
        let gt = read_mask(mask, height, width, "mask")?;
        let ignore = if ignore.is_null() {
            None
        } else {
            Some(read_mask(ignore, height, width, "ignore")?)
        };
        let id = ev.records.len().to_string();
        ev.records.push(MaskEvalRecord::new(id, map, gt, ignore)?);
        ev.curve = None;
        Ok(())
    })
}

/// # Safety
/// `evaluator` must be NULL or come from [`wsol_mask_evaluator_new`].
#[no_mangle]
pub unsafe extern "C" fn wsol_mask_evaluator_len(evaluator: *const WsolMaskEvaluator) -> usize {
    evaluator.as_ref().map_or(0, |e| e.records.len())
}

/// Computes PxAP over all added images and keeps the PR curve for
/// [`wsol_mask_evaluator_curve`].
///
/// # Safety
/// `evaluator` must come from [`wsol_mask_evaluator_new`]; `pxap` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn wsol_mask_evaluator_evaluate(evaluator: *mut WsolMaskEvaluator, pxap: *mut f64) -> WsolStatus {
    guard(|| {
        let ev = evaluator.as_mut().ok_or_else(|| null("evaluator"))?;
        if pxap.is_null() {
            return Err(null("pxap"));
        }
        let (report, curve) = evaluate_masks(&ev.records, &ev.config)?;
        *pxap = report.value;
        ev.curve = Some(curve);
        Ok(())
    })
}

/// Number of thresholds in the last evaluated curve, 0 if none.
///
/// # Safety
/// `evaluator` must be NULL or come from [`wsol_mask_evaluator_new`].
#[no_mangle]
pub unsafe extern "C" fn wsol_mask_evaluator_curve_len(evaluator: *const WsolMaskEvaluator) -> usize {
    evaluator
        .as_ref()
        .and_then(|e| e.curve.as_ref())
        .map_or(0, |c| c.grid().len())
}

/// Copies the last curve in ascending threshold order into three arrays of
/// `len` elements, which must equal [`wsol_mask_evaluator_curve_len`].
///
/// # Safety
/// Output pointers must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wsol_mask_evaluator_curve(
    evaluator: *const WsolMaskEvaluator,
    tau: *mut f64,
    precision: *mut f64,
    recall: *mut f64,
    len: usize,
) -> WsolStatus {
    guard(|| {
        let ev = evaluator.as_ref().ok_or_else(|| null("evaluator"))?;
        let curve = ev.curve.as_ref().ok_or_else(|| {
            Failure(
                WsolStatus::InvalidArgument,
                "no curve; call wsol_mask_evaluator_evaluate first".into(),
            )
        })?;
        if len != curve.grid().len() {
            return Err(Failure(
                WsolStatus::InvalidArgument,
                format!("curve has {} points, buffers hold {len}", curve.grid().len()),
            ));
        }
        for (out, src, name) in [
            (tau, curve.grid().thresholds(), "tau"),
            (precision, curve.precision(), "precision"),
            (recall, curve.recall(), "recall"),
        ] {
            if out.is_null() {
                return Err(null(name));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), out, len);
        }
        Ok(())
    })
}

/// # Safety
/// `evaluator` must be NULL or come from [`wsol_mask_evaluator_new`], and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wsol_mask_evaluator_free(evaluator: *mut WsolMaskEvaluator) {
    if !evaluator.is_null() {
        drop(Box::from_raw(evaluator));
    }
}

/// Kendall tau-b between two rankings of `n` items.
///
/// # Safety
/// `a` and `b` must hold `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wsol_kendall_tau(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> WsolStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = kendall_tau(slice(a, n, "a")?, slice(b, n, "b")?)?;
        Ok(())
    })
}
