//! Manifest-level evaluation: load score maps, bring them to the annotation
//! frame, calibrate, and run a metric.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::box_metrics::{
    box_acc_curves, max_box_acc, max_box_acc_v2_with, BoxAccCurve, BoxEvalRecord, OperatingPoint, TauSelection,
    DEFAULT_DELTA, V2_DELTAS,
};
use crate::dataset::{load_scoremap, resolve_scoremap, Annotation, ManifestEntry, SplitManifest};
use crate::error::{Error, Result};
use crate::geometry::ScoreMap;
use crate::mask_metrics::{exact_grid, px_ap, px_pr_curve, MaskEvalRecord, PrCurve};
use crate::scoremap::{resize_bilinear, Connectivity, Normalization, ThresholdGrid, ThresholdMode, ThresholdSpec};

/// Order of resizing and calibration when a stored map's size differs from
/// the annotated frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResizeOrder {
    #[default]
    CalibrateFirst,
    ResizeFirst,
}

impl FromStr for ResizeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calibrate-first" => Ok(ResizeOrder::CalibrateFirst),
            "resize-first" => Ok(ResizeOrder::ResizeFirst),
            other => Err(Error::InvalidArgument(format!("unknown resize order '{other}'"))),
        }
    }
}

impl fmt::Display for ResizeOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResizeOrder::CalibrateFirst => "calibrate-first",
            ResizeOrder::ResizeFirst => "resize-first",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Metric {
    #[serde(rename = "maxboxacc")]
    MaxBoxAcc,
    #[serde(rename = "maxboxaccv2")]
    MaxBoxAccV2,
    #[serde(rename = "pxap")]
    PxAp,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::MaxBoxAcc => "maxboxacc",
            Metric::MaxBoxAccV2 => "maxboxaccv2",
            Metric::PxAp => "pxap",
        }
    }

    fn needs_boxes(self) -> bool {
        !matches!(self, Metric::PxAp)
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxboxacc" => Ok(Metric::MaxBoxAcc),
            "maxboxaccv2" => Ok(Metric::MaxBoxAccV2),
            "pxap" => Ok(Metric::PxAp),
            other => Err(Error::InvalidArgument(format!("unknown metric '{other}'"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalConfig {
    pub thresholds: ThresholdSpec,
    pub connectivity: Connectivity,
    pub normalization: Normalization,
    pub resize_order: ResizeOrder,
    /// `None` uses the metric's default IoU thresholds.
    pub deltas: Option<Vec<f64>>,
    pub tau_selection: TauSelection,
}

impl EvalConfig {
    /// IoU thresholds for a box metric, applying defaults and checking that
    /// the classic metric gets exactly one.
    pub fn deltas_for(&self, metric: Metric) -> Result<Vec<f64>> {
        match (metric, &self.deltas) {
            (Metric::MaxBoxAcc, None) => Ok(vec![DEFAULT_DELTA]),
            (Metric::MaxBoxAcc, Some(d)) if d.len() == 1 => Ok(d.clone()),
            (Metric::MaxBoxAcc, Some(d)) => Err(Error::InvalidArgument(format!(
                "maxboxacc takes a single IoU threshold, got {}",
                d.len()
            ))),
            (Metric::MaxBoxAccV2, None) => Ok(V2_DELTAS.to_vec()),
            (_, Some(d)) => Ok(d.clone()),
            (Metric::PxAp, None) => Ok(Vec::new()),
        }
    }
}

/// Sizes `raw` to `height x width` and calibrates it according to `config`.
/// The result is always inside `[0, 1]`; with `Normalization::None` a map
/// that is not already there is a precondition failure.
pub fn prepare_scoremap(raw: &ScoreMap, height: usize, width: usize, config: &EvalConfig) -> Result<ScoreMap> {
    let same_size = (raw.height(), raw.width()) == (height, width);
    let map = match (same_size, config.resize_order) {
        (true, _) => config.normalization.apply(raw)?,
        (false, ResizeOrder::CalibrateFirst) => resize_bilinear(&config.normalization.apply(raw)?, height, width)?,
        (false, ResizeOrder::ResizeFirst) => config.normalization.apply(&resize_bilinear(raw, height, width)?)?,
    };
    if !map.is_calibrated() {
        return Err(Error::Uncalibratable(format!(
            "values span [{}, {}] after '{}' normalization",
            map.min(),
            map.max(),
            config.normalization
        )));
    }
    Ok(map)
}

fn load_prepared(entry: &ManifestEntry, scoremap_dir: &Path, config: &EvalConfig) -> Result<ScoreMap> {
    let path = resolve_scoremap(scoremap_dir, &entry.image_id)?;
    let raw = load_scoremap(&path, None)?;
    prepare_scoremap(&raw, entry.height, entry.width, config).map_err(|e| match e {
        Error::Uncalibratable(msg) => Error::Uncalibratable(format!("image '{}': {msg}", entry.image_id)),
        other => other,
    })
}

fn kind_mismatch(metric: &str, wanted: &str, entry: &ManifestEntry) -> Error {
    Error::InvalidArgument(format!(
        "{metric} needs {wanted} annotations but image '{}' has {}",
        entry.image_id,
        entry.annotation.kind()
    ))
}

/// Box records for every manifest entry, in manifest order. Maps load in
/// parallel; on failure the error of the earliest entry is reported.
pub fn load_box_records(
    manifest: &SplitManifest,
    scoremap_dir: &Path,
    config: &EvalConfig,
) -> Result<Vec<BoxEvalRecord>> {
    if let Some(e) = manifest
        .entries
        .iter()
        .find(|e| !matches!(e.annotation, Annotation::Boxes(_)))
    {
        return Err(kind_mismatch("box evaluation", "boxes", e));
    }
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let Annotation::Boxes(boxes) = &e.annotation else {
                unreachable!("checked above")
            };
            BoxEvalRecord::new(
                e.image_id.clone(),
                load_prepared(e, scoremap_dir, config)?,
                boxes.clone(),
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Mask records for every manifest entry, in manifest order.
pub fn load_mask_records(
    manifest: &SplitManifest,
    scoremap_dir: &Path,
    config: &EvalConfig,
) -> Result<Vec<MaskEvalRecord>> {
    if let Some(e) = manifest
        .entries
        .iter()
        .find(|e| !matches!(e.annotation, Annotation::Masks { .. }))
    {
        return Err(kind_mismatch("pxap", "mask", e));
    }
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let Annotation::Masks { mask, ignore, .. } = &e.annotation else {
                unreachable!("checked above")
            };
            MaskEvalRecord::new(
                e.image_id.clone(),
                load_prepared(e, scoremap_dir, config)?,
                mask.clone(),
                ignore.clone(),
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Configuration as it was actually applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub thresholds: ThresholdMode,
    pub grid_spacing: Option<f64>,
    pub n_thresholds: usize,
    pub connectivity: u32,
    pub normalization: Normalization,
    pub resize_order: ResizeOrder,
    pub deltas: Vec<f64>,
    pub tau_selection: TauSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub value: f64,
    pub per_delta: Vec<OperatingPoint>,
    pub n_images: usize,
    pub config: ConfigEcho,
}

fn echo(config: &EvalConfig, grid: &ThresholdGrid, deltas: Vec<f64>) -> ConfigEcho {
    ConfigEcho {
        thresholds: grid.mode(),
        grid_spacing: grid.spacing(),
        n_thresholds: grid.len(),
        connectivity: config.connectivity.as_number(),
        normalization: config.normalization,
        resize_order: config.resize_order,
        deltas,
        tau_selection: config.tau_selection,
    }
}

fn box_grid(records: &[BoxEvalRecord], spec: ThresholdSpec) -> Result<ThresholdGrid> {
    match spec {
        ThresholdSpec::Grid(spacing) => ThresholdGrid::uniform(spacing),
        ThresholdSpec::Exact => ThresholdGrid::exact(records.iter().map(|r| r.score_map())),
    }
}

/// Curve for a box metric: largest-component rule for `MaxBoxAcc`,
/// all-components rule for `MaxBoxAccV2`.
pub fn box_curve(records: &[BoxEvalRecord], metric: Metric, config: &EvalConfig) -> Result<BoxAccCurve> {
    box_curve_over(records, metric, &config.deltas_for(metric)?, config)
}

/// As [`box_curve`] but over any list of IoU thresholds, for either rule.
pub fn box_curve_over(
    records: &[BoxEvalRecord],
    metric: Metric,
    deltas: &[f64],
    config: &EvalConfig,
) -> Result<BoxAccCurve> {
    if !metric.needs_boxes() {
        return Err(Error::InvalidArgument(format!("{metric} is not a box metric")));
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("box evaluation records"));
    }
    let grid = box_grid(records, config.thresholds)?;
    let curves = box_acc_curves(records, &grid, deltas, config.connectivity)?;
    Ok(match metric {
        Metric::MaxBoxAcc => curves.largest,
        _ => curves.all_components,
    })
}

pub fn evaluate_boxes(
    records: &[BoxEvalRecord],
    metric: Metric,
    config: &EvalConfig,
) -> Result<(EvalReport, BoxAccCurve)> {
    let curve = box_curve(records, metric, config)?;
    let deltas = curve.deltas().to_vec();
    let (value, per_delta) = match metric {
        Metric::MaxBoxAcc => {
            let op = max_box_acc(&curve, deltas[0])?;
            (op.value, vec![op])
        }
        _ => {
            let v2 = max_box_acc_v2_with(&curve, &deltas, config.tau_selection)?;
            (v2.value, v2.per_delta)
        }
    };
    let report = EvalReport {
        metric,
        value,
        per_delta,
        n_images: records.len(),
        config: echo(config, curve.grid(), deltas),
    };
    Ok((report, curve))
}

pub fn mask_curve(records: &[MaskEvalRecord], config: &EvalConfig) -> Result<PrCurve> {
    if records.is_empty() {
        return Err(Error::EmptyInput("mask evaluation records"));
    }
    let grid = match config.thresholds {
        ThresholdSpec::Grid(spacing) => ThresholdGrid::uniform(spacing)?,
        ThresholdSpec::Exact => exact_grid(records)?,
    };
    px_pr_curve(records, &grid)
}

pub fn evaluate_masks(records: &[MaskEvalRecord], config: &EvalConfig) -> Result<(EvalReport, PrCurve)> {
    let curve = mask_curve(records, config)?;
    let report = EvalReport {
        metric: Metric::PxAp,
        value: px_ap(&curve),
        per_delta: Vec::new(),
        n_images: records.len(),
        config: echo(config, curve.grid(), Vec::new()),
    };
    Ok((report, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    BoxAcc(BoxAccCurve),
    Pr(PrCurve),
}

impl Curve {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        match self {
            Curve::BoxAcc(c) => c.write_csv(out),
            Curve::Pr(c) => c.write_csv(out),
        }
    }
}

/// Loads every score map named by `manifest` from `scoremap_dir` and
/// evaluates `metric`.
pub fn evaluate_manifest(
    manifest: &SplitManifest,
    scoremap_dir: &Path,
    metric: Metric,
    config: &EvalConfig,
) -> Result<(EvalReport, Curve)> {
    if metric.needs_boxes() {
        // Reject bad delta lists before any I/O.
        config.deltas_for(metric)?;
        let records = load_box_records(manifest, scoremap_dir, config)?;
        let (report, curve) = evaluate_boxes(&records, metric, config)?;
        Ok((report, Curve::BoxAcc(curve)))
    } else {
        let records = load_mask_records(manifest, scoremap_dir, config)?;
        let (report, curve) = evaluate_masks(&records, config)?;
        Ok((report, Curve::Pr(curve)))
    }
}
