//! Box accuracy over score-map thresholds: `BoxAcc(tau, delta)`, MaxBoxAcc and
//! the all-components variant behind MaxBoxAccV2.
//!
//! For every threshold the calibrated map is binarised with `s >= tau` and
//! split into connected components. The classic metric boxes only the
//! largest component; the V2 metric boxes every component and keeps the best
//! (estimated, ground-truth) pair. An image counts as correct at `(tau, delta)`
//! when that IoU reaches `delta`. An empty binarised mask is never correct.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, ScoreMap};
use crate::scoremap::{component_boxes, connected_components, threshold, Connectivity, ThresholdGrid};

/// IoU thresholds averaged by MaxBoxAccV2.
pub const V2_DELTAS: [f64; 3] = [0.3, 0.5, 0.7];

/// IoU threshold of the classic MaxBoxAcc.
pub const DEFAULT_DELTA: f64 = 0.5;

const DELTA_MATCH_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BoxEvalRecord {
    image_id: String,
    score_map: ScoreMap,
    gt_boxes: Vec<BoundingBox>,
}

impl BoxEvalRecord {
    /// `score_map` must already be calibrated to `[0, 1]` and sized to the
    /// frame the boxes live in.
    pub fn new(image_id: impl Into<String>, score_map: ScoreMap, gt_boxes: Vec<BoundingBox>) -> Result<Self> {
        let image_id = image_id.into();
        if gt_boxes.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "record '{image_id}' has no ground-truth boxes"
            )));
        }
        let (h, w) = (score_map.height(), score_map.width());
        if let Some(b) = gt_boxes.iter().find(|b| !b.fits_in(h, w)) {
            return Err(Error::BoxOutOfFrame {
                x0: b.x0(),
                y0: b.y0(),
                x1: b.x1(),
                y1: b.y1(),
                width: w,
                height: h,
            });
        }
        if !score_map.is_calibrated() {
            return Err(Error::Uncalibratable(format!(
                "score map of '{image_id}' has values outside [0, 1]"
            )));
        }
        Ok(Self {
            image_id,
            score_map,
            gt_boxes,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn score_map(&self) -> &ScoreMap {
        &self.score_map
    }

    pub fn gt_boxes(&self) -> &[BoundingBox] {
        &self.gt_boxes
    }
}

/// Correct-image counts for every `(delta, tau)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxAccCurve {
    deltas: Vec<f64>,
    grid: ThresholdGrid,
    /// `correct[d][t]`
    correct: Vec<Vec<u64>>,
    n_images: usize,
}

impl BoxAccCurve {
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn grid(&self) -> &ThresholdGrid {
        &self.grid
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn correct_counts(&self, delta_index: usize) -> &[u64] {
        &self.correct[delta_index]
    }

    pub fn acc(&self, delta_index: usize, tau_index: usize) -> f64 {
        self.correct[delta_index][tau_index] as f64 / self.n_images as f64
    }

    pub fn acc_row(&self, delta_index: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|t| self.acc(delta_index, t)).collect()
    }

    pub fn delta_index(&self, delta: f64) -> Option<usize> {
        self.deltas.iter().position(|&d| (d - delta).abs() < DELTA_MATCH_EPS)
    }

    /// `delta,tau,acc` rows, ascending delta then tau, six decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "delta,tau,acc")?;
        let mut order: Vec<usize> = (0..self.deltas.len()).collect();
        order.sort_by(|&a, &b| self.deltas[a].total_cmp(&self.deltas[b]));
        for d in order {
            for (t, tau) in self.grid.thresholds().iter().enumerate() {
                writeln!(out, "{:.6},{:.6},{:.6}", self.deltas[d], tau, self.acc(d, t))?;
            }
        }
        Ok(())
    }
}

/// Curves for both box-extraction rules, computed in a single sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCurves {
    /// Largest connected component only.
    pub largest: BoxAccCurve,
    /// Best pair over all component boxes and all ground-truth boxes.
    pub all_components: BoxAccCurve,
}

/// Best IoU per threshold for one image, `-inf` where the mask is empty.
struct ImageIous {
    largest: Vec<f64>,
    all: Vec<f64>,
}

fn image_ious(record: &BoxEvalRecord, grid: &ThresholdGrid, connectivity: Connectivity) -> ImageIous {
    let map = &record.score_map;
    let mut sorted = map.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n_px = sorted.len();

    let n_tau = grid.len();
    let mut largest = vec![f64::NEG_INFINITY; n_tau];
    let mut all = vec![f64::NEG_INFINITY; n_tau];
    // Super-level sets are nested, so equal foreground counts mean equal masks.
    let mut previous: Option<(usize, f64, f64)> = None;
    for (t, &tau) in grid.thresholds().iter().enumerate() {
        let kept = n_px - sorted.partition_point(|&v| v < tau);
        if kept == 0 {
            // Higher thresholds keep nothing either.
            break;
        }
        let (best_largest, best_all) = match previous {
            Some((count, l, a)) if count == kept => (l, a),
            _ => {
                let boxes = component_boxes(&connected_components(&threshold(map, tau), connectivity));
                let best_for = |b: &BoundingBox| {
                    record
                        .gt_boxes
                        .iter()
                        .map(|gt| iou(b, gt))
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                let l = best_for(&boxes[0].bbox);
                let a = boxes.iter().map(|b| best_for(&b.bbox)).fold(l, f64::max);
                previous = Some((kept, l, a));
                (l, a)
            }
        };
        largest[t] = best_largest;
        all[t] = best_all;
    }
    ImageIous { largest, all }
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::EmptyInput("IoU threshold list"));
    }
    if let Some(d) = deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::InvalidArgument(format!("IoU threshold {d} not in [0, 1]")));
    }
    Ok(())
}

/// Sweeps `grid` once per image and counts correct images for each delta
/// under both box-extraction rules.
pub fn box_acc_curves(
    records: &[BoxEvalRecord],
    grid: &ThresholdGrid,
    deltas: &[f64],
    connectivity: Connectivity,
) -> Result<BoxCurves> {
    if records.is_empty() {
        return Err(Error::EmptyInput("box evaluation records"));
    }
    check_deltas(deltas)?;
    let n_tau = grid.len();
    let zeros = || vec![vec![0u64; n_tau]; 2 * deltas.len()];
    let counts = records
        .par_iter()
        .map(|r| {
            let ious = image_ious(r, grid, connectivity);
            let mut c = zeros();
            let (largest, all) = c.split_at_mut(deltas.len());
            for ((cl, ca), &delta) in largest.iter_mut().zip(all).zip(deltas) {
                for (t, (l, a)) in cl.iter_mut().zip(ca.iter_mut()).enumerate() {
                    *l = u64::from(ious.largest[t] >= delta);
                    *a = u64::from(ious.all[t] >= delta);
                }
            }
            c
        })
        .reduce(zeros, |mut a, b| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
            a
        });
    let (largest, all) = counts.split_at(deltas.len());
    let curve = |correct: &[Vec<u64>]| BoxAccCurve {
        deltas: deltas.to_vec(),
        grid: grid.clone(),
        correct: correct.to_vec(),
        n_images: records.len(),
    };
    Ok(BoxCurves {
        largest: curve(largest),
        all_components: curve(all),
    })
}

/// `BoxAcc(tau, delta)` for every threshold, boxing the largest component.
pub fn box_acc(
    records: &[BoxEvalRecord],
    grid: &ThresholdGrid,
    delta: f64,
    connectivity: Connectivity,
) -> Result<BoxAccCurve> {
    Ok(box_acc_curves(records, grid, &[delta], connectivity)?.largest)
}

/// V2 box accuracy: best match between all component boxes and all
/// ground-truth boxes.
pub fn box_acc_v2(
    records: &[BoxEvalRecord],
    grid: &ThresholdGrid,
    deltas: &[f64],
    connectivity: Connectivity,
) -> Result<BoxAccCurve> {
    Ok(box_acc_curves(records, grid, deltas, connectivity)?.all_components)
}

/// Best accuracy for one delta and the threshold that first attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub delta: f64,
    pub value: f64,
    pub tau: f64,
    #[serde(skip)]
    pub tau_index: usize,
}

fn argmax_first(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values.enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (i, v)| if v > best.1 { (i, v) } else { best },
    )
}

/// `max_tau BoxAcc(tau, delta)`; ties resolve to the smallest threshold.
pub fn max_box_acc(curve: &BoxAccCurve, delta: f64) -> Result<OperatingPoint> {
    let d = curve.delta_index(delta).ok_or(Error::MissingDelta(delta))?;
    let (t, value) = argmax_first(curve.correct[d].iter().map(|&c| c as f64));
    Ok(OperatingPoint {
        delta: curve.deltas[d],
        value: value / curve.n_images as f64,
        tau: curve.grid.thresholds()[t],
        tau_index: t,
    })
}

/// How thresholds are chosen across the averaged deltas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauSelection {
    /// Each delta picks its own best threshold.
    #[default]
    PerDelta,
    /// One threshold maximises the delta-averaged accuracy.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxBoxAccV2 {
    pub value: f64,
    pub per_delta: Vec<OperatingPoint>,
}

/// Mean over delta in {0.3, 0.5, 0.7} of the per-delta maxima.
pub fn max_box_acc_v2(curve: &BoxAccCurve) -> Result<MaxBoxAccV2> {
    max_box_acc_v2_with(curve, &V2_DELTAS, TauSelection::PerDelta)
}

pub fn max_box_acc_v2_with(curve: &BoxAccCurve, deltas: &[f64], selection: TauSelection) -> Result<MaxBoxAccV2> {
    check_deltas(deltas)?;
    let indices = deltas
        .iter()
        .map(|&d| curve.delta_index(d).ok_or(Error::MissingDelta(d)))
        .collect::<Result<Vec<_>>>()?;
    let per_delta: Vec<OperatingPoint> = match selection {
        TauSelection::PerDelta => deltas.iter().map(|&d| max_box_acc(curve, d)).collect::<Result<_>>()?,
        TauSelection::Shared => {
            let (t, _) = argmax_first(
                (0..curve.grid.len()).map(|t| indices.iter().map(|&d| curve.correct[d][t]).sum::<u64>() as f64),
            );
            indices
                .iter()
                .map(|&d| OperatingPoint {
                    delta: curve.deltas[d],
                    value: curve.acc(d, t),
                    tau: curve.grid.thresholds()[t],
                    tau_index: t,
                })
                .collect()
        }
    };
    let value = per_delta.iter().map(|p| p.value).sum::<f64>() / per_delta.len() as f64;
    Ok(MaxBoxAccV2 { value, per_delta })
}
