//! Pixel precision, recall and average precision (PxAP).
//!
//! Counts are pooled over every non-ignored pixel of every record before any
//! ratio is taken, so PxAP is a dataset-level quantity rather than an average
//! of per-image APs.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, ScoreMap};
use crate::scoremap::ThresholdGrid;

#[derive(Debug, Clone)]
pub struct MaskEvalRecord {
    image_id: String,
    score_map: ScoreMap,
    gt_mask: BinaryMask,
    ignore_mask: Option<BinaryMask>,
}

impl MaskEvalRecord {
    pub fn new(
        image_id: impl Into<String>,
        score_map: ScoreMap,
        gt_mask: BinaryMask,
        ignore_mask: Option<BinaryMask>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        let dims = (score_map.height(), score_map.width());
        for m in std::iter::once(&gt_mask).chain(ignore_mask.as_ref()) {
            if (m.height(), m.width()) != dims {
                return Err(Error::DimensionMismatch {
                    expected_h: dims.0,
                    expected_w: dims.1,
                    found_h: m.height(),
                    found_w: m.width(),
                });
            }
        }
        if let Some(ignore) = &ignore_mask {
            if let Some(i) = gt_mask
                .as_slice()
                .iter()
                .zip(ignore.as_slice())
                .position(|(&fg, &ig)| fg && ig)
            {
                return Err(Error::InvalidArgument(format!(
                    "record '{image_id}': pixel {i} is both foreground and ignored"
                )));
            }
        }
        if !score_map.is_calibrated() {
            return Err(Error::Uncalibratable(format!(
                "score map of '{image_id}' has values outside [0, 1]"
            )));
        }
        Ok(Self {
            image_id,
            score_map,
            gt_mask,
            ignore_mask,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn score_map(&self) -> &ScoreMap {
        &self.score_map
    }

    pub fn gt_mask(&self) -> &BinaryMask {
        &self.gt_mask
    }

    pub fn ignore_mask(&self) -> Option<&BinaryMask> {
        self.ignore_mask.as_ref()
    }

    /// `(score, is_foreground)` for every pixel that takes part in the counts.
    pub fn evaluated_pixels(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        let ignore = self.ignore_mask.as_ref().map(|m| m.as_slice());
        self.score_map
            .as_slice()
            .iter()
            .zip(self.gt_mask.as_slice())
            .enumerate()
            .filter(move |(i, _)| !ignore.is_some_and(|m| m[*i]))
            .map(|(_, (&s, &fg))| (s, fg))
    }
}

/// Zeroes the score of every ignored pixel. Ignored pixels never enter any
/// count, so the result evaluates identically to the input; the canonical
/// form makes that independence visible in the data itself.
pub fn apply_ignore(record: &MaskEvalRecord) -> MaskEvalRecord {
    let Some(ignore) = &record.ignore_mask else {
        return record.clone();
    };
    let values = record
        .score_map
        .as_slice()
        .iter()
        .zip(ignore.as_slice())
        .map(|(&s, &ig)| if ig { 0.0 } else { s })
        .collect();
    MaskEvalRecord {
        score_map: ScoreMap::new(record.score_map.height(), record.score_map.width(), values).expect("same dimensions"),
        ..record.clone()
    }
}

/// EXACT-mode thresholds over the evaluated (non-ignored) pixels only.
pub fn exact_grid(records: &[MaskEvalRecord]) -> Result<ThresholdGrid> {
    ThresholdGrid::from_values(records.iter().flat_map(|r| r.evaluated_pixels().map(|(s, _)| s)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    grid: ThresholdGrid,
    /// Pixels with `s >= tau` per threshold.
    predicted: Vec<u64>,
    /// Foreground pixels with `s >= tau` per threshold.
    true_positive: Vec<u64>,
    foreground: u64,
    precision: Vec<f64>,
    recall: Vec<f64>,
    ap: f64,
}

impl PrCurve {
    fn from_counts(grid: ThresholdGrid, predicted: Vec<u64>, true_positive: Vec<u64>, foreground: u64) -> Self {
        let precision: Vec<f64> = predicted
            .iter()
            .zip(&true_positive)
            .map(|(&p, &tp)| if p == 0 { 1.0 } else { tp as f64 / p as f64 })
            .collect();
        let recall: Vec<f64> = true_positive.iter().map(|&tp| tp as f64 / foreground as f64).collect();
        let mut curve = Self {
            grid,
            predicted,
            true_positive,
            foreground,
            precision,
            recall,
            ap: 0.0,
        };
        curve.ap = px_ap(&curve);
        curve
    }

    pub fn grid(&self) -> &ThresholdGrid {
        &self.grid
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    pub fn recall(&self) -> &[f64] {
        &self.recall
    }

    pub fn predicted(&self) -> &[u64] {
        &self.predicted
    }

    pub fn true_positive(&self) -> &[u64] {
        &self.true_positive
    }

    pub fn foreground(&self) -> u64 {
        self.foreground
    }

    pub fn ap(&self) -> f64 {
        self.ap
    }

    /// `tau,precision,recall` in descending tau, then `#pxap,<value>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "tau,precision,recall")?;
        for t in (0..self.grid.len()).rev() {
            writeln!(
                out,
                "{:.6},{:.6},{:.6}",
                self.grid.thresholds()[t],
                self.precision[t],
                self.recall[t]
            )?;
        }
        writeln!(out, "#pxap,{:.6}", self.ap)
    }
}

/// Per-record histogram: `hist[k]` counts pixels that pass exactly `k` thresholds.
struct Histogram {
    all: Vec<u64>,
    fg: Vec<u64>,
}

fn histogram(record: &MaskEvalRecord, grid: &ThresholdGrid) -> Histogram {
    let mut h = Histogram {
        all: vec![0; grid.len() + 1],
        fg: vec![0; grid.len() + 1],
    };
    for (s, fg) in record.evaluated_pixels() {
        let k = grid.levels_passed(s);
        h.all[k] += 1;
        if fg {
            h.fg[k] += 1;
        }
    }
    h
}

/// Pooled pixel precision and recall at every threshold of `grid`.
pub fn px_pr_curve(records: &[MaskEvalRecord], grid: &ThresholdGrid) -> Result<PrCurve> {
    if records.is_empty() {
        return Err(Error::EmptyInput("mask evaluation records"));
    }
    let n = grid.len();
    let empty = || Histogram {
        all: vec![0; n + 1],
        fg: vec![0; n + 1],
    };
    let hist = records
        .par_iter()
        .map(|r| histogram(r, grid))
        .reduce(empty, |mut a, b| {
            a.all.iter_mut().zip(b.all).for_each(|(x, y)| *x += y);
            a.fg.iter_mut().zip(b.fg).for_each(|(x, y)| *x += y);
            a
        });
    let foreground: u64 = hist.fg.iter().sum();
    if foreground == 0 {
        return Err(Error::NoForeground);
    }
    // A pixel passing k thresholds is predicted at tau_l for every l < k.
    let mut predicted = vec![0u64; n];
    let mut true_positive = vec![0u64; n];
    let (mut p, mut tp) = (0u64, 0u64);
    for l in (0..n).rev() {
        p += hist.all[l + 1];
        tp += hist.fg[l + 1];
        predicted[l] = p;
        true_positive[l] = tp;
    }
    Ok(PrCurve::from_counts(grid.clone(), predicted, true_positive, foreground))
}

/// Unevaluated sum `hi + lo` carrying about 106 bits of precision.
#[derive(Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    const ZERO: Self = Self { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Self {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn quick_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Self { hi: s, lo: b - (s - a) }
    }

    fn add(self, other: Self) -> Self {
        let s = Self::two_sum(self.hi, other.hi);
        let t = Self::two_sum(self.lo, other.lo);
        let u = Self::quick_two_sum(s.hi, s.lo + t.hi);
        Self::quick_two_sum(u.hi, u.lo + t.lo)
    }

    fn mul(self, other: Self) -> Self {
        let p = self.hi * other.hi;
        let e = self.hi.mul_add(other.hi, -p);
        Self::quick_two_sum(p, e + (self.hi * other.lo + self.lo * other.hi))
    }

    /// `a / b` for exactly representable `a` and `b`.
    fn div(a: f64, b: f64) -> Self {
        let q = a / b;
        let r = (-q).mul_add(b, a);
        Self::quick_two_sum(q, r / b)
    }
}

/// `sum_l Prec(tau_l) * (Rec(tau_l) - Rec(tau_{l-1}))`, walking thresholds in
/// descending order so recall grows, starting from zero recall.
///
/// Terms are formed from the integer counts and summed in double-double
/// precision, so the result is the correctly rounded AP of the counts except
/// in vanishingly rare near-halfway cases.
pub fn px_ap(curve: &PrCurve) -> f64 {
    let foreground = curve.foreground as f64;
    let mut ap = DoubleDouble::ZERO;
    let mut previous_tp = 0u64;
    for t in (0..curve.grid.len()).rev() {
        let tp = curve.true_positive[t];
        if tp == previous_tp {
            continue;
        }
        // tp > 0 implies predicted > 0.
        let precision = DoubleDouble::div(tp as f64, curve.predicted[t] as f64);
        let recall_gain = DoubleDouble::div((tp - previous_tp) as f64, foreground);
        ap = ap.add(precision.mul(recall_gain));
        previous_tp = tp;
    }
    ap.hi + ap.lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(scores: &[f64], fg: &[u8], ignore: Option<&[u8]>, h: usize, w: usize) -> MaskEvalRecord {
        MaskEvalRecord::new(
            "r",
            ScoreMap::new(h, w, scores.to_vec()).unwrap(),
            BinaryMask::from_u8(h, w, fg).unwrap(),
            ignore.map(|m| BinaryMask::from_u8(h, w, m).unwrap()),
        )
        .unwrap()
    }

    fn worked_example() -> MaskEvalRecord {
        record(&[0.9, 0.6, 0.4, 0.1], &[1, 0, 1, 0], None, 2, 2)
    }

    fn at(curve: &PrCurve, tau: f64) -> (f64, f64) {
        let t = curve.grid().thresholds().iter().position(|&x| x == tau).unwrap();
        (curve.precision()[t], curve.recall()[t])
    }

    #[test]
    fn worked_two_by_two() {
        let rec = worked_example();
        let g = ThresholdGrid::uniform(0.5).unwrap();
        let curve = px_pr_curve(std::slice::from_ref(&rec), &g).unwrap();
        assert_eq!(at(&curve, 0.5), (0.5, 0.5));
        assert_eq!(at(&curve, 0.0), (0.5, 1.0));

        let exact = px_pr_curve(
            std::slice::from_ref(&rec),
            &exact_grid(std::slice::from_ref(&rec)).unwrap(),
        )
        .unwrap();
        assert!((exact.ap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_separation() {
        let rec = record(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0], None, 2, 2);
        let curve = px_pr_curve(&[rec], &ThresholdGrid::default()).unwrap();
        assert_eq!(at(&curve, 0.5), (1.0, 1.0));
        assert_eq!(curve.ap(), 1.0);
    }

    #[test]
    fn constant_map_gives_base_rate() {
        let rec = record(&[0.0; 6], &[1, 0, 0, 1, 0, 0], None, 2, 3);
        let curve = px_pr_curve(&[rec], &ThresholdGrid::default()).unwrap();
        assert_eq!(curve.ap(), 2.0 / 6.0);
        // Nothing survives tau > 0: precision falls back to 1, recall 0.
        assert_eq!(at(&curve, 0.5), (1.0, 0.0));
    }

    #[test]
    fn everything_ignored_but_one_pixel() {
        let rec = record(&[1.0, 0.3, 0.9, 0.2], &[1, 0, 0, 0], Some(&[0, 1, 1, 1]), 2, 2);
        let curve = px_pr_curve(&[rec], &ThresholdGrid::default()).unwrap();
        assert_eq!(at(&curve, 0.5), (1.0, 1.0));
    }

    #[test]
    fn ignored_group_region_matches_enumeration() {
        // 4x4 fixture with a 2x2 ignored block in the lower right.
        #[rustfmt::skip]
        let scores = [
            0.9, 0.8, 0.1, 0.0,
            0.7, 0.6, 0.2, 0.1,
            0.3, 0.2, 0.9, 0.9,
            0.1, 0.4, 0.9, 0.9,
        ];
        #[rustfmt::skip]
        let fg = [
            1, 1, 0, 0,
            1, 0, 0, 0,
            0, 0, 0, 0,
            0, 1, 0, 0,
        ];
        #[rustfmt::skip]
        let ignore = [
            0, 0, 0, 0,
            0, 0, 0, 0,
            0, 0, 1, 1,
            0, 0, 1, 1,
        ];
        let rec = record(&scores, &fg, Some(&ignore), 4, 4);
        let curve = px_pr_curve(&[rec], &ThresholdGrid::uniform(0.5).unwrap()).unwrap();
        // Non-ignored scores >= 0.5: 0.9, 0.8, 0.7, 0.6 -> 3 foreground hits.
        assert_eq!(curve.predicted()[1], 4);
        assert_eq!(curve.true_positive()[1], 3);
        assert_eq!(curve.foreground(), 4);
        assert_eq!(curve.predicted()[0], 12);
    }

    #[test]
    fn no_foreground_is_an_error() {
        let rec = record(&[0.5, 0.2], &[0, 0], None, 1, 2);
        assert!(matches!(
            px_pr_curve(&[rec], &ThresholdGrid::default()),
            Err(Error::NoForeground)
        ));
        assert!(px_pr_curve(&[], &ThresholdGrid::default()).is_err());
    }

    #[test]
    fn overlapping_ignore_and_foreground_rejected() {
        let s = ScoreMap::new(1, 2, vec![0.1, 0.2]).unwrap();
        let fg = BinaryMask::from_u8(1, 2, &[1, 0]).unwrap();
        let ig = BinaryMask::from_u8(1, 2, &[1, 0]).unwrap();
        assert!(MaskEvalRecord::new("x", s, fg, Some(ig)).is_err());
    }

    #[test]
    fn csv_layout() {
        let curve = px_pr_curve(&[worked_example()], &ThresholdGrid::uniform(0.5).unwrap()).unwrap();
        let mut out = Vec::new();
        curve.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "tau,precision,recall");
        assert_eq!(lines[1], "1.000000,1.000000,0.000000");
        assert_eq!(lines[2], "0.500000,0.500000,0.500000");
        assert_eq!(lines[3], "0.000000,0.500000,1.000000");
        assert!(lines[4].starts_with("#pxap,"));
    }

    // Independent oracle: rank pixels by score, walk tie groups, integrate
    // precision over recall increments.
    fn sorting_oracle(pixels: &mut [(f64, bool)]) -> f64 {
        pixels.sort_by(|a, b| b.0.total_cmp(&a.0));
        let fg = pixels.iter().filter(|p| p.1).count() as f64;
        let (mut ap, mut tp, mut seen, mut i) = (0.0, 0.0, 0.0, 0);
        while i < pixels.len() {
            let mut j = i;
            let mut group_fg = 0.0;
            while j < pixels.len() && pixels[j].0 == pixels[i].0 {
                group_fg += f64::from(u8::from(pixels[j].1));
                j += 1;
            }
            tp += group_fg;
            seen += (j - i) as f64;
            ap += tp / seen * (group_fg / fg);
            i = j;
        }
        ap
    }

    fn arb_record() -> impl Strategy<Value = MaskEvalRecord> {
        (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
            (
                prop::collection::vec(0u8..8, h * w),
                prop::collection::vec(0u8..3, h * w),
            )
                .prop_map(move |(s, lab)| {
                    let scores: Vec<f64> = s.iter().map(|&v| f64::from(v) / 7.0).collect();
                    let mut fg: Vec<u8> = lab.iter().map(|&l| u8::from(l == 1)).collect();
                    let ignore: Vec<u8> = lab.iter().map(|&l| u8::from(l == 2)).collect();
                    if fg.iter().all(|&f| f == 0) {
                        fg[0] = 1;
                    }
                    let ignore: Vec<u8> = ignore.iter().zip(&fg).map(|(&i, &f)| i & (1 - f)).collect();
                    record(&scores, &fg, Some(&ignore), h, w)
                })
        })
    }

    // AP as an exact fraction num / den with den = lcm(1..=n) * F; both stay
    // below 2^53 for n <= 30, so one f64 division rounds it correctly.
    fn rational_ap(ranked_fg: &[bool]) -> f64 {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let n = ranked_fg.len() as u64;
        let lcm = (1..=n).fold(1u64, |l, k| l / gcd(l, k) * k);
        let fg = ranked_fg.iter().filter(|&&f| f).count() as u64;
        let mut tp = 0u64;
        let mut num = 0u64;
        for (i, &f) in ranked_fg.iter().enumerate() {
            if f {
                tp += 1;
                num += tp * (lcm / (i as u64 + 1));
            }
        }
        num as f64 / (lcm * fg) as f64
    }

    #[test]
    fn worked_example_is_correctly_rounded() {
        let rec = worked_example();
        let exact = px_pr_curve(
            std::slice::from_ref(&rec),
            &exact_grid(std::slice::from_ref(&rec)).unwrap(),
        )
        .unwrap();
        assert_eq!(exact.ap(), 5.0 / 6.0);
        assert_eq!(rational_ap(&[true, false, true, false]), 5.0 / 6.0);
    }

    proptest! {
        #[test]
        fn ap_is_correctly_rounded_for_distinct_scores(labels in prop::collection::vec(any::<bool>(), 1..30)) {
            prop_assume!(labels.iter().any(|&f| f));
            let n = labels.len();
            // Scores descend with the index, so the ranking is `labels` itself.
            let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64 / n as f64).collect();
            let fg: Vec<u8> = labels.iter().map(|&f| u8::from(f)).collect();
            let rec = record(&scores, &fg, None, 1, n);
            let curve = px_pr_curve(std::slice::from_ref(&rec), &exact_grid(std::slice::from_ref(&rec)).unwrap()).unwrap();
            prop_assert_eq!(curve.ap(), rational_ap(&labels));
        }

        #[test]
        fn recall_is_monotone_and_starts_at_one(recs in prop::collection::vec(arb_record(), 1..4)) {
            let curve = px_pr_curve(&recs, &ThresholdGrid::uniform(0.05).unwrap()).unwrap();
            prop_assert_eq!(curve.recall()[0], 1.0);
            prop_assert!(curve.recall().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!((0.0..=1.0).contains(&curve.ap()));
        }

        #[test]
        fn exact_mode_matches_sorting_oracle(recs in prop::collection::vec(arb_record(), 1..4)) {
            let curve = px_pr_curve(&recs, &exact_grid(&recs).unwrap()).unwrap();
            let mut pixels: Vec<(f64, bool)> = recs.iter().flat_map(|r| r.evaluated_pixels()).collect();
            prop_assert!((curve.ap() - sorting_oracle(&mut pixels)).abs() < 1e-12);
        }

        #[test]
        fn pooling_equals_concatenation(a in arb_record(), b in arb_record()) {
            let g = ThresholdGrid::uniform(0.01).unwrap();
            let joint = px_pr_curve(&[a.clone(), b.clone()], &g).unwrap();
            // Pixel union of both records as a single 1 x n record.
            let pixels: Vec<(f64, bool)> = a.evaluated_pixels().chain(b.evaluated_pixels()).collect();
            let scores: Vec<f64> = pixels.iter().map(|p| p.0).collect();
            let fg: Vec<u8> = pixels.iter().map(|p| u8::from(p.1)).collect();
            let merged = record(&scores, &fg, None, 1, pixels.len());
            let single = px_pr_curve(&[merged], &g).unwrap();
            prop_assert_eq!(joint, single);
        }

        #[test]
        fn ignored_scores_do_not_matter(rec in arb_record(), noise in prop::collection::vec(0.0f64..=1.0, 25)) {
            let ignore = rec.ignore_mask().unwrap().clone();
            let perturbed_scores: Vec<f64> = rec.score_map().as_slice().iter().enumerate()
                .map(|(i, &s)| if ignore.as_slice()[i] { noise[i % noise.len()] } else { s })
                .collect();
            let perturbed = MaskEvalRecord::new(
                "p",
                ScoreMap::new(rec.score_map().height(), rec.score_map().width(), perturbed_scores).unwrap(),
                rec.gt_mask().clone(),
                Some(ignore),
            ).unwrap();
            let g = ThresholdGrid::uniform(0.01).unwrap();
            prop_assert_eq!(px_pr_curve(std::slice::from_ref(&rec), &g).unwrap(), px_pr_curve(std::slice::from_ref(&perturbed), &g).unwrap());
            prop_assert_eq!(
                px_pr_curve(std::slice::from_ref(&rec), &exact_grid(std::slice::from_ref(&rec)).unwrap()).unwrap(),
                px_pr_curve(std::slice::from_ref(&perturbed), &exact_grid(std::slice::from_ref(&perturbed)).unwrap()).unwrap()
            );
            let canon = apply_ignore(&rec);
            prop_assert_eq!(px_pr_curve(&[canon], &g).unwrap(), px_pr_curve(&[rec], &g).unwrap());
        }
    }
}
