//! Score-map calibration, resizing, thresholding and connected components.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, BoundingBox, ScoreMap};

/// Default spacing of the uniform threshold sweep.
pub const DEFAULT_GRID_SPACING: f64 = 0.001;

/// Maps `s` affinely onto `[0, 1]`. A constant map becomes all zeros.
pub fn normalize_minmax(s: &ScoreMap) -> ScoreMap {
    let (lo, hi) = (s.min(), s.max());
    let span = hi - lo;
    let values = if span > 0.0 {
        s.as_slice().iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.0; s.as_slice().len()]
    };
    ScoreMap::new(s.height(), s.width(), values).expect("affine image of a finite map is finite")
}

/// Divides every score by the map maximum, which must be positive.
pub fn normalize_max(s: &ScoreMap) -> Result<ScoreMap> {
    let hi = s.max();
    if hi <= 0.0 {
        return Err(Error::Uncalibratable(format!(
            "max normalization needs a positive maximum, found {hi}"
        )));
    }
    s.map(|v| v / hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    MinMax,
    Max,
    None,
}

impl Normalization {
    pub fn apply(self, s: &ScoreMap) -> Result<ScoreMap> {
        match self {
            Normalization::MinMax => Ok(normalize_minmax(s)),
            Normalization::Max => normalize_max(s),
            Normalization::None => Ok(s.clone()),
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Normalization::MinMax),
            "max" => Ok(Normalization::Max),
            "none" => Ok(Normalization::None),
            other => Err(Error::InvalidArgument(format!("unknown normalization '{other}'"))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::MinMax => "minmax",
            Normalization::Max => "max",
            Normalization::None => "none",
        })
    }
}

/// Source coordinate of output pixel `dst` under pixel-center alignment.
fn source_coord(dst: usize, in_len: usize, out_len: usize) -> f64 {
    let s = (dst as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
    s.clamp(0.0, (in_len - 1) as f64)
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    (a + w * (b - a)).clamp(a.min(b), a.max(b))
}

/// Bilinear resize with pixel centers aligned (half-pixel offsets), edge
/// pixels clamped. Output values never leave `[min s, max s]`.
pub fn resize_bilinear(s: &ScoreMap, out_h: usize, out_w: usize) -> Result<ScoreMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    let (in_h, in_w) = (s.height(), s.width());
    if (in_h, in_w) == (out_h, out_w) {
        return Ok(s.clone());
    }
    let cols: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|x| {
            let sx = source_coord(x, in_w, out_w);
            let x0 = sx.floor() as usize;
            (x0, (x0 + 1).min(in_w - 1), sx - x0 as f64)
        })
        .collect();
    let mut values = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = source_coord(y, in_h, out_h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = sy - y0 as f64;
        for &(x0, x1, wx) in &cols {
            let top = lerp(s.get(y0, x0), s.get(y0, x1), wx);
            let bottom = lerp(s.get(y1, x0), s.get(y1, x1), wx);
            values.push(lerp(top, bottom, wy));
        }
    }
    ScoreMap::new(out_h, out_w, values)
}

/// Nearest-neighbour resize using the same pixel-center convention.
pub fn resize_nearest(s: &ScoreMap, out_h: usize, out_w: usize) -> Result<ScoreMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    let pick = |dst: usize, in_len: usize, out_len: usize| {
        (((dst as f64 + 0.5) * in_len as f64 / out_len as f64) as usize).min(in_len - 1)
    };
    let mut values = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = pick(y, s.height(), out_h);
        for x in 0..out_w {
            values.push(s.get(sy, pick(x, s.width(), out_w)));
        }
    }
    ScoreMap::new(out_h, out_w, values)
}

/// `mask[i][j] = s[i][j] >= tau`.
pub fn threshold(s: &ScoreMap, tau: f64) -> BinaryMask {
    let values = s.as_slice().iter().map(|&v| v >= tau).collect();
    BinaryMask::new(s.height(), s.width(), values).expect("same dimensions as the score map")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThresholdMode {
    /// `tau_l = l * spacing` for `l = 0..=ceil(1 / spacing)`, capped at 1.
    Grid,
    /// Distinct score values of the evaluated maps.
    Exact,
}

/// Ascending list of score-map thresholds swept by the metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid {
    mode: ThresholdMode,
    spacing: Option<f64>,
    thresholds: Vec<f64>,
}

impl ThresholdGrid {
    pub fn uniform(spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing <= 1.0) {
            return Err(Error::InvalidGrid(format!("spacing {spacing} not in (0, 1]")));
        }
        // Guard against 1/spacing landing a hair above an integer.
        let steps = (1.0 / spacing - 1e-9).ceil().max(1.0) as usize;
        let mut thresholds: Vec<f64> = (0..steps).map(|l| (l as f64 * spacing).min(1.0)).collect();
        thresholds.push(1.0);
        thresholds.dedup();
        Ok(Self {
            mode: ThresholdMode::Grid,
            spacing: Some(spacing),
            thresholds,
        })
    }

    /// EXACT mode over the distinct values of the given maps.
    pub fn exact<'a>(maps: impl IntoIterator<Item = &'a ScoreMap>) -> Result<Self> {
        Self::from_values(maps.into_iter().flat_map(|m| m.as_slice().iter().copied()))
    }

    /// EXACT mode over an arbitrary collection of calibrated values.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut thresholds: Vec<f64> = values.into_iter().collect();
        if thresholds.is_empty() {
            return Err(Error::InvalidGrid("no values to derive thresholds from".into()));
        }
        if let Some(v) = thresholds.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGrid(format!(
                "threshold {v} outside [0, 1]; calibrate the score maps first"
            )));
        }
        thresholds.sort_by(f64::total_cmp);
        // -0.0 and 0.0 compare equal under `>=`; keep one of them.
        thresholds.dedup_by(|a, b| a == b);
        Ok(Self {
            mode: ThresholdMode::Exact,
            spacing: None,
            thresholds,
        })
    }

    pub fn mode(&self) -> ThresholdMode {
        self.mode
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Number of thresholds `tau` with `tau <= value`, i.e. how many
    /// thresholds a pixel scoring `value` survives.
    pub fn levels_passed(&self, value: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= value)
    }
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self::uniform(DEFAULT_GRID_SPACING).expect("default spacing is valid")
    }
}

/// How thresholds are chosen before the dataset is seen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSpec {
    Grid(f64),
    Exact,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::Grid(DEFAULT_GRID_SPACING)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Connectivity {
    /// N, S, E, W neighbours.
    Four,
    /// All eight neighbours.
    #[default]
    Eight,
}

impl Connectivity {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }

    pub fn as_number(self) -> u32 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Labelled foreground components. Label 0 is background; labels `1..=count`
/// follow the row-major order of each component's first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSet {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    count: u32,
    connectivity: Connectivity,
}

impl ComponentSet {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn new() -> Self {
        Self { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling.
pub fn connected_components(m: &BinaryMask, connectivity: Connectivity) -> ComponentSet {
    let (h, w) = (m.height(), m.width());
    let fg = m.as_slice();
    // Provisional labels are offset by one so that 0 stays background.
    let mut provisional = vec![0u32; h * w];
    let mut sets = DisjointSets::new();

    let mut previous: Vec<u32> = Vec::with_capacity(4);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !fg[i] {
                continue;
            }
            previous.clear();
            if c > 0 {
                previous.push(provisional[i - 1]);
            }
            if r > 0 {
                previous.push(provisional[i - w]);
                if connectivity == Connectivity::Eight {
                    if c > 0 {
                        previous.push(provisional[i - w - 1]);
                    }
                    if c + 1 < w {
                        previous.push(provisional[i - w + 1]);
                    }
                }
            }
            let mut own = 0;
            for &p in previous.iter().filter(|&&p| p != 0) {
                if own == 0 {
                    own = p;
                } else {
                    sets.union(own - 1, p - 1);
                }
            }
            if own == 0 {
                own = sets.make() + 1;
            }
            provisional[i] = own;
        }
    }

    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    let labels = provisional
        .iter()
        .map(|&p| {
            if p == 0 {
                return 0;
            }
            let root = sets.find(p - 1) as usize;
            if final_of_root[root] == 0 {
                count += 1;
                final_of_root[root] = count;
            }
            final_of_root[root]
        })
        .collect();

    ComponentSet {
        height: h,
        width: w,
        labels,
        count,
        connectivity,
    }
}

/// Tight box around one connected component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentBox {
    pub label: u32,
    pub bbox: BoundingBox,
    /// Pixel count of the component (not of its box).
    pub area: u64,
}

/// One tight box per component, largest area first, ties by label.
pub fn component_boxes(c: &ComponentSet) -> Vec<ComponentBox> {
    let n = c.count() as usize;
    if n == 0 {
        return Vec::new();
    }
    // (min_row, min_col, max_row, max_col, area)
    let mut acc = vec![(usize::MAX, usize::MAX, 0usize, 0usize, 0u64); n];
    for (i, &label) in c.labels().iter().enumerate() {
        if label == 0 {
            continue;
        }
        let (r, col) = (i / c.width(), i % c.width());
        let e = &mut acc[label as usize - 1];
        e.0 = e.0.min(r);
        e.1 = e.1.min(col);
        e.2 = e.2.max(r);
        e.3 = e.3.max(col);
        e.4 += 1;
    }
    let mut boxes: Vec<ComponentBox> = acc
        .into_iter()
        .enumerate()
        .map(|(k, (r0, c0, r1, c1, area))| ComponentBox {
            label: k as u32 + 1,
            bbox: BoundingBox::new(c0 as u32, r0 as u32, c1 as u32 + 1, r1 as u32 + 1)
                .expect("every label owns at least one pixel"),
            area,
        })
        .collect();
    boxes.sort_by(|a, b| b.area.cmp(&a.area).then(a.label.cmp(&b.label)));
    boxes
}
