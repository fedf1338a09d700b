//! Value types shared by every metric: boxes, binary masks and score maps.
//!
//! Boxes use half-open integer pixel coordinates `[x0, x1) x [y0, y1)`, so
//! areas and intersections are exact pixel counts. Grids are stored
//! row-major with `index = row * width + col`.

use crate::error::{Error, Result};

/// Axis-aligned box over half-open pixel intervals. Always has positive area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl BoundingBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidBox { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn x0(&self) -> u32 {
        self.x0
    }

    pub fn y0(&self) -> u32 {
        self.y0
    }

    pub fn x1(&self) -> u32 {
        self.x1
    }

    pub fn y1(&self) -> u32 {
        self.y1
    }

    pub fn width(&self) -> u64 {
        u64::from(self.x1 - self.x0)
    }

    pub fn height(&self) -> u64 {
        u64::from(self.y1 - self.y0)
    }

    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }

    /// Number of pixels shared by both boxes.
    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let w = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let h = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        u64::from(w) * u64::from(h)
    }

    pub fn fits_in(&self, height: usize, width: usize) -> bool {
        self.x1 as usize <= width && self.y1 as usize <= height
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.y0 as usize..self.y1 as usize).contains(&row) && (self.x0 as usize..self.x1 as usize).contains(&col)
    }
}

/// Intersection over union of two boxes.
///
/// Both areas are exact integer counts; the only rounding is the final
/// division, so the result is the correctly rounded value of the rational IoU.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// H x W grid of foreground flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        Ok(Self { height, width, values })
    }

    /// Builds a mask from `0`/`1` bytes; any other byte is rejected.
    pub fn from_u8(height: usize, width: usize, values: &[u8]) -> Result<Self> {
        check_dims(height, width, values.len())?;
        let values = values
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "mask value {other} at index {i} is not 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.values
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: bool) {
        self.values[row * self.width + col] = value;
    }
}

/// H x W grid of finite localization scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { height, width, values })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(height * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::InvalidArgument("ragged rows".into()));
            }
            values.extend_from_slice(row);
        }
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when every value lies in `[0, 1]`.
    pub fn is_calibrated(&self) -> bool {
        self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Applies `f` pixel-wise, rejecting non-finite results.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.values.iter().map(|&v| f(v)).collect())
    }
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive, got {height}x{width}"
        )));
    }
    if height.checked_mul(width) != Some(len) {
        return Err(Error::InvalidArgument(format!(
            "{height}x{width} grid needs {} values, got {len}",
            height.saturating_mul(width)
        )));
    }
    Ok(())
}
