//! No-learning and supervision-construction baselines.

use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, BoundingBox, ScoreMap};
use crate::scoremap::normalize_minmax;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    height: usize,
    width: usize,
    sigma: f64,
}

impl GaussianSpec {
    pub fn new(height: usize, width: usize, sigma: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "gaussian frame must be positive, got {height}x{width}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { height, width, sigma })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Isotropic Gaussian centred on the frame, min-max calibrated.
///
/// The centre sits at `((H - 1) / 2, (W - 1) / 2)`, a half-pixel position for
/// even sides, so the map is mirror-symmetric on both axes. Every score is a
/// decreasing function of the squared distance to the centre; very small
/// sigmas on large frames underflow to zero far from the centre.
pub fn center_gaussian(spec: &GaussianSpec) -> ScoreMap {
    let ci = (spec.height as f64 - 1.0) / 2.0;
    let cj = (spec.width as f64 - 1.0) / 2.0;
    let denom = 2.0 * spec.sigma * spec.sigma;
    let mut values = Vec::with_capacity(spec.height * spec.width);
    for i in 0..spec.height {
        let di = i as f64 - ci;
        for j in 0..spec.width {
            let dj = j as f64 - cj;
            values.push((-(di * di + dj * dj) / denom).exp());
        }
    }
    let raw = ScoreMap::new(spec.height, spec.width, values).expect("exp of a finite value is finite");
    normalize_minmax(&raw)
}

/// Rasterises the union of `boxes`: the fully supervised training target
/// built from box annotations.
pub fn boxes_to_mask(boxes: &[BoundingBox], height: usize, width: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::zeros(height, width)?;
    for b in boxes {
        if !b.fits_in(height, width) {
            return Err(Error::BoxOutOfFrame {
                x0: b.x0(),
                y0: b.y0(),
                x1: b.x1(),
                y1: b.y1(),
                width,
                height,
            });
        }
        for r in b.y0() as usize..b.y1() as usize {
            for c in b.x0() as usize..b.x1() as usize {
                mask.set(r, c, true);
            }
        }
    }
    Ok(mask)
}
