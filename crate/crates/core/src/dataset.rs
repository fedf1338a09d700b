//! Split manifests and on-disk formats for score maps and masks.
//!
//! # Manifest
//!
//! JSON Lines. The first non-blank, non-`#` line names the split; every
//! following line is one image:
//!
//! ```text
//! {"split": "test"}
//! {"image_id": "a", "width": 20, "height": 10, "boxes": [[0, 0, 10, 10]]}
//! {"image_id": "b", "width": 4, "height": 4, "mask": "masks/b.png", "ignore": "ignore/b.png"}
//! {"image_id": "c", "width": 4, "height": 4}
//! ```
//!
//! Boxes are `[x0, y0, x1, y1]` in half-open pixel coordinates: the box covers
//! columns `x0..x1` and rows `y0..y1`, so `x1 - x0` is its width. Mask paths
//! are relative to the manifest's directory. Entries without annotation are
//! only allowed in the `train-weaksup` split. Masks are loaded while the
//! manifest is read, so an accepted manifest never fails on later I/O.
//!
//! # Score maps
//!
//! Raw `.wsm`: magic `WSLM`, version byte `1`, three zero bytes, `u32` height
//! and `u32` width (little endian), then `height * width` little-endian `f32`
//! values in row-major order. 8-bit grayscale PNGs are also read, value
//! `v / 255`, which is lossy.
//!
//! For an image id, a score-map directory is searched for `<id>.wsm`, then
//! `<id>.png`, then `<id>` itself.
//!
//! # Masks
//!
//! 8-bit grayscale PNG, `255` foreground and `0` background. Ignore masks use
//! the same encoding with `255` meaning "excluded from evaluation".

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, BoundingBox, ScoreMap};

pub const RAW_MAGIC: &[u8; 4] = b"WSLM";
pub const RAW_VERSION: u8 = 1;
const RAW_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train-weaksup")]
    TrainWeaksup,
    #[serde(rename = "train-fullsup")]
    TrainFullsup,
    #[serde(rename = "test")]
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::TrainWeaksup => "train-weaksup",
            Split::TrainFullsup => "train-fullsup",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    Boxes(Vec<BoundingBox>),
    Masks {
        mask_path: PathBuf,
        ignore_path: Option<PathBuf>,
        mask: BinaryMask,
        ignore: Option<BinaryMask>,
    },
    /// Image-level label only (weakly supervised training split).
    Unlabeled,
}

impl Annotation {
    pub fn kind(&self) -> &'static str {
        match self {
            Annotation::Boxes(_) => "boxes",
            Annotation::Masks { .. } => "masks",
            Annotation::Unlabeled => "unlabeled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub annotation: Annotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    split: Split,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryLine {
    image_id: String,
    width: usize,
    height: usize,
    #[serde(default)]
    boxes: Option<Vec<[u32; 4]>>,
    #[serde(default)]
    mask: Option<PathBuf>,
    #[serde(default)]
    ignore: Option<PathBuf>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<SplitManifest> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut split = None;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let Some(split) = split else {
            let header: HeaderLine =
                serde_json::from_str(text).map_err(|e| parse_err(line_no, format!("expected split header: {e}")))?;
            split = Some(header.split);
            continue;
        };
        let raw: EntryLine = serde_json::from_str(text).map_err(|e| parse_err(line_no, e.to_string()))?;
        if raw.width == 0 || raw.height == 0 {
            return Err(parse_err(
                line_no,
                format!("image '{}' has an empty frame", raw.image_id),
            ));
        }
        if !seen.insert(raw.image_id.clone()) {
            return Err(parse_err(line_no, format!("duplicate image_id '{}'", raw.image_id)));
        }
        let annotation = match (raw.boxes, raw.mask, raw.ignore) {
            (Some(boxes), None, None) => {
                if boxes.is_empty() {
                    return Err(parse_err(
                        line_no,
                        format!("image '{}' has an empty box list", raw.image_id),
                    ));
                }
                let boxes = boxes
                    .iter()
                    .map(|&[x0, y0, x1, y1]| {
                        let b = BoundingBox::new(x0, y0, x1, y1)?;
                        if !b.fits_in(raw.height, raw.width) {
                            return Err(Error::BoxOutOfFrame {
                                x0,
                                y0,
                                x1,
                                y1,
                                width: raw.width,
                                height: raw.height,
                            });
                        }
                        Ok(b)
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| parse_err(line_no, format!("malformed box for '{}': {e}", raw.image_id)))?;
                Annotation::Boxes(boxes)
            }
            (None, Some(mask_rel), ignore_rel) => {
                let load = |rel: &Path| -> Result<(PathBuf, BinaryMask)> {
                    let full = base.join(rel);
                    let m = load_mask(&full, raw.height, raw.width)
                        .map_err(|e| parse_err(line_no, format!("image '{}': {e}", raw.image_id)))?;
                    Ok((full, m))
                };
                let (mask_path, mask) = load(&mask_rel)?;
                let (ignore_path, ignore) = match ignore_rel {
                    Some(rel) => {
                        let (p, m) = load(&rel)?;
                        (Some(p), Some(m))
                    }
                    None => (None, None),
                };
                if let Some(ig) = &ignore {
                    if mask.as_slice().iter().zip(ig.as_slice()).any(|(&f, &g)| f && g) {
                        return Err(parse_err(
                            line_no,
                            format!("image '{}': ignore mask overlaps foreground", raw.image_id),
                        ));
                    }
                }
                Annotation::Masks {
                    mask_path,
                    ignore_path,
                    mask,
                    ignore,
                }
            }
            (None, None, None) if split == Split::TrainWeaksup => Annotation::Unlabeled,
            (None, None, None) => {
                return Err(parse_err(
                    line_no,
                    format!(
                        "image '{}' needs boxes or a mask in split {}",
                        raw.image_id,
                        split.name()
                    ),
                ))
            }
            _ => {
                return Err(parse_err(
                    line_no,
                    format!(
                        "image '{}': give either boxes or mask (+ optional ignore), not both",
                        raw.image_id
                    ),
                ))
            }
        };
        entries.push(ManifestEntry {
            image_id: raw.image_id,
            width: raw.width,
            height: raw.height,
            annotation,
        });
    }
    let split = split.ok_or_else(|| parse_err(1, "missing split header".into()))?;
    Ok(SplitManifest { split, entries })
}

/// Image ids that occur in more than one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitOverlap {
    pub image_id: String,
    pub splits: Vec<Split>,
}

/// Lists every id shared between splits; an empty report means the splits
/// are disjoint.
pub fn check_disjoint(splits: &[SplitManifest]) -> Vec<SplitOverlap> {
    let mut owners: BTreeMap<&str, Vec<Split>> = BTreeMap::new();
    for manifest in splits {
        for entry in &manifest.entries {
            let list = owners.entry(&entry.image_id).or_default();
            if !list.contains(&manifest.split) {
                list.push(manifest.split);
            }
        }
    }
    owners
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(id, mut splits)| {
            splits.sort();
            SplitOverlap {
                image_id: id.to_string(),
                splits,
            }
        })
        .collect()
}

pub fn encode_raw_scoremap(map: &ScoreMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 4 * map.as_slice().len());
    out.extend_from_slice(RAW_MAGIC);
    out.push(RAW_VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for &v in map.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw_scoremap(bytes: &[u8], path: &Path) -> Result<ScoreMap> {
    if bytes.len() < RAW_HEADER_LEN || &bytes[..4] != RAW_MAGIC {
        return Err(Error::format(path, "missing WSLM magic"));
    }
    if bytes[4] != RAW_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", bytes[4])));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(Error::format(path, "non-zero header padding"));
    }
    let height = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let width = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(RAW_HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::format(
            path,
            format!(
                "{height}x{width} map needs {expected:?} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let values = bytes[RAW_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    ScoreMap::new(height, width, values).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes the raw format. Values are narrowed to `f32`.
pub fn write_scoremap_raw(map: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_raw_scoremap(map)).map_err(|e| Error::io(path, e))
}

fn read_gray8(path: &Path) -> Result<GrayImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| Error::format(path, e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(g) => Ok(g),
        other => Err(Error::format(
            path,
            format!("expected 8-bit grayscale, found {:?}", other.color()),
        )),
    }
}

fn check_expected(found: (usize, usize), expected: Option<(usize, usize)>) -> Result<()> {
    match expected {
        Some((h, w)) if (h, w) != found => Err(Error::DimensionMismatch {
            expected_h: h,
            expected_w: w,
            found_h: found.0,
            found_w: found.1,
        }),
        _ => Ok(()),
    }
}

/// Reads a raw or 8-bit PNG score map, optionally checking its size.
pub fn load_scoremap(path: impl AsRef<Path>, expected: Option<(usize, usize)>) -> Result<ScoreMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let map = if bytes.starts_with(RAW_MAGIC) {
        decode_raw_scoremap(&bytes, path)?
    } else {
        let img = read_gray8(path)?;
        let (w, h) = img.dimensions();
        let values = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
        ScoreMap::new(h as usize, w as usize, values)?
    };
    check_expected((map.height(), map.width()), expected).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(map)
}

/// Path of the score map for `image_id` inside `dir`.
pub fn resolve_scoremap(dir: &Path, image_id: &str) -> Result<PathBuf> {
    [
        format!("{image_id}.wsm"),
        format!("{image_id}.png"),
        image_id.to_string(),
    ]
    .into_iter()
    .map(|name| dir.join(name))
    .find(|p| p.is_file())
    .ok_or_else(|| Error::MissingScoreMap {
        image_id: image_id.to_string(),
        dir: dir.to_path_buf(),
    })
}

/// Reads a 0/255 PNG mask of the given size.
pub fn load_mask(path: impl AsRef<Path>, height: usize, width: usize) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = read_gray8(path)?;
    let (w, h) = img.dimensions();
    check_expected((h as usize, w as usize), Some((height, width))).map_err(|e| Error::format(path, e.to_string()))?;
    let values = img
        .as_raw()
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0 => Ok(false),
            255 => Ok(true),
            other => Err(Error::format(
                path,
                format!("pixel {i} has value {other}; masks use 0 and 255"),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    BinaryMask::new(height, width, values)
}

pub fn write_mask_png(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}
