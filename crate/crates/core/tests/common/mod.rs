#![allow(dead_code)]

pub mod oracles;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use wsol_eval::dataset::{write_mask_png, write_scoremap_raw};
use wsol_eval::geometry::{BinaryMask, BoundingBox, ScoreMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bbox(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
    BoundingBox::new(x0, y0, x1, y1).unwrap()
}

/// 1 inside `b`, 0 elsewhere.
pub fn box_map(h: usize, w: usize, b: &BoundingBox) -> ScoreMap {
    let v = (0..h * w)
        .map(|i| f64::from(u8::from(b.contains(i / w, i % w))))
        .collect();
    ScoreMap::new(h, w, v).unwrap()
}

/// Random box inside an `h x w` frame with sides in `min_side..=max_side`.
pub fn random_box(rng: &mut ChaCha8Rng, h: usize, w: usize, min_side: u32, max_side: u32) -> BoundingBox {
    let bw = rng.random_range(min_side..=max_side.min(w as u32));
    let bh = rng.random_range(min_side..=max_side.min(h as u32));
    let x0 = rng.random_range(0..=w as u32 - bw);
    let y0 = rng.random_range(0..=h as u32 - bh);
    bbox(x0, y0, x0 + bw, y0 + bh)
}

/// Sum of isotropic bumps at random centres, rescaled to `[0, 1]`.
pub fn blob_map(rng: &mut ChaCha8Rng, h: usize, w: usize, n_blobs: usize) -> ScoreMap {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(0.8..(h.min(w) as f64 / 4.0).max(1.0)),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let v: Vec<f64> = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            blobs
                .iter()
                .map(|&(cr, cc, s, a)| a * (-((r - cr).powi(2) + (c - cc).powi(2)) / (2.0 * s * s)).exp())
                .sum::<f64>()
                + 1e-3 * rng.random::<f64>()
        })
        .collect();
    let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    ScoreMap::new(h, w, v.iter().map(|x| (x - lo) / (hi - lo)).collect()).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    BinaryMask::new(h, w, (0..h * w).map(|_| rng.random_bool(density)).collect()).unwrap()
}

/// Temporary dataset directory with a manifest, score maps and masks.
pub struct Dataset {
    pub dir: TempDir,
    lines: Vec<String>,
}

impl Dataset {
    pub fn new(split: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("maps")).unwrap();
        fs::create_dir(dir.path().join("masks")).unwrap();
        Self {
            dir,
            lines: vec![format!("{{\"split\": \"{split}\"}}")],
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn manifest(&self) -> PathBuf {
        self.path("manifest.jsonl")
    }

    pub fn maps(&self) -> PathBuf {
        self.path("maps")
    }

    pub fn add_map(&self, id: &str, map: &ScoreMap) {
        write_scoremap_raw(map, self.maps().join(format!("{id}.wsm"))).unwrap();
    }

    pub fn add_boxes(&mut self, id: &str, h: usize, w: usize, boxes: &[BoundingBox], map: Option<&ScoreMap>) {
        let coords: Vec<String> = boxes
            .iter()
            .map(|b| format!("[{}, {}, {}, {}]", b.x0(), b.y0(), b.x1(), b.y1()))
            .collect();
        self.lines.push(format!(
            "{{\"image_id\": \"{id}\", \"width\": {w}, \"height\": {h}, \"boxes\": [{}]}}",
            coords.join(", ")
        ));
        if let Some(m) = map {
            self.add_map(id, m);
        }
        self.flush();
    }

    pub fn add_mask(&mut self, id: &str, mask: &BinaryMask, ignore: Option<&BinaryMask>, map: Option<&ScoreMap>) {
        write_mask_png(mask, self.path(&format!("masks/{id}.png"))).unwrap();
        let ignore_field = match ignore {
            Some(ig) => {
                write_mask_png(ig, self.path(&format!("masks/{id}_ignore.png"))).unwrap();
                format!(", \"ignore\": \"masks/{id}_ignore.png\"")
            }
            None => String::new(),
        };
        self.lines.push(format!(
            "{{\"image_id\": \"{id}\", \"width\": {}, \"height\": {}, \"mask\": \"masks/{id}.png\"{ignore_field}}}",
            mask.width(),
            mask.height()
        ));
        if let Some(m) = map {
            self.add_map(id, m);
        }
        self.flush();
    }

    fn flush(&self) {
        fs::write(self.manifest(), self.lines.join("\n") + "\n").unwrap();
    }
}

/// Three images of different sizes whose maps are 1 exactly inside the box.
pub fn perfect_box_dataset() -> Dataset {
    let mut ds = Dataset::new("test");
    for (id, h, w, b) in [
        ("a", 10, 12, bbox(2, 3, 8, 7)),
        ("b", 8, 8, bbox(0, 0, 4, 4)),
        ("c", 16, 9, bbox(1, 5, 9, 16)),
    ] {
        let map = box_map(h, w, &b);
        ds.add_boxes(id, h, w, &[b], Some(&map));
    }
    ds
}

/// The 2x2 map `[[0.9, 0.6], [0.4, 0.1]]` with the left column foreground.
pub fn worked_mask_dataset() -> Dataset {
    let mut ds = Dataset::new("test");
    let map = ScoreMap::from_rows(&[[0.9, 0.6], [0.4, 0.1]]).unwrap();
    let mask = BinaryMask::from_u8(2, 2, &[1, 0, 1, 0]).unwrap();
    ds.add_mask("worked", &mask, None, Some(&map));
    ds
}

pub fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wsol-eval"))
}

pub fn run(args: &[&str]) -> Output {
    cli().args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
