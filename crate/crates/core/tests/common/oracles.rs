//! Brute-force reference implementations, written independently of the
//! crate's algorithms.

use std::collections::VecDeque;

/// Average precision by ranking pixels, grouping equal scores, and adding
/// precision times the recall gained by each group.
pub fn sorted_pixel_ap(pixels: &[(f64, bool)]) -> f64 {
    let mut px = pixels.to_vec();
    px.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let total_fg = px.iter().filter(|p| p.1).count() as f64;
    let mut ap = 0.0;
    let (mut seen, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < px.len() {
        let mut j = i;
        let mut gained = 0;
        while j < px.len() && px[j].0 == px[i].0 {
            gained += usize::from(px[j].1);
            j += 1;
        }
        seen += j - i;
        tp += gained;
        ap += (tp as f64 / seen as f64) * (gained as f64 / total_fg);
        i = j;
    }
    ap
}

/// Breadth-first flood fill; labels follow the row-major scan order in
/// which unvisited foreground pixels are met.
pub fn flood_fill_labels(mask: &[bool], h: usize, w: usize, eight: bool) -> (Vec<u32>, u32) {
    let mut labels = vec![0u32; h * w];
    let mut next = 0u32;
    let offsets: &[(isize, isize)] = if eight {
        &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    } else {
        &[(-1, 0), (0, -1), (0, 1), (1, 0)]
    };
    for start in 0..h * w {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / w) as isize, (p % w) as isize);
            for &(dr, dc) in offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let q = nr as usize * w + nc as usize;
                if mask[q] && labels[q] == 0 {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
    }
    (labels, next)
}

/// Kendall tau-b by visiting every pair.
pub fn pairwise_kendall(a: &[f64], b: &[f64]) -> f64 {
    let (mut concordant, mut discordant, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = (a[i] - a[j]).signum() * f64::from(u8::from(a[i] != a[j]));
            let db = (b[i] - b[j]).signum() * f64::from(u8::from(b[i] != b[j]));
            match (da == 0.0, db == 0.0) {
                (true, true) => {}
                (true, false) => tie_a += 1,
                (false, true) => tie_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n_a = (concordant + discordant + tie_b) as f64;
    let n_b = (concordant + discordant + tie_a) as f64;
    (concordant - discordant) as f64 / (n_a * n_b).sqrt()
}
