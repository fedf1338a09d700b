//! Kendall's tau-b with tie correction, in O(n log n) (Knight's algorithm).

use crate::error::{Error, Result};

/// Number of unordered pairs inside runs of equal adjacent items.
fn tied_pairs<T>(items: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for i in 1..=items.len() {
        if i < items.len() && eq(&items[i - 1], &items[i]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total
}

/// Stable merge sort of `v` that returns the number of inversions removed.
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Tau-b rank correlation between two equally long score lists.
///
/// `tau_b = (C - D) / sqrt((n0 - n1) (n0 - n2))` with `n0 = n(n-1)/2` and
/// `n1`, `n2` the pairs tied in the first and second list.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "rankings differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("kendall tau needs at least two items".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("rankings contain NaN".into()));
    }
    let n = a.len() as u64;
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));

    let ties_a = tied_pairs(&pairs, |p, q| p.0 == q.0);
    let ties_joint = tied_pairs(&pairs, |p, q| p.0 == q.0 && p.1 == q.1);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let discordant = sort_counting_swaps(&mut ys, &mut buf);
    let ties_b = tied_pairs(&ys, |p, q| p == q);

    let n0 = n * (n - 1) / 2;
    let numerator = n0 as i128 - ties_a as i128 - ties_b as i128 + ties_joint as i128 - 2 * discordant as i128;
    let denominator = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    if denominator == 0.0 {
        return Err(Error::InvalidArgument(
            "kendall tau undefined: one ranking is entirely tied".into(),
        ));
    }
    Ok(numerator as f64 / denominator)
}
