//! Peak picking with minimum separation and prominence, in the style of the
//! usual scientific-python peak finder but restricted to strict local maxima.

use alloc::vec::Vec;

/// Thresholds for [`find_peaks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakParams {
    /// Absolute minimum prominence.
    pub min_prominence: f64,
    /// Minimum index distance between two kept peaks.
    pub min_separation: usize,
}

/// Indices of strict interior local maxima of `x` that survive the separation
/// and prominence filters, in increasing order.
///
/// Separation is enforced first: peaks are visited from highest to lowest
/// (earlier index wins on equal height) and any lower peak closer than
/// `min_separation` to a kept one is dropped. Prominence is then measured on
/// the full signal for each survivor.
pub fn find_peaks(x: &[f64], params: PeakParams) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let candidates: Vec<usize> = (1..n - 1).filter(|&i| x[i] > x[i - 1] && x[i] > x[i + 1]).collect();

    let kept = if params.min_separation > 1 && candidates.len() > 1 {
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            x[candidates[b]]
                .total_cmp(&x[candidates[a]])
                .then(candidates[a].cmp(&candidates[b]))
        });
        let mut keep = alloc::vec![true; candidates.len()];
        for &k in &order {
            if !keep[k] {
                continue;
            }
            let p = candidates[k];
            // neighbours on both sides that are too close
            let mut l = k;
            while l > 0 && p - candidates[l - 1] < params.min_separation {
                l -= 1;
                keep[l] = false;
            }
            let mut r = k + 1;
            while r < candidates.len() && candidates[r] - p < params.min_separation {
                keep[r] = false;
                r += 1;
            }
        }
        candidates
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&p, _)| p)
            .collect()
    } else {
        candidates
    };

    kept.into_iter()
        .filter(|&p| prominence(x, p) >= params.min_prominence)
        .collect()
}

/// Height of the peak at `p` above the higher of its two bases.
pub fn prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let mut left_min = h;
    for i in (0..p).rev() {
        if x[i] > h {
            break;
        }
        left_min = left_min.min(x[i]);
    }
    let mut right_min = h;
    for &v in &x[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}
