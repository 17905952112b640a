//! Brute-force Hamming matching with ratio test and mutual cross-check.

use super::{Descriptor, Match};

#[inline]
pub fn hamming(a: &Descriptor, b: &Descriptor) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Best and second-best distances and the best index (lowest index on ties).
fn nearest_two(q: &Descriptor, set: &[Descriptor]) -> Option<(usize, u32, u32)> {
    let mut best = (usize::MAX, u32::MAX);
    let mut second = u32::MAX;
    for (i, d) in set.iter().enumerate() {
        let h = hamming(q, d);
        if h < best.1 {
            second = best.1;
            best = (i, h);
        } else if h < second {
            second = h;
        }
    }
    (best.0 != usize::MAX).then_some((best.0, best.1, second))
}

/// Match `desc1` against `desc2`. A match survives when its distance is below
/// `ratio` times the second-best distance (a lone candidate always passes)
/// and, with `cross_check`, when it is also the best match in reverse.
/// Output is ordered by `idx1`.
pub fn match_descriptors(desc1: &[Descriptor], desc2: &[Descriptor], ratio: f64, cross_check: bool) -> Vec<Match> {
    assert!(ratio > 0.0 && ratio <= 1.0, "ratio must be in (0, 1]");
    let reverse: Vec<Option<usize>> = if cross_check {
        desc2.iter().map(|d| nearest_two(d, desc1).map(|b| b.0)).collect()
    } else {
        Vec::new()
    };
    let mut out = Vec::new();
    for (i, d) in desc1.iter().enumerate() {
        let Some((j, best, second)) = nearest_two(d, desc2) else {
            continue;
        };
        let passes = second == u32::MAX || (best as f64) < ratio * second as f64;
        if !passes {
            continue;
        }
        if cross_check && reverse[j] != Some(i) {
            continue;
        }
        out.push(Match {
            idx1: i,
            idx2: j,
            hamming: best,
            epipolar_residual_px: f64::NAN,
        });
    }
    out
}
