//! Fundamental-matrix RANSAC with the normalized eight-point algorithm.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::epipolar::symmetric_epipolar_distance;
use super::{FeatureError, Keypoint, Match};

const CONFIDENCE: f64 = 0.999;

/// Similarity transform moving the centroid to the origin with mean distance
/// sqrt(2).
fn normalizer(pts: &[(f64, f64)]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (cx, cy) = (cx / n, cy / n);
    let mean = pts.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Least-squares fundamental matrix from `>= 8` correspondences, rank 2.
pub fn eight_point(p1: &[(f64, f64)], p2: &[(f64, f64)]) -> Option<Matrix3<f64>> {
    let n = p1.len();
    if n < 8 || p2.len() != n {
        return None;
    }
    let t1 = normalizer(p1);
    let t2 = normalizer(p2);
    // zero rows pad to at least nine so the SVD exposes the full right null space
    let mut a = DMatrix::<f64>::zeros(n.max(9), 9);
    for i in 0..n {
        let x = t1 * Vector3::new(p1[i].0, p1[i].1, 1.0);
        let y = t2 * Vector3::new(p2[i].0, p2[i].1, 1.0);
        let row = [
            y.x * x.x,
            y.x * x.y,
            y.x,
            y.y * x.x,
            y.y * x.y,
            y.y,
            x.x,
            x.y,
            1.0,
        ];
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let f = v_t.row(imin);
    let f = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let svd = f.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut s = svd.singular_values;
    let imin = s.imin();
    s[imin] = 0.0;
    let f = u * Matrix3::from_diagonal(&s) * v_t;
    let f = t2.transpose() * f * t1;
    let norm = f.norm();
    (norm > 0.0 && norm.is_finite()).then(|| f / norm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacOutcome {
    /// Inlier matches in their original order.
    pub inliers: Vec<Match>,
    pub fundamental: Matrix3<f64>,
    pub iterations: usize,
}

fn inlier_mask(f: &Matrix3<f64>, p1: &[(f64, f64)], p2: &[(f64, f64)], thr: f64) -> Vec<bool> {
    p1.iter()
        .zip(p2)
        .map(|(a, b)| symmetric_epipolar_distance(f, *a, *b) < thr)
        .collect()
}

/// Reject matches inconsistent with the dominant epipolar geometry.
/// Deterministic for a fixed `seed`.
pub fn ransac_reject(
    matches: &[Match],
    kps1: &[Keypoint],
    kps2: &[Keypoint],
    threshold_px: f64,
    max_iters: usize,
    seed: u64,
) -> Result<RansacOutcome, FeatureError> {
    let n = matches.len();
    if n < 8 {
        return Err(FeatureError::TooFewMatches(n));
    }
    let p1: Vec<(f64, f64)> = matches.iter().map(|m| (kps1[m.idx1].x, kps1[m.idx1].y)).collect();
    let p2: Vec<(f64, f64)> = matches.iter().map(|m| (kps2[m.idx2].x, kps2[m.idx2].y)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Matrix3<f64>, Vec<bool>)> = None;
    let mut needed = max_iters;
    let mut iterations = 0;
    while iterations < needed.min(max_iters) {
        iterations += 1;
        let idx = sample(&mut rng, n, 8);
        let s1: Vec<_> = idx.iter().map(|i| p1[i]).collect();
        let s2: Vec<_> = idx.iter().map(|i| p2[i]).collect();
        let Some(f) = eight_point(&s1, &s2) else {
            continue;
        };
        let mask = inlier_mask(&f, &p1, &p2, threshold_px);
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|b| count > b.0) {
            let w = count as f64 / n as f64;
            needed = if w >= 1.0 {
                0
            } else {
                let denom = (1.0 - w.powi(8)).ln();
                if denom < 0.0 {
                    ((1.0 - CONFIDENCE).ln() / denom).ceil() as usize
                } else {
                    max_iters
                }
            };
            best = Some((count, f, mask));
        }
    }
    let Some((count, mut f, mut mask)) = best else {
        return Err(FeatureError::DegenerateSample);
    };
    // refit on the consensus set; keep it only if it does not lose support
    if count >= 8 {
        let r1: Vec<_> = (0..n).filter(|&i| mask[i]).map(|i| p1[i]).collect();
        let r2: Vec<_> = (0..n).filter(|&i| mask[i]).map(|i| p2[i]).collect();
        if let Some(refit) = eight_point(&r1, &r2) {
            let m2 = inlier_mask(&refit, &p1, &p2, threshold_px);
            if m2.iter().filter(|&&b| b).count() >= count {
                f = refit;
                mask = m2;
            }
        }
    }
    let inliers = matches.iter().zip(&mask).filter(|(_, &k)| k).map(|(m, _)| *m).collect();
    Ok(RansacOutcome {
        inliers,
        fundamental: f,
        iterations,
    })
}
