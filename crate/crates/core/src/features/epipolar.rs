//! Epipolar residuals and navigation-based outlier gating.

use nalgebra::{Matrix3, Vector3};

use super::{FeatureError, Keypoint, Match};
use crate::camera::{CameraModel, RelativePose};

/// Symmetric epipolar distance: the larger of the distances from `p2` to the
/// line `F p1` and from `p1` to the line `F^T p2`, in pixels.
pub fn symmetric_epipolar_distance(f: &Matrix3<f64>, p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let x1 = Vector3::new(p1.0, p1.1, 1.0);
    let x2 = Vector3::new(p2.0, p2.1, 1.0);
    let l2 = f * x1;
    let l1 = f.transpose() * x2;
    let e = x2.dot(&l2).abs();
    let d2 = e / l2.xy().norm().max(1e-300);
    let d1 = e / l1.xy().norm().max(1e-300);
    d1.max(d2)
}

/// Keep matches whose symmetric epipolar distance under the known relative
/// pose is below `threshold_px`. Survivors keep their order and carry the
/// residual.
pub fn nav_epipolar_reject(
    matches: &[Match],
    kps1: &[Keypoint],
    kps2: &[Keypoint],
    rel: &RelativePose,
    cam: &CameraModel,
    threshold_px: f64,
) -> Result<Vec<Match>, FeatureError> {
    if !(rel.baseline_m > 0.0) {
        return Err(FeatureError::ZeroBaseline);
    }
    let f = rel.fundamental(cam);
    Ok(matches
        .iter()
        .filter_map(|m| {
            let (a, b) = (&kps1[m.idx1], &kps2[m.idx2]);
            let r = symmetric_epipolar_distance(&f, (a.x, a.y), (b.x, b.y));
            (r < threshold_px).then_some(Match {
                epipolar_residual_px: r,
                ..*m
            })
        })
        .collect())
}
