//! Sub-pixel refinement of matched positions by affine Lucas-Kanade.

use nalgebra::{Matrix3, SMatrix, SVector};

use super::{Keypoint, Match};
use crate::image::FloatImage;

const HALF_WINDOW: i32 = 10;
const MAX_ITERS: usize = 30;
const CONVERGED_PX: f64 = 1e-3;
/// A refined point may not leave this radius around its detected position.
pub const MAX_SHIFT_PX: f64 = 2.0;

type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

fn warp_of(p: &Vec6) -> Matrix3<f64> {
    Matrix3::new(1.0 + p[0], p[2], p[4], p[1], 1.0 + p[3], p[5], 0.0, 0.0, 1.0)
}

/// Align the window around `p2` in `img2` to the window around `p1` in
/// `img1` under an affine warp (inverse compositional), starting from a pure
/// translation. The refined position is the image of the window center.
/// Returns `None` when the window leaves the image, the system is singular,
/// or the point drifts further than `MAX_SHIFT_PX`.
pub fn refine_point(img1: &FloatImage, img2: &FloatImage, p1: (f64, f64), p2: (f64, f64)) -> Option<(f64, f64)> {
    let side = (2 * HALF_WINDOW + 1) as usize;
    let mut template = Vec::with_capacity(side * side);
    let mut sd = Vec::with_capacity(side * side);
    let mut h = Mat6::zeros();
    let mut h_xy = nalgebra::Matrix2::<f64>::zeros();
    for dy in -HALF_WINDOW..=HALF_WINDOW {
        for dx in -HALF_WINDOW..=HALF_WINDOW {
            let (x, y) = (p1.0 + dx as f64, p1.1 + dy as f64);
            let v = img1.sample(x, y)? as f64;
            let gx = (img1.sample(x + 1.0, y)? as f64 - img1.sample(x - 1.0, y)? as f64) * 0.5;
            let gy = (img1.sample(x, y + 1.0)? as f64 - img1.sample(x, y - 1.0)? as f64) * 0.5;
            let (fx, fy) = (dx as f64, dy as f64);
            let row = Vec6::new(gx * fx, gy * fx, gx * fy, gy * fy, gx, gy);
            template.push(v);
            h += row * row.transpose();
            h_xy += nalgebra::Vector2::new(gx, gy) * nalgebra::Vector2::new(gx, gy).transpose();
            sd.push(row);
        }
    }
    // the translational part must be well conditioned on its own
    if !(h_xy.determinant() > 1e-6 * h_xy.trace().powi(2)) {
        return None;
    }
    let h_inv = h.try_inverse()?;
    let mut w = Matrix3::new(1.0, 0.0, p2.0, 0.0, 1.0, p2.1, 0.0, 0.0, 1.0);
    for _ in 0..MAX_ITERS {
        let mut b = Vec6::zeros();
        let mut k = 0;
        for dy in -HALF_WINDOW..=HALF_WINDOW {
            for dx in -HALF_WINDOW..=HALF_WINDOW {
                let (fx, fy) = (dx as f64, dy as f64);
                let x = w[(0, 0)] * fx + w[(0, 1)] * fy + w[(0, 2)];
                let y = w[(1, 0)] * fx + w[(1, 1)] * fy + w[(1, 2)];
                let v = img2.sample(x, y)? as f64;
                b += sd[k] * (v - template[k]);
                k += 1;
            }
        }
        let dp = h_inv * b;
        w *= warp_of(&dp).try_inverse()?;
        if (w[(0, 2)] - p2.0).hypot(w[(1, 2)] - p2.1) > MAX_SHIFT_PX {
            return None;
        }
        if dp[4].hypot(dp[5]) < CONVERGED_PX && dp.fixed_rows::<4>(0).norm() < 1e-4 {
            break;
        }
    }
    Some((w[(0, 2)], w[(1, 2)]))
}

/// Refine the image-2 keypoints referenced by `matches`. Matches whose
/// refinement fails are dropped; survivors keep their order. Returns the
/// refined copy of `kps2` and the surviving matches.
pub fn refine_matches(
    img1: &FloatImage,
    img2: &FloatImage,
    kps1: &[Keypoint],
    kps2: &[Keypoint],
    matches: &[Match],
) -> (Vec<Keypoint>, Vec<Match>) {
    let mut refined = kps2.to_vec();
    let mut done: Vec<Option<bool>> = vec![None; kps2.len()];
    let mut kept = Vec::with_capacity(matches.len());
    for m in matches {
        let ok = *done[m.idx2].get_or_insert_with(|| {
            let (a, b) = (&kps1[m.idx1], &kps2[m.idx2]);
            match refine_point(img1, img2, (a.x, a.y), (b.x, b.y)) {
                Some((x, y)) => {
                    refined[m.idx2].x = x;
                    refined[m.idx2].y = y;
                    true
                }
                None => false,
            }
        });
        if ok {
            kept.push(*m);
        }
    }
    (refined, kept)
}
