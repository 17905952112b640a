//! Oriented FAST corners with rotated binary descriptors over a scale pyramid.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Descriptor, FeatureParams, Keypoint};
use crate::image::{FloatImage, GrayImage};
use crate::quadtree::Rect;

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Radius of the orientation patch; descriptors sample within `PATTERN_RADIUS`.
pub const PATCH_RADIUS: i32 = 15;
const PATTERN_RADIUS: f64 = 13.0;
const PATTERN_SEED: u64 = 0x0B1E_5EED;
const HARRIS_HALF_BLOCK: i32 = 3;
const HARRIS_K: f32 = 0.04;
const DESCRIPTOR_SIGMA: f32 = 2.0;

/// 256 point pairs drawn once from an isotropic Gaussian of sigma `31 / 5`,
/// clipped to the pattern radius.
fn pattern() -> &'static [[f64; 4]; 256] {
    static PATTERN: OnceLock<[[f64; 4]; 256]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
        let normal = Normal::new(0.0, 31.0 / 5.0).expect("valid sigma");
        let draw = |rng: &mut ChaCha8Rng| loop {
            let (x, y): (f64, f64) = (normal.sample(rng), normal.sample(rng));
            if x.hypot(y) <= PATTERN_RADIUS {
                return (x, y);
            }
        };
        let mut out = [[0.0; 4]; 256];
        for pair in out.iter_mut() {
            let (a, b) = draw(&mut rng);
            let (c, d) = draw(&mut rng);
            *pair = [a, b, c, d];
        }
        out
    })
}

/// FAST-9 test: at least nine contiguous circle pixels all brighter than
/// `center + t` or all darker than `center - t`. Returns the corner score,
/// the larger of the summed excess brightness and darkness over `t`.
#[inline]
fn fast_score(img: &GrayImage, x: usize, y: usize, t: i16) -> Option<i32> {
    let c = img.get(x, y) as i16;
    let px = |k: usize| {
        let (dx, dy) = CIRCLE[k];
        img.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) as i16
    };
    // any 9-run includes at least two of the four compass points
    let compass = [px(0), px(4), px(8), px(12)];
    let bright = compass.iter().filter(|&&v| v > c + t).count();
    let dark = compass.iter().filter(|&&v| v < c - t).count();
    if bright < 2 && dark < 2 {
        return None;
    }
    let (mut bmask, mut dmask) = (0u32, 0u32);
    let (mut bsum, mut dsum) = (0i32, 0i32);
    for k in 0..16 {
        let v = px(k);
        if v > c + t {
            bmask |= 1 << k;
            bsum += (v - c - t) as i32;
        } else if v < c - t {
            dmask |= 1 << k;
            dsum += (c - v - t) as i32;
        }
    }
    (has_run(bmask) || has_run(dmask)).then_some(bsum.max(dsum))
}

#[inline]
fn has_run(mask: u32) -> bool {
    let mut m = mask | (mask << 16);
    for _ in 0..8 {
        m &= m >> 1;
    }
    m != 0
}

fn harris(img: &FloatImage, x: i32, y: i32) -> f32 {
    let w = img.width;
    let (mut sxx, mut syy, mut sxy) = (0f32, 0f32, 0f32);
    for yy in y - HARRIS_HALF_BLOCK..=y + HARRIS_HALF_BLOCK {
        for xx in x - HARRIS_HALF_BLOCK..=x + HARRIS_HALF_BLOCK {
            let at = |dx: i32, dy: i32| img.data[((yy + dy) as usize) * w + (xx + dx) as usize];
            let gx = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
            let gy = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
            sxx += gx * gx;
            syy += gy * gy;
            sxy += gx * gy;
        }
    }
    sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) * (sxx + syy)
}

fn orientation(img: &FloatImage, x: i32, y: i32) -> f64 {
    let (mut m10, mut m01) = (0f64, 0f64);
    let r2 = PATCH_RADIUS * PATCH_RADIUS;
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        for dx in -PATCH_RADIUS..=PATCH_RADIUS {
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let v = img.get((x + dx) as usize, (y + dy) as usize) as f64;
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    m01.atan2(m10)
}

/// Rotated binary test descriptor on a smoothed image.
pub fn describe(smoothed: &FloatImage, x: f64, y: f64, angle: f64) -> Option<Descriptor> {
    let (s, c) = angle.sin_cos();
    let mut d = [0u64; 4];
    for (i, p) in pattern().iter().enumerate() {
        let a = smoothed.sample(x + c * p[0] - s * p[1], y + s * p[0] + c * p[1])?;
        let b = smoothed.sample(x + c * p[2] - s * p[3], y + s * p[2] + c * p[3])?;
        if a < b {
            d[i / 64] |= 1 << (i % 64);
        }
    }
    Some(d)
}

struct Candidate {
    x: usize,
    y: usize,
    score: i32,
}

/// Detect and describe keypoints whose level-0 position falls inside `roi`.
/// Coordinates of returned keypoints are full-image pixels.
pub fn detect_in_rect(image: &GrayImage, roi: &Rect, params: &FeatureParams) -> Vec<Keypoint> {
    if roi.width == 0 || roi.height == 0 || params.max_keypoints == 0 {
        return Vec::new();
    }
    let max_scale = params.scale_factor.powi(params.n_levels.saturating_sub(1) as i32);
    let border = ((PATCH_RADIUS + 2) as f64 * max_scale).ceil() as usize;
    let x0 = roi.x0.saturating_sub(border);
    let y0 = roi.y0.saturating_sub(border);
    let x1 = (roi.x0 + roi.width + border).min(image.width());
    let y1 = (roi.y0 + roi.height + border).min(image.height());
    let crop = image.crop(x0, y0, x1 - x0, y1 - y0);
    let base = crop.to_f32();
    let (cw, ch) = (crop.width(), crop.height());

    let mut found: Vec<Keypoint> = Vec::new();
    for level in 0..params.n_levels.max(1) {
        let scale = params.scale_factor.powi(level as i32);
        let lw = (cw as f64 / scale).round() as usize;
        let lh = (ch as f64 / scale).round() as usize;
        let margin = PATCH_RADIUS as usize + 1;
        if lw <= 2 * margin || lh <= 2 * margin {
            break;
        }
        let (sx, sy) = (cw as f64 / lw as f64, ch as f64 / lh as f64);
        let level_img = if level == 0 { base.clone() } else { base.resize(lw, lh) };
        let level_u8 = level_img.to_gray();
        let to_full = |x: usize, y: usize| {
            (
                x0 as f64 + (x as f64 + 0.5) * sx - 0.5,
                y0 as f64 + (y as f64 + 0.5) * sy - 0.5,
            )
        };
        let inside = |fx: f64, fy: f64| {
            fx >= roi.x0 as f64 - 0.5
                && fy >= roi.y0 as f64 - 0.5
                && fx < (roi.x0 + roi.width) as f64 - 0.5
                && fy < (roi.y0 + roi.height) as f64 - 0.5
        };

        let mut score = vec![i32::MIN; lw * lh];
        let mut cands = Vec::new();
        for y in margin..lh - margin {
            for x in margin..lw - margin {
                let (fx, fy) = to_full(x, y);
                if !inside(fx, fy) {
                    continue;
                }
                if let Some(s) = fast_score(&level_u8, x, y, params.fast_threshold as i16) {
                    score[y * lw + x] = s;
                    cands.push(Candidate { x, y, score: s });
                }
            }
        }
        let smoothed = level_img.gaussian_blur(DESCRIPTOR_SIGMA);
        for c in cands {
            // 3x3 non-maximum suppression on the FAST score, ties resolved toward raster order
            let mut keep = true;
            'nms: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = score[((c.y as i32 + dy) as usize) * lw + (c.x as i32 + dx) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > c.score || (earlier && n == c.score) {
                        keep = false;
                        break 'nms;
                    }
                }
            }
            if !keep {
                continue;
            }
            let angle = orientation(&level_img, c.x as i32, c.y as i32);
            let Some(descriptor) = describe(&smoothed, c.x as f64, c.y as f64, angle) else {
                continue;
            };
            let (fx, fy) = to_full(c.x, c.y);
            found.push(Keypoint {
                x: fx,
                y: fy,
                response: harris(&level_img, c.x as i32, c.y as i32),
                orientation: angle,
                level,
                descriptor,
            });
        }
    }
    found.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.level.cmp(&b.level))
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    found.truncate(params.max_keypoints);
    found
}
