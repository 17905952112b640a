//! Keypoint detection, binary description, matching and outlier rejection.

mod epipolar;
mod matching;
mod orb;
mod ransac;
mod refine;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use epipolar::{nav_epipolar_reject, symmetric_epipolar_distance};
pub use matching::{hamming, match_descriptors};
pub use orb::{describe, PATCH_RADIUS};
pub use ransac::{eight_point, ransac_reject, RansacOutcome};
pub use refine::{refine_matches, refine_point, MAX_SHIFT_PX};

use crate::image::GrayImage;
use crate::quadtree::Rect;

/// 256-bit binary descriptor.
pub type Descriptor = [u64; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint {
    /// Full-image pixel coordinates.
    pub x: f64,
    pub y: f64,
    pub response: f32,
    /// Radians, image frame.
    pub orientation: f64,
    /// Pyramid level the corner was found on.
    pub level: usize,
    pub descriptor: Descriptor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    pub idx1: usize,
    pub idx2: usize,
    pub hamming: u32,
    /// NaN until the navigation gate fills it.
    pub epipolar_residual_px: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("{0} matches, at least 8 are required")]
    TooFewMatches(usize),
    #[error("relative pose has zero baseline")]
    ZeroBaseline,
    #[error("no non-degenerate minimal sample found")]
    DegenerateSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub max_keypoints: usize,
    /// FAST intensity threshold in 8-bit levels.
    pub fast_threshold: u8,
    pub n_levels: usize,
    pub scale_factor: f64,
    pub ratio: f64,
    pub cross_check: bool,
    /// Sub-pixel refinement of image-2 match positions.
    pub refine: bool,
    pub ransac_threshold_px: f64,
    pub ransac_max_iters: usize,
    pub nav_threshold_px: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            max_keypoints: 500,
            fast_threshold: 6,
            n_levels: 4,
            scale_factor: 1.25,
            ratio: 0.8,
            cross_check: true,
            refine: true,
            ransac_threshold_px: 1.5,
            ransac_max_iters: 500,
            nav_threshold_px: 2.0,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_levels == 0 {
            return Err("n_levels must be at least 1".into());
        }
        if !(self.scale_factor >= 1.0) {
            return Err(format!("scale_factor must be >= 1, got {}", self.scale_factor));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(format!("ratio must be in (0, 1], got {}", self.ratio));
        }
        for (name, v) in [
            ("ransac_threshold_px", self.ransac_threshold_px),
            ("nav_threshold_px", self.nav_threshold_px),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Oriented multi-scale corners inside `roi`, strongest first, at most
/// `params.max_keypoints`.
pub fn detect_and_describe(image: &GrayImage, roi: &Rect, params: &FeatureParams) -> Vec<Keypoint> {
    orb::detect_in_rect(image, roi, params)
}

/// Debug dump: `index,x,y,response,orientation,level`.
pub fn write_keypoints_csv<W: Write>(w: W, kps: &[Keypoint]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "x", "y", "response", "orientation", "level"])?;
    for (i, k) in kps.iter().enumerate() {
        wr.write_record([
            i.to_string(),
            k.x.to_string(),
            k.y.to_string(),
            k.response.to_string(),
            k.orientation.to_string(),
            k.level.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Debug dump: `idx1,idx2,x1,y1,x2,y2,hamming,epipolar_residual_px`.
pub fn write_matches_csv<W: Write>(w: W, matches: &[Match], kps1: &[Keypoint], kps2: &[Keypoint]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["idx1", "idx2", "x1", "y1", "x2", "y2", "hamming", "epipolar_residual_px"])?;
    for m in matches {
        let (a, b) = (&kps1[m.idx1], &kps2[m.idx2]);
        wr.write_record([
            m.idx1.to_string(),
            m.idx2.to_string(),
            a.x.to_string(),
            a.y.to_string(),
            b.x.to_string(),
            b.y.to_string(),
            m.hamming.to_string(),
            m.epipolar_residual_px.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
