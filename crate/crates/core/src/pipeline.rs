//! End-to-end hazard detection: quadtree, per-ROI feature tracking,
//! triangulation and site assessment under a wall-clock budget.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{back_project, predict_roi, relative_motion, CameraModel, NavRecord, RelativePose};
use crate::features::{
    detect_and_describe, match_descriptors, nav_epipolar_reject, ransac_reject, refine_matches, FeatureError,
    FeatureParams, Keypoint,
};
use crate::image::{FloatImage, GrayImage};
use crate::quadtree::{decompose, footprint_of, Decomposition, QuadtreeCriteria, QuadtreeError, Rect, Roi};
use crate::sfm::{assess_and_rank, assess_site, triangulate, SfmLimits, SiteAssessment};

/// Blur applied to both images before sub-pixel refinement.
const REFINE_SIGMA: f32 = 1.0;
/// Border kept around each ROI when blurring, enough for the blur kernel,
/// the tracking window and its allowed drift.
const REFINE_PAD_PX: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdaConfig {
    pub camera: CameraModel,
    pub quadtree: QuadtreeCriteria,
    pub features: FeatureParams,
    pub sfm: SfmLimits,
    pub budget_total_s: f64,
    pub budget_quadtree_s: f64,
    pub budget_sfm_s: f64,
    /// Desk-to-target slowdown: measured durations are multiplied by this
    /// before every budget comparison.
    pub budget_scale: f64,
    /// Intended landing site, world frame.
    pub ils_position: [f64; 3],
    /// Fractional growth of each predicted image-2 region on every side.
    pub roi_margin_frac: f64,
    pub ransac_seed: u64,
}

impl Default for HdaConfig {
    fn default() -> Self {
        Self {
            camera: CameraModel::desk(),
            quadtree: QuadtreeCriteria::default(),
            features: FeatureParams::default(),
            sfm: SfmLimits::default(),
            budget_total_s: 15.0,
            budget_quadtree_s: 5.0,
            budget_sfm_s: 10.0,
            budget_scale: 1.0,
            ils_position: [0.0; 3],
            roi_margin_frac: 0.25,
            ransac_seed: 0x5EED,
        }
    }
}

impl HdaConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("budget_total_s", self.budget_total_s),
            ("budget_quadtree_s", self.budget_quadtree_s),
            ("budget_sfm_s", self.budget_sfm_s),
            ("budget_scale", self.budget_scale),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.budget_quadtree_s + self.budget_sfm_s > self.budget_total_s * (1.0 + 1e-12) {
            return Err(format!(
                "budget_quadtree_s + budget_sfm_s ({}) exceeds budget_total_s ({})",
                self.budget_quadtree_s + self.budget_sfm_s,
                self.budget_total_s
            ));
        }
        if !(self.roi_margin_frac >= 0.0) {
            return Err(format!("roi_margin_frac must be non-negative, got {}", self.roi_margin_frac));
        }
        self.quadtree.validate().map_err(|e| e.to_string())?;
        self.features.validate()?;
        self.sfm.validate()
    }

    /// The same configuration with a different total budget; the stage
    /// budgets keep their proportions.
    pub fn with_total_budget(&self, total_s: f64) -> Self {
        let k = total_s / self.budget_total_s;
        Self {
            budget_total_s: total_s,
            budget_quadtree_s: self.budget_quadtree_s * k,
            budget_sfm_s: self.budget_sfm_s * k,
            ..self.clone()
        }
    }

    /// No budget can ever be exceeded.
    pub fn unbounded(&self) -> Self {
        Self {
            budget_total_s: f64::INFINITY,
            budget_quadtree_s: f64::INFINITY,
            budget_sfm_s: f64::INFINITY,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum HdaStatus {
    Complete,
    PartialBudget,
    NoSafeSite,
    Failed(String),
}

impl HdaStatus {
    pub fn name(&self) -> &'static str {
        match self {
            HdaStatus::Complete => "Complete",
            HdaStatus::PartialBudget => "PartialBudget",
            HdaStatus::NoSafeSite => "NoSafeSite",
            HdaStatus::Failed(_) => "Failed",
        }
    }
}

/// Wall-clock time per stage, in seconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StageTiming {
    pub setup_s: f64,
    pub quadtree_s: f64,
    pub sfm_s: f64,
    pub total_s: f64,
}

/// Per-ROI bookkeeping for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiReport {
    pub roi: Roi,
    /// Predicted region in image 2, if it lands on the image.
    pub roi2: Option<Roi>,
    /// Level-ground point under the ROI center.
    pub ground_center: Vector3<f64>,
    pub distance_to_ils_m: f64,
    pub keypoints1: usize,
    pub keypoints2: usize,
    pub ratio_matches: usize,
    pub refined_matches: usize,
    /// `None` when RANSAC was skipped for lack of matches.
    pub ransac_inliers: Option<usize>,
    pub nav_inliers: usize,
    pub points: usize,
    /// Triangulated points, world frame.
    pub cloud: Vec<Vector3<f64>>,
    pub discarded_negative_depth: usize,
    pub discarded_low_parallax: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HdaResult {
    /// Safe sites by rank, then unsafe sites by ROI index.
    pub assessments: Vec<SiteAssessment>,
    pub timing: StageTiming,
    pub kicked_out: bool,
    pub rois_processed: usize,
    pub rois_skipped: usize,
    pub status: HdaStatus,
    /// Processed ROIs in processing order.
    pub reports: Vec<RoiReport>,
    /// Every candidate ROI in processing (nearest-first) order.
    pub order: Vec<usize>,
    pub decomposition: Option<Decomposition>,
}

impl HdaResult {
    fn failed(reason: String, start: Instant) -> Self {
        Self {
            assessments: Vec::new(),
            timing: StageTiming {
                total_s: start.elapsed().as_secs_f64(),
                ..Default::default()
            },
            kicked_out: false,
            rois_processed: 0,
            rois_skipped: 0,
            status: HdaStatus::Failed(reason),
            reports: Vec::new(),
            order: Vec::new(),
            decomposition: None,
        }
    }

    pub fn safe_sites(&self) -> impl Iterator<Item = &SiteAssessment> {
        self.assessments.iter().filter(|s| s.safe)
    }

    pub fn best(&self) -> Option<&SiteAssessment> {
        self.assessments.first().filter(|s| s.safe)
    }

    /// Assessment CSV (see `sfm::write_assessments_csv`).
    pub fn write_result_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        crate::sfm::write_assessments_csv(w, &self.assessments)
    }

    /// `stage,seconds` rows plus the run status and kick-out counters.
    pub fn write_timing_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["stage", "seconds"])?;
        let t = &self.timing;
        for (name, v) in [
            ("setup", t.setup_s),
            ("quadtree", t.quadtree_s),
            ("sfm", t.sfm_s),
            ("total", t.total_s),
        ] {
            wr.write_record([name.to_string(), format!("{v:.6}")])?;
        }
        for r in &self.reports {
            wr.write_record([format!("roi_{}", r.roi.index), format!("{:.6}", r.seconds)])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `roi,x,y,z` for every triangulated point, in processing order.
    pub fn write_clouds_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["roi", "x", "y", "z"])?;
        for r in &self.reports {
            for p in &r.cloud {
                wr.write_record([r.roi.index.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// `roi,x0,y0,size_px,dist_ils_m,kp1,kp2,ratio,refined,ransac,nav,points,neg_depth,low_parallax`
    /// in processing order; timing is left out so the file is reproducible.
    pub fn write_rois_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "roi",
            "x0",
            "y0",
            "size_px",
            "dist_ils_m",
            "kp1",
            "kp2",
            "ratio",
            "refined",
            "ransac",
            "nav",
            "points",
            "neg_depth",
            "low_parallax",
        ])?;
        for r in &self.reports {
            wr.write_record([
                r.roi.index.to_string(),
                r.roi.x0.to_string(),
                r.roi.y0.to_string(),
                r.roi.width_px.to_string(),
                format!("{:.2}", r.distance_to_ils_m),
                r.keypoints1.to_string(),
                r.keypoints2.to_string(),
                r.ratio_matches.to_string(),
                r.refined_matches.to_string(),
                r.ransac_inliers.map(|n| n.to_string()).unwrap_or_default(),
                r.nav_inliers.to_string(),
                r.points.to_string(),
                r.discarded_negative_depth.to_string(),
                r.discarded_low_parallax.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Where the ray through `px` meets the level plane through the boresight
/// range point. Falls back to the range point itself for rays that never
/// reach the plane.
pub fn ground_point(cam: &CameraModel, nav: &NavRecord, px: &Point2<f64>) -> Vector3<f64> {
    let anchor = nav.pose.position + nav.pose.boresight() * nav.range_m;
    let up = -nav.gravity_dir;
    let Ok(ray) = back_project(cam, &nav.pose, px) else {
        return anchor;
    };
    let denom = ray.direction.dot(&up);
    if denom >= -1e-12 {
        return anchor;
    }
    let t = (anchor - ray.origin).dot(&up) / denom;
    if t > 0.0 {
        ray.at(t)
    } else {
        anchor
    }
}

fn horizontal_distance(a: &Vector3<f64>, b: &Vector3<f64>, gravity: &Vector3<f64>) -> f64 {
    let d = a - b;
    (d - gravity * d.dot(gravity)).norm()
}

/// Blurred copy of `rect` grown by [`REFINE_PAD_PX`], with its origin.
fn smooth_window(image: &GrayImage, rect: &Rect) -> (FloatImage, (usize, usize)) {
    let x0 = rect.x0.saturating_sub(REFINE_PAD_PX);
    let y0 = rect.y0.saturating_sub(REFINE_PAD_PX);
    let x1 = (rect.x0 + rect.width + REFINE_PAD_PX).min(image.width());
    let y1 = (rect.y0 + rect.height + REFINE_PAD_PX).min(image.height());
    let window = image.crop(x0, y0, x1 - x0, y1 - y0).to_f32().gaussian_blur(REFINE_SIGMA);
    (window, (x0, y0))
}

fn shift_keypoints(kps: &[Keypoint], origin: (usize, usize), sign: f64) -> Vec<Keypoint> {
    kps.iter()
        .map(|k| Keypoint {
            x: k.x + sign * origin.0 as f64,
            y: k.y + sign * origin.1 as f64,
            ..*k
        })
        .collect()
}

struct Inputs<'a> {
    image1: &'a GrayImage,
    image2: &'a GrayImage,
    nav1: &'a NavRecord,
    rel: &'a RelativePose,
    config: &'a HdaConfig,
}

fn process_roi(inp: &Inputs, roi: &Roi, ground_center: Vector3<f64>, distance: f64) -> (SiteAssessment, RoiReport) {
    let start = Instant::now();
    let cfg = inp.config;
    let cam = &cfg.camera;
    let params = &cfg.features;
    let mut report = RoiReport {
        roi: roi.clone(),
        roi2: None,
        ground_center,
        distance_to_ils_m: distance,
        keypoints1: 0,
        keypoints2: 0,
        ratio_matches: 0,
        refined_matches: 0,
        ransac_inliers: None,
        nav_inliers: 0,
        points: 0,
        cloud: Vec::new(),
        discarded_negative_depth: 0,
        discarded_low_parallax: 0,
        seconds: 0.0,
    };
    let range = (ground_center - inp.nav1.pose.position).norm();
    let footprint = footprint_of(&roi.rect(), range, cam, inp.nav1.look_angle());
    let ils = Vector3::from(cfg.ils_position);
    let mut points = Vec::new();

    if let Ok(roi2) = predict_roi(roi, inp.rel, cam, range, cfg.roi_margin_frac) {
        let k1 = detect_and_describe(inp.image1, &roi.rect(), params);
        let k2 = detect_and_describe(inp.image2, &roi2.rect(), params);
        report.roi2 = Some(roi2.clone());
        report.keypoints1 = k1.len();
        report.keypoints2 = k2.len();
        let d1: Vec<_> = k1.iter().map(|k| k.descriptor).collect();
        let d2: Vec<_> = k2.iter().map(|k| k.descriptor).collect();
        let matches = match_descriptors(&d1, &d2, params.ratio, params.cross_check);
        report.ratio_matches = matches.len();
        let (k2, matches) = if params.refine {
            let (s1, o1) = smooth_window(inp.image1, &roi.rect());
            let (s2, o2) = smooth_window(inp.image2, &roi2.rect());
            let (w1, w2) = (shift_keypoints(&k1, o1, -1.0), shift_keypoints(&k2, o2, -1.0));
            let (w2, kept) = refine_matches(&s1, &s2, &w1, &w2, &matches);
            (shift_keypoints(&w2, o2, 1.0), kept)
        } else {
            (k2, matches)
        };
        report.refined_matches = matches.len();
        let seed = cfg.ransac_seed ^ (roi.index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let matches = match ransac_reject(&matches, &k1, &k2, params.ransac_threshold_px, params.ransac_max_iters, seed)
        {
            Ok(out) => {
                report.ransac_inliers = Some(out.inliers.len());
                out.inliers
            }
            Err(FeatureError::TooFewMatches(_)) | Err(FeatureError::DegenerateSample) => matches,
            Err(FeatureError::ZeroBaseline) => Vec::new(),
        };
        let matches =
            nav_epipolar_reject(&matches, &k1, &k2, inp.rel, cam, params.nav_threshold_px).unwrap_or_default();
        report.nav_inliers = matches.len();
        if let Ok((cloud, discarded)) = triangulate(
            &matches,
            &k1,
            &k2,
            &inp.nav1.pose,
            inp.rel,
            cam,
            cfg.sfm.min_parallax_deg,
        ) {
            report.discarded_negative_depth = discarded.negative_depth;
            report.discarded_low_parallax = discarded.low_parallax;
            points = cloud.points;
        } else {
            report.discarded_negative_depth = matches.len();
        }
    }
    report.points = points.len();
    report.cloud = points.clone();
    let mut site = assess_site(
        roi.index,
        &points,
        footprint.area_m2(),
        &ground_center,
        &ils,
        &inp.nav1.gravity_dir,
        &cfg.sfm,
    );
    site.distance_to_ils_m = distance;
    report.seconds = start.elapsed().as_secs_f64();
    (site, report)
}

/// Run hazard detection on an image pair with navigation state. ROIs are
/// processed nearest-first to the landing site; the budget is checked before
/// each ROI, and once exceeded the remaining ROIs are skipped.
pub fn run_hda(image1: &GrayImage, nav1: &NavRecord, image2: &GrayImage, nav2: &NavRecord, config: &HdaConfig) -> HdaResult {
    let start = Instant::now();
    let scaled = |d: Duration| d.as_secs_f64() * config.budget_scale;
    if let Err(e) = config.validate() {
        return HdaResult::failed(format!("invalid configuration: {e}"), start);
    }
    let cam = &config.camera;
    if image1.width() != image2.width() || image1.height() != image2.height() {
        return HdaResult::failed("images differ in size".into(), start);
    }
    if image1.width() != cam.width_px() || image1.height() != cam.height_px() {
        return HdaResult::failed(
            format!(
                "image is {}x{} but the camera model is {}x{}",
                image1.width(),
                image1.height(),
                cam.width_px(),
                cam.height_px()
            ),
            start,
        );
    }
    for (i, n) in [nav1, nav2].iter().enumerate() {
        if let Err(e) = n.validate() {
            return HdaResult::failed(format!("nav record {}: {e}", i + 1), start);
        }
    }
    if !(nav2.time > nav1.time) {
        return HdaResult::failed("second nav record is not later than the first".into(), start);
    }
    let rel = relative_motion(nav1, nav2);
    if !(rel.baseline_m > 0.0) {
        return HdaResult::failed("zero baseline between captures".into(), start);
    }
    let mut timing = StageTiming::default();
    let setup_end = Instant::now();
    timing.setup_s = (setup_end - start).as_secs_f64();

    let decomposition = decompose(image1, &config.quadtree, nav1.range_m, cam, nav1.look_angle());
    let quadtree_end = Instant::now();
    timing.quadtree_s = (quadtree_end - setup_end).as_secs_f64();
    let (rois, decomposition) = match decomposition {
        Ok(d) => (d.rois.clone(), Some(d)),
        Err(QuadtreeError::EmptyResult) => (Vec::new(), None),
        Err(e) => return HdaResult::failed(format!("quadtree: {e}"), start),
    };

    let ils = Vector3::from(config.ils_position);
    let mut candidates: Vec<(Roi, Vector3<f64>, f64)> = rois
        .into_iter()
        .map(|roi| {
            let (cx, cy) = roi.center();
            let g = ground_point(cam, nav1, &Point2::new(cx, cy));
            let d = horizontal_distance(&g, &ils, &nav1.gravity_dir);
            (roi, g, d)
        })
        .collect();
    candidates.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.index.cmp(&b.0.index)));
    let order: Vec<usize> = candidates.iter().map(|c| c.0.index).collect();

    let inputs = Inputs {
        image1,
        image2,
        nav1,
        rel: &rel,
        config,
    };

    let quadtree_over = scaled(quadtree_end - start) > config.budget_quadtree_s;
    let sfm_start = Instant::now();
    let mut sites = Vec::new();
    let mut reports = Vec::new();
    let mut kicked_out = false;
    for (roi, ground, dist) in &candidates {
        let now = Instant::now();
        if quadtree_over
            || scaled(now - start) > config.budget_total_s
            || scaled(now - sfm_start) > config.budget_sfm_s
        {
            kicked_out = true;
            break;
        }
        let (site, report) = process_roi(&inputs, roi, *ground, *dist);
        log::debug!(
            "roi {} dist {:.1} m: {} points in {:.3} s",
            roi.index,
            dist,
            report.points,
            report.seconds
        );
        sites.push(site);
        reports.push(report);
    }
    let processed = sites.len();
    let skipped = candidates.len() - processed;
    let assessments = assess_and_rank(sites, &config.sfm);
    let end = Instant::now();
    timing.sfm_s = (end - sfm_start).as_secs_f64();
    timing.total_s = (end - start).as_secs_f64();
    let any_safe = assessments.iter().any(|s| s.safe);
    let status = if kicked_out {
        HdaStatus::PartialBudget
    } else if any_safe {
        HdaStatus::Complete
    } else {
        HdaStatus::NoSafeSite
    };
    HdaResult {
        assessments,
        timing,
        kicked_out,
        rois_processed: processed,
        rois_skipped: skipped,
        status,
        reports,
        order,
        decomposition,
    }
}

/// Repeated-run stage timings for one image pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTiming {
    pub pair: String,
    pub width_px: usize,
    pub height_px: usize,
    pub quadtree_s: Vec<f64>,
    pub sfm_s: Vec<f64>,
    pub total_s: Vec<f64>,
    pub status: HdaStatus,
}

/// Minimum, median and maximum of a non-empty sample.
pub fn summarize(samples: &[f64]) -> (f64, f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    (s[0], median, s[n - 1])
}

/// A named image pair with its navigation records.
pub struct PairInput<'a> {
    pub name: String,
    pub image1: &'a GrayImage,
    pub nav1: NavRecord,
    pub image2: &'a GrayImage,
    pub nav2: NavRecord,
}

/// Run every pair `repetitions` times, recording per-stage wall-clock time.
pub fn profile_run(pairs: &[PairInput], config: &HdaConfig, repetitions: usize) -> Vec<PairTiming> {
    pairs
        .iter()
        .map(|p| {
            let cfg = HdaConfig {
                camera: if p.image1.width() == config.camera.width_px() {
                    config.camera
                } else {
                    config.camera.binned(config.camera.width_px() / p.image1.width().max(1))
                },
                ..config.clone()
            };
            let mut t = PairTiming {
                pair: p.name.clone(),
                width_px: p.image1.width(),
                height_px: p.image1.height(),
                quadtree_s: Vec::new(),
                sfm_s: Vec::new(),
                total_s: Vec::new(),
                status: HdaStatus::Complete,
            };
            for _ in 0..repetitions.max(1) {
                let r = run_hda(p.image1, &p.nav1, p.image2, &p.nav2, &cfg);
                t.quadtree_s.push(r.timing.quadtree_s);
                t.sfm_s.push(r.timing.sfm_s);
                t.total_s.push(r.timing.total_s);
                t.status = r.status;
            }
            t
        })
        .collect()
}

/// One row per pair, stage columns as min/median/max seconds.
pub fn write_profile_csv<W: Write>(w: W, rows: &[PairTiming]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "pair",
        "size_px",
        "reps",
        "quadtree_min_s",
        "quadtree_median_s",
        "quadtree_max_s",
        "sfm_min_s",
        "sfm_median_s",
        "sfm_max_s",
        "total_median_s",
        "status",
    ])?;
    for r in rows {
        let q = summarize(&r.quadtree_s);
        let s = summarize(&r.sfm_s);
        let t = summarize(&r.total_s);
        wr.write_record([
            r.pair.clone(),
            format!("{}x{}", r.width_px, r.height_px),
            r.quadtree_s.len().to_string(),
            format!("{:.4}", q.0),
            format!("{:.4}", q.1),
            format!("{:.4}", q.2),
            format!("{:.4}", s.0),
            format!("{:.4}", s.1),
            format!("{:.4}", s.2),
            format!("{:.4}", t.1),
            r.status.name().to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Pose;

    fn nav(t: f64, pos: Vector3<f64>) -> NavRecord {
        let pose = Pose::look_at(pos, Vector3::zeros(), Vector3::z());
        NavRecord {
            time: t,
            pose,
            range_m: pos.norm(),
            gravity_dir: -Vector3::z(),
        }
    }

    #[test]
    fn config_validation() {
        assert!(HdaConfig::default().validate().is_ok());
        let c = HdaConfig {
            budget_sfm_s: 12.0,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().contains("exceeds"));
        let c = HdaConfig {
            budget_total_s: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let json = r#"{"budget_total_s": 20, "sfm": {"n_min": 20}}"#;
        let c: HdaConfig = serde_json::from_str(json).unwrap();
        assert_eq!((c.budget_total_s, c.sfm.n_min), (20.0, 20));
        assert!(serde_json::from_str::<HdaConfig>(r#"{"budget": 1}"#).is_err());
    }

    #[test]
    fn ground_point_on_level_plane() {
        let cam = CameraModel::desk();
        let n = nav(0.0, Vector3::new(-400.0, 0.0, 400.0));
        let c = cam.principal_point();
        let g = ground_point(&cam, &n, &c);
        assert!(g.norm() < 1e-9);
        let g = ground_point(&cam, &n, &Point2::new(c.x, 0.0));
        assert!(g.z.abs() < 1e-9 && g.x > 0.0);
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(summarize(&[3.0, 1.0, 2.0]), (1.0, 2.0, 3.0));
        assert_eq!(summarize(&[4.0, 1.0, 2.0, 3.0]), (1.0, 2.5, 4.0));
    }

    #[test]
    fn failures_are_reported_not_panics() {
        let cam = CameraModel::centered(500.0, 64, 64).unwrap();
        let cfg = HdaConfig {
            camera: cam,
            ..Default::default()
        };
        let img = GrayImage::new(64, 64);
        let n1 = nav(0.0, Vector3::new(-400.0, 0.0, 400.0));
        let n2 = nav(1.0, Vector3::new(-400.0, 30.0, 400.0));
        let r = run_hda(&img, &n1, &img, &n1, &cfg);
        assert!(matches!(r.status, HdaStatus::Failed(_)));
        let r = run_hda(&img, &n2, &img, &n1, &cfg);
        assert!(matches!(r.status, HdaStatus::Failed(_)));
        let small = GrayImage::new(32, 32);
        assert!(matches!(run_hda(&img, &n1, &small, &n2, &cfg).status, HdaStatus::Failed(_)));
        let same_place = NavRecord { time: 1.0, ..n1 };
        let r = run_hda(&img, &n1, &img, &same_place, &cfg);
        assert_eq!(r.status, HdaStatus::Failed("zero baseline between captures".into()));
    }

    #[test]
    fn all_dark_scene_has_no_safe_site() {
        let cam = CameraModel::centered(500.0, 64, 64).unwrap();
        let cfg = HdaConfig {
            camera: cam,
            quadtree: QuadtreeCriteria {
                min_footprint_m: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let img = GrayImage::new(64, 64);
        let n1 = nav(0.0, Vector3::new(-400.0, 0.0, 400.0));
        let n2 = nav(1.0, Vector3::new(-400.0, 30.0, 400.0));
        let r = run_hda(&img, &n1, &img, &n2, &cfg);
        assert_eq!(r.status, HdaStatus::NoSafeSite);
        assert!(r.assessments.is_empty());
        assert_eq!((r.rois_processed, r.rois_skipped, r.kicked_out), (0, 0, false));
    }

    #[test]
    fn uniform_bright_scene_without_texture_is_unsafe() {
        // one ROI, but no features to reconstruct
        let cam = CameraModel::centered(500.0, 64, 64).unwrap();
        let cfg = HdaConfig {
            camera: cam,
            quadtree: QuadtreeCriteria {
                min_footprint_m: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let img = GrayImage::from_fn(64, 64, |_, _| 150);
        let n1 = nav(0.0, Vector3::new(-400.0, 0.0, 400.0));
        let n2 = nav(1.0, Vector3::new(-400.0, 30.0, 400.0));
        let r = run_hda(&img, &n1, &img, &n2, &cfg);
        assert_eq!(r.status, HdaStatus::NoSafeSite);
        assert_eq!(r.rois_processed, 1);
        assert_eq!(r.assessments[0].n_points, 0);
        assert!(!r.assessments[0].safe);
    }

    #[test]
    fn tiny_budget_kicks_out_before_any_roi() {
        let cam = CameraModel::centered(500.0, 64, 64).unwrap();
        let cfg = HdaConfig {
            camera: cam,
            quadtree: QuadtreeCriteria {
                min_footprint_m: 1.0,
                ..Default::default()
            },
            ..Default::default()
        }
        .with_total_budget(1e-6);
        let img = GrayImage::from_fn(64, 64, |_, _| 150);
        let n1 = nav(0.0, Vector3::new(-400.0, 0.0, 400.0));
        let n2 = nav(1.0, Vector3::new(-400.0, 30.0, 400.0));
        let r = run_hda(&img, &n1, &img, &n2, &cfg);
        assert_eq!(r.status, HdaStatus::PartialBudget);
        assert!(r.kicked_out);
        assert_eq!((r.rois_processed, r.rois_skipped), (0, 1));
        assert!(r.assessments.is_empty());
    }

    #[test]
    fn profile_csv_shape() {
        let rows = vec![PairTiming {
            pair: "a".into(),
            width_px: 8,
            height_px: 8,
            quadtree_s: vec![0.1, 0.3, 0.2],
            sfm_s: vec![1.0, 2.0, 3.0],
            total_s: vec![1.1, 2.3, 3.2],
            status: HdaStatus::Complete,
        }];
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert!(lines[0].starts_with("pair,size_px,reps,quadtree_min_s"));
        assert_eq!(lines[1], "a,8x8,3,0.1000,0.2000,0.3000,1.0000,2.0000,3.0000,2.3000,Complete");
    }
}
