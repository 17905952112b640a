//! Two-view triangulation, plane fitting, slope and roughness, and site
//! ranking.

use std::io::Write;

use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraModel, Pose, RelativePose};
use crate::features::{Keypoint, Match};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SfmError {
    #[error("relative pose has zero baseline")]
    ZeroBaseline,
    #[error("every correspondence was discarded during triangulation")]
    AllPointsDegenerate,
    #[error("points are collinear, coincident or too few for a plane")]
    DegenerateGeometry,
}

/// World-frame points reconstructed from one ROI.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub source_roi: usize,
}

/// Correspondences dropped by `triangulate`, by cause.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Discarded {
    pub negative_depth: usize,
    pub low_parallax: usize,
}

/// Closest-approach midpoint of two rays `o1 + s d1` and `o2 + u d2` with
/// unit directions. Returns the midpoint and the ray parameters.
pub fn midpoint(o1: &Vector3<f64>, d1: &Vector3<f64>, o2: &Vector3<f64>, d2: &Vector3<f64>) -> Option<(Vector3<f64>, f64, f64)> {
    // the cross product keeps precision for nearly parallel rays
    let n = d1.cross(d2);
    let nn = n.norm_squared();
    if !(nn > 1e-30 * d1.norm_squared() * d2.norm_squared()) {
        return None;
    }
    let w = o2 - o1;
    let s = w.cross(d2).dot(&n) / nn;
    let u = w.cross(d1).dot(&n) / nn;
    Some((0.5 * ((o1 + d1 * s) + (o2 + d2 * u)), s, u))
}

/// Midpoint triangulation of matched keypoints. Correspondences behind
/// either camera or with ray angle below `min_parallax_deg` are discarded and
/// counted. Points are returned in the world frame of `pose1`.
pub fn triangulate(
    matches: &[Match],
    kps1: &[Keypoint],
    kps2: &[Keypoint],
    pose1: &Pose,
    rel: &RelativePose,
    cam: &CameraModel,
    min_parallax_deg: f64,
) -> Result<(PointCloud, Discarded), SfmError> {
    if !(rel.baseline_m > 0.0) {
        return Err(SfmError::ZeroBaseline);
    }
    let cos_min = min_parallax_deg.to_radians().cos();
    let r_inv = rel.rotation.inverse();
    let o1 = Vector3::zeros();
    let o2 = rel.translation;
    let mut points = Vec::with_capacity(matches.len());
    let mut discarded = Discarded::default();
    for m in matches {
        let (a, b) = (&kps1[m.idx1], &kps2[m.idx2]);
        let d1 = cam.ray_camera(&Point2::new(a.x, a.y)).normalize();
        let d2 = (r_inv * cam.ray_camera(&Point2::new(b.x, b.y))).normalize();
        if d1.dot(&d2) > cos_min {
            discarded.low_parallax += 1;
            continue;
        }
        match midpoint(&o1, &d1, &o2, &d2) {
            Some((p, s, u)) if s > 0.0 && u > 0.0 => points.push(pose1.camera_to_world(&p)),
            _ => discarded.negative_depth += 1,
        }
    }
    if points.is_empty() && !matches.is_empty() {
        return Err(SfmError::AllPointsDegenerate);
    }
    Ok((
        PointCloud {
            points,
            source_roi: 0,
        },
        discarded,
    ))
}

/// Total-least-squares plane `normal . x = offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub rms_residual_m: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Plane through the centroid along the two largest principal directions,
/// with the normal oriented toward `up`.
pub fn fit_plane(points: &[Vector3<f64>], up: &Vector3<f64>) -> Result<Plane, SfmError> {
    if points.len() < 3 {
        return Err(SfmError::DegenerateGeometry);
    }
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector3<f64>>() / n;
    let cov: Matrix3<f64> = points.iter().map(|p| (p - c) * (p - c).transpose()).sum::<Matrix3<f64>>();
    let eig = cov.symmetric_eigen();
    let mut order = [0, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let (mid, hi) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    // a plane needs two independent in-plane directions
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(SfmError::DegenerateGeometry);
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).normalize();
    if normal.dot(up) < 0.0 {
        normal = -normal;
    }
    let ss: f64 = points.iter().map(|p| normal.dot(&(p - c)).powi(2)).sum();
    Ok(Plane {
        normal,
        offset: normal.dot(&c),
        rms_residual_m: (ss / n).sqrt(),
    })
}

/// Angle between `normal` and the local vertical `-gravity_dir`, in
/// `[0, 90]` degrees regardless of normal orientation.
pub fn slope_of(normal: &Vector3<f64>, gravity_dir: &Vector3<f64>) -> f64 {
    let c = normal.normalize().dot(&(-gravity_dir.normalize())).abs().min(1.0);
    c.acos().to_degrees()
}

/// 95th-percentile absolute orthogonal residual.
pub fn roughness_of(points: &[Vector3<f64>], plane: &Plane) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut r: Vec<f64> = points.iter().map(|p| plane.signed_distance(p).abs()).collect();
    r.sort_by(f64::total_cmp);
    let k = ((0.95 * r.len() as f64).floor() as usize).min(r.len() - 1);
    r[k]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankWeights {
    pub slope: f64,
    pub roughness: f64,
    pub inverse_area: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        Self {
            slope: 0.5,
            roughness: 0.3,
            inverse_area: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfmLimits {
    pub slope_limit_deg: f64,
    pub roughness_limit_m: f64,
    pub area_limit_m2: f64,
    /// Minimum surviving points for a usable estimate.
    pub n_min: usize,
    pub min_parallax_deg: f64,
    pub weights: RankWeights,
}

impl Default for SfmLimits {
    fn default() -> Self {
        Self {
            slope_limit_deg: 10.0,
            roughness_limit_m: 0.30,
            area_limit_m2: 100.0,
            n_min: 15,
            min_parallax_deg: 0.2,
            weights: RankWeights::default(),
        }
    }
}

impl SfmLimits {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("slope_limit_deg", self.slope_limit_deg),
            ("roughness_limit_m", self.roughness_limit_m),
            ("area_limit_m2", self.area_limit_m2),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.min_parallax_deg >= 0.0) {
            return Err(format!("min_parallax_deg must be non-negative, got {}", self.min_parallax_deg));
        }
        let w = &self.weights;
        if [w.slope, w.roughness, w.inverse_area].iter().any(|v| !(*v >= 0.0)) {
            return Err("rank weights must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteAssessment {
    pub roi: usize,
    /// NaN when no plane could be fitted.
    pub slope_deg: f64,
    pub roughness_m: f64,
    pub area_m2: f64,
    pub n_points: usize,
    pub distance_to_ils_m: f64,
    pub safe: bool,
    /// 1-based rank among safe sites.
    pub rank: Option<usize>,
}

impl SiteAssessment {
    /// Safety verdict from measured values.
    pub fn evaluate(&mut self, limits: &SfmLimits) {
        self.safe = self.slope_deg < limits.slope_limit_deg
            && self.roughness_m < limits.roughness_limit_m
            && self.area_m2 >= limits.area_limit_m2
            && self.n_points >= limits.n_min;
    }
}

/// Assess one ROI cloud. `center` is the ground point used for the distance
/// to the intended landing site; `up` is `-gravity_dir`.
pub fn assess_site(
    roi: usize,
    cloud: &[Vector3<f64>],
    area_m2: f64,
    center: &Vector3<f64>,
    ils: &Vector3<f64>,
    gravity_dir: &Vector3<f64>,
    limits: &SfmLimits,
) -> SiteAssessment {
    let (slope_deg, roughness_m) = match fit_plane(cloud, &(-gravity_dir)) {
        Ok(plane) => (slope_of(&plane.normal, gravity_dir), roughness_of(cloud, &plane)),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let mut a = SiteAssessment {
        roi,
        slope_deg,
        roughness_m,
        area_m2,
        n_points: cloud.len(),
        distance_to_ils_m: (center - ils).norm(),
        safe: false,
        rank: None,
    };
    a.evaluate(limits);
    a
}

/// Order sites: safe ones by composite score (lower is better), ties by
/// distance to the landing site then ROI index, ranked from 1; unsafe sites
/// follow in ROI order without a rank.
pub fn assess_and_rank(mut sites: Vec<SiteAssessment>, limits: &SfmLimits) -> Vec<SiteAssessment> {
    for s in sites.iter_mut() {
        s.evaluate(limits);
        s.rank = None;
    }
    let w = &limits.weights;
    let score = |s: &SiteAssessment| {
        w.slope * s.slope_deg / limits.slope_limit_deg
            + w.roughness * s.roughness_m / limits.roughness_limit_m
            + w.inverse_area * limits.area_limit_m2 / s.area_m2
    };
    let (mut safe, mut unsafe_): (Vec<_>, Vec<_>) = sites.into_iter().partition(|s| s.safe);
    safe.sort_by(|a, b| {
        score(a)
            .total_cmp(&score(b))
            .then(a.distance_to_ils_m.total_cmp(&b.distance_to_ils_m))
            .then(a.roi.cmp(&b.roi))
    });
    for (i, s) in safe.iter_mut().enumerate() {
        s.rank = Some(i + 1);
    }
    unsafe_.sort_by_key(|s| s.roi);
    safe.extend(unsafe_);
    safe
}

/// `rank,roi,slope_deg,roughness_m,area_m2,n_points,dist_ils_m,safe`; the
/// rank of an unsafe site is left empty.
pub fn write_assessments_csv<W: Write>(w: W, sites: &[SiteAssessment]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "rank",
        "roi",
        "slope_deg",
        "roughness_m",
        "area_m2",
        "n_points",
        "dist_ils_m",
        "safe",
    ])?;
    for s in sites {
        wr.write_record([
            s.rank.map(|r| r.to_string()).unwrap_or_default(),
            s.roi.to_string(),
            format!("{:.4}", s.slope_deg),
            format!("{:.4}", s.roughness_m),
            format!("{:.2}", s.area_m2),
            s.n_points.to_string(),
            format!("{:.2}", s.distance_to_ils_m),
            s.safe.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
