//! Pinhole camera, rigid poses, navigation records and ROI prediction.
//!
//! Frames: the world frame is right-handed with +z up. The camera frame has
//! +x right, +y down and +z along the boresight. Pixel centers sit at integer
//! coordinates, so the image spans `[-0.5, w - 0.5] x [-0.5, h - 0.5]`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point2, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadtree::Roi;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("pixel ({0}, {1}) is outside the image")]
    OutOfBounds(f64, f64),
    #[error("predicted region lies entirely outside the second image")]
    OffImage,
    #[error("invalid camera model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Ideal pinhole intrinsics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraModelRaw", into = "CameraModelRaw")]
pub struct CameraModel {
    focal_length_px: f64,
    principal_point: Point2<f64>,
    width_px: usize,
    height_px: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraModelRaw {
    focal_length_px: f64,
    principal_point: [f64; 2],
    width_px: usize,
    height_px: usize,
}

impl TryFrom<CameraModelRaw> for CameraModel {
    type Error = CameraError;
    fn try_from(r: CameraModelRaw) -> Result<Self, CameraError> {
        CameraModel::new(
            r.focal_length_px,
            Point2::new(r.principal_point[0], r.principal_point[1]),
            r.width_px,
            r.height_px,
        )
    }
}

impl From<CameraModel> for CameraModelRaw {
    fn from(c: CameraModel) -> Self {
        CameraModelRaw {
            focal_length_px: c.focal_length_px,
            principal_point: [c.principal_point.x, c.principal_point.y],
            width_px: c.width_px,
            height_px: c.height_px,
        }
    }
}

/// Focal length of the reference 2048 px sensor (horizontal FOV ~8.1 deg).
pub const FLIGHT_FOCAL_LENGTH_PX: f64 = 14_400.0;
pub const FLIGHT_SENSOR_PX: usize = 2048;

impl CameraModel {
    pub fn new(
        focal_length_px: f64,
        principal_point: Point2<f64>,
        width_px: usize,
        height_px: usize,
    ) -> Result<Self, CameraError> {
        if !(focal_length_px > 0.0 && focal_length_px.is_finite()) {
            return Err(CameraError::InvalidModel(format!(
                "focal length must be positive, got {focal_length_px}"
            )));
        }
        if width_px == 0 || height_px == 0 {
            return Err(CameraError::InvalidModel("zero image dimension".into()));
        }
        let (u0, v0) = (principal_point.x, principal_point.y);
        if !(0.0..width_px as f64).contains(&u0) || !(0.0..height_px as f64).contains(&v0) {
            return Err(CameraError::InvalidModel(format!(
                "principal point ({u0}, {v0}) outside {width_px}x{height_px}"
            )));
        }
        Ok(Self {
            focal_length_px,
            principal_point,
            width_px,
            height_px,
        })
    }

    /// Centered principal point and the given horizontal field of view.
    pub fn from_hfov(width_px: usize, height_px: usize, hfov_deg: f64) -> Result<Self, CameraError> {
        let f = 0.5 * width_px as f64 / (0.5 * hfov_deg.to_radians()).tan();
        Self::centered(f, width_px, height_px)
    }

    pub fn centered(focal_length_px: f64, width_px: usize, height_px: usize) -> Result<Self, CameraError> {
        Self::new(
            focal_length_px,
            Point2::new(0.5 * (width_px as f64 - 1.0), 0.5 * (height_px as f64 - 1.0)),
            width_px,
            height_px,
        )
    }

    /// Reference flight-resolution camera: 2048 x 2048 px, f = 14400 px.
    pub fn flight() -> Self {
        Self::centered(FLIGHT_FOCAL_LENGTH_PX, FLIGHT_SENSOR_PX, FLIGHT_SENSOR_PX)
            .expect("constant camera is valid")
    }

    /// The flight optics read out at 1024 x 1024 (2x2 binning).
    pub fn desk() -> Self {
        Self::flight().binned(2)
    }

    /// Same optics with `factor x factor` pixel binning.
    pub fn binned(&self, factor: usize) -> Self {
        let w = self.width_px / factor;
        let h = self.height_px / factor;
        let s = factor as f64;
        let pp = Point2::new(
            (self.principal_point.x + 0.5) / s - 0.5,
            (self.principal_point.y + 0.5) / s - 0.5,
        );
        Self::new(self.focal_length_px / s, pp, w, h).expect("binning preserves validity")
    }

    #[inline]
    pub fn focal_length_px(&self) -> f64 {
        self.focal_length_px
    }

    #[inline]
    pub fn principal_point(&self) -> Point2<f64> {
        self.principal_point
    }

    #[inline]
    pub fn width_px(&self) -> usize {
        self.width_px
    }

    #[inline]
    pub fn height_px(&self) -> usize {
        self.height_px
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        let f = self.focal_length_px;
        let (u0, v0) = (self.principal_point.x, self.principal_point.y);
        Matrix3::new(f, 0.0, u0, 0.0, f, v0, 0.0, 0.0, 1.0)
    }

    pub fn in_bounds(&self, px: &Point2<f64>) -> bool {
        px.x >= -0.5
            && px.y >= -0.5
            && px.x <= self.width_px as f64 - 0.5
            && px.y <= self.height_px as f64 - 0.5
    }

    /// Camera-frame point to pixel.
    #[inline]
    pub fn project_camera(&self, pc: &Vector3<f64>) -> Result<Point2<f64>, CameraError> {
        if pc.z <= 0.0 {
            return Err(CameraError::BehindCamera(pc.z));
        }
        Ok(Point2::new(
            self.principal_point.x + self.focal_length_px * pc.x / pc.z,
            self.principal_point.y + self.focal_length_px * pc.y / pc.z,
        ))
    }

    /// Camera-frame ray direction (z component 1) through a pixel; no bounds check.
    #[inline]
    pub fn ray_camera(&self, px: &Point2<f64>) -> Vector3<f64> {
        Vector3::new(
            (px.x - self.principal_point.x) / self.focal_length_px,
            (px.y - self.principal_point.y) / self.focal_length_px,
            1.0,
        )
    }

    /// Ground sample distance (m/px) at the given range, perpendicular to the boresight.
    pub fn gsd_at(&self, range_m: f64) -> f64 {
        range_m / self.focal_length_px
    }
}

/// Rigid camera pose. `attitude` rotates world vectors into the camera frame:
/// `x_cam = R (x_world - position)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRaw", into = "PoseRaw")]
pub struct Pose {
    pub position: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRaw {
    position: [f64; 3],
    /// Scalar-first quaternion.
    attitude_wxyz: [f64; 4],
}

impl From<PoseRaw> for Pose {
    fn from(r: PoseRaw) -> Self {
        let [w, x, y, z] = r.attitude_wxyz;
        Pose {
            position: Vector3::from(r.position),
            attitude: UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)),
        }
    }
}

impl From<Pose> for PoseRaw {
    fn from(p: Pose) -> Self {
        let q = p.attitude.quaternion();
        PoseRaw {
            position: p.position.into(),
            attitude_wxyz: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, attitude: UnitQuaternion<f64>) -> Self {
        Self { position, attitude }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    /// Camera at `position` with its boresight on `target`; image "up" is
    /// aligned with `up` as far as possible.
    pub fn look_at(position: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Self {
        let z = (target - position).normalize();
        let mut x = z.cross(&up);
        if x.norm() < 1e-12 {
            // boresight parallel to up: pick any perpendicular
            x = z.cross(&Vector3::x());
            if x.norm() < 1e-12 {
                x = z.cross(&Vector3::y());
            }
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let m = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rot = Rotation3::from_matrix_unchecked(m);
        Self::new(position, UnitQuaternion::from_rotation_matrix(&rot))
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.attitude * (p - self.position)
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.attitude.inverse() * p + self.position
    }

    /// World-frame direction of a camera-frame vector.
    #[inline]
    pub fn direction_to_world(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.attitude.inverse() * d
    }

    /// Unit boresight (+z camera axis) in the world frame.
    pub fn boresight(&self) -> Vector3<f64> {
        self.direction_to_world(&Vector3::z())
    }

    /// Apply a relative motion expressed in this camera's frame.
    pub fn compose(&self, rel: &RelativePose) -> Pose {
        Pose {
            position: self.position + self.attitude.inverse() * rel.translation,
            attitude: rel.rotation * self.attitude,
        }
    }

    /// The inverse rigid transform (camera to world as a pose).
    pub fn inverse(&self) -> Pose {
        let inv = self.attitude.inverse();
        Pose {
            position: -(self.attitude * self.position),
            attitude: inv,
        }
    }

    /// Transform composition: `self.then(other)` maps `x` to `other(self(x))`.
    pub fn then(&self, other: &Pose) -> Pose {
        // other(self(x)) = Ro (Rs (x - ps) - po) = Ro Rs (x - (ps + Rs^T po))
        Pose {
            position: self.position + self.attitude.inverse() * other.position,
            attitude: other.attitude * self.attitude,
        }
    }

    /// Apply a world-frame rigid motion (rotation about the origin followed by
    /// translation) to the camera.
    pub fn transformed(&self, rot: &UnitQuaternion<f64>, shift: &Vector3<f64>) -> Pose {
        Pose {
            position: rot * self.position + shift,
            attitude: self.attitude * rot.inverse(),
        }
    }
}

/// Time-tagged pose with laser range and local gravity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavRecord {
    pub time: f64,
    pub pose: Pose,
    /// Laser range along the boresight (m).
    pub range_m: f64,
    /// Unit gravity direction in the world frame.
    pub gravity_dir: Vector3<f64>,
}

impl NavRecord {
    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.range_m > 0.0 && self.range_m.is_finite()) {
            return Err(CameraError::InvalidArgument(format!(
                "range must be positive, got {}",
                self.range_m
            )));
        }
        if (self.gravity_dir.norm() - 1.0).abs() > 1e-9 {
            return Err(CameraError::InvalidArgument("gravity direction is not unit length".into()));
        }
        if !self.pose.position.iter().all(|v| v.is_finite()) {
            return Err(CameraError::InvalidArgument("non-finite position".into()));
        }
        Ok(())
    }

    /// Angle between the boresight and local vertical (down), radians.
    pub fn look_angle(&self) -> f64 {
        self.pose.boresight().dot(&self.gravity_dir).clamp(-1.0, 1.0).acos()
    }
}

/// Motion of camera 2 relative to camera 1: `x_c2 = R (x_c1 - t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePose {
    /// Rotation from the camera-1 frame to the camera-2 frame.
    pub rotation: UnitQuaternion<f64>,
    /// Position of camera 2 in the camera-1 frame (m).
    pub translation: Vector3<f64>,
    pub baseline_m: f64,
}

impl RelativePose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            baseline_m: translation.norm(),
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// Essential matrix with `x2^T E x1 = 0` for normalized camera rays.
    pub fn essential(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        r * self.translation.cross_matrix()
    }

    /// Fundamental matrix for pixel coordinates of a shared camera model.
    pub fn fundamental(&self, cam: &CameraModel) -> Matrix3<f64> {
        let kinv = cam
            .intrinsic_matrix()
            .try_inverse()
            .expect("intrinsics are invertible");
        kinv.transpose() * self.essential() * kinv
    }
}

/// Relative motion between two navigation samples.
pub fn relative_motion(nav1: &NavRecord, nav2: &NavRecord) -> RelativePose {
    let r1 = nav1.pose.attitude;
    let r2 = nav2.pose.attitude;
    RelativePose::new(r2 * r1.inverse(), r1 * (nav2.pose.position - nav1.pose.position))
}

/// World-frame ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

pub fn project(cam: &CameraModel, pose: &Pose, world_pt: &Vector3<f64>) -> Result<Point2<f64>, CameraError> {
    cam.project_camera(&pose.world_to_camera(world_pt))
}

pub fn back_project(cam: &CameraModel, pose: &Pose, px: &Point2<f64>) -> Result<Ray, CameraError> {
    if !cam.in_bounds(px) {
        return Err(CameraError::OutOfBounds(px.x, px.y));
    }
    Ok(Ray {
        origin: pose.position,
        direction: pose.direction_to_world(&cam.ray_camera(px)).normalize(),
    })
}

/// Predict where `roi` (image 1) lands in image 2.
///
/// Corners are pushed out to a fronto-parallel plane at `range_m`, moved into
/// the second camera, re-projected, boxed, inflated by `margin_frac` of the
/// box size on every side, and clamped to the image.
pub fn predict_roi(
    roi: &Roi,
    rel: &RelativePose,
    cam: &CameraModel,
    range_m: f64,
    margin_frac: f64,
) -> Result<Roi, CameraError> {
    if !(range_m > 0.0) {
        return Err(CameraError::InvalidArgument(format!("range must be positive, got {range_m}")));
    }
    if !(margin_frac >= 0.0) {
        return Err(CameraError::InvalidArgument(format!("margin must be non-negative, got {margin_frac}")));
    }
    let (a0, b0) = (roi.x0 as f64 - 0.5, roi.y0 as f64 - 0.5);
    let (a1, b1) = (a0 + roi.width_px as f64, b0 + roi.height_px as f64);
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (u, v) in [(a0, b0), (a1, b0), (a0, b1), (a1, b1)] {
        let p1 = cam.ray_camera(&Point2::new(u, v)) * range_m;
        let p2 = rel.rotation * (p1 - rel.translation);
        let q = cam.project_camera(&p2).map_err(|_| CameraError::OffImage)?;
        lo.x = lo.x.min(q.x);
        lo.y = lo.y.min(q.y);
        hi.x = hi.x.max(q.x);
        hi.y = hi.y.max(q.y);
    }
    let (mw, mh) = ((hi.x - lo.x) * margin_frac, (hi.y - lo.y) * margin_frac);
    lo.x -= mw;
    hi.x += mw;
    lo.y -= mh;
    hi.y += mh;
    // pixel index ranges whose centers fall in the extent; tolerance absorbs round-off
    const TOL: f64 = 1e-6;
    let first_x = (lo.x + 0.5 + TOL).floor().max(0.0);
    let first_y = (lo.y + 0.5 + TOL).floor().max(0.0);
    let last_x = (hi.x - 0.5 - TOL).ceil().min(cam.width_px as f64 - 1.0);
    let last_y = (hi.y - 0.5 - TOL).ceil().min(cam.height_px as f64 - 1.0);
    if !(last_x >= first_x && last_y >= first_y) {
        return Err(CameraError::OffImage);
    }
    Ok(Roi {
        x0: first_x as usize,
        y0: first_y as usize,
        width_px: (last_x - first_x) as usize + 1,
        height_px: (last_y - first_y) as usize + 1,
        ..roi.clone()
    })
}

#[derive(Debug, Error)]
pub enum NavFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid nav record on row {row}: {reason}")]
    Invalid { row: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct NavRow {
    time: f64,
    px: f64,
    py: f64,
    pz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    range: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

/// Read a navigation flat file (`time,px,py,pz,qw,qx,qy,qz,range,gx,gy,gz`).
pub fn read_nav_csv<R: Read>(r: R) -> Result<Vec<NavRecord>, NavFileError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<NavRow>().enumerate() {
        let row = row?;
        let q = nalgebra::Quaternion::new(row.qw, row.qx, row.qy, row.qz);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(NavFileError::Invalid {
                row: i + 1,
                reason: format!("quaternion norm {} is not 1", q.norm()),
            });
        }
        let g = Vector3::new(row.gx, row.gy, row.gz);
        if !(g.norm() > 0.0) {
            return Err(NavFileError::Invalid {
                row: i + 1,
                reason: "zero gravity vector".into(),
            });
        }
        let rec = NavRecord {
            time: row.time,
            pose: Pose::new(
                Vector3::new(row.px, row.py, row.pz),
                UnitQuaternion::from_quaternion(q),
            ),
            range_m: row.range,
            gravity_dir: g.normalize(),
        };
        rec.validate().map_err(|e| NavFileError::Invalid {
            row: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_nav_csv(path: impl AsRef<Path>) -> Result<Vec<NavRecord>, NavFileError> {
    read_nav_csv(std::fs::File::open(path)?)
}

pub fn write_nav_csv<W: Write>(w: W, records: &[NavRecord]) -> Result<(), NavFileError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        let q = r.pose.attitude.quaternion();
        wtr.serialize(NavRow {
            time: r.time,
            px: r.pose.position.x,
            py: r.pose.position.y,
            pz: r.pose.position.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            range: r.range_m,
            gx: r.gravity_dir.x,
            gy: r.gravity_dir.y,
            gz: r.gravity_dir.z,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam_1000() -> CameraModel {
        CameraModel::new(1000.0, Point2::new(512.0, 512.0), 1024, 1024).unwrap()
    }

    fn down_pose() -> Pose {
        // camera at origin looking along world +z
        Pose::identity()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        let axis = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let q = UnitQuaternion::from_scaled_axis(axis * 3.0);
        let p = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 500.0;
        Pose::new(p, q)
    }

    #[test]
    fn project_on_axis_hits_principal_point() {
        let cam = cam_1000();
        for z in [0.1, 1.0, 1e4] {
            let px = project(&cam, &down_pose(), &Vector3::new(0.0, 0.0, z)).unwrap();
            assert_eq!(px, Point2::new(512.0, 512.0));
        }
    }

    #[test]
    fn project_hand_computed() {
        let px = project(&cam_1000(), &down_pose(), &Vector3::new(1.0, 0.0, 100.0)).unwrap();
        assert_relative_eq!(px.x, 522.0, epsilon = 1e-12);
        assert_relative_eq!(px.y, 512.0, epsilon = 1e-12);
    }

    #[test]
    fn project_behind_camera() {
        let r = project(&cam_1000(), &down_pose(), &Vector3::new(0.0, 0.0, -1.0));
        assert!(matches!(r, Err(CameraError::BehindCamera(_))));
    }

    #[test]
    fn back_project_principal_point_is_boresight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = random_pose(&mut rng);
        let ray = back_project(&cam_1000(), &pose, &Point2::new(512.0, 512.0)).unwrap();
        assert_relative_eq!(ray.direction, pose.boresight(), epsilon = 1e-12);
    }

    #[test]
    fn back_project_out_of_bounds() {
        let r = back_project(&cam_1000(), &down_pose(), &Point2::new(-1.0, 0.0));
        assert!(matches!(r, Err(CameraError::OutOfBounds(..))));
    }

    #[test]
    fn round_trip_random_pixels() {
        let cam = cam_1000();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pose = random_pose(&mut rng);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let px = Point2::new(rng.random_range(-0.5..1023.5), rng.random_range(-0.5..1023.5));
            let ray = back_project(&cam, &pose, &px).unwrap();
            let t = rng.random_range(1.0..2000.0);
            let back = project(&cam, &pose, &ray.at(t)).unwrap();
            worst = worst.max((back - px).norm());
        }
        assert!(worst < 1e-9, "round trip error {worst}");
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(CameraModel::new(0.0, Point2::new(1.0, 1.0), 4, 4).is_err());
        assert!(CameraModel::new(10.0, Point2::new(4.0, 1.0), 4, 4).is_err());
        assert!(CameraModel::new(10.0, Point2::new(-0.1, 1.0), 4, 4).is_err());
    }

    #[test]
    fn binning_keeps_field_of_view() {
        let f = CameraModel::flight();
        let d = CameraModel::desk();
        assert_eq!(d.width_px(), 1024);
        let hfov = |c: &CameraModel| 2.0 * (0.5 * c.width_px() as f64 / c.focal_length_px()).atan();
        assert_relative_eq!(hfov(&f), hfov(&d), epsilon = 1e-12);
        assert_relative_eq!(d.principal_point().x, 511.5);
    }

    #[test]
    fn pose_inverse_composition_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = random_pose(&mut rng);
            assert!((p.attitude.norm() - 1.0).abs() < 1e-12);
            let id = p.then(&p.inverse());
            assert!(id.position.norm() < 1e-10);
            assert!(id.attitude.angle() < 1e-12);
            let x = Vector3::new(3.0, -2.0, 7.0);
            assert_relative_eq!(p.camera_to_world(&p.world_to_camera(&x)), x, epsilon = 1e-9);
        }
    }

    fn nav(pose: Pose) -> NavRecord {
        NavRecord {
            time: 0.0,
            pose,
            range_m: 100.0,
            gravity_dir: -Vector3::z(),
        }
    }

    #[test]
    fn relative_motion_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = nav(random_pose(&mut rng));
        let rel = relative_motion(&n, &n);
        assert!(rel.rotation.angle() < 1e-15);
        assert_eq!(rel.baseline_m, 0.0);
    }

    #[test]
    fn relative_motion_lateral_thirty_metres() {
        let p1 = Pose::look_at(Vector3::new(-400.0, 0.0, 400.0), Vector3::zeros(), Vector3::z());
        let p2 = Pose::new(p1.position + Vector3::new(0.0, 30.0, 0.0), p1.attitude);
        let rel = relative_motion(&nav(p1), &nav(p2));
        assert_relative_eq!(rel.baseline_m, 30.0, epsilon = 1e-12);
        assert!(rel.rotation.angle() < 1e-12);
    }

    #[test]
    fn relative_motion_composes_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let rel = relative_motion(&nav(a), &nav(b));
            let c = a.compose(&rel);
            assert!((c.position - b.position).norm() < 1e-10);
            assert!(c.attitude.angle_to(&b.attitude) < 1e-10);
            assert!((rel.baseline_m - rel.translation.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_invariant_under_global_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let g = UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0);
        let s = Vector3::new(10.0, -4.0, 99.0);
        let r0 = relative_motion(&nav(a), &nav(b));
        let r1 = relative_motion(&nav(a.transformed(&g, &s)), &nav(b.transformed(&g, &s)));
        assert_relative_eq!(r0.baseline_m, r1.baseline_m, epsilon = 1e-9);
        assert!(r0.rotation.angle_to(&r1.rotation) < 1e-9);
    }

    #[test]
    fn essential_constraint_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cam = cam_1000();
        let a = Pose::look_at(Vector3::new(-400.0, 0.0, 400.0), Vector3::zeros(), Vector3::z());
        let b = Pose::look_at(Vector3::new(-370.0, 5.0, 401.0), Vector3::new(3.0, 0.0, 0.0), Vector3::z());
        let rel = relative_motion(&nav(a), &nav(b));
        let f = rel.fundamental(&cam);
        for _ in 0..20 {
            let x = Vector3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-2.0..2.0));
            let p1 = project(&cam, &a, &x).unwrap();
            let p2 = project(&cam, &b, &x).unwrap();
            let r = Vector3::new(p2.x, p2.y, 1.0).dot(&(f * Vector3::new(p1.x, p1.y, 1.0)));
            assert!(r.abs() < 1e-9, "{r}");
        }
    }

    fn roi(x0: usize, y0: usize, size: usize) -> Roi {
        Roi {
            index: 3,
            x0,
            y0,
            width_px: size,
            height_px: size,
            mean_brightness: 100.0,
            stddev_brightness: 2.0,
            footprint_m: 10.0,
        }
    }

    #[test]
    fn predict_identity_is_identity() {
        let cam = cam_1000();
        let r = roi(128, 256, 128);
        let p = predict_roi(&r, &RelativePose::identity(), &cam, 400.0, 0.0).unwrap();
        assert_eq!(p, r);
    }

    #[test]
    fn predict_identity_with_margin_grows_half() {
        let cam = cam_1000();
        let r = roi(256, 256, 128);
        let p = predict_roi(&r, &RelativePose::identity(), &cam, 400.0, 0.25).unwrap();
        assert_eq!((p.x0, p.y0, p.width_px, p.height_px), (224, 224, 192, 192));
        // clamped at the border
        let edge = predict_roi(&roi(0, 0, 128), &RelativePose::identity(), &cam, 400.0, 0.25).unwrap();
        assert_eq!((edge.x0, edge.y0, edge.width_px, edge.height_px), (0, 0, 160, 160));
    }

    #[test]
    fn predict_off_image() {
        let cam = cam_1000();
        let rel = RelativePose::new(UnitQuaternion::identity(), Vector3::new(1000.0, 0.0, 0.0));
        let r = predict_roi(&roi(0, 0, 64), &rel, &cam, 400.0, 0.0);
        assert_eq!(r, Err(CameraError::OffImage));
    }

    #[test]
    fn predict_matches_plane_raycast_oracle() {
        // Terrain is the fronto-parallel plane at the laser range; the oracle
        // intersects each corner ray with it in world coordinates.
        let cam = cam_1000();
        let range = 400.0;
        let look = 45f64.to_radians();
        let p1 = Vector3::new(-range * look.sin(), 0.0, range * look.cos());
        let pose1 = Pose::look_at(p1, Vector3::zeros(), Vector3::z());
        let pose2 = Pose::new(p1 + Vector3::new(30.0, 0.0, 0.0), pose1.attitude);
        let rel = relative_motion(&nav(pose1), &nav(pose2));
        let n = -pose1.boresight();
        let plane_pt = pose1.position + pose1.boresight() * range;
        let r = roi(600, 300, 128);
        let pred = predict_roi(&r, &rel, &cam, range, 0.0).unwrap();

        let mut lo = Point2::new(f64::MAX, f64::MAX);
        let mut hi = Point2::new(f64::MIN, f64::MIN);
        for (u, v) in [(599.5, 299.5), (727.5, 299.5), (599.5, 427.5), (727.5, 427.5)] {
            let ray = back_project(&cam, &pose1, &Point2::new(u, v)).unwrap();
            let t = (plane_pt - ray.origin).dot(&n) / ray.direction.dot(&n);
            let q = project(&cam, &pose2, &ray.at(t)).unwrap();
            lo = Point2::new(lo.x.min(q.x), lo.y.min(q.y));
            hi = Point2::new(hi.x.max(q.x), hi.y.max(q.y));
        }
        assert!((pred.x0 as f64 - (lo.x + 0.5)).abs() <= 1.0);
        assert!((pred.y0 as f64 - (lo.y + 0.5)).abs() <= 1.0);
        assert!(((pred.x0 + pred.width_px) as f64 - (hi.x + 0.5)).abs() <= 1.0);
        assert!(((pred.y0 + pred.height_px) as f64 - (hi.y + 0.5)).abs() <= 1.0);
        // the motion actually moved the box
        assert!(pred.x0.abs_diff(r.x0) + pred.y0.abs_diff(r.y0) > 20);
    }

    #[test]
    fn nav_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let recs: Vec<_> = (0..3)
            .map(|i| NavRecord {
                time: i as f64 * 2.4,
                pose: random_pose(&mut rng),
                range_m: 565.0 + i as f64,
                gravity_dir: -Vector3::z(),
            })
            .collect();
        let mut buf = Vec::new();
        write_nav_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,px,py,pz,qw,qx,qy,qz,range,gx,gy,gz\n"));
        let back = read_nav_csv(&buf[..]).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.time, b.time);
            assert!((a.pose.position - b.pose.position).norm() < 1e-12);
            assert!(a.pose.attitude.angle_to(&b.pose.attitude) < 1e-12);
        }
    }

    #[test]
    fn nav_csv_rejects_bad_range() {
        let text = "time,px,py,pz,qw,qx,qy,qz,range,gx,gy,gz\n0,0,0,0,1,0,0,0,-3,0,0,-1\n";
        assert!(matches!(read_nav_csv(text.as_bytes()), Err(NavFileError::Invalid { row: 1, .. })));
    }
}
