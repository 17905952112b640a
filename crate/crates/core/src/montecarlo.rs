//! Slope observability versus baseline and pixel noise for two kinds of
//! camera motion, using synthetic features on a tilted plane.

use std::io::Write;

use nalgebra::{Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{project, CameraModel, Pose, RelativePose};
use crate::features::{Keypoint, Match};
use crate::par;
use crate::sfm::{fit_plane, slope_of, triangulate};

/// How the camera moves between the two captures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Motion {
    /// Translation along the optical axis toward the target.
    Boresight,
    /// Horizontal translation at constant altitude, perpendicular to the
    /// look direction, with the camera re-pointed at the target.
    Lateral,
}

impl Motion {
    pub fn name(&self) -> &'static str {
        match self {
            Motion::Boresight => "Boresight",
            Motion::Lateral => "Lateral",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub motions: Vec<Motion>,
    pub baselines_m: Vec<f64>,
    /// Standard deviation of zero-mean Gaussian noise on each coordinate of
    /// the matched image-2 position; image-1 positions are exact.
    pub pixel_noise_px: Vec<f64>,
    pub n_trials: usize,
    pub n_features: usize,
    pub altitude_m: f64,
    /// Boresight angle from nadir.
    pub look_angle_deg: f64,
    pub truth_slope_deg: f64,
    /// Side of the square patch the features are scattered on.
    pub patch_size_m: f64,
    pub camera: CameraModel,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            motions: vec![Motion::Lateral, Motion::Boresight],
            baselines_m: (0..=12).map(|i| i as f64 * 5.0).collect(),
            pixel_noise_px: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            n_trials: 500,
            n_features: 40,
            altitude_m: 400.0,
            look_angle_deg: 45.0,
            truth_slope_deg: 5.0,
            patch_size_m: 10.0,
            camera: CameraModel::flight(),
            seed: 0x0B5E_4AB1,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.motions.is_empty() || self.baselines_m.is_empty() || self.pixel_noise_px.is_empty() {
            return Err("motions, baselines_m and pixel_noise_px must be non-empty".into());
        }
        if self.baselines_m.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err("baselines must be finite and non-negative".into());
        }
        if self.pixel_noise_px.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err("pixel noise must be finite and non-negative".into());
        }
        if self.n_trials == 0 {
            return Err("n_trials must be at least 1".into());
        }
        if self.n_features < 3 {
            return Err("n_features must be at least 3".into());
        }
        if !(self.altitude_m > 0.0) {
            return Err("altitude_m must be positive".into());
        }
        if !(self.look_angle_deg >= 0.0 && self.look_angle_deg < 90.0) {
            return Err("look_angle_deg must be in [0, 90)".into());
        }
        if !(self.truth_slope_deg.abs() < 90.0) || !(self.patch_size_m > 0.0) {
            return Err("truth_slope_deg must be below 90 and patch_size_m positive".into());
        }
        Ok(())
    }

    /// Grid cells in output order: motion, then baseline, then noise.
    pub fn cells(&self) -> Vec<McCell> {
        let mut out = Vec::new();
        for &motion in &self.motions {
            for &baseline_m in &self.baselines_m {
                for &noise_px in &self.pixel_noise_px {
                    out.push(McCell {
                        motion,
                        baseline_m,
                        noise_px,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McCell {
    pub motion: Motion,
    pub baseline_m: f64,
    pub noise_px: f64,
}

/// Both camera poses for a cell, looking at the origin from
/// `altitude_m` with the given look angle.
pub fn trial_poses(cfg: &McConfig, cell: &McCell) -> (Pose, Pose) {
    let target = Vector3::zeros();
    let downrange = cfg.altitude_m * cfg.look_angle_deg.to_radians().tan();
    let p1 = Vector3::new(-downrange, 0.0, cfg.altitude_m);
    let pose1 = Pose::look_at(p1, target, Vector3::z());
    let pose2 = match cell.motion {
        Motion::Boresight => Pose::new(p1 + pose1.boresight() * cell.baseline_m, pose1.attitude),
        Motion::Lateral => Pose::look_at(p1 + Vector3::new(0.0, cell.baseline_m, 0.0), target, Vector3::z()),
    };
    (pose1, pose2)
}

fn keypoint(p: Point2<f64>) -> Keypoint {
    Keypoint {
        x: p.x,
        y: p.y,
        response: 0.0,
        orientation: 0.0,
        level: 0,
        descriptor: [0; 4],
    }
}

/// Absolute slope error of one trial in degrees; `f64::INFINITY` when the
/// geometry admits no plane estimate.
pub fn run_trial(cfg: &McConfig, cell: &McCell, rng: &mut ChaCha8Rng) -> f64 {
    let cam = &cfg.camera;
    let (pose1, pose2) = trial_poses(cfg, cell);
    let half = 0.5 * cfg.patch_size_m;
    let tan_s = cfg.truth_slope_deg.to_radians().tan();
    let noise = Normal::new(0.0, cell.noise_px).expect("noise is finite and non-negative");
    let mut kps1 = Vec::with_capacity(cfg.n_features);
    let mut kps2 = Vec::with_capacity(cfg.n_features);
    for _ in 0..cfg.n_features {
        let u = rng.random_range(-half..=half);
        let v = rng.random_range(-half..=half);
        let p = Vector3::new(u, v, u * tan_s);
        let (Ok(a), Ok(b)) = (project(cam, &pose1, &p), project(cam, &pose2, &p)) else {
            continue;
        };
        kps1.push(keypoint(a));
        kps2.push(keypoint(Point2::new(b.x + noise.sample(rng), b.y + noise.sample(rng))));
    }
    let matches: Vec<Match> = (0..kps1.len())
        .map(|i| Match {
            idx1: i,
            idx2: i,
            hamming: 0,
            epipolar_residual_px: f64::NAN,
        })
        .collect();
    let rel = RelativePose::new(
        pose2.attitude * pose1.attitude.inverse(),
        pose1.attitude * (pose2.position - pose1.position),
    );
    let Ok((cloud, _)) = triangulate(&matches, &kps1, &kps2, &pose1, &rel, cam, 0.0) else {
        return f64::INFINITY;
    };
    match fit_plane(&cloud.points, &Vector3::z()) {
        Ok(plane) => (slope_of(&plane.normal, &-Vector3::z()) - cfg.truth_slope_deg.abs()).abs(),
        Err(_) => f64::INFINITY,
    }
}

/// Generator for trial `trial` of cell `cell`: one ChaCha stream per cell,
/// positioned per trial, so results do not depend on scheduling.
pub fn trial_rng(seed: u64, cell: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    // 2^20 words per trial is far more than a trial consumes
    rng.set_word_pos((trial as u128) << 20);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellStats {
    pub cell: McCell,
    /// One sample per trial, in trial order.
    pub errors_deg: Vec<f64>,
    pub median_err_deg: f64,
    pub p95_err_deg: f64,
    pub n_degenerate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McResult {
    pub cells: Vec<CellStats>,
}

/// Nearest-rank percentile of a sorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn cell_stats(cell: McCell, errors_deg: Vec<f64>) -> CellStats {
    let mut sorted = errors_deg.clone();
    sorted.sort_by(f64::total_cmp);
    CellStats {
        cell,
        n_degenerate: errors_deg.iter().filter(|e| !e.is_finite()).count(),
        median_err_deg: median(&sorted),
        p95_err_deg: percentile(&sorted, 0.95),
        errors_deg,
    }
}

/// Evaluate every cell of the grid.
pub fn sweep(cfg: &McConfig) -> Result<McResult, String> {
    cfg.validate()?;
    let cells = cfg.cells();
    let stats = cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let errors = par::map_range(cfg.n_trials, |t| run_trial(cfg, cell, &mut trial_rng(cfg.seed, ci, t)));
            cell_stats(*cell, errors)
        })
        .collect();
    Ok(McResult { cells: stats })
}

impl McResult {
    pub fn cell(&self, motion: Motion, baseline_m: f64, noise_px: f64) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.cell.motion == motion && c.cell.baseline_m == baseline_m && c.cell.noise_px == noise_px)
    }

    /// `motion,baseline_m,noise_px,median_err_deg,p95_err_deg,n_degenerate`
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "motion",
            "baseline_m",
            "noise_px",
            "median_err_deg",
            "p95_err_deg",
            "n_degenerate",
        ])?;
        for c in &self.cells {
            wr.write_record([
                c.cell.motion.name().to_string(),
                c.cell.baseline_m.to_string(),
                c.cell.noise_px.to_string(),
                format!("{:.6}", c.median_err_deg),
                format!("{:.6}", c.p95_err_deg),
                c.n_degenerate.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(motions: Vec<Motion>, baselines: Vec<f64>, noise: Vec<f64>, n: usize) -> McConfig {
        McConfig {
            motions,
            baselines_m: baselines,
            pixel_noise_px: noise,
            n_trials: n,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_trials_are_exact() {
        let cfg = small(vec![Motion::Lateral, Motion::Boresight], vec![5.0, 30.0, 60.0], vec![0.0], 5);
        let r = sweep(&cfg).unwrap();
        for c in &r.cells {
            assert_eq!(c.n_degenerate, 0);
            assert!(c.errors_deg.iter().all(|e| *e < 1e-6), "{:?}", c.cell);
        }
    }

    #[test]
    fn zero_baseline_is_flagged() {
        let cfg = small(vec![Motion::Lateral, Motion::Boresight], vec![0.0], vec![0.5], 4);
        let r = sweep(&cfg).unwrap();
        for c in &r.cells {
            assert_eq!(c.n_degenerate, 4);
            assert!(c.median_err_deg.is_infinite());
        }
    }

    #[test]
    fn single_trial_single_sample() {
        let r = sweep(&small(vec![Motion::Lateral], vec![30.0], vec![0.5], 1)).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.cells[0].errors_deg.len(), 1);
    }

    #[test]
    fn lateral_poses_keep_altitude_and_baseline() {
        let cfg = McConfig::default();
        let cell = McCell {
            motion: Motion::Lateral,
            baseline_m: 30.0,
            noise_px: 0.0,
        };
        let (a, b) = trial_poses(&cfg, &cell);
        assert!((a.position.z - b.position.z).abs() < 1e-12);
        assert!(((b.position - a.position).norm() - 30.0).abs() < 1e-9);
        assert!((b.position - a.position).dot(&a.boresight()).abs() < 1e-9);
        let cell = McCell {
            motion: Motion::Boresight,
            ..cell
        };
        let (a, b) = trial_poses(&cfg, &cell);
        let d = (b.position - a.position).normalize();
        assert!((d - a.boresight()).norm() < 1e-12);
    }

    #[test]
    fn seeded_sweep_is_reproducible() {
        let cfg = small(vec![Motion::Lateral], vec![10.0, 30.0], vec![0.5, 1.0], 20);
        let a = sweep(&cfg).unwrap();
        assert_eq!(a, sweep(&cfg).unwrap());
        let other = McConfig { seed: 1, ..cfg };
        assert_ne!(a, sweep(&other).unwrap());
    }

    #[test]
    fn statistics_use_every_trial() {
        let s = cell_stats(
            McCell {
                motion: Motion::Lateral,
                baseline_m: 1.0,
                noise_px: 0.0,
            },
            (1..=20).map(|i| i as f64).collect(),
        );
        assert_eq!(s.median_err_deg, 10.5);
        assert_eq!(s.p95_err_deg, 19.0);
        assert_eq!(s.n_degenerate, 0);
    }

    #[test]
    fn csv_columns() {
        let r = sweep(&small(vec![Motion::Boresight], vec![30.0], vec![0.0], 2)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(
            lines.next(),
            Some("motion,baseline_m,noise_px,median_err_deg,p95_err_deg,n_degenerate")
        );
        assert!(lines.next().unwrap().starts_with("Boresight,30,0,0.000000,"));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(McConfig::default().validate().is_ok());
        assert!(small(vec![Motion::Lateral], vec![-1.0], vec![0.5], 1).validate().is_err());
        assert!(small(vec![Motion::Lateral], vec![1.0], vec![0.5], 0).validate().is_err());
        assert!(small(vec![Motion::Lateral], vec![1.0], vec![f64::NAN], 1).validate().is_err());
    }
}
