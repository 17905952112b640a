//! Reproducible experiments: a JSON document naming a scene, a trajectory and
//! a pipeline configuration, plus the generate / run / profile operations
//! that turn it into files.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{back_project, load_nav_csv, write_nav_csv, CameraModel, NavFileError, NavRecord, Pose};
use crate::image::{GrayImage, ImageError};
use crate::montecarlo::Motion;
use crate::pipeline::{profile_run, run_hda, write_profile_csv, HdaConfig, HdaResult, PairInput, PairTiming};
use crate::scene::{ground_truth_cloud, render_with, truth_maps, RenderOptions, SceneError, SceneSpec, TerrainScene};

pub const IMAGE1: &str = "image1.pgm";
pub const IMAGE2: &str = "image2.pgm";
pub const NAV: &str = "nav.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{file}: {path}: {message}")]
    Schema {
        file: String,
        path: String,
        message: String,
    },
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("{path}: {source}")]
    Image { path: String, source: ImageError },
    #[error("{path}: {source}")]
    Nav { path: String, source: NavFileError },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parse JSON with the failing field path in the error.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, file: &str) -> Result<T, ExperimentError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ExperimentError::Schema {
        file: file.to_string(),
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Level flight toward the landing site with two captures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryGenerator {
    /// Height of the first capture above the landing site.
    pub altitude_m: f64,
    /// Horizontal distance from the first capture to the landing site.
    pub downrange_m: f64,
    pub ground_speed_mps: f64,
    pub capture_interval_s: f64,
    pub motion: Motion,
    pub start_time_s: f64,
}

impl Default for TrajectoryGenerator {
    fn default() -> Self {
        Self {
            altitude_m: 400.0,
            downrange_m: 400.0,
            ground_speed_mps: 13.0,
            capture_interval_s: 2.4,
            motion: Motion::Lateral,
            start_time_s: 0.0,
        }
    }
}

impl TrajectoryGenerator {
    pub fn baseline_m(&self) -> f64 {
        self.ground_speed_mps * self.capture_interval_s
    }

    /// Both captures aimed at the terrain point under `target_xy`; ranges
    /// are measured by casting the boresight into the scene.
    pub fn records(&self, scene: &TerrainScene, cam: &CameraModel, target_xy: [f64; 2]) -> Result<[NavRecord; 2], ExperimentError> {
        if !(self.altitude_m > 0.0 && self.downrange_m >= 0.0) {
            return Err(ExperimentError::Invalid("altitude must be positive and downrange non-negative".into()));
        }
        if !(self.ground_speed_mps > 0.0 && self.capture_interval_s > 0.0) {
            return Err(ExperimentError::Invalid("ground speed and capture interval must be positive".into()));
        }
        let ground = scene
            .height(target_xy[0], target_xy[1])
            .ok_or_else(|| ExperimentError::Invalid("landing site lies outside the scene".into()))?;
        let target = Vector3::new(target_xy[0], target_xy[1], ground);
        let p1 = target + Vector3::new(-self.downrange_m, 0.0, self.altitude_m);
        let pose1 = Pose::look_at(p1, target, Vector3::z());
        let pose2 = match self.motion {
            Motion::Lateral => Pose::look_at(p1 + Vector3::new(0.0, self.baseline_m(), 0.0), target, Vector3::z()),
            Motion::Boresight => Pose::new(p1 + pose1.boresight() * self.baseline_m(), pose1.attitude),
        };
        let range = |pose: &Pose| {
            back_project(cam, pose, &cam.principal_point())
                .ok()
                .and_then(|ray| scene.raycast(&ray))
                .map(|h| h.t)
                .unwrap_or_else(|| (target - pose.position).norm())
        };
        let rec = |time: f64, pose: Pose| NavRecord {
            time,
            pose,
            range_m: range(&pose),
            gravity_dir: -Vector3::z(),
        };
        Ok([
            rec(self.start_time_s, pose1),
            rec(self.start_time_s + self.capture_interval_s, pose2),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    /// Explicit navigation records; the first two are used.
    Records(Vec<NavRecord>),
    Generator(TrajectoryGenerator),
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::Generator(TrajectoryGenerator::default())
    }
}

/// A file path, relative to the experiment file, or an inline document.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<'de, T: serde::de::DeserializeOwned> Deserialize<'de> for Source<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(p) => Ok(Source::Path(PathBuf::from(p))),
            v => serde_path_to_error::deserialize(v)
                .map(Source::Inline)
                .map_err(|e| match e.path().to_string().as_str() {
                    "." => D::Error::custom(e.inner()),
                    path => D::Error::custom(format!("{path}: {}", e.inner())),
                }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSpec {
    pub repetitions: usize,
    /// Camera binning factors; each yields one image pair.
    pub binning: Vec<usize>,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self {
            repetitions: 3,
            binning: vec![1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scene: Source<SceneSpec>,
    pub trajectory: Trajectory,
    pub config: Source<HdaConfig>,
    pub render: RenderOptions,
    /// Master seed; when set it replaces the scene seed and the RANSAC seed.
    pub seed: Option<u64>,
    /// Where outputs go (and where `run` finds its inputs unless
    /// `inputs_dir` is given).
    pub output_dir: Option<PathBuf>,
    pub inputs_dir: Option<PathBuf>,
    /// Truth-map sampling stride in pixels.
    pub truth_stride: usize,
    /// Side of the truth point lattice over image 1.
    pub truth_cloud_side: usize,
    pub profile: ProfileSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scene: Source::Inline(SceneSpec::lunar_default(1)),
            trajectory: Trajectory::default(),
            config: Source::Inline(HdaConfig::default()),
            render: RenderOptions::default(),
            seed: None,
            output_dir: None,
            inputs_dir: None,
            truth_stride: 8,
            truth_cloud_side: 64,
            profile: ProfileSpec::default(),
        }
    }
}

/// An experiment with every reference loaded and validated.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub scene: SceneSpec,
    pub config: HdaConfig,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn read_text(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

impl Experiment {
    /// Parse and validate an experiment document. Relative paths inside it
    /// resolve against `base_dir`.
    pub fn from_json(text: &str, file: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let spec: ExperimentSpec = parse_json(text, file)?;
        Self::from_spec(spec, base_dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&read_text(path)?, &path.display().to_string(), &base)
    }

    pub fn from_spec(spec: ExperimentSpec, base_dir: &Path) -> Result<Self, ExperimentError> {
        let resolve = |p: &Path| base_dir.join(p);
        let mut scene = match &spec.scene {
            Source::Inline(s) => s.clone(),
            Source::Path(p) => {
                let p = resolve(p);
                let text = read_text(&p)?;
                parse_json(&text, &p.display().to_string())?
            }
        };
        scene.validate()?;
        let mut config = match &spec.config {
            Source::Inline(c) => c.clone(),
            Source::Path(p) => {
                let p = resolve(p);
                parse_json(&read_text(&p)?, &p.display().to_string())?
            }
        };
        if let Some(seed) = spec.seed {
            scene.seed = seed;
            config.ransac_seed = seed;
        }
        config.validate().map_err(ExperimentError::Invalid)?;
        if spec.truth_stride == 0 || spec.truth_cloud_side < 2 {
            return Err(ExperimentError::Invalid(
                "truth_stride must be positive and truth_cloud_side at least 2".into(),
            ));
        }
        if spec.profile.repetitions == 0 || spec.profile.binning.contains(&0) {
            return Err(ExperimentError::Invalid("profile repetitions and binning must be positive".into()));
        }
        if let Trajectory::Records(r) = &spec.trajectory {
            if r.len() < 2 {
                return Err(ExperimentError::Invalid("trajectory needs at least two nav records".into()));
            }
        }
        Ok(Self {
            spec,
            scene,
            config,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Replace the master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.spec.seed = Some(seed);
        self.scene.seed = seed;
        self.config.ransac_seed = seed;
        self
    }

    pub fn output_dir(&self, over: Option<&Path>) -> PathBuf {
        match over {
            Some(p) => p.to_path_buf(),
            None => self.base_dir.join(self.spec.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))),
        }
    }

    pub fn inputs_dir(&self, out: &Path) -> PathBuf {
        match &self.spec.inputs_dir {
            Some(p) => self.base_dir.join(p),
            None => out.to_path_buf(),
        }
    }

    fn nav_records(&self, scene: &TerrainScene, cam: &CameraModel) -> Result<[NavRecord; 2], ExperimentError> {
        match &self.spec.trajectory {
            Trajectory::Records(r) => Ok([r[0], r[1]]),
            Trajectory::Generator(g) => g.records(scene, cam, [self.config.ils_position[0], self.config.ils_position[1]]),
        }
    }

    /// Render the image pair for `cam`.
    pub fn render_pair(&self, scene: &TerrainScene, cam: &CameraModel) -> Result<RenderedPair, ExperimentError> {
        let nav = self.nav_records(scene, cam)?;
        let r1 = render_with(scene, cam, &nav[0].pose, &self.spec.render);
        let r2 = render_with(scene, cam, &nav[1].pose, &self.spec.render);
        Ok(RenderedPair {
            image1: r1.image,
            image2: r2.image,
            nav,
            shadow1: r1.shadow,
        })
    }
}

pub struct RenderedPair {
    pub image1: GrayImage,
    pub image2: GrayImage,
    pub nav: [NavRecord; 2],
    /// Shadow truth for image 1, row-major.
    pub shadow1: Vec<bool>,
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Files written by `generate`, relative to the output directory.
pub const GENERATED: [&str; 6] = [
    IMAGE1,
    IMAGE2,
    NAV,
    "truth_cloud.csv",
    "truth_elevation.csv",
    "truth_slope.csv",
];

/// Render the scene from both captures and write the image pair, the
/// navigation file and ground truth.
pub fn generate(exp: &Experiment, out: &Path) -> Result<RenderedPair, ExperimentError> {
    ensure_dir(out)?;
    let scene = exp.scene.build()?;
    let cam = exp.config.camera;
    let pair = exp.render_pair(&scene, &cam)?;
    for (name, img) in [(IMAGE1, &pair.image1), (IMAGE2, &pair.image2)] {
        let p = out.join(name);
        img.save_pgm(&p).map_err(|source| ExperimentError::Image {
            path: p.display().to_string(),
            source,
        })?;
    }
    let nav_path = out.join(NAV);
    write_nav_csv(create(&nav_path)?, &pair.nav).map_err(|source| ExperimentError::Nav {
        path: nav_path.display().to_string(),
        source,
    })?;
    let side = exp.spec.truth_cloud_side;
    ground_truth_cloud(&scene, &cam, &pair.nav[0].pose, side, side, None).write_csv(create(&out.join("truth_cloud.csv"))?)?;
    let maps = truth_maps(&scene, &cam, &pair.nav[0].pose, exp.spec.truth_stride);
    maps.write_elevation_csv(create(&out.join("truth_elevation.csv"))?)?;
    maps.write_slope_csv(create(&out.join("truth_slope.csv"))?)?;
    Ok(pair)
}

/// Image pair and navigation records from an inputs directory.
pub fn load_inputs(dir: &Path) -> Result<(GrayImage, GrayImage, [NavRecord; 2]), ExperimentError> {
    let load = |name: &str| {
        let p = dir.join(name);
        GrayImage::load_pgm(&p).map_err(|source| ExperimentError::Image {
            path: p.display().to_string(),
            source,
        })
    };
    let nav_path = dir.join(NAV);
    let nav = load_nav_csv(&nav_path).map_err(|source| ExperimentError::Nav {
        path: nav_path.display().to_string(),
        source,
    })?;
    if nav.len() < 2 {
        return Err(ExperimentError::Invalid(format!(
            "{} holds {} records, two are required",
            nav_path.display(),
            nav.len()
        )));
    }
    Ok((load(IMAGE1)?, load(IMAGE2)?, [nav[0], nav[1]]))
}

/// Run the pipeline on the inputs and write `result.csv` and `timing.csv`
/// (plus `quadtree.csv`, `rois.csv` and `clouds.csv` with `debug_dumps`).
pub fn run(exp: &Experiment, out: &Path, debug_dumps: bool) -> Result<HdaResult, ExperimentError> {
    let (img1, img2, nav) = load_inputs(&exp.inputs_dir(out))?;
    let result = run_hda(&img1, &nav[0], &img2, &nav[1], &exp.config);
    ensure_dir(out)?;
    result.write_result_csv(create(&out.join("result.csv"))?)?;
    result.write_timing_csv(create(&out.join("timing.csv"))?)?;
    if debug_dumps {
        if let Some(d) = &result.decomposition {
            let p = out.join("quadtree.csv");
            d.write_csv(create(&p)?).map_err(io_err(&p))?;
        }
        result.write_rois_csv(create(&out.join("rois.csv"))?)?;
        result.write_clouds_csv(create(&out.join("clouds.csv"))?)?;
    }
    Ok(result)
}

/// Render one pair per binning factor and time `repetitions` pipeline runs
/// on each; writes `profile.csv`.
pub fn profile(exp: &Experiment, out: &Path, repetitions: Option<usize>) -> Result<Vec<PairTiming>, ExperimentError> {
    let reps = repetitions.unwrap_or(exp.spec.profile.repetitions).max(1);
    let scene = exp.scene.build()?;
    let mut pairs = Vec::new();
    for &b in &exp.spec.profile.binning {
        let cam = exp.config.camera.binned(b);
        pairs.push((cam, exp.render_pair(&scene, &cam)?));
    }
    let inputs: Vec<PairInput> = pairs
        .iter()
        .map(|(cam, p)| PairInput {
            name: format!("{}x{}", cam.width_px(), cam.height_px()),
            image1: &p.image1,
            nav1: p.nav[0],
            image2: &p.image2,
            nav2: p.nav[1],
        })
        .collect();
    let rows = profile_run(&inputs, &exp.config, reps);
    ensure_dir(out)?;
    write_profile_csv(create(&out.join("profile.csv"))?, &rows)?;
    Ok(rows)
}

/// Horizontal ground distance between the boresight intersection and the
/// landing site, useful for checking generated trajectories.
pub fn boresight_miss_m(cam: &CameraModel, nav: &NavRecord, ils: &Vector3<f64>) -> f64 {
    let g = crate::pipeline::ground_point(cam, nav, &cam.principal_point());
    let d = g - ils;
    d.x.hypot(d.y)
}
