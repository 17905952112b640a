use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hda_core::camera::CameraModel;
use hda_core::experiment::{ExperimentSpec, ProfileSpec, Source};
use hda_core::montecarlo::McConfig;
use hda_core::pipeline::HdaConfig;
use hda_core::scene::{SceneSpec, SunSpec, TextureSpec};

fn hda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hda")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn small_spec(scene: SceneSpec) -> ExperimentSpec {
    ExperimentSpec {
        scene: Source::Inline(SceneSpec {
            size_px: 513,
            ..scene
        }),
        config: Source::Inline(HdaConfig {
            camera: CameraModel::centered(3600.0, 512, 512).unwrap(),
            ..HdaConfig::default().with_total_budget(1e6)
        }),
        profile: ProfileSpec {
            repetitions: 3,
            binning: vec![1],
        },
        ..Default::default()
    }
}

fn benign() -> SceneSpec {
    SceneSpec {
        texture: TextureSpec::default(),
        ..SceneSpec::flat(4)
    }
}

fn write_spec(dir: &Path, spec: &ExperimentSpec) -> String {
    let path = dir.join("spec.json");
    fs::write(&path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn generate_and_run(dir: &Path, spec: &ExperimentSpec) -> Output {
    let spec = write_spec(dir, spec);
    let out = dir.join("out");
    let out = out.to_str().unwrap();
    let g = hda(&["generate", "--spec", &spec, "--out", out]);
    assert_eq!(code(&g), 0, "{}", String::from_utf8_lossy(&g.stderr));
    hda(&["run", "--spec", &spec, "--out", out, "--debug-dumps"])
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn benign_scene_finds_a_level_site() {
    let dir = tempfile::tempdir().unwrap();
    let o = generate_and_run(dir.path(), &small_spec(benign()));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let result = rows(&dir.path().join("out/result.csv"));
    assert_eq!(result[0][..3], ["rank", "roi", "slope_deg"]);
    let slope: f64 = result[1][2].parse().unwrap();
    assert!(slope < 1.0, "rank-1 slope {slope}");
    for f in ["timing.csv", "quadtree.csv", "rois.csv", "clouds.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn all_shadow_scene_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let scene = SceneSpec {
        sun: SunSpec::Angles {
            azimuth_deg: 90.0,
            elevation_deg: -5.0,
        },
        ..benign()
    };
    let o = generate_and_run(dir.path(), &small_spec(scene));
    assert_eq!(code(&o), 2);
    let result = rows(&dir.path().join("out/result.csv"));
    assert_eq!(result.len(), 1, "header only");
}

#[test]
fn missing_nav_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &small_spec(benign()));
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(code(&hda(&["generate", "--spec", &spec, "--out", out])), 0);
    fs::remove_file(dir.path().join("out/nav.csv")).unwrap();
    let o = hda(&["run", "--spec", &spec, "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nav.csv"));
}

#[test]
fn malformed_spec_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"config": {"quadtree": {"max_stdev": 3}}}"#).unwrap();
    let o = hda(&["run", "--spec", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json") && err.contains("quadtree.max_stdev"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&hda(&["frobnicate"])), 1);
    assert_eq!(code(&hda(&["--help"])), 0);
}

#[test]
fn mc_writes_both_motions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = McConfig {
        baselines_m: vec![0.0, 30.0],
        pixel_noise_px: vec![0.5],
        n_trials: 20,
        ..Default::default()
    };
    let path = dir.path().join("mc.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = hda(&["mc", "--spec", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = rows(&out.join("mc.csv"));
    assert_eq!(rows[0], ["motion", "baseline_m", "noise_px", "median_err_deg", "p95_err_deg", "n_degenerate"]);
    assert_eq!(rows.len(), 5);
    for motion in ["Lateral", "Boresight"] {
        assert_eq!(rows.iter().filter(|r| r[0] == motion).count(), 2);
    }
}

#[test]
fn same_spec_same_bytes() {
    let spec = small_spec(benign());
    let outputs: Vec<Vec<Vec<u8>>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            assert_eq!(code(&generate_and_run(dir.path(), &spec)), 0);
            ["image1.pgm", "image2.pgm", "nav.csv", "result.csv", "clouds.csv", "rois.csv"]
                .iter()
                .map(|f| fs::read(dir.path().join("out").join(f)).unwrap())
                .collect()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_flag_changes_the_scene() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &small_spec(benign()));
    let image = |seed: &str| {
        let out = dir.path().join(seed);
        let out = out.to_str().unwrap();
        assert_eq!(code(&hda(&["generate", "--spec", &spec, "--out", out, "--seed", seed])), 0);
        fs::read(dir.path().join(seed).join("image1.pgm")).unwrap()
    };
    assert_ne!(image("1"), image("2"));
}

#[test]
fn profile_records_requested_repetitions() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &small_spec(benign()));
    let out = dir.path().join("out");
    let o = hda(&["profile", "--spec", &spec, "--out", out.to_str().unwrap(), "--reps", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = rows(&out.join("profile.csv"));
    assert_eq!(rows.len(), 2);
    let reps = rows[0].iter().position(|h| h == "reps").unwrap();
    assert_eq!(rows[1][reps], "2");
    let total = rows[0].iter().position(|h| h == "total_median_s").unwrap();
    assert!(rows[1][total].parse::<f64>().unwrap() > 0.0);
}
