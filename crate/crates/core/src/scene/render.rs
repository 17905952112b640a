//! Hard-shadow Lambertian rendering and ray-cast ground truth.

use std::io::{Read, Write};

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use super::{SceneError, TerrainScene};
use crate::camera::{back_project, CameraModel, Pose};
use crate::image::GrayImage;
use crate::par;
use crate::quadtree::Rect;

/// Rendered image with per-pixel truth flags (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub image: GrayImage,
    /// Lit side facing away from the sun or sun ray occluded.
    pub shadow: Vec<bool>,
    /// Ray left the scene without a hit.
    pub miss: Vec<bool>,
    /// Rock visible at the pixel, if any.
    pub rock: Vec<Option<u32>>,
}

impl Rendered {
    pub fn is_shadow(&self, x: usize, y: usize) -> bool {
        self.shadow[y * self.image.width() + x]
    }
}

struct PixelTruth {
    value: u8,
    shadow: bool,
    miss: bool,
    rock: Option<u32>,
}

/// Radiance in 8-bit units along one ray, plus the hit truth.
fn radiance(scene: &TerrainScene, cam: &CameraModel, pose: &Pose, u: f64, v: f64) -> (f64, bool, bool, Option<u32>) {
    let ray = back_project(cam, pose, &Point2::new(u, v)).expect("finite pixel coordinates");
    let Some(hit) = scene.raycast(&ray) else {
        return (0.0, false, true, None);
    };
    let ns = hit.normal.dot(&scene.sun_dir);
    if ns <= 0.0 || scene.occluded(&hit.point) {
        return (0.0, true, false, hit.rock);
    }
    let tex = scene.texture_at(hit.point.x, hit.point.y);
    (scene.albedo * tex * ns * 255.0, false, false, hit.rock)
}

fn shade(scene: &TerrainScene, cam: &CameraModel, pose: &Pose, u: usize, v: usize, n: usize) -> PixelTruth {
    let (u, v) = (u as f64, v as f64);
    let (center, shadow, miss, rock) = radiance(scene, cam, pose, u, v);
    let value = if n <= 1 {
        center
    } else {
        let mut sum = 0.0;
        for j in 0..n {
            for i in 0..n {
                let du = (i as f64 + 0.5) / n as f64 - 0.5;
                let dv = (j as f64 + 0.5) / n as f64 - 0.5;
                sum += radiance(scene, cam, pose, u + du, v + dv).0;
            }
        }
        sum / (n * n) as f64
    };
    PixelTruth {
        value: value.round().clamp(0.0, 255.0) as u8,
        shadow,
        miss,
        rock,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    /// Rays per pixel along each axis; the pixel value is their mean.
    pub supersample: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { supersample: 1 }
    }
}

/// Render the scene: `round(albedo * texture * max(0, n.s) * 255)`, zero in
/// hard shadow and where the ray misses.
pub fn render(scene: &TerrainScene, cam: &CameraModel, pose: &Pose) -> Rendered {
    render_with(scene, cam, pose, &RenderOptions::default())
}

/// As `render`, averaging `supersample^2` rays over each pixel area. Truth
/// flags always describe the pixel-center ray.
pub fn render_with(scene: &TerrainScene, cam: &CameraModel, pose: &Pose, opts: &RenderOptions) -> Rendered {
    let (w, h) = (cam.width_px(), cam.height_px());
    let n = opts.supersample.max(1);
    let rows = par::map_range(h, |v| (0..w).map(|u| shade(scene, cam, pose, u, v, n)).collect::<Vec<_>>());
    let mut data = Vec::with_capacity(w * h);
    let mut shadow = Vec::with_capacity(w * h);
    let mut miss = Vec::with_capacity(w * h);
    let mut rock = Vec::with_capacity(w * h);
    for p in rows.into_iter().flatten() {
        data.push(p.value);
        shadow.push(p.shadow);
        miss.push(p.miss);
        rock.push(p.rock);
    }
    Rendered {
        image: GrayImage::from_raw(w, h, data).expect("dimensions match"),
        shadow,
        miss,
        rock,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TruthSample {
    pub fn point(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// Ray-cast surface points on a regular sample lattice; misses are absent.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthCloud {
    pub rows: usize,
    pub cols: usize,
    pub samples: Vec<TruthSample>,
}

impl TruthCloud {
    pub fn points(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(TruthSample::point).collect()
    }

    /// CSV `row,col,x,y,z`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SceneError> {
        let mut wtr = csv::Writer::from_writer(w);
        for s in &self.samples {
            wtr.serialize(s)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Vec<TruthSample>, SceneError> {
        let mut rdr = csv::Reader::from_reader(r);
        Ok(rdr.deserialize().collect::<Result<Vec<TruthSample>, _>>()?)
    }
}

/// Cast `rows x cols` rays through evenly spaced pixel centers spanning
/// `rect` (the whole image when `None`); the corner samples hit the corner
/// pixel centers exactly.
pub fn ground_truth_cloud(
    scene: &TerrainScene,
    cam: &CameraModel,
    pose: &Pose,
    rows: usize,
    cols: usize,
    rect: Option<Rect>,
) -> TruthCloud {
    assert!(rows >= 2 && cols >= 2, "need at least a 2x2 lattice");
    let r = rect.unwrap_or(Rect {
        x0: 0,
        y0: 0,
        width: cam.width_px(),
        height: cam.height_px(),
    });
    let du = (r.width as f64 - 1.0) / (cols as f64 - 1.0);
    let dv = (r.height as f64 - 1.0) / (rows as f64 - 1.0);
    let lines = par::map_range(rows, |i| {
        (0..cols)
            .filter_map(|j| {
                let px = Point2::new(r.x0 as f64 + j as f64 * du, r.y0 as f64 + i as f64 * dv);
                let ray = back_project(cam, pose, &px).ok()?;
                let hit = scene.raycast(&ray)?;
                Some(TruthSample {
                    row: i,
                    col: j,
                    x: hit.point.x,
                    y: hit.point.y,
                    z: hit.point.z,
                })
            })
            .collect::<Vec<_>>()
    });
    TruthCloud {
        rows,
        cols,
        samples: lines.concat(),
    }
}

/// Per-pixel elevation and surface slope sampled every `stride` pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthMaps {
    pub rows: usize,
    pub cols: usize,
    pub stride: usize,
    pub elevation: Vec<Option<f64>>,
    pub slope_deg: Vec<Option<f64>>,
}

impl TruthMaps {
    fn write_grid<W: Write>(&self, w: W, grid: &[Option<f64>]) -> Result<(), SceneError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["row", "col", "value"])?;
        for (i, v) in grid.iter().enumerate() {
            if let Some(v) = v {
                let (row, col) = ((i / self.cols) * self.stride, (i % self.cols) * self.stride);
                wtr.write_record([row.to_string(), col.to_string(), v.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// CSV `row,col,value` in pixel coordinates; misses are omitted.
    pub fn write_elevation_csv<W: Write>(&self, w: W) -> Result<(), SceneError> {
        self.write_grid(w, &self.elevation)
    }

    pub fn write_slope_csv<W: Write>(&self, w: W) -> Result<(), SceneError> {
        self.write_grid(w, &self.slope_deg)
    }
}

pub fn truth_maps(scene: &TerrainScene, cam: &CameraModel, pose: &Pose, stride: usize) -> TruthMaps {
    let stride = stride.max(1);
    let rows = cam.height_px().div_ceil(stride);
    let cols = cam.width_px().div_ceil(stride);
    let lines = par::map_range(rows, |i| {
        (0..cols)
            .map(|j| {
                let px = Point2::new((j * stride) as f64, (i * stride) as f64);
                let hit = back_project(cam, pose, &px).ok().and_then(|ray| scene.raycast(&ray));
                hit.map(|h| (h.point.z, h.normal.z.clamp(-1.0, 1.0).acos().to_degrees()))
            })
            .collect::<Vec<_>>()
    });
    let flat: Vec<_> = lines.concat();
    TruthMaps {
        rows,
        cols,
        stride,
        elevation: flat.iter().map(|h| h.map(|v| v.0)).collect(),
        slope_deg: flat.iter().map(|h| h.map(|v| v.1)).collect(),
    }
}
