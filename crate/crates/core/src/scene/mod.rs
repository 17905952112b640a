//! Synthetic lunar terrain: procedural relief, power-law rocks, hard-shadow
//! rendering and ray-cast ground truth.

mod heightmap;
mod render;
mod rocks;
mod spec;

pub use heightmap::{generate_heightmap, Heightmap, Octave, Ramp};
pub use render::{
    ground_truth_cloud, render, render_with, truth_maps, RenderOptions, Rendered, TruthCloud, TruthMaps, TruthSample,
};
pub use rocks::{
    rock_count, scatter_rocks, Rock, RockDistributionParams, RockField, MARE_AREAL_K_PER_M2, MARE_EXPONENT,
};
pub use spec::{SceneSpec, SunSpec};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Ray;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("scene spec {path}: {message}")]
    Schema { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Multiplicative albedo variation from layered value noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    /// Peak fractional deviation from the base albedo.
    pub amplitude: f64,
    /// Lattice spacing of each noise layer (m).
    pub cell_sizes_m: Vec<f64>,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.12,
            cell_sizes_m: vec![0.8, 0.4, 0.2],
        }
    }
}

impl TextureSpec {
    pub fn none() -> Self {
        Self {
            amplitude: 0.0,
            cell_sizes_m: Vec::new(),
        }
    }
}

#[inline]
fn lattice_hash(seed: u64, layer: u64, ix: i64, iy: i64) -> f64 {
    // splitmix64 finalizer over the packed lattice coordinate
    let mut z = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ layer.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// The synthetic world.
#[derive(Clone, Debug, PartialEq)]
pub struct TerrainScene {
    pub heightmap: Heightmap,
    pub rocks: RockField,
    /// Unit vector toward the sun.
    pub sun_dir: Vector3<f64>,
    pub albedo: f64,
    pub texture: TextureSpec,
    pub texture_seed: u64,
    z_min: f64,
    z_max: f64,
    step: f64,
    tiles: TileMax,
}

/// Coarse grid of maximum surface heights used to skip empty space.
#[derive(Clone, Debug, PartialEq)]
struct TileMax {
    size_m: f64,
    origin: [f64; 2],
    nx: usize,
    ny: usize,
    max: Vec<f64>,
}

const TILE_NODES: usize = 8;

impl TileMax {
    fn new(hm: &Heightmap, rocks: &RockField) -> Self {
        let res = hm.resolution_mpp();
        let size_m = TILE_NODES as f64 * res;
        let nx = (hm.cols() - 1).div_ceil(TILE_NODES);
        let ny = (hm.rows() - 1).div_ceil(TILE_NODES);
        let mut max = vec![f64::NEG_INFINITY; nx * ny];
        for ty in 0..ny {
            for tx in 0..nx {
                let mut m = f64::NEG_INFINITY;
                for r in ty * TILE_NODES..=((ty + 1) * TILE_NODES).min(hm.rows() - 1) {
                    for c in tx * TILE_NODES..=((tx + 1) * TILE_NODES).min(hm.cols() - 1) {
                        m = m.max(hm.node(r, c));
                    }
                }
                max[ty * nx + tx] = m;
            }
        }
        let origin = hm.origin();
        for (rock, z) in rocks.rocks.iter().zip(&rocks.base_z) {
            let h = 0.5 * rock.diameter_m;
            let top = z + rock.height_m;
            let tx0 = ((rock.center[0] - h - origin[0]) / size_m).floor().max(0.0) as usize;
            let ty0 = ((rock.center[1] - h - origin[1]) / size_m).floor().max(0.0) as usize;
            let tx1 = (((rock.center[0] + h - origin[0]) / size_m).floor().max(0.0) as usize).min(nx - 1);
            let ty1 = (((rock.center[1] + h - origin[1]) / size_m).floor().max(0.0) as usize).min(ny - 1);
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    let m = &mut max[ty * nx + tx];
                    *m = m.max(top);
                }
            }
        }
        Self {
            size_m,
            origin,
            nx,
            ny,
            max,
        }
    }

    /// Tile bounds `(x0, y0, x1, y1)` and maximum height containing `(x, y)`.
    #[inline]
    fn lookup(&self, x: f64, y: f64) -> Option<([f64; 4], f64)> {
        let gx = (x - self.origin[0]) / self.size_m;
        let gy = (y - self.origin[1]) / self.size_m;
        if !(gx >= 0.0 && gy >= 0.0) {
            return None;
        }
        let (tx, ty) = ((gx as usize).min(self.nx - 1), (gy as usize).min(self.ny - 1));
        if gx as usize > self.nx || gy as usize > self.ny {
            return None;
        }
        let x0 = self.origin[0] + tx as f64 * self.size_m;
        let y0 = self.origin[1] + ty as f64 * self.size_m;
        Some(([x0, y0, x0 + self.size_m, y0 + self.size_m], self.max[ty * self.nx + tx]))
    }

    /// Ray parameter at which the ray leaves the tile or, when descending,
    /// reaches `zmax`, whichever comes first.
    #[inline]
    fn skip(bounds: &[f64; 4], zmax: f64, p: &Vector3<f64>, d: &Vector3<f64>) -> f64 {
        let mut dt = f64::INFINITY;
        if d.x > 0.0 {
            dt = dt.min((bounds[2] - p.x) / d.x);
        } else if d.x < 0.0 {
            dt = dt.min((bounds[0] - p.x) / d.x);
        }
        if d.y > 0.0 {
            dt = dt.min((bounds[3] - p.y) / d.y);
        } else if d.y < 0.0 {
            dt = dt.min((bounds[1] - p.y) / d.y);
        }
        if d.z < 0.0 {
            dt = dt.min((zmax - p.z) / d.z);
        }
        dt.max(0.0)
    }
}

/// Surface point found by ray casting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub point: Vector3<f64>,
    pub t: f64,
    pub normal: Vector3<f64>,
    pub rock: Option<u32>,
}

impl TerrainScene {
    /// Place `rocks` on `heightmap` (each rock's base sits at the terrain
    /// height under its center).
    pub fn new(
        heightmap: Heightmap,
        rocks: Vec<Rock>,
        sun_dir: Vector3<f64>,
        albedo: f64,
        texture: TextureSpec,
        texture_seed: u64,
    ) -> Result<Self, SceneError> {
        if !(albedo > 0.0 && albedo <= 1.0) {
            return Err(SceneError::InvalidSpec(format!("albedo must be in (0, 1], got {albedo}")));
        }
        let norm = sun_dir.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(SceneError::InvalidSpec("sun direction must be non-zero".into()));
        }
        let (xmin, ymin, xmax, ymax) = heightmap.bounds();
        let rocks: Vec<Rock> = rocks
            .into_iter()
            .filter(|r| r.center[0] >= xmin && r.center[0] <= xmax && r.center[1] >= ymin && r.center[1] <= ymax)
            .collect();
        let base_z = rocks
            .iter()
            .map(|r| heightmap.elevation(r.center[0], r.center[1]).unwrap_or(0.0))
            .collect();
        let rocks = RockField::new(rocks, base_z);
        let (lo, hi) = heightmap.min_max();
        let rock_top = rocks
            .rocks
            .iter()
            .zip(&rocks.base_z)
            .map(|(r, z)| z + r.height_m)
            .fold(f64::NEG_INFINITY, f64::max);
        let smallest_rock = rocks.rocks.iter().map(|r| r.diameter_m * r.aspect).fold(f64::INFINITY, f64::min);
        let step = 0.5 * heightmap.resolution_mpp().min(smallest_rock).max(0.1);
        let tiles = TileMax::new(&heightmap, &rocks);
        Ok(Self {
            heightmap,
            rocks,
            sun_dir: sun_dir / norm,
            albedo,
            texture,
            texture_seed,
            z_min: lo,
            z_max: hi.max(rock_top),
            step,
            tiles,
        })
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.z_min, self.z_max)
    }

    /// Surface height (terrain or rock) at `(x, y)`.
    #[inline]
    pub fn height(&self, x: f64, y: f64) -> Option<f64> {
        let ground = self.heightmap.elevation(x, y)?;
        Some(match self.rocks.top(x, y) {
            Some((z, ..)) => ground.max(z),
            None => ground,
        })
    }

    /// Height, gradient and the rock (if any) forming the surface.
    pub fn surface(&self, x: f64, y: f64) -> Option<(f64, f64, f64, Option<u32>)> {
        let ground = self.heightmap.elevation(x, y)?;
        if let Some((z, gx, gy, i)) = self.rocks.top(x, y) {
            if z > ground {
                return Some((z, gx, gy, Some(i)));
            }
        }
        let (gx, gy) = self.heightmap.gradient(x, y)?;
        Some((ground, gx, gy, None))
    }

    /// Upward unit normal of the surface.
    pub fn normal(&self, x: f64, y: f64) -> Option<Vector3<f64>> {
        let (_, gx, gy, _) = self.surface(x, y)?;
        Some(Vector3::new(-gx, -gy, 1.0).normalize())
    }

    /// Albedo multiplier at `(x, y)`, in `[1 - amplitude, 1 + amplitude]`.
    pub fn texture_at(&self, x: f64, y: f64) -> f64 {
        let layers = &self.texture.cell_sizes_m;
        if layers.is_empty() || self.texture.amplitude == 0.0 {
            return 1.0;
        }
        let mut acc = 0.0;
        for (l, &cell) in layers.iter().enumerate() {
            let gx = x / cell;
            let gy = y / cell;
            let (ix, iy) = (gx.floor(), gy.floor());
            let (fx, fy) = (smooth(gx - ix), smooth(gy - iy));
            let (ix, iy) = (ix as i64, iy as i64);
            let h = |dx: i64, dy: i64| lattice_hash(self.texture_seed, l as u64, ix + dx, iy + dy);
            let top = h(0, 0) * (1.0 - fx) + h(1, 0) * fx;
            let bottom = h(0, 1) * (1.0 - fx) + h(1, 1) * fx;
            acc += 2.0 * (top * (1.0 - fy) + bottom * fy) - 1.0;
        }
        1.0 + self.texture.amplitude * acc / layers.len() as f64
    }

    /// First intersection of `ray` with the surface, by fixed-step marching
    /// from the top of the relief and Illinois regula falsi refinement.
    pub fn raycast(&self, ray: &Ray) -> Option<Hit> {
        let (o, d) = (ray.origin, ray.direction);
        let top = self.z_max + 1e-3;
        let mut t = 0.0;
        if o.z > top {
            if d.z >= 0.0 {
                return None;
            }
            t = (top - o.z) / d.z;
        }
        let t_end = if d.z < 0.0 { (self.z_min - 1e-3 - o.z) / d.z } else { f64::INFINITY };
        let f = |t: f64| {
            let p = ray.at(t);
            self.height(p.x, p.y).map(|h| p.z - h)
        };
        let mut f_prev = f(t)?;
        if f_prev < 0.0 {
            return None;
        }
        let step = self.step / d.norm();
        loop {
            if t > t_end {
                return None;
            }
            let p = ray.at(t);
            let (bounds, tile_top) = self.tiles.lookup(p.x, p.y)?;
            if p.z > tile_top + 1e-9 {
                let t_skip = t + TileMax::skip(&bounds, tile_top + 1e-9, &p, &d) + 1e-9;
                if t_skip > t + step {
                    t = t_skip;
                    f_prev = f(t)?;
                    continue;
                }
            }
            let t_next = t + step;
            let f_next = f(t_next)?;
            if f_next <= 0.0 {
                let t_hit = self.refine(&f, t, f_prev, t_next, f_next)?;
                let p = ray.at(t_hit);
                let (_, gx, gy, rock) = self.surface(p.x, p.y)?;
                return Some(Hit {
                    point: p,
                    t: t_hit,
                    normal: Vector3::new(-gx, -gy, 1.0).normalize(),
                    rock,
                });
            }
            t = t_next;
            f_prev = f_next;
        }
    }

    fn refine(&self, f: &impl Fn(f64) -> Option<f64>, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Option<f64> {
        if fb == 0.0 {
            return Some(b);
        }
        for _ in 0..100 {
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = f(c)?;
            if fc.abs() < 1e-12 || (b - a).abs() < 1e-12 {
                return Some(c);
            }
            if fc * fb < 0.0 {
                a = b;
                fa = fb;
            } else {
                fa *= 0.5;
            }
            b = c;
            fb = fc;
        }
        Some(if fa.abs() < fb.abs() { a } else { b })
    }

    /// True when the segment from `p` toward the sun passes below the surface.
    pub fn occluded(&self, p: &Vector3<f64>) -> bool {
        let s = self.sun_dir;
        if s.z <= 0.0 {
            return true;
        }
        let mut t = self.step;
        loop {
            let q = p + s * t;
            if q.z > self.z_max {
                return false;
            }
            let Some((bounds, tile_top)) = self.tiles.lookup(q.x, q.y) else {
                return false;
            };
            if q.z > tile_top + 1e-9 {
                t += TileMax::skip(&bounds, f64::NEG_INFINITY, &q, &s) + 1e-9;
                continue;
            }
            match self.height(q.x, q.y) {
                None => return false,
                Some(h) if h > q.z + 1e-9 => return true,
                _ => {}
            }
            t += self.step;
        }
    }
}

/// Unit vector toward a sun at the given azimuth (from +x toward +y) and
/// elevation above the horizon.
pub fn sun_direction(azimuth_deg: f64, elevation_deg: f64) -> Vector3<f64> {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(rocks: Vec<Rock>, sun: Vector3<f64>) -> TerrainScene {
        TerrainScene::new(
            Heightmap::from_fn(201, 0.5, |_, _| 0.0),
            rocks,
            sun,
            1.0,
            TextureSpec::none(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn raycast_flat_plane_exact() {
        let s = flat(vec![], Vector3::z());
        for &(dx, dy) in &[(0.0, 0.0), (0.3, -0.2), (-0.7, 0.1)] {
            let ray = Ray {
                origin: Vector3::new(1.0, 2.0, 30.0),
                direction: Vector3::new(dx, dy, -1.0).normalize(),
            };
            let hit = s.raycast(&ray).unwrap();
            assert!(hit.point.z.abs() < 1e-9);
            assert!((hit.point.x - (1.0 + 30.0 * dx)).abs() < 1e-9);
            assert!((hit.normal - Vector3::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn raycast_misses_off_grid_and_upward() {
        let s = flat(vec![], Vector3::z());
        let up = Ray {
            origin: Vector3::new(0.0, 0.0, 10.0),
            direction: Vector3::z(),
        };
        assert!(s.raycast(&up).is_none());
        let away = Ray {
            origin: Vector3::new(0.0, 0.0, 10.0),
            direction: Vector3::new(1.0, 0.0, -0.01).normalize(),
        };
        assert!(s.raycast(&away).is_none());
    }

    #[test]
    fn raycast_hits_rock_top() {
        let rock = Rock {
            center: [0.0, 0.0],
            diameter_m: 2.0,
            height_m: 1.0,
            orientation: 0.0,
            aspect: 1.0,
        };
        let s = flat(vec![rock], Vector3::z());
        let ray = Ray {
            origin: Vector3::new(0.0, 0.0, 20.0),
            direction: -Vector3::z(),
        };
        let hit = s.raycast(&ray).unwrap();
        assert!((hit.point.z - 1.0).abs() < 1e-9);
        assert_eq!(hit.rock, Some(0));
    }

    #[test]
    fn rock_casts_shadow_of_expected_length() {
        let rock = Rock {
            center: [0.0, 0.0],
            diameter_m: 2.0,
            height_m: 1.0,
            orientation: 0.0,
            aspect: 1.0,
        };
        // sun low in +x: shadow falls toward -x
        let s = flat(vec![rock], sun_direction(0.0, 30.0));
        // hemisphere of radius 1: the tangent sun ray touches the ground at
        // distance 1 / sin(30 deg) = 2 m from the center
        let edge = -1.0 / 30f64.to_radians().sin();
        assert!(s.occluded(&Vector3::new(edge + 0.05, 0.0, 0.0)));
        assert!(!s.occluded(&Vector3::new(edge - 0.05, 0.0, 0.0)));
        assert!(!s.occluded(&Vector3::new(1.2, 0.0, 0.0)));
    }

    #[test]
    fn texture_bounded_and_deterministic() {
        let mut s = flat(vec![], Vector3::z());
        s.texture = TextureSpec::default();
        s.texture_seed = 7;
        let a = TextureSpec::default().amplitude;
        for i in 0..500 {
            let (x, y) = (i as f64 * 0.173 - 40.0, i as f64 * -0.091 + 3.0);
            let t = s.texture_at(x, y);
            assert!(t >= 1.0 - a && t <= 1.0 + a);
            assert_eq!(t, s.texture_at(x, y));
        }
    }

    #[test]
    fn invalid_scene_rejected() {
        let h = Heightmap::from_fn(3, 1.0, |_, _| 0.0);
        assert!(TerrainScene::new(h.clone(), vec![], Vector3::z(), 0.0, TextureSpec::none(), 0).is_err());
        assert!(TerrainScene::new(h, vec![], Vector3::zeros(), 0.5, TextureSpec::none(), 0).is_err());
    }
}
