//! Gridded elevation with bilinear interpolation and procedural generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par;

/// One band of terrain relief.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Octave {
    pub wavelength_m: f64,
    pub amplitude_m: f64,
}

/// Square planar patch tilted to `slope_deg`, rising toward `azimuth_deg`
/// (measured from +x toward +y). Elevation is zero along the patch center line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub center_m: [f64; 2],
    pub size_m: f64,
    pub slope_deg: f64,
    #[serde(default)]
    pub azimuth_deg: f64,
}

impl Ramp {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let h = 0.5 * self.size_m;
        (x - self.center_m[0]).abs() <= h && (y - self.center_m[1]).abs() <= h
    }

    /// Height offset of the tilted patch at `(x, y)`.
    pub fn offset(&self, x: f64, y: f64) -> f64 {
        let az = self.azimuth_deg.to_radians();
        let d = (x - self.center_m[0]) * az.cos() + (y - self.center_m[1]) * az.sin();
        d * self.slope_deg.to_radians().tan()
    }
}

/// Row-major grid of elevations. Node `(row, col)` sits at world
/// `(origin.x + col * res, origin.y + row * res)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heightmap {
    rows: usize,
    cols: usize,
    resolution_mpp: f64,
    origin: [f64; 2],
    grid: Vec<f64>,
}

impl Heightmap {
    pub fn new(rows: usize, cols: usize, resolution_mpp: f64, origin: [f64; 2], grid: Vec<f64>) -> Self {
        assert!(rows >= 2 && cols >= 2, "heightmap must be at least 2x2");
        assert!(resolution_mpp > 0.0, "resolution must be positive");
        assert_eq!(grid.len(), rows * cols);
        assert!(grid.iter().all(|z| z.is_finite()), "non-finite elevation");
        Self {
            rows,
            cols,
            resolution_mpp,
            origin,
            grid,
        }
    }

    /// Square grid of `size_px` nodes per side centered on the world origin.
    pub fn from_fn(size_px: usize, resolution_mpp: f64, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        let half = 0.5 * (size_px as f64 - 1.0) * resolution_mpp;
        let origin = [-half, -half];
        let rows = par::map_range(size_px, |r| {
            let y = origin[1] + r as f64 * resolution_mpp;
            (0..size_px)
                .map(|c| f(origin[0] + c as f64 * resolution_mpp, y))
                .collect::<Vec<_>>()
        });
        Self::new(size_px, size_px, resolution_mpp, origin, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn resolution_mpp(&self) -> f64 {
        self.resolution_mpp
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn node(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.cols + col]
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.grid
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| (lo.min(z), hi.max(z)))
    }

    /// World-space `(xmin, ymin, xmax, ymax)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.origin[0],
            self.origin[1],
            self.origin[0] + (self.cols - 1) as f64 * self.resolution_mpp,
            self.origin[1] + (self.rows - 1) as f64 * self.resolution_mpp,
        )
    }

    #[inline]
    fn cell(&self, x: f64, y: f64) -> Option<(usize, usize, f64, f64)> {
        let gx = (x - self.origin[0]) / self.resolution_mpp;
        let gy = (y - self.origin[1]) / self.resolution_mpp;
        let (cmax, rmax) = ((self.cols - 1) as f64, (self.rows - 1) as f64);
        if !(gx >= 0.0 && gy >= 0.0 && gx <= cmax && gy <= rmax) {
            return None;
        }
        let c = (gx.floor() as usize).min(self.cols - 2);
        let r = (gy.floor() as usize).min(self.rows - 2);
        Some((r, c, gx - c as f64, gy - r as f64))
    }

    /// Bilinear elevation, `None` outside the grid.
    #[inline]
    pub fn elevation(&self, x: f64, y: f64) -> Option<f64> {
        let (r, c, fx, fy) = self.cell(x, y)?;
        let z00 = self.node(r, c);
        let z10 = self.node(r, c + 1);
        let z01 = self.node(r + 1, c);
        let z11 = self.node(r + 1, c + 1);
        Some((z00 * (1.0 - fx) + z10 * fx) * (1.0 - fy) + (z01 * (1.0 - fx) + z11 * fx) * fy)
    }

    /// Gradient `(dz/dx, dz/dy)` of the bilinear surface.
    pub fn gradient(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (r, c, fx, fy) = self.cell(x, y)?;
        let z00 = self.node(r, c);
        let z10 = self.node(r, c + 1);
        let z01 = self.node(r + 1, c);
        let z11 = self.node(r + 1, c + 1);
        let dx = ((z10 - z00) * (1.0 - fy) + (z11 - z01) * fy) / self.resolution_mpp;
        let dy = ((z01 - z00) * (1.0 - fx) + (z11 - z10) * fx) / self.resolution_mpp;
        Some((dx, dy))
    }

    /// Largest finite-difference slope between adjacent nodes, degrees.
    pub fn max_node_slope_deg(&self) -> f64 {
        let mut g: f64 = 0.0;
        for r in 0..self.rows - 1 {
            for c in 0..self.cols - 1 {
                let dx = (self.node(r, c + 1) - self.node(r, c)) / self.resolution_mpp;
                let dy = (self.node(r + 1, c) - self.node(r, c)) / self.resolution_mpp;
                g = g.max(dx.hypot(dy));
            }
        }
        g.atan().to_degrees()
    }

    /// Add each ramp's tilt to the nodes inside it.
    pub fn apply_ramps(&mut self, ramps: &[Ramp]) {
        for ramp in ramps {
            for r in 0..self.rows {
                let y = self.origin[1] + r as f64 * self.resolution_mpp;
                for c in 0..self.cols {
                    let x = self.origin[0] + c as f64 * self.resolution_mpp;
                    if ramp.contains(x, y) {
                        self.grid[r * self.cols + c] += ramp.offset(x, y);
                    }
                }
            }
        }
    }
}

const WAVES_PER_OCTAVE: usize = 6;

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amplitude: f64,
}

/// Sum-of-plane-waves terrain. Each octave contributes six waves with random
/// heading and phase, wavelengths in `[w, 1.5 w]` and amplitude `a / 6`, so
/// the octave's gradient never exceeds `2 pi a / w`.
pub fn generate_heightmap(seed: u64, size_px: usize, resolution_mpp: f64, octaves: &[Octave]) -> Heightmap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut waves = Vec::with_capacity(octaves.len() * WAVES_PER_OCTAVE);
    for o in octaves {
        for _ in 0..WAVES_PER_OCTAVE {
            let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let wavelength = o.wavelength_m * rng.random_range(1.0..1.5);
            let k = std::f64::consts::TAU / wavelength;
            waves.push(Wave {
                kx: k * heading.cos(),
                ky: k * heading.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amplitude: o.amplitude_m / WAVES_PER_OCTAVE as f64,
            });
        }
    }
    Heightmap::from_fn(size_px, resolution_mpp, |x, y| {
        waves
            .iter()
            .map(|w| w.amplitude * (w.kx * x + w.ky * y + w.phase).sin())
            .sum()
    })
}
