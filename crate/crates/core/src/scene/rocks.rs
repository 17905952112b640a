//! Power-law rock populations and a spatial index over them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SceneError;

/// Cumulative size-frequency law `N(D) = k D^r`: the number of rocks with
/// diameter at least `D` inside the disc of radius `area_radius_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RockDistributionParams {
    pub k: f64,
    pub r: f64,
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub area_radius_m: f64,
    /// Disc center in world x/y.
    pub center_m: [f64; 2],
    /// Rock height as a fraction of diameter (0.5 gives a hemisphere).
    pub height_ratio: f64,
}

/// Areal cumulative density of the Surveyor-era mare fit,
/// `N(D) = 7.9e3 D^-2.11` per square kilometre with `D` in metres.
pub const MARE_AREAL_K_PER_M2: f64 = 7.9e-3;
pub const MARE_EXPONENT: f64 = -2.11;

impl Default for RockDistributionParams {
    fn default() -> Self {
        Self::from_areal_density(MARE_AREAL_K_PER_M2, MARE_EXPONENT, 0.3, 3.0, 100.0)
    }
}

impl RockDistributionParams {
    /// Build from an areal density (rocks per square metre at `D = 1 m`),
    /// scaling `k` by the disc area.
    pub fn from_areal_density(k_per_m2: f64, r: f64, d_min_m: f64, d_max_m: f64, area_radius_m: f64) -> Self {
        Self {
            k: k_per_m2 * std::f64::consts::PI * area_radius_m * area_radius_m,
            r,
            d_min_m,
            d_max_m,
            area_radius_m,
            center_m: [0.0, 0.0],
            height_ratio: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let ok = self.k > 0.0
            && self.d_min_m > 0.0
            && self.d_min_m < self.d_max_m
            && self.area_radius_m > 0.0
            && self.height_ratio > 0.0
            && self.r.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SceneError::InvalidSpec(format!("invalid rock distribution {self:?}")))
        }
    }

    /// Expected number of rocks with diameter in `[d_min, d_max)`.
    pub fn expected_count(&self) -> f64 {
        rock_count(self, self.d_min_m) - rock_count(self, self.d_max_m)
    }
}

/// Cumulative count `k D^r`.
pub fn rock_count(params: &RockDistributionParams, d: f64) -> f64 {
    params.k * d.powf(params.r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rock {
    pub center: [f64; 2],
    /// Longest base axis.
    pub diameter_m: f64,
    pub height_m: f64,
    /// Heading of the long axis, radians.
    pub orientation: f64,
    /// Short-to-long base axis ratio.
    pub aspect: f64,
}

impl Rock {
    /// Height above the base plane at `(x, y)` and its gradient, or `None`
    /// outside the base ellipse. The rock is the upper half of an ellipsoid.
    #[inline]
    pub fn profile(&self, x: f64, y: f64) -> Option<(f64, f64, f64)> {
        let (s, c) = self.orientation.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let a = 0.5 * self.diameter_m;
        let b = a * self.aspect;
        let q = (u / a).powi(2) + (v / b).powi(2);
        if q >= 1.0 {
            return None;
        }
        let root = (1.0 - q).sqrt();
        let z = self.height_m * root;
        let k = -self.height_m / root.max(1e-6);
        let du = k * u / (a * a);
        let dv = k * v / (b * b);
        Some((z, c * du - s * dv, s * du + c * dv))
    }

    pub fn base_contains(&self, x: f64, y: f64) -> bool {
        self.profile(x, y).is_some()
    }
}

/// Rocks with a uniform-grid spatial index.
#[derive(Clone, Debug, PartialEq)]
pub struct RockField {
    pub rocks: Vec<Rock>,
    /// Terrain elevation under each rock center.
    pub base_z: Vec<f64>,
    cell_m: f64,
    origin: [f64; 2],
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl RockField {
    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new())
    }

    pub fn new(rocks: Vec<Rock>, base_z: Vec<f64>) -> Self {
        assert_eq!(rocks.len(), base_z.len());
        let dmax = rocks.iter().map(|r| r.diameter_m).fold(0.0, f64::max);
        let cell_m = dmax.max(2.0);
        let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        if let Some(first) = rocks.first() {
            (x0, y0, x1, y1) = (first.center[0], first.center[1], first.center[0], first.center[1]);
        }
        for r in &rocks {
            x0 = x0.min(r.center[0]);
            y0 = y0.min(r.center[1]);
            x1 = x1.max(r.center[0]);
            y1 = y1.max(r.center[1]);
        }
        let origin = [x0 - cell_m, y0 - cell_m];
        let nx = ((x1 - origin[0]) / cell_m) as usize + 2;
        let ny = ((y1 - origin[1]) / cell_m) as usize + 2;
        let mut cells = vec![Vec::new(); nx * ny];
        for (i, r) in rocks.iter().enumerate() {
            let h = 0.5 * r.diameter_m;
            let cx0 = ((r.center[0] - h - origin[0]) / cell_m).floor().max(0.0) as usize;
            let cx1 = (((r.center[0] + h - origin[0]) / cell_m).floor() as usize).min(nx - 1);
            let cy0 = ((r.center[1] - h - origin[1]) / cell_m).floor().max(0.0) as usize;
            let cy1 = (((r.center[1] + h - origin[1]) / cell_m).floor() as usize).min(ny - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    cells[cy * nx + cx].push(i as u32);
                }
            }
        }
        Self {
            rocks,
            base_z,
            cell_m,
            origin,
            nx,
            ny,
            cells,
        }
    }

    pub fn len(&self) -> usize {
        self.rocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rocks.is_empty()
    }

    pub fn max_height(&self) -> f64 {
        self.rocks.iter().map(|r| r.height_m).fold(0.0, f64::max)
    }

    /// Indices of rocks whose bounding circle may cover `(x, y)`.
    #[inline]
    pub fn candidates(&self, x: f64, y: f64) -> &[u32] {
        let gx = (x - self.origin[0]) / self.cell_m;
        let gy = (y - self.origin[1]) / self.cell_m;
        if !(gx >= 0.0 && gy >= 0.0) {
            return &[];
        }
        let (cx, cy) = (gx as usize, gy as usize);
        if cx >= self.nx || cy >= self.ny {
            return &[];
        }
        &self.cells[cy * self.nx + cx]
    }

    /// Highest rock surface over `(x, y)`: `(z, dz/dx, dz/dy, rock index)`.
    #[inline]
    pub fn top(&self, x: f64, y: f64) -> Option<(f64, f64, f64, u32)> {
        let mut best: Option<(f64, f64, f64, u32)> = None;
        for &i in self.candidates(x, y) {
            if let Some((dz, gx, gy)) = self.rocks[i as usize].profile(x, y) {
                let z = self.base_z[i as usize] + dz;
                if best.is_none_or(|b| z > b.0) {
                    best = Some((z, gx, gy, i));
                }
            }
        }
        best
    }
}

/// Draw a rock population: `round(N(d_min) - N(d_max))` rocks, diameters by
/// inverse-CDF sampling of the truncated power law, centers uniform in the disc.
pub fn scatter_rocks(params: &RockDistributionParams, seed: u64) -> Result<Vec<Rock>, SceneError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_lo = rock_count(params, params.d_min_m);
    let n_hi = rock_count(params, params.d_max_m);
    let count = (n_lo - n_hi).round().max(0.0) as usize;
    let mut rocks = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let n = n_lo - u * (n_lo - n_hi);
        let d = if params.r == 0.0 {
            params.d_min_m
        } else {
            (n / params.k).powf(1.0 / params.r)
        }
        .clamp(params.d_min_m, params.d_max_m);
        let rho = params.area_radius_m * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let orientation = rng.random_range(0.0..std::f64::consts::PI);
        let aspect = rng.random_range(0.7..=1.0);
        rocks.push(Rock {
            center: [params.center_m[0] + rho * theta.cos(), params.center_m[1] + rho * theta.sin()],
            diameter_m: d,
            height_m: params.height_ratio * d,
            orientation,
            aspect,
        });
    }
    Ok(rocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: f64, r: f64, dmin: f64, dmax: f64) -> RockDistributionParams {
        RockDistributionParams {
            k,
            r,
            d_min_m: dmin,
            d_max_m: dmax,
            area_radius_m: 50.0,
            center_m: [0.0, 0.0],
            height_ratio: 0.5,
        }
    }

    #[test]
    fn count_examples() {
        assert_eq!(rock_count(&params(1.0, 0.0, 0.1, 1.0), 3.7), 1.0);
        assert!((rock_count(&params(2.0, -1.0, 0.1, 1.0), 0.5) - 4.0).abs() < 1e-15);
        let p = params(5.0, -2.5, 0.1, 1.0);
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let n = rock_count(&p, i as f64 * 0.05);
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn degenerate_bin_gives_fixed_diameter() {
        let p = params(400.0, -2.0, 1.0 - 1e-3, 1.0);
        let rocks = scatter_rocks(&p, 9).unwrap();
        let expect = (rock_count(&p, p.d_min_m) - rock_count(&p, p.d_max_m)).round() as usize;
        assert_eq!(rocks.len(), expect);
        assert!(rocks.iter().all(|r| (r.diameter_m - 1.0).abs() <= 1e-3));
    }

    #[test]
    fn scatter_deterministic_and_in_disc() {
        let p = RockDistributionParams {
            center_m: [10.0, -4.0],
            ..params(50.0, -2.0, 0.3, 2.0)
        };
        let a = scatter_rocks(&p, 1).unwrap();
        assert_eq!(a, scatter_rocks(&p, 1).unwrap());
        assert_ne!(a, scatter_rocks(&p, 2).unwrap());
        for r in &a {
            assert!((r.center[0] - 10.0).hypot(r.center[1] + 4.0) <= 50.0);
            assert!(r.diameter_m >= 0.3 && r.diameter_m <= 2.0);
            assert_eq!(r.height_m, 0.5 * r.diameter_m);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(scatter_rocks(&params(1.0, -2.0, 2.0, 1.0), 0).is_err());
        assert!(scatter_rocks(&params(-1.0, -2.0, 0.5, 1.0), 0).is_err());
    }

    #[test]
    fn hemisphere_profile() {
        let rock = Rock {
            center: [1.0, 2.0],
            diameter_m: 2.0,
            height_m: 1.0,
            orientation: 0.3,
            aspect: 1.0,
        };
        let (z, gx, gy) = rock.profile(1.0, 2.0).unwrap();
        assert!((z - 1.0).abs() < 1e-12 && gx.abs() < 1e-12 && gy.abs() < 1e-12);
        let (z, _, _) = rock.profile(1.6, 2.0).unwrap();
        assert!((z - 0.8).abs() < 1e-12);
        assert!(rock.profile(2.01, 2.0).is_none());
        // numerical gradient
        let (_, gx, gy) = rock.profile(1.3, 2.4).unwrap();
        let h = 1e-6;
        let nx = (rock.profile(1.3 + h, 2.4).unwrap().0 - rock.profile(1.3 - h, 2.4).unwrap().0) / (2.0 * h);
        let ny = (rock.profile(1.3, 2.4 + h).unwrap().0 - rock.profile(1.3, 2.4 - h).unwrap().0) / (2.0 * h);
        assert!((gx - nx).abs() < 1e-6 && (gy - ny).abs() < 1e-6);
    }

    #[test]
    fn spatial_index_finds_every_rock() {
        let p = params(200.0, -2.0, 0.5, 3.0);
        let rocks = scatter_rocks(&p, 4).unwrap();
        let n = rocks.len();
        let field = RockField::new(rocks.clone(), vec![0.0; n]);
        for (i, r) in rocks.iter().enumerate() {
            assert!(field.candidates(r.center[0], r.center[1]).contains(&(i as u32)));
            let rim = r.center[0] + 0.49 * r.diameter_m * r.orientation.cos();
            let rim_y = r.center[1] + 0.49 * r.diameter_m * r.orientation.sin();
            assert!(field.candidates(rim, rim_y).contains(&(i as u32)));
        }
        assert!(RockField::empty().top(0.0, 0.0).is_none());
    }
}
