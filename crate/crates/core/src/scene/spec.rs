//! JSON scene description.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{
    generate_heightmap, scatter_rocks, sun_direction, Octave, Ramp, Rock, RockDistributionParams, SceneError,
    TerrainScene, TextureSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SunSpec {
    Vector([f64; 3]),
    Angles { azimuth_deg: f64, elevation_deg: f64 },
}

impl SunSpec {
    pub fn direction(&self) -> Vector3<f64> {
        match self {
            SunSpec::Vector(v) => Vector3::new(v[0], v[1], v[2]),
            SunSpec::Angles {
                azimuth_deg,
                elevation_deg,
            } => sun_direction(*azimuth_deg, *elevation_deg),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub seed: u64,
    /// Heightmap nodes per side.
    #[serde(default = "default_size_px")]
    pub size_px: usize,
    #[serde(default = "default_resolution")]
    pub resolution_mpp: f64,
    #[serde(default)]
    pub octaves: Vec<Octave>,
    #[serde(default)]
    pub ramps: Vec<Ramp>,
    #[serde(default)]
    pub rocks: Option<RockDistributionParams>,
    /// Hand-placed rocks added to the scattered population.
    #[serde(default)]
    pub placed_rocks: Vec<Rock>,
    pub sun: SunSpec,
    #[serde(default = "default_albedo")]
    pub albedo: f64,
    #[serde(default)]
    pub texture: TextureSpec,
}

fn default_size_px() -> usize {
    2049
}

fn default_resolution() -> f64 {
    0.5
}

fn default_albedo() -> f64 {
    0.8
}

impl SceneSpec {
    /// Featureless flat plain: no relief, rocks or texture.
    pub fn flat(seed: u64) -> Self {
        Self {
            seed,
            size_px: default_size_px(),
            resolution_mpp: default_resolution(),
            octaves: Vec::new(),
            ramps: Vec::new(),
            rocks: None,
            placed_rocks: Vec::new(),
            sun: SunSpec::Angles {
                azimuth_deg: 90.0,
                elevation_deg: 30.0,
            },
            albedo: default_albedo(),
            texture: TextureSpec::none(),
        }
    }

    /// 1024 m x 1024 m rolling mare with a sparse rock population around the
    /// origin and a 30 degree sun.
    pub fn lunar_default(seed: u64) -> Self {
        Self {
            octaves: vec![
                Octave {
                    wavelength_m: 250.0,
                    amplitude_m: 4.0,
                },
                Octave {
                    wavelength_m: 80.0,
                    amplitude_m: 2.5,
                },
                Octave {
                    wavelength_m: 15.0,
                    amplitude_m: 0.15,
                },
            ],
            rocks: Some(RockDistributionParams::from_areal_density(
                4e-3,
                super::MARE_EXPONENT,
                0.3,
                3.0,
                200.0,
            )),
            texture: TextureSpec::default(),
            ..Self::flat(seed)
        }
    }

    pub fn extent_m(&self) -> f64 {
        (self.size_px as f64 - 1.0) * self.resolution_mpp
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.size_px < 2 {
            return Err(SceneError::InvalidSpec("size_px must be at least 2".into()));
        }
        if !(self.resolution_mpp > 0.0) {
            return Err(SceneError::InvalidSpec("resolution_mpp must be positive".into()));
        }
        if self.octaves.iter().any(|o| !(o.wavelength_m > 0.0) || !o.amplitude_m.is_finite()) {
            return Err(SceneError::InvalidSpec("octave wavelengths must be positive".into()));
        }
        if self.ramps.iter().any(|r| !(r.size_m > 0.0) || !(r.slope_deg.abs() < 90.0)) {
            return Err(SceneError::InvalidSpec("ramp size must be positive and slope below 90".into()));
        }
        if let Some(r) = &self.rocks {
            r.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| SceneError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    /// Build the scene. Relief, rocks and texture draw from independent
    /// streams derived from `seed`.
    pub fn build(&self) -> Result<TerrainScene, SceneError> {
        self.validate()?;
        let mut hm = generate_heightmap(self.seed, self.size_px, self.resolution_mpp, &self.octaves);
        hm.apply_ramps(&self.ramps);
        let mut rocks = match &self.rocks {
            Some(p) => scatter_rocks(p, self.seed.wrapping_add(0x5EED_0001))?,
            None => Vec::new(),
        };
        rocks.extend(self.placed_rocks.iter().copied());
        TerrainScene::new(
            hm,
            rocks,
            self.sun.direction(),
            self.albedo,
            self.texture.clone(),
            self.seed.wrapping_add(0x5EED_0002),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let s = SceneSpec::lunar_default(3);
        assert_eq!(SceneSpec::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let s = SceneSpec::from_json(r#"{"seed": 4, "sun": [0, 0, 1]}"#).unwrap();
        assert_eq!(s.size_px, 2049);
        assert_eq!(s.extent_m(), 1024.0);
        assert_eq!(s.sun.direction(), Vector3::z());
    }

    #[test]
    fn schema_error_reports_path() {
        let err = SceneSpec::from_json(r#"{"seed": 4, "sun": [0,0,1], "octaves": [{"wavelength_m": "x", "amplitude_m": 1}]}"#)
            .unwrap_err();
        match err {
            SceneError::Schema { path, .. } => assert_eq!(path, "octaves[0].wavelength_m"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(SceneSpec::from_json(r#"{"seed": 4, "sun": [0,0,1], "bogus": 1}"#).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let mut s = SceneSpec::lunar_default(9);
        s.size_px = 201;
        s.rocks.as_mut().unwrap().area_radius_m = 40.0;
        let a = s.build().unwrap();
        assert_eq!(a, s.build().unwrap());
        assert!(!a.rocks.is_empty());
    }
}
