//! Obstacle scenes and the procedural cuboid-clutter generator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", bound = "T: Real")]
pub enum Obstacle<T> {
    /// Axis-aligned box.
    Cuboid { center: Vec3<T>, half_extents: Vec3<T> },
    Sphere { center: Vec3<T>, radius: T },
}

impl<T: Real> Obstacle<T> {
    pub fn cuboid(center: [f64; 3], half_extents: [f64; 3]) -> Self {
        Obstacle::Cuboid { center: Vec3(center.map(T::lit)), half_extents: Vec3(half_extents.map(T::lit)) }
    }

    pub fn sphere(center: [f64; 3], radius: f64) -> Self {
        Obstacle::Sphere { center: Vec3(center.map(T::lit)), radius: T::lit(radius) }
    }

    pub fn aabb(&self) -> (Vec3<T>, Vec3<T>) {
        match self {
            Obstacle::Cuboid { center, half_extents } => (*center - *half_extents, *center + *half_extents),
            Obstacle::Sphere { center, radius } => {
                let r = Vec3([*radius; 3]);
                (*center - r, *center + r)
            }
        }
    }

    /// Signed distance from a point to the surface (negative inside).
    pub fn signed_distance(&self, p: &Vec3<T>) -> T {
        match self {
            Obstacle::Cuboid { center, half_extents } => {
                super::distance::point_box_signed_distance(p, center, half_extents)
            }
            Obstacle::Sphere { center, radius } => (*p - *center).norm() - *radius,
        }
    }

    pub fn surface_area(&self) -> T {
        match self {
            Obstacle::Cuboid { half_extents: h, .. } => {
                T::lit(8.0) * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2])
            }
            Obstacle::Sphere { radius, .. } => T::lit(4.0) * T::PI() * *radius * *radius,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: &Vec3<T>| v.0.iter().all(|x| x.is_finite());
        let ok = match self {
            Obstacle::Cuboid { center, half_extents } => {
                finite(center) && finite(half_extents) && half_extents.0.iter().all(|h| *h > T::zero())
            }
            Obstacle::Sphere { center, radius } => finite(center) && radius.is_finite() && *radius > T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScene(format!("{self:?}")))
        }
    }
}

/// A static obstacle set; serialized as a JSON list of primitives.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Real")]
pub struct Scene<T> {
    pub obstacles: Vec<Obstacle<T>>,
}

impl<T: Real> Scene<T> {
    pub fn empty() -> Self {
        Self { obstacles: Vec::new() }
    }

    pub fn new(obstacles: Vec<Obstacle<T>>) -> Result<Self> {
        let scene = Self { obstacles };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        self.obstacles.iter().try_for_each(Obstacle::validate)
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scene: Self = serde_json::from_str(s)?;
        scene.validate()?;
        Ok(scene)
    }
}

/// Parameters of the tabletop-style cuboid clutter generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub min_cuboids: usize,
    pub max_cuboids: usize,
    pub min_half_extent: f64,
    pub max_half_extent: f64,
    /// Horizontal distance band of cuboid centres from the base.
    pub min_radius: f64,
    pub max_radius: f64,
    pub min_height: f64,
    pub max_height: f64,
    /// Obstacles never intrude into this ball around the base.
    pub base_clearance: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            min_cuboids: 1,
            max_cuboids: 8,
            min_half_extent: 0.03,
            max_half_extent: 0.12,
            min_radius: 0.4,
            max_radius: 0.9,
            min_height: 0.0,
            max_height: 0.9,
            base_clearance: 0.3,
        }
    }
}

impl SceneConfig {
    /// A config that always yields the empty scene.
    pub fn empty() -> Self {
        Self { min_cuboids: 0, max_cuboids: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScene(m.to_string()));
        if self.min_cuboids > self.max_cuboids {
            return bad("min_cuboids > max_cuboids");
        }
        if !(self.min_half_extent > 0.0 && self.min_half_extent <= self.max_half_extent) {
            return bad("half-extent bounds");
        }
        if !(self.min_radius >= 0.0 && self.min_radius <= self.max_radius) {
            return bad("radius bounds");
        }
        if self.min_height > self.max_height {
            return bad("height bounds");
        }
        Ok(())
    }
}

pub fn generate_scene<T: Real, R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<Scene<T>> {
    cfg.validate()?;
    let count = rng.random_range(cfg.min_cuboids..=cfg.max_cuboids);
    let mut obstacles = Vec::with_capacity(count);
    while obstacles.len() < count {
        let half = [0; 3].map(|_| rng.random_range(cfg.min_half_extent..=cfg.max_half_extent));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = rng.random_range(cfg.min_radius..=cfg.max_radius);
        let height = rng.random_range(cfg.min_height..=cfg.max_height);
        let center = [radius * angle.cos(), radius * angle.sin(), height];
        let d = super::distance::point_box_signed_distance(
            &Vec3::<f64>::zeros(),
            &Vec3(center),
            &Vec3(half),
        );
        if d > cfg.base_clearance {
            obstacles.push(Obstacle::cuboid(center, half));
        }
    }
    Scene::new(obstacles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_is_a_list_of_primitives() {
        let s: Scene<f64> =
            Scene::new(vec![Obstacle::cuboid([1.0, 0.0, 0.5], [0.1, 0.2, 0.3]), Obstacle::sphere([0.0, 1.0, 0.0], 0.2)])
                .unwrap();
        let json = s.to_json().unwrap();
        assert!(json.starts_with("[{\"type\":\"cuboid\""));
        assert_eq!(Scene::from_json(&json).unwrap(), s);
    }

    #[test]
    fn rejects_degenerate_primitives() {
        assert!(Scene::<f64>::new(vec![Obstacle::cuboid([0.0; 3], [0.1, 0.0, 0.1])]).is_err());
        assert!(Scene::<f64>::new(vec![Obstacle::sphere([f64::NAN, 0.0, 0.0], 0.1)]).is_err());
        assert!(Scene::<f64>::from_json("[{\"type\":\"sphere\",\"center\":[0,0,0],\"radius\":-1}]").is_err());
    }

    #[test]
    fn generator_respects_config() {
        let cfg = SceneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let s: Scene<f64> = generate_scene(&cfg, &mut rng).unwrap();
            assert!((1..=8).contains(&s.obstacles.len()));
            for o in &s.obstacles {
                assert!(o.signed_distance(&Vec3::zeros()) > cfg.base_clearance);
            }
        }
        let s: Scene<f64> = generate_scene(&SceneConfig::empty(), &mut rng).unwrap();
        assert!(s.is_empty());
    }
}
