//! Analytic scene description and ray queries.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Offset along the normal for secondary rays.
pub const RAY_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Infinite horizontal plane `y = height`, facing up.
    Ground { height: f64 },
    Sphere { center: Vec3, radius: f64 },
    Cuboid { min: Vec3, max: Vec3 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Albedo {
    Solid(Vec3),
    /// 3D checkerboard with cubes of edge `scale`.
    Checker { a: Vec3, b: Vec3, scale: f64 },
    /// Two-octave lattice value noise blending `a` and `b`.
    Noise { a: Vec3, b: Vec3, scale: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub albedo: Albedo,
    pub specular: f64,
    pub roughness: f64,
    pub emissive: f64,
}

impl Material {
    pub fn diffuse(color: Vec3) -> Self {
        Self { albedo: Albedo::Solid(color), specular: 0.0, roughness: 1.0, emissive: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub material: Material,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Light {
    /// Unit vector pointing towards the light.
    pub direction: Vec3,
    pub intensity: f64,
    pub ambient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub light: Light,
    /// Axis-aligned box cameras are sampled from.
    pub camera_min: Vec3,
    pub camera_max: Vec3,
    pub background: [f32; 3],
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub normal: Vec3,
    pub primitive: usize,
}

fn intersect_shape(shape: &Shape, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<(f64, Vec3)> {
    match shape {
        Shape::Ground { height } => {
            if dir.y.abs() < 1e-12 {
                return None;
            }
            let t = (height - origin.y) / dir.y;
            (t > t_min && origin.y > *height).then(|| (t, Vec3::y()))
        }
        Shape::Sphere { center, radius } => {
            let oc = origin - center;
            let b = oc.dot(dir);
            let c = oc.norm_squared() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            [-b - sq, -b + sq].into_iter().find(|&t| t > t_min).map(|t| (t, (origin + dir * t - center) / *radius))
        }
        Shape::Cuboid { min, max } => {
            let mut t0 = f64::NEG_INFINITY;
            let mut t1 = f64::INFINITY;
            let mut axis0 = 0;
            let mut axis1 = 0;
            for a in 0..3 {
                let inv = 1.0 / dir[a];
                let (mut near, mut far) = ((min[a] - origin[a]) * inv, (max[a] - origin[a]) * inv);
                if near > far {
                    std::mem::swap(&mut near, &mut far);
                }
                if near > t0 {
                    t0 = near;
                    axis0 = a;
                }
                if far < t1 {
                    t1 = far;
                    axis1 = a;
                }
            }
            if t0 > t1 {
                return None;
            }
            let (t, axis, entering) = if t0 > t_min {
                (t0, axis0, true)
            } else if t1 > t_min {
                (t1, axis1, false)
            } else {
                return None;
            };
            let mut n = Vec3::zeros();
            // Entering faces oppose the ray, exit faces follow it.
            n[axis] = if entering { -dir[axis].signum() } else { dir[axis].signum() };
            Some((t, n))
        }
    }
}

fn signed_distance(shape: &Shape, p: &Vec3) -> f64 {
    match shape {
        Shape::Ground { height } => p.y - height,
        Shape::Sphere { center, radius } => (p - center).norm() - radius,
        Shape::Cuboid { min, max } => {
            let c = (min + max) / 2.0;
            let half = (max - min) / 2.0;
            let q = (p - c).abs() - half;
            q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if (self.light.direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Scene("light direction must be a unit vector".into()));
        }
        if (0..3).any(|a| self.camera_min[a] > self.camera_max[a]) {
            return Err(Error::Scene("camera region is inverted".into()));
        }
        for p in &self.primitives {
            match &p.shape {
                Shape::Sphere { radius, .. } if *radius <= 0.0 => {
                    return Err(Error::Scene("sphere radius must be positive".into()))
                }
                Shape::Cuboid { min, max } if (0..3).any(|a| min[a] >= max[a]) => {
                    return Err(Error::Scene("cuboid min must be below max".into()))
                }
                _ => {}
            }
            if !(0.0..=1.0).contains(&p.material.roughness) || p.material.specular < 0.0 || p.material.emissive < 0.0 {
                return Err(Error::Scene("material parameters out of range".into()));
            }
        }
        Ok(())
    }

    /// Nearest intersection with `t > t_min` along a unit direction.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some((t, normal)) = intersect_shape(&p.shape, origin, dir, t_min) {
                if best.map_or(true, |b| t < b.t) {
                    best = Some(Hit { t, normal, primitive: i });
                }
            }
        }
        best
    }

    /// Whether anything lies on the ray in `(t_min, t_max)`.
    pub fn occluded(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> bool {
        self.primitives
            .iter()
            .any(|p| intersect_shape(&p.shape, origin, dir, t_min).is_some_and(|(t, _)| t < t_max))
    }

    /// Distance to the nearest surface, negative inside a primitive.
    pub fn clearance(&self, p: &Vec3) -> f64 {
        self.primitives.iter().map(|prim| signed_distance(&prim.shape, p)).fold(f64::INFINITY, f64::min)
    }

    /// Box around the finite primitives and the camera region.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = self.camera_min;
        let mut hi = self.camera_max;
        for p in &self.primitives {
            let (a, b) = match &p.shape {
                Shape::Ground { .. } => continue,
                Shape::Sphere { center, radius } => (center.add_scalar(-radius), center.add_scalar(*radius)),
                Shape::Cuboid { min, max } => (*min, *max),
            };
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        (lo, hi)
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    pub fn albedo_at(&self, primitive: usize, p: &Vec3) -> Vec3 {
        match &self.primitives[primitive].material.albedo {
            Albedo::Solid(c) => *c,
            Albedo::Checker { a, b, scale } => {
                let s = (p.x / scale).floor() + (p.y / scale).floor() + (p.z / scale).floor();
                if (s as i64).rem_euclid(2) == 0 {
                    *a
                } else {
                    *b
                }
            }
            Albedo::Noise { a, b, scale, seed } => {
                let n = 0.65 * value_noise(&(p / *scale), *seed) + 0.35 * value_noise(&(p * 2.0 / *scale), seed ^ 0x9e37);
                a.lerp(b, n)
            }
        }
    }
}

fn lattice(x: i64, y: i64, z: i64, seed: u64) -> f64 {
    let mut h = seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothly interpolated lattice noise in `[0, 1]`.
pub fn value_noise(p: &Vec3, seed: u64) -> f64 {
    let cell = p.map(f64::floor);
    let f = p - cell;
    let s = f.map(|v| v * v * (3.0 - 2.0 * v));
    let (x, y, z) = (cell.x as i64, cell.y as i64, cell.z as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { s.x } else { 1.0 - s.x })
                    * (if dy == 1 { s.y } else { 1.0 - s.y })
                    * (if dz == 1 { s.z } else { 1.0 - s.z });
                acc += w * lattice(x + dx, y + dy, z + dz, seed);
            }
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    Diffuse,
    Specular,
    Checker,
    Mixed,
}

impl SceneKind {
    pub const ALL: [SceneKind; 4] = [SceneKind::Diffuse, SceneKind::Specular, SceneKind::Checker, SceneKind::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Diffuse => "diffuse",
            SceneKind::Specular => "specular",
            SceneKind::Checker => "checker",
            SceneKind::Mixed => "mixed",
        }
    }

    fn default_seed(self) -> u64 {
        match self {
            SceneKind::Diffuse => 101,
            SceneKind::Specular => 202,
            SceneKind::Checker => 303,
            SceneKind::Mixed => 404,
        }
    }
}

impl std::str::FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Scene(format!("unknown scene {s:?}")))
    }
}

const COURT_HALF: f64 = 10.0;
const WALL_HEIGHT: f64 = 4.0;
const WALL_THICKNESS: f64 = 0.5;

fn random_color(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.gen_range(0.15..0.95), rng.gen_range(0.15..0.95), rng.gen_range(0.15..0.95))
}

fn material_for(kind: SceneKind, rng: &mut ChaCha8Rng, seed: u64) -> Material {
    let color = random_color(rng);
    let other = random_color(rng);
    let glossy = |rng: &mut ChaCha8Rng, albedo| Material {
        albedo,
        specular: rng.gen_range(0.6..1.0),
        roughness: rng.gen_range(0.08..0.3),
        emissive: 0.0,
    };
    let matte = |rng: &mut ChaCha8Rng, albedo| Material {
        albedo,
        specular: rng.gen_range(0.0..0.05),
        roughness: rng.gen_range(0.7..1.0),
        emissive: 0.0,
    };
    match kind {
        SceneKind::Diffuse => {
            let scale = rng.gen_range(0.3..1.2);
            let albedo = if rng.gen_bool(0.5) {
                Albedo::Noise { a: color, b: other, scale, seed }
            } else {
                Albedo::Solid(color)
            };
            matte(rng, albedo)
        }
        SceneKind::Specular => glossy(rng, Albedo::Solid(color)),
        SceneKind::Checker => {
            let scale = rng.gen_range(0.15..0.5);
            matte(rng, Albedo::Checker { a: color, b: other, scale })
        }
        SceneKind::Mixed => match rng.gen_range(0..4) {
            0 => glossy(rng, Albedo::Solid(color)),
            1 => {
                let scale = rng.gen_range(0.15..0.5);
                matte(rng, Albedo::Checker { a: color, b: other, scale })
            }
            2 => {
                let scale = rng.gen_range(0.3..1.2);
                matte(rng, Albedo::Noise { a: color, b: other, scale, seed })
            }
            _ => {
                let mut m = matte(rng, Albedo::Solid(color));
                if rng.gen_bool(0.3) {
                    m.emissive = rng.gen_range(0.2..0.6);
                }
                m
            }
        },
    }
}

/// One of the bundled courtyard scenes: a walled ground plane populated with
/// spheres and boxes whose materials depend on `kind`.
pub fn scene_library(kind: SceneKind) -> Scene {
    build_courtyard(kind, kind.default_seed())
}

pub fn build_courtyard(kind: SceneKind, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut primitives = Vec::new();
    let ground_albedo = match kind {
        SceneKind::Checker | SceneKind::Mixed => Albedo::Checker {
            a: Vec3::new(0.8, 0.8, 0.75),
            b: Vec3::new(0.25, 0.25, 0.3),
            scale: 1.0,
        },
        _ => Albedo::Noise { a: Vec3::new(0.55, 0.5, 0.4), b: Vec3::new(0.3, 0.35, 0.25), scale: 2.0, seed },
    };
    let ground_spec = if kind == SceneKind::Specular { 0.4 } else { 0.02 };
    primitives.push(Primitive {
        shape: Shape::Ground { height: 0.0 },
        material: Material { albedo: ground_albedo, specular: ground_spec, roughness: 0.5, emissive: 0.0 },
    });
    let (h, t) = (COURT_HALF, WALL_THICKNESS);
    let walls = [
        (Vec3::new(-h - t, 0.0, -h - t), Vec3::new(h + t, WALL_HEIGHT, -h)),
        (Vec3::new(-h - t, 0.0, h), Vec3::new(h + t, WALL_HEIGHT, h + t)),
        (Vec3::new(-h - t, 0.0, -h), Vec3::new(-h, WALL_HEIGHT, h)),
        (Vec3::new(h, 0.0, -h), Vec3::new(h + t, WALL_HEIGHT, h)),
    ];
    for (min, max) in walls {
        let material = material_for(kind, &mut rng, seed);
        primitives.push(Primitive { shape: Shape::Cuboid { min, max }, material });
    }
    for _ in 0..14 {
        let radius = rng.gen_range(0.4..1.4);
        let center = Vec3::new(rng.gen_range(-8.5..8.5), radius * rng.gen_range(0.6..1.0), rng.gen_range(-8.5..8.5));
        let material = material_for(kind, &mut rng, seed);
        primitives.push(Primitive { shape: Shape::Sphere { center, radius }, material });
    }
    for _ in 0..8 {
        let size = Vec3::new(rng.gen_range(0.5..2.5), rng.gen_range(0.4..2.5), rng.gen_range(0.5..2.5));
        let x = rng.gen_range(-8.5..8.5);
        let z = rng.gen_range(-8.5..8.5);
        let min = Vec3::new(x, 0.0, z);
        let material = material_for(kind, &mut rng, seed);
        primitives.push(Primitive { shape: Shape::Cuboid { min, max: min + size }, material });
    }
    Scene {
        name: kind.name().to_string(),
        primitives,
        light: Light { direction: Vec3::new(0.45, 0.8, 0.35).normalize(), intensity: 2.2, ambient: 0.2 },
        camera_min: Vec3::new(-9.0, 0.6, -9.0),
        camera_max: Vec3::new(9.0, 3.0, 9.0),
        background: [0.55, 0.7, 0.9],
        seed,
    }
}
