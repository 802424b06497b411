//! Rejection sampling of (previous, current) camera pairs.

use rand::Rng;

use crate::camera::Camera;
use crate::gbuffer::render_gbuffer;
use crate::scene::{Scene, Vec3};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub max_attempts: usize,
    /// Minimum distance from any surface.
    pub clearance: f64,
    pub min_coverage: f64,
    pub probe_size: usize,
    /// Previous-viewpoint distance bound as a fraction of the scene diagonal.
    pub max_offset_fraction: f64,
    /// Largest angular change of the view direction, radians.
    pub max_turn: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            max_attempts: 10_000,
            clearance: 0.25,
            min_coverage: 0.8,
            probe_size: 32,
            max_offset_fraction: 0.03,
            max_turn: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewpointPair {
    pub prev: Camera,
    pub cur: Camera,
    pub attempts: usize,
}

fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn in_ball(rng: &mut impl Rng, radius: f64) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Probe-render coverage of `camera`.
pub fn coverage(scene: &Scene, camera: &Camera, size: usize) -> Result<f64> {
    Ok(render_gbuffer(scene, camera, size, size)?.coverage())
}

pub fn max_offset(scene: &Scene, cfg: &SamplerConfig) -> f64 {
    cfg.max_offset_fraction * scene.diagonal()
}

/// Re-checks every acceptance predicate for a pair.
pub fn pair_is_valid(scene: &Scene, pair: &ViewpointPair, cfg: &SamplerConfig) -> Result<bool> {
    let (p, c) = (&pair.prev.position, &pair.cur.position);
    let d = (p - c).norm();
    Ok(scene.clearance(c) >= cfg.clearance
        && scene.clearance(p) >= cfg.clearance
        && coverage(scene, &pair.cur, cfg.probe_size)? >= cfg.min_coverage
        && d <= max_offset(scene, cfg)
        && (d == 0.0 || !scene.occluded(c, &((p - c) / d), 0.0, d)))
}

pub fn sample_viewpoint_pair(scene: &Scene, rng: &mut impl Rng, cfg: &SamplerConfig) -> Result<ViewpointPair> {
    let (lo, hi) = (scene.camera_min, scene.camera_max);
    let d_max = max_offset(scene, cfg);
    for attempt in 1..=cfg.max_attempts {
        let pos = Vec3::new(
            rng.gen_range(lo.x..=hi.x),
            rng.gen_range(lo.y..=hi.y),
            rng.gen_range(lo.z..=hi.z),
        );
        let dir = unit_vector(rng);
        let offset = in_ball(rng, d_max);
        let turn = unit_vector(rng) * rng.gen_range(0.0..=cfg.max_turn);
        if dir.y.abs() > 0.95 || scene.clearance(&pos) < cfg.clearance {
            continue;
        }
        let Ok(cur) = Camera::with_defaults(pos, dir) else { continue };
        if coverage(scene, &cur, cfg.probe_size)? < cfg.min_coverage {
            continue;
        }
        let prev_pos = pos + offset;
        let d = offset.norm();
        if scene.clearance(&prev_pos) < cfg.clearance || (d > 0.0 && scene.occluded(&pos, &(offset / d), 0.0, d)) {
            continue;
        }
        let Ok(prev) = Camera::with_defaults(prev_pos, dir + turn) else { continue };
        return Ok(ViewpointPair { prev, cur, attempts: attempt });
    }
    Err(Error::SamplerExhausted(cfg.max_attempts))
}
