//! Per-pixel geometry and material planes.

use crate::camera::Camera;
use crate::scene::{Scene, Vec3, RAY_EPSILON};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GBufferFrame {
    pub width: usize,
    pub height: usize,
    /// View-space depth; `camera.far` marks sky.
    pub depth: Vec<f32>,
    /// View-space normal components, zero on sky.
    pub normal: [Vec<f32>; 3],
    pub diffuse: [Vec<f32>; 3],
    pub specular: Vec<f32>,
    pub roughness: Vec<f32>,
    /// 1 where the light is visible.
    pub shadow: Vec<f32>,
    pub emissive: Vec<f32>,
    pub world: Vec<Vec3>,
    pub camera: Camera,
}

impl GBufferFrame {
    pub fn is_sky(&self, i: usize) -> bool {
        self.depth[i] >= self.camera.far as f32
    }

    pub fn coverage(&self) -> f64 {
        let hits = (0..self.depth.len()).filter(|&i| !self.is_sky(i)).count();
        hits as f64 / self.depth.len() as f64
    }
}

pub fn render_gbuffer(scene: &Scene, camera: &Camera, width: usize, height: usize) -> Result<GBufferFrame> {
    camera.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::Dims("frame must be non-empty".into()));
    }
    let n = width * height;
    let plane = || vec![0.0f32; n];
    let mut g = GBufferFrame {
        width,
        height,
        depth: vec![camera.far as f32; n],
        normal: [plane(), plane(), plane()],
        diffuse: [plane(), plane(), plane()],
        specular: plane(),
        roughness: plane(),
        shadow: plane(),
        emissive: plane(),
        world: vec![Vec3::zeros(); n],
        camera: camera.clone(),
    };
    let light = &scene.light;
    for py in 0..height {
        for px in 0..width {
            let i = py * width + px;
            let dir = camera.ray_dir(px, py, width, height);
            let cos = dir.dot(&camera.forward);
            let Some(hit) = scene.intersect(&camera.position, &dir, camera.near / cos) else {
                continue;
            };
            let p = camera.position + dir * hit.t;
            let z = (p - camera.position).dot(&camera.forward);
            if z >= camera.far {
                continue;
            }
            let mat = &scene.primitives[hit.primitive].material;
            let nv = camera.dir_to_view(&hit.normal);
            let albedo = scene.albedo_at(hit.primitive, &p);
            g.depth[i] = z as f32;
            for a in 0..3 {
                g.normal[a][i] = nv[a] as f32;
                g.diffuse[a][i] = albedo[a] as f32;
            }
            g.specular[i] = mat.specular as f32;
            g.roughness[i] = mat.roughness as f32;
            g.emissive[i] = mat.emissive as f32;
            let origin = p + hit.normal * (RAY_EPSILON * (1.0 + hit.t));
            let lit = hit.normal.dot(&light.direction) > 0.0 && !scene.occluded(&origin, &light.direction, 0.0, f64::INFINITY);
            g.shadow[i] = if lit { 1.0 } else { 0.0 };
            g.world[i] = p;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Light, Material, Primitive, Shape};

    fn sphere_scene() -> Scene {
        Scene {
            name: "test".into(),
            primitives: vec![Primitive {
                shape: Shape::Sphere { center: Vec3::new(0.0, 0.0, 5.0), radius: 1.0 },
                material: Material::diffuse(Vec3::new(0.5, 0.5, 0.5)),
            }],
            light: Light { direction: Vec3::new(0.0, 0.0, -1.0), intensity: 1.0, ambient: 0.1 },
            camera_min: Vec3::zeros(),
            camera_max: Vec3::zeros(),
            background: [0.0; 3],
            seed: 0,
        }
    }

    #[test]
    fn sphere_center_normal_faces_camera() {
        let cam = Camera::with_defaults(Vec3::zeros(), Vec3::z()).unwrap();
        let g = render_gbuffer(&sphere_scene(), &cam, 32, 32).unwrap();
        // Pixel centers straddle the axis; the four central pixels see nearly the pole.
        let i = 16 * 32 + 16;
        assert!(g.normal[2][i] < -0.99);
        assert!((g.depth[i] - 4.0).abs() < 0.01);
        assert!(g.is_sky(0));
        let n = (g.normal[0][i].powi(2) + g.normal[1][i].powi(2) + g.normal[2][i].powi(2)).sqrt();
        assert!((n - 1.0).abs() < 1e-5);
    }

    #[test]
    fn odd_resolution_hits_pole_exactly() {
        let cam = Camera::with_defaults(Vec3::zeros(), Vec3::z()).unwrap();
        let g = render_gbuffer(&sphere_scene(), &cam, 33, 33).unwrap();
        let i = 16 * 33 + 16;
        assert_eq!([g.normal[0][i], g.normal[1][i], g.normal[2][i]], [0.0, 0.0, -1.0]);
        assert_eq!(g.depth[i], 4.0);
    }

    #[test]
    fn empty_view_has_no_coverage() {
        let cam = Camera::with_defaults(Vec3::zeros(), -Vec3::z()).unwrap();
        let g = render_gbuffer(&sphere_scene(), &cam, 16, 16).unwrap();
        assert_eq!(g.coverage(), 0.0);
    }
}
