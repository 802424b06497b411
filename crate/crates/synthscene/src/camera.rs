use crate::scene::Vec3;
use crate::{Error, Result};

/// Pinhole camera. View space has x right, y up and z along `forward`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub right: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
}

pub const DEFAULT_FOV_Y: f64 = 1.0471975511965976;
pub const DEFAULT_NEAR: f64 = 0.05;
pub const DEFAULT_FAR: f64 = 100.0;

impl Camera {
    /// Camera looking along `forward` with world +y as the up hint.
    pub fn look(position: Vec3, forward: Vec3, fov_y: f64, near: f64, far: f64) -> Result<Self> {
        let f = forward
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Camera("zero forward vector".into()))?;
        let right = Vec3::y()
            .cross(&f)
            .try_normalize(1e-9)
            .ok_or_else(|| Error::Camera("forward is parallel to world up".into()))?;
        let up = f.cross(&right);
        let cam = Self { position, forward: f, up, right, fov_y, near, far };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_defaults(position: Vec3, forward: Vec3) -> Result<Self> {
        Self::look(position, forward, DEFAULT_FOV_Y, DEFAULT_NEAR, DEFAULT_FAR)
    }

    pub fn validate(&self) -> Result<()> {
        let ortho = self.forward.dot(&self.up).abs() + self.forward.dot(&self.right).abs() + self.up.dot(&self.right).abs();
        let units = (self.forward.norm() - 1.0).abs() + (self.up.norm() - 1.0).abs() + (self.right.norm() - 1.0).abs();
        if ortho > 1e-9 || units > 1e-9 {
            return Err(Error::Camera("basis is not orthonormal".into()));
        }
        if !(self.far > self.near && self.near > 0.0) {
            return Err(Error::Camera(format!("need far > near > 0, got near={} far={}", self.near, self.far)));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::Camera("field of view out of range".into()));
        }
        Ok(())
    }

    fn tan_half(&self) -> f64 {
        (self.fov_y / 2.0).tan()
    }

    /// Unit world-space direction through the center of pixel `(px, py)`.
    pub fn ray_dir(&self, px: usize, py: usize, width: usize, height: usize) -> Vec3 {
        let aspect = width as f64 / height as f64;
        let th = self.tan_half();
        let x = (2.0 * (px as f64 + 0.5) / width as f64 - 1.0) * th * aspect;
        let y = (1.0 - 2.0 * (py as f64 + 0.5) / height as f64) * th;
        (self.right * x + self.up * y + self.forward).normalize()
    }

    pub fn to_view(&self, world: &Vec3) -> Vec3 {
        let d = world - self.position;
        Vec3::new(d.dot(&self.right), d.dot(&self.up), d.dot(&self.forward))
    }

    pub fn dir_to_view(&self, dir: &Vec3) -> Vec3 {
        Vec3::new(dir.dot(&self.right), dir.dot(&self.up), dir.dot(&self.forward))
    }

    /// Continuous pixel coordinates (pixel centers at integers) and view depth
    /// of a world point, or `None` outside the view frustum.
    pub fn project(&self, world: &Vec3, width: usize, height: usize) -> Option<(f64, f64, f64)> {
        let v = self.to_view(world);
        if v.z < self.near || v.z > self.far {
            return None;
        }
        let aspect = width as f64 / height as f64;
        let th = self.tan_half();
        let nx = v.x / (v.z * th * aspect);
        let ny = v.y / (v.z * th);
        let px = (nx + 1.0) / 2.0 * width as f64 - 0.5;
        let py = (1.0 - ny) / 2.0 * height as f64 - 0.5;
        Some((px, py, v.z))
    }

    pub fn to_text(&self) -> String {
        let v = |x: &Vec3| format!("{:.17e},{:.17e},{:.17e}", x.x, x.y, x.z);
        format!(
            "position={} forward={} fov_y={:.17e} near={:.17e} far={:.17e}",
            v(&self.position),
            v(&self.forward),
            self.fov_y,
            self.near,
            self.far
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_and_projection_round_trip() {
        let cam = Camera::with_defaults(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.3, -0.2, 1.0)).unwrap();
        for (px, py) in [(0, 0), (17, 40), (63, 31)] {
            let dir = cam.ray_dir(px, py, 64, 32);
            let p = cam.position + dir * 7.5;
            let (x, y, _) = cam.project(&p, 64, 32).unwrap();
            assert!((x - px as f64).abs() < 1e-9 && (y - py as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_degenerate() {
        assert!(Camera::with_defaults(Vec3::zeros(), Vec3::y()).is_err());
        assert!(Camera::with_defaults(Vec3::zeros(), Vec3::zeros()).is_err());
        assert!(Camera::look(Vec3::zeros(), Vec3::z(), 1.0, 1.0, 0.5).is_err());
    }
}
