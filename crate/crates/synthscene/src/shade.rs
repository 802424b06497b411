//! Deferred shading at a chosen shading rate.

use vrsnet_core::vrs::ShadingRate;
use vrsnet_core::TensorBuffer;

use crate::gbuffer::GBufferFrame;
use crate::scene::{Light, Vec3};
use crate::{Error, Result};

pub const MIN_ROUGHNESS: f64 = 0.05;

pub fn specular_exponent(roughness: f64) -> f64 {
    let r = roughness.max(MIN_ROUGHNESS);
    2.0 / (r * r) - 2.0
}

fn reinhard(x: f64) -> f64 {
    (x / (1.0 + x)).clamp(0.0, 1.0)
}

/// Tone-mapped color of G-buffer pixel `i`, which must not be sky.
pub fn shade_pixel(g: &GBufferFrame, i: usize, light: &Light) -> [f32; 3] {
    let n = Vec3::new(g.normal[0][i] as f64, g.normal[1][i] as f64, g.normal[2][i] as f64);
    let l = g.camera.dir_to_view(&light.direction);
    let v = -g.camera.to_view(&g.world[i]).normalize();
    let shadow = g.shadow[i] as f64;
    let n_dot_l = n.dot(&l).max(0.0);
    let direct = light.intensity * n_dot_l * shadow;
    let spec = if n_dot_l > 0.0 {
        let h = (l + v).normalize();
        let e = specular_exponent(g.roughness[i] as f64);
        g.specular[i] as f64 * direct * (e + 8.0) / (8.0 * std::f64::consts::PI) * n.dot(&h).max(0.0).powf(e)
    } else {
        0.0
    };
    let emissive = g.emissive[i] as f64;
    let mut out = [0.0f32; 3];
    for (a, o) in out.iter_mut().enumerate() {
        let albedo = g.diffuse[a][i] as f64;
        *o = reinhard(albedo * (light.ambient + direct) + spec + emissive * albedo) as f32;
    }
    out
}

/// Shades one sample per `u x v` block and replicates it over the block's
/// geometry pixels. The sample is the block-center pixel, or the first
/// geometry pixel in scan order when the center is sky. Sky pixels always
/// receive `background`. Returns a `(3, H, W)` image.
pub fn shade(g: &GBufferFrame, rate: ShadingRate, light: &Light, background: [f32; 3]) -> Result<TensorBuffer> {
    let (w, h) = (g.width, g.height);
    if w % rate.u != 0 || h % rate.v != 0 {
        return Err(Error::Dims(format!("{w}x{h} frame is not divisible by rate {}", rate.label())));
    }
    let mut img = TensorBuffer::zeros(&[3, h, w])?;
    let hw = w * h;
    let data = img.data_mut();
    for by in 0..h / rate.v {
        for bx in 0..w / rate.u {
            let (x0, y0) = (bx * rate.u, by * rate.v);
            let center = (y0 + rate.v / 2) * w + x0 + rate.u / 2;
            let sample = if !g.is_sky(center) {
                Some(center)
            } else {
                (y0..y0 + rate.v)
                    .flat_map(|y| (x0..x0 + rate.u).map(move |x| y * w + x))
                    .find(|&i| !g.is_sky(i))
            };
            let color = sample.map(|s| shade_pixel(g, s, light));
            for y in y0..y0 + rate.v {
                for x in x0..x0 + rate.u {
                    let i = y * w + x;
                    let c = match color {
                        Some(c) if !g.is_sky(i) => c,
                        _ => background,
                    };
                    for (a, v) in c.into_iter().enumerate() {
                        data[a * hw + i] = v;
                    }
                }
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_from_roughness() {
        assert_eq!(specular_exponent(1.0), 0.0);
        assert!((specular_exponent(0.5) - 6.0).abs() < 1e-12);
        assert_eq!(specular_exponent(0.0), specular_exponent(MIN_ROUGHNESS));
    }

    #[test]
    fn tone_map_bounds() {
        assert_eq!(reinhard(0.0), 0.0);
        assert!((reinhard(1.0) - 0.5).abs() < 1e-15);
        assert!(reinhard(1e9) <= 1.0);
    }
}
