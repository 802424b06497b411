use vrsnet_core::TensorBuffer;

use crate::gbuffer::GBufferFrame;
use crate::{Error, Result};

/// Relative view-depth tolerance for accepting a reprojected sample.
pub const DEPTH_TOLERANCE: f64 = 0.01;

/// Warps `prev_image` into the current view. Returns the `(3, H, W)` color
/// and the `(H, W)` mask (1 = seen in the previous frame).
pub fn reproject(prev: &GBufferFrame, prev_image: &TensorBuffer, cur: &GBufferFrame) -> Result<(TensorBuffer, TensorBuffer)> {
    prev.camera.validate()?;
    cur.camera.validate()?;
    let (w, h) = (cur.width, cur.height);
    let (pw, ph) = (prev.width, prev.height);
    if prev_image.dims() != [3, ph, pw] {
        return Err(Error::Dims(format!(
            "previous image {:?} does not match its {pw}x{ph} G-buffer",
            prev_image.dims()
        )));
    }
    let mut color = TensorBuffer::zeros(&[3, h, w])?;
    let mut mask = TensorBuffer::zeros(&[h, w])?;
    let src = prev_image.data();
    for i in 0..w * h {
        if cur.is_sky(i) {
            continue;
        }
        let Some((px, py, z)) = prev.camera.project(&cur.world[i], pw, ph) else {
            continue;
        };
        let (sx, sy) = (px.round(), py.round());
        if sx < 0.0 || sy < 0.0 || sx >= pw as f64 || sy >= ph as f64 {
            continue;
        }
        let j = sy as usize * pw + sx as usize;
        if prev.is_sky(j) || (prev.depth[j] as f64 - z).abs() > DEPTH_TOLERANCE * z {
            continue;
        }
        mask.data_mut()[i] = 1.0;
        for a in 0..3 {
            color.data_mut()[a * w * h + i] = src[a * pw * ph + j];
        }
    }
    Ok((color, mask))
}

/// Fraction of geometry pixels without a valid previous sample.
pub fn unseen_fraction(cur: &GBufferFrame, mask: &TensorBuffer) -> f64 {
    let geometry: Vec<usize> = (0..cur.depth.len()).filter(|&i| !cur.is_sky(i)).collect();
    if geometry.is_empty() {
        return 0.0;
    }
    geometry.iter().filter(|&&i| mask.data()[i] == 0.0).count() as f64 / geometry.len() as f64
}
