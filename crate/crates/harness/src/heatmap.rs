use std::path::Path;

use vrsnet_core::imageio::Rgb8Image;
use vrsnet_core::TensorBuffer;

use crate::{Error, Result};

const ANCHORS: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [0.0, 0.0, 255.0], [255.0, 0.0, 0.0], [255.0, 255.0, 255.0]];

/// black -> blue -> red -> white at 0, 1/3, 2/3, 1.
pub fn colormap(v: f64) -> [u8; 3] {
    let x = v.clamp(0.0, 1.0) * 3.0;
    let seg = (x.floor() as usize).min(2);
    let f = x - seg as f64;
    let (a, b) = (ANCHORS[seg], ANCHORS[seg + 1]);
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (a[c] + (b[c] - a[c]) * f).round() as u8;
    }
    out
}

/// Colour-maps an `(H, W)` map, each value drawn as a `scale x scale` block.
pub fn heatmap_image(map: &TensorBuffer, scale: usize) -> Result<Rgb8Image> {
    let (n, c, h, w) = map.nchw();
    if n != 1 || c != 1 || scale == 0 {
        return Err(Error::Dims(format!("heatmap needs one plane, got {:?}", map.dims())));
    }
    if let Some(v) = map.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Config(format!("heatmap value {v} outside [0, 1]")));
    }
    let (ow, oh) = (w * scale, h * scale);
    let mut pixels = Vec::with_capacity(ow * oh * 3);
    for y in 0..oh {
        for x in 0..ow {
            pixels.extend_from_slice(&colormap(map.data()[(y / scale) * w + x / scale] as f64));
        }
    }
    Ok(Rgb8Image { width: ow, height: oh, pixels })
}

pub fn heatmap_png(map: &TensorBuffer, path: impl AsRef<Path>) -> Result<()> {
    heatmap_image(map, 1)?.write_png(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_and_midpoint() {
        assert_eq!(colormap(0.0), [0, 0, 0]);
        assert_eq!(colormap(1.0 / 3.0), [0, 0, 255]);
        assert_eq!(colormap(2.0 / 3.0), [255, 0, 0]);
        assert_eq!(colormap(1.0), [255, 255, 255]);
        assert_eq!(colormap(0.5), [128, 0, 128]);
    }

    #[test]
    fn uniform_maps() {
        let zeros = TensorBuffer::zeros(&[3, 4]).unwrap();
        assert!(heatmap_image(&zeros, 2).unwrap().pixels.iter().all(|&p| p == 0));
        let ones = TensorBuffer::full(&[3, 4], 1.0).unwrap();
        let img = heatmap_image(&ones, 1).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 255));
        assert_eq!((img.width, img.height), (4, 3));
        assert!(heatmap_image(&TensorBuffer::full(&[1, 1], 1.5).unwrap(), 1).is_err());
    }
}
