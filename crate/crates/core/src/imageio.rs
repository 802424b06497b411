//! 8-bit RGB images and PNG output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::{Error, Result, TensorBuffer};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    /// Row-major interleaved RGB.
    pub pixels: Vec<u8>,
}

impl Rgb8Image {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Quantizes a `(3, H, W)` or `(1, 3, H, W)` tensor with values in `[0, 1]`.
    pub fn from_planar(t: &TensorBuffer) -> Result<Self> {
        let (n, c, h, w) = t.nchw();
        if n != 1 || c != 3 {
            return Err(Error::Dims(format!("expected an RGB image, got {:?}", t.dims())));
        }
        let mut pixels = vec![0u8; w * h * 3];
        for ch in 0..3 {
            for (i, &v) in t.plane(0, ch).iter().enumerate() {
                pixels[i * 3 + ch] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        Ok(Self { width: w, height: h, pixels })
    }

    pub fn encode_png<W: Write>(&self, out: W) -> Result<()> {
        let mut enc = png::Encoder::new(out, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.pixels)?;
        writer.finish()?;
        Ok(())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        self.encode_png(file)
    }
}
