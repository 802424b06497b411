//! Per-pixel and per-tile visual error between a reference image and a
//! reduced-rate rendering.
//!
//! Images are `(3, H, W)` tensors (or `(1, 3, H, W)`) holding tone-mapped
//! RGB in `[0, 1]`. Error and luminance maps are `(H, W)`.

use std::fmt;
use std::str::FromStr;

use crate::vrs::ShadingRate;
use crate::{Error, Result, TensorBuffer};

pub const LUMA_R: f32 = 0.2126;
pub const LUMA_G: f32 = 0.7152;
pub const LUMA_B: f32 = 0.0722;

pub const SFLIP_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaseMetric {
    /// Euclidean RGB distance scaled to `[0, 1]`.
    Rmse,
    /// Mean absolute luminance difference.
    Mald,
    /// Blurred cube-root luminance difference.
    Sflip,
}

impl fmt::Display for BaseMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseMetric::Rmse => "rmse",
            BaseMetric::Mald => "mald",
            BaseMetric::Sflip => "sflip",
        })
    }
}

impl FromStr for BaseMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmse" => Ok(Self::Rmse),
            "mald" => Ok(Self::Mald),
            "sflip" => Ok(Self::Sflip),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MetricId {
    pub base: BaseMetric,
    /// Divide by `L + l` (just-noticeable variant).
    pub weber: bool,
}

impl MetricId {
    pub fn raw(base: BaseMetric) -> Self {
        Self { base, weber: false }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.weber {
            write!(f, "{}+weber", self.base)
        } else {
            write!(f, "{}", self.base)
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_suffix("+weber") {
            Some(base) => Ok(Self { base: base.parse()?, weber: true }),
            None => Ok(Self { base: s.parse()?, weber: false }),
        }
    }
}

/// Weber-law parameters: sensitivity `t` and environment luminance `l`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JndConfig {
    pub t: f64,
    pub l: f64,
}

impl Default for JndConfig {
    fn default() -> Self {
        Self { t: 0.25, l: 0.05 }
    }
}

impl JndConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !(self.l >= 0.0) {
            return Err(Error::Config(format!("need t > 0 and l >= 0, got t={} l={}", self.t, self.l)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    /// `(H, W)` values in `[0, 1]`.
    pub values: TensorBuffer,
    pub metric: MetricId,
    pub rate: Option<ShadingRate>,
}

fn rgb_dims(image: &TensorBuffer) -> Result<(usize, usize)> {
    let (n, c, h, w) = image.nchw();
    if n != 1 || c != 3 {
        return Err(Error::Dims(format!("expected a 3-channel image, got {:?}", image.dims())));
    }
    Ok((h, w))
}

fn same_dims(a: &TensorBuffer, b: &TensorBuffer) -> Result<(usize, usize)> {
    let da = rgb_dims(a)?;
    let db = rgb_dims(b)?;
    if da != db {
        return Err(Error::Dims(format!("image sizes differ: {da:?} vs {db:?}")));
    }
    Ok(da)
}

/// Rec. 709 luminance as an `(H, W)` map.
pub fn luminance(image: &TensorBuffer) -> Result<TensorBuffer> {
    let (h, w) = rgb_dims(image)?;
    let (r, g, b) = (image.plane(0, 0), image.plane(0, 1), image.plane(0, 2));
    let data = (0..h * w).map(|i| LUMA_R * r[i] + LUMA_G * g[i] + LUMA_B * b[i]).collect();
    Ok(TensorBuffer::from_vec(&[h, w], data)?)
}

pub fn rmse_metric(reference: &TensorBuffer, candidate: &TensorBuffer) -> Result<ErrorMap> {
    let (h, w) = same_dims(reference, candidate)?;
    let inv_sqrt3 = 1.0 / 3.0f32.sqrt();
    let data = (0..h * w)
        .map(|i| {
            let sq: f32 = (0..3)
                .map(|c| {
                    let d = reference.plane(0, c)[i] - candidate.plane(0, c)[i];
                    d * d
                })
                .sum();
            (sq.sqrt() * inv_sqrt3).min(1.0)
        })
        .collect();
    Ok(ErrorMap {
        values: TensorBuffer::from_vec(&[h, w], data)?,
        metric: MetricId::raw(BaseMetric::Rmse),
        rate: None,
    })
}

pub fn mald_metric(reference: &TensorBuffer, candidate: &TensorBuffer) -> Result<ErrorMap> {
    same_dims(reference, candidate)?;
    let a = luminance(reference)?;
    let b = luminance(candidate)?;
    let (h, w) = (a.dims()[0], a.dims()[1]);
    let data = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs().min(1.0)).collect();
    Ok(ErrorMap {
        values: TensorBuffer::from_vec(&[h, w], data)?,
        metric: MetricId::raw(BaseMetric::Mald),
        rate: None,
    })
}

/// Normalized 1-D Gaussian with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

/// Separable blur of an `(H, W)` plane with edge-clamped borders.
pub fn blur(plane: &[f32], h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, &kw) in kernel.iter().enumerate() {
                acc += kw * row[clamp(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, &kw) in kernel.iter().enumerate() {
                acc += kw * tmp[clamp(y as isize + k as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// `|G(P(L(I))) - G(P(L(I')))|` with `P = cbrt` and a sigma 1.5 Gaussian.
pub fn sflip_metric(reference: &TensorBuffer, candidate: &TensorBuffer) -> Result<ErrorMap> {
    let (h, w) = same_dims(reference, candidate)?;
    let kernel = gaussian_kernel(SFLIP_SIGMA);
    let lightness = |img: &TensorBuffer| -> Result<Vec<f32>> {
        let l = luminance(img)?;
        Ok(blur(&l.data().iter().map(|v| v.max(0.0).cbrt()).collect::<Vec<_>>(), h, w, &kernel))
    };
    let a = lightness(reference)?;
    let b = lightness(candidate)?;
    let data = a.iter().zip(&b).map(|(x, y)| (x - y).abs().clamp(0.0, 1.0)).collect();
    Ok(ErrorMap {
        values: TensorBuffer::from_vec(&[h, w], data)?,
        metric: MetricId::raw(BaseMetric::Sflip),
        rate: None,
    })
}

pub fn base_metric(base: BaseMetric, reference: &TensorBuffer, candidate: &TensorBuffer) -> Result<ErrorMap> {
    match base {
        BaseMetric::Rmse => rmse_metric(reference, candidate),
        BaseMetric::Mald => mald_metric(reference, candidate),
        BaseMetric::Sflip => sflip_metric(reference, candidate),
    }
}

fn check_weber(e: &TensorBuffer, lum: &TensorBuffer, cfg: &JndConfig) -> Result<()> {
    cfg.validate()?;
    if e.dims() != lum.dims() {
        return Err(Error::Dims(format!("error {:?} vs luminance {:?}", e.dims(), lum.dims())));
    }
    if let Some(i) = lum.data().iter().position(|&l| !(l as f64 + cfg.l > 0.0)) {
        return Err(Error::Value(format!("L + l is zero at pixel {i}")));
    }
    Ok(())
}

/// `E / (L + l)` before clamping; the decision `E <= t (L + l)` is
/// equivalent to `ratio <= t`.
pub fn weber_ratio(e: f64, lum: f64, l: f64) -> f64 {
    e / (lum + l)
}

/// Weber-corrected error `E / (L + l)`, clamped to `[0, 1]`.
pub fn weber_correct(e: &ErrorMap, lum: &TensorBuffer, cfg: &JndConfig) -> Result<ErrorMap> {
    check_weber(&e.values, lum, cfg)?;
    let data = e
        .values
        .data()
        .iter()
        .zip(lum.data())
        .map(|(&ev, &lv)| weber_ratio(ev as f64, lv as f64, cfg.l).clamp(0.0, 1.0) as f32)
        .collect();
    Ok(ErrorMap {
        values: TensorBuffer::from_vec(e.values.dims(), data)?,
        metric: MetricId { base: e.metric.base, weber: true },
        rate: e.rate,
    })
}

/// Just-noticeable threshold map `t (L + l)`.
pub fn jnd_threshold(lum: &TensorBuffer, cfg: &JndConfig) -> Result<TensorBuffer> {
    cfg.validate()?;
    Ok(lum.map(|l| (cfg.t * (l as f64 + cfg.l)) as f32))
}

/// Metric between `reference` and `candidate`. Weber variants use the
/// reference luminance.
pub fn compute(metric: MetricId, reference: &TensorBuffer, candidate: &TensorBuffer, jnd: &JndConfig) -> Result<ErrorMap> {
    let e = base_metric(metric.base, reference, candidate)?;
    if metric.weber {
        weber_correct(&e, &luminance(reference)?, jnd)
    } else {
        Ok(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TileMode {
    #[default]
    Mean,
    Max,
}

impl FromStr for TileMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(Error::Config(format!("unknown tile mode {other:?}"))),
        }
    }
}

impl fmt::Display for TileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TileMode::Mean => "mean",
            TileMode::Max => "max",
        })
    }
}

/// Reduces an `(H, W)` map to `(H / w, W / w)` tiles.
pub fn tile_aggregate(map: &TensorBuffer, w: usize, mode: TileMode) -> Result<TensorBuffer> {
    let (n, c, h, width) = map.nchw();
    if n != 1 || c != 1 {
        return Err(Error::Dims(format!("expected a single plane, got {:?}", map.dims())));
    }
    if w == 0 || h % w != 0 || width % w != 0 {
        return Err(Error::Dims(format!("tile size {w} does not divide {h}x{width}")));
    }
    let (th, tw) = (h / w, width / w);
    let src = map.data();
    let mut out = vec![0.0f32; th * tw];
    for ty in 0..th {
        for tx in 0..tw {
            let mut acc = 0.0f64;
            let mut mx = f32::NEG_INFINITY;
            for y in ty * w..(ty + 1) * w {
                for &v in &src[y * width + tx * w..y * width + (tx + 1) * w] {
                    acc += v as f64;
                    mx = mx.max(v);
                }
            }
            out[ty * tw + tx] = match mode {
                TileMode::Mean => (acc / (w * w) as f64) as f32,
                TileMode::Max => mx,
            };
        }
    }
    Ok(TensorBuffer::from_vec(&[th, tw], out)?)
}
