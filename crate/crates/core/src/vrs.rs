//! Shading-rate selection from per-tile error predictions.

use std::fmt;
use std::str::FromStr;

use crate::metrics::{JndConfig, MetricId};
use crate::{Error, Result, TensorBuffer};

/// Horizontal (`u`) and vertical (`v`) shading strides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShadingRate {
    pub u: usize,
    pub v: usize,
}

impl ShadingRate {
    pub const R1X1: Self = Self { u: 1, v: 1 };
    pub const R1X2: Self = Self { u: 1, v: 2 };
    pub const R2X1: Self = Self { u: 2, v: 1 };
    pub const R2X2: Self = Self { u: 2, v: 2 };
    pub const R2X4: Self = Self { u: 2, v: 4 };
    pub const R4X2: Self = Self { u: 4, v: 2 };
    pub const R4X4: Self = Self { u: 4, v: 4 };

    /// Every modelled rate, cheapest first. Equal-cost rectangles are
    /// ordered 4x2 before 2x4 and 2x1 before 1x2.
    pub const BY_INCREASING_COST: [Self; 7] =
        [Self::R4X4, Self::R4X2, Self::R2X4, Self::R2X2, Self::R2X1, Self::R1X2, Self::R1X1];

    /// Channels predicted by the recommended network configuration.
    pub const PREDICTED: [Self; 4] = [Self::R1X2, Self::R2X1, Self::R2X4, Self::R4X2];

    pub fn new(u: usize, v: usize) -> Result<Self> {
        let r = Self { u, v };
        if Self::BY_INCREASING_COST.contains(&r) {
            Ok(r)
        } else {
            Err(Error::Config(format!("unsupported shading rate {u}x{v}")))
        }
    }

    /// 0 for the cheapest rate (4x4), 6 for full rate.
    pub fn cost_rank(self) -> usize {
        Self::BY_INCREASING_COST.iter().position(|&r| r == self).expect("validated rate")
    }

    pub fn index(self) -> usize {
        self.cost_rank()
    }

    pub fn label(self) -> String {
        format!("{}x{}", self.u, self.v)
    }
}

impl fmt::Display for ShadingRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.u, self.v)
    }
}

impl FromStr for ShadingRate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (u, v) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::Config(format!("shading rate {s:?} is not of the form UxV")))?;
        let parse = |t: &str| t.parse::<usize>().map_err(|e| Error::Config(format!("rate {s:?}: {e}")));
        Self::new(parse(u)?, parse(v)?)
    }
}

pub fn parse_rate_list(s: &str) -> Result<Vec<ShadingRate>> {
    let rates = s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>>>()?;
    if rates.is_empty() {
        return Err(Error::Config("empty rate list".into()));
    }
    Ok(rates)
}

pub fn format_rate_list(rates: &[ShadingRate]) -> String {
    rates.iter().map(|r| r.label()).collect::<Vec<_>>().join(",")
}

pub const DEFAULT_KAPPA: f64 = 2.13;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtrapolationConfig {
    /// Relative error growth when a rate is halved.
    pub kappa: f64,
}

impl Default for ExtrapolationConfig {
    fn default() -> Self {
        Self { kappa: DEFAULT_KAPPA }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Predicted,
    Extrapolated,
}

/// Per-tile predicted error (raw metric space) for each shading rate.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePrediction {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Indexed by [`ShadingRate::index`]; `None` when the rate is unknown.
    values: [Option<Vec<f32>>; 7],
    provenance: [Option<Provenance>; 7],
}

impl TilePrediction {
    pub fn new(tiles_x: usize, tiles_y: usize) -> Self {
        Self { tiles_x, tiles_y, values: Default::default(), provenance: [None; 7] }
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    pub fn set(&mut self, rate: ShadingRate, values: Vec<f32>, provenance: Provenance) -> Result<()> {
        if values.len() != self.tile_count() {
            return Err(Error::Dims(format!(
                "rate {rate} has {} values for {} tiles",
                values.len(),
                self.tile_count()
            )));
        }
        self.values[rate.index()] = Some(values);
        self.provenance[rate.index()] = Some(provenance);
        Ok(())
    }

    /// Builds a prediction from an `(1, R, ty, tx)` tensor whose channels
    /// follow `rates`.
    pub fn from_channels(t: &TensorBuffer, rates: &[ShadingRate]) -> Result<Self> {
        let (n, c, h, w) = t.nchw();
        if n != 1 || c != rates.len() {
            return Err(Error::Dims(format!(
                "prediction tensor {:?} does not match {} rates",
                t.dims(),
                rates.len()
            )));
        }
        let mut p = Self::new(w, h);
        for (ch, &r) in rates.iter().enumerate() {
            p.set(r, t.plane(0, ch).to_vec(), Provenance::Predicted)?;
        }
        Ok(p)
    }

    /// Error for `rate` at `tile`; full rate is identically 0.
    pub fn get(&self, rate: ShadingRate, tile: usize) -> Option<f32> {
        if rate == ShadingRate::R1X1 {
            return Some(0.0);
        }
        self.values[rate.index()].as_ref().map(|v| v[tile])
    }

    pub fn values(&self, rate: ShadingRate) -> Option<&[f32]> {
        self.values[rate.index()].as_deref()
    }

    pub fn provenance(&self, rate: ShadingRate) -> Option<Provenance> {
        self.provenance[rate.index()]
    }

    pub fn map_values(&self, f: impl Fn(ShadingRate, f32) -> f32) -> Self {
        let mut out = self.clone();
        for r in ShadingRate::BY_INCREASING_COST {
            if let Some(v) = out.values[r.index()].as_mut() {
                v.iter_mut().for_each(|x| *x = f(r, *x));
            }
        }
        out
    }
}

/// Fills 2x2, 2x4, 4x2 and 4x4 (when not predicted) from the finer rates:
///
/// * square: `max(Y[u/2 x v], Y[u x v/2])`
/// * `u > v`: `max(kappa * Y[u/2 x v/2], Y[u/2 x v])`
/// * `u < v`: `max(kappa * Y[u/2 x v/2], Y[u x v/2])`
///
/// Predicted channels pass through untouched.
pub fn extrapolate_rates(preds: &TilePrediction, cfg: &ExtrapolationConfig) -> Result<TilePrediction> {
    let mut out = preds.clone();
    let kappa = cfg.kappa as f32;
    for rate in [ShadingRate::R2X2, ShadingRate::R2X4, ShadingRate::R4X2, ShadingRate::R4X4] {
        if out.values(rate).is_some() {
            continue;
        }
        let (u, v) = (rate.u, rate.v);
        let need = |r: ShadingRate| {
            out.values(r)
                .map(|s| s.to_vec())
                .ok_or_else(|| Error::Value(format!("cannot extrapolate {rate}: missing {r}")))
        };
        let vals: Vec<f32> = if u == v {
            let a = need(ShadingRate::new(u / 2, v)?)?;
            let b = need(ShadingRate::new(u, v / 2)?)?;
            a.iter().zip(&b).map(|(&a, &b)| a.max(b)).collect()
        } else {
            let half = need(ShadingRate::new(u / 2, v / 2)?)?;
            let other = if u > v { need(ShadingRate::new(u / 2, v)?)? } else { need(ShadingRate::new(u, v / 2)?)? };
            half.iter().zip(&other).map(|(&h, &o)| (h * kappa).max(o)).collect()
        };
        out.set(rate, vals, Provenance::Extrapolated)?;
    }
    Ok(out)
}

/// Per-tile thresholds.
#[derive(Clone, Debug, PartialEq)]
pub enum Thresholds {
    Constant(f32),
    PerTile(Vec<f32>),
}

impl Thresholds {
    pub fn at(&self, tile: usize) -> f32 {
        match self {
            Thresholds::Constant(t) => *t,
            Thresholds::PerTile(v) => v[tile],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateDecisionMap {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub tile_size: usize,
    pub rates: Vec<ShadingRate>,
    pub thresholds: Thresholds,
}

impl RateDecisionMap {
    pub fn rate_at(&self, tx: usize, ty: usize) -> ShadingRate {
        self.rates[ty * self.tiles_x + tx]
    }

    /// One row of space-separated labels per tile row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in self.rates.chunks(self.tiles_x) {
            let labels: Vec<String> = row.iter().map(|r| r.label()).collect();
            s.push_str(&labels.join(" "));
            s.push('\n');
        }
        s
    }

    /// Histogram over [`ShadingRate::BY_INCREASING_COST`].
    pub fn histogram(&self) -> [usize; 7] {
        let mut h = [0; 7];
        for r in &self.rates {
            h[r.index()] += 1;
        }
        h
    }
}

/// Walks the rates from cheapest to full and returns the first whose
/// predicted error is strictly below the tile threshold; full rate otherwise.
/// Rates without a prediction are skipped.
pub fn choose_mode(preds: &TilePrediction, thresholds: &Thresholds, tile_size: usize) -> Result<RateDecisionMap> {
    if let Thresholds::PerTile(v) = thresholds {
        if v.len() != preds.tile_count() {
            return Err(Error::Dims(format!("{} thresholds for {} tiles", v.len(), preds.tile_count())));
        }
    }
    let rates = (0..preds.tile_count())
        .map(|tile| {
            let threshold = thresholds.at(tile);
            ShadingRate::BY_INCREASING_COST[..6]
                .iter()
                .copied()
                .find(|&r| preds.get(r, tile).is_some_and(|e| e < threshold))
                .unwrap_or(ShadingRate::R1X1)
        })
        .collect();
    Ok(RateDecisionMap {
        tiles_x: preds.tiles_x,
        tiles_y: preds.tiles_y,
        tile_size,
        rates,
        thresholds: thresholds.clone(),
    })
}

/// Thresholds matching how the model was trained. Weber-corrected models
/// compare against the constant sensitivity `t`; raw-metric models need the
/// per-tile luminance and use `t * (L + l)`.
pub fn threshold_for(metric: MetricId, jnd: &JndConfig, tile_luminance: Option<&[f32]>) -> Result<Thresholds> {
    match (metric.weber, tile_luminance) {
        (true, None) => Ok(Thresholds::Constant(jnd.t as f32)),
        (true, Some(_)) => Err(Error::Config(
            "Weber-corrected models already include luminance; a per-tile luminance threshold would double count it"
                .into(),
        )),
        (false, Some(lum)) => Ok(Thresholds::PerTile(
            lum.iter().map(|&l| (jnd.t * (l as f64 + jnd.l)) as f32).collect(),
        )),
        (false, None) => Err(Error::Config("raw-metric models need per-tile luminance for their threshold".into())),
    }
}

pub const COLOR_FULL: [u8; 3] = [255, 255, 255];
pub const COLOR_FINE: [u8; 3] = [0, 200, 0];
pub const COLOR_MEDIUM: [u8; 3] = [255, 220, 0];
pub const COLOR_COARSE: [u8; 3] = [220, 0, 0];

pub fn rate_color(rate: ShadingRate) -> [u8; 3] {
    match (rate.u, rate.v) {
        (1, 1) => COLOR_FULL,
        (1, 2) | (2, 1) => COLOR_FINE,
        (4, 4) => COLOR_COARSE,
        _ => COLOR_MEDIUM,
    }
}

/// RGB8 image with one `w x w` block per tile.
pub fn render_rate_map(decisions: &RateDecisionMap) -> crate::imageio::Rgb8Image {
    let w = decisions.tile_size;
    let (width, height) = (decisions.tiles_x * w, decisions.tiles_y * w);
    let mut pixels = vec![0u8; width * height * 3];
    for y in 0..height {
        for x in 0..width {
            let c = rate_color(decisions.rate_at(x / w, y / w));
            pixels[(y * width + x) * 3..][..3].copy_from_slice(&c);
        }
    }
    crate::imageio::Rgb8Image { width, height, pixels }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(vals: &[(ShadingRate, f32)]) -> TilePrediction {
        let mut p = TilePrediction::new(1, 1);
        for &(r, v) in vals {
            p.set(r, vec![v], Provenance::Predicted).unwrap();
        }
        p
    }

    #[test]
    fn rates_parse_and_order() {
        assert_eq!("2x4".parse::<ShadingRate>().unwrap(), ShadingRate::R2X4);
        assert!("3x1".parse::<ShadingRate>().is_err());
        assert!("22".parse::<ShadingRate>().is_err());
        assert_eq!(parse_rate_list("1x2,2x1,2x4,4x2").unwrap(), ShadingRate::PREDICTED.to_vec());
        assert_eq!(ShadingRate::R4X4.cost_rank(), 0);
        assert_eq!(ShadingRate::R1X1.cost_rank(), 6);
    }

    #[test]
    fn extrapolation_examples() {
        let cfg = ExtrapolationConfig::default();
        let p = table(&[
            (ShadingRate::R1X2, 0.1),
            (ShadingRate::R2X1, 0.2),
            (ShadingRate::R2X4, 0.213),
            (ShadingRate::R4X2, 0.426),
        ]);
        let e = extrapolate_rates(&p, &cfg).unwrap();
        assert_eq!(e.get(ShadingRate::R2X2, 0), Some(0.2));
        assert_eq!(e.get(ShadingRate::R4X4, 0), Some(0.426));
        assert_eq!(e.get(ShadingRate::R2X4, 0), Some(0.213));
        assert_eq!(e.provenance(ShadingRate::R2X2), Some(Provenance::Extrapolated));
        assert_eq!(e.provenance(ShadingRate::R4X2), Some(Provenance::Predicted));

        let zeros = table(&[
            (ShadingRate::R1X2, 0.0),
            (ShadingRate::R2X1, 0.0),
            (ShadingRate::R2X4, 0.0),
            (ShadingRate::R4X2, 0.0),
        ]);
        let e = extrapolate_rates(&zeros, &cfg).unwrap();
        for r in ShadingRate::BY_INCREASING_COST {
            assert_eq!(e.get(r, 0), Some(0.0));
        }
    }

    #[test]
    fn extrapolation_from_two_channels() {
        let p = table(&[(ShadingRate::R1X2, 0.1), (ShadingRate::R2X1, 0.05)]);
        let e = extrapolate_rates(&p, &ExtrapolationConfig::default()).unwrap();
        // 2x4 = max(kappa * Y[1x2], Y[2x2]); 4x2 = max(kappa * Y[2x1], Y[2x2])
        assert_eq!(e.get(ShadingRate::R2X4, 0), Some((0.1f32 * 2.13).max(0.1)));
        assert_eq!(e.get(ShadingRate::R4X2, 0), Some((0.05f32 * 2.13).max(0.1)));
        assert!(extrapolate_rates(&table(&[(ShadingRate::R1X2, 0.1)]), &ExtrapolationConfig::default()).is_err());
    }

    #[test]
    fn choose_mode_examples() {
        let p = table(&[
            (ShadingRate::R4X4, 0.5),
            (ShadingRate::R4X2, 0.3),
            (ShadingRate::R2X4, 0.35),
            (ShadingRate::R2X2, 0.2),
            (ShadingRate::R2X1, 0.1),
            (ShadingRate::R1X2, 0.12),
        ]);
        let pick = |t: f32| choose_mode(&p, &Thresholds::Constant(t), 16).unwrap().rates[0];
        assert_eq!(pick(0.25), ShadingRate::R2X2);
        assert_eq!(pick(0.05), ShadingRate::R1X1);
        assert_eq!(pick(0.6), ShadingRate::R4X4);
        // strict comparison
        assert_eq!(pick(0.5), ShadingRate::R4X2);
    }

    #[test]
    fn thresholds() {
        let jnd = JndConfig { t: 0.25, l: 0.1 };
        let weber = MetricId { base: crate::metrics::BaseMetric::Sflip, weber: true };
        let raw = MetricId { weber: false, ..weber };
        assert_eq!(threshold_for(weber, &jnd, None).unwrap(), Thresholds::Constant(0.25));
        assert!(threshold_for(weber, &jnd, Some(&[0.3])).is_err());
        assert!(threshold_for(raw, &jnd, None).is_err());
        match threshold_for(raw, &jnd, Some(&[0.3])).unwrap() {
            Thresholds::PerTile(v) => assert!((v[0] - 0.1).abs() < 1e-7),
            other => panic!("{other:?}"),
        }
        let dark = threshold_for(raw, &JndConfig { t: 0.25, l: 0.0 }, Some(&[0.0])).unwrap();
        assert_eq!(dark, Thresholds::PerTile(vec![0.0]));
        let zero_err = table(&[(ShadingRate::R4X4, 0.0)]);
        assert_eq!(choose_mode(&zero_err, &dark, 16).unwrap().rates[0], ShadingRate::R1X1);
    }

    #[test]
    fn rate_map_rendering() {
        let map = RateDecisionMap {
            tiles_x: 2,
            tiles_y: 2,
            tile_size: 4,
            rates: vec![ShadingRate::R1X1, ShadingRate::R4X4, ShadingRate::R4X4, ShadingRate::R1X1],
            thresholds: Thresholds::Constant(0.1),
        };
        let img = render_rate_map(&map);
        assert_eq!((img.width, img.height), (8, 8));
        assert_eq!(img.pixel(0, 0), COLOR_FULL);
        assert_eq!(img.pixel(5, 1), COLOR_COARSE);
        assert_eq!(img.pixel(1, 6), COLOR_COARSE);
        assert_eq!(img.pixel(7, 7), COLOR_FULL);
        assert_eq!(map.to_text(), "1x1 4x4\n4x4 1x1\n");
        assert_eq!(rate_color(ShadingRate::R2X1), COLOR_FINE);
        assert_eq!(rate_color(ShadingRate::R2X4), COLOR_MEDIUM);
    }
}
