//! Offline VRS demonstration: predicted rate maps against ground truth.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use synthscene::capture::{assemble_input, compute_targets, render_frames, CaptureConfig};
use synthscene::Scene;
use vrsnet_core::imageio::Rgb8Image;
use vrsnet_core::metrics::{self, JndConfig, MetricId, TileMode};
use vrsnet_core::network::{predict_tiles, NetworkModel};
use vrsnet_core::vrs::{
    choose_mode, extrapolate_rates, render_rate_map, threshold_for, ExtrapolationConfig, Provenance, RateDecisionMap,
    ShadingRate, TilePrediction,
};
use vrsnet_core::TensorBuffer;

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct DemoConfig {
    pub scene: Scene,
    pub threshold: f64,
    pub environment_luminance: f64,
    pub frames: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub extrapolation: ExtrapolationConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameStats {
    pub frame: usize,
    /// Tiles where the predicted rate equals the ground-truth choice.
    pub agreement: f64,
    /// Tiles whose predicted rate is no coarser than the ground-truth choice.
    pub conservative: f64,
    /// Shading samples relative to full rate.
    pub shading_cost: f64,
    pub mean_tile_error: f64,
    pub predicted_histogram: [usize; 7],
    pub truth_histogram: [usize; 7],
}

fn tile_luminance(reference: &TensorBuffer, w: usize) -> Result<Vec<f32>> {
    let lum = metrics::luminance(reference)?;
    Ok(metrics::tile_aggregate(&lum, w, TileMode::Mean)?.into_vec())
}

/// Picks each tile's pixels from the render at its decided rate.
pub fn compose_vrs(decisions: &RateDecisionMap, renders: &[(ShadingRate, &TensorBuffer)]) -> Result<TensorBuffer> {
    let first = renders.first().ok_or_else(|| Error::Config("no renders to compose".into()))?.1;
    let dims = first.dims().to_vec();
    let (h, width) = (dims[1], dims[2]);
    let w = decisions.tile_size;
    let mut out = TensorBuffer::zeros(&dims)?;
    for ty in 0..decisions.tiles_y {
        for tx in 0..decisions.tiles_x {
            let rate = decisions.rate_at(tx, ty);
            let src = renders
                .iter()
                .find(|(r, _)| *r == rate)
                .ok_or_else(|| Error::Config(format!("no render for rate {rate}")))?
                .1;
            for c in 0..3 {
                for y in ty * w..(ty + 1) * w {
                    let row = c * h * width + y * width + tx * w;
                    out.data_mut()[row..row + w].copy_from_slice(&src.data()[row..row + w]);
                }
            }
        }
    }
    Ok(out)
}

fn truth_table(frames_targets: &TensorBuffer, rates: &[ShadingRate], tiles_x: usize, tiles_y: usize) -> Result<TilePrediction> {
    let mut t = TilePrediction::new(tiles_x, tiles_y);
    for (plane, &r) in frames_targets.data().chunks(tiles_x * tiles_y).zip(rates) {
        t.set(r, plane.to_vec(), Provenance::Predicted)?;
    }
    Ok(t)
}

pub fn run_demo(model: &NetworkModel, cfg: &DemoConfig, out_dir: &Path) -> Result<Vec<FrameStats>> {
    let metric: MetricId = model.metric.ok_or_else(|| Error::Config("model does not record its metric".into()))?;
    if model.rates.is_empty() {
        return Err(Error::Config("model does not record its output rates".into()));
    }
    fs::create_dir_all(out_dir)?;
    let w = model.config.tile_size;
    let jnd = JndConfig { t: cfg.threshold, l: cfg.environment_luminance };
    let all_rates: Vec<ShadingRate> = ShadingRate::BY_INCREASING_COST.to_vec();
    let mut capture = CaptureConfig::new(cfg.scene.clone(), metric, cfg.seed);
    capture.width = cfg.width;
    capture.height = cfg.height;
    capture.tile_size = w;
    capture.jnd = jnd;
    capture.rates = all_rates.clone();
    capture.count = cfg.frames.max(1);
    capture.validate()?;
    let (tiles_x, tiles_y) = (cfg.width / w, cfg.height / w);
    let mut stats = Vec::with_capacity(cfg.frames);
    for frame in 0..cfg.frames {
        let frames = render_frames(&capture, frame)?;
        let input = assemble_input(&frames)?;
        let pred = predict_tiles(model, &input)?;
        let table = extrapolate_rates(&pred.to_tile_prediction()?, &cfg.extrapolation)?;
        let lum = tile_luminance(&frames.reference, w)?;
        let thresholds = threshold_for(metric, &jnd, (!metric.weber).then_some(lum.as_slice()))?;
        let decisions = choose_mode(&table, &thresholds, w)?;
        let truth_targets = compute_targets(&frames, metric, &capture)?;
        let truth = choose_mode(&truth_table(&truth_targets, &all_rates, tiles_x, tiles_y)?, &thresholds, w)?;

        let renders: Vec<(ShadingRate, &TensorBuffer)> = all_rates.iter().copied().zip(frames.reduced.iter()).collect();
        let vrs_image = compose_vrs(&decisions, &renders)?;
        let err = metrics::compute(metric, &frames.reference, &vrs_image, &jnd)?;
        let tiles = metrics::tile_aggregate(&err.values, w, TileMode::Mean)?;

        let n = decisions.rates.len() as f64;
        let agree = decisions.rates.iter().zip(&truth.rates).filter(|(a, b)| a == b).count() as f64 / n;
        let conservative = decisions
            .rates
            .iter()
            .zip(&truth.rates)
            .filter(|(a, b)| a.u * a.v <= b.u * b.v)
            .count() as f64
            / n;
        let cost = decisions.rates.iter().map(|r| 1.0 / (r.u * r.v) as f64).sum::<f64>() / n;
        let mean_err = tiles.data().iter().map(|&v| v as f64).sum::<f64>() / tiles.len() as f64;

        let prefix = out_dir.join(format!("frame_{frame:03}"));
        Rgb8Image::from_planar(&frames.reference)?.write_png(prefix.with_extension("reference.png"))?;
        Rgb8Image::from_planar(&vrs_image)?.write_png(prefix.with_extension("vrs.png"))?;
        render_rate_map(&decisions).write_png(prefix.with_extension("ratemap.png"))?;
        render_rate_map(&truth).write_png(prefix.with_extension("truth.png"))?;
        stats.push(FrameStats {
            frame,
            agreement: agree,
            conservative,
            shading_cost: cost,
            mean_tile_error: mean_err,
            predicted_histogram: decisions.histogram(),
            truth_histogram: truth.histogram(),
        });
    }
    fs::write(out_dir.join("stats.txt"), stats_text(&stats))?;
    Ok(stats)
}

pub fn stats_text(stats: &[FrameStats]) -> String {
    let mut s = String::new();
    let labels: Vec<String> = (0..7).map(|i| rate_label(i)).collect();
    let _ = writeln!(s, "histogram_order={}", labels.join(","));
    for f in stats {
        let _ = writeln!(
            s,
            "frame={} agreement={:.6} conservative={:.6} shading_cost={:.6} mean_tile_error={:.6e} predicted={:?} truth={:?}",
            f.frame, f.agreement, f.conservative, f.shading_cost, f.mean_tile_error, f.predicted_histogram, f.truth_histogram
        );
    }
    if !stats.is_empty() {
        let n = stats.len() as f64;
        let mean = |g: fn(&FrameStats) -> f64| stats.iter().map(g).sum::<f64>() / n;
        let _ = writeln!(
            s,
            "mean agreement={:.6} conservative={:.6} shading_cost={:.6} mean_tile_error={:.6e}",
            mean(|f| f.agreement),
            mean(|f| f.conservative),
            mean(|f| f.shading_cost),
            mean(|f| f.mean_tile_error)
        );
    }
    s
}

fn rate_label(index: usize) -> String {
    ShadingRate::BY_INCREASING_COST
        .iter()
        .find(|r| r.index() == index)
        .map(|r| r.label())
        .unwrap_or_default()
}
