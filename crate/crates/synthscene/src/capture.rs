//! Training-data capture and the on-disk dataset layout.
//!
//! ```text
//! <dir>/manifest.txt
//! <dir>/sample_00000/input.pten     (4, H, W)
//! <dir>/sample_00000/targets.pten   (R, H / w, W / w)
//! <dir>/sample_00000/meta.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use tensor_nn::pten;
use vrsnet_core::metrics::{self, JndConfig, MetricId, TileMode};
use vrsnet_core::network::Sample;
use vrsnet_core::vrs::{self, ShadingRate};
use vrsnet_core::TensorBuffer;

use crate::camera::Camera;
use crate::gbuffer::{render_gbuffer, GBufferFrame};
use crate::reproject::{reproject, unseen_fraction};
use crate::sampler::{sample_viewpoint_pair, SamplerConfig, ViewpointPair};
use crate::scene::Scene;
use crate::shade::shade;
use crate::{Error, Result};

pub const DATASET_VERSION: u32 = 1;
pub const CHANNEL_ORDER: [&str; 4] = ["mask", "reprojected_g", "diffuse_g", "normal_z"];
const PARALLEL_CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct CaptureConfig {
    pub scene: Scene,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
    pub metric: MetricId,
    pub jnd: JndConfig,
    pub rates: Vec<ShadingRate>,
    pub seed: u64,
    pub tile_mode: TileMode,
    pub sampler: SamplerConfig,
}

impl CaptureConfig {
    pub fn new(scene: Scene, metric: MetricId, seed: u64) -> Self {
        Self {
            scene,
            count: 1000,
            width: 256,
            height: 256,
            tile_size: 16,
            metric,
            jnd: JndConfig::default(),
            rates: ShadingRate::PREDICTED.to_vec(),
            seed,
            tile_mode: TileMode::Mean,
            sampler: SamplerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.jnd.validate()?;
        if self.count == 0 {
            return Err(Error::Dataset("count must be at least 1".into()));
        }
        if self.rates.is_empty() {
            return Err(Error::Dataset("at least one shading rate is required".into()));
        }
        let w = self.tile_size;
        if w == 0 || self.width % w != 0 || self.height % w != 0 {
            return Err(Error::Dims(format!("{}x{} is not divisible by tile size {w}", self.width, self.height)));
        }
        for r in &self.rates {
            if self.width % r.u != 0 || self.height % r.v != 0 {
                return Err(Error::Dims(format!("resolution not divisible by rate {}", r.label())));
            }
        }
        Ok(())
    }
}

/// Independent stream for sample `index` of a capture seeded with `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Everything rendered for one viewpoint pair.
#[derive(Clone, Debug)]
pub struct RenderedFrames {
    pub pair: ViewpointPair,
    pub current: GBufferFrame,
    pub reference: TensorBuffer,
    pub reprojected: TensorBuffer,
    pub mask: TensorBuffer,
    /// One image per capture rate, in capture order.
    pub reduced: Vec<TensorBuffer>,
}

pub fn render_frames(cfg: &CaptureConfig, index: usize) -> Result<RenderedFrames> {
    let mut rng = sample_rng(cfg.seed, index);
    let pair = sample_viewpoint_pair(&cfg.scene, &mut rng, &cfg.sampler)?;
    let (w, h) = (cfg.width, cfg.height);
    let full = ShadingRate::R1X1;
    let (light, bg) = (&cfg.scene.light, cfg.scene.background);
    let prev = render_gbuffer(&cfg.scene, &pair.prev, w, h)?;
    let prev_image = shade(&prev, full, light, bg)?;
    let current = render_gbuffer(&cfg.scene, &pair.cur, w, h)?;
    let (reprojected, mask) = reproject(&prev, &prev_image, &current)?;
    let reference = shade(&current, full, light, bg)?;
    let reduced = cfg.rates.iter().map(|&r| shade(&current, r, light, bg)).collect::<Result<Vec<_>>>()?;
    Ok(RenderedFrames { pair, current, reference, reprojected, mask, reduced })
}

/// `(R, H / w, W / w)` tile targets of `metric` for each reduced render.
pub fn compute_targets(frames: &RenderedFrames, metric: MetricId, cfg: &CaptureConfig) -> Result<TensorBuffer> {
    let mut planes = Vec::with_capacity(frames.reduced.len());
    for img in &frames.reduced {
        let map = metrics::compute(metric, &frames.reference, img, &cfg.jnd)?;
        planes.push(metrics::tile_aggregate(&map.values, cfg.tile_size, cfg.tile_mode)?);
    }
    let refs: Vec<&TensorBuffer> = planes.iter().collect();
    let (th, tw) = (cfg.height / cfg.tile_size, cfg.width / cfg.tile_size);
    Ok(TensorBuffer::stack(&refs)?.reshape(&[refs.len(), th, tw])?)
}

/// `(4, H, W)` network input in [`CHANNEL_ORDER`].
pub fn assemble_input(frames: &RenderedFrames) -> Result<TensorBuffer> {
    let g = &frames.current;
    let hw = g.width * g.height;
    let mut data = Vec::with_capacity(4 * hw);
    data.extend_from_slice(frames.mask.data());
    data.extend_from_slice(&frames.reprojected.data()[hw..2 * hw]);
    data.extend_from_slice(&g.diffuse[1]);
    data.extend_from_slice(&g.normal[2]);
    Ok(TensorBuffer::from_vec(&[4, g.height, g.width], data)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapturedSample {
    pub index: usize,
    /// `(4, H, W)`.
    pub input: TensorBuffer,
    /// `(R, H / w, W / w)`.
    pub targets: TensorBuffer,
    pub prev: Camera,
    pub cur: Camera,
    pub seed: u64,
    pub metric: MetricId,
    pub attempts: usize,
    pub unseen_fraction: f64,
}

impl CapturedSample {
    pub fn from_frames(frames: &RenderedFrames, metric: MetricId, cfg: &CaptureConfig, index: usize) -> Result<Self> {
        Ok(Self {
            index,
            input: assemble_input(frames)?,
            targets: compute_targets(frames, metric, cfg)?,
            prev: frames.pair.prev.clone(),
            cur: frames.pair.cur.clone(),
            seed: cfg.seed,
            metric,
            attempts: frames.pair.attempts,
            unseen_fraction: unseen_fraction(&frames.current, &frames.mask),
        })
    }

    /// Batch-of-one tensors for the network.
    pub fn to_network_sample(&self) -> Result<Sample> {
        let add_batch = |t: &TensorBuffer| {
            let d = t.dims();
            t.clone().reshape(&[1, d[0], d[1], d[2]])
        };
        Ok(Sample { input: add_batch(&self.input)?.into(), target: add_batch(&self.targets)? })
    }

    fn meta_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "index={}", self.index);
        let _ = writeln!(s, "capture_seed={}", self.seed);
        let _ = writeln!(s, "stream={}", self.index);
        let _ = writeln!(s, "metric={}", self.metric);
        let _ = writeln!(s, "attempts={}", self.attempts);
        let _ = writeln!(s, "unseen_fraction={:.17e}", self.unseen_fraction);
        let _ = writeln!(s, "prev_camera={}", self.prev.to_text());
        let _ = writeln!(s, "cur_camera={}", self.cur.to_text());
        s
    }
}

pub fn capture_sample(cfg: &CaptureConfig, index: usize) -> Result<CapturedSample> {
    let frames = render_frames(cfg, index)?;
    CapturedSample::from_frames(&frames, cfg.metric, cfg, index)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub scene: String,
    pub scene_seed: u64,
    pub capture_seed: u64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
    pub rates: Vec<ShadingRate>,
    pub metric: MetricId,
    pub jnd: JndConfig,
    pub tile_mode: TileMode,
    pub channel_order: Vec<String>,
    /// Mean over all targets.
    pub mu_y: f64,
    pub mu_y_per_rate: Vec<f64>,
    pub mean_unseen_fraction: f64,
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",")
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "version={}", self.version);
        let _ = writeln!(s, "scene={}", self.scene);
        let _ = writeln!(s, "scene_seed={}", self.scene_seed);
        let _ = writeln!(s, "capture_seed={}", self.capture_seed);
        let _ = writeln!(s, "count={}", self.count);
        let _ = writeln!(s, "resolution={}x{}", self.width, self.height);
        let _ = writeln!(s, "w={}", self.tile_size);
        let _ = writeln!(s, "rates={}", vrs::format_rate_list(&self.rates));
        let _ = writeln!(s, "metric={}", self.metric);
        let _ = writeln!(s, "jnd_t={:.17e}", self.jnd.t);
        let _ = writeln!(s, "jnd_l={:.17e}", self.jnd.l);
        let _ = writeln!(s, "tile_mode={}", self.tile_mode);
        let _ = writeln!(s, "channel_order={}", self.channel_order.join(","));
        let _ = writeln!(s, "mu_y={:.17e}", self.mu_y);
        let _ = writeln!(s, "mu_y_per_rate={}", fmt_list(&self.mu_y_per_rate));
        let _ = writeln!(s, "mean_unseen_fraction={:.17e}", self.mean_unseen_fraction);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let get = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| Error::Dataset(format!("manifest lacks {k}")));
        let bad = |k: &str| Error::Dataset(format!("manifest field {k} is malformed"));
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|_| bad(k));
        let int = |k: &str| get(k)?.parse::<u64>().map_err(|_| bad(k));
        let (w, h) = get("resolution")?.split_once('x').ok_or_else(|| bad("resolution"))?;
        let per_rate = get("mu_y_per_rate")?;
        Ok(Self {
            version: int("version")? as u32,
            scene: get("scene")?.to_string(),
            scene_seed: int("scene_seed")?,
            capture_seed: int("capture_seed")?,
            count: int("count")? as usize,
            width: w.parse().map_err(|_| bad("resolution"))?,
            height: h.parse().map_err(|_| bad("resolution"))?,
            tile_size: int("w")? as usize,
            rates: vrs::parse_rate_list(get("rates")?)?,
            metric: get("metric")?.parse()?,
            jnd: JndConfig { t: num("jnd_t")?, l: num("jnd_l")? },
            tile_mode: get("tile_mode")?.parse()?,
            channel_order: get("channel_order")?.split(',').map(str::to_string).collect(),
            mu_y: num("mu_y")?,
            mu_y_per_rate: if per_rate.is_empty() {
                Vec::new()
            } else {
                per_rate.split(',').map(|v| v.parse().map_err(|_| bad("mu_y_per_rate"))).collect::<Result<_>>()?
            },
            mean_unseen_fraction: num("mean_unseen_fraction")?,
        })
    }
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Dataset(format!("line without '=': {l:?}")))
        })
        .collect()
}

pub fn sample_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("sample_{index:05}"))
}

fn write_sample(root: &Path, s: &CapturedSample) -> Result<()> {
    let dir = sample_dir(root, s.index);
    fs::create_dir_all(&dir)?;
    pten::write(dir.join("input.pten"), &s.input)?;
    pten::write(dir.join("targets.pten"), &s.targets)?;
    fs::write(dir.join("meta.txt"), s.meta_text())?;
    Ok(())
}

#[derive(Default)]
struct TargetStats {
    per_rate: Vec<(f64, usize)>,
    unseen: f64,
}

impl TargetStats {
    fn add(&mut self, s: &CapturedSample) {
        let r = s.targets.dims()[0];
        self.per_rate.resize(r, (0.0, 0));
        for (c, slot) in self.per_rate.iter_mut().enumerate() {
            let plane = s.targets.plane(0, c);
            slot.0 += plane.iter().map(|&v| v as f64).sum::<f64>();
            slot.1 += plane.len();
        }
        self.unseen += s.unseen_fraction;
    }

    fn finish(&self, cfg: &CaptureConfig, metric: MetricId) -> Manifest {
        let total: f64 = self.per_rate.iter().map(|p| p.0).sum();
        let n: usize = self.per_rate.iter().map(|p| p.1).sum();
        Manifest {
            version: DATASET_VERSION,
            scene: cfg.scene.name.clone(),
            scene_seed: cfg.scene.seed,
            capture_seed: cfg.seed,
            count: cfg.count,
            width: cfg.width,
            height: cfg.height,
            tile_size: cfg.tile_size,
            rates: cfg.rates.clone(),
            metric,
            jnd: cfg.jnd,
            tile_mode: cfg.tile_mode,
            channel_order: CHANNEL_ORDER.iter().map(|s| s.to_string()).collect(),
            mu_y: total / n as f64,
            mu_y_per_rate: self.per_rate.iter().map(|(s, c)| s / *c as f64).collect(),
            mean_unseen_fraction: self.unseen / cfg.count as f64,
        }
    }
}

/// Captures `cfg.count` samples into `out_dir` and writes the manifest.
pub fn capture_dataset(cfg: &CaptureConfig, out_dir: &Path) -> Result<Manifest> {
    Ok(capture_datasets(cfg, &[(cfg.metric, out_dir)])?.remove(0))
}

/// Captures one dataset per `(metric, dir)` from a single set of renders.
pub fn capture_datasets(cfg: &CaptureConfig, outputs: &[(MetricId, &Path)]) -> Result<Vec<Manifest>> {
    cfg.validate()?;
    for (_, dir) in outputs {
        fs::create_dir_all(dir)?;
    }
    let mut stats: Vec<TargetStats> = outputs.iter().map(|_| TargetStats::default()).collect();
    let indices: Vec<usize> = (0..cfg.count).collect();
    for chunk in indices.chunks(PARALLEL_CHUNK) {
        let captured: Vec<Vec<CapturedSample>> = chunk
            .par_iter()
            .map(|&i| {
                let frames = render_frames(cfg, i)?;
                outputs.iter().map(|(m, _)| CapturedSample::from_frames(&frames, *m, cfg, i)).collect()
            })
            .collect::<Result<_>>()?;
        for per_metric in captured {
            for ((sample, (_, dir)), st) in per_metric.iter().zip(outputs).zip(&mut stats) {
                write_sample(dir, sample)?;
                st.add(sample);
            }
        }
    }
    let mut manifests = Vec::new();
    for ((metric, dir), st) in outputs.iter().zip(&stats) {
        let m = st.finish(cfg, *metric);
        fs::write(dir.join("manifest.txt"), m.to_text())?;
        manifests.push(m);
    }
    Ok(manifests)
}

/// A dataset read back from disk. Cameras are kept as text.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredSample {
    pub index: usize,
    pub input: TensorBuffer,
    pub targets: TensorBuffer,
    pub meta: BTreeMap<String, String>,
}

impl StoredSample {
    pub fn to_network_sample(&self) -> Result<Sample> {
        let add_batch = |t: &TensorBuffer| {
            let d = t.dims();
            t.clone().reshape(&[1, d[0], d[1], d[2]])
        };
        Ok(Sample { input: add_batch(&self.input)?.into(), target: add_batch(&self.targets)? })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<StoredSample>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let m = Manifest::parse(&fs::read_to_string(dir.join("manifest.txt"))?)?;
    if m.version != DATASET_VERSION {
        return Err(Error::Dataset(format!("unsupported dataset version {}", m.version)));
    }
    Ok(m)
}

pub fn load_sample(dir: &Path, manifest: &Manifest, index: usize) -> Result<StoredSample> {
    if index >= manifest.count {
        return Err(Error::Dataset(format!("sample {index} out of range (count {})", manifest.count)));
    }
    let sdir = sample_dir(dir, index);
    let input = pten::read(sdir.join("input.pten"))?;
    let targets = pten::read(sdir.join("targets.pten"))?;
    let (th, tw) = (manifest.height / manifest.tile_size, manifest.width / manifest.tile_size);
    if input.dims() != [CHANNEL_ORDER.len(), manifest.height, manifest.width] || targets.dims() != [manifest.rates.len(), th, tw] {
        return Err(Error::Dataset(format!(
            "sample {index} has input {:?} and targets {:?}",
            input.dims(),
            targets.dims()
        )));
    }
    let meta = parse_kv(&fs::read_to_string(sdir.join("meta.txt"))?)?;
    Ok(StoredSample { index, input, targets, meta })
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let samples = (0..manifest.count).map(|i| load_sample(dir, &manifest, i)).collect::<Result<_>>()?;
    Ok(Dataset { manifest, samples })
}
