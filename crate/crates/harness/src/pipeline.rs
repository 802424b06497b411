//! Dataset loading and the desk-scale capture, train and evaluate run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use synthscene::capture::{load_sample, read_manifest, CaptureConfig};
use synthscene::{capture_datasets, scene_library, Manifest, SceneKind};
use tensor_nn::RmsProp;
use vrsnet_core::metrics::{BaseMetric, MetricId};
use vrsnet_core::network::{build_network, NetworkConfig, Sample, TrainConfig, Trainer};
use vrsnet_core::transforms::{TransformKind, TransformSpec};
use vrsnet_core::TensorBuffer;

use crate::eval::{evaluate, record_training_set, CaptureId, EvalReport, EvalSet};
use crate::{Error, Result};

/// A dataset as network samples, keyed by capture index.
pub struct LoadedDataset {
    pub manifest: Manifest,
    pub samples: Vec<(usize, Sample)>,
}

impl LoadedDataset {
    pub fn id(&self) -> CaptureId {
        CaptureId::from_manifest(&self.manifest)
    }

    pub fn metric(&self) -> MetricId {
        self.manifest.metric
    }

    pub fn eval_set(&self, range: std::ops::Range<usize>) -> EvalSet<'_> {
        EvalSet { id: self.id(), metric: self.metric(), samples: self.samples[range].iter().map(|(i, s)| (*i, s)).collect() }
    }

    pub fn network_samples(&self, range: std::ops::Range<usize>) -> Vec<Sample> {
        self.samples[range].iter().map(|(_, s)| s.clone()).collect()
    }
}

fn with_batch(t: TensorBuffer) -> Result<TensorBuffer> {
    let d = t.dims().to_vec();
    Ok(t.reshape(&[1, d[0], d[1], d[2]])?)
}

/// Loads `dir`. When `share` holds the same capture under another metric,
/// identical inputs are kept once in memory.
pub fn load_network_dataset(dir: &Path, share: Option<&LoadedDataset>) -> Result<LoadedDataset> {
    let manifest = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let s = load_sample(dir, &manifest, i)?;
        let input = with_batch(s.input)?;
        let shared = share.and_then(|o| o.samples.get(i)).filter(|(j, o)| *j == i && *o.input == input);
        let input = match shared {
            Some((_, o)) => Arc::clone(&o.input),
            None => Arc::new(input),
        };
        samples.push((i, Sample { input, target: with_batch(s.targets)? }));
    }
    Ok(LoadedDataset { manifest, samples })
}

pub fn mean_target(data: &LoadedDataset, rate_channel: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (_, s) in &data.samples {
        let p = s.target.plane(0, rate_channel);
        sum += p.iter().map(|&v| v as f64).sum::<f64>();
        n += p.len();
    }
    sum / n as f64
}

#[derive(Clone, Debug)]
pub struct DeskConfig {
    pub out_dir: PathBuf,
    pub count: usize,
    pub holdout: usize,
    /// Samples captured on the diffuse and specular scenes for the per-scene comparison.
    pub side_count: usize,
    pub resolution: usize,
    pub metrics: Vec<MetricId>,
    pub capture_seed: u64,
    pub side_capture_seed: u64,
    pub model_seed: u64,
    pub train_seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub budget: Duration,
    /// Time kept free at the end of the budget for evaluation.
    pub eval_reserve: Duration,
}

impl DeskConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            count: 1000,
            holdout: 64,
            side_count: 64,
            resolution: 256,
            metrics: vec![MetricId::raw(BaseMetric::Mald), MetricId::raw(BaseMetric::Sflip)],
            capture_seed: 2024,
            side_capture_seed: 4048,
            model_seed: 7,
            train_seed: 11,
            epochs: 200,
            learning_rate: 1e-4,
            budget: Duration::from_secs(45 * 60),
            eval_reserve: Duration::from_secs(60),
        }
    }

    fn capture_dir(&self, kind: SceneKind, metric: MetricId) -> PathBuf {
        self.out_dir.join(format!("data_{}_{}", kind.name(), metric))
    }

    pub fn model_path(&self, metric: MetricId) -> PathBuf {
        self.out_dir.join(format!("model_{metric}.pnet"))
    }

    pub fn report_path(&self, metric: MetricId) -> PathBuf {
        self.out_dir.join(format!("report_{metric}.txt"))
    }
}

#[derive(Clone, Debug)]
pub struct MetricOutcome {
    pub metric: MetricId,
    pub epochs: usize,
    pub report: EvalReport,
}

impl MetricOutcome {
    pub fn r2(&self, scene: &str) -> Option<f64> {
        self.report.entry(scene).and_then(|e| e.r2)
    }

    pub fn r2_ceiling(&self, scene: &str) -> Option<f64> {
        self.report.entry(scene).and_then(|e| e.r2_ceiling)
    }
}

#[derive(Clone, Debug)]
pub struct DeskOutcome {
    pub outcomes: Vec<MetricOutcome>,
    pub capture_time: Duration,
    pub train_time: Duration,
    pub total_time: Duration,
    /// True when every model reached the configured epoch count.
    pub completed: bool,
}

impl DeskOutcome {
    pub fn min_epochs(&self) -> usize {
        self.outcomes.iter().map(|o| o.epochs).min().unwrap_or(0)
    }
}

fn capture_scene(cfg: &DeskConfig, kind: SceneKind, count: usize, seed: u64) -> Result<()> {
    let mut cc = CaptureConfig::new(scene_library(kind), cfg.metrics[0], seed);
    cc.count = count;
    cc.width = cfg.resolution;
    cc.height = cfg.resolution;
    let dirs: Vec<PathBuf> = cfg.metrics.iter().map(|&m| cfg.capture_dir(kind, m)).collect();
    let outputs: Vec<(MetricId, &Path)> = cfg.metrics.iter().copied().zip(dirs.iter().map(PathBuf::as_path)).collect();
    capture_datasets(&cc, &outputs)?;
    Ok(())
}

fn load_all(cfg: &DeskConfig, kind: SceneKind) -> Result<Vec<LoadedDataset>> {
    let mut out: Vec<LoadedDataset> = Vec::new();
    for &m in &cfg.metrics {
        let d = load_network_dataset(&cfg.capture_dir(kind, m), out.first())?;
        out.push(d);
    }
    Ok(out)
}

fn history_text(trainer: &Trainer) -> String {
    let mut s = String::new();
    for e in &trainer.history {
        let hold = e.holdout_loss.map_or("none".into(), |h| format!("{h:.9}"));
        let _ = writeln!(s, "epoch={} train_loss={:.9} holdout_loss={hold}", e.epoch, e.train_loss);
    }
    s
}

/// Captures the mixed scene plus diffuse and specular side sets, trains one
/// clamped-transform model per metric, and evaluates each on the mixed
/// holdout and both side sets.
///
/// Models train in lockstep, one epoch each per round. A round starts only if
/// it fits in the remaining budget at the slowest epoch time seen, so a slow
/// machine stops early with every model at the same epoch. `epoch_cap`, when set,
/// replaces the budget with an exact epoch count.
pub fn run_desk_scale(cfg: &DeskConfig, epoch_cap: Option<usize>, mut log: impl FnMut(&str)) -> Result<DeskOutcome> {
    if cfg.metrics.is_empty() || cfg.holdout == 0 || cfg.holdout >= cfg.count {
        return Err(Error::Config("desk run needs metrics and a holdout smaller than the capture".into()));
    }
    let start = Instant::now();
    fs::create_dir_all(&cfg.out_dir)?;
    capture_scene(cfg, SceneKind::Mixed, cfg.count, cfg.capture_seed)?;
    log(&format!("captured mixed scene in {:.1?}", start.elapsed()));
    for kind in [SceneKind::Diffuse, SceneKind::Specular] {
        capture_scene(cfg, kind, cfg.side_count, cfg.side_capture_seed)?;
    }
    let capture_time = start.elapsed();
    log(&format!("captured side scenes, total capture {capture_time:.1?}"));

    let mixed = load_all(cfg, SceneKind::Mixed)?;
    let diffuse = load_all(cfg, SceneKind::Diffuse)?;
    let specular = load_all(cfg, SceneKind::Specular)?;
    let n_train = cfg.count - cfg.holdout;
    let train_sets: Vec<Vec<Sample>> = mixed.iter().map(|d| d.network_samples(0..n_train)).collect();
    let holdouts: Vec<Vec<Sample>> = mixed.iter().map(|d| d.network_samples(n_train..cfg.count)).collect();

    let epochs = epoch_cap.unwrap_or(cfg.epochs).min(cfg.epochs);
    let train_cfg = TrainConfig {
        epochs,
        batch_size: 16,
        optimizer: RmsProp { learning_rate: cfg.learning_rate, ..RmsProp::default() },
        seed: cfg.train_seed,
    };
    let mut trainers = Vec::new();
    for (k, &metric) in cfg.metrics.iter().enumerate() {
        let mut model = build_network(&NetworkConfig::recommended(), cfg.model_seed)?;
        model.metric = Some(metric);
        model.rates = mixed[k].manifest.rates.clone();
        let indices: Vec<usize> = (0..n_train).collect();
        record_training_set(&mut model, &mixed[k].id(), &indices);
        let transform = TransformSpec::new(TransformKind::Clamped, 0.5)?;
        trainers.push(Trainer::new(model, &train_sets[k], &holdouts[k], transform, train_cfg.clone())?);
    }

    let train_start = Instant::now();
    let mut slowest_epoch = Duration::ZERO;
    while trainers.iter().any(|t| !t.finished()) {
        let round = slowest_epoch * trainers.len() as u32;
        if epoch_cap.is_none() && start.elapsed() + round + cfg.eval_reserve > cfg.budget {
            log("time budget reached");
            break;
        }
        for (k, t) in trainers.iter_mut().enumerate() {
            let e0 = Instant::now();
            let e = t.run_epoch()?;
            slowest_epoch = slowest_epoch.max(e0.elapsed());
            log(&format!(
                "{} epoch {} train {:.5} holdout {:.5} ({:.1?})",
                cfg.metrics[k],
                e.epoch + 1,
                e.train_loss,
                e.holdout_loss.unwrap_or(f64::NAN),
                start.elapsed()
            ));
        }
    }
    let train_time = train_start.elapsed();
    let completed = trainers.iter().all(|t| t.finished());

    let mut outcomes = Vec::new();
    for (k, t) in trainers.into_iter().enumerate() {
        let metric = cfg.metrics[k];
        let mut model = t.model.clone();
        model.provenance.insert("epochs".into(), t.epochs_done().to_string());
        model.save(cfg.model_path(metric))?;
        fs::write(cfg.out_dir.join(format!("history_{metric}.txt")), history_text(&t))?;
        let sets = [
            mixed[k].eval_set(n_train..cfg.count),
            diffuse[k].eval_set(0..cfg.side_count),
            specular[k].eval_set(0..cfg.side_count),
        ];
        let report = evaluate(&model, &sets)?;
        fs::write(cfg.report_path(metric), report.to_text())?;
        outcomes.push(MetricOutcome { metric, epochs: t.epochs_done(), report });
    }
    Ok(DeskOutcome { outcomes, capture_time, train_time, total_time: start.elapsed(), completed })
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn directory_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).map_err(|e| Error::Config(e.to_string()))?;
                out.insert(rel.display().to_string(), fs::read(&p)?);
            }
        }
    }
    Ok(out)
}
