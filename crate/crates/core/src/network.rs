//! The five-layer error predictor: architecture, loss, training and
//! per-tile inference.
//!
//! Blocks 1-4 are `conv3x3 -> batch norm -> ReLU -> max pool`, block 5 is
//! `conv3x3 -> max pool -> sigmoid`. Pooling factors multiply to the tile
//! size `w`, so an `H x W` input yields one prediction per `w x w` tile and
//! output channel.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensor_nn::{weights, Activation, BatchNormLayer, BnMode, ConvLayer, Layer, MaxPool, OptimizerState, RmsProp, Sequential};

use crate::metrics::MetricId;
use crate::transforms::{MuMode, TransformSpec};
use crate::vrs::{self, ShadingRate, TilePrediction};
use crate::{Error, Result, TensorBuffer};

pub const SUPPORTED_TILE_SIZES: [usize; 6] = [1, 2, 4, 8, 16, 32];
pub const GROUP_SCHEDULE: [usize; 5] = [1, 1, 4, 8, 1];
pub const TABLE3_POOLING_W16: [usize; 5] = [1, 2, 2, 2, 2];
pub const DEFAULT_LATENT: usize = 16;
pub const MODEL_FORMAT: &str = "vrsnet-model";
const PROVENANCE_PREFIX: &str = "train.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScheduleSource {
    /// Pool by 2 as early as possible until the remaining factor is <= 2.
    #[default]
    Eq1,
    /// The published `w = 16` table; other tile sizes fall back to `Eq1`.
    Table3,
}

impl fmt::Display for ScheduleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleSource::Eq1 => "eq1",
            ScheduleSource::Table3 => "table3",
        })
    }
}

impl FromStr for ScheduleSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq1" => Ok(Self::Eq1),
            "table3" => Ok(Self::Table3),
            other => Err(Error::Config(format!("unknown schedule source {other:?}"))),
        }
    }
}

/// Pooling factor per block. Block `i` (zero based) pools by 2 while
/// `w / 2^i > 2` and by `ceil(w / 2^i)` otherwise.
pub fn pooling_schedule(w: usize, source: ScheduleSource) -> Result<[usize; 5]> {
    if !SUPPORTED_TILE_SIZES.contains(&w) {
        return Err(Error::Config(format!("tile size {w} not in {SUPPORTED_TILE_SIZES:?}")));
    }
    if source == ScheduleSource::Table3 && w == 16 {
        return Ok(TABLE3_POOLING_W16);
    }
    let mut out = [1; 5];
    for (i, f) in out.iter_mut().enumerate() {
        let remaining = w as f64 / (1u64 << i) as f64;
        *f = if remaining > 2.0 { 2 } else { remaining.ceil() as usize };
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub tile_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub latent_channels: usize,
    pub pooling: [usize; 5],
    pub groups: [usize; 5],
    pub schedule_source: ScheduleSource,
}

impl NetworkConfig {
    pub fn new(tile_size: usize, in_channels: usize, out_channels: usize, source: ScheduleSource) -> Result<Self> {
        let cfg = Self {
            tile_size,
            in_channels,
            out_channels,
            latent_channels: DEFAULT_LATENT,
            pooling: pooling_schedule(tile_size, source)?,
            groups: GROUP_SCHEDULE,
            schedule_source: source,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Four inputs, four rate channels, 16x16 tiles.
    pub fn recommended() -> Self {
        Self::new(16, 4, 4, ScheduleSource::Eq1).expect("recommended config is valid")
    }

    /// `(in, out, groups)` of the five convolutions.
    pub fn conv_shapes(&self) -> [(usize, usize, usize); 5] {
        let (i, l, o, g) = (self.in_channels, self.latent_channels, self.out_channels, self.groups);
        [(i, l, g[0]), (l, l, g[1]), (l, l, g[2]), (l, l, g[3]), (l, o, g[4])]
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_TILE_SIZES.contains(&self.tile_size) {
            return Err(Error::Config(format!("tile size {} unsupported", self.tile_size)));
        }
        if self.pooling.iter().product::<usize>() != self.tile_size {
            return Err(Error::Config(format!(
                "pooling schedule {:?} does not multiply to {}",
                self.pooling, self.tile_size
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.latent_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        for (i, (cin, cout, g)) in self.conv_shapes().into_iter().enumerate() {
            if g == 0 || cin % g != 0 || cout % g != 0 {
                return Err(Error::Config(format!("layer {}: groups {g} do not divide {cin}->{cout}", i + 1)));
            }
        }
        Ok(())
    }

    fn to_meta(&self, meta: &mut BTreeMap<String, String>) {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        meta.insert("tile_size".into(), self.tile_size.to_string());
        meta.insert("in_channels".into(), self.in_channels.to_string());
        meta.insert("out_channels".into(), self.out_channels.to_string());
        meta.insert("latent_channels".into(), self.latent_channels.to_string());
        meta.insert("pooling".into(), list(&self.pooling));
        meta.insert("groups".into(), list(&self.groups));
        meta.insert("schedule_source".into(), self.schedule_source.to_string());
    }

    fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Config(format!("model metadata lacks {k}")));
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|e| Error::Config(format!("{k}: {e}"))) };
        let five = |k: &str| -> Result<[usize; 5]> {
            let v = get(k)?
                .split(',')
                .map(|x| x.parse::<usize>().map_err(|e| Error::Config(format!("{k}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            v.try_into().map_err(|_| Error::Config(format!("{k} needs five entries")))
        };
        let cfg = Self {
            tile_size: num("tile_size")?,
            in_channels: num("in_channels")?,
            out_channels: num("out_channels")?,
            latent_channels: num("latent_channels")?,
            pooling: five("pooling")?,
            groups: five("groups")?,
            schedule_source: get("schedule_source")?.parse()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Layer stack for `config` with freshly initialized weights.
pub fn build_layers(config: &NetworkConfig, seed: u64) -> Result<Sequential<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(19);
    for (i, (cin, cout, g)) in config.conv_shapes().into_iter().enumerate() {
        layers.push(Layer::Conv(ConvLayer::init(cin, cout, g, &mut rng)?));
        if i < 4 {
            layers.push(Layer::BatchNorm(BatchNormLayer::new(cout)));
            layers.push(Layer::Activation(Activation::Relu));
        }
        layers.push(Layer::MaxPool(MaxPool::new(config.pooling[i])?));
    }
    layers.push(Layer::Activation(Activation::Sigmoid));
    Ok(Sequential::new(layers))
}

/// Trained (or freshly built) predictor plus everything needed to interpret
/// its outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub config: NetworkConfig,
    pub net: Sequential<f32>,
    pub transform: TransformSpec,
    pub metric: Option<MetricId>,
    /// Shading rate of each output channel.
    pub rates: Vec<ShadingRate>,
    /// Free-form training record (data identity, seeds), stored under `train.` keys.
    pub provenance: BTreeMap<String, String>,
}

pub fn build_network(config: &NetworkConfig, seed: u64) -> Result<NetworkModel> {
    let rates = if config.out_channels == ShadingRate::PREDICTED.len() {
        ShadingRate::PREDICTED.to_vec()
    } else {
        Vec::new()
    };
    Ok(NetworkModel {
        config: config.clone(),
        net: build_layers(config, seed)?,
        transform: TransformSpec::identity(),
        metric: None,
        rates,
        provenance: BTreeMap::new(),
    })
}

impl NetworkModel {
    fn check_input(&self, inputs: &TensorBuffer) -> Result<()> {
        let (_, c, h, w) = inputs.nchw();
        let t = self.config.tile_size;
        if inputs.rank() != 4 || c != self.config.in_channels {
            return Err(Error::Dims(format!(
                "model expects (N, {}, H, W) input, got {:?}",
                self.config.in_channels,
                inputs.dims()
            )));
        }
        if h % t != 0 || w % t != 0 {
            return Err(Error::Dims(format!("input {h}x{w} is not divisible by tile size {t}")));
        }
        Ok(())
    }

    /// Transformed-space predictions `(N, out, H / w, W / w)`.
    pub fn forward(&self, inputs: &TensorBuffer, mode: BnMode) -> Result<TensorBuffer> {
        self.check_input(inputs)?;
        Ok(self.net.forward(inputs, mode)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut meta = BTreeMap::new();
        meta.insert("format".into(), MODEL_FORMAT.into());
        self.config.to_meta(&mut meta);
        self.transform.to_meta(&mut meta);
        if let Some(m) = self.metric {
            meta.insert("metric".into(), m.to_string());
        }
        meta.insert("rates".into(), vrs::format_rate_list(&self.rates));
        for (k, v) in &self.provenance {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Config(format!("provenance entry {k:?} is not a single key=value line")));
            }
            meta.insert(format!("{PROVENANCE_PREFIX}{k}"), v.clone());
        }
        Ok(weights::save(&self.net, &meta)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (net, meta) = weights::load(bytes)?;
        if meta.get("format").map(String::as_str) != Some(MODEL_FORMAT) {
            return Err(Error::Config("weights file is not a predictor model".into()));
        }
        let config = NetworkConfig::from_meta(&meta)?;
        let expected = build_layers(&config, 0)?;
        let same_shape = expected.layers.len() == net.layers.len()
            && expected.layers.iter().zip(&net.layers).all(|(a, b)| match (a, b) {
                (Layer::Conv(x), Layer::Conv(y)) => (x.in_channels, x.out_channels, x.groups) == (y.in_channels, y.out_channels, y.groups),
                (Layer::BatchNorm(x), Layer::BatchNorm(y)) => x.channels() == y.channels(),
                (Layer::Activation(x), Layer::Activation(y)) => x == y,
                (Layer::MaxPool(x), Layer::MaxPool(y)) => x == y,
                _ => false,
            });
        if !same_shape {
            return Err(Error::Config("stored layers do not match the stored configuration".into()));
        }
        let metric = meta.get("metric").map(|m| m.parse()).transpose()?;
        let rates = match meta.get("rates").map(String::as_str) {
            None | Some("") => Vec::new(),
            Some(list) => vrs::parse_rate_list(list)?,
        };
        let provenance = meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(PROVENANCE_PREFIX).map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(Self { config, net, transform: TransformSpec::from_meta(&meta)?, metric, rates, provenance })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Mean absolute error between transformed targets and predictions, and its
/// gradient with respect to the predictions: `-sign(T(Y) - Y_hat) / n`.
pub fn adaptive_loss(targets: &TensorBuffer, predictions: &TensorBuffer, transform: &TransformSpec) -> Result<(f64, TensorBuffer)> {
    if targets.dims() != predictions.dims() {
        return Err(Error::Dims(format!(
            "targets {:?} vs predictions {:?}",
            targets.dims(),
            predictions.dims()
        )));
    }
    let transformed = transform.forward_tensor(targets)?;
    let n = targets.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = predictions.clone();
    for ((g, &t), &p) in grad.data_mut().iter_mut().zip(transformed.data()).zip(predictions.data()) {
        let d = t as f64 - p as f64;
        loss += d.abs();
        *g = if d > 0.0 {
            (-1.0 / n) as f32
        } else if d < 0.0 {
            (1.0 / n) as f32
        } else {
            0.0
        };
    }
    Ok((loss / n, grad))
}

/// One training or evaluation record.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `(1, in_channels, H, W)`, shareable between datasets of different metrics.
    pub input: Arc<TensorBuffer>,
    /// `(1, rates, H / w, W / w)` in raw metric space.
    pub target: TensorBuffer,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsProp,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 16, optimizer: RmsProp::default(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
    pub learning_rate: f64,
    pub mu: Vec<f64>,
}

fn stack(samples: &[&Sample]) -> Result<(TensorBuffer, TensorBuffer)> {
    let inputs: Vec<&TensorBuffer> = samples.iter().map(|s| s.input.as_ref()).collect();
    let targets: Vec<&TensorBuffer> = samples.iter().map(|s| &s.target).collect();
    Ok((TensorBuffer::stack(&inputs)?, TensorBuffer::stack(&targets)?))
}

/// Mean adaptive loss of `model` over `samples` in infer mode.
pub fn evaluate_loss(model: &NetworkModel, samples: &[Sample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, y) = stack(&refs)?;
        let pred = model.forward(&x, BnMode::Infer)?;
        let (loss, _) = adaptive_loss(&y, &pred, &model.transform)?;
        total += loss * y.len() as f64;
        count += y.len();
    }
    Ok(total / count as f64)
}

fn check_samples(model: &NetworkModel, samples: &[Sample]) -> Result<()> {
    for s in samples {
        model.check_input(&s.input)?;
        let (_, c, th, tw) = s.target.nchw();
        let (_, _, h, w) = s.input.nchw();
        let t = model.config.tile_size;
        if c != model.config.out_channels || th * t != h || tw * t != w {
            return Err(Error::Dims(format!(
                "target {:?} does not match input {:?} with tile size {t}",
                s.target.dims(),
                s.input.dims()
            )));
        }
        if s.target.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Value("targets must lie in [0, 1]".into()));
        }
    }
    Ok(())
}

/// Epoch-at-a-time training state: shuffled mini-batches, the adaptive MAE
/// loss and RMSProp.
///
/// With a precomputed transform `mu` is replaced by the training-set mean.
/// In running mode it is seeded with the first batch mean and then tracked
/// per batch.
pub struct Trainer<'a> {
    pub model: NetworkModel,
    train_set: &'a [Sample],
    holdout: &'a [Sample],
    cfg: TrainConfig,
    opt: OptimizerState<f32>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    mu_seeded: bool,
    pub history: Vec<EpochStats>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        mut model: NetworkModel,
        train_set: &'a [Sample],
        holdout: &'a [Sample],
        mut transform: TransformSpec,
        cfg: TrainConfig,
    ) -> Result<Self> {
        if train_set.is_empty() {
            return Err(Error::Value("training set is empty".into()));
        }
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        check_samples(&model, train_set)?;
        check_samples(&model, holdout)?;
        transform.validate()?;
        if transform.mu_mode == MuMode::Precomputed {
            let targets: Vec<&TensorBuffer> = train_set.iter().map(|s| &s.target).collect();
            transform.precompute_mu(&targets)?;
        }
        let mu_seeded = transform.mu_mode == MuMode::Precomputed;
        model.transform = transform;
        let shapes: Vec<usize> = model.net.params().iter().map(|p| p.len()).collect();
        let opt = OptimizerState::<f32>::new(&shapes, cfg.optimizer)?;
        Ok(Self {
            model,
            train_set,
            holdout,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            opt,
            order: (0..train_set.len()).collect(),
            mu_seeded,
            history: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn finished(&self) -> bool {
        self.history.len() >= self.cfg.epochs
    }

    pub fn run_epoch(&mut self) -> Result<&EpochStats> {
        let epoch = self.history.len();
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0f64;
        let mut count = 0usize;
        for chunk in self.order.chunks(self.cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &self.train_set[i]).collect();
            let (x, y) = stack(&batch)?;
            let model = &mut self.model;
            if model.transform.mu_mode == MuMode::Running {
                if self.mu_seeded {
                    model.transform.update_mu(&y)?;
                } else {
                    model.transform.precompute_mu(&[&y])?;
                    self.mu_seeded = true;
                }
            }
            let (pred, tape) = model.net.forward_train(&x)?;
            let (loss, grad) = adaptive_loss(&y, &pred, &model.transform)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss {loss} in epoch {epoch}")));
            }
            let grads = model.net.backward(&tape, &grad)?;
            if grads.slices().iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged(format!("non-finite gradient in epoch {epoch}")));
            }
            self.opt.step(model.net.params_mut(), grads.slices())?;
            total += loss * y.len() as f64;
            count += y.len();
        }
        let holdout_loss = if self.holdout.is_empty() {
            None
        } else {
            Some(evaluate_loss(&self.model, self.holdout, self.cfg.batch_size)?)
        };
        self.history.push(EpochStats {
            epoch,
            train_loss: total / count as f64,
            holdout_loss,
            learning_rate: self.opt.learning_rate,
            mu: self.model.transform.mu.clone(),
        });
        Ok(self.history.last().expect("just pushed"))
    }
}

/// Runs all configured epochs of a [`Trainer`] on `model` in place.
pub fn train(
    model: &mut NetworkModel,
    train_set: &[Sample],
    holdout: &[Sample],
    transform: TransformSpec,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    let mut trainer = Trainer::new(model.clone(), train_set, holdout, transform, cfg.clone())?;
    while !trainer.finished() {
        on_epoch(trainer.run_epoch()?);
    }
    *model = trainer.model;
    Ok(trainer.history)
}

/// Infer-mode predictions for one input, in both spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePredictions {
    /// `(1, rates, ty, tx)` network output.
    pub transformed: TensorBuffer,
    /// Inverse-transformed values in raw metric space.
    pub raw: TensorBuffer,
    pub rates: Vec<ShadingRate>,
}

impl TilePredictions {
    pub fn to_tile_prediction(&self) -> Result<TilePrediction> {
        TilePrediction::from_channels(&self.raw, &self.rates)
    }
}

pub fn predict_tiles(model: &NetworkModel, input: &TensorBuffer) -> Result<TilePredictions> {
    let input = if input.rank() == 3 {
        let d = input.dims().to_vec();
        input.clone().reshape(&[1, d[0], d[1], d[2]])?
    } else {
        input.clone()
    };
    if input.nchw().0 != 1 {
        return Err(Error::Dims("predict_tiles takes a single input".into()));
    }
    let transformed = model.forward(&input, BnMode::Infer)?;
    let raw = model.transform.inverse_tensor(&transformed)?;
    Ok(TilePredictions { transformed, raw, rates: model.rates.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::TransformKind;

    #[test]
    fn schedules() {
        assert_eq!(pooling_schedule(16, ScheduleSource::Eq1).unwrap(), [2, 2, 2, 2, 1]);
        assert_eq!(pooling_schedule(16, ScheduleSource::Table3).unwrap(), [1, 2, 2, 2, 2]);
        assert_eq!(pooling_schedule(1, ScheduleSource::Eq1).unwrap(), [1, 1, 1, 1, 1]);
        assert_eq!(pooling_schedule(32, ScheduleSource::Eq1).unwrap(), [2, 2, 2, 2, 2]);
        assert_eq!(pooling_schedule(8, ScheduleSource::Table3).unwrap(), [2, 2, 2, 1, 1]);
        assert!(pooling_schedule(12, ScheduleSource::Eq1).is_err());
        for w in SUPPORTED_TILE_SIZES {
            for s in [ScheduleSource::Eq1, ScheduleSource::Table3] {
                assert_eq!(pooling_schedule(w, s).unwrap().iter().product::<usize>(), w);
            }
        }
    }

    #[test]
    fn layer_shapes_follow_table() {
        let cfg = NetworkConfig::recommended();
        assert_eq!(cfg.conv_shapes(), [(4, 16, 1), (16, 16, 1), (16, 16, 4), (16, 16, 8), (16, 4, 1)]);
        let wide = NetworkConfig::new(16, 19, 4, ScheduleSource::Eq1).unwrap();
        assert_eq!(wide.conv_shapes()[0], (19, 16, 1));
        assert_eq!(wide.conv_shapes()[1..], cfg.conv_shapes()[1..]);
        let mut bad = cfg.clone();
        bad.latent_channels = 12;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.pooling = [2, 2, 2, 2, 2];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parameter_count() {
        let model = build_network(&NetworkConfig::recommended(), 1).unwrap();
        let conv: usize = model
            .net
            .layers
            .iter()
            .map(|l| if let Layer::Conv(c) = l { c.param_count() } else { 0 })
            .sum();
        assert_eq!(conv, 4388);
        assert_eq!(model.net.trainable_count(), 4388 + 128);
        assert_eq!(model.net.stored_count(), 4644);
    }

    #[test]
    fn forward_shapes_and_range() {
        let model = build_network(&NetworkConfig::recommended(), 2).unwrap();
        let x = TensorBuffer::full(&[1, 4, 64, 32], 0.3).unwrap();
        let y = model.forward(&x, BnMode::Infer).unwrap();
        assert_eq!(y.dims(), &[1, 4, 4, 2]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let one = TensorBuffer::zeros(&[1, 4, 16, 16]).unwrap();
        assert_eq!(model.forward(&one, BnMode::Infer).unwrap().dims(), &[1, 4, 1, 1]);
        assert!(model.forward(&TensorBuffer::zeros(&[1, 4, 24, 16]).unwrap(), BnMode::Infer).is_err());
        assert!(model.forward(&TensorBuffer::zeros(&[1, 3, 16, 16]).unwrap(), BnMode::Infer).is_err());
    }

    #[test]
    fn loss_examples() {
        let id = TransformSpec::identity();
        let y = TensorBuffer::from_vec(&[1, 1, 1, 1], vec![0.7]).unwrap();
        let p = TensorBuffer::from_vec(&[1, 1, 1, 1], vec![0.5]).unwrap();
        let (loss, grad) = adaptive_loss(&y, &p, &id).unwrap();
        assert!((loss - 0.2).abs() < 1e-6);
        assert_eq!(grad.data(), &[-1.0]);
        let (zero, g0) = adaptive_loss(&y, &y, &id).unwrap();
        assert_eq!(zero, 0.0);
        assert_eq!(g0.data(), &[0.0]);
        let clamped = TransformSpec::new(TransformKind::Clamped, 0.35).unwrap();
        let (l, _) = adaptive_loss(&y, &p, &clamped).unwrap();
        assert!((l - 0.5).abs() < 1e-6);
        assert!(adaptive_loss(&y, &TensorBuffer::zeros(&[1, 2, 1, 1]).unwrap(), &id).is_err());
    }

    #[test]
    fn model_bytes_round_trip() {
        let mut model = build_network(&NetworkConfig::recommended(), 3).unwrap();
        model.transform = TransformSpec::new(TransformKind::Clamped, 0.07).unwrap();
        model.metric = Some("sflip+weber".parse().unwrap());
        model.provenance.insert("capture_seed".into(), "42".into());
        let bytes = model.to_bytes().unwrap();
        assert!(bytes.len() <= 32 * 1024);
        let back = NetworkModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn train_rejects_empty_set() {
        let mut model = build_network(&NetworkConfig::recommended(), 3).unwrap();
        let err = train(&mut model, &[], &[], TransformSpec::identity(), &TrainConfig::default(), |_| {});
        assert!(err.is_err());
    }
}
