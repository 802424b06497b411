use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mimalloc::MiMalloc;
use synthscene::capture::CaptureConfig;
use synthscene::{capture_dataset, scene_library, SceneKind};
use tensor_nn::RmsProp;
use vrsnet_core::metrics::{BaseMetric, JndConfig, MetricId};
use vrsnet_core::network::{predict_tiles, train, NetworkConfig, NetworkModel, ScheduleSource, TrainConfig};
use vrsnet_core::transforms::{MuMode, TransformKind, TransformSpec};
use vrsnet_core::vrs::{parse_rate_list, ExtrapolationConfig};
use vrsnet_harness::demo::{run_demo, stats_text, DemoConfig};
use vrsnet_harness::eval::{evaluate, record_training_set, training_indices, EvalSet};
use vrsnet_harness::heatmap::heatmap_png;
use vrsnet_harness::pipeline::load_network_dataset;

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

#[derive(Parser)]
#[command(name = "vrsnet", about = "Per-tile shading error prediction for variable-rate shading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render viewpoint pairs and write a training dataset.
    Capture(CaptureArgs),
    /// Train a predictor on a captured dataset.
    Train(TrainArgs),
    /// Score a model on a dataset and write a text report.
    Evaluate(EvaluateArgs),
    /// Write a heatmap of one sample's predicted tile errors.
    Predict(PredictArgs),
    /// Choose shading rates for rendered frames and compare with ground truth.
    VrsDemo(DemoArgs),
}

fn parse_res(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    Ok((w.parse().map_err(|e| format!("{e}"))?, h.parse().map_err(|e| format!("{e}"))?))
}

#[derive(Args)]
struct CaptureArgs {
    #[arg(long)]
    scene: SceneKind,
    #[arg(long)]
    count: usize,
    #[arg(long, value_parser = parse_res, default_value = "256x256")]
    res: (usize, usize),
    #[arg(long, default_value_t = 16)]
    w: usize,
    #[arg(long)]
    metric: BaseMetric,
    #[arg(long)]
    weber: bool,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    l: Option<f64>,
    #[arg(long, default_value = "1x2,2x1,2x4,4x2")]
    rates: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    transform: TransformKind,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long, default_value = "precomputed")]
    mu_mode: MuMode,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the last N samples out of training.
    #[arg(long, default_value_t = 0)]
    holdout: usize,
    #[arg(long, default_value = "eq1")]
    schedule: ScheduleSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Skip samples the model was trained on instead of refusing to run.
    #[arg(long)]
    exclude_trained: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    sample: usize,
    #[arg(long)]
    out_heatmap: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scene: SceneKind,
    #[arg(long, default_value_t = 0.25)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    frames: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_res, default_value = "256x256")]
    res: (usize, usize),
    /// Environment luminance of the threshold.
    #[arg(long)]
    l: Option<f64>,
}

fn capture(a: CaptureArgs) -> Result<()> {
    let metric = MetricId { base: a.metric, weber: a.weber };
    if !a.weber && (a.t.is_some() || a.l.is_some()) {
        bail!("--t and --l only apply with --weber");
    }
    let mut cfg = CaptureConfig::new(scene_library(a.scene), metric, a.seed);
    cfg.count = a.count;
    (cfg.width, cfg.height) = a.res;
    cfg.tile_size = a.w;
    let defaults = JndConfig::default();
    cfg.jnd = JndConfig { t: a.t.unwrap_or(defaults.t), l: a.l.unwrap_or(defaults.l) };
    cfg.rates = parse_rate_list(&a.rates)?;
    let m = capture_dataset(&cfg, &a.out)?;
    println!(
        "captured {} samples of {} ({}) to {}; mu_y={:.6e} mean_unseen={:.4}",
        m.count,
        m.scene,
        m.metric,
        a.out.display(),
        m.mu_y,
        m.mean_unseen_fraction
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = load_network_dataset(&a.data, None)?;
    let n = data.samples.len();
    if a.holdout >= n {
        bail!("holdout {} leaves no training samples out of {n}", a.holdout);
    }
    let n_train = n - a.holdout;
    let m = &data.manifest;
    let config = NetworkConfig::new(m.tile_size, m.channel_order.len(), m.rates.len(), a.schedule)?;
    let mut model = vrsnet_core::network::build_network(&config, a.seed)?;
    model.metric = Some(m.metric);
    model.rates = m.rates.clone();
    let mut transform = TransformSpec::new(a.transform, 0.5)?;
    transform.mu_mode = a.mu_mode;
    if let Some(k) = a.k {
        if a.transform != TransformKind::Logistic {
            bail!("--k only applies to the logistic transform");
        }
        transform.k_logistic = k;
    }
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        optimizer: RmsProp { learning_rate: a.lr, ..RmsProp::default() },
        seed: a.seed,
    };
    let train_set = data.network_samples(0..n_train);
    let holdout = data.network_samples(n_train..n);
    train(&mut model, &train_set, &holdout, transform, &cfg, |e| {
        let hold = e.holdout_loss.map_or(String::new(), |h| format!(" holdout {h:.6}"));
        eprintln!("epoch {} loss {:.6}{hold}", e.epoch + 1, e.train_loss);
    })?;
    let indices: Vec<usize> = (0..n_train).collect();
    record_training_set(&mut model, &data.id(), &indices);
    model.save(&a.out)?;
    println!("saved {} ({} trained parameters) to {}", model.transform.kind, model.net.trainable_count(), a.out.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model = NetworkModel::load(&a.model)?;
    let data = load_network_dataset(&a.data, None)?;
    let mut set = data.eval_set(0..data.samples.len());
    if a.exclude_trained {
        let trained = training_indices(&model, &data.id())?;
        set.samples.retain(|(i, _)| !trained.contains(i));
    }
    let set = EvalSet { id: set.id, metric: set.metric, samples: set.samples };
    let report = evaluate(&model, &[set])?;
    fs::write(&a.report, report.to_text())?;
    for e in &report.entries {
        let r2 = e.r2.map_or("undefined".into(), |r| format!("{r:.4}"));
        println!("{} {}: R2={r2} MAE={:.4e} under={:.4e}", e.scene, e.metric, e.mae.total, e.mae.under);
    }
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let model = NetworkModel::load(&a.model)?;
    let data = load_network_dataset(&a.data, None)?;
    let (_, sample) = data.samples.get(a.sample).with_context(|| format!("sample {} out of range", a.sample))?;
    let pred = predict_tiles(&model, &sample.input)?;
    let (_, c, th, tw) = pred.raw.nchw();
    let mut path = a.out_heatmap.clone();
    for (ch, rate) in model.rates.iter().enumerate().take(c) {
        let plane = vrsnet_core::TensorBuffer::from_vec(&[th, tw], pred.raw.plane(0, ch).to_vec())?;
        if c > 1 {
            let stem = a.out_heatmap.file_stem().and_then(|s| s.to_str()).unwrap_or("heatmap");
            path = a.out_heatmap.with_file_name(format!("{stem}_{}.png", rate.label()));
        }
        heatmap_png(&plane.map(|v| v.clamp(0.0, 1.0)), &path)?;
        println!("{rate}: {}", path.display());
    }
    Ok(())
}

fn demo_cmd(a: DemoArgs) -> Result<()> {
    let model = NetworkModel::load(&a.model)?;
    let mut cfg = DemoConfig {
        scene: scene_library(a.scene),
        threshold: a.threshold,
        environment_luminance: JndConfig::default().l,
        frames: a.frames,
        seed: a.seed,
        width: a.res.0,
        height: a.res.1,
        extrapolation: ExtrapolationConfig::default(),
    };
    if let Some(l) = a.l {
        cfg.environment_luminance = l;
    }
    let stats = run_demo(&model, &cfg, &a.out_dir)?;
    print!("{}", stats_text(&stats));
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Capture(a) => capture(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::VrsDemo(a) => demo_cmd(a),
    }
}
