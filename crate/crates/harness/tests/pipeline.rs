use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensor_nn::{RmsProp, TensorBuffer};
use vrsnet_core::metrics::{BaseMetric, MetricId};
use vrsnet_core::network::{build_network, train, NetworkConfig, Sample, TrainConfig};
use vrsnet_core::transforms::{TransformKind, TransformSpec};
use vrsnet_harness::eval::{evaluate, record_training_set, CaptureId, EvalSet};
use vrsnet_harness::pipeline::{directory_bytes, run_desk_scale, DeskConfig};
use vrsnet_harness::Error;

fn small_desk(dir: &std::path::Path) -> DeskConfig {
    let mut cfg = DeskConfig::new(dir);
    cfg.count = 40;
    cfg.holdout = 8;
    cfg.side_count = 8;
    cfg.resolution = 64;
    cfg.epochs = 2;
    cfg
}

#[test]
fn desk_pipeline_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_desk_scale(&small_desk(a.path()), None, |_| {}).unwrap();
    assert!(first.completed);
    assert_eq!(first.min_epochs(), 2);
    let second = run_desk_scale(&small_desk(b.path()), Some(2), |_| {}).unwrap();
    let (da, db) = (directory_bytes(a.path()).unwrap(), directory_bytes(b.path()).unwrap());
    assert_eq!(da, db);
    assert!(da.keys().any(|k| k.ends_with(".pnet")));
    assert!(da.keys().any(|k| k.starts_with("report_")));
    for (x, y) in first.outcomes.iter().zip(&second.outcomes) {
        assert_eq!(x.report.to_text(), y.report.to_text());
        let scenes: Vec<&str> = x.report.entries.iter().map(|e| e.scene.as_str()).collect();
        assert_eq!(scenes, ["mixed", "diffuse", "specular"]);
        assert_eq!(x.report.entries[0].samples, 8);
    }
}

#[test]
fn exhausted_budget_stops_all_models_together() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_desk(dir.path());
    cfg.budget = Duration::ZERO;
    cfg.eval_reserve = Duration::ZERO;
    cfg.epochs = 50;
    let out = run_desk_scale(&cfg, None, |_| {}).unwrap();
    assert!(!out.completed);
    assert!(out.outcomes.iter().all(|o| o.epochs == 0));
    assert_eq!(out.outcomes.len(), 2);
}

fn constant_samples(value: f32, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Sample {
            input: TensorBuffer::from_vec(&[1, 4, 32, 32], (0..4096).map(|_| rng.gen()).collect()).unwrap().into(),
            target: TensorBuffer::full(&[1, 4, 2, 2], value).unwrap(),
        })
        .collect()
}

fn id(seed: u64) -> CaptureId {
    CaptureId { scene: "debug".into(), scene_seed: 0, capture_seed: seed }
}

#[test]
fn constant_target_model_reports_small_mae() {
    let data = constant_samples(0.3, 16, 1);
    let mut model = build_network(&NetworkConfig::recommended(), 4).unwrap();
    model.metric = Some(MetricId::raw(BaseMetric::Mald));
    let cfg = TrainConfig { epochs: 300, batch_size: 8, optimizer: RmsProp { learning_rate: 1e-2, ..RmsProp::default() }, seed: 9 };
    train(&mut model, &data, &[], TransformSpec::identity(), &cfg, |_| {}).unwrap();
    record_training_set(&mut model, &id(1), &(0..16).collect::<Vec<_>>());
    let held = constant_samples(0.3, 8, 2);
    let set = EvalSet { id: id(2), metric: MetricId::raw(BaseMetric::Mald), samples: held.iter().enumerate().collect() };
    let report = evaluate(&model, &[set]).unwrap();
    let e = &report.entries[0];
    assert!(e.mae.total < 0.01, "MAE {}", e.mae.total);
    assert_eq!(e.r2, None);
    assert!(report.to_text().contains("r2=undefined"));
}

#[test]
fn report_echoes_model_and_rejects_misuse() {
    let data = constant_samples(0.1, 4, 3);
    let mut model = build_network(&NetworkConfig::recommended(), 1).unwrap();
    model.metric = Some(MetricId::raw(BaseMetric::Sflip));
    model.transform = TransformSpec::new(TransformKind::Clamped, 0.0625).unwrap();
    record_training_set(&mut model, &id(5), &[0, 1]);
    let mut targets = data.clone();
    for (i, s) in targets.iter_mut().enumerate() {
        s.target = TensorBuffer::full(&[1, 4, 2, 2], 0.05 * i as f32).unwrap();
    }
    let set = |m, seed| EvalSet { id: id(seed), metric: m, samples: targets.iter().enumerate().collect() };
    let sflip = MetricId::raw(BaseMetric::Sflip);
    let report = evaluate(&model, &[set(sflip, 6)]).unwrap();
    let text = report.to_text();
    assert!(text.contains("transform=clamped"));
    assert!(text.contains("transform_mu=6.250000000e-2"));
    assert!(text.contains("model_metric=sflip"));
    assert_eq!(text, evaluate(&model, &[set(sflip, 6)]).unwrap().to_text());
    // Clamping at 2 mu = 0.125 turns the targets {0, .05, .1, .15} into {0, .05, .1, .125}.
    let y = [0.0f64, 0.05, 0.1, 0.15];
    let mean = y.iter().sum::<f64>() / 4.0;
    let tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ceiling = 1.0 - 0.025f64.powi(2) / tot;
    assert!((report.entries[0].r2_ceiling.unwrap() - ceiling).abs() < 1e-6);

    let mismatch = evaluate(&model, &[set(MetricId::raw(BaseMetric::Mald), 6)]).unwrap_err();
    assert!(matches!(mismatch, Error::MetricMismatch { .. }));
    let overlap = evaluate(&model, &[set(sflip, 5)]).unwrap_err();
    assert!(matches!(overlap, Error::Overlap(_)));
}

#[test]
fn training_fit_beats_holdout_across_seeds() {
    use synthscene::capture::CaptureConfig;
    use synthscene::{capture_dataset, scene_library, SceneKind};
    use vrsnet_harness::pipeline::load_network_dataset;

    let dir = tempfile::tempdir().unwrap();
    let mut cc = CaptureConfig::new(scene_library(SceneKind::Mixed), MetricId::raw(BaseMetric::Mald), 17);
    cc.count = 56;
    cc.width = 64;
    cc.height = 64;
    capture_dataset(&cc, dir.path()).unwrap();
    let data = load_network_dataset(dir.path(), None).unwrap();
    let (train_set, held) = (data.network_samples(0..40), data.network_samples(40..56));
    let (mut fit, mut gen) = (0.0, 0.0);
    for seed in 0..3 {
        let mut model = build_network(&NetworkConfig::recommended(), seed).unwrap();
        model.metric = Some(data.metric());
        let cfg = TrainConfig { epochs: 20, batch_size: 8, optimizer: RmsProp { learning_rate: 1e-3, ..RmsProp::default() }, seed };
        let spec = TransformSpec::new(TransformKind::Clamped, 0.5).unwrap();
        train(&mut model, &train_set, &[], spec, &cfg, |_| {}).unwrap();
        let r2 = |samples: &[Sample]| {
            let set = EvalSet { id: data.id(), metric: data.metric(), samples: samples.iter().enumerate().collect() };
            evaluate(&model, &[set]).unwrap().entries[0].r2.unwrap()
        };
        fit += r2(&train_set);
        gen += r2(&held);
    }
    assert!(fit >= gen, "mean train R2 {} < holdout R2 {}", fit / 3.0, gen / 3.0);
}
