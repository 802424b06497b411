use std::fs;
use std::path::Path;

use synthscene::capture::{self, compute_targets, load_dataset, read_manifest, render_frames, sample_rng, CaptureConfig, Manifest};
use synthscene::sampler::{pair_is_valid, sample_viewpoint_pair, SamplerConfig};
use synthscene::scene::{Light, Material, Primitive, Scene, SceneKind, Shape, Vec3};
use synthscene::{capture_dataset, scene_library, Error};
use vrsnet_core::metrics::{BaseMetric, MetricId};
use vrsnet_core::vrs::ShadingRate;

fn small_config(kind: SceneKind, metric: BaseMetric) -> CaptureConfig {
    let mut cfg = CaptureConfig::new(scene_library(kind), MetricId::raw(metric), 77);
    cfg.count = 3;
    cfg.width = 64;
    cfg.height = 64;
    cfg
}

#[test]
fn sampled_pairs_satisfy_all_predicates() {
    let scene = scene_library(SceneKind::Mixed);
    let cfg = SamplerConfig::default();
    for i in 0..20 {
        let pair = sample_viewpoint_pair(&scene, &mut sample_rng(5, i), &cfg).unwrap();
        assert!(pair_is_valid(&scene, &pair, &cfg).unwrap());
        assert!(pair.attempts >= 1 && pair.attempts <= cfg.max_attempts);
    }
}

#[test]
fn sampler_is_deterministic() {
    let scene = scene_library(SceneKind::Diffuse);
    let cfg = SamplerConfig::default();
    let a: Vec<_> = (0..5).map(|i| sample_viewpoint_pair(&scene, &mut sample_rng(9, i), &cfg).unwrap()).collect();
    let b: Vec<_> = (0..5).map(|i| sample_viewpoint_pair(&scene, &mut sample_rng(9, i), &cfg).unwrap()).collect();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
}

#[test]
fn region_away_from_geometry_exhausts_budget() {
    let scene = Scene {
        name: "far".into(),
        primitives: vec![Primitive {
            shape: Shape::Sphere { center: Vec3::zeros(), radius: 0.5 },
            material: Material::diffuse(Vec3::new(0.5, 0.5, 0.5)),
        }],
        light: Light { direction: Vec3::y(), intensity: 1.0, ambient: 0.1 },
        camera_min: Vec3::new(50.0, 50.0, 50.0),
        camera_max: Vec3::new(60.0, 60.0, 60.0),
        background: [0.0; 3],
        seed: 0,
    };
    let err = sample_viewpoint_pair(&scene, &mut sample_rng(1, 0), &SamplerConfig::default()).unwrap_err();
    assert!(matches!(err, Error::SamplerExhausted(10_000)));
}

#[test]
fn identity_rate_targets_are_zero() {
    let mut cfg = small_config(SceneKind::Specular, BaseMetric::Sflip);
    cfg.rates = vec![ShadingRate::R1X1, ShadingRate::R4X4];
    let frames = render_frames(&cfg, 0).unwrap();
    let t = compute_targets(&frames, cfg.metric, &cfg).unwrap();
    assert_eq!(t.dims(), &[2, 4, 4]);
    assert!(t.plane(0, 0).iter().all(|&v| v == 0.0));
    assert!(t.plane(0, 1).iter().any(|&v| v > 0.0));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn capture_round_trip_and_determinism() {
    let cfg = small_config(SceneKind::Checker, BaseMetric::Mald);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = capture_dataset(&cfg, a.path()).unwrap();
    capture_dataset(&cfg, b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));

    assert_eq!(read_manifest(a.path()).unwrap(), m);
    assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    assert_eq!(m.channel_order, ["mask", "reprojected_g", "diffuse_g", "normal_z"]);
    let data = load_dataset(a.path()).unwrap();
    assert_eq!(data.samples.len(), 3);
    let mut sum = 0.0f64;
    for s in &data.samples {
        assert_eq!(s.input.dims(), &[4, 64, 64]);
        assert!(s.input.plane(0, 0).iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(s.targets.data().iter().all(|v| (0.0..=1.0).contains(v)));
        sum += s.targets.data().iter().map(|&v| v as f64).sum::<f64>();
        let net = s.to_network_sample().unwrap();
        assert_eq!(net.input.dims(), &[1, 4, 64, 64]);
        assert_eq!(net.target.dims(), &[1, 4, 4, 4]);
    }
    let mu = sum / (3.0 * 4.0 * 16.0);
    assert!((m.mu_y - mu).abs() < 1e-9);
}

#[test]
fn recomputed_targets_match_stored_bits() {
    let cfg = small_config(SceneKind::Mixed, BaseMetric::Sflip);
    let dir = tempfile::tempdir().unwrap();
    capture_dataset(&cfg, dir.path()).unwrap();
    let data = load_dataset(dir.path()).unwrap();
    for s in &data.samples {
        let again = capture::capture_sample(&cfg, s.index).unwrap();
        assert_eq!(again.targets, s.targets);
        assert_eq!(again.input, s.input);
    }
}

#[test]
fn multi_metric_capture_shares_viewpoints() {
    let cfg = small_config(SceneKind::Diffuse, BaseMetric::Mald);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sflip = MetricId::raw(BaseMetric::Sflip);
    let ms = capture::capture_datasets(&cfg, &[(cfg.metric, a.path()), (sflip, b.path())]).unwrap();
    assert_eq!(ms[1].metric, sflip);
    let (da, db) = (load_dataset(a.path()).unwrap(), load_dataset(b.path()).unwrap());
    for (x, y) in da.samples.iter().zip(&db.samples) {
        assert_eq!(x.input, y.input);
        assert_eq!(x.meta["cur_camera"], y.meta["cur_camera"]);
    }
    let single = tempfile::tempdir().unwrap();
    capture_dataset(&cfg, single.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(single.path()));
}

#[test]
fn rejects_bad_configs() {
    let mut cfg = small_config(SceneKind::Diffuse, BaseMetric::Rmse);
    cfg.count = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = small_config(SceneKind::Diffuse, BaseMetric::Rmse);
    cfg.width = 72;
    assert!(cfg.validate().is_err());
    let mut cfg = small_config(SceneKind::Diffuse, BaseMetric::Rmse);
    cfg.rates.clear();
    assert!(cfg.validate().is_err());
}
