use synthscene::camera::Camera;
use synthscene::gbuffer::render_gbuffer;
use synthscene::reproject::reproject;
use synthscene::scene::{Light, Material, Primitive, Scene, SceneKind, Shape, Vec3};
use synthscene::shade::{shade, shade_pixel};
use synthscene::{scene_library, GBufferFrame};
use vrsnet_core::vrs::ShadingRate;

fn blank_scene(primitives: Vec<Primitive>) -> Scene {
    Scene {
        name: "test".into(),
        primitives,
        light: Light { direction: Vec3::new(0.3, 0.8, -0.5).normalize(), intensity: 2.0, ambient: 0.2 },
        camera_min: Vec3::new(-1.0, 1.0, -1.0),
        camera_max: Vec3::new(1.0, 2.0, 1.0),
        background: [0.1, 0.2, 0.3],
        seed: 1,
    }
}

fn matte(c: f64) -> Material {
    Material::diffuse(Vec3::new(c, c, c))
}

fn mixed_frame(size: usize) -> GBufferFrame {
    let scene = scene_library(SceneKind::Mixed);
    let cam = Camera::with_defaults(Vec3::new(-6.0, 1.7, -6.0), Vec3::new(1.0, -0.15, 0.8)).unwrap();
    render_gbuffer(&scene, &cam, size, size).unwrap()
}

#[test]
fn plane_depth_matches_closed_form() {
    let scene = blank_scene(vec![Primitive { shape: Shape::Ground { height: 0.0 }, material: matte(0.5) }]);
    let cam = Camera::with_defaults(Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, -0.5, 1.0)).unwrap();
    let g = render_gbuffer(&scene, &cam, 32, 32).unwrap();
    for py in 0..32 {
        for px in 0..32 {
            let dir = cam.ray_dir(px, py, 32, 32);
            let i = py * 32 + px;
            if dir.y >= 0.0 {
                assert!(g.is_sky(i));
                continue;
            }
            let t = -2.0 / dir.y;
            let depth = t * dir.dot(&cam.forward);
            if depth < cam.far {
                assert!((g.depth[i] as f64 - depth).abs() <= 1e-6 * depth.max(1.0), "pixel {px},{py}");
            }
        }
    }
}

#[test]
fn full_rate_equals_per_pixel_shading() {
    let scene = scene_library(SceneKind::Mixed);
    let g = mixed_frame(64);
    let img = shade(&g, ShadingRate::R1X1, &scene.light, scene.background).unwrap();
    let hw = 64 * 64;
    for i in 0..hw {
        let expect = if g.is_sky(i) { scene.background } else { shade_pixel(&g, i, &scene.light) };
        for a in 0..3 {
            assert_eq!(img.data()[a * hw + i].to_bits(), expect[a].to_bits());
        }
    }
}

#[test]
fn coarse_blocks_are_uniform() {
    let scene = scene_library(SceneKind::Mixed);
    let g = mixed_frame(64);
    for rate in ShadingRate::BY_INCREASING_COST {
        let img = shade(&g, rate, &scene.light, scene.background).unwrap();
        for by in 0..64 / rate.v {
            for bx in 0..64 / rate.u {
                let px: Vec<usize> = (0..rate.v)
                    .flat_map(|dy| (0..rate.u).map(move |dx| (by * rate.v + dy) * 64 + bx * rate.u + dx))
                    .collect();
                if px.iter().any(|&i| g.is_sky(i)) {
                    continue;
                }
                for a in 0..3 {
                    let first = img.data()[a * 4096 + px[0]];
                    assert!(px.iter().all(|&i| img.data()[a * 4096 + i] == first));
                }
            }
        }
    }
    let odd = render_gbuffer(&scene, &g.camera, 66, 64).unwrap();
    assert!(shade(&odd, ShadingRate::R4X4, &scene.light, scene.background).is_err());
}

#[test]
fn constant_region_has_zero_error_at_every_rate() {
    let scene = blank_scene(vec![Primitive {
        shape: Shape::Cuboid { min: Vec3::new(-50.0, -50.0, 5.0), max: Vec3::new(50.0, 50.0, 6.0) },
        material: matte(0.6),
    }]);
    let cam = Camera::with_defaults(Vec3::zeros(), Vec3::z()).unwrap();
    let mut g = render_gbuffer(&scene, &cam, 32, 32).unwrap();
    // Flat, view-independent shading: no specular, uniform normal.
    g.specular.iter_mut().for_each(|v| *v = 0.0);
    let full = shade(&g, ShadingRate::R1X1, &scene.light, scene.background).unwrap();
    for rate in ShadingRate::BY_INCREASING_COST {
        assert_eq!(shade(&g, rate, &scene.light, scene.background).unwrap(), full);
    }
}

#[test]
fn static_camera_reprojection_is_identity() {
    let scene = scene_library(SceneKind::Checker);
    let cam = Camera::with_defaults(Vec3::new(2.0, 1.5, -7.0), Vec3::new(-0.2, -0.1, 1.0)).unwrap();
    let g = render_gbuffer(&scene, &cam, 64, 48).unwrap();
    let img = shade(&g, ShadingRate::R1X1, &scene.light, scene.background).unwrap();
    let (color, mask) = reproject(&g, &img, &g).unwrap();
    let hw = 64 * 48;
    for i in 0..hw {
        if g.is_sky(i) {
            assert_eq!(mask.data()[i], 0.0);
        } else {
            assert_eq!(mask.data()[i], 1.0);
            for a in 0..3 {
                assert_eq!(color.data()[a * hw + i], img.data()[a * hw + i]);
            }
        }
    }
}

/// Visibility of the current frame's points from the previous camera,
/// decided by an analytic segment test. Returns (disagreements that are
/// not next to a previous-frame silhouette, count of oracle-unseen pixels).
fn compare_with_visibility_oracle(scene: &Scene, prev_cam: &Camera, cur_cam: &Camera, size: usize) -> (usize, usize) {
    let prev = render_gbuffer(scene, prev_cam, size, size).unwrap();
    let cur = render_gbuffer(scene, cur_cam, size, size).unwrap();
    let img = shade(&prev, ShadingRate::R1X1, &scene.light, scene.background).unwrap();
    let (_, mask) = reproject(&prev, &img, &cur).unwrap();
    let mut bad = 0;
    let mut unseen = 0;
    for i in 0..size * size {
        if cur.is_sky(i) {
            continue;
        }
        let p = cur.world[i];
        let to = p - prev_cam.position;
        let dist = to.norm();
        let proj = prev_cam.project(&p, size, size);
        let in_view = proj.is_some_and(|(x, y, _)| {
            x.round() >= 0.0 && y.round() >= 0.0 && x.round() < size as f64 && y.round() < size as f64
        });
        let visible = in_view && !scene.occluded(&prev_cam.position, &(to / dist), 0.0, dist * (1.0 - 1e-6));
        if !visible {
            unseen += 1;
        }
        if (mask.data()[i] == 1.0) != visible {
            let (x, y, _) = proj.unwrap();
            let (cx, cy) = (x.round() as i64, y.round() as i64);
            let mut depths = Vec::new();
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < size && (ny as usize) < size {
                        depths.push(prev.depth[ny as usize * size + nx as usize]);
                    }
                }
            }
            let lo = depths.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = depths.iter().cloned().fold(0.0, f32::max);
            let near_silhouette = hi - lo > 0.01 * lo;
            if !near_silhouette {
                bad += 1;
            }
        }
    }
    (bad, unseen)
}

#[test]
fn translation_disocclusion_matches_visibility() {
    let scene = blank_scene(vec![
        Primitive { shape: Shape::Cuboid { min: Vec3::new(-20.0, -20.0, 10.0), max: Vec3::new(20.0, 20.0, 11.0) }, material: matte(0.5) },
        Primitive { shape: Shape::Cuboid { min: Vec3::new(-1.0, -1.0, 5.0), max: Vec3::new(1.0, 1.0, 6.0) }, material: matte(0.8) },
    ]);
    let prev = Camera::with_defaults(Vec3::zeros(), Vec3::z()).unwrap();
    let cur = Camera::with_defaults(Vec3::new(0.6, 0.0, 0.0), Vec3::z()).unwrap();
    let (bad, unseen) = compare_with_visibility_oracle(&scene, &prev, &cur, 64);
    assert!(unseen > 20, "construction should disocclude wall area");
    assert_eq!(bad, 0);
}

#[test]
fn nearer_occluder_in_previous_frame_masks_point() {
    let scene = blank_scene(vec![
        Primitive { shape: Shape::Sphere { center: Vec3::new(0.0, 0.0, 8.0), radius: 2.0 }, material: matte(0.5) },
        Primitive { shape: Shape::Sphere { center: Vec3::new(-0.8, 0.0, 3.0), radius: 0.5 }, material: matte(0.9) },
    ]);
    let prev = Camera::with_defaults(Vec3::new(-0.8, 0.0, 0.0), Vec3::new(0.1, 0.0, 1.0)).unwrap();
    let cur = Camera::with_defaults(Vec3::new(0.4, 0.0, 0.0), Vec3::new(-0.05, 0.0, 1.0)).unwrap();
    let (bad, unseen) = compare_with_visibility_oracle(&scene, &prev, &cur, 64);
    assert!(unseen > 10);
    assert_eq!(bad, 0);
}
