//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.
//!
//! Criteria 7 and 8 share one 20k-iteration fit, trained in-process
//! unless `NRF_FIT_DIR` names a directory written by the
//! `fit_checker_sphere` example, whose dataset and final checkpoint are
//! then reused.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nrf::dataset::Dataset;
use nrf::export::VolumeExport;
use nrf::field::{Field, NeuralField};
use nrf::geometry::{Aabb, Camera, PointLight, Ray, Rgb, Vec3};
use nrf::lightcache::{CacheSettings, TransmittanceVolume};
use nrf::mlp::{MlpArch, MlpParams, ParamGrads};
use nrf::raymarch::{
    brute_force_light_transmittance, contribution_weights, exit_transmittance, ray_rng, render_image,
    render_ray_collocated, render_ray_full, sample_piecewise_constant, stratified_sample_with,
    LightTransmittance, RaySamples, RenderMode, RenderSettings,
};
use nrf::reflectance::{eval_microfacet, ggx_d, SurfaceBrdfParams, DEFAULT_F0};
use nrf::report::psnr;
use nrf::scenegen::{render_dataset, render_ground_truth, reference_step, AnalyticScene, DatasetSpec};
use nrf::trainer::{batch_loss, sample_ray, train, BatchRay, RaySampling, TrainConfig, TrainRun, TrainState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn report(n: u32, pass: bool, detail: String, elapsed: Duration) {
    println!(
        "criterion {n}: {} {detail} ({:.2}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let l = v.length();
        if l > 1e-3 && l <= 1.0 {
            return v / l;
        }
    }
}

fn random_in(b: &Aabb, rng: &mut impl Rng) -> Vec3 {
    Vec3::new(
        rng.gen_range(b.min.x..b.max.x),
        rng.gen_range(b.min.y..b.max.y),
        rng.gen_range(b.min.z..b.max.z),
    )
}

#[test]
fn criterion_1_analytic_transmittance() {
    let start = Instant::now();
    // sigma = 2 filling the unit segment, one sample at each bin center
    let ray = Ray::new(Vec3::ZERO, Vec3::X, 0.0, 1.0).unwrap();
    let exact = (-2.0f64).exp();
    let errors: Vec<f64> = [16, 64, 256, 1024]
        .iter()
        .map(|&n| {
            let s = stratified_sample_with(&ray, n, |_| 0.5);
            let sig = vec![2.0; s.len()];
            (exit_transmittance(&sig, &s.dt) - exact).abs()
        })
        .collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let elapsed = start.elapsed();
    let pass = errors[3] < 1e-3 && decreasing && elapsed.as_secs_f64() < 1.0;
    report(1, pass, format!(
        "errors at N=16,64,256,1024: {}",
        errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")
    ), elapsed);
    assert!(pass);
}

#[test]
fn criterion_2_telescoping_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let sig: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..50.0) })
            .collect();
        let dt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.1)).collect();
        let w = contribution_weights(&sig, &dt);
        // independent recomputation of the exit transmittance
        let depth: f64 = sig.iter().zip(&dt).map(|(s, d)| s * d).sum();
        let sum: f64 = w.weights.iter().sum();
        worst = worst.max((sum + w.exit - 1.0).abs()).max((w.exit - (-depth).exp()).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed.as_secs_f64() < 1.0;
    report(2, pass, format!("max |sum a + tau_exit - 1| = {worst:.2e}"), elapsed);
    assert!(pass);
}

#[test]
fn criterion_3_full_pipeline_gradient_check() {
    let start = Instant::now();
    let levels = 4;
    let bounds = Aabb::unit();
    let arch = MlpArch::new(14, 16, levels).unwrap();
    let coarse = NeuralField::new(MlpParams::init_with_arch(31, arch).unwrap(), bounds);
    let fine = NeuralField::new(MlpParams::init_with_arch(32, arch).unwrap(), bounds);
    let config = TrainConfig {
        n_coarse: 8,
        n_fine: 8,
        width: 16,
        beta: 0.1,
        ..Default::default()
    };
    let cam_pos = Vec3::new(2.2, 0.4, 0.9);
    let ray = bounds
        .clip_ray(cam_pos, (Vec3::new(0.1, -0.05, 0.0) - cam_pos).normalized())
        .unwrap();
    let rays = vec![BatchRay {
        ray: Some(ray),
        intensity: Rgb::new(3.0, 2.5, 2.0),
        target: Rgb::new(0.3, 0.2, 0.1),
        view: 0,
        pixel: 0,
    }];
    let mut rng = ray_rng(3, 0, 0);
    let samplings: Vec<Option<RaySampling>> = vec![Some(sample_ray(&ray, &coarse, 8, 8, &mut rng))];
    let model = Default::default();
    let loss = |c: &NeuralField, f: &NeuralField| batch_loss(c, f, &rays, &samplings, &config, model, None)[0].loss;

    let mut gc = ParamGrads::zeros_like(&coarse.params);
    let mut gf = ParamGrads::zeros_like(&fine.params);
    batch_loss(&coarse, &fine, &rays, &samplings, &config, model, Some((&mut gc, &mut gf)));

    let mut worst = 0.0f64;
    let mut checked = 0;
    for which in 0..2 {
        let analytic = if which == 0 { &gc.data } else { &gf.data };
        let n = analytic.len();
        for i in 0..n {
            let (mut c, mut f) = (coarse.clone(), fine.clone());
            let target = if which == 0 { &mut c } else { &mut f };
            let theta = target.params.data[i];
            let h = 1e-5 * theta.abs().max(1.0);
            target.params.data[i] = theta + h;
            let up = loss(&c, &f);
            let target = if which == 0 { &mut c } else { &mut f };
            target.params.data[i] = theta - h;
            let down = loss(&c, &f);
            let fd = (up - down) / (2.0 * h);
            let g = analytic[i];
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-7);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-4 && elapsed.as_secs_f64() < 120.0;
    report(
        3,
        pass,
        format!("{checked} parameters, max relative error {worst:.2e}"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_4_brdf_suite() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = random_unit(&mut rng);
        let wi = random_unit(&mut rng);
        let wo = random_unit(&mut rng);
        let p = SurfaceBrdfParams {
            albedo: Rgb::new(rng.gen(), rng.gen(), rng.gen()),
            roughness: rng.gen_range(0.01..1.0),
            f0: DEFAULT_F0,
        };
        let a = eval_microfacet(n, wo, wi, &p);
        let b = eval_microfacet(n, wi, wo, &p);
        worst = worst.max(a.max_abs_diff(b));
    }
    // integral of D(h) cos(theta_h) over the hemisphere, uniform in solid angle
    let mut norms = Vec::new();
    for alpha in [0.1, 0.3, 0.8] {
        let m = 1_000_000;
        let mut acc = 0.0;
        // jittered strata in cos(theta)
        for k in 0..m {
            let c = (k as f64 + rng.gen::<f64>()) / m as f64;
            acc += ggx_d(c, alpha) * c;
        }
        norms.push(acc / m as f64 * 2.0 * PI);
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && norms.iter().all(|v| (v - 1.0).abs() < 0.02) && elapsed.as_secs_f64() < 60.0;
    report(
        4,
        pass,
        format!("reciprocity max diff {worst:.1e}, D normalization {norms:.4?}"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_5_importance_sampler_chi_square() {
    let start = Instant::now();
    let profiles: [Vec<f64>; 3] = [
        vec![1.0; 16],
        (0..32).map(|j| (-((j as f64 - 20.0) / 3.0).powi(2)).exp()).collect(),
        vec![0.0, 3.0, 0.0, 0.0, 1.0, 0.5, 0.0, 2.0, 0.25, 0.0],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ps = Vec::new();
    for w in &profiles {
        let t: Vec<f64> = (0..w.len()).map(|j| j as f64 * 0.1).collect();
        let bins = RaySamples::from_sorted(t, w.len() as f64 * 0.1);
        let total = 100_000;
        let mut counts = vec![0usize; w.len()];
        let mut drawn = 0;
        while drawn < total {
            let n = 128.min(total - drawn);
            for x in sample_piecewise_constant(w, &bins, n, &mut rng).unwrap() {
                let j = ((x / 0.1).floor() as usize).min(w.len() - 1);
                counts[j] += 1;
            }
            drawn += n;
        }
        let sum: f64 = w.iter().sum();
        let mut chi2 = 0.0;
        let mut dof = 0;
        for (c, wj) in counts.iter().zip(w) {
            let expected = wj / sum * total as f64;
            if expected > 0.0 {
                chi2 += (*c as f64 - expected).powi(2) / expected;
                dof += 1;
            } else {
                assert_eq!(*c, 0, "draw in a zero-weight bin");
            }
        }
        ps.push(1.0 - ChiSquared::new((dof - 1) as f64).unwrap().cdf(chi2));
    }
    let elapsed = start.elapsed();
    let pass = ps.iter().all(|&p| p > 0.01) && elapsed.as_secs_f64() < 10.0;
    report(5, pass, format!("p-values {ps:.3?}"), elapsed);
    assert!(pass);
}

#[test]
fn criterion_6_lightcache_fidelity() {
    let start = Instant::now();
    let scene = AnalyticScene::two_blob_occluder();
    let light = Vec3::new(0.6, 0.3, 3.0);
    let step = scene.bounds.diagonal() / 4096.0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let points: Vec<Vec3> = (0..1000).map(|_| random_in(&scene.bounds, &mut rng)).collect();
    let truth: Vec<f64> = points
        .iter()
        .map(|&x| brute_force_light_transmittance(x, light, &scene, step))
        .collect();
    let mut stats = Vec::new();
    for res in [32, 64, 128] {
        let settings = CacheSettings {
            resolution: res,
            ..Default::default()
        };
        let cache = TransmittanceVolume::build(&scene, &scene, light, &settings).unwrap();
        let errs: Vec<f64> = points.iter().zip(&truth).map(|(&x, t)| (cache.query(x) - t).abs()).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let max = errs.iter().cloned().fold(0.0, f64::max);
        stats.push((res, mean, max));
    }
    let elapsed = start.elapsed();
    let (_, mean128, max128) = stats[2];
    let non_increasing = stats.windows(2).all(|w| w[1].1 <= w[0].1);
    let pass = mean128 < 0.02 && max128 < 0.1 && non_increasing && elapsed.as_secs_f64() < 120.0;
    let detail = stats
        .iter()
        .map(|(r, m, x)| format!("{r}^2 mean {m:.4} max {x:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(6, pass, detail, elapsed);
    assert!(pass);
}

/// A small field fitted briefly to a homogeneous sphere, shared by
/// criteria 9 and 10.
fn briefly_trained(levels: usize, iterations: usize) -> (Dataset, TrainState) {
    let scene = AnalyticScene::homog_sphere(5.0, 0.5);
    let spec = DatasetSpec {
        n_views: 8,
        resolution: 16,
        levels,
        ..Default::default()
    };
    let ds = render_dataset(&scene, &spec).unwrap();
    let config = TrainConfig {
        learning_rate: 5e-4,
        batch_rays: 64,
        iterations,
        width: 32,
        n_coarse: 32,
        n_fine: 64,
        checkpoint_every: 0,
        seed: 9,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = TrainRun {
        out_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let state = train(&ds, &config, &run).unwrap();
    (ds, state)
}

#[test]
fn criterion_9_collocated_consistency() {
    let start = Instant::now();
    let (ds, state) = briefly_trained(10, 100);
    let settings = RenderSettings {
        model: ds.model,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let step = ds.bounds.diagonal() / 8192.0;
    let mut worst = 0.0f64;
    let mut mean = 0.0;
    let mut count = 0;
    while count < 256 {
        let view = &ds.views[rng.gen_range(0..ds.views.len())];
        let (px, py) = (rng.gen_range(0.0..16.0), rng.gen_range(0.0..16.0));
        let dir = view.camera.direction_through(px, py);
        let Some(ray) = ds.bounds.clip_ray(view.camera.position, dir) else {
            continue;
        };
        let seed = rng.gen();
        let colloc = render_ray_collocated(
            &ray,
            view.light.intensity,
            &state.coarse,
            &state.fine,
            &settings,
            &mut ray_rng(seed, 0, 0),
        );
        let tau = RayDepthOracle::new(&state.fine, &ray, step);
        let light = PointLight::new(ray.origin, view.light.intensity).unwrap();
        let full = render_ray_full(
            &ray,
            &state.coarse,
            &state.fine,
            &light,
            &tau,
            &settings,
            &mut ray_rng(seed, 0, 0),
        );
        let d = full.max_abs_diff(colloc.fine);
        worst = worst.max(d);
        mean += d;
        count += 1;
    }
    mean /= count as f64;
    let elapsed = start.elapsed();
    let pass = worst < 1e-3 && elapsed.as_secs_f64() < 60.0;
    report(
        9,
        pass,
        format!("max per-channel difference {worst:.2e}, mean {mean:.2e} over {count} rays"),
        elapsed,
    );
    assert!(pass);
}

/// Brute-force light transmittance for a light at the ray origin: every
/// shading point lies on the ray, so one fine midpoint march gives the
/// optical depth to all of them.
struct RayDepthOracle {
    origin: Vec3,
    step: f64,
    /// Optical depth from the origin to `i * step`.
    depth: Vec<f64>,
}

impl RayDepthOracle {
    fn new(field: &NeuralField, ray: &Ray, step: f64) -> Self {
        let n = (ray.t_far / step).ceil() as usize + 1;
        let mids: Vec<Vec3> = (0..n).map(|i| ray.origin + ray.direction * ((i as f64 + 0.5) * step)).collect();
        let sig = field.density_many(&mids);
        let mut depth = Vec::with_capacity(n + 1);
        depth.push(0.0);
        for s in sig {
            depth.push(depth.last().unwrap() + s * step);
        }
        Self {
            origin: ray.origin,
            step,
            depth,
        }
    }
}

impl LightTransmittance for RayDepthOracle {
    fn transmittance(&self, x: Vec3) -> f64 {
        let u = (x - self.origin).length() / self.step;
        let i = (u.floor() as usize).min(self.depth.len() - 2);
        let f = u - i as f64;
        (-(self.depth[i] * (1.0 - f) + self.depth[i + 1] * f)).exp()
    }
}

fn export_rms(field: &NeuralField, dims: usize, points: &[Vec3], direct: &[f64]) -> f64 {
    let vol = VolumeExport::sample(field, [dims; 3]).unwrap();
    let vol = VolumeExport::from_bytes(&vol.to_bytes()).unwrap();
    let sq: f64 = points
        .iter()
        .zip(direct)
        .map(|(&x, d)| (vol.trilinear(x, 0) - d).powi(2))
        .sum();
    (sq / points.len() as f64).sqrt()
}

#[test]
fn criterion_10_export_convergence() {
    let start = Instant::now();
    let (_, state) = briefly_trained(4, 60);
    let field = &state.fine;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // stay half a coarse voxel away from the faces, where lookups clamp
    let inner = Aabb::new(Vec3::splat(-0.95), Vec3::splat(0.95));
    let points: Vec<Vec3> = (0..100).map(|_| random_in(&inner, &mut rng)).collect();
    let direct = field.density_many(&points);
    let r32 = export_rms(field, 32, &points, &direct);
    let r64 = export_rms(field, 64, &points, &direct);
    let elapsed = start.elapsed();
    let pass = r64 <= 0.6 * r32 && elapsed.as_secs_f64() < 60.0;
    report(
        10,
        pass,
        format!("RMS sigma error 32^3 {r32:.4e}, 64^3 {r64:.4e}, ratio {:.3}", r64 / r32),
        elapsed,
    );
    assert!(pass);
}

/// Dataset and trained state for the desk-scale fit.
fn desk_fit() -> &'static (AnalyticScene, Dataset, TrainState) {
    static FIT: OnceLock<(AnalyticScene, Dataset, TrainState)> = OnceLock::new();
    FIT.get_or_init(train_desk_fit)
}

fn train_desk_fit() -> (AnalyticScene, Dataset, TrainState) {
    let scene = AnalyticScene::checker_sphere();
    if let Ok(dir) = std::env::var("NRF_FIT_DIR") {
        let dir = PathBuf::from(dir);
        let ds = Dataset::load(dir.join("data")).unwrap();
        let run = dir.join("run");
        let it = nrf::trainer::latest_checkpoint(&run).expect("fit directory has a checkpoint");
        let state = TrainState::load(&run, it, ds.bounds).unwrap();
        assert!(it >= 20_000, "fit stopped at iteration {it}");
        return (scene, ds, state);
    }
    let ds = render_dataset(&scene, &DatasetSpec::default()).unwrap();
    let config = nrf::trainer::desk_fit_config();
    let dir = tempfile::tempdir().unwrap();
    let run = TrainRun {
        out_dir: dir.path().to_path_buf(),
        log_every: 500,
        ..Default::default()
    };
    let state = train(&ds, &config, &run).unwrap();
    (scene, ds, state)
}

/// A pose between the training views on the same sphere.
fn held_out_camera(scene: &AnalyticScene, res: usize) -> Camera {
    let (az, el) = (37f64.to_radians(), 33f64.to_radians());
    let pos = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * 3.0;
    Camera::look_at(pos, scene.bounds.center(), Vec3::Z, 40.0, res, res).unwrap()
}

#[test]
fn criterion_7_desk_scale_fit() {
    let start = Instant::now();
    let (scene, ds, state) = desk_fit();
    let settings = RenderSettings {
        model: ds.model,
        ..Default::default()
    };
    let cam = held_out_camera(scene, 64);
    let intensity = scene.auto_intensity(scene.surface_distance(cam.position));
    let light = PointLight::new(cam.position, intensity).unwrap();
    let oracle = render_ground_truth(scene, &cam, &light, reference_step(scene)).unwrap();
    let ours = render_image(&cam, &state.coarse, &state.fine, RenderMode::Collocated(intensity), &settings, 0).unwrap();
    let p = psnr(&ours, &oracle).unwrap();
    let pass = p > 28.0;
    report(
        7,
        pass,
        format!("held-out collocated PSNR {p:.2} dB after {} iterations", state.iteration),
        start.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_8_relighting_and_cast_shadow() {
    let (scene, ds, state) = desk_fit();
    let start = Instant::now();
    let settings = RenderSettings {
        model: ds.model,
        ..Default::default()
    };
    let cam = held_out_camera(scene, 64);
    let intensity = scene.auto_intensity(scene.surface_distance(cam.position));
    let c = scene.bounds.center();
    let off = c + rotate_z(cam.position - c, 45f64.to_radians());
    let relight = PointLight::new(off, intensity).unwrap();
    let oracle = render_ground_truth(scene, &cam, &relight, reference_step(scene)).unwrap();
    let cache = TransmittanceVolume::build(&state.coarse, &state.fine, off, &CacheSettings::default()).unwrap();
    let mode = RenderMode::Full {
        light: relight,
        tau: &cache,
    };
    let ours = render_image(&cam, &state.coarse, &state.fine, mode, &settings, 0).unwrap();
    let p = psnr(&ours, &oracle).unwrap();
    let ratio = shadow_darkening();
    let pass = p > 22.0 && ratio > 10.0;
    report(
        8,
        pass,
        format!("relit PSNR {p:.2} dB, two-blob umbra darkening {ratio:.1}x"),
        start.elapsed(),
    );
    assert!(pass);
}

fn rotate_z(v: Vec3, a: f64) -> Vec3 {
    Vec3::new(v.x * a.cos() - v.y * a.sin(), v.x * a.sin() + v.y * a.cos(), v.z)
}

/// Mean unoccluded over mean occluded radiance inside the umbra of the
/// two-blob scene, both rendered through the light cache.
fn shadow_darkening() -> f64 {
    let full = AnalyticScene::two_blob_occluder();
    let mut open = full.clone();
    open.blobs.truncate(1);
    let light_pos = Vec3::new(0.0, 0.0, 3.0);
    let light = PointLight::new(light_pos, Rgb::splat(30.0)).unwrap();
    let cam = Camera::look_at(Vec3::new(2.5, 0.0, 0.3), Vec3::ZERO, Vec3::Z, 40.0, 64, 64).unwrap();
    let settings = RenderSettings::default();
    let render = |scene: &AnalyticScene| {
        let cache = TransmittanceVolume::build(scene, scene, light_pos, &CacheSettings::default()).unwrap();
        let mode = RenderMode::Full { light, tau: &cache };
        render_image(&cam, scene, scene, mode, &settings, 0).unwrap()
    };
    let (dark, lit) = (render(&full), render(&open));
    let (rc, rr) = (Vec3::new(0.0, 0.0, -0.35), 0.45);
    let occ = Vec3::new(0.0, 0.0, 0.55);
    let (mut sum_dark, mut sum_lit, mut n) = (0.0, 0.0, 0);
    for y in 0..64 {
        for x in 0..64 {
            let d = cam.direction_through(x as f64 + 0.5, y as f64 + 0.5);
            // analytic hit on the receiver's nominal surface
            let oc = cam.position - rc;
            let b = oc.dot(d);
            let disc = b * b - (oc.length_squared() - rr * rr);
            if disc <= 0.0 {
                continue;
            }
            let t = -b - disc.sqrt();
            let hit = cam.position + d * t;
            if segment_distance(occ, cam.position, hit) < 0.45 {
                continue;
            }
            if segment_distance(occ, hit, light_pos) < 0.2 {
                sum_dark += dark.get(x, y).mean();
                sum_lit += lit.get(x, y).mean();
                n += 1;
            }
        }
    }
    assert!(n > 10, "umbra covers only {n} pixels");
    sum_lit / sum_dark.max(1e-12)
}

fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.length_squared()).clamp(0.0, 1.0);
    (a + ab * t - p).length()
}
