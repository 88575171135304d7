//! Self-check suite behind the `validate` command.
//!
//! Trivial checks exercise file formats and the empty scene; derived checks
//! compare the renderer, sampler, reflectance and gradients with
//! independent closed forms or brute force.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::export::VolumeExport;
use crate::field::NeuralField;
use crate::geometry::{Aabb, Camera, PointLight, Ray, Rgb, Vec3};
use crate::image::Image;
use crate::lightcache::{CacheSettings, TransmittanceVolume};
use crate::mlp::{MlpArch, MlpParams, ParamGrads};
use crate::raymarch::{
    brute_force_light_transmittance, contribution_weights, exit_transmittance, ray_rng, render_image,
    sample_piecewise_constant, stratified_sample, stratified_sample_with, view_transmittance,
    BruteForceTransmittance, ContributionWeights, RaySamples, RenderMode, RenderSettings, TransmittanceConvention,
};
use crate::reflectance::{eval_microfacet, ggx_d, SurfaceBrdfParams, DEFAULT_F0};
use crate::scenegen::AnalyticScene;
use crate::trainer::{batch_loss, sample_ray, BatchRay, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckClass {
    Trivial,
    Derived,
}

/// Which variant of the suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    Standard,
    /// Trivial checks only.
    EmptyScene,
    /// Standard suite with a sign error planted in the contribution
    /// weights; the telescoping check must catch it.
    WeightSignError,
}

impl std::str::FromStr for Fixture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "standard" => Ok(Self::Standard),
            "empty-scene" => Ok(Self::EmptyScene),
            "weight-sign-error" => Ok(Self::WeightSignError),
            _ => Err(format!("unknown fixture {s:?} (standard, empty-scene, weight-sign-error)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub class: CheckClass,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type CheckResult = Result<String, String>;
type WeightsFn = fn(&[f64], &[f64]) -> ContributionWeights;

fn planted_sign_error(sigmas: &[f64], deltas: &[f64]) -> ContributionWeights {
    let transmittance = view_transmittance(sigmas, deltas, TransmittanceConvention::Exclusive);
    let weights = transmittance
        .iter()
        .zip(sigmas.iter().zip(deltas))
        .map(|(t, (s, d))| t * (1.0 - (s * d).exp()))
        .collect();
    ContributionWeights {
        weights,
        transmittance,
        exit: exit_transmittance(sigmas, deltas),
    }
}

fn ensure(ok: bool, detail: String) -> CheckResult {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn run_suite(fixture: Fixture) -> Vec<CheckOutcome> {
    let weights: WeightsFn = match fixture {
        Fixture::WeightSignError => planted_sign_error,
        _ => contribution_weights,
    };
    let mut checks: Vec<(&'static str, CheckClass, Box<dyn Fn() -> CheckResult>)> = vec![
        ("stratified one sample per bin", CheckClass::Trivial, Box::new(check_stratified)),
        ("pfm bitwise round trip", CheckClass::Trivial, Box::new(check_pfm)),
        ("checkpoint bitwise round trip", CheckClass::Trivial, Box::new(check_checkpoint)),
        ("volume export on empty field", CheckClass::Trivial, Box::new(check_empty_export)),
        ("light cache on empty field", CheckClass::Trivial, Box::new(check_empty_cache)),
        ("empty scene renders background", CheckClass::Trivial, Box::new(check_empty_render)),
    ];
    if fixture != Fixture::EmptyScene {
        checks.extend([
            (
                "analytic transmittance",
                CheckClass::Derived,
                Box::new(check_analytic_transmittance) as Box<dyn Fn() -> CheckResult>,
            ),
            ("weights telescoping", CheckClass::Derived, Box::new(move || check_telescoping(weights))),
            ("brdf reciprocity", CheckClass::Derived, Box::new(check_reciprocity)),
            ("ggx normalization", CheckClass::Derived, Box::new(check_ggx_normalization)),
            ("importance sampler chi-square", CheckClass::Derived, Box::new(check_sampler)),
            ("light cache vs brute force", CheckClass::Derived, Box::new(check_cache)),
            ("cache vs brute-force render", CheckClass::Derived, Box::new(check_tau_modes)),
            ("pipeline gradient", CheckClass::Derived, Box::new(check_gradient)),
        ]);
    }
    checks
        .into_iter()
        .map(|(name, class, f)| {
            let start = Instant::now();
            let r = f();
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match r {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckOutcome {
                name,
                class,
                passed,
                detail,
                seconds,
            }
        })
        .collect()
}

pub fn format_table(outcomes: &[CheckOutcome]) -> String {
    let mut s = String::new();
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    for o in outcomes {
        let _ = writeln!(
            s,
            "{:<4} {:<7} {:<width$}  {:>6.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            match o.class {
                CheckClass::Trivial => "trivial",
                CheckClass::Derived => "derived",
            },
            o.name,
            o.seconds,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    let _ = writeln!(s, "{} checks, {failed} failed", outcomes.len());
    s
}

fn check_stratified() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ray = Ray::new(Vec3::ZERO, Vec3::X, 0.5, 2.5).unwrap();
    for _ in 0..200 {
        let s = stratified_sample(&ray, 16, &mut rng);
        for (j, t) in s.t.iter().enumerate() {
            let lo = 0.5 + 2.0 * j as f64 / 16.0;
            if !(*t >= lo && *t < lo + 2.0 / 16.0) {
                return Err(format!("sample {j} at {t} outside its bin"));
            }
        }
    }
    Ok("200 draws of 16 bins".into())
}

fn check_pfm() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut img = Image::new(7, 5);
    for p in img.pixels.iter_mut() {
        *p = Rgb::new(rng.gen::<f32>() as f64, rng.gen_range(-3.0f32..3.0) as f64, 1e-20f32 as f64);
    }
    let mut buf = Vec::new();
    img.write_pfm(&mut buf).map_err(|e| e.to_string())?;
    let back = Image::read_pfm(&mut &buf[..])?;
    ensure(back == img, "7x5 random image".into())
}

fn check_checkpoint() -> CheckResult {
    let p = MlpParams::init(3, 8, 2).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    p.write_to(&mut buf).map_err(|e| e.to_string())?;
    let back = MlpParams::from_bytes(&buf)?;
    let mut again = Vec::new();
    back.write_to(&mut again).map_err(|e| e.to_string())?;
    ensure(again == buf && back == p, format!("{} bytes", buf.len()))
}

fn check_empty_export() -> CheckResult {
    let v = VolumeExport::sample(&AnalyticScene::empty(), [2, 2, 2]).map_err(|e| e.to_string())?;
    let bytes = v.to_bytes();
    let back = VolumeExport::from_bytes(&bytes)?;
    let sigma_zero = (0..8).all(|i| v.value([i & 1, i >> 1 & 1, i >> 2], 0) == 0.0);
    ensure(sigma_zero && back.to_bytes() == bytes, "2^3 grid, sigma = 0, bytes round trip".into())
}

fn check_empty_cache() -> CheckResult {
    let scene = AnalyticScene::empty();
    let settings = CacheSettings {
        resolution: 8,
        ..Default::default()
    };
    let cache = TransmittanceVolume::build(&scene, &scene, Vec3::new(0.0, 0.0, 3.0), &settings).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let worst = (0..200)
        .map(|_| {
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (cache.query(x) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    ensure(worst == 0.0, format!("max |tau - 1| = {worst:.1e}"))
}

fn check_empty_render() -> CheckResult {
    let scene = AnalyticScene::empty();
    let cam = Camera::look_at(Vec3::new(0.0, -3.0, 1.0), Vec3::ZERO, Vec3::Z, 40.0, 8, 8).map_err(|e| e.to_string())?;
    let bg = Rgb::new(0.1, 0.2, 0.3);
    let settings = RenderSettings {
        n_coarse: 8,
        n_fine: 8,
        background: bg,
        ..Default::default()
    };
    let img = render_image(&cam, &scene, &scene, RenderMode::Collocated(Rgb::splat(10.0)), &settings, 0)
        .map_err(|e| e.to_string())?;
    let worst = img.pixels.iter().map(|p| p.max_abs_diff(bg)).fold(0.0, f64::max);
    ensure(worst < 1e-12, format!("max deviation from background {worst:.1e}"))
}

fn check_analytic_transmittance() -> CheckResult {
    let ray = Ray::new(Vec3::ZERO, Vec3::X, 0.0, 1.0).unwrap();
    let exact = (-2.0f64).exp();
    let errs: Vec<f64> = [16, 64, 256, 1024]
        .iter()
        .map(|&n| {
            let s = stratified_sample_with(&ray, n, |_| 0.5);
            (exit_transmittance(&vec![2.0; n], &s.dt) - exact).abs()
        })
        .collect();
    let ok = errs[3] < 1e-3 && errs.windows(2).all(|w| w[1] < w[0]);
    ensure(ok, format!("error at N=1024 {:.1e}", errs[3]))
}

fn check_telescoping(weights: WeightsFn) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..100);
        let sig: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..30.0)).collect();
        let dt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.1)).collect();
        let w = weights(&sig, &dt);
        worst = worst.max((w.weights.iter().sum::<f64>() + w.exit - 1.0).abs());
    }
    ensure(worst <= 1e-12, format!("max |sum a + tau_exit - 1| = {worst:.1e}"))
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

fn check_reciprocity() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (n, a, b) = (random_unit(&mut rng), random_unit(&mut rng), random_unit(&mut rng));
        let p = SurfaceBrdfParams {
            albedo: Rgb::new(rng.gen(), rng.gen(), rng.gen()),
            roughness: rng.gen_range(0.01..1.0),
            f0: DEFAULT_F0,
        };
        worst = worst.max(eval_microfacet(n, a, b, &p).max_abs_diff(eval_microfacet(n, b, a, &p)));
    }
    ensure(worst <= 1e-12, format!("max asymmetry {worst:.1e}"))
}

fn check_ggx_normalization() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = 100_000;
    let mut worst = 0.0f64;
    for alpha in [0.1, 0.3, 0.8] {
        let sum: f64 = (0..m)
            .map(|k| {
                let c = (k as f64 + rng.gen::<f64>()) / m as f64;
                ggx_d(c, alpha) * c
            })
            .sum();
        worst = worst.max((sum / m as f64 * 2.0 * PI - 1.0).abs());
    }
    ensure(worst < 0.02, format!("max deviation from 1: {worst:.2e}"))
}

fn check_sampler() -> CheckResult {
    let w = [0.0, 2.0, 1.0, 0.0, 4.0, 0.5, 1.5, 0.0];
    let bins = RaySamples::from_sorted((0..8).map(|j| j as f64).collect(), 8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 40_000;
    let mut counts = [0usize; 8];
    for x in sample_piecewise_constant(&w, &bins, draws, &mut rng).ok_or("no draws")? {
        counts[(x.floor() as usize).min(7)] += 1;
    }
    let total: f64 = w.iter().sum();
    let mut chi2 = 0.0;
    for (c, wj) in counts.iter().zip(w) {
        let e = wj / total * draws as f64;
        if e == 0.0 {
            if *c > 0 {
                return Err("draw in a zero-weight bin".into());
            }
            continue;
        }
        chi2 += (*c as f64 - e).powi(2) / e;
    }
    // 99th percentile of chi-square with 4 degrees of freedom
    ensure(chi2 < 13.28, format!("chi2 = {chi2:.2} on 4 dof"))
}

fn check_cache() -> CheckResult {
    let scene = AnalyticScene::homog_sphere(1.0, 0.5);
    let light = Vec3::new(0.3, -0.2, 3.0);
    let settings = CacheSettings {
        resolution: 32,
        ..Default::default()
    };
    let cache = TransmittanceVolume::build(&scene, &scene, light, &settings).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let step = scene.bounds.diagonal() / 2048.0;
    let n = 300;
    let mean = (0..n)
        .map(|_| {
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (cache.query(x) - brute_force_light_transmittance(x, light, &scene, step)).abs()
        })
        .sum::<f64>()
        / n as f64;
    ensure(mean < 0.01, format!("mean |error| {mean:.1e}"))
}

fn check_tau_modes() -> CheckResult {
    let scene = AnalyticScene::two_blob_occluder();
    let cam = Camera::look_at(Vec3::new(2.5, 0.0, 0.3), Vec3::ZERO, Vec3::Z, 40.0, 16, 16).map_err(|e| e.to_string())?;
    let light = PointLight::new(Vec3::new(0.5, 0.0, 3.0), Rgb::splat(30.0)).map_err(|e| e.to_string())?;
    let settings = RenderSettings::default();
    let cache = TransmittanceVolume::build(&scene, &scene, light.position, &CacheSettings::default())
        .map_err(|e| e.to_string())?;
    let brute = BruteForceTransmittance {
        field: &scene,
        light: light.position,
        step: scene.bounds.diagonal() / 1024.0,
    };
    let render = |tau: &dyn crate::raymarch::LightTransmittance| {
        render_image(&cam, &scene, &scene, RenderMode::Full { light, tau }, &settings, 0)
    };
    let a = render(&cache).map_err(|e| e.to_string())?;
    let b = render(&brute).map_err(|e| e.to_string())?;
    let (num, den) = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .fold((0.0, 0.0), |(n, d), (p, q)| (n + p.to_array().iter().zip(q.to_array()).map(|(x, y)| (x - y).abs()).sum::<f64>(), d + q.sum()));
    let rel = num / den.max(1e-12);
    ensure(rel < 0.02, format!("mean relative difference {rel:.2e}"))
}

fn check_gradient() -> CheckResult {
    let bounds = Aabb::unit();
    let arch = MlpArch::new(14, 8, 2).map_err(|e| e.to_string())?;
    let coarse = NeuralField::new(MlpParams::init_with_arch(11, arch).map_err(|e| e.to_string())?, bounds);
    let fine = NeuralField::new(MlpParams::init_with_arch(12, arch).map_err(|e| e.to_string())?, bounds);
    let config = TrainConfig {
        n_coarse: 4,
        n_fine: 4,
        beta: 0.1,
        ..Default::default()
    };
    let origin = Vec3::new(-2.0, 0.5, 1.0);
    let ray = bounds.clip_ray(origin, (Vec3::new(0.1, 0.0, -0.1) - origin).normalized()).ok_or("ray misses")?;
    let rays = [BatchRay {
        ray: Some(ray),
        intensity: Rgb::splat(4.0),
        target: Rgb::new(0.2, 0.3, 0.1),
        view: 0,
        pixel: 0,
    }];
    let samplings = [Some(sample_ray(&ray, &coarse, 4, 4, &mut ray_rng(1, 0, 0)))];
    let model = Default::default();
    let mut gc = ParamGrads::zeros_like(&coarse.params);
    let mut gf = ParamGrads::zeros_like(&fine.params);
    batch_loss(&coarse, &fine, &rays, &samplings, &config, model, Some((&mut gc, &mut gf)));
    let mut worst = 0.0f64;
    for (which, g) in [(0, &gc.data), (1, &gf.data)] {
        for i in (0..g.len()).step_by(7) {
            let eval = |delta: f64| {
                let (mut c, mut f) = (coarse.clone(), fine.clone());
                let net = if which == 0 { &mut c } else { &mut f };
                net.params.data[i] += delta;
                batch_loss(&c, &f, &rays, &samplings, &config, model, None)[0].loss
            };
            let h = 1e-5;
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-7));
        }
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.1e}"))
}
