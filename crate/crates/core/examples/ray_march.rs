//! Marching one ray through an analytic sphere: stratified samples,
//! contribution weights, importance samples, then a full flash image.

use nrf::field::Field;
use nrf::geometry::{Camera, Vec3};
use nrf::raymarch::{
    contribution_weights, importance_sample, render_image, stratified_sample, RenderMode, RenderSettings,
};
use nrf::scenegen::AnalyticScene;
use rand::SeedableRng;

fn main() -> nrf::Result<()> {
    let scene = AnalyticScene::checker_sphere();
    let origin = Vec3::new(0.0, -3.0, 0.0);
    let ray = scene.bounds.clip_ray(origin, Vec3::Y).expect("ray hits the box");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);

    let coarse = stratified_sample(&ray, 16, &mut rng);
    let sig = scene.density_many(&coarse.points(&ray));
    let w = contribution_weights(&sig, &coarse.dt);
    for ((t, s), a) in coarse.t.iter().zip(&sig).zip(&w.weights) {
        println!("t {t:.3} sigma {s:6.2} weight {a:.4}");
    }
    println!("sum of weights {:.6}, exit transmittance {:.6}", w.weights.iter().sum::<f64>(), w.exit);
    let merged = importance_sample(&w.weights, &coarse, &ray, 32, &mut rng);
    println!("merged samples: {}", merged.len());

    let cam = Camera::look_at(origin, Vec3::ZERO, Vec3::Z, 40.0, 64, 64)?;
    let intensity = scene.auto_intensity(scene.surface_distance(origin));
    let img = render_image(&cam, &scene, &scene, RenderMode::Collocated(intensity), &RenderSettings::default(), 0)?;
    img.save_png("ray_march.png")?;
    println!("mean radiance {:?}, wrote ray_march.png", img.mean());
    Ok(())
}
