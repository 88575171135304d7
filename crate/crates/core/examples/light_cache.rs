//! Shadows through the light transmittance cache: build it for the
//! two-blob scene, compare queries with brute-force marching, and render
//! a relit view with both sources.

use nrf::geometry::{Camera, PointLight, Rgb, Vec3};
use nrf::lightcache::{CacheSettings, TransmittanceVolume};
use nrf::raymarch::{brute_force_light_transmittance, render_image, BruteForceTransmittance, RenderMode, RenderSettings};
use nrf::scenegen::AnalyticScene;

fn main() -> nrf::Result<()> {
    let scene = AnalyticScene::two_blob_occluder();
    let light = PointLight::new(Vec3::new(0.6, 0.3, 3.0), Rgb::splat(30.0))?;
    let cache = TransmittanceVolume::build(&scene, &scene, light.position, &CacheSettings::default())?;
    println!("{}^2 light rays, {} stored samples", cache.resolution(), cache.sample_count());

    let step = scene.bounds.diagonal() / 4096.0;
    // across the shadow edge just below the receiver's top
    for dx in [0.0, 0.15, 0.3, 0.45, 0.6] {
        let x = Vec3::new(dx, 0.0, 0.05);
        let exact = brute_force_light_transmittance(x, light.position, &scene, step);
        println!("x {dx:.2}: cache {:.4} brute force {exact:.4}", cache.query(x));
    }

    let cam = Camera::look_at(Vec3::new(2.5, 0.0, 0.3), Vec3::ZERO, Vec3::Z, 40.0, 64, 64)?;
    let settings = RenderSettings::default();
    let brute = BruteForceTransmittance {
        field: &scene,
        light: light.position,
        step: scene.bounds.diagonal() / 1024.0,
    };
    let a = render_image(&cam, &scene, &scene, RenderMode::Full { light, tau: &cache }, &settings, 0)?;
    let b = render_image(&cam, &scene, &scene, RenderMode::Full { light, tau: &brute }, &settings, 0)?;
    a.save_png("shadow_cache.png")?;
    b.save_png("shadow_brute_force.png")?;
    println!("wrote shadow_cache.png and shadow_brute_force.png");
    Ok(())
}
