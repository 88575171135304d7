//! A short fit of a small network to flash images of the homogeneous
//! sphere, followed by a held-out render.

use nrf::geometry::{Camera, PointLight, Vec3};
use nrf::raymarch::{render_image, RenderMode, RenderSettings};
use nrf::report::psnr;
use nrf::scenegen::{reference_step, render_dataset, render_ground_truth, AnalyticScene, DatasetSpec};
use nrf::trainer::{train, TrainConfig, TrainRun};

fn main() -> nrf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let scene = AnalyticScene::homog_sphere(5.0, 0.5);
    let spec = DatasetSpec {
        n_views: 8,
        resolution: 16,
        levels: 5,
        ..Default::default()
    };
    let ds = render_dataset(&scene, &spec)?;
    let config = TrainConfig {
        width: 32,
        learning_rate: 5e-4,
        batch_rays: 64,
        iterations: 300,
        n_coarse: 32,
        n_fine: 64,
        checkpoint_every: 0,
        ..Default::default()
    };
    let run = TrainRun {
        out_dir: std::env::temp_dir().join("nrf_train_sphere"),
        resume: false,
        log_every: 50,
    };
    let state = train(&ds, &config, &run)?;

    let eye = Vec3::new(1.8, 1.8, 1.2);
    let cam = Camera::look_at(eye, Vec3::ZERO, Vec3::Z, 40.0, 32, 32)?;
    let intensity = scene.auto_intensity(scene.surface_distance(eye));
    let truth = render_ground_truth(&scene, &cam, &PointLight::new(eye, intensity)?, reference_step(&scene))?;
    let settings = RenderSettings {
        n_coarse: 32,
        n_fine: 64,
        ..Default::default()
    };
    let fit = render_image(&cam, &state.coarse, &state.fine, RenderMode::Collocated(intensity), &settings, 0)?;
    println!("held-out PSNR after {} iterations: {:.2} dB", state.iteration, psnr(&fit, &truth)?);
    Ok(())
}
