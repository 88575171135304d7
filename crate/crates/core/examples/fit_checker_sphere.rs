//! Desk-scale fit: 32 collocated 64x64 views of the checker sphere, 20k
//! iterations, then a held-out collocated view and a relit view compared
//! with the reference renderer.
//!
//! ```text
//! cargo run --release --example fit_checker_sphere -- --dir fit
//! ```
//!
//! Interrupted runs continue from the newest checkpoint in `<dir>/run`.

use std::path::PathBuf;

use clap::Parser;
use nrf::dataset::Dataset;
use nrf::geometry::{Camera, PointLight, Vec3};
use nrf::lightcache::{CacheSettings, TransmittanceVolume};
use nrf::raymarch::{render_image, RenderMode, RenderSettings};
use nrf::report::{psnr, read_loss_log, Report, Series};
use nrf::scenegen::{generate_dataset, reference_step, render_ground_truth, AnalyticScene, DatasetSpec};
use nrf::trainer::{desk_fit_config, train, TrainRun};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "fit")]
    dir: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

fn main() -> nrf::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let scene = AnalyticScene::checker_sphere();
    let data_dir = args.dir.join("data");
    let ds = match Dataset::load(&data_dir) {
        Ok(ds) => ds,
        Err(_) => generate_dataset(&scene, &DatasetSpec::default(), &data_dir)?,
    };
    let mut config = desk_fit_config();
    config.iterations = args.iterations.unwrap_or(config.iterations);
    config.width = args.width.unwrap_or(config.width);
    config.batch_rays = args.batch.unwrap_or(config.batch_rays);
    config.learning_rate = args.lr.unwrap_or(config.learning_rate);
    let run = TrainRun {
        out_dir: args.dir.join("run"),
        resume: true,
        log_every: 100,
    };
    let state = train(&ds, &config, &run)?;

    let settings = RenderSettings {
        model: ds.model,
        ..Default::default()
    };
    let center = scene.bounds.center();
    let (az, el) = (37f64.to_radians(), 33f64.to_radians());
    let eye = center + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * 3.0;
    let cam = Camera::look_at(eye, center, Vec3::Z, 40.0, 64, 64)?;
    let intensity = scene.auto_intensity(scene.surface_distance(eye));
    let step = reference_step(&scene);

    let flash = PointLight::new(eye, intensity)?;
    let truth = render_ground_truth(&scene, &cam, &flash, step)?;
    let ours = render_image(&cam, &state.coarse, &state.fine, RenderMode::Collocated(intensity), &settings, 0)?;
    println!("held-out collocated PSNR {:.2} dB", psnr(&ours, &truth)?);

    let (c, s) = (45f64.to_radians().cos(), 45f64.to_radians().sin());
    let d = eye - center;
    let lamp = center + Vec3::new(d.x * c - d.y * s, d.x * s + d.y * c, d.z);
    let relight = PointLight::new(lamp, intensity)?;
    let truth_relit = render_ground_truth(&scene, &cam, &relight, step)?;
    let cache = TransmittanceVolume::build(&state.coarse, &state.fine, lamp, &CacheSettings::default())?;
    let mode = RenderMode::Full {
        light: relight,
        tau: &cache,
    };
    let relit = render_image(&cam, &state.coarse, &state.fine, mode, &settings, 0)?;
    println!("relit (45 degrees off-axis) PSNR {:.2} dB", psnr(&relit, &truth_relit)?);

    let mut report = Report::new(args.dir.join("report"));
    report.images = vec![
        ("reference".into(), truth),
        ("fit".into(), ours),
        ("reference_relit".into(), truth_relit),
        ("fit_relit".into(), relit),
    ];
    report.series.push(Series {
        label: "loss".into(),
        points: read_loss_log(run.out_dir.join(nrf::trainer::LOSS_LOG))?,
    });
    for p in report.emit()? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
