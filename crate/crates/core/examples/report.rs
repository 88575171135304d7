//! Side-by-side montage of flash and relit renders plus a plotted series.

use nrf::geometry::{Camera, PointLight, Rgb, Vec3};
use nrf::report::{psnr, Report, Series};
use nrf::scenegen::{reference_step, render_ground_truth, AnalyticScene};

fn main() -> nrf::Result<()> {
    let scene = AnalyticScene::two_blob_occluder();
    let eye = Vec3::new(2.5, 0.0, 0.3);
    let cam = Camera::look_at(eye, Vec3::ZERO, Vec3::Z, 40.0, 48, 48)?;
    let step = reference_step(&scene);
    let mut report = Report::new("report_example");
    let mut series = Vec::new();
    let flash = render_ground_truth(&scene, &cam, &PointLight::new(eye, Rgb::splat(12.0))?, step)?;
    for (i, deg) in [0.0f64, 45.0, 90.0].iter().enumerate() {
        let a = deg.to_radians();
        let light = PointLight::new(Vec3::new(2.5 * a.cos(), 2.5 * a.sin(), 2.0), Rgb::splat(20.0))?;
        let img = render_ground_truth(&scene, &cam, &light, step)?;
        series.push((*deg, psnr(&img, &flash)?));
        report.images.push((format!("light_{i}"), img));
    }
    report.images.insert(0, ("flash".into(), flash));
    report.series.push(Series {
        label: "psnr_vs_flash".into(),
        points: series,
    });
    for p in report.emit()? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
