//! Samples a field on a voxel grid, writes the binary volume, reads it
//! back and interpolates between voxel centers.

use nrf::export::VolumeExport;
use nrf::field::Field;
use nrf::geometry::Vec3;
use nrf::scenegen::AnalyticScene;

fn main() -> nrf::Result<()> {
    let scene = AnalyticScene::homog_sphere(5.0, 0.5);
    let vol = VolumeExport::sample(&scene, [32, 32, 32])?;
    let path = std::env::temp_dir().join("nrf_sphere.vol");
    vol.save(&path)?;
    let back = VolumeExport::load(&path)?;
    println!("{:?} voxels, channels {:?}, in {}", back.dims, back.channels, path.display());
    let sigma = back.channel_index("sigma").expect("sigma channel");
    for r in [0.0, 0.3, 0.45, 0.5, 0.55, 0.8] {
        let x = Vec3::new(r, 0.0, 0.0);
        println!("r {r:.2}: grid {:.3} field {:.3}", back.trilinear(x, sigma), scene.density(x));
    }
    Ok(())
}
