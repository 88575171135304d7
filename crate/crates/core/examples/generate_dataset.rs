//! Writes a synthetic flash dataset (images, poses, manifest) for one of
//! the analytic presets.
//!
//! ```text
//! cargo run --release --example generate_dataset -- two-blob-occluder data/blobs
//! ```

use nrf::scenegen::{generate_dataset, AnalyticScene, DatasetSpec, Preset};

fn main() -> nrf::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset: Preset = args
        .next()
        .unwrap_or_else(|| "homog-sphere".into())
        .parse()?;
    let out = args.next().unwrap_or_else(|| format!("data/{}", preset.name()));
    let spec = DatasetSpec {
        n_views: 16,
        resolution: 32,
        ..Default::default()
    };
    let ds = generate_dataset(&AnalyticScene::preset(preset), &spec, &out)?;
    println!("{} views of {}x{} in {out}", ds.views.len(), spec.resolution, spec.resolution);
    print!("{}", ds.manifest());
    Ok(())
}
