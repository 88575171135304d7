//! A freshly initialized field network: evaluate its heads at a few points
//! and round-trip the parameters through a checkpoint file.

use nrf::field::{Field, NeuralField};
use nrf::geometry::{Aabb, Vec3};
use nrf::mlp::MlpParams;

fn main() -> nrf::Result<()> {
    let params = MlpParams::init(1, 64, 10)?;
    println!("{:?}: {} parameters", params.arch(), params.arch().param_count());
    let field = NeuralField::new(params, Aabb::unit());
    for p in [Vec3::ZERO, Vec3::new(0.5, -0.5, 0.2), Vec3::new(2.0, 0.0, 0.0)] {
        let o = field.eval(p);
        println!(
            "{p:?}: sigma {:.4} normal {:?} albedo {:?} roughness {:.3}",
            o.sigma, o.normal, o.albedo, o.roughness
        );
    }
    let path = std::env::temp_dir().join("nrf_field_example.ckpt");
    field.params.save(&path)?;
    let back = MlpParams::load(&path)?;
    println!("checkpoint {} reloads identically: {}", path.display(), back == field.params);
    Ok(())
}
