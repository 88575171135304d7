//! Microfacet and fiber reflectance across a sweep of incident angles.

use nrf::geometry::{Rgb, Vec3};
use nrf::reflectance::{eval_fur, eval_microfacet, FiberBrdfParams, SurfaceBrdfParams, DEFAULT_F0};

fn main() {
    let n = Vec3::Z;
    let omega_o = Vec3::new(0.3, 0.0, 1.0).normalized();
    let fiber = FiberBrdfParams {
        diffuse: Rgb::splat(0.4),
        specular: Rgb::splat(0.2),
        exponent: 20.0,
    };
    println!("{:>6} {:>12} {:>12} {:>12}", "theta", "rough 0.2", "rough 0.7", "fur");
    for deg in (0..=80).step_by(10) {
        let th = (deg as f64).to_radians();
        let omega_i = Vec3::new(-th.sin(), 0.0, th.cos());
        let f = |roughness| {
            let p = SurfaceBrdfParams {
                albedo: Rgb::splat(0.5),
                roughness,
                f0: DEFAULT_F0,
            };
            eval_microfacet(n, omega_o, omega_i, &p).r
        };
        let fur = eval_fur(Vec3::X, omega_o, omega_i, &fiber).r;
        println!("{deg:>6} {:>12.5} {:>12.5} {:>12.5}", f(0.2), f(0.7), fur);
    }
}
