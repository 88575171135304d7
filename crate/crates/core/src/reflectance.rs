//! Reflectance models `f_r` used by the estimator, with hand-written
//! reverse-mode derivatives.
//!
//! All functions return the pure BRDF value; the cosine foreshortening
//! factor is not included.

use std::f64::consts::{FRAC_1_PI, PI};

use crate::field::{FieldOutput, FieldOutputGrad};
use crate::geometry::{Rgb, Vec3};

pub const DEFAULT_F0: f64 = 0.04;

/// Lambertian diffuse plus isotropic GGX specular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceBrdfParams {
    pub albedo: Rgb,
    /// Perceptual roughness; the GGX width is `roughness^2`.
    pub roughness: f64,
    /// Schlick reflectance at normal incidence.
    pub f0: f64,
}

/// Kajiya-Kay fiber parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberBrdfParams {
    pub diffuse: Rgb,
    pub specular: Rgb,
    pub exponent: f64,
}

/// GGX normal distribution `D(h)` for width `alpha` given `cos(n, h)`.
pub fn ggx_d(cos_nh: f64, alpha: f64) -> f64 {
    if cos_nh <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let d = cos_nh * cos_nh * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

/// `sqrt(a2 + (1 - a2) cos^2)`, the shared root of the Smith terms.
fn smith_root(cos: f64, a2: f64) -> f64 {
    (a2 + (1.0 - a2) * cos * cos).sqrt()
}

/// Smith masking for one direction, `G1 = 2 cos / (cos + root)`.
pub fn smith_g1(cos: f64, alpha: f64) -> f64 {
    2.0 * cos / (cos + smith_root(cos, alpha * alpha))
}

/// Separable Smith masking-shadowing `G1(i) G1(o)`.
pub fn smith_g(cos_i: f64, cos_o: f64, alpha: f64) -> f64 {
    smith_g1(cos_i, alpha) * smith_g1(cos_o, alpha)
}

/// `G1(c) / (2c)`. The specular term is `D F V(i) V(o)`, which stays
/// bounded as both cosines vanish together.
fn smith_v(cos: f64, a2: f64) -> f64 {
    1.0 / (cos + smith_root(cos, a2))
}

pub fn schlick_fresnel(cos_hi: f64, f0: f64) -> f64 {
    f0 + (1.0 - f0) * (1.0 - cos_hi.clamp(0.0, 1.0)).powi(5)
}

/// `f_r(n, omega_o, omega_i)`. Zero unless both directions lie above the
/// surface.
pub fn eval_microfacet(n: Vec3, omega_o: Vec3, omega_i: Vec3, p: &SurfaceBrdfParams) -> Rgb {
    let ci = n.dot(omega_i);
    let co = n.dot(omega_o);
    if ci <= 0.0 || co <= 0.0 {
        return Rgb::BLACK;
    }
    let h = (omega_i + omega_o).normalized();
    let alpha = p.roughness * p.roughness;
    let a2 = alpha * alpha;
    let spec = ggx_d(n.dot(h), alpha) * smith_v(ci, a2) * smith_v(co, a2) * schlick_fresnel(h.dot(omega_i), p.f0);
    p.albedo * FRAC_1_PI + Rgb::splat(spec)
}

/// Gradient of `<upstream, f_r>` with respect to the shading inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MicrofacetGrad {
    pub normal: Vec3,
    pub albedo: Rgb,
    pub roughness: f64,
}

/// Reverse-mode derivative of [`eval_microfacet`]. Zero in the clamped
/// region.
pub fn microfacet_backward(
    n: Vec3,
    omega_o: Vec3,
    omega_i: Vec3,
    p: &SurfaceBrdfParams,
    upstream: Rgb,
) -> MicrofacetGrad {
    let ci = n.dot(omega_i);
    let co = n.dot(omega_o);
    if ci <= 0.0 || co <= 0.0 {
        return MicrofacetGrad::default();
    }
    let h = (omega_i + omega_o).normalized();
    let ch = n.dot(h);
    let r = p.roughness;
    let a2 = r * r * r * r;
    let f = schlick_fresnel(h.dot(omega_i), p.f0);
    let s = upstream.sum();

    // D and its partials
    let (dist, dd_dch, dd_da2) = if ch > 0.0 {
        let d = ch * ch * (a2 - 1.0) + 1.0;
        let d3 = PI * d * d * d;
        (a2 / (PI * d * d), -4.0 * a2 * ch * (a2 - 1.0) / d3, (d - 2.0 * a2 * ch * ch) / d3)
    } else {
        (0.0, 0.0, 0.0)
    };

    // V and its partials for one direction: (v, dv/dcos, dv/da2)
    let v_parts = |c: f64| {
        let root = smith_root(c, a2);
        let v = 1.0 / (c + root);
        (v, -v * v * (1.0 + (1.0 - a2) * c / root), -v * v * (1.0 - c * c) / (2.0 * root))
    };
    let (vi, dvi_dc, dvi_da2) = v_parts(ci);
    let (vo, dvo_dc, dvo_da2) = v_parts(co);

    let dspec_dch = f * vi * vo * dd_dch;
    let dspec_dci = f * dist * dvi_dc * vo;
    let dspec_dco = f * dist * vi * dvo_dc;
    let dspec_da2 = f * (dd_da2 * vi * vo + dist * (dvi_da2 * vo + vi * dvo_da2));

    MicrofacetGrad {
        normal: (omega_i * dspec_dci + omega_o * dspec_dco + h * dspec_dch) * s,
        albedo: upstream * FRAC_1_PI,
        roughness: s * dspec_da2 * 4.0 * r * r * r,
    }
}

fn sin_from_cos(c: f64) -> f64 {
    (1.0 - c * c).max(0.0).sqrt()
}

/// Kajiya-Kay: `diffuse * sin(t, wi) + specular * max(0, cos_i cos_o +
/// sin_i sin_o)^exponent` with angles measured from the tangent.
pub fn eval_fur(tangent: Vec3, omega_o: Vec3, omega_i: Vec3, p: &FiberBrdfParams) -> Rgb {
    let ci = tangent.dot(omega_i);
    let co = tangent.dot(omega_o);
    let (si, so) = (sin_from_cos(ci), sin_from_cos(co));
    let lobe = (ci * co + si * so).max(0.0);
    p.diffuse * si + p.specular * lobe.powf(p.exponent)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FurGrad {
    pub tangent: Vec3,
    pub diffuse: Rgb,
    pub specular: Rgb,
    pub exponent: f64,
}

/// Reverse-mode derivative of [`eval_fur`].
pub fn fur_backward(tangent: Vec3, omega_o: Vec3, omega_i: Vec3, p: &FiberBrdfParams, upstream: Rgb) -> FurGrad {
    let ci = tangent.dot(omega_i);
    let co = tangent.dot(omega_o);
    let (si, so) = (sin_from_cos(ci), sin_from_cos(co));
    let lobe = ci * co + si * so;
    let ud = upstream.mul_elem(p.diffuse).sum();
    let us = upstream.mul_elem(p.specular).sum();

    const SIN_EPS: f64 = 1e-12;
    let dsi_dci = if si > SIN_EPS { -ci / si } else { 0.0 };
    let dso_dco = if so > SIN_EPS { -co / so } else { 0.0 };

    let mut d_ci = ud * dsi_dci;
    let mut d_co = 0.0;
    let mut grad = FurGrad {
        diffuse: upstream * si,
        ..Default::default()
    };
    if lobe > 0.0 {
        let pow = lobe.powf(p.exponent);
        grad.specular = upstream * pow;
        grad.exponent = us * pow * lobe.ln();
        let dpow = us * p.exponent * lobe.powf(p.exponent - 1.0);
        d_ci += dpow * (co + so * dsi_dci);
        d_co += dpow * (ci + si * dso_dco);
    }
    grad.tangent = omega_i * d_ci + omega_o * d_co;
    grad
}

/// Which `f_r` interprets the field's reflectance channels.
///
/// For the fiber model the direction head is the tangent, albedo is the
/// diffuse color and the specular exponent is `1 / roughness`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReflectanceModel {
    Microfacet { f0: f64 },
    Fur { specular: Rgb },
}

impl Default for ReflectanceModel {
    fn default() -> Self {
        ReflectanceModel::Microfacet { f0: DEFAULT_F0 }
    }
}

impl ReflectanceModel {
    pub fn name(&self) -> &'static str {
        match self {
            ReflectanceModel::Microfacet { .. } => "microfacet",
            ReflectanceModel::Fur { .. } => "fur",
        }
    }

    pub fn surface_params(out: &FieldOutput, f0: f64) -> SurfaceBrdfParams {
        SurfaceBrdfParams {
            albedo: out.albedo,
            roughness: out.roughness,
            f0,
        }
    }

    pub fn fiber_params(out: &FieldOutput, specular: Rgb) -> FiberBrdfParams {
        FiberBrdfParams {
            diffuse: out.albedo,
            specular,
            exponent: 1.0 / out.roughness,
        }
    }

    pub fn eval(&self, out: &FieldOutput, omega_o: Vec3, omega_i: Vec3) -> Rgb {
        match *self {
            ReflectanceModel::Microfacet { f0 } => {
                eval_microfacet(out.normal, omega_o, omega_i, &Self::surface_params(out, f0))
            }
            ReflectanceModel::Fur { specular } => {
                eval_fur(out.normal, omega_o, omega_i, &Self::fiber_params(out, specular))
            }
        }
    }

    /// Gradient of `<upstream, f_r>` onto the field outputs (density
    /// gradient left at zero).
    pub fn backward(&self, out: &FieldOutput, omega_o: Vec3, omega_i: Vec3, upstream: Rgb) -> FieldOutputGrad {
        match *self {
            ReflectanceModel::Microfacet { f0 } => {
                let g = microfacet_backward(out.normal, omega_o, omega_i, &Self::surface_params(out, f0), upstream);
                FieldOutputGrad {
                    sigma: 0.0,
                    normal: g.normal,
                    albedo: g.albedo,
                    roughness: g.roughness,
                }
            }
            ReflectanceModel::Fur { specular } => {
                let g = fur_backward(out.normal, omega_o, omega_i, &Self::fiber_params(out, specular), upstream);
                FieldOutputGrad {
                    sigma: 0.0,
                    normal: g.tangent,
                    albedo: g.diffuse,
                    roughness: -g.exponent / (out.roughness * out.roughness),
                }
            }
        }
    }
}

/// Text form `microfacet <f0>` or `fur <r> <g> <b>`.
impl std::fmt::Display for ReflectanceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReflectanceModel::Microfacet { f0 } => write!(f, "microfacet {f0}"),
            ReflectanceModel::Fur { specular: s } => write!(f, "fur {} {} {}", s.r, s.g, s.b),
        }
    }
}

impl std::str::FromStr for ReflectanceModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut it = s.split_whitespace();
        let name = it.next().ok_or("empty reflectance model")?;
        let nums = it
            .map(|v| v.parse::<f64>().map_err(|_| format!("bad number {v:?} in reflectance model")))
            .collect::<Result<Vec<_>, _>>()?;
        match (name, nums.as_slice()) {
            ("microfacet", []) => Ok(Self::default()),
            ("microfacet", [f0]) if (0.0..=1.0).contains(f0) => Ok(Self::Microfacet { f0: *f0 }),
            ("fur", []) => Ok(Self::Fur { specular: Rgb::splat(0.2) }),
            ("fur", [r, g, b]) if *r >= 0.0 && *g >= 0.0 && *b >= 0.0 => Ok(Self::Fur {
                specular: Rgb::new(*r, *g, *b),
            }),
            _ => Err(format!("unrecognized reflectance model {s:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let l = v.length();
            if l > 0.1 && l <= 1.0 {
                return v / l;
            }
        }
    }

    fn random_upper(rng: &mut impl Rng, n: Vec3) -> Vec3 {
        loop {
            let v = random_unit(rng);
            if v.dot(n) > 0.05 {
                return v;
            }
        }
    }

    fn params(albedo: f64, roughness: f64) -> SurfaceBrdfParams {
        SurfaceBrdfParams {
            albedo: Rgb::new(albedo, albedo * 0.5, albedo * 0.25),
            roughness,
            f0: DEFAULT_F0,
        }
    }

    #[test]
    fn below_horizon_is_black() {
        let p = params(0.5, 0.5);
        let n = Vec3::Z;
        let below = Vec3::new(0.3, 0.0, -0.5).normalized();
        assert_eq!(eval_microfacet(n, Vec3::Z, below, &p), Rgb::BLACK);
        assert_eq!(eval_microfacet(n, below, Vec3::Z, &p), Rgb::BLACK);
    }

    #[test]
    fn normal_incidence_value() {
        let p = SurfaceBrdfParams {
            albedo: Rgb::splat(0.5),
            roughness: 0.5,
            f0: DEFAULT_F0,
        };
        let v = eval_microfacet(Vec3::Z, Vec3::Z, Vec3::Z, &p);
        let alpha: f64 = 0.25;
        let want = 0.5 / PI + (1.0 / (PI * alpha * alpha)) * 1.0 * 0.04 / 4.0;
        assert!((v.r - want).abs() < 1e-14 && (v.g - want).abs() < 1e-14);
    }

    #[test]
    fn reciprocity_and_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let n = random_unit(&mut rng);
            let a = random_unit(&mut rng);
            let b = random_unit(&mut rng);
            let p = params(rng.gen_range(0.0..1.0), rng.gen_range(0.01..1.0));
            let x = eval_microfacet(n, a, b, &p);
            let y = eval_microfacet(n, b, a, &p);
            assert!(x.max_abs_diff(y) <= 1e-12 * (1.0 + x.r.abs()));
            assert!(x.r >= 0.0 && x.g >= 0.0 && x.b >= 0.0);
        }
    }

    #[test]
    fn ggx_distribution_normalized() {
        // stratified uniform-hemisphere estimate of int D(h) cos dw
        for alpha in [0.1, 0.3, 0.8] {
            let m = 400;
            let mut sum = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let cos = (i as f64 + 0.5) / m as f64;
                    let _phi = (j as f64 + 0.5) / m as f64;
                    sum += ggx_d(cos, alpha) * cos;
                }
            }
            let est = sum / (m * m) as f64 * 2.0 * PI;
            assert!((est - 1.0).abs() < 0.02, "alpha {alpha}: {est}");
        }
    }

    #[test]
    fn energy_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = Vec3::Z;
        for roughness in [0.2, 0.5, 0.9] {
            for theta_deg in [0.0f64, 30.0, 60.0] {
                let t = theta_deg.to_radians();
                let wo = Vec3::new(t.sin(), 0.0, t.cos());
                let p = SurfaceBrdfParams {
                    albedo: Rgb::WHITE,
                    roughness,
                    f0: DEFAULT_F0,
                };
                let samples = 200_000;
                let mut acc = 0.0;
                for _ in 0..samples {
                    // cosine-weighted hemisphere: f cos / pdf = f * pi
                    let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
                    let r = u1.sqrt();
                    let phi = 2.0 * PI * u2;
                    let wi = Vec3::new(r * phi.cos(), r * phi.sin(), (1.0 - u1).max(0.0).sqrt());
                    acc += eval_microfacet(n, wo, wi, &p).r * PI;
                }
                let albedo = acc / samples as f64;
                assert!(albedo <= (1.0 + DEFAULT_F0) * 1.05, "rough {roughness} theta {theta_deg}: {albedo}");
            }
        }
    }

    fn dot_up(v: Rgb, u: Rgb) -> f64 {
        v.mul_elem(u).sum()
    }

    #[test]
    fn microfacet_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 200 {
            let n = random_unit(&mut rng);
            let wo = random_upper(&mut rng, n);
            let wi = random_upper(&mut rng, n);
            let p = params(rng.gen_range(0.1..0.9), rng.gen_range(0.1..1.0));
            let u = Rgb::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let g = microfacet_backward(n, wo, wi, &p, u);
            let h = 1e-6;

            let f_r = |r: f64| dot_up(eval_microfacet(n, wo, wi, &SurfaceBrdfParams { roughness: r, ..p }), u);
            let fd = (f_r(p.roughness + h) - f_r(p.roughness - h)) / (2.0 * h);
            let rel = (fd - g.roughness).abs() / fd.abs().max(g.roughness.abs()).max(1e-12);
            assert!(rel < 1e-5 || (fd - g.roughness).abs() < 1e-9, "roughness: {fd} vs {}", g.roughness);

            for axis in 0..3 {
                let mut e = [0.0; 3];
                e[axis] = h;
                let d = Vec3::from_array(e);
                let fd = (dot_up(eval_microfacet(n + d, wo, wi, &p), u) - dot_up(eval_microfacet(n - d, wo, wi, &p), u))
                    / (2.0 * h);
                assert!((fd - g.normal[axis]).abs() < 1e-5 * (1.0 + fd.abs()), "normal[{axis}]: {fd} vs {}", g.normal[axis]);
            }
            let ga = g.albedo;
            assert!((ga.r - u.r / PI).abs() < 1e-15 && (ga.b - u.b / PI).abs() < 1e-15);
            checked += 1;
        }
    }

    #[test]
    fn clamped_gradient_is_zero() {
        let p = params(0.5, 0.5);
        let g = microfacet_backward(Vec3::Z, Vec3::Z, Vec3::new(0.0, 0.6, -0.8), &p, Rgb::WHITE);
        assert_eq!(g, MicrofacetGrad::default());
        let g = microfacet_backward(Vec3::Z, Vec3::Z, Vec3::Z, &p, Rgb::BLACK);
        assert_eq!(g.normal, Vec3::ZERO);
        assert_eq!(g.roughness, 0.0);
    }

    fn fur(exponent: f64) -> FiberBrdfParams {
        FiberBrdfParams {
            diffuse: Rgb::new(0.4, 0.3, 0.2),
            specular: Rgb::new(0.2, 0.2, 0.25),
            exponent,
        }
    }

    #[test]
    fn fur_special_cases() {
        let p = fur(20.0);
        let t = Vec3::X;
        // incident along the fiber: no diffuse
        let v = eval_fur(t, Vec3::Y, Vec3::X, &p);
        assert!((v.r - p.specular.r * 0.0f64.powf(20.0)).abs() < 1e-15);
        // incident = outgoing, perpendicular: full specular lobe
        let v = eval_fur(t, Vec3::Y, Vec3::Y, &p);
        assert!((v.r - (p.diffuse.r + p.specular.r)).abs() < 1e-14);
    }

    #[test]
    fn fur_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let t = random_unit(&mut rng);
            let wo = random_unit(&mut rng);
            let wi = random_unit(&mut rng);
            let p = fur(rng.gen_range(1.0..50.0));
            let ci = t.x * wi.x + t.y * wi.y + t.z * wi.z;
            let co = t.x * wo.x + t.y * wo.y + t.z * wo.z;
            let si = (1.0 - ci * ci).sqrt();
            let so = (1.0 - co * co).sqrt();
            let lobe = f64::max(0.0, ci * co + si * so);
            let want = p.diffuse.g * si + p.specular.g * lobe.powf(p.exponent);
            let got = eval_fur(t, wo, wi, &p).g;
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fur_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let t = random_unit(&mut rng);
            let wo = random_unit(&mut rng);
            let wi = random_unit(&mut rng);
            let p = fur(rng.gen_range(1.0..20.0));
            let u = Rgb::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let g = fur_backward(t, wo, wi, &p, u);
            let h = 1e-6;
            for axis in 0..3 {
                let mut e = [0.0; 3];
                e[axis] = h;
                let d = Vec3::from_array(e);
                let fd = (dot_up(eval_fur(t + d, wo, wi, &p), u) - dot_up(eval_fur(t - d, wo, wi, &p), u)) / (2.0 * h);
                assert!((fd - g.tangent[axis]).abs() < 1e-5 * (1.0 + fd.abs()));
            }
            let fe = |e: f64| dot_up(eval_fur(t, wo, wi, &FiberBrdfParams { exponent: e, ..p }), u);
            let fd = (fe(p.exponent + h) - fe(p.exponent - h)) / (2.0 * h);
            assert!((fd - g.exponent).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn model_backward_chains_fur_roughness() {
        let out = FieldOutput {
            sigma: 1.0,
            normal: Vec3::new(0.3, 0.4, 0.5).normalized(),
            albedo: Rgb::new(0.3, 0.5, 0.7),
            roughness: 0.3,
        };
        let model = ReflectanceModel::Fur {
            specular: Rgb::splat(0.2),
        };
        let wo = Vec3::new(0.1, 0.9, 0.2).normalized();
        let wi = Vec3::new(-0.3, 0.8, 0.1).normalized();
        let u = Rgb::new(1.0, -0.5, 0.25);
        let g = model.backward(&out, wo, wi, u);
        let f = |r: f64| dot_up(model.eval(&FieldOutput { roughness: r, ..out }, wo, wi), u);
        let fd = (f(0.3 + 1e-6) - f(0.3 - 1e-6)) / 2e-6;
        assert!((fd - g.roughness).abs() < 1e-6 * (1.0 + fd.abs()));
    }
}
