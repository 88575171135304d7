//! Closed-form scenes and a reference renderer that does not use any of
//! the two-pass machinery.
//!
//! Density is a constant inside a signed-distance shape, faded to zero with
//! a smoothstep across a thin band around the boundary. Normals are the
//! shape's distance gradient.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{Dataset, View};
use crate::error::{Error, Result};
use crate::field::{Field, FieldOutput};
use crate::geometry::{Aabb, Camera, PointLight, Rgb, Vec3};
use crate::image::Image;
use crate::raymarch::brute_force_light_transmittance;
use crate::reflectance::ReflectanceModel;

/// Default width of the density falloff band.
pub const DEFAULT_BAND: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Box { center: Vec3, half: Vec3 },
}

impl Shape {
    pub fn sdf(&self, x: Vec3) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => (x - center).length() - radius,
            Shape::Box { center, half } => {
                let q = (x - center).abs() - half;
                q.max(Vec3::ZERO).length() + q.max_component().min(0.0)
            }
        }
    }

    pub fn gradient(&self, x: Vec3) -> Vec3 {
        match *self {
            Shape::Sphere { center, .. } => {
                let d = x - center;
                if d.length() > 0.0 {
                    d.normalized()
                } else {
                    Vec3::Z
                }
            }
            Shape::Box { center, half } => {
                let p = x - center;
                let q = p.abs() - half;
                let sign = Vec3::new(p.x.signum(), p.y.signum(), p.z.signum());
                let outside = q.max(Vec3::ZERO);
                if outside.length() > 0.0 {
                    outside.normalized().mul_elem(sign)
                } else {
                    let k = if q.x >= q.y && q.x >= q.z {
                        0
                    } else if q.y >= q.z {
                        1
                    } else {
                        2
                    };
                    let mut g = [0.0; 3];
                    g[k] = sign[k];
                    Vec3::from_array(g)
                }
            }
        }
    }

    /// Sphere enclosing the shape, used to bound density support.
    fn bounding_sphere(&self) -> (Vec3, f64) {
        match *self {
            Shape::Sphere { center, radius } => (center, radius),
            Shape::Box { center, half } => (center, half.length()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Albedo {
    Constant(Rgb),
    /// Smooth-edged 3D checkerboard with square cells of side `cell`.
    Checker { a: Rgb, b: Rgb, cell: f64 },
}

impl Albedo {
    pub fn eval(&self, x: Vec3) -> Rgb {
        match *self {
            Albedo::Constant(c) => c,
            Albedo::Checker { a, b, cell } => {
                let k = PI / cell;
                let s = (k * x.x).sin() * (k * x.y).sin() * (k * x.z).sin();
                let w = smoothstep(-0.3, 0.3, s);
                a * (1.0 - w) + b * w
            }
        }
    }
}

/// One density primitive with its material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub shape: Shape,
    pub sigma: f64,
    pub band: f64,
    pub albedo: Albedo,
    pub roughness: f64,
    /// Fiber direction for fur; `None` uses the distance gradient.
    pub tangent: Option<Vec3>,
}

impl Blob {
    pub fn density(&self, x: Vec3) -> f64 {
        self.sigma * smoothstep(0.5 * self.band, -0.5 * self.band, self.shape.sdf(x))
    }
}

pub fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    HomogSphere,
    CheckerSphere,
    TwoBlobOccluder,
    FurPatch,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::HomogSphere,
        Preset::CheckerSphere,
        Preset::TwoBlobOccluder,
        Preset::FurPatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::HomogSphere => "homog-sphere",
            Preset::CheckerSphere => "checker-sphere",
            Preset::TwoBlobOccluder => "two-blob-occluder",
            Preset::FurPatch => "fur-patch",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scene preset {s:?}")))
    }
}

/// A closed-form scene inside `bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScene {
    pub bounds: Aabb,
    pub blobs: Vec<Blob>,
    pub model: ReflectanceModel,
}

impl AnalyticScene {
    pub fn empty() -> Self {
        Self {
            bounds: Aabb::unit(),
            blobs: Vec::new(),
            model: ReflectanceModel::default(),
        }
    }

    /// Constant-albedo sphere at the origin.
    pub fn homog_sphere(sigma: f64, radius: f64) -> Self {
        Self {
            bounds: Aabb::unit(),
            blobs: vec![Blob {
                shape: Shape::Sphere {
                    center: Vec3::ZERO,
                    radius,
                },
                sigma,
                band: DEFAULT_BAND,
                albedo: Albedo::Constant(Rgb::new(0.7, 0.5, 0.3)),
                roughness: 0.6,
                tangent: None,
            }],
            model: ReflectanceModel::default(),
        }
    }

    pub fn checker_sphere() -> Self {
        let mut s = Self::homog_sphere(20.0, 0.5);
        s.blobs[0].albedo = Albedo::Checker {
            a: Rgb::new(0.8, 0.35, 0.2),
            b: Rgb::new(0.15, 0.45, 0.75),
            cell: 0.25,
        };
        s.blobs[0].roughness = 0.4;
        s
    }

    /// A receiver sphere below a smaller, fuzzier occluder.
    pub fn two_blob_occluder() -> Self {
        Self {
            bounds: Aabb::unit(),
            blobs: vec![
                Blob {
                    shape: Shape::Sphere {
                        center: Vec3::new(0.0, 0.0, -0.35),
                        radius: 0.45,
                    },
                    sigma: 20.0,
                    band: DEFAULT_BAND,
                    albedo: Albedo::Constant(Rgb::new(0.75, 0.75, 0.7)),
                    roughness: 0.7,
                    tangent: None,
                },
                Blob {
                    shape: Shape::Sphere {
                        center: Vec3::new(0.0, 0.0, 0.55),
                        radius: 0.25,
                    },
                    sigma: 8.0,
                    band: DEFAULT_BAND,
                    albedo: Albedo::Constant(Rgb::new(0.3, 0.5, 0.8)),
                    roughness: 0.5,
                    tangent: None,
                },
            ],
            model: ReflectanceModel::default(),
        }
    }

    /// A slab of fibers combed along a fixed direction.
    pub fn fur_patch() -> Self {
        Self {
            bounds: Aabb::unit(),
            blobs: vec![Blob {
                shape: Shape::Box {
                    center: Vec3::ZERO,
                    half: Vec3::new(0.6, 0.6, 0.15),
                },
                sigma: 8.0,
                band: 0.1,
                albedo: Albedo::Constant(Rgb::new(0.55, 0.35, 0.2)),
                roughness: 0.1,
                tangent: Some(Vec3::new(1.0, 0.3, 0.2).normalized()),
            }],
            model: ReflectanceModel::Fur {
                specular: Rgb::splat(0.2),
            },
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::HomogSphere => Self::homog_sphere(5.0, 0.5),
            Preset::CheckerSphere => Self::checker_sphere(),
            Preset::TwoBlobOccluder => Self::two_blob_occluder(),
            Preset::FurPatch => Self::fur_patch(),
        }
    }

    /// Mean albedo of the first blob, for exposure.
    fn mean_albedo(&self) -> f64 {
        match self.blobs.first().map(|b| b.albedo) {
            Some(Albedo::Constant(c)) => c.mean(),
            Some(Albedo::Checker { a, b, .. }) => 0.5 * (a.mean() + b.mean()),
            None => 0.5,
        }
    }

    /// Intensity putting an unoccluded Lambertian surface seen head-on from
    /// `distance` near radiance 0.5. With the light at the camera an opaque
    /// medium returns `int sigma exp(-2 sigma t) dt = 1/2` of the surface
    /// value, hence no factor 0.5 here.
    pub fn auto_intensity(&self, distance: f64) -> Rgb {
        Rgb::splat(PI * distance * distance / self.mean_albedo().max(1e-3))
    }

    /// Distance from `eye` to the nearest boundary of any blob.
    pub fn surface_distance(&self, eye: Vec3) -> f64 {
        self.blobs
            .iter()
            .map(|b| b.shape.sdf(eye))
            .fold(f64::INFINITY, f64::min)
            .max(1e-3)
    }
}

impl Field for AnalyticScene {
    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn eval(&self, x: Vec3) -> FieldOutput {
        if !self.bounds.contains(x) {
            return FieldOutput::EMPTY;
        }
        let mut sigma = 0.0;
        let mut nearest: Option<(&Blob, f64)> = None;
        for b in &self.blobs {
            sigma += b.density(x);
            let d = b.shape.sdf(x);
            if nearest.is_none_or(|(_, best)| d < best) {
                nearest = Some((b, d));
            }
        }
        let Some((b, _)) = nearest else {
            return FieldOutput::EMPTY;
        };
        FieldOutput {
            sigma,
            normal: b.tangent.unwrap_or_else(|| b.shape.gradient(x)),
            albedo: b.albedo.eval(x),
            roughness: b.roughness,
        }
    }

    fn density(&self, x: Vec3) -> f64 {
        if !self.bounds.contains(x) {
            return 0.0;
        }
        self.blobs.iter().map(|b| b.density(x)).sum()
    }

    fn density_many(&self, xs: &[Vec3]) -> Vec<f64> {
        xs.iter().map(|&x| self.density(x)).collect()
    }

    /// Union of the chords through each blob's padded bounding sphere.
    fn density_support(&self, origin: Vec3, dir: Vec3, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        let Some((b0, b1)) = self.bounds.intersect(origin, dir) else {
            return Vec::new();
        };
        let (lo, hi) = (t0.max(b0), t1.min(b1));
        let mut spans: Vec<(f64, f64)> = self
            .blobs
            .iter()
            .filter_map(|b| {
                let (c, r) = b.shape.bounding_sphere();
                let r = r + b.band;
                let oc = origin - c;
                let half_b = oc.dot(dir);
                let disc = half_b * half_b - (oc.length_squared() - r * r);
                if disc <= 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let (a, e) = ((-half_b - s).max(lo), (-half_b + s).min(hi));
                (a < e).then_some((a, e))
            })
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
        for (a, e) in spans {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((a, e)),
            }
        }
        merged
    }
}

/// Samples with transmittance below this end a reference ray.
const TERMINATION: f64 = 1e-6;

/// Reference render: fixed-step midpoint marching of the emission-absorption
/// integral along each pixel-center ray, with light transmittance marched
/// separately for every sample. Black background.
pub fn render_ground_truth(scene: &AnalyticScene, camera: &Camera, light: &PointLight, step: f64) -> Result<Image> {
    let limit = scene.bounds.diagonal() / 512.0;
    if !(step > 0.0 && step <= limit * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!(
            "reference step must be in (0, {limit}], got {step}"
        )));
    }
    let (w, h) = (camera.width, camera.height);
    let pixels: Vec<Rgb> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let dir = camera
                .direction_through((idx % w) as f64 + 0.5, (idx / w) as f64 + 0.5)
                .normalized();
            reference_radiance(scene, camera.position, dir, light, step)
        })
        .collect();
    Ok(Image {
        width: w,
        height: h,
        pixels,
    })
}

/// Largest step [`render_ground_truth`] accepts for `scene`.
pub fn reference_step(scene: &AnalyticScene) -> f64 {
    scene.bounds.diagonal() / 512.0
}

pub fn reference_radiance(scene: &AnalyticScene, origin: Vec3, dir: Vec3, light: &PointLight, step: f64) -> Rgb {
    let omega_o = -dir;
    let mut radiance = Rgb::BLACK;
    let mut transmittance = 1.0;
    for (a, b) in scene.density_support(origin, dir, 0.0, f64::INFINITY) {
        let n = ((b - a) / step).ceil().max(1.0) as usize;
        let dt = (b - a) / n as f64;
        for i in 0..n {
            let x = origin + dir * (a + (i as f64 + 0.5) * dt);
            let out = scene.eval(x);
            if out.sigma == 0.0 {
                continue;
            }
            let to_light = light.position - x;
            let dist = to_light.length().max(1e-6);
            let omega_i = to_light / dist;
            let tau_l = brute_force_light_transmittance(x, light.position, scene, step);
            let alpha = 1.0 - (-out.sigma * dt).exp();
            let f = scene.model.eval(&out, omega_o, omega_i);
            radiance += f.mul_elem(light.intensity) * (transmittance * tau_l * alpha / (dist * dist));
            transmittance *= (-out.sigma * dt).exp();
            if transmittance < TERMINATION {
                return radiance;
            }
        }
    }
    radiance
}

/// Exit transmittance of the reference quadrature along a ray.
pub fn reference_transmittance(scene: &AnalyticScene, origin: Vec3, dir: Vec3, step: f64) -> f64 {
    let far = origin + dir * (scene.bounds.diagonal() + (origin - scene.bounds.center()).length());
    brute_force_light_transmittance(far, origin, scene, step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseLayout {
    /// Evenly spaced azimuths at a fixed elevation.
    Ring,
    /// Fibonacci points on the upper hemisphere.
    Sphere,
}

impl FromStr for PoseLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(Self::Ring),
            "sphere" => Ok(Self::Sphere),
            _ => Err(Error::InvalidInput(format!("unknown pose layout {s:?} (ring or sphere)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub n_views: usize,
    pub resolution: usize,
    pub layout: PoseLayout,
    /// Camera distance from the scene center.
    pub distance: f64,
    /// Elevation of ring cameras, degrees.
    pub elevation: f64,
    /// Azimuth offset of the first view, degrees.
    pub azimuth0: f64,
    /// Horizontal field of view, degrees.
    pub fov: f64,
    /// `None` picks an intensity that exposes the scene near 0.5.
    pub intensity: Option<Rgb>,
    /// Encoding levels recorded for training.
    pub levels: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_views: 32,
            resolution: 64,
            layout: PoseLayout::Sphere,
            distance: 3.0,
            elevation: 20.0,
            azimuth0: 0.0,
            fov: 40.0,
            intensity: None,
            levels: 10,
        }
    }
}

/// Camera positions for `spec` around `center`.
pub fn camera_positions(spec: &DatasetSpec, center: Vec3) -> Vec<Vec3> {
    let n = spec.n_views;
    (0..n)
        .map(|k| {
            let (az, el) = match spec.layout {
                PoseLayout::Ring => (
                    spec.azimuth0.to_radians() + 2.0 * PI * k as f64 / n as f64,
                    spec.elevation.to_radians(),
                ),
                PoseLayout::Sphere => {
                    // golden-angle spiral over elevations in [5, 75] degrees
                    let golden = PI * (3.0 - 5f64.sqrt());
                    let z = (5f64.to_radians().sin())
                        + (75f64.to_radians().sin() - 5f64.to_radians().sin()) * (k as f64 + 0.5) / n as f64;
                    (spec.azimuth0.to_radians() + golden * k as f64, z.asin())
                }
            };
            center + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * spec.distance
        })
        .collect()
}

/// Cameras and collocated lights for `spec`.
pub fn dataset_poses(scene: &AnalyticScene, spec: &DatasetSpec) -> Result<Vec<(Camera, PointLight)>> {
    if spec.n_views == 0 {
        return Err(Error::InvalidInput("dataset needs at least one view".into()));
    }
    let center = scene.bounds.center();
    camera_positions(spec, center)
        .into_iter()
        .map(|pos| {
            let cam = Camera::look_at(pos, center, Vec3::Z, spec.fov, spec.resolution, spec.resolution)?;
            let intensity = spec
                .intensity
                .unwrap_or_else(|| scene.auto_intensity(scene.surface_distance(pos)));
            Ok((cam, PointLight::new(pos, intensity)?))
        })
        .collect()
}

/// Renders every view with the reference renderer.
pub fn render_dataset(scene: &AnalyticScene, spec: &DatasetSpec) -> Result<Dataset> {
    let step = reference_step(scene);
    let views = dataset_poses(scene, spec)?
        .into_iter()
        .map(|(camera, light)| {
            let image = render_ground_truth(scene, &camera, &light, step)?;
            Ok(View { camera, light, image })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        views,
        levels: spec.levels,
        bounds: scene.bounds,
        model: scene.model,
    })
}

/// Renders and writes a dataset to `out_dir`.
pub fn generate_dataset(scene: &AnalyticScene, spec: &DatasetSpec, out_dir: impl AsRef<Path>) -> Result<Dataset> {
    let ds = render_dataset(scene, spec)?;
    ds.save(out_dir)?;
    Ok(ds)
}
