//! Precomputed light transmittance for rendering under a moving light.
//!
//! A virtual square image is placed in front of the light, facing the
//! scene. Each pixel-center ray is marched once (stratified through the
//! coarse field, then importance samples, densities from the fine field)
//! and the running transmittance is stored as sparse `(t, tau)` pairs.
//! Queries project a point into the virtual image and blend the four
//! nearest rays, each interpolated linearly in distance from the light.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{look_at_rotation, Aabb, Camera, Vec3};
use crate::raymarch::{
    contribution_weights, importance_sample, ray_rng, stratified_sample, view_transmittance, LightTransmittance,
    TransmittanceConvention,
};

pub const DEFAULT_RESOLUTION: usize = 128;
const MAGIC: &[u8; 8] = b"NRFTAU01";
/// Widening of the fitted cone around the scene box.
const FOV_MARGIN: f64 = 1.05;
/// Stream id reserved for cache construction.
const CACHE_STREAM: u64 = u32::MAX as u64;

#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceVolume {
    light: Vec3,
    bounds: Aabb,
    resolution: usize,
    camera: Camera,
    /// `offsets[r]..offsets[r+1]` indexes ray `r`'s samples.
    offsets: Vec<usize>,
    t: Vec<f64>,
    tau: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheSettings {
    pub resolution: usize,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub seed: u64,
}

impl Default for CacheSettings {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            n_coarse: 64,
            n_fine: 128,
            seed: 0,
        }
    }
}

/// Virtual camera at `light` whose square image just covers `bounds`.
fn light_camera(light: Vec3, bounds: &Aabb, resolution: usize) -> Result<Camera> {
    if bounds.contains(light) {
        return Err(Error::LightInsideBounds(light.to_array()));
    }
    let center = bounds.center();
    let forward = (center - light).normalized();
    let half_angle = bounds
        .corners()
        .iter()
        .map(|&c| forward.dot((c - light).normalized()).clamp(-1.0, 1.0).acos())
        .fold(0.0, f64::max);
    let half = (half_angle * FOV_MARGIN).min(89.0f64.to_radians());
    let rotation = look_at_rotation(light, center, Vec3::Z)?;
    let focal = 0.5 * resolution as f64 / half.tan();
    Camera::new(light, rotation, focal, resolution, resolution)
}

impl TransmittanceVolume {
    pub fn build(
        coarse: &(impl Field + ?Sized),
        fine: &(impl Field + ?Sized),
        light: Vec3,
        settings: &CacheSettings,
    ) -> Result<Self> {
        let r = settings.resolution;
        if r < 8 {
            return Err(Error::InvalidInput(format!("cache resolution must be at least 8, got {r}")));
        }
        if settings.n_coarse == 0 {
            return Err(Error::InvalidInput("cache needs at least one coarse sample per ray".into()));
        }
        let bounds = fine.bounds();
        let camera = light_camera(light, &bounds, r)?;
        let rays: Vec<Vec<(f64, f64)>> = (0..r * r)
            .into_par_iter()
            .map(|idx| {
                let (x, y) = (idx % r, idx / r);
                let Ok(Some(ray)) = camera.generate_ray((x, y), (0.5, 0.5), &bounds) else {
                    return Vec::new();
                };
                let mut rng = ray_rng(settings.seed, CACHE_STREAM, idx as u64);
                let strat = stratified_sample(&ray, settings.n_coarse, &mut rng);
                let sig = coarse.density_many(&strat.points(&ray));
                let w = contribution_weights(&sig, &strat.dt);
                let samples = importance_sample(&w.weights, &strat, &ray, settings.n_fine, &mut rng);
                let sig = fine.density_many(&samples.points(&ray));
                let tau = view_transmittance(&sig, &samples.dt, TransmittanceConvention::Exclusive);
                let mut depth = 0.0;
                for (s, d) in sig.iter().zip(&samples.dt) {
                    depth += s * d;
                }
                let mut pairs: Vec<(f64, f64)> = samples.t.iter().copied().zip(tau).collect();
                pairs.push((ray.t_far, (-depth).exp()));
                pairs
            })
            .collect();
        let mut offsets = Vec::with_capacity(r * r + 1);
        let mut t = Vec::new();
        let mut tau = Vec::new();
        offsets.push(0);
        for pairs in rays {
            for (a, b) in pairs {
                t.push(a);
                tau.push(b);
            }
            offsets.push(t.len());
        }
        Ok(Self {
            light,
            bounds,
            resolution: r,
            camera,
            offsets,
            t,
            tau,
        })
    }

    pub fn light(&self) -> Vec3 {
        self.light
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn sample_count(&self) -> usize {
        self.t.len()
    }

    /// Stored `(t, tau)` pairs of the ray through virtual pixel `(x, y)`.
    pub fn ray_samples(&self, x: usize, y: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        let r = y * self.resolution + x;
        let range = self.offsets[r]..self.offsets[r + 1];
        self.t[range.clone()].iter().copied().zip(self.tau[range].iter().copied())
    }

    fn ray_tau(&self, ray: usize, t: f64) -> f64 {
        let (a, b) = (self.offsets[ray], self.offsets[ray + 1]);
        let ts = &self.t[a..b];
        let taus = &self.tau[a..b];
        if ts.is_empty() || t <= ts[0] {
            return taus.first().copied().unwrap_or(1.0);
        }
        if t >= ts[ts.len() - 1] {
            return taus[taus.len() - 1];
        }
        let k = ts.partition_point(|&s| s <= t);
        let (t0, t1) = (ts[k - 1], ts[k]);
        let f = (t - t0) / (t1 - t0);
        taus[k - 1] + f * (taus[k] - taus[k - 1])
    }

    /// Interpolated light transmittance at `x`; 1 outside the frustum.
    pub fn query(&self, x: Vec3) -> f64 {
        let Some((px, py)) = self.camera.project(x) else {
            return 1.0;
        };
        let r = self.resolution as f64;
        if !(0.0..=r).contains(&px) || !(0.0..=r).contains(&py) {
            return 1.0;
        }
        let t = (x - self.light).length();
        let max = self.resolution - 1;
        let u = (px - 0.5).clamp(0.0, max as f64);
        let v = (py - 0.5).clamp(0.0, max as f64);
        let (i0, j0) = ((u.floor() as usize).min(max), (v.floor() as usize).min(max));
        let (i1, j1) = ((i0 + 1).min(max), (j0 + 1).min(max));
        let (fu, fv) = (u - i0 as f64, v - j0 as f64);
        let at = |i: usize, j: usize| self.ray_tau(j * self.resolution + i, t);
        let top = at(i0, j0) * (1.0 - fu) + at(i1, j0) * fu;
        let bottom = at(i0, j1) * (1.0 - fu) + at(i1, j1) * fu;
        (top * (1.0 - fv) + bottom * fv).clamp(0.0, 1.0)
    }

    /// Binary dump: magic, resolution, light, bounds, per-ray counts, then
    /// the `(t, tau)` pairs, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.t.len() * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        for v in self
            .light
            .to_array()
            .into_iter()
            .chain(self.bounds.min.to_array())
            .chain(self.bounds.max.to_array())
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for w in self.offsets.windows(2) {
            out.extend_from_slice(&((w[1] - w[0]) as u32).to_le_bytes());
        }
        for (t, tau) in self.t.iter().zip(&self.tau) {
            out.extend_from_slice(&t.to_le_bytes());
            out.extend_from_slice(&tau.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if cur.len() < n {
                return Err("truncated transmittance cache".into());
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(8)? != MAGIC {
            return Err("not a transmittance cache".into());
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        let resolution = u32_at(take(4)?);
        if resolution < 8 {
            return Err(format!("bad cache resolution {resolution}"));
        }
        let mut head = [0.0; 9];
        for v in head.iter_mut() {
            *v = f64_at(take(8)?);
        }
        let light = Vec3::new(head[0], head[1], head[2]);
        let bounds = Aabb::new(Vec3::new(head[3], head[4], head[5]), Vec3::new(head[6], head[7], head[8]));
        let n_rays = resolution
            .checked_mul(resolution)
            .ok_or_else(|| "cache resolution overflows".to_string())?;
        let counts = take(n_rays.checked_mul(4).ok_or("cache size overflows")?)?;
        let mut offsets = Vec::with_capacity(n_rays + 1);
        offsets.push(0usize);
        for c in counts.chunks_exact(4) {
            offsets.push(offsets[offsets.len() - 1] + u32_at(c));
        }
        let total = offsets[n_rays];
        let body = take(total.checked_mul(16).ok_or("cache size overflows")?)?;
        if !cur.is_empty() {
            return Err("trailing bytes after transmittance cache".into());
        }
        let mut t = Vec::with_capacity(total);
        let mut tau = Vec::with_capacity(total);
        for p in body.chunks_exact(16) {
            t.push(f64_at(&p[..8]));
            tau.push(f64_at(&p[8..]));
        }
        let camera = light_camera(light, &bounds, resolution).map_err(|e| e.to_string())?;
        Ok(Self {
            light,
            bounds,
            resolution,
            camera,
            offsets,
            t,
            tau,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::format(path, reason))
    }
}

impl LightTransmittance for TransmittanceVolume {
    fn transmittance(&self, x: Vec3) -> f64 {
        self.query(x)
    }
}
