//! Discrete volume export for external Monte Carlo renderers.
//!
//! Layout, little-endian:
//!
//! ```text
//! "NRFVOL01"
//! u32 nx, ny, nz
//! f32 xmin, ymin, zmin, xmax, ymax, zmax
//! u32 channel count, then per channel: u32 byte length, UTF-8 name
//! f32 records, one per voxel, channels interleaved, x fastest then y then z
//! ```
//!
//! Values are sampled at voxel centers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Field, FieldOutput};
use crate::geometry::{Aabb, Vec3};

const MAGIC: &[u8; 8] = b"NRFVOL01";

pub const CHANNELS: [&str; 8] = [
    "sigma", "albedo_r", "albedo_g", "albedo_b", "roughness", "normal_x", "normal_y", "normal_z",
];

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeExport {
    pub dims: [usize; 3],
    pub bounds: Aabb,
    pub channels: Vec<String>,
    /// `dims[0] * dims[1] * dims[2] * channels.len()` values.
    pub data: Vec<f32>,
}

fn record(o: &FieldOutput) -> [f32; 8] {
    [
        o.sigma,
        o.albedo.r,
        o.albedo.g,
        o.albedo.b,
        o.roughness,
        o.normal.x,
        o.normal.y,
        o.normal.z,
    ]
    .map(|v| v as f32)
}

impl VolumeExport {
    /// Samples `field` at the centers of a `dims` grid over its bounds.
    pub fn sample(field: &(impl Field + ?Sized), dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidInput(format!("export dims must be at least 2, got {dims:?}")));
        }
        let bounds = field.bounds();
        let [nx, ny, nz] = dims;
        let mut data = Vec::with_capacity(nx * ny * nz * CHANNELS.len());
        let mut slice = Vec::with_capacity(nx * ny);
        for k in 0..nz {
            slice.clear();
            for j in 0..ny {
                for i in 0..nx {
                    slice.push(voxel_center(&bounds, dims, [i, j, k]));
                }
            }
            for o in field.eval_many(&slice) {
                data.extend_from_slice(&record(&o));
            }
        }
        Ok(Self {
            dims,
            bounds,
            channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
            data,
        })
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn value(&self, voxel: [usize; 3], channel: usize) -> f32 {
        let [nx, ny, _] = self.dims;
        let idx = (voxel[2] * ny + voxel[1]) * nx + voxel[0];
        self.data[idx * self.channels.len() + channel]
    }

    /// Trilinear interpolation between voxel centers, clamped at the
    /// outermost centers.
    pub fn trilinear(&self, x: Vec3, channel: usize) -> f64 {
        let ext = self.bounds.max - self.bounds.min;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let u = ((x[a] - self.bounds.min[a]) / ext[a] * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            base[a] = (u.floor() as usize).min(n - 2);
            frac[a] = u - base[a] as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut v = base;
            for a in 0..3 {
                if corner >> a & 1 == 1 {
                    v[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * self.value(v, channel) as f64;
            }
        }
        acc
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.bounds.min.to_array().into_iter().chain(self.bounds.max.to_array()) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&(self.channels.len() as u32).to_le_bytes());
        for c in &self.channels {
            out.extend_from_slice(&(c.len() as u32).to_le_bytes());
            out.extend_from_slice(c.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if cur.len() < n {
                return Err("truncated volume file".into());
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(8)? != MAGIC {
            return Err("missing NRFVOL01 header".into());
        }
        let u32_of = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let f32_of = |b: &[u8]| f32::from_le_bytes(b.try_into().unwrap()) as f64;
        let mut dims = [0; 3];
        for d in dims.iter_mut() {
            *d = u32_of(take(4)?);
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(format!("bad volume dims {dims:?}"));
        }
        let mut b = [0.0; 6];
        for v in b.iter_mut() {
            *v = f32_of(take(4)?);
        }
        let bounds = Aabb::new(Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
        let n_ch = u32_of(take(4)?);
        if n_ch == 0 || n_ch > 1024 {
            return Err(format!("bad channel count {n_ch}"));
        }
        let mut channels = Vec::with_capacity(n_ch);
        for _ in 0..n_ch {
            let len = u32_of(take(4)?);
            let name = std::str::from_utf8(take(len)?).map_err(|_| "channel name is not UTF-8".to_string())?;
            channels.push(name.to_string());
        }
        let count = dims
            .iter()
            .try_fold(n_ch, |acc, &d| acc.checked_mul(d))
            .ok_or("volume size overflows")?;
        let body = take(count.checked_mul(4).ok_or("volume size overflows")?)?;
        if !cur.is_empty() {
            return Err("trailing bytes after volume data".into());
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            dims,
            bounds,
            channels,
            data,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|r| Error::format(path, r))
    }
}

pub fn voxel_center(bounds: &Aabb, dims: [usize; 3], v: [usize; 3]) -> Vec3 {
    let ext = bounds.max - bounds.min;
    let c = |a: usize| bounds.min[a] + (v[a] as f64 + 0.5) * ext[a] / dims[a] as f64;
    Vec3::new(c(0), c(1), c(2))
}
