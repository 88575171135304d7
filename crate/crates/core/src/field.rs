//! Per-point rendering properties and the fields that produce them.

use crate::encoding::encode_point_into;
use crate::error::Result;
use crate::geometry::{Aabb, Rgb, Vec3};
use crate::mlp::{MlpParams, ParamGrads, HEAD_DIM};

/// Roughness is mapped into `[ROUGHNESS_MIN, 1]`.
pub const ROUGHNESS_MIN: f64 = 0.01;
const NORMAL_EPS: f64 = 1e-8;

/// Density, shading normal (or fiber tangent) and reflectance at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOutput {
    pub sigma: f64,
    pub normal: Vec3,
    pub albedo: Rgb,
    pub roughness: f64,
}

impl FieldOutput {
    pub const EMPTY: FieldOutput = FieldOutput {
        sigma: 0.0,
        normal: Vec3::Z,
        albedo: Rgb::BLACK,
        roughness: 1.0,
    };

    /// Output heads: softplus density, normalized direction (falling back
    /// to +z when degenerate), sigmoid albedo, sigmoid roughness remapped.
    pub fn from_raw(raw: &[f64]) -> Self {
        debug_assert_eq!(raw.len(), HEAD_DIM);
        let n = Vec3::new(raw[1], raw[2], raw[3]);
        let len = n.length();
        FieldOutput {
            sigma: softplus(raw[0]),
            normal: if len < NORMAL_EPS { Vec3::Z } else { n / len },
            albedo: Rgb::new(sigmoid(raw[4]), sigmoid(raw[5]), sigmoid(raw[6])),
            roughness: ROUGHNESS_MIN + (1.0 - ROUGHNESS_MIN) * sigmoid(raw[7]),
        }
    }
}

/// Gradient of a scalar with respect to the fields of a [`FieldOutput`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldOutputGrad {
    pub sigma: f64,
    pub normal: Vec3,
    pub albedo: Rgb,
    pub roughness: f64,
}

/// Pulls a [`FieldOutputGrad`] back through the output heads onto the raw
/// 8-vector.
pub fn heads_backward(raw: &[f64], g: &FieldOutputGrad) -> [f64; HEAD_DIM] {
    let mut out = [0.0; HEAD_DIM];
    out[0] = g.sigma * sigmoid(raw[0]);
    let n = Vec3::new(raw[1], raw[2], raw[3]);
    let len = n.length();
    if len >= NORMAL_EPS {
        let u = n / len;
        // (I - u u^T) g / |n|
        let d = (g.normal - u * u.dot(g.normal)) / len;
        out[1] = d.x;
        out[2] = d.y;
        out[3] = d.z;
    }
    for (k, ga) in [g.albedo.r, g.albedo.g, g.albedo.b].into_iter().enumerate() {
        let s = sigmoid(raw[4 + k]);
        out[4 + k] = ga * s * (1.0 - s);
    }
    let s = sigmoid(raw[7]);
    out[7] = g.roughness * (1.0 - ROUGHNESS_MIN) * s * (1.0 - s);
    out
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluates the network heads at one encoded point.
pub fn field_forward(params: &MlpParams, encoded: &[f64]) -> Result<FieldOutput> {
    Ok(FieldOutput::from_raw(&params.forward_raw(encoded)?))
}

/// Adds the parameter gradient for upstream `d loss / d raw` at one
/// encoded point. The forward activations are recomputed.
pub fn field_backward(
    params: &MlpParams,
    encoded: &[f64],
    upstream: &[f64; HEAD_DIM],
    grads: &mut ParamGrads,
) -> Result<()> {
    let cache = params.forward_batch(encoded, 1)?;
    params.backward_batch(&cache, upstream, grads)
}

/// A continuous scene: anything that yields `(sigma, n, R)` at a point.
pub trait Field: Sync {
    /// Box outside which density is zero.
    fn bounds(&self) -> Aabb;

    fn eval(&self, x: Vec3) -> FieldOutput;

    fn eval_many(&self, xs: &[Vec3]) -> Vec<FieldOutput> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    fn density(&self, x: Vec3) -> f64 {
        self.eval(x).sigma
    }

    fn density_many(&self, xs: &[Vec3]) -> Vec<f64> {
        self.eval_many(xs).into_iter().map(|o| o.sigma).collect()
    }

    /// Sub-intervals of `[t0, t1]` along `origin + t*dir` outside of
    /// which the density is known to vanish.
    fn density_support(&self, origin: Vec3, dir: Vec3, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        match self.bounds().intersect(origin, dir) {
            Some((a, b)) => {
                let (a, b) = (a.max(t0), b.min(t1));
                if a < b {
                    vec![(a, b)]
                } else {
                    Vec::new()
                }
            }
            None => Vec::new(),
        }
    }
}

/// An MLP evaluated on box-normalized coordinates. Density is zero
/// outside `bounds`.
#[derive(Debug, Clone)]
pub struct NeuralField {
    pub params: MlpParams,
    pub bounds: Aabb,
}

/// Slack on the bounds test for points produced by clipped rays.
const BOUNDS_SLACK: f64 = 1e-9;

impl NeuralField {
    pub fn new(params: MlpParams, bounds: Aabb) -> Self {
        Self { params, bounds }
    }

    pub fn inside(&self, x: Vec3) -> bool {
        let e = Vec3::splat(BOUNDS_SLACK);
        Aabb::new(self.bounds.min - e, self.bounds.max + e).contains(x)
    }

    /// Encodes `xs` into a row-major `n x 6W` matrix.
    pub fn encode_batch(&self, xs: &[Vec3]) -> Vec<f64> {
        let levels = self.params.arch().levels;
        let mut enc = Vec::with_capacity(xs.len() * 6 * levels);
        for &x in xs {
            encode_point_into(self.bounds.normalize_point(x), levels, &mut enc);
        }
        enc
    }

    /// Field outputs plus the raw heads and activations for a reverse pass.
    pub fn eval_with_cache(&self, xs: &[Vec3]) -> (Vec<FieldOutput>, crate::mlp::ForwardCache) {
        let enc = self.encode_batch(xs);
        let cache = self
            .params
            .forward_batch(&enc, xs.len())
            .expect("encoding length matches the network input");
        let outs = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let mut o = FieldOutput::from_raw(cache.raw_row(i));
                if !self.inside(x) {
                    o.sigma = 0.0;
                }
                o
            })
            .collect();
        (outs, cache)
    }
}

impl Field for NeuralField {
    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn eval(&self, x: Vec3) -> FieldOutput {
        self.eval_many(&[x])[0]
    }

    fn eval_many(&self, xs: &[Vec3]) -> Vec<FieldOutput> {
        if xs.is_empty() {
            return Vec::new();
        }
        self.eval_with_cache(xs).0
    }
}
