//! The reflectance-field network: a ReLU MLP mapping an encoded point to an
//! 8-channel raw head `(sigma, normal[3], albedo[3], roughness)`.
//!
//! Parameters live in one flat `Vec<f64>`; layer `l` stores its weight
//! matrix (`out x in`, row-major) followed by its bias. The layout is the
//! checkpoint layout, and gradients and optimizer moments share it, so
//! Adam runs over plain slices.
//!
//! Evaluation is batched: a batch of `n` encoded points is an `n x in`
//! row-major matrix and every layer is one GEMM.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::encoded_len;
use crate::error::{Error, Result};

/// Linear layers in the default architecture.
pub const DEFAULT_DEPTH: usize = 14;
/// Raw output channels: sigma, normal (3), albedo (3), roughness.
pub const HEAD_DIM: usize = 8;
/// Layer whose input is `hidden || encoded input`.
pub const SKIP_LAYER: usize = 7;
pub const DEFAULT_WIDTH: usize = 128;
/// Initial bias of the density output, so a fresh field starts nearly empty.
pub const SIGMA_BIAS_INIT: f64 = -3.0;

const CKPT_MAGIC: &[u8; 8] = b"NRFCKPT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpArch {
    /// Number of linear layers, including the output head.
    pub depth: usize,
    pub width: usize,
    /// Positional-encoding levels `W`; the input has `6W` features.
    pub levels: usize,
}

impl MlpArch {
    pub fn new(depth: usize, width: usize, levels: usize) -> Result<Self> {
        if depth == 0 || width == 0 || levels == 0 {
            return Err(Error::InvalidInput(format!(
                "network depth, width and encoding levels must be positive (got {depth}, {width}, {levels})"
            )));
        }
        Ok(Self { depth, width, levels })
    }

    pub fn input_dim(&self) -> usize {
        encoded_len(self.levels)
    }

    /// The skip layer exists only when layer 7 is a hidden layer.
    pub fn skip(&self) -> Option<usize> {
        (self.depth > SKIP_LAYER + 1).then_some(SKIP_LAYER)
    }

    /// `(out, in)` of layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        let out = if l + 1 == self.depth { HEAD_DIM } else { self.width };
        let inp = if l == 0 {
            self.input_dim()
        } else if self.skip() == Some(l) {
            self.width + self.input_dim()
        } else {
            self.width
        };
        (out, inp)
    }

    pub fn param_count(&self) -> usize {
        (0..self.depth)
            .map(|l| {
                let (o, i) = self.layer_shape(l);
                o * i + o
            })
            .sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.depth + 1);
        let mut acc = 0;
        for l in 0..self.depth {
            offs.push(acc);
            let (o, i) = self.layer_shape(l);
            acc += o * i + o;
        }
        offs.push(acc);
        offs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: MlpArch,
    offsets: Vec<usize>,
    pub data: Vec<f64>,
}

/// Gradient accumulator, shape-congruent with an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub data: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            data: vec![0.0; params.data.len()],
        }
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        assert_eq!(self.data.len(), other.data.len(), "gradient shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|g| g.is_finite())
    }
}

/// Activations kept from a batched forward pass for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub n: usize,
    pub input: Vec<f64>,
    /// Post-ReLU output of every hidden layer, `n x width` each.
    pub hidden: Vec<Vec<f64>>,
    /// Raw head, `n x 8`.
    pub raw: Vec<f64>,
}

impl ForwardCache {
    pub fn raw_row(&self, i: usize) -> &[f64] {
        &self.raw[i * HEAD_DIM..(i + 1) * HEAD_DIM]
    }
}

impl MlpParams {
    /// Default-depth network with uniform fan-in scaled weights. Biases are zero
    /// apart from the density output's.
    pub fn init(seed: u64, width: usize, levels: usize) -> Result<Self> {
        if width < HEAD_DIM {
            return Err(Error::InvalidInput(format!("hidden width must be >= {HEAD_DIM}, got {width}")));
        }
        Self::init_with_arch(seed, MlpArch::new(DEFAULT_DEPTH, width, levels)?)
    }

    pub fn init_with_arch(seed: u64, arch: MlpArch) -> Result<Self> {
        let mut p = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..arch.depth {
            let (out, inp) = arch.layer_shape(l);
            // He-uniform behind ReLU inputs, Xavier-uniform on the first layer
            let bound = if l == 0 {
                (6.0 / (inp + out) as f64).sqrt()
            } else {
                (6.0 / inp as f64).sqrt()
            };
            let (w, _) = p.layer_mut(l);
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        let (_, b) = p.layer_mut(arch.depth - 1);
        b[0] = SIGMA_BIAS_INIT;
        Ok(p)
    }

    pub fn zeros(arch: MlpArch) -> Self {
        let offsets = arch.offsets();
        let n = *offsets.last().unwrap();
        Self {
            arch,
            offsets,
            data: vec![0.0; n],
        }
    }

    pub fn arch(&self) -> MlpArch {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (out, inp) = self.arch.layer_shape(l);
        let s = &self.data[self.offsets[l]..self.offsets[l + 1]];
        s.split_at(out * inp)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (out, inp) = self.arch.layer_shape(l);
        let s = &mut self.data[self.offsets[l]..self.offsets[l + 1]];
        s.split_at_mut(out * inp)
    }

    /// Offset of layer `l` in the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Raw head of a single encoded point.
    pub fn forward_raw(&self, encoded: &[f64]) -> Result<[f64; HEAD_DIM]> {
        let cache = self.forward_batch(encoded, 1)?;
        let mut out = [0.0; HEAD_DIM];
        out.copy_from_slice(&cache.raw);
        Ok(out)
    }

    /// Forward pass over `n` encoded points stored row-major in `input`.
    pub fn forward_batch(&self, input: &[f64], n: usize) -> Result<ForwardCache> {
        let in_dim = self.input_dim();
        if input.len() != n * in_dim {
            return Err(Error::ShapeMismatch {
                expected: n * in_dim,
                got: input.len(),
            });
        }
        let depth = self.arch.depth;
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(depth.saturating_sub(1));
        let mut raw = Vec::new();
        for l in 0..depth {
            let (out, inp) = self.arch.layer_shape(l);
            let (w, b) = self.layer(l);
            let mut y = vec![0.0; n * out];
            for row in y.chunks_exact_mut(out) {
                row.copy_from_slice(b);
            }
            if l == 0 {
                gemm_xwt(n, in_dim, out, input, in_dim, w, inp, 0, &mut y);
            } else {
                let width = self.arch.width;
                let h = &hidden[l - 1];
                gemm_xwt(n, width, out, h, width, w, inp, 0, &mut y);
                if self.arch.skip() == Some(l) {
                    gemm_xwt(n, in_dim, out, input, in_dim, w, inp, width, &mut y);
                }
            }
            if l + 1 == depth {
                raw = y;
            } else {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
                hidden.push(y);
            }
        }
        Ok(ForwardCache {
            n,
            input: input.to_vec(),
            hidden,
            raw,
        })
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d raw`
    /// (`n x 8`) for the batch held in `cache`.
    pub fn backward_batch(&self, cache: &ForwardCache, upstream: &[f64], grads: &mut ParamGrads) -> Result<()> {
        let n = cache.n;
        if upstream.len() != n * HEAD_DIM {
            return Err(Error::ShapeMismatch {
                expected: n * HEAD_DIM,
                got: upstream.len(),
            });
        }
        if grads.data.len() != self.data.len() {
            return Err(Error::ShapeMismatch {
                expected: self.data.len(),
                got: grads.data.len(),
            });
        }
        let in_dim = self.input_dim();
        let width = self.arch.width;
        let mut dz = upstream.to_vec();
        for l in (0..self.arch.depth).rev() {
            let (out, inp) = self.arch.layer_shape(l);
            let off = self.offsets[l];
            let (gw, gb) = grads.data[off..self.offsets[l + 1]].split_at_mut(out * inp);
            for row in dz.chunks_exact(out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                gemm_dzt_x(n, out, in_dim, &dz, &cache.input, in_dim, gw, inp, 0);
                break;
            }
            let h = &cache.hidden[l - 1];
            gemm_dzt_x(n, out, width, &dz, h, width, gw, inp, 0);
            if self.arch.skip() == Some(l) {
                gemm_dzt_x(n, out, in_dim, &dz, &cache.input, in_dim, gw, inp, width);
            }
            let (w, _) = self.layer(l);
            let mut dh = vec![0.0; n * width];
            gemm_dz_w(n, out, width, &dz, w, inp, &mut dh);
            for (d, a) in dh.iter_mut().zip(h) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            dz = dh;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CKPT_MAGIC)?;
        for v in [self.arch.depth, self.arch.width, self.arch.levels, HEAD_DIM] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::format(path, reason))
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 24 || &bytes[..8] != CKPT_MAGIC {
            return Err("missing NRFCKPT1 header".into());
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let (depth, width, levels, head) = (word(0), word(1), word(2), word(3));
        if head != HEAD_DIM {
            return Err(format!("head dimension {head}, expected {HEAD_DIM}"));
        }
        let arch = MlpArch::new(depth, width, levels).map_err(|e| e.to_string())?;
        let body = &bytes[24..];
        if body.len() != arch.param_count() * 8 {
            return Err(format!(
                "expected {} parameter bytes, found {}",
                arch.param_count() * 8,
                body.len()
            ));
        }
        let mut p = Self::zeros(arch);
        for (v, chunk) in p.data.iter_mut().zip(body.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(p)
    }
}

// Y[n x out] += X[n x k] . W[:, col0..col0+k]^T, with W row-major and row
// stride `w_stride`.
#[allow(clippy::too_many_arguments)]
fn gemm_xwt(n: usize, k: usize, out: usize, x: &[f64], x_stride: usize, w: &[f64], w_stride: usize, col0: usize, y: &mut [f64]) {
    assert!(x.len() >= n * x_stride && y.len() >= n * out);
    assert!(w.len() >= (out - 1) * w_stride + col0 + k);
    // SAFETY: bounds asserted above; strides describe in-bounds views.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            out,
            1.0,
            x.as_ptr(),
            x_stride as isize,
            1,
            w.as_ptr().add(col0),
            1,
            w_stride as isize,
            1.0,
            y.as_mut_ptr(),
            out as isize,
            1,
        );
    }
}

// dW[:, col0..col0+k] += dZ^T[out x n] . X[n x k]
#[allow(clippy::too_many_arguments)]
fn gemm_dzt_x(n: usize, out: usize, k: usize, dz: &[f64], x: &[f64], x_stride: usize, gw: &mut [f64], w_stride: usize, col0: usize) {
    assert!(dz.len() >= n * out && x.len() >= n * x_stride);
    assert!(gw.len() >= (out - 1) * w_stride + col0 + k);
    // SAFETY: bounds asserted above.
    unsafe {
        matrixmultiply::dgemm(
            out,
            n,
            k,
            1.0,
            dz.as_ptr(),
            1,
            out as isize,
            x.as_ptr(),
            x_stride as isize,
            1,
            1.0,
            gw.as_mut_ptr().add(col0),
            w_stride as isize,
            1,
        );
    }
}

// dH[n x k] = dZ[n x out] . W[:, 0..k]
fn gemm_dz_w(n: usize, out: usize, k: usize, dz: &[f64], w: &[f64], w_stride: usize, dh: &mut [f64]) {
    assert!(dz.len() >= n * out && dh.len() >= n * k);
    assert!(w.len() >= (out - 1) * w_stride + k);
    // SAFETY: bounds asserted above.
    unsafe {
        matrixmultiply::dgemm(
            n,
            out,
            k,
            1.0,
            dz.as_ptr(),
            out as isize,
            1,
            w.as_ptr(),
            w_stride as isize,
            1,
            0.0,
            dh.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}
