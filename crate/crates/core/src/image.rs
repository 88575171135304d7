//! Linear RGB images with PFM (lossless, 32-bit) and PNG (8-bit preview)
//! writers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Rgb;

/// Row-major image, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, Rgb::BLACK)
    }

    pub fn filled(width: usize, height: usize, c: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![c; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn mean(&self) -> Rgb {
        let mut acc = Rgb::BLACK;
        for p in &self.pixels {
            acc += *p;
        }
        acc / self.pixels.len().max(1) as f64
    }

    /// Rounds every channel through `f32`, the precision PFM stores.
    pub fn quantized_f32(&self) -> Image {
        let q = |v: f64| v as f32 as f64;
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| Rgb::new(q(p.r), q(p.g), q(p.b))).collect(),
        }
    }

    /// Little-endian color PFM. Rows are stored bottom-to-top as the
    /// format requires.
    pub fn write_pfm(&self, w: &mut impl Write) -> std::io::Result<()> {
        write!(w, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.width * 12);
        for y in (0..self.height).rev() {
            buf.clear();
            for x in 0..self.width {
                for c in self.get(x, y).to_array() {
                    buf.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_pfm(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_pfm(r: &mut impl BufRead) -> std::result::Result<Image, String> {
        let mut line = String::new();
        let mut next_token_line = |r: &mut dyn BufRead| -> std::result::Result<String, String> {
            line.clear();
            r.read_line(&mut line).map_err(|e| e.to_string())?;
            Ok(line.trim().to_string())
        };
        let magic = next_token_line(r)?;
        let channels = match magic.as_str() {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(format!("bad PFM magic {other:?}")),
        };
        let dims = next_token_line(r)?;
        let mut it = dims.split_whitespace().map(|s| s.parse::<usize>());
        let (width, height) = match (it.next(), it.next(), it.next()) {
            (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
            _ => return Err(format!("bad PFM dimensions {dims:?}")),
        };
        let scale: f32 = next_token_line(r)?
            .parse()
            .map_err(|_| "bad PFM scale".to_string())?;
        let little = scale < 0.0;
        let mut body = vec![0u8; width * height * channels * 4];
        r.read_exact(&mut body).map_err(|e| format!("truncated PFM data: {e}"))?;
        let mut img = Image::new(width, height);
        let mut vals = body.chunks_exact(4).map(|c| {
            let b = [c[0], c[1], c[2], c[3]];
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        });
        for y in (0..height).rev() {
            for x in 0..width {
                let c = if channels == 3 {
                    let (r, g, b) = (vals.next().unwrap(), vals.next().unwrap(), vals.next().unwrap());
                    Rgb::new(r as f64, g as f64, b as f64)
                } else {
                    Rgb::splat(vals.next().unwrap() as f64)
                };
                img.set(x, y, c);
            }
        }
        Ok(img)
    }

    pub fn load_pfm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_pfm(&mut BufReader::new(f)).map_err(|reason| Error::format(path, reason))
    }

    /// 8-bit sRGB-ish preview: clamp to `[0,1]`, gamma 2.2.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let enc = |v: f64| (v.clamp(0.0, 1.0).powf(1.0 / 2.2) * 255.0).round() as u8;
        self.pixels
            .iter()
            .flat_map(|p| [enc(p.r), enc(p.g), enc(p.b)])
            .collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        write_png_rgb8(path, self.width, self.height, &self.to_rgb8())
    }
}

pub(crate) fn write_png_rgb8(path: impl AsRef<Path>, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pfm_round_trip_is_bitwise(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f32::from_bits((s >> 33) as u32 & 0x7f7f_ffff) as f64
            };
            let mut img = Image::new(w, h);
            for p in img.pixels.iter_mut() {
                *p = Rgb::new(next(), next(), next());
            }
            let mut bytes = Vec::new();
            img.write_pfm(&mut bytes).unwrap();
            let back = Image::read_pfm(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(&back, &img);
            let mut again = Vec::new();
            back.write_pfm(&mut again).unwrap();
            prop_assert_eq!(bytes, again);
        }
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let mut img = Image::new(1, 2);
        img.set(0, 0, Rgb::splat(1.0));
        let mut bytes = Vec::new();
        img.write_pfm(&mut bytes).unwrap();
        let body = &bytes[bytes.len() - 24..];
        assert_eq!(f32::from_le_bytes(body[0..4].try_into().unwrap()), 0.0);
        assert_eq!(f32::from_le_bytes(body[12..16].try_into().unwrap()), 1.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Image::read_pfm(&mut &b"P6\n1 1\n255\n"[..]).is_err());
        assert!(Image::read_pfm(&mut &b"PF\n2 2\n-1.0\n\0\0"[..]).is_err());
    }

    #[test]
    fn png_preview_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        Image::filled(3, 2, Rgb::new(0.2, 0.5, 2.0)).save_png(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
