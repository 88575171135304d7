//! Static comparison artifacts: PSNR, image montages, CSV series and
//! simple line-chart PNGs.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Rgb;
use crate::image::{write_png_rgb8, Image};

/// Reported in place of infinity for identical images.
pub const PSNR_IDENTICAL: f64 = 99.0;

/// `10 log10(1 / MSE)` over all channels, peak 1.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::InvalidInput(format!(
            "psnr of {}x{} and {}x{} images",
            a.width, a.height, b.width, b.height
        )));
    }
    let n = (a.pixels.len() * 3).max(1) as f64;
    let mse = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| {
            let d = *p - *q;
            d.mul_elem(d).sum()
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_IDENTICAL))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub images: Vec<(String, Image)>,
    pub series: Vec<Series>,
    pub out_dir: PathBuf,
}

impl Report {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            ..Default::default()
        }
    }

    /// Writes `montage.png` (images left to right, in order, with their
    /// labels listed in `montage.txt`) and, per series, `<label>.csv` and
    /// `<label>.png`. Returns the written paths.
    pub fn emit(&self) -> Result<Vec<PathBuf>> {
        let mut seen = HashSet::new();
        for label in self.images.iter().map(|(l, _)| l).chain(self.series.iter().map(|s| &s.label)) {
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate report label {label:?}")));
            }
            if label.is_empty() || label.contains(['/', '\\']) {
                return Err(Error::InvalidInput(format!("report label {label:?} is not a file name")));
            }
        }
        let dir = &self.out_dir;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        if !self.images.is_empty() {
            let m = montage(&self.images.iter().map(|(_, i)| i).collect::<Vec<_>>());
            let path = dir.join("montage.png");
            m.save_png(&path)?;
            written.push(path);
            let labels: String = self.images.iter().map(|(l, _)| format!("{l}\n")).collect();
            let path = dir.join("montage.txt");
            fs::write(&path, labels).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        for s in &self.series {
            let path = dir.join(format!("{}.csv", s.label));
            fs::write(&path, series_csv(&s.points)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            let path = dir.join(format!("{}.png", s.label));
            let chart = line_chart(&s.points, 480, 320);
            write_png_rgb8(&path, chart.width, chart.height, &chart.to_rgb8())?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn series_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("x,y\n");
    for (x, y) in points {
        let _ = writeln!(s, "{x},{y}");
    }
    s
}

/// Images side by side on a black canvas, top-aligned, 2 px apart.
pub fn montage(images: &[&Image]) -> Image {
    const GAP: usize = 2;
    let w = images.iter().map(|i| i.width).sum::<usize>() + GAP * images.len().saturating_sub(1);
    let h = images.iter().map(|i| i.height).max().unwrap_or(0);
    let mut out = Image::new(w.max(1), h.max(1));
    let mut x0 = 0;
    for img in images {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set(x0 + x, y, img.get(x, y));
            }
        }
        x0 += img.width + GAP;
    }
    out
}

/// Rasterized polyline with axes on a white background. Values are
/// auto-ranged; non-finite points are skipped.
pub fn line_chart(points: &[(f64, f64)], width: usize, height: usize) -> Image {
    const MARGIN: usize = 24;
    let mut img = Image::filled(width, height, Rgb::WHITE);
    let axis = Rgb::splat(0.0);
    let line = Rgb::new(0.8, 0.1, 0.1);
    let (x0, y0) = (MARGIN as f64, (height - MARGIN) as f64);
    let (x1, y1) = ((width - MARGIN / 2) as f64, (MARGIN / 2) as f64);
    draw_line(&mut img, (x0, y0), (x1, y0), axis);
    draw_line(&mut img, (x0, y0), (x0, y1), axis);
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if pts.is_empty() {
        return img;
    }
    let range = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (xl, xh) = range(&mut pts.iter().map(|p| p.0));
    let (yl, yh) = range(&mut pts.iter().map(|p| p.1));
    let map = |(x, y): (f64, f64)| (x0 + (x - xl) / (xh - xl) * (x1 - x0), y0 + (y - yl) / (yh - yl) * (y1 - y0));
    if pts.len() == 1 {
        let p = map(pts[0]);
        draw_line(&mut img, p, p, line);
    }
    for w in pts.windows(2) {
        draw_line(&mut img, map(w[0]), map(w[1]), line);
    }
    img
}

fn draw_line(img: &mut Image, a: (f64, f64), b: (f64, f64), c: Rgb) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (a.0 + (b.0 - a.0) * t).round();
        let y = (a.1 + (b.1 - a.1) * t).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width && (y as usize) < img.height {
            img.set(x as usize, y as usize, c);
        }
    }
}

/// Reads a tab-separated `iter loss seconds` log into (iteration, loss).
pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with("iter") || line.starts_with('#') {
            continue;
        }
        let mut f = line.split('\t');
        let parse = |s: Option<&str>| s.and_then(|v| v.trim().parse::<f64>().ok());
        match (parse(f.next()), parse(f.next())) {
            (Some(i), Some(l)) => out.push((i, l)),
            _ => return Err(Error::format(path, format!("line {}: expected `iter<TAB>loss<TAB>seconds`", n + 1))),
        }
    }
    Ok(out)
}
