//! Collocated flash datasets on disk.
//!
//! ```text
//! out_dir/
//!   manifest.txt
//!   view_0000.pfm   linear RGB, read back for training
//!   view_0000.png   preview only
//! ```
//!
//! `manifest.txt` holds `resolution W H`, `W levels`, `bbox x0 y0 z0 x1 y1 z1`,
//! `model ...` and one line per view:
//! `id px py pz r00 r01 r02 r10 r11 r12 r20 r21 r22 focal ir ig ib`.
//! The rotation maps camera axes (right, down, forward) to world. Lines
//! starting with `#` are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Camera, Mat3, PointLight, Rgb, Vec3};
use crate::image::Image;
use crate::reflectance::ReflectanceModel;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    /// Always at the camera center.
    pub light: PointLight,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub views: Vec<View>,
    pub levels: usize,
    pub bounds: Aabb,
    pub model: ReflectanceModel,
}

pub fn view_stem(id: usize) -> String {
    format!("view_{id:04}")
}

impl Dataset {
    pub fn resolution(&self) -> (usize, usize) {
        self.views
            .first()
            .map(|v| (v.camera.width, v.camera.height))
            .unwrap_or((0, 0))
    }

    pub fn pixel_count(&self) -> usize {
        self.views.iter().map(|v| v.image.pixels.len()).sum()
    }

    pub fn manifest(&self) -> String {
        let (w, h) = self.resolution();
        let b = self.bounds;
        let mut s = String::from("# collocated flash dataset\n");
        let _ = writeln!(s, "resolution {w} {h}");
        let _ = writeln!(s, "W {}", self.levels);
        let _ = writeln!(
            s,
            "bbox {} {} {} {} {} {}",
            b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z
        );
        let _ = writeln!(s, "model {}", self.model);
        for (id, v) in self.views.iter().enumerate() {
            let p = v.camera.position;
            let _ = write!(s, "{id} {} {} {}", p.x, p.y, p.z);
            for r in v.camera.rotation.to_row_major() {
                let _ = write!(s, " {r}");
            }
            let i = v.light.intensity;
            let _ = writeln!(s, " {} {} {} {}", v.camera.focal, i.r, i.g, i.b);
        }
        s
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (id, v) in self.views.iter().enumerate() {
            let stem = view_stem(id);
            v.image.save_pfm(dir.join(format!("{stem}.pfm")))?;
            v.image.save_png(dir.join(format!("{stem}.png")))?;
        }
        let path = dir.join(MANIFEST);
        fs::write(&path, self.manifest()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m = parse_manifest(&text).map_err(|r| Error::format(&path, r))?;
        let mut views = Vec::with_capacity(m.views.len());
        for (id, camera, intensity) in m.views {
            let img_path: PathBuf = dir.join(format!("{}.pfm", view_stem(id)));
            let image = Image::load_pfm(&img_path)?;
            if (image.width, image.height) != m.resolution {
                return Err(Error::format(
                    &img_path,
                    format!(
                        "image is {}x{}, manifest says {}x{}",
                        image.width, image.height, m.resolution.0, m.resolution.1
                    ),
                ));
            }
            let light = PointLight::new(camera.position, intensity).map_err(|e| Error::format(&path, e.to_string()))?;
            views.push(View { camera, light, image });
        }
        Ok(Dataset {
            views,
            levels: m.levels,
            bounds: m.bounds,
            model: m.model,
        })
    }
}

struct Manifest {
    resolution: (usize, usize),
    levels: usize,
    bounds: Aabb,
    model: ReflectanceModel,
    views: Vec<(usize, Camera, Rgb)>,
}

fn parse_manifest(text: &str) -> std::result::Result<Manifest, String> {
    let mut resolution = None;
    let mut levels = None;
    let mut bounds = None;
    let mut model = ReflectanceModel::default();
    let mut views = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |what: &str| format!("line {}: {what}", n + 1);
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let nums = || -> std::result::Result<Vec<f64>, String> {
            rest.split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| err(&format!("bad number {v:?}"))))
                .collect()
        };
        match key {
            "resolution" => {
                let v = nums()?;
                match v[..] {
                    [w, h] if w >= 1.0 && h >= 1.0 && w.fract() == 0.0 && h.fract() == 0.0 => {
                        resolution = Some((w as usize, h as usize))
                    }
                    _ => return Err(err("expected `resolution W H`")),
                }
            }
            "W" => levels = Some(rest.trim().parse::<usize>().map_err(|_| err("bad W"))?),
            "bbox" => {
                let v = nums()?;
                if v.len() != 6 || !(v[0] < v[3] && v[1] < v[4] && v[2] < v[5]) {
                    return Err(err("expected `bbox x0 y0 z0 x1 y1 z1` with min < max"));
                }
                bounds = Some(Aabb::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5])));
            }
            "model" => model = rest.parse().map_err(|e: String| err(&e))?,
            _ => {
                let id: usize = key.parse().map_err(|_| err(&format!("unknown entry {key:?}")))?;
                let v = nums()?;
                if v.len() != 16 {
                    return Err(err(&format!("view line needs 16 numbers after the id, got {}", v.len())));
                }
                let (w, h) = resolution.ok_or_else(|| err("view line before resolution"))?;
                let rot: [f64; 9] = v[3..12].try_into().unwrap();
                let cam = Camera::new(Vec3::new(v[0], v[1], v[2]), Mat3::from_row_major(rot), v[12], w, h)
                    .map_err(|e| err(&e.to_string()))?;
                views.push((id, cam, Rgb::new(v[13], v[14], v[15])));
            }
        }
    }
    let resolution = resolution.ok_or("missing resolution line")?;
    let levels = levels.ok_or("missing W line")?;
    let bounds = bounds.ok_or("missing bbox line")?;
    if views.is_empty() {
        return Err("manifest lists no views".into());
    }
    Ok(Manifest {
        resolution,
        levels,
        bounds,
        model,
        views,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let cams = [Vec3::new(0.0, -3.0, 0.4), Vec3::new(2.1, 2.0, 1.1)];
        let views = cams
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let camera = Camera::look_at(p, Vec3::ZERO, Vec3::Z, 37.5, 3, 2).unwrap();
                let light = PointLight::new(p, Rgb::new(1.0 / 3.0, 2.5, 7.0)).unwrap();
                let image = Image::filled(3, 2, Rgb::splat(0.25 * k as f64 + 0.1));
                View { camera, light, image }
            })
            .collect();
        Dataset {
            views,
            levels: 10,
            bounds: Aabb::unit(),
            model: ReflectanceModel::default(),
        }
    }

    #[test]
    fn round_trip_preserves_poses_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.views.len(), 2);
        for (a, b) in ds.views.iter().zip(&back.views) {
            assert_eq!(a.camera, b.camera);
            assert_eq!(a.light, b.light);
            assert_eq!(a.image.quantized_f32(), b.image);
        }
        assert_eq!(back.levels, 10);
        assert_eq!(back.bounds, ds.bounds);
        assert!(dir.path().join("view_0001.png").exists());
    }

    #[test]
    fn manifest_errors_are_reported() {
        assert!(parse_manifest("W 4\nbbox -1 -1 -1 1 1 1\n").is_err());
        assert!(parse_manifest("resolution 2 2\nW 4\nbbox 1 1 1 -1 -1 -1\n0 0 -3 1 0 0 0 1 0 0 0 1 2 1 1 1\n").is_err());
        let err = parse_manifest("resolution 2 2\nW 4\nbbox -1 -1 -1 1 1 1\nfoo 1\n").err().unwrap();
        assert!(err.contains("foo"));
        let ok = parse_manifest("# c\nresolution 2 2\nW 4\nbbox -1 -1 -1 1 1 1\n0 0 0 -3 1 0 0 0 1 0 0 0 1 2 1 1 1\n");
        assert!(ok.is_ok());
    }
}
