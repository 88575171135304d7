//! `key = value` configuration shared by every command.
//!
//! Files are UTF-8, one pair per line, `#` starts a comment. Later values
//! (including `--set` overrides) replace earlier ones.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{Camera, PointLight, Rgb, Vec3};

/// Every recognized key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("scene", "preset: homog-sphere, checker-sphere, two-blob-occluder, fur-patch"),
    ("data_dir", "dataset directory"),
    ("views", "number of generated views"),
    ("resolution", "image width and height in pixels"),
    ("layout", "camera layout: ring or sphere"),
    ("distance", "camera distance from the scene center"),
    ("elevation", "ring elevation in degrees"),
    ("azimuth0", "azimuth of the first view in degrees"),
    ("fov", "horizontal field of view in degrees"),
    ("intensity", "flash intensity r,g,b (default: auto exposure)"),
    ("levels", "positional encoding levels"),
    ("run_dir", "training output directory"),
    ("resume", "continue from the newest checkpoint: true or false"),
    ("log_every", "progress message interval in iterations"),
    ("learning_rate", "Adam step size"),
    ("beta", "transmittance barrier weight"),
    ("batch_rays", "rays per iteration"),
    ("iterations", "total iterations"),
    ("seed", "random seed"),
    ("n_coarse", "stratified samples per ray"),
    ("n_fine", "importance samples per ray"),
    ("tau_eps", "barrier clamp"),
    ("checkpoint_every", "checkpoint interval in iterations (0: only at the end)"),
    ("width", "hidden layer width"),
    ("lr_decay", "learning-rate factor per lr_decay_steps"),
    ("lr_decay_steps", "iterations per lr_decay factor"),
    ("chunk_rays", "rays per reverse-pass work unit"),
    ("checkpoint", "training run directory to load networks from"),
    ("iteration", "checkpoint iteration (default: newest)"),
    ("camera", "camera spec: pos=x,y,z lookat=x,y,z fov=deg [up=x,y,z] [res=WxH]"),
    ("light", "light spec: pos=x,y,z intensity=r,g,b (default: flash at the camera)"),
    ("tau_mode", "light transmittance: cache or brute-force"),
    ("cache_resolution", "light cache rays per side"),
    ("cache_out", "optional path for the light cache dump"),
    ("brute_force_step", "marching step of brute-force light transmittance"),
    ("background", "background radiance r,g,b"),
    ("convention", "view transmittance: exclusive or inclusive"),
    ("out", "output path (render: path stem for .pfm and .png)"),
    ("dims", "export grid: n or nx,ny,nz"),
    ("fixture", "validation fixture: standard, empty-scene or weight-sign-error"),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", n + 1)));
            };
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(known(key), "unregistered key {key}");
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("`{key}`: cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Value of a key the subcommand cannot run without.
    pub fn require<T: FromStr>(&self, command: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("`{command}` requires key `{key}`")))
    }

    pub fn require_path(&self, command: &str, key: &str) -> Result<PathBuf> {
        self.require::<PathBuf>(command, key)
    }

    pub fn rgb(&self, key: &str) -> Result<Option<Rgb>> {
        self.raw(key)
            .map(|v| parse_triple(v).map(Rgb::from_array).map_err(|m| Error::Config(format!("`{key}`: {m}"))))
            .transpose()
    }
}

pub fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?} in {s:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let arr: [f64; 3] = v.try_into().map_err(|_| format!("expected three comma-separated numbers, got {s:?}"))?;
    if arr.iter().all(|x| x.is_finite()) {
        Ok(arr)
    } else {
        Err(format!("non-finite value in {s:?}"))
    }
}

/// Parsed `name=value` tokens of a camera or light spec.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewSpec {
    pub pos: Option<Vec3>,
    pub lookat: Option<Vec3>,
    pub up: Option<Vec3>,
    pub fov: Option<f64>,
    pub intensity: Option<Rgb>,
    pub res: Option<(usize, usize)>,
}

impl FromStr for ViewSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut v = ViewSpec::default();
        for tok in s.split_whitespace() {
            let (k, val) = tok.split_once('=').ok_or_else(|| format!("token {tok:?} is not name=value"))?;
            match k {
                "pos" => v.pos = Some(Vec3::from_array(parse_triple(val)?)),
                "lookat" => v.lookat = Some(Vec3::from_array(parse_triple(val)?)),
                "up" => v.up = Some(Vec3::from_array(parse_triple(val)?)),
                "intensity" => v.intensity = Some(Rgb::from_array(parse_triple(val)?)),
                "fov" => v.fov = Some(val.parse().map_err(|_| format!("bad fov {val:?}"))?),
                "res" => {
                    let (w, h) = val.split_once('x').ok_or_else(|| format!("res {val:?} is not WxH"))?;
                    let p = |x: &str| x.parse::<usize>().map_err(|_| format!("bad resolution {val:?}"));
                    v.res = Some((p(w)?, p(h)?));
                }
                _ => return Err(format!("unknown spec field {k:?}")),
            }
        }
        Ok(v)
    }
}

impl ViewSpec {
    pub fn camera(&self, default_res: usize) -> Result<Camera> {
        let missing = |f: &str| Error::Config(format!("camera spec needs `{f}=`"));
        let pos = self.pos.ok_or_else(|| missing("pos"))?;
        let lookat = self.lookat.ok_or_else(|| missing("lookat"))?;
        let fov = self.fov.ok_or_else(|| missing("fov"))?;
        let (w, h) = self.res.unwrap_or((default_res, default_res));
        Camera::look_at(pos, lookat, self.up.unwrap_or(Vec3::Z), fov, w, h)
    }

    pub fn light(&self) -> Result<PointLight> {
        let pos = self.pos.ok_or_else(|| Error::Config("light spec needs `pos=`".into()))?;
        let intensity = self
            .intensity
            .ok_or_else(|| Error::Config("light spec needs `intensity=`".into()))?;
        PointLight::new(pos, intensity)
    }
}
