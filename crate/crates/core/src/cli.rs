//! Command implementations behind the `nrf` binary. Each takes a parsed
//! [`Config`]; see [`crate::config::KEYS`] for the recognized keys.

use std::path::{Path, PathBuf};

use crate::config::{Config, ViewSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::export::VolumeExport;
use crate::field::NeuralField;
use crate::geometry::PointLight;
use crate::image::Image;
use crate::lightcache::{CacheSettings, TransmittanceVolume, DEFAULT_RESOLUTION};
use crate::mlp::MlpParams;
use crate::raymarch::{render_image, BruteForceTransmittance, RenderMode, RenderSettings, TransmittanceConvention};
use crate::scenegen::{generate_dataset, AnalyticScene, DatasetSpec, Preset};
use crate::trainer::{checkpoint_paths, latest_checkpoint, read_scene_sidecar, train, TrainConfig, TrainRun};
use crate::validate::{format_table, run_suite, Fixture};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

pub fn cmd_gen_data(c: &Config) -> Result<Dataset> {
    const CMD: &str = "gen-data";
    let preset: Preset = c.require(CMD, "scene")?;
    let out = c.require_path(CMD, "data_dir")?;
    let d = DatasetSpec::default();
    let spec = DatasetSpec {
        n_views: c.get_or("views", d.n_views)?,
        resolution: c.get_or("resolution", d.resolution)?,
        layout: c.get_or("layout", d.layout)?,
        distance: c.get_or("distance", d.distance)?,
        elevation: c.get_or("elevation", d.elevation)?,
        azimuth0: c.get_or("azimuth0", d.azimuth0)?,
        fov: c.get_or("fov", d.fov)?,
        intensity: c.rgb("intensity")?,
        levels: c.get_or("levels", d.levels)?,
    };
    generate_dataset(&AnalyticScene::preset(preset), &spec, out)
}

pub fn train_config(c: &Config) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let t = TrainConfig {
        learning_rate: c.get_or("learning_rate", d.learning_rate)?,
        beta: c.get_or("beta", d.beta)?,
        batch_rays: c.get_or("batch_rays", d.batch_rays)?,
        iterations: c.get_or("iterations", d.iterations)?,
        seed: c.get_or("seed", d.seed)?,
        n_coarse: c.get_or("n_coarse", d.n_coarse)?,
        n_fine: c.get_or("n_fine", d.n_fine)?,
        tau_eps: c.get_or("tau_eps", d.tau_eps)?,
        checkpoint_every: c.get_or("checkpoint_every", d.checkpoint_every)?,
        width: c.get_or("width", d.width)?,
        lr_decay: c.get_or("lr_decay", d.lr_decay)?,
        lr_decay_steps: c.get_or("lr_decay_steps", d.lr_decay_steps)?,
        chunk_rays: c.get_or("chunk_rays", d.chunk_rays)?,
    };
    t.validate()?;
    Ok(t)
}

pub fn cmd_train(c: &Config) -> Result<()> {
    const CMD: &str = "train";
    let data = c.require_path(CMD, "data_dir")?;
    let run = TrainRun {
        out_dir: c.require_path(CMD, "run_dir")?,
        resume: c.get_or("resume", false)?,
        log_every: c.get_or("log_every", 100)?,
    };
    let config = train_config(c)?;
    let ds = Dataset::load(data)?;
    let state = train(&ds, &config, &run)?;
    log::info!("finished at iteration {}", state.iteration);
    Ok(())
}

/// Coarse and fine fields of a training run directory.
pub fn load_fields(run_dir: &Path, iteration: Option<usize>) -> Result<(NeuralField, NeuralField, crate::reflectance::ReflectanceModel)> {
    let (bounds, model) = read_scene_sidecar(run_dir)?;
    let it = match iteration {
        Some(i) => i,
        None => latest_checkpoint(run_dir)
            .ok_or_else(|| Error::io(run_dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no checkpoint")))?,
    };
    let [c, f, _] = checkpoint_paths(run_dir, it);
    Ok((
        NeuralField::new(MlpParams::load(c)?, bounds),
        NeuralField::new(MlpParams::load(f)?, bounds),
        model,
    ))
}

fn parse_spec(c: &Config, key: &str) -> Result<Option<ViewSpec>> {
    c.raw(key)
        .map(|s| s.parse::<ViewSpec>().map_err(|m| Error::Config(format!("`{key}`: {m}"))))
        .transpose()
}

/// Renders one view and writes `<out>.pfm` and `<out>.png`.
pub fn cmd_render(c: &Config) -> Result<Image> {
    const CMD: &str = "render";
    let run_dir = c.require_path(CMD, "checkpoint")?;
    let cam_spec = parse_spec(c, "camera")?.ok_or_else(|| Error::Config(format!("`{CMD}` requires key `camera`")))?;
    let out = c.require_path(CMD, "out")?;
    let camera = cam_spec.camera(c.get_or("resolution", 64)?)?;
    let (coarse, fine, model) = load_fields(&run_dir, c.get("iteration")?)?;
    let settings = RenderSettings {
        n_coarse: c.get_or("n_coarse", 64)?,
        n_fine: c.get_or("n_fine", 128)?,
        background: c.rgb("background")?.unwrap_or_default(),
        model,
        convention: match c.raw("convention").unwrap_or("exclusive") {
            "exclusive" => TransmittanceConvention::Exclusive,
            "inclusive" => TransmittanceConvention::Inclusive,
            v => return Err(Error::Config(format!("`convention`: expected exclusive or inclusive, got {v:?}"))),
        },
        seed: c.get_or("seed", 0)?,
    };
    let light = match parse_spec(c, "light")? {
        Some(s) => s.light()?,
        None => {
            let intensity = cam_spec
                .intensity
                .or(c.rgb("intensity")?)
                .ok_or_else(|| Error::Config("flash render needs `intensity=` in the camera spec or key `intensity`".into()))?;
            PointLight::new(camera.position, intensity)?
        }
    };
    let img = if light.position == camera.position {
        render_image(&camera, &coarse, &fine, RenderMode::Collocated(light.intensity), &settings, 0)?
    } else {
        match c.raw("tau_mode").unwrap_or("cache") {
            "cache" => {
                let cs = CacheSettings {
                    resolution: c.get_or("cache_resolution", DEFAULT_RESOLUTION)?,
                    n_coarse: settings.n_coarse,
                    n_fine: settings.n_fine,
                    seed: settings.seed,
                };
                let cache = TransmittanceVolume::build(&coarse, &fine, light.position, &cs)?;
                if let Some(p) = c.get::<PathBuf>("cache_out")? {
                    cache.save(p)?;
                }
                render_image(&camera, &coarse, &fine, RenderMode::Full { light, tau: &cache }, &settings, 0)?
            }
            "brute-force" => {
                let tau = BruteForceTransmittance {
                    field: &fine,
                    light: light.position,
                    step: c.get_or("brute_force_step", fine.bounds.diagonal() / 1024.0)?,
                };
                render_image(&camera, &coarse, &fine, RenderMode::Full { light, tau: &tau }, &settings, 0)?
            }
            v => return Err(Error::Config(format!("`tau_mode`: expected cache or brute-force, got {v:?}"))),
        }
    };
    img.save_pfm(out.with_extension("pfm"))?;
    img.save_png(out.with_extension("png"))?;
    Ok(img)
}

fn parse_dims(s: &str) -> Result<[usize; 3]> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("`dims`: bad size {p:?}"))))
        .collect::<Result<_>>()?;
    match v[..] {
        [n] => Ok([n; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err(Error::Config(format!("`dims`: expected n or nx,ny,nz, got {s:?}"))),
    }
}

pub fn cmd_export_volume(c: &Config) -> Result<VolumeExport> {
    const CMD: &str = "export-volume";
    let run_dir = c.require_path(CMD, "checkpoint")?;
    let dims = parse_dims(&c.require::<String>(CMD, "dims")?)?;
    let out = c.require_path(CMD, "out")?;
    let (_, fine, _) = load_fields(&run_dir, c.get("iteration")?)?;
    let vol = VolumeExport::sample(&fine, dims)?;
    vol.save(out)?;
    Ok(vol)
}

/// Runs the check suite and prints its table. Returns whether every
/// check passed.
pub fn cmd_validate(c: &Config) -> Result<bool> {
    let fixture: Fixture = c
        .raw("fixture")
        .unwrap_or("standard")
        .parse()
        .map_err(Error::Config)?;
    let outcomes = run_suite(fixture);
    print!("{}", format_table(&outcomes));
    Ok(outcomes.iter().all(|o| o.passed))
}
