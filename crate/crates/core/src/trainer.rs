//! Fitting coarse and fine networks to collocated flash images.
//!
//! Each ray is rendered twice (coarse stratified, fine importance-sampled)
//! and both radiances are compared to the pixel. The fine pass's exit
//! transmittance is pushed towards 0 or 1 by a log barrier. Sample
//! positions are constants of the reverse pass.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::field::{heads_backward, FieldOutput, NeuralField};
use crate::geometry::{Aabb, PointLight, Ray, Rgb};
use crate::mlp::{MlpParams, ParamGrads, HEAD_DIM};
use crate::raymarch::{
    estimate_radiance_backward, exit_transmittance, fine_samples_from, ray_rng, stratified_sample, LightTau,
    RaySamples, RenderSettings,
};
use crate::reflectance::ReflectanceModel;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Weight of the transmittance barrier.
    pub beta: f64,
    pub batch_rays: usize,
    pub iterations: usize,
    pub seed: u64,
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Exit transmittance is clamped to `[eps, 1 - eps]` inside the logs.
    pub tau_eps: f64,
    /// Save every this many iterations; 0 saves only at the end.
    pub checkpoint_every: usize,
    pub width: usize,
    /// Multiplicative learning-rate decay per `lr_decay_steps`; 1 is off.
    pub lr_decay: f64,
    pub lr_decay_steps: usize,
    /// Rays per reverse-pass work unit.
    pub chunk_rays: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta: 1e-4,
            batch_rays: 2500,
            iterations: 20_000,
            seed: 0,
            n_coarse: 64,
            n_fine: 128,
            tau_eps: 1e-5,
            checkpoint_every: 1000,
            width: crate::mlp::DEFAULT_WIDTH,
            lr_decay: 1.0,
            lr_decay_steps: 10_000,
            chunk_rays: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if self.batch_rays == 0 || self.n_coarse == 0 || self.chunk_rays == 0 {
            return bad("batch size, chunk size and coarse sample count must be positive");
        }
        if !(self.tau_eps > 0.0 && self.tau_eps < 0.5) {
            return bad("tau clamp must lie in (0, 0.5)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || self.lr_decay_steps == 0 {
            return bad("lr decay must lie in (0, 1] with positive step count");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        self.learning_rate * self.lr_decay.powf(iteration as f64 / self.lr_decay_steps as f64)
    }

    fn render_settings(&self, model: ReflectanceModel) -> RenderSettings {
        RenderSettings {
            n_coarse: self.n_coarse,
            n_fine: self.n_fine,
            model,
            ..Default::default()
        }
    }
}

/// Per-ray objective: squared error of both passes plus
/// `beta * (log tau + log(1 - tau))` on the clamped fine exit transmittance.
pub fn total_loss(l_coarse: Rgb, l_fine: Rgb, target: Rgb, tau_exit: f64, beta: f64, eps: f64) -> f64 {
    let dc = l_coarse - target;
    let df = l_fine - target;
    let tau = tau_exit.clamp(eps, 1.0 - eps);
    dc.mul_elem(dc).sum() + df.mul_elem(df).sum() + beta * (tau.ln() + (-tau).ln_1p())
}

fn barrier_grad(tau_exit: f64, beta: f64, eps: f64) -> f64 {
    if tau_exit < eps || tau_exit > 1.0 - eps {
        0.0
    } else {
        beta * (1.0 / tau_exit - 1.0 / (1.0 - tau_exit))
    }
}

/// One training pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRay {
    /// `None` when the pixel ray misses the scene box.
    pub ray: Option<Ray>,
    pub intensity: Rgb,
    pub target: Rgb,
    pub view: usize,
    pub pixel: usize,
}

/// `n` jittered rays drawn uniformly over all (view, pixel) pairs.
pub fn sample_batch(dataset: &Dataset, n: usize, rng: &mut impl Rng) -> Result<Vec<BatchRay>> {
    let total = dataset.pixel_count();
    if total == 0 {
        return Err(Error::InvalidInput("dataset has no pixels".into()));
    }
    let per_view = dataset.views[0].image.pixels.len();
    (0..n)
        .map(|_| {
            let g = rng.gen_range(0..total);
            let (view, pixel) = (g / per_view, g % per_view);
            let v = &dataset.views[view];
            let w = v.image.width;
            let jitter = (rng.gen::<f64>(), rng.gen::<f64>());
            let ray = v.camera.generate_ray((pixel % w, pixel / w), jitter, &dataset.bounds)?;
            Ok(BatchRay {
                ray,
                intensity: v.light.intensity,
                target: v.image.pixels[pixel],
                view,
                pixel,
            })
        })
        .collect()
}

/// Sample positions used by both passes of one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySampling {
    pub coarse: RaySamples,
    pub fine: RaySamples,
}

/// Draws the stratified samples and the fine set built from the coarse
/// network's weights.
pub fn sample_ray(ray: &Ray, coarse: &NeuralField, n_coarse: usize, n_fine: usize, rng: &mut impl Rng) -> RaySampling {
    let cs = stratified_sample(ray, n_coarse, rng);
    let outs = crate::field::Field::eval_many(coarse, &cs.points(ray));
    let fs = fine_samples_from(ray, &cs, &outs, n_fine, rng);
    RaySampling { coarse: cs, fine: fs }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayLoss {
    pub loss: f64,
    pub coarse: Rgb,
    pub fine: Rgb,
    pub tau_exit: f64,
}

/// Upstream `d loss / d raw` rows for one pass, plus radiance.
fn pass_backward(
    field: &NeuralField,
    ray: &Ray,
    samples: &RaySamples,
    outs: &[FieldOutput],
    raws: &[f64],
    light: &PointLight,
    settings: &RenderSettings,
    d_radiance: Rgb,
    d_exit: f64,
    upstream: &mut [f64],
) {
    let (_, g) = estimate_radiance_backward(ray, samples, outs, light, LightTau::Collocated, settings, d_radiance, d_exit);
    for (j, gj) in g.iter().enumerate() {
        let raw = &raws[j * HEAD_DIM..(j + 1) * HEAD_DIM];
        let mut d = heads_backward(raw, gj);
        if !field.inside(ray.at(samples.t[j])) {
            d[0] = 0.0;
        }
        upstream[j * HEAD_DIM..(j + 1) * HEAD_DIM].copy_from_slice(&d);
    }
}

/// Loss of each ray with frozen samples; with `grads`, also accumulates
/// parameter gradients for both networks. Rays and samplings pair up by
/// index; `None` samplings mark rays that miss the box.
pub fn batch_loss(
    coarse: &NeuralField,
    fine: &NeuralField,
    rays: &[BatchRay],
    samplings: &[Option<RaySampling>],
    config: &TrainConfig,
    model: ReflectanceModel,
    grads: Option<(&mut ParamGrads, &mut ParamGrads)>,
) -> Vec<RayLoss> {
    assert_eq!(rays.len(), samplings.len());
    let settings = config.render_settings(model);
    let mut pts_c = Vec::new();
    let mut pts_f = Vec::new();
    for (r, s) in rays.iter().zip(samplings) {
        if let (Some(ray), Some(s)) = (&r.ray, s) {
            pts_c.extend(s.coarse.points(ray));
            pts_f.extend(s.fine.points(ray));
        }
    }
    let (outs_c, cache_c) = coarse.eval_with_cache(&pts_c);
    let (outs_f, cache_f) = fine.eval_with_cache(&pts_f);
    let want_grads = grads.is_some();
    let mut up_c = vec![0.0; if want_grads { pts_c.len() * HEAD_DIM } else { 0 }];
    let mut up_f = vec![0.0; if want_grads { pts_f.len() * HEAD_DIM } else { 0 }];
    let (mut oc, mut of) = (0, 0);
    let mut losses = Vec::with_capacity(rays.len());
    for (r, s) in rays.iter().zip(samplings) {
        let (Some(ray), Some(s)) = (&r.ray, s) else {
            let bg = settings.background;
            losses.push(RayLoss {
                loss: total_loss(bg, bg, r.target, 1.0, config.beta, config.tau_eps),
                coarse: bg,
                fine: bg,
                tau_exit: 1.0,
            });
            continue;
        };
        let light = PointLight {
            position: ray.origin,
            intensity: r.intensity,
        };
        let (nc, nf) = (s.coarse.len(), s.fine.len());
        let oc_s = &outs_c[oc..oc + nc];
        let of_s = &outs_f[of..of + nf];
        let lc = crate::raymarch::estimate_radiance(ray, &s.coarse, oc_s, &light, LightTau::Collocated, &settings);
        let lf = crate::raymarch::estimate_radiance(ray, &s.fine, of_s, &light, LightTau::Collocated, &settings);
        let sig: Vec<f64> = of_s.iter().map(|o| o.sigma).collect();
        let tau = exit_transmittance(&sig, &s.fine.dt);
        losses.push(RayLoss {
            loss: total_loss(lc, lf, r.target, tau, config.beta, config.tau_eps),
            coarse: lc,
            fine: lf,
            tau_exit: tau,
        });
        if want_grads {
            pass_backward(
                coarse,
                ray,
                &s.coarse,
                oc_s,
                &cache_c.raw[oc * HEAD_DIM..(oc + nc) * HEAD_DIM],
                &light,
                &settings,
                (lc - r.target) * 2.0,
                0.0,
                &mut up_c[oc * HEAD_DIM..(oc + nc) * HEAD_DIM],
            );
            pass_backward(
                fine,
                ray,
                &s.fine,
                of_s,
                &cache_f.raw[of * HEAD_DIM..(of + nf) * HEAD_DIM],
                &light,
                &settings,
                (lf - r.target) * 2.0,
                barrier_grad(tau, config.beta, config.tau_eps),
                &mut up_f[of * HEAD_DIM..(of + nf) * HEAD_DIM],
            );
        }
        oc += nc;
        of += nf;
    }
    if let Some((gc, gf)) = grads {
        if !pts_c.is_empty() {
            coarse
                .params
                .backward_batch(&cache_c, &up_c, gc)
                .expect("upstream shape matches the forward batch");
        }
        if !pts_f.is_empty() {
            fine.params
                .backward_batch(&cache_f, &up_f, gf)
                .expect("upstream shape matches the forward batch");
        }
    }
    losses
}

/// Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// One bias-corrected update of `params` against `grads`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert!(params.len() == self.m.len() && grads.len() == self.m.len(), "optimizer shape mismatch");
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

const ADAM_MAGIC: &[u8; 8] = b"NRFADAM1";

/// Mutable training state: both networks, their optimizers, and the count
/// of completed iterations.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub coarse: NeuralField,
    pub fine: NeuralField,
    pub opt_coarse: Adam,
    pub opt_fine: Adam,
    pub iteration: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig, levels: usize, bounds: Aabb) -> Result<Self> {
        let c = MlpParams::init(config.seed, config.width, levels)?;
        let f = MlpParams::init(config.seed.wrapping_add(1), config.width, levels)?;
        Ok(Self {
            opt_coarse: Adam::new(c.data.len()),
            opt_fine: Adam::new(f.data.len()),
            coarse: NeuralField::new(c, bounds),
            fine: NeuralField::new(f, bounds),
            iteration: 0,
        })
    }

    fn optimizer_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ADAM_MAGIC);
        out.extend_from_slice(&(self.iteration as u64).to_le_bytes());
        for opt in [&self.opt_coarse, &self.opt_fine] {
            out.extend_from_slice(&opt.step.to_le_bytes());
            out.extend_from_slice(&(opt.m.len() as u64).to_le_bytes());
            for v in opt.m.iter().chain(&opt.v) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn read_optimizers(bytes: &[u8]) -> std::result::Result<(usize, Adam, Adam), String> {
        let mut cur = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if cur.len() < n {
                return Err("truncated optimizer state".into());
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(8)? != ADAM_MAGIC {
            return Err("missing NRFADAM1 header".into());
        }
        let u64_of = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
        let iteration = u64_of(take(8)?) as usize;
        let mut opts = Vec::new();
        for _ in 0..2 {
            let step = u64_of(take(8)?);
            let n = u64_of(take(8)?) as usize;
            let body = take(n.checked_mul(16).ok_or("optimizer size overflows")?)?;
            let vals: Vec<f64> = body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            opts.push(Adam {
                m: vals[..n].to_vec(),
                v: vals[n..].to_vec(),
                step,
            });
        }
        if !cur.is_empty() {
            return Err("trailing bytes after optimizer state".into());
        }
        let fine = opts.pop().unwrap();
        let coarse = opts.pop().unwrap();
        Ok((iteration, coarse, fine))
    }

    /// Writes `ckpt_XXXXXX_{coarse,fine,opt}.bin` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let [c, f, o] = checkpoint_paths(dir, self.iteration);
        self.coarse.params.save(c)?;
        self.fine.params.save(f)?;
        fs::write(&o, self.optimizer_bytes()).map_err(|e| Error::io(&o, e))
    }

    pub fn load(dir: impl AsRef<Path>, iteration: usize, bounds: Aabb) -> Result<Self> {
        let [c, f, o] = checkpoint_paths(dir.as_ref(), iteration);
        let coarse = NeuralField::new(MlpParams::load(c)?, bounds);
        let fine = NeuralField::new(MlpParams::load(f)?, bounds);
        let bytes = fs::read(&o).map_err(|e| Error::io(&o, e))?;
        let (it, opt_coarse, opt_fine) = Self::read_optimizers(&bytes).map_err(|r| Error::format(&o, r))?;
        if opt_coarse.m.len() != coarse.params.data.len() || opt_fine.m.len() != fine.params.data.len() {
            return Err(Error::format(&o, "optimizer state does not match the checkpoint"));
        }
        Ok(Self {
            coarse,
            fine,
            opt_coarse,
            opt_fine,
            iteration: it,
        })
    }
}

pub fn checkpoint_paths(dir: &Path, iteration: usize) -> [PathBuf; 3] {
    ["coarse", "fine", "opt"].map(|k| dir.join(format!("ckpt_{iteration:06}_{k}.bin")))
}

/// Highest iteration with a complete checkpoint in `dir`.
pub fn latest_checkpoint(dir: impl AsRef<Path>) -> Option<usize> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).ok()?;
    entries
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            let it = name.strip_prefix("ckpt_")?.strip_suffix("_fine.bin")?.parse::<usize>().ok()?;
            checkpoint_paths(dir, it).iter().all(|p| p.exists()).then_some(it)
        })
        .max()
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Sum of per-ray losses over the batch.
    pub loss: f64,
    pub mean_tau_exit: f64,
}

fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    ray_rng(seed, u64::MAX - 1, iteration as u64)
}

/// Samples a batch, renders it, backpropagates, and applies Adam to both
/// networks.
pub fn train_step(state: &mut TrainState, dataset: &Dataset, config: &TrainConfig) -> Result<StepReport> {
    let it = state.iteration;
    let mut rng = iteration_rng(config.seed, it);
    let batch = sample_batch(dataset, config.batch_rays, &mut rng)?;
    let ray_seed: u64 = rng.gen();
    let (coarse, fine) = (&state.coarse, &state.fine);
    let chunks: Vec<_> = batch
        .par_chunks(config.chunk_rays)
        .enumerate()
        .map(|(ci, rays)| {
            let samplings: Vec<Option<RaySampling>> = rays
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    r.ray.as_ref().map(|ray| {
                        let mut rr = ray_rng(ray_seed, 0, (ci * config.chunk_rays + k) as u64);
                        sample_ray(ray, coarse, config.n_coarse, config.n_fine, &mut rr)
                    })
                })
                .collect();
            let mut gc = ParamGrads::zeros_like(&coarse.params);
            let mut gf = ParamGrads::zeros_like(&fine.params);
            let losses = batch_loss(coarse, fine, rays, &samplings, config, dataset.model, Some((&mut gc, &mut gf)));
            (losses, gc, gf)
        })
        .collect();
    let mut gc = ParamGrads::zeros_like(&coarse.params);
    let mut gf = ParamGrads::zeros_like(&fine.params);
    let mut loss = 0.0;
    let mut tau = 0.0;
    for (ci, (losses, c, f)) in chunks.into_iter().enumerate() {
        for (k, l) in losses.iter().enumerate() {
            if !l.loss.is_finite() {
                let r = &batch[ci * config.chunk_rays + k];
                return Err(Error::NonFiniteLoss {
                    loss: l.loss,
                    iteration: it,
                    view: r.view,
                    ray: r.pixel,
                });
            }
            loss += l.loss;
            tau += l.tau_exit;
        }
        gc.add_assign(&c);
        gf.add_assign(&f);
    }
    if !gc.is_finite() || !gf.is_finite() {
        return Err(Error::NonFiniteLoss {
            loss: f64::NAN,
            iteration: it,
            view: batch[0].view,
            ray: batch[0].pixel,
        });
    }
    let lr = config.learning_rate_at(it);
    state.opt_coarse.update(&mut state.coarse.params.data, &gc.data, lr);
    state.opt_fine.update(&mut state.fine.params.data, &gf.data, lr);
    state.iteration += 1;
    Ok(StepReport {
        loss,
        mean_tau_exit: tau / batch.len() as f64,
    })
}

/// Sidecar describing how to rebuild fields from bare checkpoints.
pub const SCENE_SIDECAR: &str = "scene.txt";
pub const LOSS_LOG: &str = "loss.log";

pub fn write_scene_sidecar(dir: &Path, bounds: Aabb, model: ReflectanceModel) -> Result<()> {
    let (a, b) = (bounds.min, bounds.max);
    let text = format!(
        "bbox {} {} {} {} {} {}\nmodel {model}\n",
        a.x, a.y, a.z, b.x, b.y, b.z
    );
    let path = dir.join(SCENE_SIDECAR);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_scene_sidecar(dir: &Path) -> Result<(Aabb, ReflectanceModel)> {
    let path = dir.join(SCENE_SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut bounds = None;
    let mut model = ReflectanceModel::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        match k {
            "bbox" => {
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .map(|s| s.parse().map_err(|_| Error::format(&path, format!("bad number {s:?}"))))
                    .collect::<Result<_>>()?;
                if v.len() != 6 {
                    return Err(Error::format(&path, "bbox needs 6 numbers"));
                }
                bounds = Some(Aabb::new(
                    crate::geometry::Vec3::new(v[0], v[1], v[2]),
                    crate::geometry::Vec3::new(v[3], v[4], v[5]),
                ));
            }
            "model" => model = rest.parse().map_err(|r: String| Error::format(&path, r))?,
            _ => return Err(Error::format(&path, format!("unknown entry {k:?}"))),
        }
    }
    Ok((bounds.ok_or_else(|| Error::format(&path, "missing bbox"))?, model))
}

/// Options for [`train`] beyond the optimization hyper-parameters.
#[derive(Debug, Clone, Default)]
pub struct TrainRun {
    pub out_dir: PathBuf,
    /// Continue from the newest checkpoint in `out_dir` if there is one.
    pub resume: bool,
    /// Print progress every this many iterations; 0 is silent.
    pub log_every: usize,
}

/// Runs `config.iterations` steps in total, writing checkpoints and a
/// tab-separated loss log (`iter`, `loss`, `seconds`).
pub fn train(dataset: &Dataset, config: &TrainConfig, run: &TrainRun) -> Result<TrainState> {
    config.validate()?;
    if dataset.views.is_empty() {
        return Err(Error::InvalidInput("dataset has no views".into()));
    }
    let dir = &run.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_scene_sidecar(dir, dataset.bounds, dataset.model)?;
    let mut state = match (run.resume, latest_checkpoint(dir)) {
        (true, Some(it)) => {
            log::info!("resuming from iteration {it}");
            TrainState::load(dir, it, dataset.bounds)?
        }
        _ => TrainState::new(config, dataset.levels, dataset.bounds)?,
    };
    let log_path = dir.join(LOSS_LOG);
    let kept = truncate_log(&log_path, state.iteration)?;
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    if !kept {
        writeln!(log, "iter\tloss\tseconds").map_err(|e| Error::io(&log_path, e))?;
    }
    let start = Instant::now();
    while state.iteration < config.iterations {
        let report = train_step(&mut state, dataset, config)?;
        let it = state.iteration;
        writeln!(log, "{it}\t{}\t{:.3}", report.loss, start.elapsed().as_secs_f64())
            .map_err(|e| Error::io(&log_path, e))?;
        if run.log_every > 0 && it % run.log_every == 0 {
            log::info!(
                "iter {it} loss/ray {:.6} tau_exit {:.3} ({:.1}s)",
                report.loss / config.batch_rays as f64,
                report.mean_tau_exit,
                start.elapsed().as_secs_f64()
            );
        }
        if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 {
            state.save(dir)?;
        }
    }
    state.save(dir)?;
    Ok(state)
}

/// Drops log rows past `iteration`. Returns whether a header was kept.
fn truncate_log(path: &Path, iteration: usize) -> Result<bool> {
    let text = match fs::read_to_string(path) {
        Ok(t) if iteration > 0 => t,
        _ => {
            fs::write(path, "").map_err(|e| Error::io(path, e))?;
            return Ok(false);
        }
    };
    let mut lines = text.lines().peekable();
    let header = lines.next_if(|l| l.starts_with("iter")).is_some();
    let mut out = if header { "iter\tloss\tseconds\n".to_string() } else { String::new() };
    for line in lines {
        if let Some(i) = line.split('\t').next().and_then(|s| s.parse::<usize>().ok()) {
            if i <= iteration {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    fs::write(path, &out).map_err(|e| Error::io(path, e))?;
    Ok(header)
}

/// Loss of a whole batch with fixed sampling seed, without updating
/// anything. Useful for monitoring and descent checks.
pub fn evaluate_batch(state: &TrainState, dataset: &Dataset, config: &TrainConfig, batch: &[BatchRay], seed: u64) -> f64 {
    let samplings: Vec<Option<RaySampling>> = batch
        .iter()
        .enumerate()
        .map(|(k, r)| {
            r.ray.as_ref().map(|ray| {
                let mut rr = ray_rng(seed, 0, k as u64);
                sample_ray(ray, &state.coarse, config.n_coarse, config.n_fine, &mut rr)
            })
        })
        .collect();
    batch_loss(&state.coarse, &state.fine, batch, &samplings, config, dataset.model, None)
        .iter()
        .map(|l| l.loss)
        .sum()
}

/// Settings of the checker-sphere fit: the default optimizer and sampling
/// with a narrower network and smaller batches so that 20k iterations fit
/// on one CPU core.
pub fn desk_fit_config() -> TrainConfig {
    TrainConfig {
        width: 32,
        batch_rays: 128,
        checkpoint_every: 1000,
        seed: 7,
        ..Default::default()
    }
}

/// Deterministic stream for ad-hoc sampling outside training.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
