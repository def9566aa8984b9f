//! Alternating discriminator/generator optimization with seeded noising,
//! checkpoint/resume and training reports.

mod adam;
mod config;
mod report;

pub use adam::Adam;
pub use config::{lr_at, DiscConditioning, TrainConfig, SCHEMA_VERSION};
pub use report::{sample_grid, write_epoch_csv, write_loss_csv};

use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{extract_conditions, ConditionSet, EdgeProbability};
use crate::dataset::{load_conditions, DatasetRecord};
use crate::error::{Error, Result};
use crate::imaging::{RangeTag, Raster};
use crate::net::assembly::{
    self, disc_condition_tensor, disc_global_tensor, disc_local_tensor, portrait_tensor, region_mask_tensor,
};
use crate::net::{Checkpoint, NetBundle};
use crate::noising::{sample_noising, sample_rng};
use crate::objectives::{
    feature_matching_loss, gan_loss_disc, gan_loss_gen, perceptual_loss, total_generator_objective,
};

/// One training portrait and its extracted conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub id: String,
    pub image: Raster,
    pub cond: ConditionSet,
}

/// Loads persisted conditions where a record has them, extracts otherwise.
pub fn prepare_samples(
    records: &[DatasetRecord],
    cfg: &TrainConfig,
    edges: &dyn EdgeProbability,
) -> Result<Vec<TrainSample>> {
    records
        .iter()
        .map(|r| {
            let cond = match &r.conditions {
                Some(dir) => load_conditions(dir)?,
                None => extract_conditions(&r.image, &r.seg, edges, &cfg.extraction)?,
            };
            Ok(TrainSample {
                id: r.image_id.clone(),
                image: r.image.to_unit(),
                cond,
            })
        })
        .collect()
}

/// Losses of one generator step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub d_global: f64,
    pub d_local: f64,
    pub g_gan: f64,
    pub g_vgg: f64,
    pub g_fm: f64,
}

struct Prepared {
    edge: Raster,
    gen_rest: Tensor,
    cond6: Tensor,
    masks: Tensor,
    real: Tensor,
}

#[derive(Serialize, Deserialize)]
struct TrainerExtra {
    adam_g_steps: u64,
    adam_d_steps: u64,
    history: Vec<LossRecord>,
}

pub struct Trainer {
    cfg: TrainConfig,
    bundle: NetBundle,
    adam_g: Adam,
    adam_d: Adam,
    samples: Vec<TrainSample>,
    prepared: Vec<Prepared>,
    history: Vec<LossRecord>,
    out_dir: Option<PathBuf>,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, samples: &[TrainSample]) -> Result<Self> {
        Self::with_dtype(cfg, samples, DType::F32, &Device::Cpu)
    }

    pub fn with_dtype(cfg: &TrainConfig, samples: &[TrainSample], dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        if samples.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let bundle = NetBundle::new(&cfg.net_spec(), cfg.seed, dtype, device)?;
        Self::assemble(cfg, samples, bundle)
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(cfg: &TrainConfig, samples: &[TrainSample], ckpt: &Checkpoint) -> Result<Self> {
        cfg.validate()?;
        if ckpt.spec != cfg.net_spec() || ckpt.seed != cfg.seed {
            return Err(Error::Checkpoint("checkpoint network spec or seed differs from config".into()));
        }
        let bundle = NetBundle::from_checkpoint(ckpt, DType::F32, &Device::Cpu)?;
        let mut t = Self::assemble(cfg, samples, bundle)?;
        let extra: TrainerExtra = serde_json::from_value(ckpt.extra.clone())?;
        t.adam_g.load(ckpt, "adam_g", extra.adam_g_steps)?;
        t.adam_d.load(ckpt, "adam_d", extra.adam_d_steps)?;
        t.history = extra.history;
        Ok(t)
    }

    fn assemble(cfg: &TrainConfig, samples: &[TrainSample], bundle: NetBundle) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let (dtype, device) = (bundle.dtype(), bundle.device().clone());
        let res = cfg.resolution;
        let prepared = samples
            .iter()
            .map(|s| {
                s.cond.validate()?;
                if s.cond.dims() != (res, res) || s.image.dims() != (res, res) {
                    return Err(Error::Shape(format!(
                        "sample {} is {:?}, training resolution is {res}",
                        s.id,
                        s.image.dims()
                    )));
                }
                let gen = assembly::assemble_generator_input(&s.cond, &s.cond.edge)?.to_tensor(dtype, &device)?;
                Ok(Prepared {
                    edge: s.cond.edge.clone(),
                    gen_rest: gen.narrow(1, 1, 5)?,
                    cond6: disc_condition_tensor(&s.cond, dtype, &device)?,
                    masks: region_mask_tensor(&s.cond, dtype, &device)?,
                    real: portrait_tensor(&s.image, dtype, &device)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut dparams = bundle.disc_global.params().clone();
        dparams.extend(bundle.disc_local.params().clone());
        Ok(Trainer {
            adam_g: Adam::new(bundle.generator.params().clone(), cfg.beta1, cfg.beta2)?,
            adam_d: Adam::new(dparams, cfg.beta1, cfg.beta2)?,
            cfg: cfg.clone(),
            bundle,
            samples: samples.to_vec(),
            prepared,
            history: Vec::new(),
            out_dir: None,
        })
    }

    /// Directory for checkpoints, loss CSVs and sample grids.
    pub fn set_output_dir(&mut self, dir: impl Into<PathBuf>) {
        self.out_dir = Some(dir.into());
    }

    pub fn bundle(&self) -> &NetBundle {
        &self.bundle
    }

    pub fn history(&self) -> &[LossRecord] {
        &self.history
    }

    pub fn step_count(&self) -> u64 {
        self.bundle.step_count
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.prepared.len().div_ceil(self.cfg.batch_size) as u64
    }

    pub fn total_steps(&self) -> u64 {
        let full = self.cfg.epochs as u64 * self.steps_per_epoch();
        self.cfg.max_steps.map_or(full, |m| m.min(full))
    }

    /// Sample order of one epoch; depends only on the seed and the epoch.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..self.prepared.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Epoch and sample indices of a 0-based step.
    pub fn batch_for_step(&self, step: u64) -> (usize, Vec<usize>) {
        let spe = self.steps_per_epoch();
        let epoch = (step / spe) as usize;
        let start = (step % spe) as usize * self.cfg.batch_size;
        let order = self.epoch_order(epoch);
        let end = (start + self.cfg.batch_size).min(order.len());
        (epoch, order[start..end].to_vec())
    }

    fn gather(&self, idx: &[usize], f: impl Fn(&Prepared) -> &Tensor) -> Result<Tensor> {
        let ts: Vec<Tensor> = idx.iter().map(|&i| f(&self.prepared[i]).clone()).collect();
        assembly::batch(&ts)
    }

    /// Generator input batch with per-sample noising drawn from `(seed, step, slot)`.
    fn generator_batch(&self, step: u64, idx: &[usize]) -> Result<Tensor> {
        let (dtype, device) = (self.bundle.dtype(), self.bundle.device());
        let mut items = Vec::with_capacity(idx.len());
        for (slot, &i) in idx.iter().enumerate() {
            let p = &self.prepared[i];
            let edge = if self.cfg.noise.enabled {
                let mut rng = sample_rng(self.cfg.seed ^ self.cfg.noise.seed, step, slot as u64);
                sample_noising(&p.edge, &self.cfg.noise, &mut rng)?.1
            } else {
                p.edge.clone()
            };
            let (h, w) = edge.dims();
            let signed: Vec<f32> = edge.data().iter().map(|v| 2.0 * v - 1.0).collect();
            let e = Tensor::from_vec(signed, (1, 1, h, w), device)?.to_dtype(dtype)?;
            items.push(Tensor::cat(&[&e, &p.gen_rest], 1)?);
        }
        assembly::batch(&items)
    }

    fn disc_conditions(&self, idx: &[usize], gen_in: &Tensor) -> Result<Tensor> {
        match self.cfg.disc_conditioning {
            DiscConditioning::Asymmetric => self.gather(idx, |p| &p.cond6),
            DiscConditioning::Symmetric => Ok(gen_in.clone()),
        }
    }

    /// Discriminator losses `(d_global, d_local, sum)` for a fixed fake batch.
    fn disc_losses(&self, cond6: &Tensor, masks: &Tensor, real: &Tensor, fake: &Tensor) -> Result<(f64, f64, Tensor)> {
        let dg = &self.bundle.disc_global;
        let d_global = gan_loss_disc(
            &dg.forward(&disc_global_tensor(cond6, real)?)?,
            &dg.forward(&disc_global_tensor(cond6, fake)?)?,
        )?;
        if !self.cfg.use_local_disc {
            return Ok((scalar(&d_global)?, 0.0, d_global));
        }
        let dl = &self.bundle.disc_local;
        let d_local = gan_loss_disc(
            &dl.forward(&disc_local_tensor(cond6, masks, real)?)?,
            &dl.forward(&disc_local_tensor(cond6, masks, fake)?)?,
        )?;
        Ok((scalar(&d_global)?, scalar(&d_local)?, (&d_global + &d_local)?))
    }

    /// A discriminator-only update on `idx` with the generator frozen.
    /// Returns the discriminator loss measured before the update.
    pub fn disc_step(&mut self, idx: &[usize], lr: f64) -> Result<f64> {
        let step = self.bundle.step_count;
        let gen_in = self.generator_batch(step, idx)?;
        let fake = self.bundle.generator.forward(&gen_in)?.detach();
        let cond6 = self.disc_conditions(idx, &gen_in)?;
        let (masks, real) = (self.gather(idx, |p| &p.masks)?, self.gather(idx, |p| &p.real)?);
        let (_, _, loss) = self.disc_losses(&cond6, &masks, &real, &fake)?;
        self.adam_d.step(&loss.backward()?, lr)?;
        scalar(&loss)
    }

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self) -> Result<LossRecord> {
        match self.step_inner() {
            Err(e @ Error::NonFinite(_)) => {
                if let Some(dir) = &self.out_dir {
                    let path = dir.join(format!("diagnostic_step{:06}.ckpt", self.bundle.step_count));
                    self.checkpoint()?.write(&path)?;
                    log::error!("non-finite loss; diagnostic checkpoint at {}", path.display());
                }
                Err(e)
            }
            other => other,
        }
    }

    fn step_inner(&mut self) -> Result<LossRecord> {
        let step = self.bundle.step_count;
        let (epoch, idx) = self.batch_for_step(step);
        let lr = lr_at(epoch, &self.cfg)?;
        let gen_in = self.generator_batch(step, &idx)?;
        let cond6 = self.disc_conditions(&idx, &gen_in)?;
        let masks = self.gather(&idx, |p| &p.masks)?;
        let real = self.gather(&idx, |p| &p.real)?;

        let fake = self.bundle.generator.forward(&gen_in)?;
        let (d_global, d_local, d_loss) = self.disc_losses(&cond6, &masks, &real, &fake.detach())?;
        self.adam_d.step(&d_loss.backward()?, lr)?;

        let dg = &self.bundle.disc_global;
        let dg_fake = dg.forward(&disc_global_tensor(&cond6, &fake)?)?;
        let dg_real = dg.forward(&disc_global_tensor(&cond6, &real)?)?;
        let g_gan = if self.cfg.use_local_disc {
            let dl_fake = self.bundle.disc_local.forward(&disc_local_tensor(&cond6, &masks, &fake)?)?;
            gan_loss_gen(&[&dg_fake, &dl_fake])?
        } else {
            gan_loss_gen(&[&dg_fake])?
        };
        let w = &self.cfg.loss_weights;
        let g_vgg = perceptual_loss(&self.bundle.feature_net, &real, &fake, &w.lambda_vgg_layers)?;
        let g_fm = feature_matching_loss(&dg_real, &dg_fake, &w.lambda_fm_layers)?;
        let total = total_generator_objective(&g_gan, &g_vgg, &g_fm, w)?;
        self.adam_g.step(&total.backward()?, lr)?;

        self.bundle.step_count += 1;
        let rec = LossRecord {
            step: self.bundle.step_count,
            epoch,
            lr,
            d_global,
            d_local,
            g_gan: scalar(&g_gan)?,
            g_vgg: scalar(&g_vgg)?,
            g_fm: scalar(&g_fm)?,
        };
        self.history.push(rec.clone());
        Ok(rec)
    }

    /// Network parameters, optimizer moments and loss history.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let extra = serde_json::to_value(TrainerExtra {
            adam_g_steps: self.adam_g.steps(),
            adam_d_steps: self.adam_d.steps(),
            history: self.history.clone(),
        })?;
        let epoch = (self.bundle.step_count / self.steps_per_epoch()) as usize;
        let mut ckpt = self.bundle.to_checkpoint(epoch, extra)?;
        ckpt.tensors.extend(self.adam_g.to_named("adam_g")?);
        ckpt.tensors.extend(self.adam_d.to_named("adam_d")?);
        Ok(ckpt)
    }

    /// Reconstructions of the first `n` samples from their clean conditions.
    pub fn reconstructions(&self, n: usize) -> Result<Vec<Raster>> {
        let n = n.min(self.samples.len());
        let stacks = self.samples[..n]
            .iter()
            .map(|s| assembly::assemble_generator_input(&s.cond, &s.cond.edge))
            .collect::<Result<Vec<_>>>()?;
        self.bundle.generator_forward_batch(&stacks)
    }

    fn write_samples(&self, dir: &Path, epoch: usize) -> Result<()> {
        let n = self.samples.len().min(4);
        let recon = self.reconstructions(n)?;
        let grid = sample_grid(&self.samples[..n], &recon)?;
        grid.write_png(&dir.join("samples").join(format!("epoch_{epoch:04}.png")))
    }

    /// Trains until `total_steps`, writing artifacts when an output directory is set.
    pub fn run(&mut self) -> Result<Checkpoint> {
        let spe = self.steps_per_epoch();
        let total = self.total_steps();
        let dir = self.out_dir.clone();
        if let Some(d) = &dir {
            std::fs::create_dir_all(d.join("samples")).map_err(|e| Error::io(d, e))?;
        }
        while self.bundle.step_count < total {
            let rec = self.step()?;
            let step = rec.step;
            if step % 50 == 0 || step == total {
                log::info!(
                    "step {step}/{total} epoch {} lr {:.2e} d_g {:.4} d_l {:.4} g_gan {:.4} g_vgg {:.4} g_fm {:.4}",
                    rec.epoch, rec.lr, rec.d_global, rec.d_local, rec.g_gan, rec.g_vgg, rec.g_fm
                );
            }
            let Some(d) = &dir else { continue };
            if self.cfg.checkpoint_every > 0 && step % self.cfg.checkpoint_every == 0 {
                let ckpt = self.checkpoint()?;
                ckpt.write(&d.join(format!("step_{step:06}.ckpt")))?;
            }
            let epoch_done = step % spe == 0;
            let epoch = (step / spe) as usize;
            if epoch_done && self.cfg.sample_every_epochs > 0 && epoch % self.cfg.sample_every_epochs == 0 {
                self.write_samples(d, epoch)?;
            }
        }
        let ckpt = self.checkpoint()?;
        if let Some(d) = &dir {
            let id = ckpt.write(&d.join("final.ckpt"))?;
            write_loss_csv(&d.join("losses.csv"), &self.history)?;
            write_epoch_csv(&d.join("epoch_losses.csv"), &self.history)?;
            self.write_samples(d, (self.bundle.step_count / spe) as usize)?;
            log::info!("final checkpoint {id}");
        }
        Ok(ckpt)
    }
}

/// Final checkpoint and per-step losses of a finished run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<LossRecord>,
}

pub fn train(samples: &[TrainSample], cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut t = Trainer::new(cfg, samples)?;
    if let Some(d) = out_dir {
        t.set_output_dir(d);
    }
    let checkpoint = t.run()?;
    Ok(TrainOutcome {
        checkpoint,
        history: t.history,
    })
}

/// A 1-channel unit raster replicated to 3 channels.
pub(crate) fn gray_to_rgb(r: &Raster) -> Raster {
    let u = r.to_unit();
    Raster::from_fn(u.height(), u.width(), 3, RangeTag::Unit, |_, y, x| u.get(0, y, x))
}
