use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::ExtractionConfig;
use crate::error::{Error, Result};
use crate::net::NetSpec;
use crate::noising::NoiseConfig;
use crate::objectives::LossWeights;

pub const SCHEMA_VERSION: u32 = 1;

/// What the discriminators are conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscConditioning {
    /// Clean edges and the positional color map.
    #[default]
    Asymmetric,
    /// The generator's own inputs (plain conditional GAN baseline).
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_constant_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Generator resolution; overrides `net.generator.resolution`.
    pub resolution: usize,
    /// Stop after this many generator steps even if epochs remain.
    pub max_steps: Option<u64>,
    /// Generator steps between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Epochs between sample grids; 0 disables them.
    pub sample_every_epochs: usize,
    pub disc_conditioning: DiscConditioning,
    pub use_local_disc: bool,
    pub noise: NoiseConfig,
    pub loss_weights: LossWeights,
    pub net: NetSpec,
    pub extraction: ExtractionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schema_version: SCHEMA_VERSION,
            epochs: 60,
            batch_size: 4,
            lr: 0.0002,
            lr_constant_epochs: 30,
            beta1: 0.5,
            beta2: 0.999,
            seed: 0,
            resolution: 64,
            max_steps: None,
            checkpoint_every: 500,
            sample_every_epochs: 10,
            disc_conditioning: DiscConditioning::Asymmetric,
            use_local_disc: true,
            noise: NoiseConfig::default(),
            loss_weights: LossWeights::default(),
            net: NetSpec::default(),
            extraction: ExtractionConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn net_spec(&self) -> NetSpec {
        let mut net = self.net.clone();
        net.generator.resolution = self.resolution;
        net
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.lr_constant_epochs > self.epochs {
            return bad(format!(
                "lr_constant_epochs {} exceeds epochs {}",
                self.lr_constant_epochs, self.epochs
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        self.noise.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.extraction.classes.validate().map_err(|e| Error::Config(e.to_string()))?;
        let net = self.net_spec();
        net.generator.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.loss_weights.validate(net.feature.widths.len(), net.discriminator.layers)
    }
}

/// Learning rate for a 0-based epoch: constant, then linear decay to zero.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::Param(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    if epoch < cfg.lr_constant_epochs {
        return Ok(cfg.lr);
    }
    let span = (cfg.epochs - cfg.lr_constant_epochs) as f64;
    Ok(cfg.lr * (cfg.epochs - epoch) as f64 / span)
}
