//! Frozen feature extractor for the perceptual loss.
//!
//! A fixed-seed five-stage convolution stack stands in for a pretrained
//! classification network; any network exposing per-stage activations can be
//! plugged in behind [`FeatureExtractor`].

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::layers::{Conv, Init};
use crate::error::Result;

pub trait FeatureExtractor: Send + Sync {
    /// Activations of every stage for a `[B, 3, H, W]` signed-range image batch.
    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureNetSpec {
    pub seed: u64,
    pub widths: Vec<usize>,
    /// Stages preceded by a 2× average pool.
    pub pooled_stages: Vec<usize>,
}

impl Default for FeatureNetSpec {
    fn default() -> Self {
        FeatureNetSpec {
            seed: 0x5EED_F00D,
            widths: vec![8, 16, 16, 32, 32],
            pooled_stages: vec![1, 2],
        }
    }
}

/// Parameters are plain tensors, never registered for optimization.
#[derive(Debug, Clone)]
pub struct FeatureNet {
    spec: FeatureNetSpec,
    stages: Vec<Conv>,
}

impl FeatureNet {
    pub fn new(spec: &FeatureNetSpec, dtype: DType, device: &Device) -> Result<Self> {
        let mut init = Init::new(spec.seed, dtype, device, "feature", false);
        let mut ch = 3;
        let mut stages = Vec::new();
        for (i, &w) in spec.widths.iter().enumerate() {
            let std = (2.0 / (ch * 9) as f64).sqrt();
            stages.push(Conv::new(&mut init, &format!("stage{i}"), ch, w, 3, 1, 1, true, std)?);
            ch = w;
        }
        Ok(FeatureNet {
            spec: spec.clone(),
            stages,
        })
    }

    pub fn spec(&self) -> &FeatureNetSpec {
        &self.spec
    }

    pub fn stages(&self) -> usize {
        self.stages.len()
    }
}

impl FeatureExtractor for FeatureNet {
    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut h = x.clone();
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, conv) in self.stages.iter().enumerate() {
            if self.spec.pooled_stages.contains(&i) {
                h = h.avg_pool2d(2)?;
            }
            h = conv.forward(&h)?.relu()?;
            out.push(h.clone());
        }
        Ok(out)
    }
}
