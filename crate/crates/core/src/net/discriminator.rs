//! Patch discriminators and their two-scale composition.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::layers::{instance_norm, leaky_relu, Conv, Init, ParamSet};
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscKind {
    /// Judges the whole portrait.
    Global,
    /// Judges face and eye regions.
    Local,
}

impl DiscKind {
    pub fn input_channels(self) -> usize {
        match self {
            DiscKind::Global => 9,
            DiscKind::Local => 12,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DiscKind::Global => "disc_global",
            DiscKind::Local => "disc_local",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSpec {
    /// Stride-2 convolution layers per scale network.
    pub layers: usize,
    pub base_width: usize,
    pub scales: usize,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            layers: 4,
            base_width: 8,
            scales: 2,
        }
    }
}

const INIT_STD: f64 = 0.02;

/// `layers` stride-2 4×4 convolutions followed by a 3×3 single-channel logit head.
#[derive(Debug, Clone)]
pub struct PatchNet {
    convs: Vec<Conv>,
    head: Conv,
}

/// Patch logits plus every intermediate feature map.
#[derive(Debug, Clone)]
pub struct ScaleOutput {
    pub logits: Tensor,
    pub features: Vec<Tensor>,
}

impl PatchNet {
    fn new(init: &mut Init, prefix: &str, in_ch: usize, spec: &DiscriminatorSpec) -> Result<Self> {
        let mut convs = Vec::new();
        let mut ch = in_ch;
        for i in 0..spec.layers {
            let out = spec.base_width * (1 << i.min(2));
            convs.push(Conv::new(init, &format!("{prefix}.conv{i}"), ch, out, 4, 2, 1, true, INIT_STD)?);
            ch = out;
        }
        let head = Conv::new(init, &format!("{prefix}.head"), ch, 1, 3, 1, 1, true, INIT_STD)?;
        Ok(PatchNet { convs, head })
    }

    pub fn forward(&self, x: &Tensor) -> Result<ScaleOutput> {
        let mut h = x.clone();
        let mut features = Vec::with_capacity(self.convs.len());
        for (i, c) in self.convs.iter().enumerate() {
            let y = c.forward(&h)?;
            let y = if i == 0 { y } else { instance_norm(&y)? };
            h = leaky_relu(&y, 0.2)?;
            features.push(h.clone());
        }
        Ok(ScaleOutput {
            logits: self.head.forward(&h)?,
            features,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MultiScaleOutput {
    pub kind: DiscKind,
    pub full: ScaleOutput,
    pub down: ScaleOutput,
}

impl MultiScaleOutput {
    pub fn logits(&self) -> [&Tensor; 2] {
        [&self.full.logits, &self.down.logits]
    }
}

/// Two independent patch networks: one on the input, one on its 2× average-pooled copy.
#[derive(Debug, Clone)]
pub struct MultiScaleDiscriminator {
    kind: DiscKind,
    full: PatchNet,
    down: PatchNet,
    params: ParamSet,
}

impl MultiScaleDiscriminator {
    pub fn new(kind: DiscKind, spec: &DiscriminatorSpec, init: &mut Init) -> Result<Self> {
        if spec.scales != 2 {
            return Err(shape_err!("multi-scale discriminator has exactly 2 scales, got {}", spec.scales));
        }
        let in_ch = kind.input_channels();
        let full = PatchNet::new(init, "full", in_ch, spec)?;
        let down = PatchNet::new(init, "down", in_ch, spec)?;
        Ok(MultiScaleDiscriminator {
            kind,
            full,
            down,
            params: init.params.clone(),
        })
    }

    pub fn kind(&self) -> DiscKind {
        self.kind
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn forward(&self, x: &Tensor) -> Result<MultiScaleOutput> {
        let c = x.dims4()?.1;
        if c != self.kind.input_channels() {
            return Err(shape_err!(
                "{} expects {} channels, got {c}",
                self.kind.name(),
                self.kind.input_channels()
            ));
        }
        Ok(MultiScaleOutput {
            kind: self.kind,
            full: self.full.forward(x)?,
            down: self.down.forward(&x.avg_pool2d(2)?)?,
        })
    }
}
