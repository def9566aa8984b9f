//! Global generator: 7×7 stem, stride-2 front-end, residual blocks,
//! transposed-convolution back-end, tanh output.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::layers::{instance_norm, Conv, Init, ParamSet, UpConv};
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub input_channels: usize,
    pub output_channels: usize,
    pub base_width: usize,
    pub downsample_steps: usize,
    pub residual_blocks: usize,
    pub resolution: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            input_channels: 6,
            output_channels: 3,
            base_width: 8,
            downsample_steps: 2,
            residual_blocks: 9,
            resolution: 64,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let factor = 1usize << self.downsample_steps;
        if self.resolution == 0 || self.resolution % factor != 0 {
            return Err(shape_err!(
                "resolution {} not divisible by 2^{}",
                self.resolution,
                self.downsample_steps
            ));
        }
        if self.base_width == 0 || self.input_channels == 0 || self.output_channels == 0 {
            return Err(shape_err!("generator widths must be positive"));
        }
        Ok(())
    }
}

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Generator {
    spec: GeneratorSpec,
    stem: Conv,
    down: Vec<Conv>,
    blocks: Vec<(Conv, Conv)>,
    up: Vec<UpConv>,
    head: Conv,
    params: ParamSet,
}

impl Generator {
    pub fn new(spec: &GeneratorSpec, init: &mut Init) -> Result<Self> {
        spec.validate()?;
        let w = spec.base_width;
        let stem = Conv::new(init, "stem", spec.input_channels, w, 7, 1, 3, false, INIT_STD)?;
        let mut ch = w;
        let mut down = Vec::new();
        for i in 0..spec.downsample_steps {
            down.push(Conv::new(init, &format!("down{i}"), ch, ch * 2, 3, 2, 1, false, INIT_STD)?);
            ch *= 2;
        }
        let blocks = (0..spec.residual_blocks)
            .map(|i| {
                Ok((
                    Conv::new(init, &format!("res{i}.a"), ch, ch, 3, 1, 1, false, INIT_STD)?,
                    Conv::new(init, &format!("res{i}.b"), ch, ch, 3, 1, 1, false, INIT_STD)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut up = Vec::new();
        for i in 0..spec.downsample_steps {
            up.push(UpConv::new(init, &format!("up{i}"), ch, ch / 2, INIT_STD)?);
            ch /= 2;
        }
        let head = Conv::new(init, "head", ch, spec.output_channels, 7, 1, 3, true, INIT_STD)?;
        Ok(Generator {
            spec: spec.clone(),
            stem,
            down,
            blocks,
            up,
            head,
            params: init.params.clone(),
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// `[B, in, H, W]` signed-range conditions to `[B, out, H, W]` in `(-1, 1)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        let factor = 1usize << self.spec.downsample_steps;
        if c != self.spec.input_channels || h % factor != 0 || w % factor != 0 {
            return Err(shape_err!(
                "generator expects {} channels with dims divisible by {factor}, got {:?}",
                self.spec.input_channels,
                x.dims()
            ));
        }
        let mut h = instance_norm(&self.stem.forward(x)?)?.relu()?;
        for d in &self.down {
            h = instance_norm(&d.forward(&h)?)?.relu()?;
        }
        for (a, b) in &self.blocks {
            let r = instance_norm(&a.forward(&h)?)?.relu()?;
            let r = instance_norm(&b.forward(&r)?)?;
            h = (h + r)?;
        }
        for u in &self.up {
            h = instance_norm(&u.forward(&h)?)?.relu()?;
        }
        Ok(self.head.forward(&h)?.tanh()?)
    }
}
