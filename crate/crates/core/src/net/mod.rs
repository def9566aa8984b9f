//! Networks, input assembly and checkpoints.

pub mod assembly;
pub mod checkpoint;
pub mod conv_op;
pub mod discriminator;
pub mod feature;
pub mod generator;
pub mod layers;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

pub use assembly::{
    assemble_disc_global_input, assemble_disc_local_input, assemble_generator_input, ConditionStack, StackKind,
};
pub use checkpoint::{checkpoint_id, Checkpoint, NamedTensor};
pub use discriminator::{DiscKind, DiscriminatorSpec, MultiScaleDiscriminator, MultiScaleOutput, ScaleOutput};
pub use feature::{FeatureExtractor, FeatureNet, FeatureNetSpec};
pub use generator::{Generator, GeneratorSpec};
pub use layers::ParamSet;

use crate::error::{Error, Result};
use crate::imaging::Raster;
use layers::Init;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSpec {
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub feature: FeatureNetSpec,
}

/// Generator, both discriminators and the frozen feature network.
#[derive(Debug, Clone)]
pub struct NetBundle {
    pub spec: NetSpec,
    pub generator: Generator,
    pub disc_global: MultiScaleDiscriminator,
    pub disc_local: MultiScaleDiscriminator,
    pub feature_net: FeatureNet,
    pub step_count: u64,
    pub seed: u64,
    dtype: DType,
    device: Device,
}

impl NetBundle {
    pub fn new(spec: &NetSpec, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        let mut g = Init::new(seed, dtype, device, "generator", true);
        let generator = Generator::new(&spec.generator, &mut g)?;
        let mut dg = Init::new(seed ^ 0xD6, dtype, device, DiscKind::Global.name(), true);
        let disc_global = MultiScaleDiscriminator::new(DiscKind::Global, &spec.discriminator, &mut dg)?;
        let mut dl = Init::new(seed ^ 0xD1, dtype, device, DiscKind::Local.name(), true);
        let disc_local = MultiScaleDiscriminator::new(DiscKind::Local, &spec.discriminator, &mut dl)?;
        let feature_net = FeatureNet::new(&spec.feature, dtype, device)?;
        Ok(NetBundle {
            spec: spec.clone(),
            generator,
            disc_global,
            disc_local,
            feature_net,
            step_count: 0,
            seed,
            dtype,
            device: device.clone(),
        })
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn disc(&self, kind: DiscKind) -> &MultiScaleDiscriminator {
        match kind {
            DiscKind::Global => &self.disc_global,
            DiscKind::Local => &self.disc_local,
        }
    }

    /// Every trainable parameter: generator, then `D_G`, then `D_L`.
    pub fn all_params(&self) -> ParamSet {
        let mut p = self.generator.params().clone();
        p.extend(self.disc_global.params().clone());
        p.extend(self.disc_local.params().clone());
        p
    }

    pub fn generator_forward(&self, input: &ConditionStack) -> Result<Raster> {
        if input.kind() != StackKind::Generator {
            return Err(Error::Contract(format!("generator fed a {:?} stack", input.kind())));
        }
        let (h, w) = input.dims();
        let res = self.spec.generator.resolution;
        if (h, w) != (res, res) {
            return Err(Error::Shape(format!("generator resolution {res}, input {h}x{w}")));
        }
        let out = self.generator.forward(&input.to_tensor(self.dtype, &self.device)?)?;
        assembly::tensor_to_portrait(&out, 0)
    }

    pub fn generator_forward_batch(&self, inputs: &[ConditionStack]) -> Result<Vec<Raster>> {
        let ts = inputs
            .iter()
            .map(|s| s.to_tensor(self.dtype, &self.device))
            .collect::<Result<Vec<_>>>()?;
        let out = self.generator.forward(&assembly::batch(&ts)?)?;
        (0..inputs.len()).map(|i| assembly::tensor_to_portrait(&out, i)).collect()
    }

    pub fn to_checkpoint(&self, epoch: usize, extra: serde_json::Value) -> Result<Checkpoint> {
        let tensors = self
            .all_params()
            .iter()
            .map(|(name, v)| named_tensor(name, v.as_tensor()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint {
            spec: self.spec.clone(),
            seed: self.seed,
            step: self.step_count,
            epoch,
            tensors,
            extra,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, dtype: DType, device: &Device) -> Result<Self> {
        let mut bundle = NetBundle::new(&ckpt.spec, ckpt.seed, dtype, device)?;
        bundle.load_params(ckpt)?;
        bundle.step_count = ckpt.step;
        Ok(bundle)
    }

    fn load_params(&mut self, ckpt: &Checkpoint) -> Result<()> {
        for (name, var) in self.all_params().iter() {
            let t = ckpt
                .tensor(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "{name}: checkpoint shape {:?}, model shape {:?}",
                    t.shape,
                    var.dims()
                )));
            }
            var.set(&Tensor::from_vec(t.data.clone(), t.shape.as_slice(), &self.device)?.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}

/// Reads a checkpoint file into an f32 CPU bundle; returns it with the checkpoint id.
pub fn load_bundle(path: &std::path::Path) -> Result<(NetBundle, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    Ok((NetBundle::from_checkpoint(&ckpt, DType::F32, &Device::Cpu)?, checkpoint_id(&bytes)))
}

pub fn named_tensor(name: &str, t: &Tensor) -> Result<NamedTensor> {
    Ok(NamedTensor {
        name: name.to_string(),
        shape: t.dims().to_vec(),
        data: t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?,
    })
}
