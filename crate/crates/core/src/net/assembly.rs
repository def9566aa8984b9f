//! Asymmetric input assembly.
//!
//! The generator is fed `[noisy_edge, palette_raster, light, shadow]`; both
//! discriminators are fed `[clean_edge, color_map, light, shadow, ...]` followed
//! by the portrait (global) or its face and eye masked copies (local).

use candle_core::{DType, Device, Tensor};

use crate::conditioning::ConditionSet;
use crate::error::{shape_err, Error, Result};
use crate::imaging::{BinaryMask, RangeTag, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackKind {
    Generator,
    DiscGlobal,
    DiscLocal,
}

impl StackKind {
    pub fn layout(self) -> &'static [(&'static str, usize)] {
        match self {
            StackKind::Generator => &[("noisy_edge", 1), ("palette", 3), ("light", 1), ("shadow", 1)],
            StackKind::DiscGlobal => &[
                ("edge", 1),
                ("color_map", 3),
                ("light", 1),
                ("shadow", 1),
                ("portrait", 3),
            ],
            StackKind::DiscLocal => &[
                ("edge", 1),
                ("color_map", 3),
                ("light", 1),
                ("shadow", 1),
                ("face", 3),
                ("eyes", 3),
            ],
        }
    }

    pub fn channels(self) -> usize {
        self.layout().iter().map(|(_, n)| n).sum()
    }
}

/// Unit-range planar channel stack with a named layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionStack {
    kind: StackKind,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ConditionStack {
    fn build(kind: StackKind, dims: (usize, usize), parts: &[&Raster]) -> Result<Self> {
        let mut data = Vec::with_capacity(kind.channels() * dims.0 * dims.1);
        for ((name, ch), part) in kind.layout().iter().zip(parts) {
            part.ensure_dims(dims, name)?;
            part.ensure_channels(*ch, name)?;
            data.extend_from_slice(part.to_unit().data());
        }
        Ok(ConditionStack {
            kind,
            height: dims.0,
            width: dims.1,
            data,
        })
    }

    pub fn kind(&self) -> StackKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// One named slot as a unit-range raster.
    pub fn part(&self, name: &str) -> Result<Raster> {
        let plane = self.height * self.width;
        let mut start = 0;
        for (n, ch) in self.kind.layout() {
            if *n == name {
                let data = self.data[start * plane..(start + ch) * plane].to_vec();
                return Raster::new(self.height, self.width, *ch, RangeTag::Unit, data);
            }
            start += ch;
        }
        Err(shape_err!("{:?} has no slot named {name}", self.kind))
    }

    /// All slots in layout order.
    pub fn unassemble(&self) -> Result<Vec<(&'static str, Raster)>> {
        self.kind.layout().iter().map(|(n, _)| Ok((*n, self.part(n)?))).collect()
    }

    /// `[1, C, H, W]` tensor in signed range.
    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        let signed: Vec<f32> = self.data.iter().map(|v| 2.0 * v - 1.0).collect();
        Ok(Tensor::from_vec(signed, (1, self.channels(), self.height, self.width), device)?.to_dtype(dtype)?)
    }
}

fn masked(portrait: &Raster, mask: &BinaryMask) -> Raster {
    let p = portrait.to_unit();
    Raster::from_fn(p.height(), p.width(), 3, RangeTag::Unit, |c, y, x| {
        if mask.get(y, x) {
            p.get(c, y, x)
        } else {
            0.0
        }
    })
}

pub fn assemble_generator_input(cond: &ConditionSet, noisy_edge: &Raster) -> Result<ConditionStack> {
    cond.validate()?;
    let palette = cond.palette_raster()?;
    ConditionStack::build(
        StackKind::Generator,
        cond.dims(),
        &[noisy_edge, &palette, &cond.light.to_raster(), &cond.shadow.to_raster()],
    )
}

pub fn assemble_disc_global_input(cond: &ConditionSet, portrait: &Raster) -> Result<ConditionStack> {
    cond.validate()?;
    ConditionStack::build(
        StackKind::DiscGlobal,
        cond.dims(),
        &[
            &cond.edge,
            &cond.color_map,
            &cond.light.to_raster(),
            &cond.shadow.to_raster(),
            portrait,
        ],
    )
}

pub fn assemble_disc_local_input(cond: &ConditionSet, portrait: &Raster) -> Result<ConditionStack> {
    cond.validate()?;
    portrait.ensure_dims(cond.dims(), "portrait")?;
    ConditionStack::build(
        StackKind::DiscLocal,
        cond.dims(),
        &[
            &cond.edge,
            &cond.color_map,
            &cond.light.to_raster(),
            &cond.shadow.to_raster(),
            &masked(portrait, &cond.face_mask),
            &masked(portrait, &cond.eye_mask),
        ],
    )
}

/// The six channels both discriminators share, `[1, 6, H, W]` signed.
pub fn disc_condition_tensor(cond: &ConditionSet, dtype: DType, device: &Device) -> Result<Tensor> {
    let stack = assemble_disc_global_input(cond, &Raster::zeros(cond.dims().0, cond.dims().1, 3))?;
    Ok(stack.to_tensor(dtype, device)?.narrow(1, 0, 6)?)
}

/// Face and eye masks as `[1, 2, H, W]` tensors of 0/1.
pub fn region_mask_tensor(cond: &ConditionSet, dtype: DType, device: &Device) -> Result<Tensor> {
    let (h, w) = cond.dims();
    let data: Vec<f32> = cond
        .face_mask
        .data()
        .iter()
        .chain(cond.eye_mask.data())
        .map(|&v| v as f32)
        .collect();
    Ok(Tensor::from_vec(data, (1, 2, h, w), device)?.to_dtype(dtype)?)
}

/// Tensor-level `D_G` input from a signed condition block and a signed portrait batch.
pub fn disc_global_tensor(cond6: &Tensor, portrait: &Tensor) -> Result<Tensor> {
    Ok(Tensor::cat(&[cond6, portrait], 1)?)
}

/// Tensor-level `D_L` input; masking is done in unit range so that it
/// agrees with [`assemble_disc_local_input`].
pub fn disc_local_tensor(cond6: &Tensor, masks: &Tensor, portrait: &Tensor) -> Result<Tensor> {
    let unit = (portrait + 1.0)?;
    let face = (unit.broadcast_mul(&masks.narrow(1, 0, 1)?)? - 1.0)?;
    let eyes = (unit.broadcast_mul(&masks.narrow(1, 1, 1)?)? - 1.0)?;
    Ok(Tensor::cat(&[cond6, &face, &eyes], 1)?)
}

/// Stacks single-sample tensors along the batch dimension.
pub fn batch(tensors: &[Tensor]) -> Result<Tensor> {
    if tensors.is_empty() {
        return Err(Error::Param("empty batch".into()));
    }
    Ok(Tensor::cat(tensors, 0)?)
}

/// Unit-range portrait as a `[1, 3, H, W]` signed tensor.
pub fn portrait_tensor(portrait: &Raster, dtype: DType, device: &Device) -> Result<Tensor> {
    portrait.ensure_channels(3, "portrait")?;
    let signed: Vec<f32> = portrait.to_unit().data().iter().map(|v| 2.0 * v - 1.0).collect();
    Ok(Tensor::from_vec(signed, (1, 3, portrait.height(), portrait.width()), device)?.to_dtype(dtype)?)
}

/// Inverse of [`portrait_tensor`] for one batch item; values are clamped into range.
pub fn tensor_to_portrait(t: &Tensor, index: usize) -> Result<Raster> {
    let (_, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(shape_err!("expected 3 channels, got {c}"));
    }
    let v: Vec<f32> = t.get(index)?.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    Ok(Raster::from_fn(h, w, 3, RangeTag::Unit, |c, y, x| (v[(c * h + y) * w + x] + 1.0) / 2.0))
}
