//! Convolution building blocks on top of candle tensors.

use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

/// Named trainable parameters in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Var)>,
}

impl ParamSet {
    pub fn push(&mut self, name: String, var: Var) {
        self.entries.push((name, var));
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Var)> {
        self.entries.iter()
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.entries.iter().map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn extend(&mut self, other: ParamSet) {
        self.entries.extend(other.entries);
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.elem_count()).sum()
    }
}

/// Seeded parameter factory; all initial values come from one ChaCha stream.
pub struct Init {
    rng: ChaCha8Rng,
    pub dtype: DType,
    pub device: Device,
    prefix: String,
    pub params: ParamSet,
    trainable: bool,
}

impl Init {
    pub fn new(seed: u64, dtype: DType, device: &Device, prefix: &str, trainable: bool) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
            device: device.clone(),
            prefix: prefix.to_string(),
            params: ParamSet::default(),
            trainable,
        }
    }

    fn tensor(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let values: Vec<f64> = if std == 0.0 {
            vec![0.0; n]
        } else {
            let normal = Normal::new(0.0, std).expect("valid std");
            (0..n).map(|_| normal.sample(&mut self.rng)).collect()
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        if self.trainable {
            let var = Var::from_tensor(&t)?;
            let t = var.as_tensor().clone();
            self.params.push(format!("{}.{name}", self.prefix), var);
            Ok(t)
        } else {
            Ok(t)
        }
    }
}

/// Reflect-101 padding of the two spatial dims of an NCHW tensor.
pub fn reflect_pad(x: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(x.clone());
    }
    let (_, _, h, w) = x.dims4()?;
    let index = |n: usize| -> Result<Tensor> {
        let idx: Vec<u32> = (-(pad as isize)..(n + pad) as isize)
            .map(|i| crate::imaging::reflect_index(i, n) as u32)
            .collect();
        Ok(Tensor::from_vec(idx, n + 2 * pad, x.device())?)
    };
    let x = x.index_select(&index(h)?, 2)?;
    Ok(x.index_select(&index(w)?, 3)?)
}

/// Per-sample, per-channel normalization over spatial positions (no affine).
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    let flat = x.reshape((b, c, h * w))?;
    let mean = flat.mean_keepdim(D::Minus1)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let denom = (var + 1e-5)?.sqrt()?;
    Ok(centered.broadcast_div(&denom)?.reshape((b, c, h, w))?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    // max(x, slope * x) for slope < 1
    Ok(x.maximum(&(x * slope)?)?)
}

/// Reflect-padded convolution.
#[derive(Debug, Clone)]
pub struct Conv {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    pad: usize,
}

impl Conv {
    pub fn new(
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        std: f64,
    ) -> Result<Self> {
        let weight = init.tensor(&format!("{name}.weight"), &[cout, cin, kernel, kernel], std)?;
        let bias = if bias {
            Some(init.tensor(&format!("{name}.bias"), &[cout], 0.0)?)
        } else {
            None
        };
        Ok(Conv { weight, bias, stride, pad })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = reflect_pad(x, self.pad)?;
        let y = super::conv_op::conv2d_auto(&x, &self.weight, self.stride)?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.reshape((1, b.dim(0)?, 1, 1))?)?),
            None => Ok(y),
        }
    }
}

/// Stride-2 transposed convolution (3×3, padding 1, output padding 1): doubles H and W.
#[derive(Debug, Clone)]
pub struct UpConv {
    weight: Tensor,
}

impl UpConv {
    pub fn new(init: &mut Init, name: &str, cin: usize, cout: usize, std: f64) -> Result<Self> {
        let weight = init.tensor(&format!("{name}.weight"), &[cin, cout, 3, 3], std)?;
        Ok(UpConv { weight })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.conv_transpose2d(&self.weight, 1, 1, 2, 1)?)
    }
}
