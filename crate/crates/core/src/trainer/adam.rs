use candle_core::backprop::GradStore;
use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::net::{named_tensor, Checkpoint, NamedTensor, ParamSet};

/// Adam with bias correction; moments are exposed for checkpointing.
#[derive(Debug, Clone)]
pub struct Adam {
    params: ParamSet,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: ParamSet, beta1: f64, beta2: f64) -> Result<Self> {
        let zeros = |p: &ParamSet| -> Result<Vec<Tensor>> {
            p.vars().map(|v| Ok(v.as_tensor().zeros_like()?)).collect()
        };
        Ok(Adam {
            m: zeros(&params)?,
            v: zeros(&params)?,
            params,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (_, var)) in self.params.iter().enumerate() {
            let Some(g) = grads.get(var.as_tensor()) else { continue };
            let g = g.detach();
            let m = ((&self.m[i] * self.beta1)? + (&g * (1.0 - self.beta1))?)?;
            let v = ((&self.v[i] * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let denom = ((&v / c2)?.sqrt()? + self.eps)?;
            let update = ((&m / c1)?.div(&denom)? * lr)?;
            var.set(&var.as_tensor().detach().sub(&update)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }

    pub fn to_named(&self, prefix: &str) -> Result<Vec<NamedTensor>> {
        let mut out = Vec::with_capacity(2 * self.m.len());
        for (i, (name, _)) in self.params.iter().enumerate() {
            out.push(named_tensor(&format!("{prefix}.m.{name}"), &self.m[i])?);
            out.push(named_tensor(&format!("{prefix}.v.{name}"), &self.v[i])?);
        }
        Ok(out)
    }

    pub fn load(&mut self, ckpt: &Checkpoint, prefix: &str, t: u64) -> Result<()> {
        for (i, (name, var)) in self.params.iter().enumerate() {
            for (slot, store) in [("m", &mut self.m), ("v", &mut self.v)] {
                let key = format!("{prefix}.{slot}.{name}");
                let nt = ckpt
                    .tensor(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing optimizer state {key}")))?;
                let t = Tensor::from_vec(nt.data.clone(), nt.shape.as_slice(), var.device())?.to_dtype(var.dtype())?;
                if t.dims() != var.dims() {
                    return Err(Error::Checkpoint(format!("optimizer state {key} has shape {:?}", t.dims())));
                }
                store[i] = t;
            }
        }
        self.t = t;
        Ok(())
    }
}
