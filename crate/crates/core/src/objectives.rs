//! Adversarial, perceptual and feature-matching losses.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{DiscKind, FeatureExtractor, MultiScaleOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_vgg_layers: Vec<f64>,
    pub lambda_fm_layers: Vec<f64>,
    pub w_fm: f64,
    pub w_vgg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_vgg_layers: geometric_weights(5),
            lambda_fm_layers: geometric_weights(4),
            w_fm: 10.0,
            w_vgg: 1000.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self, feature_stages: usize, disc_layers: usize) -> Result<()> {
        if self.lambda_vgg_layers.len() != feature_stages {
            return Err(Error::Config(format!(
                "lambda_vgg_layers has {} entries, feature net has {feature_stages} stages",
                self.lambda_vgg_layers.len()
            )));
        }
        if self.lambda_fm_layers.len() != disc_layers {
            return Err(Error::Config(format!(
                "lambda_fm_layers has {} entries, discriminator has {disc_layers} layers",
                self.lambda_fm_layers.len()
            )));
        }
        let all = self.lambda_vgg_layers.iter().chain(&self.lambda_fm_layers).chain([&self.w_fm, &self.w_vgg]);
        if all.clone().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// `λ_i ∝ 2^-(L-i)` for `i = 1..=L`, normalized to sum to 1.
pub fn geometric_weights(layers: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=layers).map(|i| 0.5f64.powi((layers - i) as i32)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

fn finite(t: Tensor, what: &str) -> Result<Tensor> {
    let v = t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    if v.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Mean binary cross-entropy of `sigmoid(logits)` against a constant target,
/// as `max(x, 0) - x·t + log(1 + exp(-|x|))`.
pub fn bce_with_logits(logits: &Tensor, target: f64) -> Result<Tensor> {
    let softplus = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    let loss = ((logits.relu()? - (logits * target)?)? + softplus)?;
    Ok(loss.mean_all()?)
}

fn sum(terms: Vec<Tensor>) -> Result<Tensor> {
    let mut it = terms.into_iter();
    let first = it.next().ok_or_else(|| Error::Contract("empty loss sum".into()))?;
    it.try_fold(first, |acc, t| Ok(acc.add(&t)?))
}

/// Discriminator loss over aligned scale pairs: real → 1, fake → 0, summed over scales.
pub fn gan_loss_disc_logits(real: &[&Tensor], fake: &[&Tensor]) -> Result<Tensor> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::Contract(format!("{} real vs {} fake logit maps", real.len(), fake.len())));
    }
    let terms = real
        .iter()
        .zip(fake)
        .map(|(r, f)| Ok(bce_with_logits(r, 1.0)?.add(&bce_with_logits(f, 0.0)?)?))
        .collect::<Result<Vec<_>>>()?;
    finite(sum(terms)?, "discriminator loss")
}

pub fn gan_loss_disc(real: &MultiScaleOutput, fake: &MultiScaleOutput) -> Result<Tensor> {
    if real.kind != fake.kind {
        return Err(Error::Contract("real and fake outputs come from different discriminators".into()));
    }
    gan_loss_disc_logits(&real.logits(), &fake.logits())
}

/// Non-saturating generator loss: fake → 1 on every logit map.
pub fn gan_loss_gen_logits(fake: &[&Tensor]) -> Result<Tensor> {
    let terms = fake.iter().map(|f| bce_with_logits(f, 1.0)).collect::<Result<Vec<_>>>()?;
    finite(sum(terms)?, "generator adversarial loss")
}

pub fn gan_loss_gen(fakes: &[&MultiScaleOutput]) -> Result<Tensor> {
    let logits: Vec<&Tensor> = fakes.iter().flat_map(|o| o.logits()).collect();
    gan_loss_gen_logits(&logits)
}

fn weighted_l1(real: &[Tensor], fake: &[Tensor], weights: &[f64], detach_real: bool) -> Result<Vec<Tensor>> {
    if real.len() != fake.len() || real.len() != weights.len() {
        return Err(Error::Contract(format!(
            "{} real / {} fake feature maps for {} weights",
            real.len(),
            fake.len(),
            weights.len()
        )));
    }
    real.iter()
        .zip(fake)
        .zip(weights)
        .map(|((r, f), w)| {
            if r.dims() != f.dims() {
                return Err(Error::Shape(format!("feature maps {:?} vs {:?}", r.dims(), f.dims())));
            }
            let r = if detach_real { r.detach() } else { r.clone() };
            Ok((f.sub(&r)?.abs()?.mean_all()? * *w)?)
        })
        .collect()
}

/// `Σ λ_i · mean |Φ_i(real) − Φ_i(fake)|` on signed-range image batches.
pub fn perceptual_loss(net: &dyn FeatureExtractor, real: &Tensor, fake: &Tensor, weights: &[f64]) -> Result<Tensor> {
    if real.dims() != fake.dims() {
        return Err(Error::Shape(format!("real {:?} vs fake {:?}", real.dims(), fake.dims())));
    }
    let fr = net.features(real)?;
    let ff = net.features(fake)?;
    finite(sum(weighted_l1(&fr, &ff, weights, false)?)?, "perceptual loss")
}

/// Feature-matching loss over both scales of `D_G`; real features are constants.
pub fn feature_matching_loss(real: &MultiScaleOutput, fake: &MultiScaleOutput, weights: &[f64]) -> Result<Tensor> {
    if real.kind != DiscKind::Global || fake.kind != DiscKind::Global {
        return Err(Error::Contract("feature matching uses D_G features only".into()));
    }
    let mut terms = weighted_l1(&real.full.features, &fake.full.features, weights, true)?;
    terms.extend(weighted_l1(&real.down.features, &fake.down.features, weights, true)?);
    finite(sum(terms)?, "feature matching loss")
}

/// `L_GAN + w_vgg·L_VGG + w_fm·L_FM`.
pub fn total_generator_objective(gan: &Tensor, vgg: &Tensor, fm: &Tensor, weights: &LossWeights) -> Result<Tensor> {
    let total = gan.add(&(vgg * weights.w_vgg)?)?.add(&(fm * weights.w_fm)?)?;
    finite(total, "generator objective")
}
