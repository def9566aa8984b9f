//! Light-component estimation for light and shadow masks.

use crate::error::{param_err, Result};
use crate::imaging::{gaussian_filter, BinaryMask, RangeTag, Raster};

use super::ExtractionConfig;

/// Produces a non-negative per-pixel light strength (single channel, any scale).
pub trait LightEstimator: Send + Sync {
    fn light_component(&self, image: &Raster) -> Result<Raster>;
}

/// `max(0, lum - G_sigma * lum)` with `lum = (R+G+B)/3` in byte units and
/// `sigma = width / sigma_divisor`: the amount by which a pixel is brighter
/// than its local diffuse estimate.
///
/// Luminance is taken from byte-quantized pixels so that an image and its
/// inversion see exactly complementary inputs.
#[derive(Debug, Clone, Copy)]
pub struct HighPassLight {
    pub sigma_divisor: f64,
}

impl Default for HighPassLight {
    fn default() -> Self {
        HighPassLight { sigma_divisor: 16.0 }
    }
}

impl HighPassLight {
    pub fn from_config(cfg: &ExtractionConfig) -> Self {
        HighPassLight {
            sigma_divisor: cfg.light_sigma_divisor,
        }
    }

    pub fn sigma(&self, width: usize) -> f64 {
        width as f64 / self.sigma_divisor
    }
}

impl LightEstimator for HighPassLight {
    fn light_component(&self, image: &Raster) -> Result<Raster> {
        image.ensure_channels(3, "light estimation")?;
        if !(self.sigma_divisor > 0.0) {
            return Err(param_err!("light sigma divisor must be positive"));
        }
        let (h, w) = image.dims();
        let lum = Raster::from_fn(h, w, 1, RangeTag::Byte, |_, y, x| {
            let p = image.rgb_bytes(y, x);
            (p[0] as u32 + p[1] as u32 + p[2] as u32) as f32 / 3.0
        });
        let sigma = self.sigma(w);
        let radius = ((3.0 * sigma).ceil() as usize).max(1);
        let diffuse = gaussian_filter(&lum, sigma, radius)?;
        Ok(Raster::from_fn(h, w, 1, RangeTag::Byte, |_, y, x| {
            (lum.get(0, y, x) - diffuse.get(0, y, x)).max(0.0)
        }))
    }
}

/// Min-max normalization to `[0, 1]`; a flat input maps to all zeros.
pub fn normalize_min_max(r: &Raster) -> Raster {
    let (lo, hi) = r
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let (h, w) = r.dims();
    Raster::from_fn(h, w, r.channels(), RangeTag::Unit, |c, y, x| {
        if span > 1e-6 {
            (r.get(c, y, x) - lo) / span
        } else {
            0.0
        }
    })
}

/// `1` where the normalized value exceeds `threshold`.
pub fn binarize(normalized: &Raster, threshold: f32) -> BinaryMask {
    let (h, w) = normalized.dims();
    BinaryMask::from_fn(h, w, |y, x| normalized.get(0, y, x) > threshold)
}
