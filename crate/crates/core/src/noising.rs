//! Training-time edge-map corruption: random removal, random shift, random
//! lines, and identity, picked per sample.

use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::imaging::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMethod {
    RandomRemoval,
    RandomShift,
    RandomLines,
    Identity,
}

impl NoiseMethod {
    /// Order matching [`NoiseConfig::method_weights`].
    pub const ALL: [NoiseMethod; 4] = [
        NoiseMethod::RandomRemoval,
        NoiseMethod::RandomShift,
        NoiseMethod::RandomLines,
        NoiseMethod::Identity,
    ];

    /// Short regime label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            NoiseMethod::Identity => "O",
            NoiseMethod::RandomRemoval => "RR",
            NoiseMethod::RandomShift => "RS",
            NoiseMethod::RandomLines => "RL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Maximum rectangle size as a fraction of each image dimension.
    pub alpha: f64,
    pub seed: u64,
    /// Selection weights for removal, shift, lines, identity.
    pub method_weights: [f64; 4],
    /// When false, training feeds clean edges to the generator.
    pub enabled: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            alpha: 0.33,
            seed: 0,
            method_weights: [0.25; 4],
            enabled: true,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(param_err!("noise alpha must lie in (0,1), got {}", self.alpha));
        }
        if self.method_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(param_err!("noise method weights must be non-negative"));
        }
        let sum: f64 = self.method_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(param_err!("noise method weights must sum to 1, got {sum}"));
        }
        Ok(())
    }
}

/// Per-sample generator stream derived from `(seed, step, index)`.
pub fn sample_rng(seed: u64, step: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_mul(1 << 20).wrapping_add(index));
    rng
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Largest integer strictly below `alpha * len` (at least 1).
pub fn max_extent(alpha: f64, len: usize) -> usize {
    let limit = alpha * len as f64;
    ((limit - 1e-9).ceil() as usize).saturating_sub(1).max(1).min(len)
}

/// Rectangle with sides drawn from `[1, ceil(alpha*len) - 1]`, placed uniformly inside the image.
pub fn sample_rect(h: usize, w: usize, alpha: f64, rng: &mut impl Rng) -> Rect {
    let height = rng.random_range(1..=max_extent(alpha, h));
    let width = rng.random_range(1..=max_extent(alpha, w));
    Rect {
        top: rng.random_range(0..=h - height),
        left: rng.random_range(0..=w - width),
        height,
        width,
    }
}

/// Destination of the same size, placed uniformly inside the image.
fn sample_destination(h: usize, w: usize, src: Rect, rng: &mut impl Rng) -> Rect {
    Rect {
        top: rng.random_range(0..=h - src.height),
        left: rng.random_range(0..=w - src.width),
        ..src
    }
}

fn check_edge(edge: &Raster) -> Result<()> {
    edge.ensure_channels(1, "edge map")?;
    if edge.range() != crate::imaging::RangeTag::Unit {
        return Err(param_err!("edge map must be unit range"));
    }
    Ok(())
}

fn copy_rect(edge: &Raster, r: Rect) -> Vec<f32> {
    let mut buf = Vec::with_capacity(r.height * r.width);
    for y in r.top..r.top + r.height {
        for x in r.left..r.left + r.width {
            buf.push(edge.get(0, y, x));
        }
    }
    buf
}

pub fn remove_rect(edge: &Raster, r: Rect) -> Raster {
    let mut out = edge.clone();
    for y in r.top..r.top + r.height {
        for x in r.left..r.left + r.width {
            out.set(0, y, x, 0.0);
        }
    }
    out
}

/// Moves the contents of `src` to `dst`: buffered copy, clear source, overwrite destination.
pub fn shift_rect(edge: &Raster, src: Rect, dst: Rect) -> Raster {
    let buf = copy_rect(edge, src);
    let mut out = remove_rect(edge, src);
    for (i, v) in buf.into_iter().enumerate() {
        out.set(0, dst.top + i / src.width, dst.left + i % src.width, v);
    }
    out
}

/// Copies the contents of `src` onto `dst` with a pointwise max; the source is kept.
pub fn overlay_rect(edge: &Raster, src: Rect, dst: Rect) -> Raster {
    let buf = copy_rect(edge, src);
    let mut out = edge.clone();
    for (i, v) in buf.into_iter().enumerate() {
        let (y, x) = (dst.top + i / src.width, dst.left + i % src.width);
        out.set(0, y, x, out.get(0, y, x).max(v));
    }
    out
}

pub fn noise_random_removal(edge: &Raster, cfg: &NoiseConfig, rng: &mut impl Rng) -> Result<Raster> {
    check_edge(edge)?;
    let (h, w) = edge.dims();
    Ok(remove_rect(edge, sample_rect(h, w, cfg.alpha, rng)))
}

pub fn noise_random_shift(edge: &Raster, cfg: &NoiseConfig, rng: &mut impl Rng) -> Result<Raster> {
    check_edge(edge)?;
    let (h, w) = edge.dims();
    let src = sample_rect(h, w, cfg.alpha, rng);
    let dst = sample_destination(h, w, src, rng);
    Ok(shift_rect(edge, src, dst))
}

pub fn noise_random_lines(edge: &Raster, cfg: &NoiseConfig, rng: &mut impl Rng) -> Result<Raster> {
    check_edge(edge)?;
    let (h, w) = edge.dims();
    let src = sample_rect(h, w, cfg.alpha, rng);
    let dst = sample_destination(h, w, src, rng);
    Ok(overlay_rect(edge, src, dst))
}

pub fn apply_method(method: NoiseMethod, edge: &Raster, cfg: &NoiseConfig, rng: &mut impl Rng) -> Result<Raster> {
    match method {
        NoiseMethod::RandomRemoval => noise_random_removal(edge, cfg, rng),
        NoiseMethod::RandomShift => noise_random_shift(edge, cfg, rng),
        NoiseMethod::RandomLines => noise_random_lines(edge, cfg, rng),
        NoiseMethod::Identity => {
            check_edge(edge)?;
            Ok(edge.clone())
        }
    }
}

pub fn choose_method(cfg: &NoiseConfig, rng: &mut impl Rng) -> Result<NoiseMethod> {
    let dist = WeightedIndex::new(cfg.method_weights).map_err(|e| param_err!("noise weights: {e}"))?;
    Ok(NoiseMethod::ALL[dist.sample(rng)])
}

/// Picks a method per `cfg.method_weights` and applies it.
pub fn sample_noising(edge: &Raster, cfg: &NoiseConfig, rng: &mut impl Rng) -> Result<(NoiseMethod, Raster)> {
    cfg.validate()?;
    let method = choose_method(cfg, rng)?;
    Ok((method, apply_method(method, edge, cfg, rng)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::RangeTag;

    fn line_edge(h: usize, w: usize, col: usize) -> Raster {
        Raster::from_fn(h, w, 1, RangeTag::Unit, |_, _, x| (x == col) as u8 as f32)
    }

    #[test]
    fn extent_is_strictly_below_alpha_fraction() {
        assert_eq!(max_extent(0.33, 300), 98);
        assert!((max_extent(0.33, 64) as f64) < 0.33 * 64.0);
        assert_eq!(max_extent(0.33, 64), 21);
        assert_eq!(max_extent(0.5, 10), 4);
    }

    #[test]
    fn removal_on_zero_map_is_noop() {
        let z = Raster::zeros(32, 32, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(noise_random_removal(&z, &NoiseConfig::default(), &mut rng).unwrap(), z);
        assert_eq!(noise_random_shift(&z, &NoiseConfig::default(), &mut rng).unwrap(), z);
    }

    #[test]
    fn zero_displacement_shift_is_identity() {
        let e = line_edge(16, 16, 5);
        let r = Rect { top: 2, left: 3, height: 6, width: 4 };
        assert_eq!(shift_rect(&e, r, r), e);
    }

    #[test]
    fn shifted_line_moves() {
        let e = line_edge(16, 16, 5);
        let src = Rect { top: 0, left: 4, height: 16, width: 3 };
        let dst = Rect { left: 10, ..src };
        let out = shift_rect(&e, src, dst);
        for y in 0..16 {
            assert_eq!(out.get(0, y, 5), 0.0);
            assert_eq!(out.get(0, y, 11), 1.0);
        }
        assert_eq!(out.data().iter().filter(|&&v| v > 0.0).count(), 16);
    }

    #[test]
    fn overlapping_shift_uses_buffered_copy() {
        let e = Raster::from_fn(1, 6, 1, RangeTag::Unit, |_, _, x| x as f32 / 10.0);
        let src = Rect { top: 0, left: 1, height: 1, width: 3 };
        let dst = Rect { left: 2, ..src };
        let out = shift_rect(&e, src, dst);
        let expect = [0.0, 0.0, 0.1, 0.2, 0.3, 0.5];
        for (x, v) in expect.iter().enumerate() {
            assert!((out.get(0, 0, x) - v).abs() < 1e-7);
        }
    }

    #[test]
    fn lines_union_with_existing() {
        let e = Raster::from_fn(8, 8, 1, RangeTag::Unit, |_, _, x| if x == 1 { 0.8 } else if x == 6 { 0.5 } else { 0.0 });
        let src = Rect { top: 0, left: 0, height: 8, width: 3 };
        let dst = Rect { left: 5, ..src };
        let out = overlay_rect(&e, src, dst);
        for y in 0..8 {
            assert_eq!(out.get(0, y, 1), 0.8);
            assert_eq!(out.get(0, y, 6), 0.8);
            for x in 0..8 {
                assert_eq!(out.get(0, y, x), e.get(0, y, x).max(if x >= 5 { e.get(0, y, x - 5) } else { 0.0 }));
            }
        }
        let zero_src = Rect { top: 0, left: 2, height: 8, width: 3 };
        let blank = Raster::from_fn(8, 8, 1, RangeTag::Unit, |_, _, x| if x == 7 { 1.0 } else { 0.0 });
        assert_eq!(overlay_rect(&blank, zero_src, Rect { left: 0, ..zero_src }), blank);
    }

    #[test]
    fn identity_returns_input_and_weights_validate() {
        let e = line_edge(8, 8, 3);
        let cfg = NoiseConfig { method_weights: [0.0, 0.0, 0.0, 1.0], ..NoiseConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (m, out) = sample_noising(&e, &cfg, &mut rng).unwrap();
        assert_eq!(m, NoiseMethod::Identity);
        assert_eq!(out, e);
        let bad = NoiseConfig { method_weights: [0.5; 4], ..NoiseConfig::default() };
        assert!(sample_noising(&e, &bad, &mut rng).is_err());
        let bad_alpha = NoiseConfig { alpha: 1.0, ..NoiseConfig::default() };
        assert!(bad_alpha.validate().is_err());
    }

    #[test]
    fn sample_streams_are_distinct_and_repeatable() {
        let a: u64 = sample_rng(1, 2, 3).random();
        let b: u64 = sample_rng(1, 2, 3).random();
        let c: u64 = sample_rng(1, 2, 4).random();
        let d: u64 = sample_rng(1, 3, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
