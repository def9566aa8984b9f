use crate::classes::Component;
use crate::conditioning::{Palette, Rgb};
use crate::error::{shape_err, Error, Result};
use crate::imaging::{gaussian_kernel, BinaryMask, Raster, SegMask};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// ITU-R BT.601 luma of a unit-range raster; 1-channel input passes through.
pub fn luma(r: &Raster) -> Vec<f64> {
    let u = r.to_unit();
    if u.channels() == 1 {
        return u.data().iter().map(|&v| v as f64).collect();
    }
    let (p0, p1, p2) = (u.plane(0), u.plane(1), u.plane(2));
    (0..p0.len())
        .map(|i| 0.299 * p0[i] as f64 + 0.587 * p1[i] as f64 + 0.114 * p2[i] as f64)
        .collect()
}

/// Separable valid-mode filtering of an `h×w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ho, wo) = (h - n + 1, w - n + 1);
    let mut tmp = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            tmp[y * wo + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (0..n).map(|i| k[i] * tmp[(y + i) * wo + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two luminance planes over every fully-covered 11×11 window.
pub fn ssim_planes(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(shape_err!("ssim planes must both be {h}x{w}"));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::UndefinedMetric(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")));
    }
    let k = gaussian_kernel(SSIM_SIGMA, SSIM_WINDOW / 2)?;
    let f = |p: &[f64]| filter_valid(p, h, w, &k);
    let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let (ma, mb) = (f(a), f(b));
    let (saa, sbb, sab) = (f(&sq(a, a)), f(&sq(b, b)), f(&sq(a, b)));
    let n = ma.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ua, ub) = (ma[i], mb[i]);
            let va = saa[i] - ua * ua;
            let vb = sbb[i] - ub * ub;
            let cov = sab[i] - ua * ub;
            ((2.0 * ua * ub + C1) * (2.0 * cov + C2)) / ((ua * ua + ub * ub + C1) * (va + vb + C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// SSIM on BT.601 luminance at unit range.
pub fn ssim(a: &Raster, b: &Raster) -> Result<f64> {
    b.ensure_dims(a.dims(), "ssim operand")?;
    let (h, w) = a.dims();
    ssim_planes(&luma(a), &luma(b), h, w)
}

/// Euclidean distance in byte RGB between two single-color palette rows.
pub fn avg_color_distance(a: &Palette, b: &Palette, row: Component) -> Result<f64> {
    let single = |p: &Palette| -> Result<Rgb> {
        let r = p.row(row);
        match r.entries.as_slice() {
            [e] => Ok(e.rgb),
            _ => Err(Error::Contract(format!("{row} row has {} entries; average it first", r.entries.len()))),
        }
    };
    Ok(rgb_distance(single(a)?, single(b)?))
}

pub fn rgb_distance(a: Rgb, b: Rgb) -> f64 {
    a.0.iter()
        .zip(b.0)
        .map(|(&x, y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Byte RGB values of the pixels selected by `mask`.
pub fn region_pixels(image: &Raster, mask: &BinaryMask) -> Result<Vec<[u8; 3]>> {
    image.ensure_channels(3, "image")?;
    if image.dims() != mask.dims() {
        return Err(shape_err!("mask {:?} vs image {:?}", mask.dims(), image.dims()));
    }
    let (h, w) = image.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                out.push(image.rgb_bytes(y, x));
            }
        }
    }
    Ok(out)
}

/// Smoothed per-channel histogram: `(count/N + ε) / (1 + bins·ε)`.
pub fn smoothed_histogram(values: impl Iterator<Item = u8>, bins: usize, eps: f64) -> Vec<f64> {
    let mut h = vec![0usize; bins];
    let mut n = 0usize;
    for v in values {
        h[v as usize * bins / 256] += 1;
        n += 1;
    }
    let z = 1.0 + bins as f64 * eps;
    h.into_iter().map(|c| (c as f64 / n as f64 + eps) / z).collect()
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (p / q).ln()).sum()
}

/// `KL(A‖B)` of smoothed RGB histograms, averaged over the three channels.
pub fn color_hist_kl(a: &[[u8; 3]], b: &[[u8; 3]], bins: usize, eps: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedMetric("color histogram of an empty region".into()));
    }
    if bins == 0 || bins > 256 {
        return Err(Error::Param(format!("bins must be in 1..=256, got {bins}")));
    }
    let total: f64 = (0..3)
        .map(|c| {
            let p = smoothed_histogram(a.iter().map(|px| px[c]), bins, eps);
            let q = smoothed_histogram(b.iter().map(|px| px[c]), bins, eps);
            kl_divergence(&p, &q)
        })
        .sum();
    Ok(total / 3.0)
}

/// F1 of one class; two empty sets score 1.
pub fn seg_f1(pred: &SegMask, truth: &SegMask, class: u8) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(shape_err!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims()));
    }
    let (mut tp, mut np, mut nt) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        let (p, t) = (p == class, t == class);
        tp += (p && t) as usize;
        np += p as usize;
        nt += t as usize;
    }
    if np + nt == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (np + nt) as f64)
}
