use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{color_hist_kl, region_pixels, rgb_distance, seg_f1, ssim};
use crate::classes::{ClassTable, Component, CLASS_NAMES};
use crate::conditioning::{extract_palette, ConditionSet};
use crate::editing::generate;
use crate::error::{Error, Result};
use crate::imaging::{Raster, SegMask};
use crate::net::NetBundle;
use crate::noising::{apply_method, sample_rng, NoiseConfig, NoiseMethod};

/// A held-out portrait with its ground-truth segmentation and conditions.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub image: Raster,
    pub seg: SegMask,
    pub cond: ConditionSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub bins: usize,
    pub eps: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig { bins: 64, eps: 1e-8 }
    }
}

/// Per-model rows of one component-wise metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTable {
    pub models: Vec<String>,
    /// `values[model][component]`, averaged over items where defined; NaN when never defined.
    pub values: Vec<[f64; 5]>,
    pub counts: Vec<[usize; 5]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorAblation {
    pub distance: ComponentTable,
    pub kl: ComponentTable,
    /// `(item, palette source)` pairs.
    pub assignments: Vec<(String, String)>,
    pub skipped: usize,
}

fn mean_table(models: Vec<String>, sums: Vec<[f64; 5]>, counts: Vec<[usize; 5]>) -> ComponentTable {
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| std::array::from_fn(|k| if c[k] == 0 { f64::NAN } else { s[k] / c[k] as f64 }))
        .collect();
    ComponentTable { models, values, counts }
}

/// Seeded palette donor for every item, never the item itself.
pub fn palette_assignment(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Param("color ablation needs at least 2 items".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let j = rng.random_range(0..n - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        })
        .collect())
}

/// Generates every item under a randomly drawn donor palette and compares the
/// palette re-extracted from the output against the requested one.
pub fn run_color_ablation(
    models: &[(&str, &NetBundle)],
    items: &[EvalItem],
    seed: u64,
    hist: HistogramConfig,
    classes: &ClassTable,
) -> Result<ColorAblation> {
    let donors = palette_assignment(items.len(), seed)?;
    let m = models.len();
    let (mut dsum, mut dcnt) = (vec![[0.0; 5]; m], vec![[0usize; 5]; m]);
    let (mut ksum, mut kcnt) = (vec![[0.0; 5]; m], vec![[0usize; 5]; m]);
    let mut skipped = 0;
    for (item, &d) in items.iter().zip(&donors) {
        let donor = &items[d];
        if item.seg.dims() != item.image.dims() {
            skipped += 1;
            continue;
        }
        let mut cond = item.cond.clone();
        cond.palette = donor.cond.palette.clone();
        for (mi, (_, bundle)) in models.iter().enumerate() {
            let out = generate(bundle, &cond)?;
            let produced = extract_palette(&out, &item.seg, classes)?;
            for comp in Component::ALL {
                let k = comp.index();
                let members = classes.row_classes(comp);
                let region = region_pixels(&out, &item.seg.union_mask(members))?;
                if region.is_empty() {
                    continue;
                }
                if let (Some(a), Some(b)) = (produced.row(comp).single_color(), cond.palette.row(comp).single_color()) {
                    dsum[mi][k] += rgb_distance(a, b);
                    dcnt[mi][k] += 1;
                }
                let reference = region_pixels(&donor.image, &donor.seg.union_mask(members))?;
                if !reference.is_empty() {
                    ksum[mi][k] += color_hist_kl(&region, &reference, hist.bins, hist.eps)?;
                    kcnt[mi][k] += 1;
                }
            }
        }
    }
    let names: Vec<String> = models.iter().map(|(n, _)| n.to_string()).collect();
    Ok(ColorAblation {
        distance: mean_table(names.clone(), dsum, dcnt),
        kl: mean_table(names, ksum, kcnt),
        assignments: items.iter().zip(&donors).map(|(i, &d)| (i.id.clone(), items[d].id.clone())).collect(),
        skipped,
    })
}

pub const REGIMES: [NoiseMethod; 4] = [
    NoiseMethod::Identity,
    NoiseMethod::RandomRemoval,
    NoiseMethod::RandomShift,
    NoiseMethod::RandomLines,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAblation {
    pub models: Vec<String>,
    /// `ssim[model][regime]` in [`REGIMES`] order.
    pub ssim: Vec<[f64; 4]>,
    /// SHA-256 of every noisy edge map, `[item][regime]`.
    pub noise_hashes: Vec<[String; 4]>,
}

pub fn edge_hash(edge: &Raster) -> String {
    hex::encode(Sha256::digest(edge.to_raw_bytes()))
}

/// One noisy edge map per item and regime, drawn once and shared by every model.
pub fn shared_noisy_edges(items: &[EvalItem], noise: &NoiseConfig, seed: u64) -> Result<Vec<[Raster; 4]>> {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let mut out = Vec::with_capacity(4);
            for (r, method) in REGIMES.iter().enumerate() {
                let mut rng = sample_rng(seed, i as u64, r as u64);
                out.push(apply_method(*method, &item.cond.edge, noise, &mut rng)?);
            }
            Ok(out.try_into().expect("four regimes"))
        })
        .collect()
}

/// Mean SSIM between original and generated portraits under each edge regime.
pub fn run_edge_robustness_ablation(
    models: &[(&str, &NetBundle)],
    items: &[EvalItem],
    noise: &NoiseConfig,
    seed: u64,
) -> Result<EdgeAblation> {
    if items.is_empty() {
        return Err(Error::Param("edge ablation needs at least one item".into()));
    }
    let edges = shared_noisy_edges(items, noise, seed)?;
    let hashes: Vec<[String; 4]> = edges.iter().map(|e| std::array::from_fn(|r| edge_hash(&e[r]))).collect();
    let mut ssim_sum = vec![[0.0; 4]; models.len()];
    for (mi, (name, bundle)) in models.iter().enumerate() {
        for (i, item) in items.iter().enumerate() {
            for r in 0..4 {
                let mut cond = item.cond.clone();
                cond.edge = edges[i][r].clone();
                if edge_hash(&cond.edge) != hashes[i][r] {
                    return Err(Error::Contract(format!("{name}: noisy edge for item {} diverged", item.id)));
                }
                ssim_sum[mi][r] += ssim(&item.image, &generate(bundle, &cond)?)?;
            }
        }
    }
    let n = items.len() as f64;
    Ok(EdgeAblation {
        models: models.iter().map(|(n, _)| n.to_string()).collect(),
        ssim: ssim_sum.into_iter().map(|s| s.map(|v| v / n)).collect(),
        noise_hashes: hashes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Table {
    /// `(class name, mean F1, items counted)` for classes present in any prediction or truth.
    pub rows: Vec<(String, f64, usize)>,
    pub mean: f64,
}

/// Per-class F1 averaged over items where the class occurs in prediction or truth.
pub fn seg_f1_report(pairs: &[(SegMask, SegMask)]) -> Result<F1Table> {
    let mut rows = Vec::new();
    for (class, name) in CLASS_NAMES.iter().enumerate() {
        let class = class as u8;
        let mut sum = 0.0;
        let mut n = 0;
        for (pred, truth) in pairs {
            if pred.labels().contains(&class) || truth.labels().contains(&class) {
                sum += seg_f1(pred, truth, class)?;
                n += 1;
            }
        }
        if n > 0 {
            rows.push((name.to_string(), sum / n as f64, n));
        }
    }
    if rows.is_empty() {
        return Err(Error::UndefinedMetric("no classes to score".into()));
    }
    let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    Ok(F1Table { rows, mean })
}
