//! Conditional inputs: edge maps, color maps, palettes, light/shadow masks and
//! region masks, bundled per image as a [`ConditionSet`].

mod light;
mod palette;

pub use light::{binarize, normalize_min_max, HighPassLight, LightEstimator};
pub use palette::{
    band_bounds, partition, rasterize_palette, Orientation, Palette, PaletteEntry, PaletteRow, Rgb,
};

use serde::{Deserialize, Serialize};

use crate::classes::{ClassTable, Component};
use crate::error::{param_err, shape_err, Result};
use crate::imaging::{
    byte_to_unit, gaussian_filter, median_filter_mask, window_percentile_suppress, BinaryMask, RangeTag,
    Raster, SegMask,
};

/// Parameters of the extraction pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub edge_beta: f32,
    pub gaussian_sigma: f64,
    pub gaussian_radius: usize,
    pub suppress_window: usize,
    pub suppress_fraction: f64,
    pub light_threshold: f32,
    pub median_window: usize,
    /// Light-estimator blur sigma is `image_width / light_sigma_divisor`.
    pub light_sigma_divisor: f64,
    pub classes: ClassTable,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            edge_beta: 0.35,
            gaussian_sigma: 1.0,
            gaussian_radius: 2,
            suppress_window: 5,
            suppress_fraction: 0.20,
            light_threshold: 0.15,
            median_window: 7,
            light_sigma_divisor: 16.0,
            classes: ClassTable::default(),
        }
    }
}

/// Every conditional input attached to one portrait.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    pub edge: Raster,
    pub palette: Palette,
    pub color_map: Raster,
    pub light: BinaryMask,
    pub shadow: BinaryMask,
    pub face_mask: BinaryMask,
    pub eye_mask: BinaryMask,
}

impl ConditionSet {
    pub fn dims(&self) -> (usize, usize) {
        self.edge.dims()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        self.edge.ensure_channels(1, "edge map")?;
        self.color_map.ensure_channels(3, "color map")?;
        if self.edge.range() != RangeTag::Unit || self.color_map.range() != RangeTag::Unit {
            return Err(param_err!("condition rasters must be unit range"));
        }
        self.color_map.ensure_dims(dims, "color map")?;
        for (name, m) in [
            ("light", &self.light),
            ("shadow", &self.shadow),
            ("face_mask", &self.face_mask),
            ("eye_mask", &self.eye_mask),
        ] {
            if m.dims() != dims {
                return Err(shape_err!("{name}: expected {dims:?}, got {:?}", m.dims()));
            }
        }
        Ok(())
    }

    pub fn palette_raster(&self) -> Result<Raster> {
        let (h, w) = self.dims();
        rasterize_palette(&self.palette, h, w)
    }
}

/// Source of per-pixel edge probabilities in `[0, 1]`.
pub trait EdgeProbability: Send + Sync {
    fn probability(&self, image: &Raster) -> Result<Raster>;
}

/// Sobel gradient magnitude of the smoothed luminance, scaled by its maximum.
/// A stand-in for a learned edge detector.
#[derive(Debug, Clone, Copy)]
pub struct GradientEdges {
    pub sigma: f64,
}

impl Default for GradientEdges {
    fn default() -> Self {
        GradientEdges { sigma: 0.8 }
    }
}

impl EdgeProbability for GradientEdges {
    fn probability(&self, image: &Raster) -> Result<Raster> {
        let lum = luminance(image);
        let lum = gaussian_filter(&lum, self.sigma, 2)?;
        let (h, w) = lum.dims();
        let at = |y: isize, x: isize| {
            lum.get(
                0,
                crate::imaging::reflect_index(y, h),
                crate::imaging::reflect_index(x, w),
            )
        };
        let mut mag = vec![0f32; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let gx = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)
                    - at(y - 1, x - 1)
                    - 2.0 * at(y, x - 1)
                    - at(y + 1, x - 1);
                let gy = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)
                    - at(y - 1, x - 1)
                    - 2.0 * at(y - 1, x)
                    - at(y - 1, x + 1);
                mag[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
            }
        }
        let max = mag.iter().cloned().fold(0f32, f32::max);
        let scale = if max > 1e-6 { 1.0 / max } else { 0.0 };
        Ok(Raster::from_fn(h, w, 1, RangeTag::Unit, |_, y, x| mag[y * w + x] * scale))
    }
}

/// Mean of the RGB channels in unit range.
pub fn luminance(image: &Raster) -> Raster {
    let img = image.to_unit();
    if img.channels() == 1 {
        return img;
    }
    let (h, w) = img.dims();
    Raster::from_fn(h, w, 1, RangeTag::Unit, |_, y, x| {
        (img.get(0, y, x) + img.get(1, y, x) + img.get(2, y, x)) / 3.0
    })
}

/// Gaussian → zero values below `beta` → windowed bottom-quantile suppression → Gaussian.
pub fn postprocess_edges(prob_map: &Raster, beta: f32) -> Result<Raster> {
    let cfg = ExtractionConfig {
        edge_beta: beta,
        ..ExtractionConfig::default()
    };
    postprocess_edges_with(prob_map, &cfg)
}

pub fn postprocess_edges_with(prob_map: &Raster, cfg: &ExtractionConfig) -> Result<Raster> {
    prob_map.ensure_channels(1, "edge probability map")?;
    if prob_map.range() != RangeTag::Unit {
        return Err(param_err!("edge probability map must be unit range"));
    }
    if !(0.0..=1.0).contains(&cfg.edge_beta) {
        return Err(param_err!("edge threshold beta must lie in [0,1], got {}", cfg.edge_beta));
    }
    let smoothed = gaussian_filter(prob_map, cfg.gaussian_sigma, cfg.gaussian_radius)?;
    let (h, w) = smoothed.dims();
    let thresholded = Raster::from_fn(h, w, 1, RangeTag::Unit, |_, y, x| {
        let v = smoothed.get(0, y, x);
        if v < cfg.edge_beta {
            0.0
        } else {
            v
        }
    });
    let suppressed = window_percentile_suppress(&thresholded, cfg.suppress_window, cfg.suppress_fraction)?;
    gaussian_filter(&suppressed, cfg.gaussian_sigma, cfg.gaussian_radius)
}

fn check_seg(image: &Raster, seg: &SegMask) -> Result<()> {
    image.ensure_channels(3, "portrait")?;
    image.ensure_dims(seg.dims(), "portrait vs segmentation")
}

/// Round-half-up byte mean of a sum over `n` samples.
#[inline]
pub(crate) fn mean_round_half_up(sum: u64, n: u64) -> u8 {
    ((2 * sum + n) / (2 * n)) as u8
}

/// Byte-exact mean color of the pixels selected by `select`; `None` when empty.
pub fn mean_color(image: &Raster, select: impl Fn(usize, usize) -> bool) -> Option<Rgb> {
    let (h, w) = image.dims();
    let mut sums = [0u64; 3];
    let mut n = 0u64;
    for y in 0..h {
        for x in 0..w {
            if select(y, x) {
                let p = image.rgb_bytes(y, x);
                for c in 0..3 {
                    sums[c] += p[c] as u64;
                }
                n += 1;
            }
        }
    }
    (n > 0).then(|| Rgb(sums.map(|s| mean_round_half_up(s, n))))
}

/// Fills each color-map segment with the mean RGB of its pixels.
pub fn extract_color_map(image: &Raster, seg: &SegMask, classes: &ClassTable) -> Result<Raster> {
    check_seg(image, seg)?;
    let mut segment_of = [usize::MAX; crate::imaging::NUM_CLASSES];
    for (i, g) in classes.color_map_segments.iter().enumerate() {
        for &c in &g.classes {
            segment_of[c as usize] = i;
        }
    }
    let n_seg = classes.color_map_segments.len();
    let mut sums = vec![[0u64; 3]; n_seg];
    let mut counts = vec![0u64; n_seg];
    let (h, w) = image.dims();
    for y in 0..h {
        for x in 0..w {
            let s = segment_of[seg.get(y, x) as usize];
            if s == usize::MAX {
                continue;
            }
            let p = image.rgb_bytes(y, x);
            for c in 0..3 {
                sums[s][c] += p[c] as u64;
            }
            counts[s] += 1;
        }
    }
    let means: Vec<[u8; 3]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n == 0 { [0; 3] } else { s.map(|v| mean_round_half_up(v, n)) })
        .collect();
    Ok(Raster::from_fn(h, w, 3, RangeTag::Unit, |c, y, x| {
        let s = segment_of[seg.get(y, x) as usize];
        if s == usize::MAX {
            0.0
        } else {
            byte_to_unit(means[s][c])
        }
    }))
}

/// Average-color palette: one full-width color per row, black when the component is absent.
pub fn extract_palette(image: &Raster, seg: &SegMask, classes: &ClassTable) -> Result<Palette> {
    check_seg(image, seg)?;
    let colors = Component::ALL.map(|row| {
        let members = classes.row_classes(row);
        mean_color(image, |y, x| members.contains(&seg.get(y, x))).unwrap_or(Rgb::BLACK)
    });
    Ok(Palette::solid(colors))
}

/// Component pixels sorted by luminance, ties broken by RGB order.
pub fn sorted_component_colors(image: &Raster, seg: &SegMask, members: &[u8]) -> Vec<Rgb> {
    let (h, w) = image.dims();
    let mut px: Vec<Rgb> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| members.contains(&seg.get(y, x)))
        .map(|(y, x)| Rgb(image.rgb_bytes(y, x)))
        .collect();
    // Luminance is (r+g+b)/3, so ordering by the integer sum is equivalent.
    px.sort_by_key(|p| (p.0.iter().map(|&v| v as u32).sum::<u32>(), *p));
    px
}

/// Index of the `k`-th of `samples` uniform rank positions over `n` sorted items.
pub fn sample_rank(k: usize, samples: usize, n: usize) -> usize {
    if samples == 1 {
        return (n - 1) / 2;
    }
    let (k, s, n) = (k as u64, samples as u64 - 1, n as u64 - 1);
    ((2 * k * n + s) / (2 * s)) as usize
}

/// Palette whose rows hold `strip_width` colors sampled at uniform ranks of the
/// luminance-sorted component pixels.
pub fn extract_distribution_palette(
    image: &Raster,
    seg: &SegMask,
    strip_width: usize,
    classes: &ClassTable,
) -> Result<Palette> {
    check_seg(image, seg)?;
    if strip_width < 1 {
        return Err(param_err!("strip width must be >= 1"));
    }
    let fraction = 1.0 / strip_width as f64;
    let rows = Component::ALL
        .into_iter()
        .map(|row| {
            let sorted = sorted_component_colors(image, seg, classes.row_classes(row));
            let entries = (0..strip_width)
                .map(|k| PaletteEntry {
                    rgb: if sorted.is_empty() {
                        Rgb::BLACK
                    } else {
                        sorted[sample_rank(k, strip_width, sorted.len())]
                    },
                    fraction,
                })
                .collect();
            PaletteRow {
                name: row,
                orientation: Orientation::Horizontal,
                entries,
            }
        })
        .collect();
    normalize_fractions(rows)
}

// Repeated 1/n sums can drift past the 1e-9 tolerance for large n; put the residue in the last entry.
fn normalize_fractions(mut rows: Vec<PaletteRow>) -> Result<Palette> {
    for row in &mut rows {
        let head: f64 = row.entries[..row.entries.len() - 1].iter().map(|e| e.fraction).sum();
        if let Some(last) = row.entries.last_mut() {
            last.fraction = 1.0 - head;
        }
    }
    Palette::from_rows(rows)
}

fn mask_from_light(light: &Raster, cfg: &ExtractionConfig) -> Result<BinaryMask> {
    let normalized = normalize_min_max(light);
    let binary = binarize(&normalized, cfg.light_threshold);
    median_filter_mask(&binary, cfg.median_window)
}

/// Highlight mask: estimate light, min-max normalize, threshold, 7×7 median.
pub fn extract_light_mask(image: &Raster, threshold: f32) -> Result<BinaryMask> {
    let cfg = ExtractionConfig {
        light_threshold: threshold,
        ..ExtractionConfig::default()
    };
    extract_light_mask_with(image, &HighPassLight::from_config(&cfg), &cfg)
}

pub fn extract_light_mask_with(
    image: &Raster,
    estimator: &dyn LightEstimator,
    cfg: &ExtractionConfig,
) -> Result<BinaryMask> {
    image.ensure_channels(3, "portrait")?;
    mask_from_light(&estimator.light_component(image)?, cfg)
}

/// Shadow mask: the light pipeline applied to the inverted image.
pub fn extract_shadow_mask(image: &Raster, threshold: f32) -> Result<BinaryMask> {
    extract_light_mask(&image.invert(), threshold)
}

pub fn extract_shadow_mask_with(
    image: &Raster,
    estimator: &dyn LightEstimator,
    cfg: &ExtractionConfig,
) -> Result<BinaryMask> {
    extract_light_mask_with(&image.invert(), estimator, cfg)
}

/// Face and eye masks from the segmentation.
pub fn region_masks(seg: &SegMask, classes: &ClassTable) -> (BinaryMask, BinaryMask) {
    (seg.union_mask(&classes.face_classes), seg.union_mask(&classes.eye_classes))
}

/// Runs the whole extraction for one portrait.
///
/// The edge map is snapped to the 16-bit grid so that persisted condition
/// sets reload bit-exactly.
pub fn extract_conditions(
    image: &Raster,
    seg: &SegMask,
    edges: &dyn EdgeProbability,
    cfg: &ExtractionConfig,
) -> Result<ConditionSet> {
    check_seg(image, seg)?;
    let image = image.to_unit();
    let prob = edges.probability(&image)?;
    let edge = postprocess_edges_with(&prob, cfg)?.quantize_u16();
    let estimator = HighPassLight::from_config(cfg);
    let (face_mask, eye_mask) = region_masks(seg, &cfg.classes);
    let set = ConditionSet {
        edge,
        palette: extract_palette(&image, seg, &cfg.classes)?,
        color_map: extract_color_map(&image, seg, &cfg.classes)?,
        light: extract_light_mask_with(&image, &estimator, cfg)?,
        shadow: extract_shadow_mask_with(&image, &estimator, cfg)?,
        face_mask,
        eye_mask,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::class;

    fn rgb_image(h: usize, w: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Raster {
        Raster::from_fn(h, w, 3, RangeTag::Unit, |c, y, x| byte_to_unit(f(y, x)[c]))
    }

    #[test]
    fn edges_zero_stays_zero() {
        let out = postprocess_edges(&Raster::zeros(16, 16, 1), 0.35).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn edges_below_beta_vanish() {
        let flat = Raster::filled(16, 16, 1, RangeTag::Unit, 0.30).unwrap();
        let out = postprocess_edges(&flat, 0.35).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn edges_reject_bad_beta() {
        assert!(postprocess_edges(&Raster::zeros(8, 8, 1), 1.5).is_err());
        assert!(postprocess_edges(&Raster::zeros(8, 8, 1), -0.1).is_err());
    }

    #[test]
    fn thick_line_survives_and_speckles_vanish() {
        let prob = Raster::from_fn(32, 32, 1, RangeTag::Unit, |_, y, x| {
            if (14..18).contains(&x) {
                0.9
            } else if (y * 7 + x * 3) % 23 == 0 {
                0.4
            } else {
                0.0
            }
        });
        let out = postprocess_edges(&prob, 0.35).unwrap();
        for y in 0..32 {
            assert!(out.get(0, y, 15) > 0.3, "line lost at row {y}");
            for x in (0..10).chain(22..32) {
                assert_eq!(out.get(0, y, x), 0.0, "speckle at ({y},{x})");
            }
        }
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn color_map_rounds_half_up() {
        let img = rgb_image(1, 2, |_, x| if x == 0 { [0, 0, 0] } else { [255, 255, 255] });
        let seg = SegMask::new(1, 2, vec![class::SKIN, class::SKIN]).unwrap();
        let cm = extract_color_map(&img, &seg, &ClassTable::default()).unwrap();
        assert_eq!(cm.rgb_bytes(0, 0), [128, 128, 128]);
        assert_eq!(cm.rgb_bytes(0, 1), [128, 128, 128]);
    }

    #[test]
    fn color_map_uniform_segment() {
        let img = rgb_image(4, 4, |y, _| if y < 2 { [200, 0, 0] } else { [0, 90, 0] });
        let seg = SegMask::new(4, 4, (0..16).map(|i| if i < 8 { class::HAIR } else { class::BACKGROUND }).collect()).unwrap();
        let cm = extract_color_map(&img, &seg, &ClassTable::default()).unwrap();
        assert_eq!(cm.rgb_bytes(0, 0), [200, 0, 0]);
        assert_eq!(cm.rgb_bytes(3, 3), [0, 90, 0]);
    }

    #[test]
    fn palette_absent_components_are_black() {
        let img = rgb_image(4, 4, |y, x| [(y * 40) as u8, (x * 30) as u8, 7]);
        let seg = SegMask::filled(4, 4, class::BACKGROUND).unwrap();
        let p = extract_palette(&img, &seg, &ClassTable::default()).unwrap();
        for c in [Component::Hair, Component::Skin, Component::Eyes, Component::Lip] {
            assert_eq!(p.row(c).single_color(), Some(Rgb::BLACK));
        }
        let mean = mean_color(&img, |_, _| true).unwrap();
        assert_eq!(p.row(Component::Background).single_color(), Some(mean));
    }

    #[test]
    fn distribution_palette_ranks() {
        // 100 gray pixels with luminance 0..99.
        let img = rgb_image(10, 10, |y, x| {
            let v = (y * 10 + x) as u8;
            [v, v, v]
        });
        let seg = SegMask::filled(10, 10, class::HAIR).unwrap();
        let p = extract_distribution_palette(&img, &seg, 10, &ClassTable::default()).unwrap();
        let got: Vec<u8> = p.row(Component::Hair).entries.iter().map(|e| e.rgb.0[0]).collect();
        assert_eq!(got, vec![0, 11, 22, 33, 44, 55, 66, 77, 88, 99]);
        let one = extract_distribution_palette(&img, &seg, 1, &ClassTable::default()).unwrap();
        assert_eq!(one.row(Component::Hair).entries[0].rgb, Rgb([49, 49, 49]));
        assert_eq!(one.row(Component::Eyes).entries[0].rgb, Rgb::BLACK);
    }

    #[test]
    fn distribution_palette_uniform_component() {
        let img = rgb_image(6, 6, |_, _| [12, 34, 56]);
        let seg = SegMask::filled(6, 6, class::SKIN).unwrap();
        let p = extract_distribution_palette(&img, &seg, 7, &ClassTable::default()).unwrap();
        assert!(p.row(Component::Skin).entries.iter().all(|e| e.rgb == Rgb([12, 34, 56])));
    }

    #[test]
    fn region_masks_follow_table() {
        let labels = vec![class::SKIN, class::L_EYE, class::NOSE, class::BACKGROUND, class::R_EYE, class::HAIR];
        let seg = SegMask::new(2, 3, labels.clone()).unwrap();
        let (face, eye) = region_masks(&seg, &ClassTable::default());
        assert_eq!(face.data(), &[1, 0, 1, 0, 0, 0]);
        assert_eq!(eye.data(), &[0, 1, 0, 0, 1, 0]);
        let no_eyes = SegMask::filled(2, 3, class::SKIN).unwrap();
        assert_eq!(region_masks(&no_eyes, &ClassTable::default()).1.count(), 0);
    }

    #[test]
    fn light_mask_black_and_shadow_white_are_empty() {
        let black = Raster::zeros(32, 32, 3);
        assert_eq!(extract_light_mask(&black, 0.15).unwrap().count(), 0);
        let white = Raster::filled(32, 32, 3, RangeTag::Unit, 1.0).unwrap();
        assert_eq!(extract_shadow_mask(&white, 0.15).unwrap().count(), 0);
    }

    #[test]
    fn light_and_shadow_swap_under_inversion() {
        let img = rgb_image(48, 48, |y, x| {
            let v = ((y * 5 + x * 3) % 97 + if (10..20).contains(&y) && (10..22).contains(&x) { 150 } else { 40 }) as u8;
            [v, v.saturating_sub(20), v / 2]
        });
        let inv = img.invert();
        assert_eq!(extract_light_mask(&img, 0.15).unwrap(), extract_shadow_mask(&inv, 0.15).unwrap());
        assert_eq!(extract_shadow_mask(&img, 0.15).unwrap(), extract_light_mask(&inv, 0.15).unwrap());
    }

    #[test]
    fn isolated_highlight_is_removed_by_median() {
        let img = rgb_image(32, 32, |y, x| if (y, x) == (16, 16) { [255; 3] } else { [60; 3] });
        let pre = binarize(
            &normalize_min_max(&HighPassLight::default().light_component(&img).unwrap()),
            0.15,
        );
        assert!(pre.get(16, 16));
        assert_eq!(extract_light_mask(&img, 0.15).unwrap().count(), 0);
    }
}
