use acgan_core::classes::{class, ClassTable, Component};
use acgan_core::conditioning::{
    extract_conditions, extract_distribution_palette, extract_palette, postprocess_edges,
    ExtractionConfig, GradientEdges, Rgb,
};
use acgan_core::dataset::{load_conditions, load_dataset, save_conditions, write_record};
use acgan_core::imaging::{
    gaussian_filter, median_filter_mask, window_percentile_suppress, BinaryMask, RangeTag, Raster, SegMask,
};
use acgan_core::noising::{apply_method, sample_rng, NoiseConfig, NoiseMethod};
use acgan_core::objectives::{bce_with_logits, gan_loss_disc_logits, gan_loss_gen_logits};
use acgan_core::synth::synthetic_portrait;
use candle_core::{Device, Tensor};
use proptest::prelude::*;

fn gray(h: usize, w: usize, values: &[f32]) -> Raster {
    Raster::new(h, w, 1, RangeTag::Unit, values.to_vec()).unwrap()
}

fn unit_map() -> impl Strategy<Value = Raster> {
    (4usize..20, 4usize..20).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.0f32..=1.0, h * w).prop_map(move |v| gray(h, w, &v))
    })
}

fn binary_mask() -> impl Strategy<Value = BinaryMask> {
    (4usize..20, 4usize..20).prop_flat_map(|(h, w)| {
        prop::collection::vec(0u8..=1, h * w).prop_map(move |v| BinaryMask::new(h, w, v).unwrap())
    })
}

/// A random label map over a few palette classes plus a random byte image.
fn labelled_image() -> impl Strategy<Value = (Raster, SegMask)> {
    let labels = [class::BACKGROUND, class::HAIR, class::SKIN, class::L_EYE, class::R_EYE, class::U_LIP, class::NOSE];
    (3usize..14, 3usize..14).prop_flat_map(move |(h, w)| {
        (
            prop::collection::vec(0u8..=255, h * w * 3),
            prop::collection::vec(prop::sample::select(labels.to_vec()), h * w),
        )
            .prop_map(move |(px, lab)| {
                let image = Raster::from_fn(h, w, 3, RangeTag::Unit, |c, y, x| px[(y * w + x) * 3 + c] as f32 / 255.0);
                (image, SegMask::new(h, w, lab).unwrap())
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn gaussian_keeps_constants(h in 3usize..16, w in 3usize..16, c in 0.0f32..=1.0, sigma in 0.3f64..3.0, r in 1usize..4) {
        let out = gaussian_filter(&gray(h, w, &vec![c; h * w]), sigma, r).unwrap();
        prop_assert!(out.data().iter().all(|&v| (v - c).abs() < 1e-5));
    }

    #[test]
    fn gaussian_preserves_mass_away_from_borders(vals in prop::collection::vec(0.0f32..=1.0, 16), sigma in 0.3f64..2.0, r in 1usize..3) {
        // A 4×4 block at least `r` pixels from every border of a 12×12 image.
        let (h, w) = (12, 12);
        let img = Raster::from_fn(h, w, 1, RangeTag::Unit, |_, y, x| {
            if (4..8).contains(&y) && (4..8).contains(&x) { vals[(y - 4) * 4 + x - 4] } else { 0.0 }
        });
        let out = gaussian_filter(&img, sigma, r).unwrap();
        let before: f64 = img.data().iter().map(|&v| v as f64).sum();
        let after: f64 = out.data().iter().map(|&v| v as f64).sum();
        prop_assert!((before - after).abs() < 1e-4, "{before} vs {after}");
    }

    #[test]
    fn suppression_never_increases(img in unit_map(), frac in 0.05f64..0.95) {
        let out = window_percentile_suppress(&img, 5, frac).unwrap();
        prop_assert!(out.data().iter().zip(img.data()).all(|(o, i)| o <= i));
        prop_assert!(out.data().iter().zip(img.data()).all(|(o, i)| *o == 0.0 || o == i));
    }

    #[test]
    fn median_output_is_binary_and_roots_are_fixed(m in binary_mask()) {
        let once = median_filter_mask(&m, 7).unwrap();
        prop_assert!(once.data().iter().all(|&v| v <= 1));
        // Iterating converges to a root, which the filter leaves unchanged.
        let mut root = once;
        for _ in 0..64 {
            let next = median_filter_mask(&root, 7).unwrap();
            if next == root { break; }
            root = next;
        }
        prop_assert_eq!(median_filter_mask(&root, 7).unwrap(), root);
    }

    #[test]
    fn postprocess_never_amplifies_beyond_double_smoothing(img in unit_map(), beta in 0.0f32..0.6) {
        let out = postprocess_edges(&img, beta).unwrap();
        let cfg = ExtractionConfig::default();
        let g = gaussian_filter(&img, cfg.gaussian_sigma, cfg.gaussian_radius).unwrap();
        let gg = gaussian_filter(&g, cfg.gaussian_sigma, cfg.gaussian_radius).unwrap();
        prop_assert!(out.data().iter().zip(gg.data()).all(|(o, b)| *o <= b + 1e-6));
        prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn palette_rows_equal_brute_force_means((image, seg) in labelled_image()) {
        let classes = ClassTable::default();
        let palette = extract_palette(&image, &seg, &classes).unwrap();
        for row in Component::ALL {
            let members = classes.row_classes(row);
            let (mut sum, mut n) = ([0u64; 3], 0u64);
            for y in 0..seg.height() {
                for x in 0..seg.width() {
                    if members.contains(&seg.get(y, x)) {
                        let p = image.rgb_bytes(y, x);
                        for c in 0..3 { sum[c] += p[c] as u64; }
                        n += 1;
                    }
                }
            }
            let expected = if n == 0 {
                [0, 0, 0]
            } else {
                sum.map(|s| (s as f64 / n as f64 + 0.5).floor() as u8)
            };
            prop_assert_eq!(palette.row(row).single_color(), Some(Rgb(expected)), "row {}", row);
        }
    }

    #[test]
    fn full_width_distribution_palette_is_the_sorted_multiset((image, seg) in labelled_image()) {
        let classes = ClassTable::default();
        for row in Component::ALL {
            let members = classes.row_classes(row);
            let mut pixels: Vec<Rgb> = Vec::new();
            for y in 0..seg.height() {
                for x in 0..seg.width() {
                    if members.contains(&seg.get(y, x)) {
                        pixels.push(Rgb(image.rgb_bytes(y, x)));
                    }
                }
            }
            if pixels.is_empty() { continue; }
            let p = extract_distribution_palette(&image, &seg, pixels.len(), &classes).unwrap();
            let got: Vec<Rgb> = p.row(row).entries.iter().map(|e| e.rgb).collect();
            prop_assert!(got.windows(2).all(|w| w[0].luminance() <= w[1].luminance()));
            let mut got_sorted = got;
            got_sorted.sort();
            pixels.sort();
            prop_assert_eq!(got_sorted, pixels);
        }
    }

    #[test]
    fn noising_preserves_dims_range_and_order(img in unit_map(), seed in 0u64..1000, m in 0usize..4) {
        let cfg = NoiseConfig::default();
        let method = NoiseMethod::ALL[m];
        let out = apply_method(method, &img, &cfg, &mut sample_rng(seed, 0, 0)).unwrap();
        prop_assert_eq!(out.dims(), img.dims());
        prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        match method {
            NoiseMethod::RandomRemoval => prop_assert!(out.data().iter().zip(img.data()).all(|(o, i)| o <= i)),
            NoiseMethod::RandomLines => prop_assert!(out.data().iter().zip(img.data()).all(|(o, i)| o >= i)),
            NoiseMethod::Identity => prop_assert_eq!(&out, &img),
            NoiseMethod::RandomShift => {}
        }
    }

    #[test]
    fn gan_losses_are_finite_and_non_negative(real in prop::collection::vec(-60.0f32..60.0, 8), fake in prop::collection::vec(-60.0f32..60.0, 8)) {
        let t = |v: &[f32]| Tensor::from_vec(v.to_vec(), (2, 1, 2, 2), &Device::Cpu).unwrap();
        let (r, f) = (t(&real), t(&fake));
        for loss in [
            gan_loss_disc_logits(&[&r], &[&f]).unwrap(),
            gan_loss_gen_logits(&[&f]).unwrap(),
            bce_with_logits(&r, 1.0).unwrap(),
        ] {
            let v = loss.to_scalar::<f32>().unwrap();
            prop_assert!(v.is_finite() && v >= 0.0, "{v}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn condition_sets_are_consistent_and_reload_exactly(seed in 0u64..500) {
        let (image, seg) = synthetic_portrait(seed, 24);
        let cond = extract_conditions(&image, &seg, &GradientEdges::default(), &ExtractionConfig::default()).unwrap();
        let dims = cond.dims();
        for m in [&cond.light, &cond.shadow, &cond.face_mask, &cond.eye_mask] {
            prop_assert_eq!(m.dims(), dims);
            prop_assert!(m.data().iter().all(|&v| v <= 1));
        }
        prop_assert_eq!(cond.color_map.dims(), dims);
        let dir = tempfile::tempdir().unwrap();
        save_conditions(dir.path(), &cond).unwrap();
        prop_assert_eq!(load_conditions(dir.path()).unwrap(), cond);
    }
}

#[test]
fn ingestion_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..3 {
        let (image, seg) = synthetic_portrait(seed, 20);
        write_record(dir.path(), &format!("p{seed}"), &image, &seg).unwrap();
    }
    let table = ClassTable::default();
    let a = load_dataset(dir.path(), 16, &table).unwrap();
    let b = load_dataset(dir.path(), 16, &table).unwrap();
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.image_id, y.image_id);
        assert_eq!(x.image, y.image);
        assert_eq!(x.seg, y.seg);
    }
}

/// A single 7×7 median pass is not idempotent in general; the filter only
/// reaches a fixed point after iteration.
#[test]
fn one_median_pass_is_not_always_a_fixed_point() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let moved = (0..100)
        .filter(|_| {
            let m = BinaryMask::from_fn(16, 16, |_, _| rng.random_bool(0.5));
            let once = median_filter_mask(&m, 7).unwrap();
            median_filter_mask(&once, 7).unwrap() != once
        })
        .count();
    assert!(moved > 0);
}
