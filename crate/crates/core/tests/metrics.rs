use acgan_core::conditioning::{Palette, Rgb};
use acgan_core::evaluation::*;
use acgan_core::imaging::{BinaryMask, RangeTag, Raster, SegMask};
use acgan_core::classes::Component;
use proptest::prelude::*;

struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 40) as f64 / (1u64 << 24) as f64
    }
}

// structural_similarity(gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1)
const REFERENCE: [f64; 20] = [
    0.9889515538939412,
    0.974604007522719,
    0.9644355339892497,
    0.9357376270417194,
    0.9048788055990387,
    0.8593422760119064,
    0.8351794543702535,
    0.8127077832630727,
    0.7936013945271446,
    0.7051166357576133,
    0.7656061951995439,
    0.5956715970358953,
    0.5138622701695675,
    0.4214697949897439,
    0.5714082470494969,
    0.24805878450323537,
    0.21887939033652173,
    0.10121062853115775,
    0.17784754061804917,
    0.27303925191451744,
];

fn pair(i: usize) -> (Vec<f64>, Vec<f64>, usize, usize) {
    let (h, w) = (11 + (i % 5) * 3, 11 + (i % 7) * 2);
    let mut g = Lcg(1000 + i as u64);
    let a: Vec<f64> = (0..h * w).map(|_| g.next()).collect();
    let mix = 0.1 + 0.04 * i as f64;
    let b = a.iter().map(|&v| (1.0 - mix) * v + mix * g.next()).collect();
    (a, b, h, w)
}

#[test]
fn ssim_matches_reference_implementation() {
    for (i, want) in REFERENCE.iter().enumerate() {
        let (a, b, h, w) = pair(i);
        let got = ssim_planes(&a, &b, h, w).unwrap();
        assert!((got - want).abs() < 1e-6, "pair {i}: {got} vs {want}");
    }
}

#[test]
fn ssim_of_identical_images_is_one() {
    for i in 0..5 {
        let (a, _, h, w) = pair(i);
        assert!((ssim_planes(&a, &a, h, w).unwrap() - 1.0).abs() < 1e-9);
    }
    let img = Raster::from_fn(16, 16, 3, RangeTag::Unit, |c, y, x| ((c + y * x) % 7) as f32 / 7.0);
    assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn ssim_rejects_small_and_mismatched_inputs() {
    let a = Raster::zeros(10, 20, 3);
    assert!(matches!(ssim(&a, &a), Err(acgan_core::Error::UndefinedMetric(_))));
    let b = Raster::zeros(12, 12, 3);
    let c = Raster::zeros(12, 13, 3);
    assert!(ssim(&b, &c).is_err());
}

#[test]
fn luma_uses_bt601_weights() {
    let img = Raster::from_fn(1, 1, 3, RangeTag::Unit, |c, _, _| [1.0, 0.5, 0.25][c]);
    assert!((luma(&img)[0] - (0.299 + 0.587 * 0.5 + 0.114 * 0.25)).abs() < 1e-7);
}

#[test]
fn black_white_distance() {
    let black = Palette::solid([Rgb::BLACK; 5]);
    let white = Palette::solid([Rgb([255, 255, 255]); 5]);
    let d = avg_color_distance(&black, &white, Component::Hair).unwrap();
    assert!((d - 441.673).abs() < 1e-3);
    assert_eq!(avg_color_distance(&black, &black, Component::Lip).unwrap(), 0.0);
}

#[test]
fn kl_of_identical_regions_is_zero() {
    let px: Vec<[u8; 3]> = (0..200u32).map(|i| [(i * 7 % 256) as u8, (i * 13 % 256) as u8, (i % 256) as u8]).collect();
    assert_eq!(color_hist_kl(&px, &px, 64, 1e-8).unwrap(), 0.0);
    let other: Vec<[u8; 3]> = px.iter().map(|p| p.map(|v| v / 2)).collect();
    assert!(color_hist_kl(&px, &other, 64, 1e-8).unwrap() > 0.0);
    assert!(color_hist_kl(&[], &px, 64, 1e-8).is_err());
}

#[test]
fn smoothed_histogram_hand_computed() {
    // Four values into 4 bins: counts [2, 1, 0, 1].
    let h = smoothed_histogram([0u8, 10, 100, 255].into_iter(), 4, 0.01);
    let z = 1.04;
    let want = [(0.5 + 0.01) / z, (0.25 + 0.01) / z, 0.01 / z, (0.25 + 0.01) / z];
    for (g, w) in h.iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
    assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn f1_fixtures() {
    let seg = |labels: &[u8]| SegMask::new(1, labels.len(), labels.to_vec()).unwrap();
    let truth = seg(&[1, 1, 0, 0]);
    assert_eq!(seg_f1(&truth, &truth, 1).unwrap(), 1.0);
    assert_eq!(seg_f1(&seg(&[0, 0, 1, 1]), &truth, 1).unwrap(), 0.0);
    assert_eq!(seg_f1(&seg(&[1, 0, 0, 0]), &seg(&[0, 1, 0, 0]), 1).unwrap(), 0.0);
    assert_eq!(seg_f1(&seg(&[1, 1, 1, 1]), &truth, 1).unwrap(), 2.0 / 3.0);
    assert_eq!(seg_f1(&seg(&[1, 0, 0, 0]), &truth, 1).unwrap(), 2.0 / 3.0);
    assert_eq!(seg_f1(&seg(&[1, 0, 1, 0]), &seg(&[1, 1, 0, 0]), 1).unwrap(), 0.5);
    assert_eq!(seg_f1(&seg(&[0, 0]), &seg(&[0, 0]), 5).unwrap(), 1.0);
}

#[test]
fn region_pixels_follow_mask() {
    let img = Raster::from_fn(2, 2, 3, RangeTag::Unit, |c, y, x| if c == 0 { (y * 2 + x) as f32 / 3.0 } else { 0.0 });
    let mask = BinaryMask::from_fn(2, 2, |y, x| y == x);
    let px = region_pixels(&img, &mask).unwrap();
    assert_eq!(px, vec![[0, 0, 0], [255, 0, 0]]);
}

#[test]
fn seg_f1_report_averages_present_classes() {
    let truth = SegMask::new(1, 4, vec![0, 0, 1, 1]).unwrap();
    let pred = SegMask::new(1, 4, vec![0, 1, 1, 1]).unwrap();
    let t = seg_f1_report(&[(pred, truth)]).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[0].0, "background");
    assert!((t.rows[0].1 - 2.0 / 3.0).abs() < 1e-12);
    assert!((t.rows[1].1 - 0.8).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ssim_is_symmetric_and_bounded(seed in 0u64..1000, h in 11usize..20, w in 11usize..20) {
        let mut g = Lcg(seed);
        let a: Vec<f64> = (0..h * w).map(|_| g.next()).collect();
        let b: Vec<f64> = (0..h * w).map(|_| g.next()).collect();
        let ab = ssim_planes(&a, &b, h, w).unwrap();
        let ba = ssim_planes(&b, &a, h, w).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12 && ab >= -1.0 - 1e-12);
    }

    #[test]
    fn kl_is_non_negative(a in proptest::collection::vec(any::<[u8; 3]>(), 1..50),
                          b in proptest::collection::vec(any::<[u8; 3]>(), 1..50),
                          bins in 1usize..=256) {
        prop_assert!(color_hist_kl(&a, &b, bins, 1e-6).unwrap() >= -1e-12);
    }

    #[test]
    fn rgb_distance_is_a_metric(a in any::<[u8; 3]>(), b in any::<[u8; 3]>(), c in any::<[u8; 3]>()) {
        let (a, b, c) = (Rgb(a), Rgb(b), Rgb(c));
        prop_assert_eq!(rgb_distance(a, b), rgb_distance(b, a));
        prop_assert!(rgb_distance(a, c) <= rgb_distance(a, b) + rgb_distance(b, c) + 1e-9);
    }
}
