//! Procedural portraits with exact segmentation, used as fixtures and for
//! desk-scale demos when no portrait dataset is at hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classes::class;
use crate::imaging::{RangeTag, Raster, SegMask};

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let dy = (y - self.cy) / self.ry;
        let dx = (x - self.cx) / self.rx;
        dy * dy + dx * dx <= 1.0
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], spread: i32) -> [f64; 3] {
    base.map(|c| (c as i32 + rng.random_range(-spread..=spread)).clamp(0, 255) as f64)
}

/// A seeded synthetic portrait of `size×size` pixels and its label map.
pub fn synthetic_portrait(seed: u64, size: usize) -> (Raster, SegMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED);
    let hair_palette = [[40, 28, 20], [120, 80, 40], [200, 170, 90], [20, 20, 25], [150, 50, 30]];
    let skin_palette = [[230, 190, 160], [200, 150, 120], [150, 105, 80], [240, 210, 190]];
    let mut pick = |lo: i32, hi: i32| -> [u8; 3] { std::array::from_fn(|_| rng.random_range(lo..hi) as u8) };
    let bg_base = pick(30, 220);
    let cloth_base = pick(20, 230);
    let bg = jitter(&mut rng, bg_base, 0);
    let cloth = jitter(&mut rng, cloth_base, 0);
    let hair_base = hair_palette[rng.random_range(0..hair_palette.len())];
    let hair = jitter(&mut rng, hair_base, 12);
    let skin_base = skin_palette[rng.random_range(0..skin_palette.len())];
    let skin = jitter(&mut rng, skin_base, 10);
    let eye_base = [[60, 90, 140], [90, 60, 30], [70, 120, 70]][rng.random_range(0..3)];
    let eye = jitter(&mut rng, eye_base, 10);
    let lip = jitter(&mut rng, [180, 70, 80], 25);
    let cx = 0.5 + rng.random_range(-0.04..0.04);
    let cy = 0.47 + rng.random_range(-0.03..0.03);
    let face = Ellipse { cy, cx, ry: rng.random_range(0.25..0.3), rx: rng.random_range(0.19..0.23) };
    let head = Ellipse { cy: cy - 0.05, cx, ry: face.ry + 0.09, rx: face.rx + 0.08 };
    let hair_len = rng.random_range(0.0..0.2);
    let eye_dy = cy - 0.05;
    let eye_dx = face.rx * 0.45;
    let eye_r = (0.035, 0.05);
    let l_eye = Ellipse { cy: eye_dy, cx: cx - eye_dx, ry: eye_r.0, rx: eye_r.1 };
    let r_eye = Ellipse { cy: eye_dy, cx: cx + eye_dx, ry: eye_r.0, rx: eye_r.1 };
    let l_brow = Ellipse { cy: eye_dy - 0.065, cx: cx - eye_dx, ry: 0.015, rx: 0.065 };
    let r_brow = Ellipse { cy: eye_dy - 0.065, cx: cx + eye_dx, ry: 0.015, rx: 0.065 };
    let nose = Ellipse { cy: cy + 0.06, cx, ry: 0.05, rx: 0.025 };
    let mouth_y = cy + 0.155;
    let u_lip = Ellipse { cy: mouth_y - 0.015, cx, ry: 0.018, rx: 0.08 };
    let l_lip = Ellipse { cy: mouth_y + 0.018, cx, ry: 0.022, rx: 0.07 };
    let light_dir: f64 = rng.random_range(-1.0..1.0);
    let highlight = (cy - face.ry * 0.55, cx + light_dir * face.rx * 0.3);
    let strand_freq = rng.random_range(25.0..45.0);

    let n = size as f64;
    let mut labels = vec![class::BACKGROUND; size * size];
    let mut rgb = vec![[0f64; 3]; size * size];
    for py in 0..size {
        for px in 0..size {
            let y = (py as f64 + 0.5) / n;
            let x = (px as f64 + 0.5) / n;
            let (label, mut color) = if l_eye.contains(y, x) {
                (class::L_EYE, eye)
            } else if r_eye.contains(y, x) {
                (class::R_EYE, eye)
            } else if l_brow.contains(y, x) || r_brow.contains(y, x) {
                let id = if x < cx { class::L_BROW } else { class::R_BROW };
                (id, hair.map(|v| v * 0.8))
            } else if u_lip.contains(y, x) {
                (class::U_LIP, lip)
            } else if l_lip.contains(y, x) {
                (class::L_LIP, lip.map(|v| (v * 1.08).min(255.0)))
            } else if nose.contains(y, x) && y > cy {
                (class::NOSE, skin.map(|v| v * 0.93))
            } else if face.contains(y, x) && y > head.cy - head.ry * 0.35 {
                (class::SKIN, skin)
            } else if head.contains(y, x)
                || ((x - cx).abs() < head.rx && y > head.cy && y < head.cy + head.ry + hair_len)
            {
                let strand = 0.85 + 0.15 * (x * strand_freq + (y * 6.0).sin()).sin();
                (class::HAIR, hair.map(|v| v * strand))
            } else if (x - cx).abs() < face.rx * 0.45 && y > cy && y < cy + face.ry + 0.12 {
                (class::NECK, skin.map(|v| v * 0.85))
            } else if y > cy + face.ry + 0.12 && (x - cx).abs() < 0.42 {
                (class::CLOTH, cloth)
            } else {
                (class::BACKGROUND, bg.map(|v| v * (0.9 + 0.1 * y)))
            };
            if matches!(label, class::SKIN | class::NOSE | class::NECK) {
                // Directional shading, a specular spot and a soft cast shadow.
                let shade = 1.0 + 0.12 * light_dir * (x - cx) / face.rx;
                let d2 = ((y - highlight.0) / 0.06).powi(2) + ((x - highlight.1) / 0.08).powi(2);
                let spec = 70.0 * (-d2).exp();
                let shadow_side = if light_dir >= 0.0 { x < cx - face.rx * 0.5 } else { x > cx + face.rx * 0.5 };
                let shadow = if shadow_side && y > cy { 0.7 } else { 1.0 };
                color = color.map(|v| (v * shade * shadow + spec).clamp(0.0, 255.0));
            }
            labels[py * size + px] = label;
            rgb[py * size + px] = color;
        }
    }
    let image = Raster::from_fn(size, size, 3, RangeTag::Unit, |c, y, x| {
        (rgb[y * size + x][c].round() / 255.0) as f32
    });
    let seg = SegMask::new(size, size, labels).expect("synthetic labels are valid");
    (image, seg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_has_all_palette_components() {
        let (a, sa) = synthetic_portrait(5, 64);
        let (b, sb) = synthetic_portrait(5, 64);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        for c in [class::HAIR, class::SKIN, class::L_EYE, class::R_EYE, class::U_LIP, class::BACKGROUND] {
            assert!(sa.labels().contains(&c), "missing class {c}");
        }
        let (c, _) = synthetic_portrait(6, 64);
        assert_ne!(a, c);
    }
}
