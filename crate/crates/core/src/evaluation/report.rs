use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablation::{ColorAblation, ComponentTable, EdgeAblation, F1Table, REGIMES};
use crate::classes::Component;
use crate::error::{Error, Result};

/// Published full-scale numbers, carried for comparison only.
pub mod reference {
    /// Average color distance (byte RGB) per component, hair to background.
    pub const COLOR_DISTANCE_CGAN: [f64; 5] = [41.92, 41.24, 50.22, 50.12, 42.71];
    pub const COLOR_DISTANCE_ACGAN: [f64; 5] = [41.20, 41.72, 49.94, 47.88, 40.44];
    /// Color histogram KL per component, hair to background.
    pub const COLOR_KL_CGAN: [f64; 5] = [1.1103, 0.7294, 0.5773, 0.8494, 2.3353];
    pub const COLOR_KL_ACGAN: [f64; 5] = [1.0933, 0.7309, 0.5763, 0.8711, 2.3039];
    /// SSIM under the O, RR, RS and RL edge regimes.
    pub const SSIM_OEDGE: [f64; 4] = [0.5930, 0.5751, 0.5895, 0.5875];
    pub const SSIM_CGAN: [f64; 4] = [0.5974, 0.5857, 0.5939, 0.5939];
    pub const SSIM_ACGAN: [f64; 4] = [0.6006, 0.5896, 0.5973, 0.5974];
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub metadata: BTreeMap<String, String>,
    pub color: Option<ColorAblation>,
    pub edge: Option<EdgeAblation>,
    pub f1: Option<F1Table>,
}

fn fmt(v: f64, digits: usize) -> String {
    if v.is_nan() {
        "n/a".to_string()
    } else {
        format!("{v:.digits$}")
    }
}

fn component_csv(t: &ComponentTable) -> String {
    let mut s = String::from("model");
    for c in Component::ALL {
        write!(s, ",{c}").unwrap();
    }
    s.push('\n');
    for (m, row) in t.models.iter().zip(&t.values) {
        s.push_str(m);
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

const COLUMN_LABELS: [&str; 5] = ["Hair", "Skin", "Eyes", "Lip", "BG."];

fn component_text(out: &mut String, title: &str, t: &ComponentTable, digits: usize) {
    let width = t.models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
    writeln!(out, "{title}").unwrap();
    write!(out, "{:width$}", "").unwrap();
    for label in COLUMN_LABELS {
        write!(out, " {label:>10}").unwrap();
    }
    out.push('\n');
    for (m, row) in t.models.iter().zip(&t.values) {
        write!(out, "{m:width$}").unwrap();
        for &v in row {
            write!(out, " {:>10}", fmt(v, digits)).unwrap();
        }
        out.push('\n');
    }
}

fn ref_row(out: &mut String, label: &str, values: &[f64], digits: usize) {
    let vals: Vec<String> = values.iter().map(|v| format!("{v:.digits$}")).collect();
    writeln!(out, "  {label}: {}", vals.join(" / ")).unwrap();
}

impl AblationReport {
    pub fn edge_csv(e: &EdgeAblation) -> String {
        let mut s = String::from("model");
        for r in REGIMES {
            write!(s, ",{}", r.label()).unwrap();
        }
        s.push('\n');
        for (m, row) in e.models.iter().zip(&e.ssim) {
            s.push_str(m);
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable tables followed by reference footnotes.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}").unwrap();
        }
        let mut notes = Vec::new();
        if let Some(c) = &self.color {
            out.push('\n');
            component_text(&mut out, "Average color distance [1]", &c.distance, 2);
            out.push('\n');
            component_text(&mut out, "Color histogram KL [2]", &c.kl, 4);
            if c.skipped > 0 {
                writeln!(out, "skipped items: {}", c.skipped).unwrap();
            }
            let mut n = String::from("[1] published full-scale reference, hair/skin/eyes/lip/background:\n");
            ref_row(&mut n, "C-GAN ", &reference::COLOR_DISTANCE_CGAN, 2);
            ref_row(&mut n, "AC-GAN", &reference::COLOR_DISTANCE_ACGAN, 2);
            notes.push(n);
            let mut n = String::from("[2] published full-scale reference, hair/skin/eyes/lip/background:\n");
            ref_row(&mut n, "C-GAN ", &reference::COLOR_KL_CGAN, 4);
            ref_row(&mut n, "AC-GAN", &reference::COLOR_KL_ACGAN, 4);
            notes.push(n);
        }
        if let Some(e) = &self.edge {
            out.push('\n');
            writeln!(out, "SSIM under edge noise [{}]", notes.len() + 1).unwrap();
            let width = e.models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
            write!(out, "{:width$}", "").unwrap();
            for r in REGIMES {
                write!(out, " {:>8}", r.label()).unwrap();
            }
            out.push('\n');
            for (m, row) in e.models.iter().zip(&e.ssim) {
                write!(out, "{m:width$}").unwrap();
                for &v in row {
                    write!(out, " {:>8}", fmt(v, 4)).unwrap();
                }
                out.push('\n');
            }
            let mut n = format!("[{}] published full-scale reference, O/RR/RS/RL:\n", notes.len() + 1);
            ref_row(&mut n, "O-Edge", &reference::SSIM_OEDGE, 4);
            ref_row(&mut n, "C-GAN ", &reference::SSIM_CGAN, 4);
            ref_row(&mut n, "AC-GAN", &reference::SSIM_ACGAN, 4);
            notes.push(n);
        }
        if let Some(f) = &self.f1 {
            out.push('\n');
            writeln!(out, "Segmentation F1").unwrap();
            for (name, v, n) in &f.rows {
                writeln!(out, "{name:>12} {:>8} (n={n})", fmt(*v, 4)).unwrap();
            }
            writeln!(out, "{:>12} {:>8}", "mean", fmt(f.mean, 4)).unwrap();
        }
        if !notes.is_empty() {
            out.push_str("\nReference values were obtained at 512x512 on a large portrait corpus and are not reproduced here.\n");
            for n in notes {
                out.push_str(&n);
            }
        }
        out
    }

    /// Writes `report.txt`, `report.json` and one CSV per table; returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<(String, String)> = vec![
            ("report.txt".into(), self.to_text()),
            ("report.json".into(), serde_json::to_string_pretty(self)?),
        ];
        if let Some(c) = &self.color {
            files.push(("color_distance.csv".into(), component_csv(&c.distance)));
            files.push(("color_kl.csv".into(), component_csv(&c.kl)));
        }
        if let Some(e) = &self.edge {
            files.push(("edge_ssim.csv".into(), Self::edge_csv(e)));
        }
        if let Some(f) = &self.f1 {
            let mut s = String::from("class,f1,items\n");
            for (name, v, n) in &f.rows {
                writeln!(s, "{name},{v},{n}").unwrap();
            }
            writeln!(s, "mean,{},", f.mean).unwrap();
            files.push(("seg_f1.csv".into(), s));
        }
        files
            .into_iter()
            .map(|(name, text)| {
                let p = dir.join(name);
                std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
                Ok(p)
            })
            .collect()
    }
}
