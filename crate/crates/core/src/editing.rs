//! Inference-time edits on condition sets, color transfer and generation.

use std::str::FromStr;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::classes::{ClassTable, Component};
use crate::conditioning::{
    extract_distribution_palette, ConditionSet, Orientation, Palette, PaletteEntry, PaletteRow, Rgb,
};
use crate::error::{param_err, shape_err, Error, Result};
use crate::imaging::{BinaryMask, RangeTag, Raster, SegMask};
use crate::net::{assemble_generator_input, NetBundle};

pub fn parse_row(name: &str) -> Result<Component> {
    Component::from_str(name)
}

/// Replaces `row` with one full-width color.
pub fn set_row_color(palette: &Palette, row: Component, color: Rgb) -> Result<Palette> {
    palette.with_row(PaletteRow::solid(row, color))
}

/// Two-color slider; `ratio` is the share of `color_b`, `color_a` comes first
/// (left, or top when vertical).
pub fn slider_blend(
    palette: &Palette,
    row: Component,
    color_a: Rgb,
    color_b: Rgb,
    ratio: f64,
    orientation: Orientation,
) -> Result<Palette> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(param_err!("slider ratio must lie in [0, 1], got {ratio}"));
    }
    if orientation == Orientation::Stripes {
        return Err(param_err!("slider orientation must be horizontal or vertical"));
    }
    if ratio == 0.0 {
        return set_row_color(palette, row, color_a);
    }
    if ratio == 1.0 {
        return set_row_color(palette, row, color_b);
    }
    palette.with_row(PaletteRow {
        name: row,
        orientation,
        entries: vec![
            PaletteEntry { rgb: color_a, fraction: 1.0 - ratio },
            PaletteEntry { rgb: color_b, fraction: ratio },
        ],
    })
}

/// Equal-share entries cycled one per pixel column.
pub fn stripe_pattern(palette: &Palette, row: Component, colors: &[Rgb]) -> Result<Palette> {
    match colors {
        [] => Err(param_err!("stripe pattern needs at least one color")),
        [c] => set_row_color(palette, row, *c),
        _ => {
            let f = 1.0 / colors.len() as f64;
            let mut entries: Vec<PaletteEntry> = colors.iter().map(|&rgb| PaletteEntry { rgb, fraction: f }).collect();
            let rest: f64 = entries[..colors.len() - 1].iter().map(|e| e.fraction).sum();
            entries.last_mut().unwrap().fraction = 1.0 - rest;
            palette.with_row(PaletteRow {
                name: row,
                orientation: Orientation::Stripes,
                entries,
            })
        }
    }
}

/// Arbitrary row content, e.g. a sampled distribution.
pub fn set_distribution_row(
    palette: &Palette,
    row: Component,
    entries: Vec<PaletteEntry>,
    orientation: Orientation,
) -> Result<Palette> {
    palette.with_row(PaletteRow {
        name: row,
        orientation,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoolOp {
    And,
    Or,
    AndNot,
}

pub fn mask_boolean(base: &BinaryMask, brush: &BinaryMask, op: BoolOp) -> Result<BinaryMask> {
    base.zip_with(brush, |a, b| match op {
        BoolOp::And => a && b,
        BoolOp::Or => a || b,
        BoolOp::AndNot => a && !b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskTarget {
    Light,
    Shadow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrushRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrushCircle {
    pub cy: f64,
    pub cx: f64,
    pub radius: f64,
}

/// Union of rectangles, discs and an optional PNG mask (nonzero = set).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Brush {
    pub rects: Vec<BrushRect>,
    pub circles: Vec<BrushCircle>,
    pub png_base64: Option<String>,
}

fn decode_b64(s: &str) -> Result<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(|e| param_err!("invalid base64: {e}"))
}

impl Brush {
    pub fn rasterize(&self, height: usize, width: usize) -> Result<BinaryMask> {
        for r in &self.rects {
            if r.top + r.height > height || r.left + r.width > width {
                return Err(param_err!("brush rectangle {r:?} exceeds {height}x{width}"));
            }
        }
        if self.circles.iter().any(|c| !(c.radius >= 0.0 && c.cy.is_finite() && c.cx.is_finite())) {
            return Err(param_err!("brush circles need finite centers and non-negative radii"));
        }
        let png = match &self.png_base64 {
            Some(s) => {
                let r = Raster::decode_png(&decode_b64(s)?)?;
                if r.dims() != (height, width) {
                    return Err(shape_err!("brush png is {:?}, expected {height}x{width}", r.dims()));
                }
                Some(r)
            }
            None => None,
        };
        Ok(BinaryMask::from_fn(height, width, |y, x| {
            let in_rect = self
                .rects
                .iter()
                .any(|r| (r.top..r.top + r.height).contains(&y) && (r.left..r.left + r.width).contains(&x));
            let in_circle = self.circles.iter().any(|c| {
                let (dy, dx) = (y as f64 - c.cy, x as f64 - c.cx);
                dy * dy + dx * dx <= c.radius * c.radius
            });
            let in_png = png.as_ref().is_some_and(|p| (0..p.channels()).any(|ch| p.get(ch, y, x) > 0.0));
            in_rect || in_circle || in_png
        }))
    }
}

/// Replacement edge values, given inline (row-major, unit range) or as a PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case", deny_unknown_fields)]
pub enum EdgePatch {
    Values { height: usize, width: usize, values: Vec<f32> },
    Png { png_base64: String },
}

impl EdgePatch {
    pub fn to_raster(&self) -> Result<Raster> {
        let r = match self {
            EdgePatch::Values { height, width, values } => {
                Raster::new(*height, *width, 1, RangeTag::Unit, values.clone())?
            }
            EdgePatch::Png { png_base64 } => Raster::decode_png(&decode_b64(png_base64)?)?.to_unit(),
        };
        if r.channels() != 1 {
            return Err(param_err!("edge patch must be single-channel"));
        }
        Ok(r)
    }
}

/// Overwrites the edge map inside the patch rectangle.
pub fn replace_edge_region(edge: &Raster, top: usize, left: usize, patch: &Raster) -> Result<Raster> {
    let (h, w) = edge.dims();
    let (ph, pw) = patch.dims();
    if top + ph > h || left + pw > w {
        return Err(param_err!("edge patch {ph}x{pw} at ({top}, {left}) exceeds {h}x{w}"));
    }
    let e = edge.to_unit();
    let p = patch.to_unit();
    Ok(Raster::from_fn(h, w, 1, RangeTag::Unit, |_, y, x| {
        if (top..top + ph).contains(&y) && (left..left + pw).contains(&x) {
            p.get(0, y - top, x - left)
        } else {
            e.get(0, y, x)
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EditOp {
    SetRowColor {
        row: Component,
        color: Rgb,
    },
    SliderBlend {
        row: Component,
        color_a: Rgb,
        color_b: Rgb,
        ratio: f64,
        #[serde(default)]
        orientation: Orientation,
    },
    StripePattern {
        row: Component,
        colors: Vec<Rgb>,
    },
    SetDistributionRow {
        row: Component,
        entries: Vec<PaletteEntry>,
        #[serde(default)]
        orientation: Orientation,
    },
    MaskBoolean {
        target: MaskTarget,
        mode: BoolOp,
        brush: Brush,
    },
    ReplaceEdgeRegion {
        top: usize,
        left: usize,
        patch: EdgePatch,
    },
}

impl EditOp {
    pub fn apply(&self, cond: &ConditionSet) -> Result<ConditionSet> {
        let mut out = cond.clone();
        let (h, w) = cond.dims();
        match self {
            EditOp::SetRowColor { row, color } => out.palette = set_row_color(&cond.palette, *row, *color)?,
            EditOp::SliderBlend {
                row,
                color_a,
                color_b,
                ratio,
                orientation,
            } => out.palette = slider_blend(&cond.palette, *row, *color_a, *color_b, *ratio, *orientation)?,
            EditOp::StripePattern { row, colors } => out.palette = stripe_pattern(&cond.palette, *row, colors)?,
            EditOp::SetDistributionRow {
                row,
                entries,
                orientation,
            } => out.palette = set_distribution_row(&cond.palette, *row, entries.clone(), *orientation)?,
            EditOp::MaskBoolean { target, mode, brush } => {
                let brush = brush.rasterize(h, w)?;
                let slot = match target {
                    MaskTarget::Light => &mut out.light,
                    MaskTarget::Shadow => &mut out.shadow,
                };
                *slot = mask_boolean(slot, &brush, *mode)?;
            }
            EditOp::ReplaceEdgeRegion { top, left, patch } => {
                out.edge = replace_edge_region(&cond.edge, *top, *left, &patch.to_raster()?)?
            }
        }
        Ok(out)
    }
}

/// Ordered list of edits, applied all-or-nothing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Param(format!("invalid edit script: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn apply(&self, cond: &ConditionSet) -> Result<ConditionSet> {
        self.ops.iter().try_fold(cond.clone(), |c, op| op.apply(&c))
    }
}

/// Swaps in a distribution palette sampled from a reference portrait.
pub fn apply_color_transfer(
    target: &ConditionSet,
    reference: &Raster,
    reference_seg: &SegMask,
    strip_width: usize,
    classes: &ClassTable,
) -> Result<ConditionSet> {
    let mut out = target.clone();
    out.palette = extract_distribution_palette(reference, reference_seg, strip_width, classes)?;
    Ok(out)
}

/// Test-time generation from clean conditions.
pub fn generate(bundle: &NetBundle, cond: &ConditionSet) -> Result<Raster> {
    bundle.generator_forward(&assemble_generator_input(cond, &cond.edge)?)
}

/// Applies `script` to every item and generates; failures are reported per item.
pub fn batch_edit(bundle: &NetBundle, conds: &[ConditionSet], script: &EditScript) -> Vec<Result<Raster>> {
    conds
        .iter()
        .map(|c| script.apply(c).and_then(|c| generate(bundle, &c)))
        .collect()
}
