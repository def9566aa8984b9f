//! Palettes: five ordered color strips controlling hair, skin, eyes, lip and background.

use serde::{Deserialize, Serialize};

use crate::classes::Component;
use crate::error::{param_err, Error, Result};
use crate::imaging::{byte_to_unit, RangeTag, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);

    /// Mean channel value, the sort key for distribution palettes.
    pub fn luminance(self) -> f64 {
        (self.0[0] as f64 + self.0[1] as f64 + self.0[2] as f64) / 3.0
    }
}

/// How a strip's entries partition its band when rasterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Entries laid out left to right, widths proportional to fractions.
    #[default]
    Horizontal,
    /// Entries laid out top to bottom within the band.
    Vertical,
    /// One entry per pixel column, cycling through the entries.
    Stripes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub rgb: Rgb,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteRow {
    pub name: Component,
    #[serde(default)]
    pub orientation: Orientation,
    pub entries: Vec<PaletteEntry>,
}

impl PaletteRow {
    pub fn solid(name: Component, rgb: Rgb) -> Self {
        PaletteRow {
            name,
            orientation: Orientation::Horizontal,
            entries: vec![PaletteEntry { rgb, fraction: 1.0 }],
        }
    }

    /// The single color of an averaged row, if the row has exactly one entry.
    pub fn single_color(&self) -> Option<Rgb> {
        match self.entries.as_slice() {
            [e] => Some(e.rgb),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Contract(format!("palette row '{}' is empty", self.name)));
        }
        if self.entries.iter().any(|e| !(e.fraction >= 0.0) || !e.fraction.is_finite()) {
            return Err(Error::Contract(format!("palette row '{}' has a negative fraction", self.name)));
        }
        let sum: f64 = self.entries.iter().map(|e| e.fraction).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "palette row '{}' fractions sum to {sum}",
                self.name
            )));
        }
        Ok(())
    }
}

/// Exactly five rows in [`Component::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PaletteJson", into = "PaletteJson")]
pub struct Palette {
    rows: [PaletteRow; 5],
}

#[derive(Serialize, Deserialize)]
struct PaletteJson {
    rows: Vec<PaletteRow>,
}

impl TryFrom<PaletteJson> for Palette {
    type Error = Error;

    fn try_from(value: PaletteJson) -> Result<Self> {
        Palette::from_rows(value.rows)
    }
}

impl From<Palette> for PaletteJson {
    fn from(p: Palette) -> Self {
        PaletteJson {
            rows: p.rows.into_iter().collect(),
        }
    }
}

impl Palette {
    pub fn from_rows(rows: Vec<PaletteRow>) -> Result<Self> {
        let rows: [PaletteRow; 5] = rows
            .try_into()
            .map_err(|r: Vec<PaletteRow>| Error::Contract(format!("palette needs 5 rows, got {}", r.len())))?;
        for (row, expected) in rows.iter().zip(Component::ALL) {
            if row.name != expected {
                return Err(Error::Contract(format!(
                    "palette row '{}' out of order, expected '{expected}'",
                    row.name
                )));
            }
            row.validate()?;
        }
        Ok(Palette { rows })
    }

    /// Single-color palette, rows in [`Component::ALL`] order.
    pub fn solid(colors: [Rgb; 5]) -> Self {
        let rows = Component::ALL.map(|c| PaletteRow::solid(c, colors[c.index()]));
        Palette { rows }
    }

    pub fn rows(&self) -> &[PaletteRow; 5] {
        &self.rows
    }

    pub fn row(&self, c: Component) -> &PaletteRow {
        &self.rows[c.index()]
    }

    /// Replaces one row, checking its name and invariants.
    pub fn with_row(&self, row: PaletteRow) -> Result<Palette> {
        row.validate()?;
        let mut out = self.clone();
        let idx = row.name.index();
        out.rows[idx] = row;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Palette> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Row extents of the five bands; the remainder rows go to the last band.
pub fn band_bounds(height: usize) -> [(usize, usize); 5] {
    let band = height / 5;
    std::array::from_fn(|i| {
        let start = i * band;
        let end = if i == 4 { height } else { start + band };
        (start, end)
    })
}

/// Cumulative boundaries of `entries` over an extent of `len` pixels
/// (round-half-up, last boundary pinned to `len`).
pub fn partition(entries: &[PaletteEntry], len: usize) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(entries.len() + 1);
    bounds.push(0);
    let mut cum = 0.0;
    for (i, e) in entries.iter().enumerate() {
        cum += e.fraction;
        let b = if i + 1 == entries.len() {
            len
        } else {
            ((cum * len as f64 + 0.5).floor() as usize).min(len)
        };
        bounds.push(b.max(*bounds.last().unwrap()));
    }
    bounds
}

/// Renders the palette as a full-resolution 5-band RGB raster.
pub fn rasterize_palette(palette: &Palette, height: usize, width: usize) -> Result<Raster> {
    if height < 5 || width == 0 {
        return Err(param_err!("palette raster needs height >= 5 and width >= 1"));
    }
    let mut colors = vec![Rgb::BLACK; height * width];
    for (row, (y0, y1)) in palette.rows.iter().zip(band_bounds(height)) {
        match row.orientation {
            Orientation::Horizontal => {
                let b = partition(&row.entries, width);
                for (j, e) in row.entries.iter().enumerate() {
                    for y in y0..y1 {
                        colors[y * width + b[j]..y * width + b[j + 1]].fill(e.rgb);
                    }
                }
            }
            Orientation::Vertical => {
                let b = partition(&row.entries, y1 - y0);
                for (j, e) in row.entries.iter().enumerate() {
                    for y in y0 + b[j]..y0 + b[j + 1] {
                        colors[y * width..(y + 1) * width].fill(e.rgb);
                    }
                }
            }
            Orientation::Stripes => {
                let n = row.entries.len();
                for y in y0..y1 {
                    for x in 0..width {
                        colors[y * width + x] = row.entries[x % n].rgb;
                    }
                }
            }
        }
    }
    Ok(Raster::from_fn(height, width, 3, RangeTag::Unit, |c, y, x| {
        byte_to_unit(colors[y * width + x].0[c])
    }))
}
