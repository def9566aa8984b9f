//! Pixel containers and the low-level filters used by the extraction pipeline.
//!
//! Rasters are stored planar (`channel`, `row`, `column`) in `f32`, which maps
//! directly onto the `C×H×W` layout the networks consume.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};

/// Number of facial-attribute classes in a segmentation mask.
pub const NUM_CLASSES: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeTag {
    /// `[0, 1]`
    Unit,
    /// `[0, 255]`
    Byte,
    /// `[-1, 1]`
    Signed,
}

impl RangeTag {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            RangeTag::Unit => (0.0, 1.0),
            RangeTag::Byte => (0.0, 255.0),
            RangeTag::Signed => (-1.0, 1.0),
        }
    }

    fn to_unit(self, v: f32) -> f32 {
        match self {
            RangeTag::Unit => v,
            RangeTag::Byte => v / 255.0,
            RangeTag::Signed => (v + 1.0) * 0.5,
        }
    }

    fn from_unit(self, v: f32) -> f32 {
        match self {
            RangeTag::Unit => v,
            RangeTag::Byte => v * 255.0,
            RangeTag::Signed => v * 2.0 - 1.0,
        }
    }
}

/// Quantizes a unit-range value to a byte with round-half-up.
#[inline]
pub fn unit_to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[inline]
pub fn byte_to_unit(b: u8) -> f32 {
    b as f32 / 255.0
}

/// An `H×W×C` image with a declared value range.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    range: RangeTag,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        range: RangeTag,
        data: Vec<f32>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(param_err!("raster must have 1 or 3 channels, got {channels}"));
        }
        if data.len() != height * width * channels {
            return Err(shape_err!(
                "raster data length {} != {height}x{width}x{channels}",
                data.len()
            ));
        }
        let (lo, hi) = range.bounds();
        if let Some(bad) = data.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(param_err!("value {bad} outside {range:?} range"));
        }
        Ok(Self {
            height,
            width,
            channels,
            range,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, range: RangeTag, value: f32) -> Result<Self> {
        Self::new(height, width, channels, range, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, RangeTag::Unit, 0.0).expect("zero raster is valid")
    }

    /// Builds a raster from `f(channel, y, x)`; values are clamped into `range`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        range: RangeTag,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let (lo, hi) = range.bounds();
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(lo, hi));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            range,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn range(&self) -> RangeTag {
        self.range
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Writes one sample, clamped into the declared range.
    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let (lo, hi) = self.range.bounds();
        let w = self.width;
        let h = self.height;
        self.data[(c * h + y) * w + x] = v.clamp(lo, hi);
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn ensure_channels(&self, channels: usize, what: &str) -> Result<()> {
        if self.channels != channels {
            return Err(shape_err!("{what}: expected {channels} channel(s), got {}", self.channels));
        }
        Ok(())
    }

    pub fn ensure_dims(&self, dims: (usize, usize), what: &str) -> Result<()> {
        if self.dims() != dims {
            return Err(shape_err!("{what}: expected {dims:?}, got {:?}", self.dims()));
        }
        Ok(())
    }

    /// Converts to another range tag by affine remapping.
    pub fn to_range(&self, range: RangeTag) -> Raster {
        if range == self.range {
            return self.clone();
        }
        let (lo, hi) = range.bounds();
        let data = self
            .data
            .iter()
            .map(|&v| range.from_unit(self.range.to_unit(v)).clamp(lo, hi))
            .collect();
        Raster {
            data,
            range,
            ..*self
        }
    }

    pub fn to_unit(&self) -> Raster {
        self.to_range(RangeTag::Unit)
    }

    /// `max - v` for every sample, in the raster's own range.
    pub fn invert(&self) -> Raster {
        let (lo, hi) = self.range.bounds();
        let data = self.data.iter().map(|&v| hi + lo - v).collect();
        Raster { data, ..*self }
    }

    /// RGB byte triple at `(y, x)` (gray rasters replicate the single channel).
    pub fn rgb_bytes(&self, y: usize, x: usize) -> [u8; 3] {
        let byte = |c: usize| unit_to_byte(self.range.to_unit(self.get(c, y, x)));
        if self.channels == 1 {
            let b = byte(0);
            [b, b, b]
        } else {
            [byte(0), byte(1), byte(2)]
        }
    }

    /// Quantizes the raster to the 8-bit grid (unit range), as PNG round-trips would.
    pub fn quantize_bytes(&self) -> Raster {
        let unit = self.to_unit();
        let data = unit.data.iter().map(|&v| byte_to_unit(unit_to_byte(v))).collect();
        Raster { data, ..unit }
    }

    pub fn from_rgb_image(img: &RgbImage) -> Raster {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Raster::from_fn(h, w, 3, RangeTag::Unit, |c, y, x| {
            byte_to_unit(img.get_pixel(x as u32, y as u32)[c])
        })
    }

    pub fn from_dynamic(img: &DynamicImage) -> Raster {
        use image::ColorType::*;
        match img.color() {
            L8 | La8 => {
                let g = img.to_luma8();
                let (w, h) = (g.width() as usize, g.height() as usize);
                Raster::from_fn(h, w, 1, RangeTag::Unit, |_, y, x| {
                    byte_to_unit(g.get_pixel(x as u32, y as u32)[0])
                })
            }
            L16 | La16 => {
                let g = img.to_luma16();
                let (w, h) = (g.width() as usize, g.height() as usize);
                Raster::from_fn(h, w, 1, RangeTag::Unit, |_, y, x| {
                    g.get_pixel(x as u32, y as u32)[0] as f32 / 65535.0
                })
            }
            _ => Raster::from_rgb_image(&img.to_rgb8()),
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_fn(w, h, |x, y| {
                Luma([self.rgb_bytes(y as usize, x as usize)[0]])
            }))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, y| {
                image::Rgb(self.rgb_bytes(y as usize, x as usize))
            }))
        }
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Raster> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(Raster::from_dynamic(&img))
    }

    /// 8-bit PNG encoding (gray or RGB).
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    /// 16-bit gray PNG encoding of a single-channel raster.
    pub fn encode_png16(&self) -> Result<Vec<u8>> {
        self.ensure_channels(1, "16-bit png")?;
        let unit = self.to_unit();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                Luma([unit_to_u16(unit.get(0, y as usize, x as usize))])
            });
        let mut buf = Cursor::new(Vec::new());
        DynamicImage::ImageLuma16(img).write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    /// Snaps a unit-range raster to the 16-bit grid used by [`Raster::encode_png16`].
    pub fn quantize_u16(&self) -> Raster {
        let unit = self.to_unit();
        let data = unit
            .data
            .iter()
            .map(|&v| unit_to_u16(v) as f32 / 65535.0)
            .collect();
        Raster { data, ..unit }
    }

    pub fn read_png(path: &Path) -> Result<Raster> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory(&bytes)?;
        Ok(Raster::from_dynamic(&img))
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Raw little-endian float serialization, used for test fixtures.
    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        out.extend_from_slice(b"RSTR");
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.push(match self.range {
            RangeTag::Unit => 0,
            RangeTag::Byte => 1,
            RangeTag::Signed => 2,
        });
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_raw_bytes(bytes: &[u8]) -> Result<Raster> {
        if bytes.len() < 17 || &bytes[..4] != b"RSTR" {
            return Err(param_err!("not a raw raster blob"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (h, w, c) = (u32_at(4), u32_at(8), u32_at(12));
        let range = match bytes[16] {
            0 => RangeTag::Unit,
            1 => RangeTag::Byte,
            2 => RangeTag::Signed,
            t => return Err(param_err!("unknown range tag {t}")),
        };
        let body = &bytes[17..];
        if body.len() != h * w * c * 4 {
            return Err(shape_err!("raw raster body has {} bytes", body.len()));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Raster::new(h, w, c, range, data)
    }

    /// Bilinear resampling with half-pixel centers.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Raster {
        if (height, width) == self.dims() {
            return self.clone();
        }
        let sy = self.height as f32 / height as f32;
        let sx = self.width as f32 / width as f32;
        let coord = |o: usize, scale: f32, n: usize| {
            let p = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (p.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, p - i0 as f32)
        };
        Raster::from_fn(height, width, self.channels, self.range, |c, y, x| {
            let (y0, y1, fy) = coord(y, sy, self.height);
            let (x0, x1, fx) = coord(x, sx, self.width);
            let top = self.get(c, y0, x0) * (1.0 - fx) + self.get(c, y0, x1) * fx;
            let bot = self.get(c, y1, x0) * (1.0 - fx) + self.get(c, y1, x1) * fx;
            top * (1.0 - fy) + bot * fy
        })
    }

    /// Copies one channel out as a single-channel raster.
    pub fn channel(&self, c: usize) -> Raster {
        Raster {
            channels: 1,
            data: self.plane(c).to_vec(),
            ..*self
        }
    }
}

fn unit_to_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * 65535.0 + 0.5).floor() as u16
}

/// A strictly `{0,1}` raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(shape_err!("mask data length {} != {height}x{width}", data.len()));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(param_err!("mask values must be 0 or 1"));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_raster(&self) -> Raster {
        Raster {
            height: self.height,
            width: self.width,
            channels: 1,
            range: RangeTag::Unit,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Binarizes a single-channel raster: `1` where the unit value exceeds `threshold`.
    pub fn from_raster(r: &Raster, threshold: f32) -> Result<Self> {
        r.ensure_channels(1, "mask from raster")?;
        let unit = r.to_unit();
        Ok(Self {
            height: r.height,
            width: r.width,
            data: unit.data.iter().map(|&v| (v > threshold) as u8).collect(),
        })
    }

    pub fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        if self.dims() != other.dims() {
            return Err(shape_err!("mask dims {:?} vs {:?}", self.dims(), other.dims()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a == 1, b == 1) as u8)
            .collect();
        Ok(BinaryMask { data, ..*self })
    }
}

/// Integer label map over the facial-attribute classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl SegMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(shape_err!("label length {} != {height}x{width}", labels.len()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(param_err!("label {bad} >= {NUM_CLASSES}"));
        }
        Ok(Self { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Result<Self> {
        Self::new(height, width, vec![label; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, label: u8) {
        assert!((label as usize) < NUM_CLASSES);
        self.labels[y * self.width + x] = label;
    }

    /// Mask of pixels whose label is in `classes`.
    pub fn union_mask(&self, classes: &[u8]) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.labels.iter().map(|l| classes.contains(l) as u8).collect(),
        }
    }

    pub fn resize_nearest(&self, height: usize, width: usize) -> SegMask {
        let mut labels = Vec::with_capacity(height * width);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                labels.push(self.get(sy.min(self.height - 1), sx.min(self.width - 1)));
            }
        }
        SegMask { height, width, labels }
    }

    /// Gray PNG whose pixel values are class ids.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let img = GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([self.get(y as usize, x as usize)])
        });
        let mut buf = Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(img).write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<SegMask> {
        let img = image::load_from_memory(bytes)?.to_luma8();
        SegMask::new(img.height() as usize, img.width() as usize, img.into_raw())
    }

    pub fn read_png(path: &Path) -> Result<SegMask> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_png()?).map_err(|e| Error::io(path, e))
    }
}

/// Reflect-101 index folding (`d c b | a b c d | c b a`), valid for any offset.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Normalized 1-D Gaussian taps of length `2 * radius + 1`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(param_err!("gaussian sigma must be positive, got {sigma}"));
    }
    if radius < 1 {
        return Err(param_err!("gaussian radius must be >= 1"));
    }
    let taps: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / sum).collect())
}

fn convolve_separable(img: &Raster, taps: &[f64]) -> Raster {
    let (h, w) = img.dims();
    let r = (taps.len() / 2) as isize;
    let mut out = img.clone();
    let mut tmp = vec![0f64; h * w];
    for c in 0..img.channels {
        let plane = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sx = reflect_index(x as isize + k as isize - r, w);
                    acc += t * plane[y * w + sx] as f64;
                }
                tmp[y * w + x] = acc;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sy = reflect_index(y as isize + k as isize - r, h);
                    acc += t * tmp[sy * w + x];
                }
                out.set(c, y, x, acc as f32);
            }
        }
    }
    out
}

/// Separable Gaussian blur with reflect padding; applied per channel.
pub fn gaussian_filter(img: &Raster, sigma: f64, kernel_radius: usize) -> Result<Raster> {
    let taps = gaussian_kernel(sigma, kernel_radius)?;
    Ok(convolve_separable(img, &taps))
}

fn window_values(plane: &[f32], h: usize, w: usize, y: usize, x: usize, half: isize, buf: &mut Vec<f32>) {
    buf.clear();
    for dy in -half..=half {
        let sy = reflect_index(y as isize + dy, h);
        for dx in -half..=half {
            let sx = reflect_index(x as isize + dx, w);
            buf.push(plane[sy * w + sx]);
        }
    }
}

fn check_odd_window(window: usize) -> Result<()> {
    if window < 3 || window % 2 == 0 {
        return Err(param_err!("window must be odd and >= 3, got {window}"));
    }
    Ok(())
}

/// Median over a `window×window` neighborhood with reflect padding.
pub fn median_filter(img: &Raster, window: usize) -> Result<Raster> {
    check_odd_window(window)?;
    let (h, w) = img.dims();
    let half = (window / 2) as isize;
    let mut out = img.clone();
    let mut buf = Vec::with_capacity(window * window);
    for c in 0..img.channels {
        let plane = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                window_values(plane, h, w, y, x, half, &mut buf);
                buf.sort_by(f32::total_cmp);
                out.set(c, y, x, buf[buf.len() / 2]);
            }
        }
    }
    Ok(out)
}

/// Median filter over a binary mask.
pub fn median_filter_mask(mask: &BinaryMask, window: usize) -> Result<BinaryMask> {
    check_odd_window(window)?;
    let (h, w) = mask.dims();
    let half = (window / 2) as isize;
    let majority = window * window / 2;
    Ok(BinaryMask::from_fn(h, w, |y, x| {
        let mut ones = 0;
        for dy in -half..=half {
            let sy = reflect_index(y as isize + dy, h);
            for dx in -half..=half {
                ones += mask.data[sy * w + reflect_index(x as isize + dx, w)] as usize;
            }
        }
        ones > majority
    }))
}

/// 1-based nearest rank of the `fraction`-quantile among `n` sorted values.
pub fn nearest_rank(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Zeroes every pixel whose value is at or below the `fraction`-quantile
/// (nearest rank) of its own centered `window×window` neighborhood.
pub fn window_percentile_suppress(img: &Raster, window: usize, fraction: f64) -> Result<Raster> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(param_err!("fraction must lie in (0,1), got {fraction}"));
    }
    check_odd_window(window)?;
    let (h, w) = img.dims();
    let half = (window / 2) as isize;
    let rank = nearest_rank(fraction, window * window);
    let mut out = img.clone();
    let mut buf = Vec::with_capacity(window * window);
    for c in 0..img.channels {
        let plane = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                window_values(plane, h, w, y, x, half, &mut buf);
                buf.sort_by(f32::total_cmp);
                let v = plane[y * w + x];
                if v <= buf[rank - 1] {
                    out.set(c, y, x, 0.0);
                }
            }
        }
    }
    Ok(out)
}
