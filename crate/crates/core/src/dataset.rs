//! Dataset ingestion, train/test splits and condition-set persistence.
//!
//! Layout on disk:
//!
//! ```text
//! <root>/images/<id>.png|jpg       portrait
//! <root>/masks/<id>_<class>.png    one binary mask per facial class (nonzero = member)
//! <root>/conditions/<id>/          optional precomputed condition set
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classes::{ClassTable, CLASS_NAMES};
use crate::conditioning::{ConditionSet, Palette};
use crate::error::{param_err, Error, Result};
use crate::imaging::{BinaryMask, Raster, SegMask};

pub const DEFAULT_RESOLUTION: usize = 64;
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "PNG"];

#[derive(Debug, Clone)]
pub struct DatasetRecord {
    pub image_id: String,
    pub image: Raster,
    pub seg: SegMask,
    pub conditions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub target_resolution: usize,
}

impl SplitSpec {
    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.target_resolution = resolution;
        self
    }
}

/// Splits `(image id, class id)` out of a mask file stem like `00012_l_eye`.
fn parse_mask_stem(stem: &str) -> Option<(String, u8)> {
    let mut by_len: Vec<(usize, &str)> = CLASS_NAMES.iter().copied().enumerate().collect();
    by_len.sort_by_key(|(_, n)| std::cmp::Reverse(n.len()));
    by_len.into_iter().find_map(|(id, name)| {
        stem.strip_suffix(name)
            .and_then(|s| s.strip_suffix('_'))
            .filter(|s| !s.is_empty())
            .map(|s| (s.to_string(), id as u8))
    })
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

/// Merges per-class masks into one label map, resolving overlaps by priority.
pub fn merge_class_masks(
    height: usize,
    width: usize,
    masks: &[(u8, BinaryMask)],
    table: &ClassTable,
) -> Result<SegMask> {
    let mut seg = SegMask::filled(height, width, 0)?;
    let mut ordered: Vec<&(u8, BinaryMask)> = masks.iter().collect();
    // Lowest priority first so higher-priority classes overwrite.
    ordered.sort_by_key(|(c, _)| std::cmp::Reverse(table.priority_rank(*c)));
    for (class, mask) in ordered {
        if mask.dims() != (height, width) {
            return Err(param_err!("class mask dims {:?} != {:?}", mask.dims(), (height, width)));
        }
        for y in 0..height {
            for x in 0..width {
                if mask.get(y, x) {
                    seg.set(y, x, *class);
                }
            }
        }
    }
    Ok(seg)
}

/// An image file and its per-class mask files, not yet decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub mask_paths: Vec<(u8, PathBuf)>,
    pub conditions: Option<PathBuf>,
}

/// Lists the portraits under `root` without decoding them, sorted by id.
pub fn scan_dataset(root: &Path) -> Result<Vec<DatasetEntry>> {
    let image_dir = root.join("images");
    if !image_dir.is_dir() {
        return Err(Error::Dataset(format!("missing image directory {}", image_dir.display())));
    }
    let mut images: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in list_dir(&image_dir)? {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if IMAGE_EXTENSIONS.contains(&ext) {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
            images.insert(stem, path);
        }
    }
    let mut masks: BTreeMap<String, Vec<(u8, PathBuf)>> = BTreeMap::new();
    for path in list_dir(&root.join("masks"))? {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        match parse_mask_stem(stem) {
            Some((id, class)) => masks.entry(id).or_default().push((class, path)),
            None => log::warn!("ignoring mask with unknown class: {}", path.display()),
        }
    }
    for id in masks.keys().filter(|id| !images.contains_key(*id)) {
        log::warn!("mask set '{id}' has no image; skipped");
    }
    Ok(images
        .into_iter()
        .map(|(id, image_path)| {
            let cond_dir = root.join("conditions").join(&id);
            DatasetEntry {
                mask_paths: masks.remove(&id).unwrap_or_default(),
                conditions: cond_dir.is_dir().then_some(cond_dir),
                image_id: id,
                image_path,
            }
        })
        .collect())
}

/// Decodes one entry, rescaled to `resolution`².
pub fn load_entry(entry: &DatasetEntry, resolution: usize, table: &ClassTable) -> Result<DatasetRecord> {
    let image = Raster::read_png(&entry.image_path)?;
    if image.channels() != 3 {
        return Err(Error::Dataset(format!("{} is not an RGB image", entry.image_path.display())));
    }
    let image = image.resize_bilinear(resolution, resolution);
    let mut class_masks = Vec::new();
    for (class, mpath) in &entry.mask_paths {
        let m = Raster::read_png(mpath)?;
        let m = BinaryMask::from_raster(&m.channel(0), 0.5)?;
        let resized = SegMask::new(m.height(), m.width(), m.data().to_vec())?.resize_nearest(resolution, resolution);
        class_masks.push((*class, BinaryMask::new(resolution, resolution, resized.labels().to_vec())?));
    }
    let seg = merge_class_masks(resolution, resolution, &class_masks, table)?;
    Ok(DatasetRecord {
        image_id: entry.image_id.clone(),
        image,
        seg,
        conditions: entry.conditions.clone(),
    })
}

/// Loads every portrait under `root`, rescaled to `resolution`², sorted by id.
pub fn load_dataset(root: &Path, resolution: usize, table: &ClassTable) -> Result<Vec<DatasetRecord>> {
    scan_dataset(root)?.iter().map(|e| load_entry(e, resolution, table)).collect()
}

/// Writes a portrait and its per-class masks in the dataset layout.
pub fn write_record(root: &Path, id: &str, image: &Raster, seg: &SegMask) -> Result<()> {
    let images = root.join("images");
    let masks = root.join("masks");
    for d in [&images, &masks] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    image.write_png(&images.join(format!("{id}.png")))?;
    for (class, name) in CLASS_NAMES.iter().enumerate().skip(1) {
        let m = seg.union_mask(&[class as u8]);
        if m.count() > 0 {
            m.to_raster().write_png(&masks.join(format!("{id}_{name}.png")))?;
        }
    }
    Ok(())
}

/// Deterministic disjoint, exhaustive train/test split.
pub fn make_split(ids: &[String], train_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(param_err!("train fraction must lie in (0,1), got {train_fraction}"));
    }
    if ids.len() < 2 {
        return Err(Error::Dataset(format!("need at least 2 ids to split, got {}", ids.len())));
    }
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.dedup();
    if shuffled.len() != ids.len() {
        return Err(Error::Dataset("duplicate ids in split input".into()));
    }
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = shuffled.len();
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let test_ids = shuffled.split_off(n_train);
    Ok(SplitSpec {
        train_ids: shuffled,
        test_ids,
        seed,
        target_resolution: DEFAULT_RESOLUTION,
    })
}

const CONDITIONS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ChannelFile {
    name: String,
    file: String,
    encoding: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConditionsSidecar {
    version: u32,
    height: usize,
    width: usize,
    channels: Vec<ChannelFile>,
    palette: Palette,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Persists a condition set as one PNG per channel plus `conditions.json`.
pub fn save_conditions(dir: &Path, cond: &ConditionSet) -> Result<()> {
    cond.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut channels = Vec::new();
    let mut put = |name: &str, encoding: &str, bytes: Vec<u8>| -> Result<()> {
        let file = format!("{name}.png");
        write_file(&dir.join(&file), &bytes)?;
        channels.push(ChannelFile {
            name: name.into(),
            file,
            encoding: encoding.into(),
        });
        Ok(())
    };
    put("edge", "gray16", cond.edge.encode_png16()?)?;
    put("color_map", "rgb8", cond.color_map.encode_png()?)?;
    put("light", "mask8", cond.light.to_raster().encode_png()?)?;
    put("shadow", "mask8", cond.shadow.to_raster().encode_png()?)?;
    put("face_mask", "mask8", cond.face_mask.to_raster().encode_png()?)?;
    put("eye_mask", "mask8", cond.eye_mask.to_raster().encode_png()?)?;
    let (height, width) = cond.dims();
    let sidecar = ConditionsSidecar {
        version: CONDITIONS_VERSION,
        height,
        width,
        channels,
        palette: cond.palette.clone(),
    };
    write_file(&dir.join("conditions.json"), serde_json::to_string_pretty(&sidecar)?.as_bytes())
}

pub fn load_conditions(dir: &Path) -> Result<ConditionSet> {
    let path = dir.join("conditions.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: ConditionsSidecar = serde_json::from_str(&text)?;
    if sidecar.version != CONDITIONS_VERSION {
        return Err(Error::Dataset(format!("unsupported conditions version {}", sidecar.version)));
    }
    let find = |name: &str| -> Result<PathBuf> {
        sidecar
            .channels
            .iter()
            .find(|c| c.name == name)
            .map(|c| dir.join(&c.file))
            .ok_or_else(|| Error::Dataset(format!("conditions sidecar lacks channel '{name}'")))
    };
    let mask = |name: &str| -> Result<BinaryMask> { BinaryMask::from_raster(&Raster::read_png(&find(name)?)?, 0.5) };
    let cond = ConditionSet {
        edge: Raster::read_png(&find("edge")?)?,
        palette: sidecar.palette,
        color_map: Raster::read_png(&find("color_map")?)?,
        light: mask("light")?,
        shadow: mask("shadow")?,
        face_mask: mask("face_mask")?,
        eye_mask: mask("eye_mask")?,
    };
    cond.validate()?;
    if cond.dims() != (sidecar.height, sidecar.width) {
        return Err(Error::Dataset("conditions dims disagree with sidecar".into()));
    }
    Ok(cond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::class;
    use crate::conditioning::{extract_conditions, ExtractionConfig, GradientEdges};
    use crate::synth::synthetic_portrait;

    #[test]
    fn mask_stem_parsing() {
        assert_eq!(parse_mask_stem("00012_l_eye"), Some(("00012".into(), class::L_EYE)));
        assert_eq!(parse_mask_stem("7_neck_l"), Some(("7".into(), class::NECK_L)));
        assert_eq!(parse_mask_stem("7_neck"), Some(("7".into(), class::NECK)));
        assert_eq!(parse_mask_stem("a_b_ear_r"), Some(("a_b".into(), class::EAR_R)));
        assert_eq!(parse_mask_stem("_hair"), None);
        assert_eq!(parse_mask_stem("3_beard"), None);
    }

    #[test]
    fn overlap_resolved_by_priority() {
        let table = ClassTable::default();
        let hair = BinaryMask::from_fn(4, 4, |y, _| y < 3);
        let skin = BinaryMask::from_fn(4, 4, |y, _| y >= 1);
        let eye = BinaryMask::from_fn(4, 4, |y, x| y == 2 && x == 2);
        let seg = merge_class_masks(4, 4, &[(class::HAIR, hair), (class::L_EYE, eye), (class::SKIN, skin)], &table).unwrap();
        // Oracle: the highest-priority class among those covering each pixel.
        assert_eq!(seg.get(0, 0), class::HAIR);
        assert_eq!(seg.get(1, 0), class::SKIN);
        assert_eq!(seg.get(2, 2), class::L_EYE);
        assert_eq!(seg.get(3, 3), class::SKIN);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ids: Vec<String> = (0..10).map(|i| format!("{i:05}")).collect();
        let a = make_split(&ids, 0.8, 7).unwrap();
        let b = make_split(&ids, 0.8, 7).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_eq!((a.train_ids.len(), a.test_ids.len()), (8, 2));
        let mut all: Vec<String> = a.train_ids.iter().chain(&a.test_ids).cloned().collect();
        all.sort();
        assert_eq!(all, ids);
        let c = make_split(&ids, 0.8, 8).unwrap();
        assert_eq!((c.train_ids.len(), c.test_ids.len()), (8, 2));

        let two = make_split(&ids[..2], 0.5, 1).unwrap();
        assert_eq!((two.train_ids.len(), two.test_ids.len()), (1, 1));
        assert!(make_split(&ids[..1], 0.5, 1).is_err());
        assert!(make_split(&ids, 1.0, 1).is_err());
    }

    #[test]
    fn load_fixture_dataset() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..4 {
            let (img, seg) = synthetic_portrait(i, 96);
            write_record(dir.path(), &format!("{i:05}"), &img, &seg).unwrap();
        }
        // An image with no masks and a mask set with no image.
        Raster::zeros(32, 32, 3).write_png(&dir.path().join("images/bare.png")).unwrap();
        BinaryMask::ones(8, 8).to_raster().write_png(&dir.path().join("masks/orphan_hair.png")).unwrap();

        let recs = load_dataset(dir.path(), 64, &ClassTable::default()).unwrap();
        assert_eq!(recs.len(), 5);
        assert!(recs.iter().all(|r| r.image.dims() == (64, 64) && r.seg.dims() == (64, 64)));
        let bare = recs.iter().find(|r| r.image_id == "bare").unwrap();
        assert!(bare.seg.labels().iter().all(|&l| l == class::BACKGROUND));
        let ids: Vec<&str> = recs.iter().map(|r| r.image_id.as_str()).collect();
        assert_eq!(ids, vec!["00000", "00001", "00002", "00003", "bare"]);

        let again = load_dataset(dir.path(), 64, &ClassTable::default()).unwrap();
        assert!(recs.iter().zip(&again).all(|(a, b)| a.image == b.image && a.seg == b.seg));
    }

    #[test]
    fn unreadable_image_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        std::fs::write(dir.path().join("images/x.png"), b"not a png").unwrap();
        assert!(load_dataset(dir.path(), 64, &ClassTable::default()).is_err());
    }

    #[test]
    fn conditions_reload_exactly() {
        let (img, seg) = synthetic_portrait(3, 64);
        let cond = extract_conditions(&img, &seg, &GradientEdges::default(), &ExtractionConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_conditions(dir.path(), &cond).unwrap();
        let back = load_conditions(dir.path()).unwrap();
        assert_eq!(back, cond);
        assert!(back.edge.data().iter().zip(cond.edge.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
