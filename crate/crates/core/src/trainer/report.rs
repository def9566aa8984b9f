use std::fmt::Write as _;
use std::path::Path;

use super::{gray_to_rgb, LossRecord, TrainSample};
use crate::error::{Error, Result};
use crate::imaging::{RangeTag, Raster};

const COLUMNS: &str = "step,epoch,lr,d_global,d_local,g_gan,g_vgg,g_fm";

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut s = format!("{COLUMNS}\n");
    for r in history {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.step, r.epoch, r.lr, r.d_global, r.d_local, r.g_gan, r.g_vgg, r.g_fm
        )
        .unwrap();
    }
    write(path, &s)
}

/// Per-epoch means of every loss.
pub fn write_epoch_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut s = "epoch,steps,d_global,d_local,g_gan,g_vgg,g_fm\n".to_string();
    let mut i = 0;
    while i < history.len() {
        let epoch = history[i].epoch;
        let group: Vec<&LossRecord> = history[i..].iter().take_while(|r| r.epoch == epoch).collect();
        let n = group.len() as f64;
        let mean = |f: fn(&LossRecord) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        writeln!(
            s,
            "{epoch},{},{},{},{},{},{}",
            group.len(),
            mean(|r| r.d_global),
            mean(|r| r.d_local),
            mean(|r| r.g_gan),
            mean(|r| r.g_vgg),
            mean(|r| r.g_fm)
        )
        .unwrap();
        i += group.len();
    }
    write(path, &s)
}

/// One row per sample: original, edge, palette, light, shadow, reconstruction.
pub fn sample_grid(samples: &[TrainSample], recon: &[Raster]) -> Result<Raster> {
    if samples.is_empty() || samples.len() != recon.len() {
        return Err(Error::Param("sample grid needs one reconstruction per sample".into()));
    }
    let (h, w) = samples[0].image.dims();
    let rows = samples
        .iter()
        .zip(recon)
        .map(|(s, r)| {
            Ok(vec![
                s.image.to_unit(),
                gray_to_rgb(&s.cond.edge),
                s.cond.palette_raster()?,
                gray_to_rgb(&s.cond.light.to_raster()),
                gray_to_rgb(&s.cond.shadow.to_raster()),
                r.to_unit(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let cols = rows[0].len();
    Ok(Raster::from_fn(h * rows.len(), w * cols, 3, RangeTag::Unit, |c, y, x| {
        rows[y / h][x / w].get(c, y % h, x % w)
    }))
}
