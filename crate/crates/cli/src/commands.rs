use std::path::{Path, PathBuf};

use acgan_core::classes::Component;
use acgan_core::conditioning::{extract_conditions, ConditionSet, GradientEdges};
use acgan_core::dataset::{load_conditions, load_dataset, load_entry, save_conditions, scan_dataset, write_record};
use acgan_core::editing::{apply_color_transfer, generate as generate_one, EditScript};
use acgan_core::evaluation::{
    run_color_ablation, run_edge_robustness_ablation, seg_f1_report, AblationReport, EvalItem, HistogramConfig,
};
use acgan_core::imaging::{Raster, SegMask};
use acgan_core::net::{load_bundle, Checkpoint, NetBundle};
use acgan_core::noising::{apply_method, sample_noising, sample_rng, NoiseMethod};
use acgan_core::synth::synthetic_portrait;
use acgan_core::trainer::{prepare_samples, TrainConfig, Trainer};
use acgan_core::{Error, Result};
use acgan_service::ServiceConfig;

use crate::batch;
use crate::BatchOpts;

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    let cfg = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    Ok(cfg)
}

fn log_config(cfg: &TrainConfig) -> Result<()> {
    log::info!("seed {}; resolved config:\n{}", cfg.seed, cfg.to_toml()?);
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn palette_hex(cond: &ConditionSet) -> String {
    Component::ALL
        .iter()
        .map(|&c| match cond.palette.row(c).single_color() {
            Some(rgb) => format!("{c}=#{:02x}{:02x}{:02x}", rgb.0[0], rgb.0[1], rgb.0[2]),
            None => format!("{c}=mixed"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn describe(cond: &ConditionSet) -> String {
    let (h, w) = cond.dims();
    let edge_mean = cond.edge.data().iter().map(|&v| v as f64).sum::<f64>() / (h * w) as f64;
    format!(
        "{h}x{w} edge_mean {edge_mean:.4} light {} shadow {} {}",
        cond.light.count(),
        cond.shadow.count(),
        palette_hex(cond)
    )
}

pub fn extract(dataset: &Path, out: &Path, config: Option<&Path>, opts: &BatchOpts) -> Result<()> {
    let cfg = load_config(config)?;
    log_config(&cfg)?;
    let entries = scan_dataset(dataset)?;
    create_dir(out)?;
    let done = batch::run(
        &entries,
        opts,
        |e| e.image_id.clone(),
        |e| {
            let r = load_entry(e, cfg.resolution, &cfg.extraction.classes)?;
            extract_conditions(&r.image, &r.seg, &GradientEdges::default(), &cfg.extraction)
        },
        |e, cond| {
            save_conditions(&out.join(&e.image_id), &cond)?;
            Ok(describe(&cond))
        },
    )?;
    log::info!("extracted {done} of {} condition sets into {}", entries.len(), out.display());
    Ok(())
}

fn parse_method(name: &str) -> Result<NoiseMethod> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| Error::Config(format!("unknown noise method '{name}'")))
}

pub fn noise_preview(
    conditions: &Path,
    out: &Path,
    count: usize,
    seed: u64,
    method: Option<&str>,
    config: Option<&Path>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    cfg.noise.seed = seed;
    log_config(&cfg)?;
    let forced = method.map(parse_method).transpose()?;
    let cond = load_conditions(conditions)?;
    create_dir(out)?;
    cond.edge.write_png(&out.join("clean.png"))?;
    for i in 0..count {
        let mut rng = sample_rng(seed, 0, i as u64);
        let (m, noisy) = match forced {
            Some(m) => (m, apply_method(m, &cond.edge, &cfg.noise, &mut rng)?),
            None => sample_noising(&cond.edge, &cfg.noise, &mut rng)?,
        };
        let name = format!("{i:03}_{}.png", m.label());
        noisy.write_png(&out.join(&name))?;
        println!("{name}");
    }
    Ok(())
}

pub fn train(
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    resume: Option<&Path>,
    seed: Option<u64>,
    max_steps: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if max_steps.is_some() {
        cfg.max_steps = max_steps;
    }
    cfg.validate()?;
    log_config(&cfg)?;
    let records = load_dataset(dataset, cfg.resolution, &cfg.extraction.classes)?;
    let samples = prepare_samples(&records, &cfg, &GradientEdges::default())?;
    log::info!("{} training portraits at {}x{}", samples.len(), cfg.resolution, cfg.resolution);
    let mut trainer = match resume {
        Some(p) => Trainer::resume(&cfg, &samples, &Checkpoint::read(p)?)?,
        None => Trainer::new(&cfg, &samples)?,
    };
    create_dir(out)?;
    let resolved = out.join("resolved_config.toml");
    std::fs::write(&resolved, cfg.to_toml()?).map_err(|e| Error::io(&resolved, e))?;
    trainer.set_output_dir(out);
    let ckpt = trainer.run()?;
    println!("final checkpoint {} after {} steps", ckpt.id()?, trainer.step_count());
    Ok(())
}

fn load_model(path: &Path) -> Result<NetBundle> {
    let (bundle, id) = load_bundle(path)?;
    log::info!("checkpoint {id} from {}", path.display());
    Ok(bundle)
}

pub fn generate(
    checkpoint: &Path,
    conditions: &[PathBuf],
    out: &Path,
    script: Option<&Path>,
    save_edited: bool,
    opts: &BatchOpts,
) -> Result<()> {
    let bundle = load_model(checkpoint)?;
    let script = match script {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(EditScript::from_json(&text)?)
        }
        None => None,
    };
    let dirs = batch::condition_dirs(conditions)?;
    create_dir(out)?;
    batch::run(
        &dirs,
        opts,
        |(id, _)| id.clone(),
        |(_, dir)| {
            let cond = load_conditions(dir)?;
            let cond = match &script {
                Some(s) => s.apply(&cond)?,
                None => cond,
            };
            Ok((generate_one(&bundle, &cond)?, cond))
        },
        |(id, _), (image, cond)| {
            let path = out.join(format!("{id}.png"));
            image.write_png(&path)?;
            if save_edited {
                save_conditions(&out.join("conditions").join(id), &cond)?;
            }
            Ok(path.display().to_string())
        },
    )?;
    Ok(())
}

pub fn transfer(
    checkpoint: &Path,
    conditions: &Path,
    reference: &Path,
    reference_seg: &Path,
    strip_width: usize,
    out: &Path,
) -> Result<()> {
    let bundle = load_model(checkpoint)?;
    let cond = load_conditions(conditions)?;
    let image = Raster::read_png(reference)?.to_unit();
    let seg = SegMask::read_png(reference_seg)?;
    let classes = TrainConfig::default().extraction.classes;
    let edited = apply_color_transfer(&cond, &image, &seg, strip_width, &classes)?;
    generate_one(&bundle, &edited)?.write_png(out)?;
    println!("{}", out.display());
    Ok(())
}

fn parse_model(spec: &str) -> Result<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(Error::Config(format!("--model expects NAME=CHECKPOINT, got '{spec}'"))),
    }
}

pub fn eval(
    models: &[String],
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: u64,
    pred_seg: Option<&Path>,
    opts: &BatchOpts,
) -> Result<()> {
    let cfg = load_config(config)?;
    log_config(&cfg)?;
    let specs = models.iter().map(|m| parse_model(m)).collect::<Result<Vec<_>>>()?;
    let mut report = AblationReport::default();
    let mut bundles = Vec::new();
    for (name, path) in &specs {
        let (bundle, id) = load_bundle(path)?;
        report.metadata.insert(format!("checkpoint.{name}"), id);
        bundles.push((name.clone(), bundle));
    }
    let records = load_dataset(dataset, cfg.resolution, &cfg.extraction.classes)?;
    let samples = batch::pool(opts.jobs)?.install(|| prepare_samples(&records, &cfg, &GradientEdges::default()))?;
    let items: Vec<EvalItem> = records
        .iter()
        .zip(samples)
        .map(|(r, s)| EvalItem { id: s.id, image: s.image, seg: r.seg.clone(), cond: s.cond })
        .collect();
    report.metadata.insert("seed".into(), seed.to_string());
    report.metadata.insert("items".into(), items.len().to_string());
    report.metadata.insert("resolution".into(), cfg.resolution.to_string());
    let refs: Vec<(&str, &NetBundle)> = bundles.iter().map(|(n, b)| (n.as_str(), b)).collect();
    report.edge = Some(run_edge_robustness_ablation(&refs, &items, &cfg.noise, seed)?);
    if items.len() >= 2 {
        report.color =
            Some(run_color_ablation(&refs, &items, seed, HistogramConfig::default(), &cfg.extraction.classes)?);
    } else {
        log::warn!("color ablation skipped: it needs at least 2 portraits");
    }
    if let Some(dir) = pred_seg {
        let pairs = items
            .iter()
            .map(|it| {
                let pred = SegMask::read_png(&dir.join(format!("{}.png", it.id)))?;
                let (h, w) = it.seg.dims();
                Ok((pred.resize_nearest(h, w), it.seg.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        report.f1 = Some(seg_f1_report(&pairs)?);
    }
    for f in report.write(out)? {
        log::info!("wrote {}", f.display());
    }
    print!("{}", report.to_text());
    Ok(())
}

pub fn report(input: &Path, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let report: AblationReport = serde_json::from_str(&text)?;
    if let Some(dir) = out {
        report.write(dir)?;
    }
    print!("{}", report.to_text());
    Ok(())
}

pub fn serve(config: Option<&Path>, bind: Option<String>, checkpoint: Option<PathBuf>) -> Result<()> {
    let mut cfg = ServiceConfig::from_env(config)?;
    if let Some(b) = bind {
        cfg.bind = b.parse().map_err(|_| Error::Config(format!("invalid bind address '{b}'")))?;
    }
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    log::info!("resolved service config: {}", serde_json::to_string(&cfg)?);
    acgan_service::run_blocking(cfg)
}

pub fn synth(out: &Path, count: usize, size: usize, seed: u64) -> Result<()> {
    for i in 0..count as u64 {
        let id = format!("synth{:04}", seed + i);
        let (image, seg) = synthetic_portrait(seed + i, size);
        write_record(out, &id, &image, &seg)?;
        println!("{id}");
    }
    Ok(())
}
