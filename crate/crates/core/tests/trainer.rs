mod common;

use acgan_core::net::FeatureExtractor;
use acgan_core::trainer::*;
use acgan_core::Error;
use candle_core::{Device, Tensor};
use common::{samples, tiny_config};

fn full_schedule() -> TrainConfig {
    TrainConfig { epochs: 60, lr_constant_epochs: 30, lr: 2e-4, ..Default::default() }
}

#[test]
fn lr_schedule_examples() {
    let cfg = full_schedule();
    assert_eq!(lr_at(0, &cfg).unwrap(), 0.0002);
    assert_eq!(lr_at(29, &cfg).unwrap(), 0.0002);
    assert!((lr_at(45, &cfg).unwrap() - 0.0001).abs() < 1e-15);
    assert!((lr_at(59, &cfg).unwrap() - 0.0002 / 30.0).abs() < 1e-15);
    assert!(matches!(lr_at(60, &cfg), Err(Error::Param(_))));
}

#[test]
fn config_round_trips_and_validates() {
    let cfg = tiny_config();
    let back = TrainConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert!(matches!(TrainConfig::from_toml("bogus_field = 1"), Err(Error::Config(_))));
    let future = TrainConfig::from_toml("schema_version = 7");
    assert!(future.is_err() || future.unwrap().validate().is_err());
    let bad = TrainConfig { lr_constant_epochs: 61, epochs: 60, ..Default::default() };
    assert!(bad.validate().is_err());
    let mut weights = tiny_config();
    weights.loss_weights.lambda_fm_layers = vec![1.0];
    assert!(weights.validate().is_err());
    let defaults = TrainConfig::from_toml("").unwrap();
    assert_eq!(defaults, TrainConfig::default());
}

#[test]
fn empty_dataset_is_a_config_error() {
    assert!(matches!(Trainer::new(&tiny_config(), &[]), Err(Error::Config(_))));
}

#[test]
fn wrong_resolution_is_rejected() {
    assert!(Trainer::new(&tiny_config(), &samples(2, 32)).is_err());
}

#[test]
fn epoch_order_is_a_seeded_permutation() {
    let data = samples(5, 16);
    let t = Trainer::new(&tiny_config(), &data).unwrap();
    let mut o = t.epoch_order(0);
    assert_eq!(o, t.epoch_order(0));
    assert_ne!(t.epoch_order(0), t.epoch_order(1));
    o.sort();
    assert_eq!(o, vec![0, 1, 2, 3, 4]);
    assert_eq!(t.steps_per_epoch(), 3);
    assert_eq!(t.batch_for_step(2).1.len(), 1);
    assert_eq!(t.batch_for_step(3).0, 1);
    assert_eq!(t.total_steps(), 12);
}

fn values(t: &Tensor) -> Vec<f32> {
    t.flatten_all().unwrap().to_vec1().unwrap()
}

fn snapshot(t: &Trainer, prefix: &str) -> Vec<Vec<f32>> {
    t.bundle()
        .all_params()
        .iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .map(|(_, v)| values(v.as_tensor()))
        .collect()
}

#[test]
fn one_step_updates_all_three_networks_but_not_the_feature_net() {
    let data = samples(2, 16);
    let mut t = Trainer::new(&tiny_config(), &data).unwrap();
    let probe = Tensor::randn(0f32, 1.0, (1, 3, 16, 16), &Device::Cpu).unwrap();
    let feats_before: Vec<Vec<f32>> = t.bundle().feature_net.features(&probe).unwrap().iter().map(values).collect();
    let before: Vec<_> = ["generator", "disc_global", "disc_local"].iter().map(|p| snapshot(&t, p)).collect();
    let rec = t.step().unwrap();
    assert_eq!(rec.step, 1);
    for v in [rec.d_global, rec.d_local, rec.g_gan, rec.g_vgg, rec.g_fm] {
        assert!(v.is_finite() && v > 0.0);
    }
    for (p, b) in ["generator", "disc_global", "disc_local"].iter().zip(before) {
        assert_ne!(snapshot(&t, p), b, "{p} unchanged");
    }
    let feats_after: Vec<Vec<f32>> = t.bundle().feature_net.features(&probe).unwrap().iter().map(values).collect();
    assert_eq!(feats_before, feats_after);
}

#[test]
fn identical_seeds_give_identical_runs() {
    let data = samples(3, 16);
    let run = || {
        let mut t = Trainer::new(&tiny_config(), &data).unwrap();
        for _ in 0..3 {
            t.step().unwrap();
        }
        (t.history().to_vec(), t.checkpoint().unwrap().to_bytes().unwrap())
    };
    let (ha, ba) = run();
    let (hb, bb) = run();
    assert_eq!(ha, hb);
    assert_eq!(ba, bb);
    let mut other = tiny_config();
    other.seed = 99;
    let mut t = Trainer::new(&other, &data).unwrap();
    t.step().unwrap();
    assert_ne!(t.history()[0], ha[0]);
}

#[test]
fn resume_reproduces_the_uninterrupted_trajectory() {
    let data = samples(3, 16);
    let cfg = tiny_config();
    let mut straight = Trainer::new(&cfg, &data).unwrap();
    for _ in 0..4 {
        straight.step().unwrap();
    }
    let mut first = Trainer::new(&cfg, &data).unwrap();
    first.step().unwrap();
    first.step().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    first.checkpoint().unwrap().write(&path).unwrap();
    let ckpt = acgan_core::net::Checkpoint::read(&path).unwrap();
    let mut resumed = Trainer::resume(&cfg, &data, &ckpt).unwrap();
    assert_eq!(resumed.step_count(), 2);
    resumed.step().unwrap();
    resumed.step().unwrap();
    assert_eq!(resumed.history(), straight.history());
    assert_eq!(resumed.checkpoint().unwrap().to_bytes().unwrap(), straight.checkpoint().unwrap().to_bytes().unwrap());
    let mut other = cfg.clone();
    other.seed = 5;
    assert!(Trainer::resume(&other, &data, &ckpt).is_err());
}

#[test]
fn discriminator_descends_with_generator_frozen() {
    let data = samples(4, 16);
    let mut t = Trainer::new(&tiny_config(), &data).unwrap();
    let g_before = snapshot(&t, "generator");
    let idx = [0, 1, 2, 3];
    let first = t.disc_step(&idx, 2e-4).unwrap();
    let mut best = first;
    for _ in 1..20 {
        best = best.min(t.disc_step(&idx, 2e-4).unwrap());
    }
    assert!(best < first, "{best} !< {first}");
    assert_eq!(snapshot(&t, "generator"), g_before);
}

#[test]
fn zero_epochs_returns_the_initial_checkpoint() {
    let data = samples(2, 16);
    let cfg = TrainConfig { epochs: 0, lr_constant_epochs: 0, ..tiny_config() };
    let out = train(&data, &cfg, None).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.checkpoint.step, 0);
    let fresh = Trainer::new(&cfg, &data).unwrap().checkpoint().unwrap();
    assert_eq!(out.checkpoint.to_bytes().unwrap(), fresh.to_bytes().unwrap());
}

#[test]
fn run_writes_artifacts() {
    let data = samples(2, 16);
    let cfg = TrainConfig { epochs: 2, lr_constant_epochs: 1, sample_every_epochs: 1, checkpoint_every: 1, ..tiny_config() };
    let dir = tempfile::tempdir().unwrap();
    let out = train(&data, &cfg, Some(dir.path())).unwrap();
    assert_eq!(out.history.len(), 2);
    for f in ["final.ckpt", "losses.csv", "epoch_losses.csv", "step_000001.ckpt", "samples/epoch_0001.png"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("losses.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("step,epoch,lr,d_global,d_local,g_gan,g_vgg,g_fm"));
    let grid = acgan_core::imaging::Raster::read_png(&dir.path().join("samples/epoch_0001.png")).unwrap();
    assert_eq!(grid.dims(), (32, 96));
}

#[test]
fn baseline_variants_train() {
    let data = samples(2, 16);
    let mut cfg = tiny_config();
    cfg.disc_conditioning = DiscConditioning::Symmetric;
    cfg.use_local_disc = false;
    cfg.noise.enabled = false;
    let mut t = Trainer::new(&cfg, &data).unwrap();
    let rec = t.step().unwrap();
    assert_eq!(rec.d_local, 0.0);
    assert!(rec.d_global.is_finite());
}

#[test]
fn non_finite_losses_abort_with_a_diagnostic_checkpoint() {
    let data = samples(2, 16);
    let cfg = TrainConfig { lr: 1e30, ..tiny_config() };
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(&cfg, &data).unwrap();
    t.set_output_dir(dir.path());
    let err = (0..5).find_map(|_| t.step().err()).expect("training diverges");
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    let diag = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .any(|e| e.file_name().to_string_lossy().starts_with("diagnostic_step"));
    assert!(diag);
}
