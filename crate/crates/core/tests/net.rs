mod common;

use acgan_core::net::assembly::{disc_condition_tensor, portrait_tensor, region_mask_tensor, tensor_to_portrait};
use acgan_core::net::*;
use candle_core::{DType, Device, Tensor};
use common::{sample, tiny_spec};

fn bundle(seed: u64) -> NetBundle {
    NetBundle::new(&tiny_spec(16), seed, DType::F32, &Device::Cpu).unwrap()
}

fn values(t: &Tensor) -> Vec<f32> {
    t.flatten_all().unwrap().to_vec1().unwrap()
}

#[test]
fn stack_layouts_have_fixed_channel_counts() {
    assert_eq!(StackKind::Generator.channels(), 6);
    assert_eq!(StackKind::DiscGlobal.channels(), 9);
    assert_eq!(StackKind::DiscLocal.channels(), 12);
    assert_eq!(DiscKind::Global.input_channels(), 9);
    assert_eq!(DiscKind::Local.input_channels(), 12);
}

#[test]
fn stacks_unassemble_to_their_parts() {
    let s = sample(3, 16);
    let g = assemble_generator_input(&s.cond, &s.cond.edge).unwrap();
    let parts = g.unassemble().unwrap();
    assert_eq!(parts.iter().map(|p| p.0).collect::<Vec<_>>(), ["noisy_edge", "palette", "light", "shadow"]);
    assert_eq!(parts[1].1, s.cond.palette_raster().unwrap());
    let l = assemble_disc_local_input(&s.cond, &s.image).unwrap();
    let face = l.part("face").unwrap();
    for y in 0..16 {
        for x in 0..16 {
            let inside = s.cond.face_mask.get(y, x);
            for c in 0..3 {
                let want = if inside { s.image.get(c, y, x) } else { 0.0 };
                assert_eq!(face.get(c, y, x), want);
            }
        }
    }
    assert!(l.part("nope").is_err());
}

#[test]
fn output_shapes_and_range() {
    let b = bundle(1);
    let x = Tensor::randn(0f32, 1.0, (3, 6, 16, 16), &Device::Cpu).unwrap();
    let y = b.generator.forward(&x).unwrap();
    assert_eq!(y.dims(), &[3, 3, 16, 16]);
    assert!(values(&y).iter().all(|v| v.abs() <= 1.0));
    let d = b.disc_global.forward(&Tensor::zeros((3, 9, 16, 16), DType::F32, &Device::Cpu).unwrap()).unwrap();
    assert_eq!(d.full.logits.dims(), &[3, 1, 4, 4]);
    assert_eq!(d.down.logits.dims(), &[3, 1, 2, 2]);
    assert_eq!(d.full.features.len(), 2);
    let l = b.disc_local.forward(&Tensor::zeros((1, 12, 16, 16), DType::F32, &Device::Cpu).unwrap()).unwrap();
    assert_eq!(l.kind, DiscKind::Local);
    assert!(b.disc_global.forward(&Tensor::zeros((1, 12, 16, 16), DType::F32, &Device::Cpu).unwrap()).is_err());
}

#[test]
fn batch_members_are_independent() {
    let b = bundle(2);
    let x = Tensor::randn(0f32, 1.0, (2, 6, 16, 16), &Device::Cpu).unwrap();
    let both = b.generator.forward(&x).unwrap();
    let alone = b.generator.forward(&x.narrow(0, 1, 1).unwrap()).unwrap();
    let a = values(&both.narrow(0, 1, 1).unwrap());
    let c = values(&alone);
    assert!(a.iter().zip(&c).all(|(p, q)| (p - q).abs() < 1e-5));
}

#[test]
fn scales_have_separate_parameters() {
    let b = bundle(3);
    let names: Vec<&String> = b.disc_global.params().iter().map(|(n, _)| n).collect();
    assert!(names.iter().any(|n| n.contains("full")));
    assert!(names.iter().any(|n| n.contains("down")));
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len());
    let all = b.all_params();
    assert_eq!(all.len(), b.generator.params().len() + b.disc_global.params().len() + b.disc_local.params().len());
}

#[test]
fn constant_input_gives_spatially_constant_logits() {
    let b = bundle(4);
    let x = Tensor::full(0.3f32, (1, 9, 16, 16), &Device::Cpu).unwrap();
    let d = b.disc_global.forward(&x).unwrap();
    for logits in d.logits() {
        let v = values(logits);
        assert!(v.iter().all(|l| (l - v[0]).abs() < 1e-5), "{v:?}");
    }
}

#[test]
fn feature_net_is_frozen_and_seeded() {
    let spec = FeatureNetSpec::default();
    let a = FeatureNet::new(&spec, DType::F32, &Device::Cpu).unwrap();
    let b = FeatureNet::new(&spec, DType::F32, &Device::Cpu).unwrap();
    let x = Tensor::randn(0f32, 1.0, (1, 3, 16, 16), &Device::Cpu).unwrap();
    let fa = a.features(&x).unwrap();
    let fb = b.features(&x).unwrap();
    assert_eq!(fa.len(), 5);
    assert_eq!(fa[0].dims(), &[1, 8, 16, 16]);
    assert_eq!(fa[4].dims(), &[1, 32, 4, 4]);
    for (p, q) in fa.iter().zip(&fb) {
        assert_eq!(values(p), values(q));
    }
    let var = candle_core::Var::from_tensor(&x).unwrap();
    let loss = a.features(var.as_tensor()).unwrap()[4].sum_all().unwrap();
    let grads = loss.backward().unwrap();
    assert!(grads.get(var.as_tensor()).is_some());
}

#[test]
fn distinct_seeds_give_distinct_weights() {
    let a = bundle(5).to_checkpoint(0, serde_json::Value::Null).unwrap();
    let b = bundle(6).to_checkpoint(0, serde_json::Value::Null).unwrap();
    assert_ne!(a.tensors, b.tensors);
    assert_eq!(a.tensors, bundle(5).to_checkpoint(0, serde_json::Value::Null).unwrap().tensors);
}

#[test]
fn checkpoint_round_trip_restores_outputs() {
    let b = bundle(7);
    let s = sample(1, 16);
    let input = assemble_generator_input(&s.cond, &s.cond.edge).unwrap();
    let before = b.generator_forward(&input).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let ckpt = b.to_checkpoint(3, serde_json::json!({"note": 1})).unwrap();
    let id = ckpt.write(&path).unwrap();
    assert_eq!(id.len(), 16);
    assert_eq!(id, checkpoint_id(&std::fs::read(&path).unwrap()));
    let back = Checkpoint::read(&path).unwrap();
    assert_eq!(back, ckpt);
    let restored = NetBundle::from_checkpoint(&back, DType::F32, &Device::Cpu).unwrap();
    assert_eq!(restored.generator_forward(&input).unwrap(), before);
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = bundle(8).to_checkpoint(0, serde_json::Value::Null).unwrap().to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad).is_err());
    let mut version = bytes.clone();
    version[8] = 9;
    assert!(Checkpoint::from_bytes(&version).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    let mut ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    ckpt.tensors[0].shape = vec![1];
    ckpt.tensors[0].data = vec![0.0];
    assert!(NetBundle::from_checkpoint(&ckpt, DType::F32, &Device::Cpu).is_err());
}

#[test]
fn generator_forward_checks_stack_kind_and_resolution() {
    let b = bundle(9);
    let s = sample(2, 16);
    let wrong = assemble_disc_global_input(&s.cond, &s.image).unwrap();
    assert!(matches!(b.generator_forward(&wrong), Err(acgan_core::Error::Contract(_))));
    let big = sample(2, 32);
    let input = assemble_generator_input(&big.cond, &big.cond.edge).unwrap();
    assert!(b.generator_forward(&input).is_err());
}

#[test]
fn tensor_helpers_round_trip_portraits() {
    let s = sample(4, 16);
    let t = portrait_tensor(&s.image, DType::F32, &Device::Cpu).unwrap();
    let back = tensor_to_portrait(&t, 0).unwrap();
    assert!(back.data().iter().zip(s.image.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    assert_eq!(disc_condition_tensor(&s.cond, DType::F32, &Device::Cpu).unwrap().dims(), &[1, 6, 16, 16]);
    assert_eq!(region_mask_tensor(&s.cond, DType::F32, &Device::Cpu).unwrap().dims(), &[1, 2, 16, 16]);
}
