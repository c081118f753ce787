mod common;

use candle_core::{DType, Device, Tensor};
use crownscale_core::preprocess::{preprocess_eval, AugmentConfig};
use crownscale_nn::backbone::{ResNetConfig, TextConfig, VitConfig};
use crownscale_nn::layers::dropout_rng;
use crownscale_nn::{create_model, Arch, BackboneRegistry, Error, ModelBundle, Precision};
use image::RgbImage;

use common::{tiny_small, tiny_spec};

fn random_batch(b: usize, size: usize, seed: u64) -> Tensor {
    let mut rng = crownscale_core::SplitMix64::new(seed);
    let data: Vec<f32> = (0..b * 3 * size * size).map(|_| rng.uniform(-2.0, 2.0) as f32).collect();
    Tensor::from_vec(data, (b, 3, size, size), &Device::Cpu).unwrap()
}

fn small_vit(size: usize) -> VitConfig {
    VitConfig {
        image_size: size,
        patch_size: 8,
        dim: 32,
        depth: 2,
        heads: 4,
        mlp_ratio: 2.0,
        layer_scale: Some(1e-5),
        registers: 4,
        norm_pre: false,
        patch_bias: true,
        proj_dim: None,
        eps: 1e-6,
    }
}

fn small_clip() -> Arch {
    Arch::Clip {
        vision: VitConfig {
            layer_scale: None,
            registers: 0,
            norm_pre: true,
            patch_bias: false,
            proj_dim: Some(16),
            eps: 1e-5,
            ..small_vit(32)
        },
        text: TextConfig {
            vocab_size: 64,
            context_length: 8,
            width: 16,
            heads: 2,
            layers: 1,
            embed_dim: 16,
        },
    }
}

fn small_resnet() -> Arch {
    Arch::Resnet(ResNetConfig {
        image_size: 32,
        layers: [1, 1, 1, 1],
        width: 8,
    })
}

fn small_models() -> Vec<ModelBundle> {
    let r = BackboneRegistry::default();
    vec![
        ModelBundle::untrained(tiny_small(32), 5, 1).unwrap(),
        ModelBundle::untrained(r.spec("resnet50").unwrap().with_arch(small_resnet()), 5, 2).unwrap(),
        ModelBundle::untrained(r.spec("dinov3").unwrap().with_arch(Arch::Vit(small_vit(32))), 5, 3).unwrap(),
        ModelBundle::untrained(r.spec("bioclip2").unwrap().with_arch(small_clip()), 5, 4).unwrap(),
    ]
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    (a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f32>().unwrap()
}

#[test]
fn tiny_reference_forward_shape() {
    let model = ModelBundle::untrained(tiny_spec(), 5, 0).unwrap();
    assert_eq!(model.input_size(), 64);
    assert_eq!(model.embed_dim(), 64);
    let out = model.forward(&random_batch(4, 64, 1), None).unwrap();
    assert_eq!(out.logits.dims(), &[4, 5]);
    assert_eq!(out.embeddings.dims(), &[4, 64]);
}

#[test]
fn every_family_produces_batch_by_classes_logits() {
    for model in small_models() {
        let out = model.forward(&random_batch(3, 32, 9), None).unwrap();
        assert_eq!(out.logits.dims(), &[3, 5], "{}", model.spec().backbone.name);
        assert_eq!(out.embeddings.dims()[1], model.embed_dim());
        let probs = candle_nn::ops::softmax(&out.logits, 1).unwrap().sum(1).unwrap().to_vec1::<f32>().unwrap();
        for p in probs {
            assert!((p - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn identical_images_give_identical_rows() {
    for model in small_models() {
        let one = random_batch(1, 32, 5);
        let x = Tensor::cat(&[&one, &one], 0).unwrap();
        let rows = model.forward(&x, None).unwrap().logits.to_vec2::<f32>().unwrap();
        assert_eq!(rows[0], rows[1], "{}", model.spec().backbone.name);
    }
}

#[test]
fn batch_of_one_matches_batch_of_eight() {
    for model in small_models() {
        let x = random_batch(8, 32, 11);
        let all = model.forward(&x, None).unwrap().logits;
        for i in [0usize, 3, 7] {
            let single = model.forward(&x.narrow(0, i, 1).unwrap(), None).unwrap().logits;
            let diff = max_abs_diff(&single, &all.narrow(0, i, 1).unwrap());
            assert!(diff <= 1e-5, "{}: {diff}", model.spec().backbone.name);
        }
    }
}

#[test]
fn black_tile_gives_finite_logits() {
    let model = ModelBundle::untrained(tiny_spec(), 3, 0).unwrap();
    let img = preprocess_eval(&RgbImage::new(64, 64), &AugmentConfig::with_target_size(64)).unwrap();
    let x = Tensor::from_vec(img.data, (1, 3, 64, 64), &Device::Cpu).unwrap();
    let logits = model.forward(&x, None).unwrap().logits.to_vec2::<f32>().unwrap();
    assert!(logits[0].iter().all(|v| v.is_finite()));
}

#[test]
fn wrong_input_size_is_a_shape_error() {
    for model in small_models() {
        let err = model.forward(&random_batch(1, 48, 0), None).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }
}

#[test]
fn unknown_backbone_is_a_config_error() {
    let r = BackboneRegistry::default();
    assert!(matches!(r.spec("resnet51"), Err(Error::Config(_))));
    let mut spec = r.spec("resnet50").unwrap();
    spec.name = "resnet51".into();
    let err = create_model(&r, spec, 4, None, 0).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(err.kind(), crownscale_core::ErrorKind::Validation);
}

#[test]
fn missing_weights_is_a_dependency_error_naming_the_backbone() {
    let r = BackboneRegistry::default();
    let err = create_model(&r, r.spec("plantnet").unwrap(), 4, Some(std::path::Path::new("/nonexistent/w.safetensors")), 0)
        .unwrap_err();
    assert!(matches!(&err, Error::MissingWeights { backbone, .. } if backbone == "plantnet"));
    assert_eq!(err.kind(), crownscale_core::ErrorKind::MissingDependency);
}

#[test]
fn tiny_reference_needs_no_weights() {
    let r = BackboneRegistry::default();
    let model = create_model(&r, tiny_spec(), 4, None, 0).unwrap();
    assert_eq!(model.n_classes(), 4);
}

#[test]
fn published_hyperparameters_are_enforced() {
    let r = BackboneRegistry::default();
    let mut spec = r.spec("dinov3").unwrap();
    spec.learning_rate = 1e-3;
    assert!(matches!(spec.validate(&r), Err(Error::Config(_))));
    let mut spec = r.spec("bioclip2").unwrap();
    spec.frozen_components.clear();
    assert!(matches!(spec.validate(&r), Err(Error::Config(_))));
}

#[test]
fn published_hyperparameter_table() {
    let r = BackboneRegistry::default();
    let rows = [
        ("resnet50", 224, 1e-4, 1e-4, 0.0, vec![]),
        ("dinov3", 512, 1e-4, 1e-4, 0.1, vec![]),
        ("bioclip2", 224, 5e-5, 0.0, 0.0, vec!["text_encoder".to_string()]),
        ("plantnet", 518, 6e-6, 1e-4, 0.1, vec![]),
    ];
    for (name, size, lr, wd, drop, frozen) in rows {
        let s = r.spec(name).unwrap();
        assert_eq!(s.input_size, size, "{name}");
        assert_eq!(s.learning_rate, lr, "{name}");
        assert_eq!(s.weight_decay, wd, "{name}");
        assert_eq!(s.classifier_dropout, drop, "{name}");
        assert_eq!(s.frozen_components, frozen, "{name}");
        s.validate(&r).unwrap();
    }
}

#[test]
fn gradients_reach_every_trainable_parameter_and_no_frozen_one() {
    for model in small_models() {
        let name = model.spec().backbone.name.clone();
        let x = random_batch(4, 32, 21);
        let y = Tensor::new(&[0u32, 1, 2, 3], &Device::Cpu).unwrap();
        let mut rng = dropout_rng(0);
        let logits = model.forward(&x, Some(&mut rng)).unwrap().logits;
        let loss = candle_nn::loss::cross_entropy(&logits, &y).unwrap();
        let grads = loss.backward().unwrap();
        for (pname, p) in model.store().iter() {
            let g = grads.get(p.var.as_tensor());
            if p.trainable {
                let g = g.unwrap_or_else(|| panic!("{name}: no gradient for {pname}"));
                let mass = g.abs().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
                assert!(mass > 0.0, "{name}: zero gradient for {pname}");
            } else {
                assert!(g.is_none(), "{name}: gradient reached frozen {pname}");
            }
        }
    }
}

#[test]
fn clip_text_tower_is_frozen_and_usable() {
    let model = &small_models()[3];
    let store = model.store();
    assert!(store.count(Some("text_encoder"), false) > 0);
    assert_eq!(store.count(Some("text_encoder"), true), 0);
    assert!(store.trainable_names().iter().all(|n| !n.starts_with("text.")));
    let emb = model.encoder().encode_text(&[vec![1, 5, 63, 0], vec![2, 63, 0, 0]], &Device::Cpu).unwrap().unwrap();
    assert_eq!(emb.dims(), &[2, 16]);
}

#[test]
fn mixed_precision_stays_close_to_fp32() {
    let mut model = ModelBundle::untrained(tiny_small(32), 3, 0).unwrap();
    let x = random_batch(2, 32, 3);
    let a = model.forward(&x, None).unwrap().logits;
    model.set_precision(Precision::MixedFp16);
    let b = model.forward(&x, None).unwrap().logits;
    assert_eq!(b.dtype(), DType::F32);
    assert!(max_abs_diff(&a, &b) < 1e-2);
}

#[test]
fn pretrained_encoder_weights_load_by_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let source = ModelBundle::untrained(tiny_small(32), 7, 42).unwrap();
    let path = dir.path().join("w.safetensors");
    source.store().save_safetensors(&path).unwrap();
    let r = BackboneRegistry::default();
    let model = create_model(&r, tiny_small(32), 3, Some(&path), 5).unwrap();
    assert_eq!(model.store().checksum(Some(&["encoder"])).unwrap(), source.store().checksum(Some(&["encoder"])).unwrap());
    assert_eq!(model.n_classes(), 3);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let r = BackboneRegistry::default();
    let model = ModelBundle::untrained(r.spec("resnet50").unwrap().with_arch(small_resnet()), 4, 8).unwrap();
    let x = random_batch(2, 32, 4);
    // A training-mode pass moves the batch-norm running statistics.
    model.forward(&x, Some(&mut dropout_rng(1))).unwrap();
    let before = model.forward(&x, None).unwrap().logits;
    model.save_checkpoint(dir.path(), None).unwrap();
    let (loaded, catalog) = ModelBundle::load_checkpoint(dir.path()).unwrap();
    assert!(catalog.is_none());
    assert_eq!(loaded.spec(), model.spec());
    let after = loaded.forward(&x, None).unwrap().logits;
    assert!(max_abs_diff(&before, &after) <= 1e-6);
}

/// Parameter totals against known reference architectures. ResNet-50 and
/// ViT-B/16 with a 1000-way head have well-known exact sizes.
#[test]
fn reference_architecture_parameter_counts() {
    let r = BackboneRegistry::default();
    let resnet = ModelBundle::untrained(r.spec("resnet50").unwrap(), 1000, 0).unwrap();
    assert_eq!(resnet.store().count(None, false), 25_557_032);
    drop(resnet);

    let vit_b16 = Arch::Vit(VitConfig {
        image_size: 224,
        patch_size: 16,
        dim: 768,
        depth: 12,
        heads: 12,
        mlp_ratio: 4.0,
        layer_scale: None,
        registers: 0,
        norm_pre: false,
        patch_bias: true,
        proj_dim: None,
        eps: 1e-6,
    });
    let vit = ModelBundle::untrained(r.spec("dinov3").unwrap().with_arch(vit_b16), 1000, 0).unwrap();
    assert_eq!(vit.store().count(None, false), 86_567_656);
    assert_eq!(vit.store().count(Some("encoder"), false), 85_798_656);
}

fn within(actual: usize, expected: f64, rel: f64) -> bool {
    ((actual as f64 - expected) / expected).abs() <= rel
}

/// Approximate published totals: ~25.6M, ~86M, ~149M, ~86M.
#[test]
fn named_backbone_sizes_match_published_totals() {
    let r = BackboneRegistry::default();
    let resnet = ModelBundle::untrained(r.spec("resnet50").unwrap(), 1000, 0).unwrap();
    assert!(within(resnet.store().count(None, false), 25.6e6, 0.01));
    drop(resnet);
    for (name, total) in [("dinov3", 86e6), ("plantnet", 86e6)] {
        let m = ModelBundle::untrained(r.spec(name).unwrap(), 10, 0).unwrap();
        let n = m.store().count(Some("encoder"), false);
        assert!(within(n, total, 0.01), "{name}: {n}");
    }
    let clip = ModelBundle::untrained(r.spec("bioclip2").unwrap(), 10, 0).unwrap();
    let s = clip.store();
    let n = s.count(Some("encoder"), false) + s.count(Some("text_encoder"), false);
    assert!(within(n, 149e6, 0.01), "bioclip2: {n}");
    assert_eq!(s.count(Some("text_encoder"), true), 0);
    assert!(s.count(Some("text_encoder"), false) > 60_000_000);
}
