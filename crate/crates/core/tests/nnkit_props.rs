mod common;

use pad_core::corpus::Label;
use pad_core::nnkit::layers::Layer;
use pad_core::nnkit::*;
use pad_core::pipeline::Mode;
use pad_core::preprocess::Image;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_spec() -> DiscriminatorSpec {
    DiscriminatorSpec {
        input_size: 16,
        input_channels: 3,
        conv_channels: vec![4, 8],
        feature_dim: 4,
        leaky_slope: 0.2,
        groupnorm_groups: 4,
        base_size: 4,
    }
}

/// Weighted sum of logits over a two-sample batch.
fn objective(d: &Discriminator<f64>, x: &Tensor<f64>, w: &[f64]) -> f64 {
    d.forward(x).logits.iter().zip(w).map(|(l, w)| l * w).sum()
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut d: Discriminator<f64> = Discriminator::new(&tiny_spec(), &mut rng).unwrap();
    // larger weights than the training init so every path carries signal
    let scaled: Vec<f64> = d.flat_weights().iter().map(|_| rng.gen_range(-0.5..0.5)).collect();
    d.set_flat_weights(&scaled).unwrap();
    let x = Tensor::from_vec(2, 3, 16, 16, (0..2 * 3 * 256).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let w = [0.7, -1.3];

    d.zero_grad();
    let (_, trace) = d.forward_cached(x.clone());
    d.backward(trace, &w, false);
    let analytic: Vec<f64> = d.params().iter().flat_map(|p| p.grad.clone()).collect();

    let base = d.flat_weights();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        d.set_flat_weights(&p).unwrap();
        let up = objective(&d, &x, &w);
        p[i] = base[i] - h;
        d.set_flat_weights(&p).unwrap();
        let down = objective(&d, &x, &w);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        assert!(rel < 1e-4, "param {i}: analytic {a} numeric {numeric} rel {rel}");
    }
    assert!(worst < 1e-4);
}

#[test]
fn group_norm_output_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (n, groups, cpg) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5));
        let (h, w) = (rng.gen_range(2..9), rng.gen_range(2..9));
        let c = groups * cpg;
        let scale = rng.gen_range(0.5..20.0);
        let shift = rng.gen_range(-50.0..50.0);
        let data = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0) * scale + shift).collect();
        let x = Tensor::from_vec(n, c, h, w, data);
        let y = group_normalize(&x, groups, 1e-5, &vec![1.0; c], &vec![0.0; c]).unwrap();
        let glen = cpg * h * w;
        for s in 0..n {
            for g in 0..groups {
                let seg = &y.sample(s)[g * glen..(g + 1) * glen];
                let m = seg.iter().sum::<f64>() / glen as f64;
                let v = seg.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / glen as f64;
                assert!(m.abs() < 1e-5, "mean {m}");
                assert!((v - 1.0).abs() < 1e-4, "var {v}");
            }
        }
    }
    let x = Tensor::<f64>::zeros(1, 6, 2, 2);
    assert!(group_normalize(&x, 4, 1e-5, &[1.0; 6], &[0.0; 6]).is_err());
}

#[test]
fn full_discriminator_architecture() {
    let d = build_discriminator(&DiscriminatorSpec::full(3), 0).unwrap();
    let convs: Vec<_> = d
        .body
        .layers
        .iter()
        .filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
        .collect();
    assert_eq!(convs.len(), 5);
    assert!(convs.iter().all(|c| c.k == 5 && c.stride == 2));
    assert_eq!(d.spec.spatial_chain(), vec![256, 128, 64, 32, 16, 8]);
    let norms = d.body.layers.iter().filter(|l| matches!(l, Layer::Norm(_))).count();
    assert_eq!(norms, 4);

    let img = Image::from_fn(256, 256, 3, |x, y, c| ((x * 3 + y * 5 + c * 7) % 256) as u8);
    let f = d.features(&img).unwrap();
    assert_eq!(f.len(), 128);
    let s = d.score(&img).unwrap();
    assert!(s > 0.0 && s < 1.0);
    assert!((s - sigmoid(d.logit(&img).unwrap())).abs() < 1e-15);
}

#[test]
fn three_view_features_concatenate_to_384() {
    for mode in [Mode::Mini64, Mode::Full256] {
        let bundle = common::untrained_bundle(&mode.specs(), 4);
        let det = pad_core::detector::Detector::from_bundle(&bundle).unwrap();
        let roi = pad_core::RoiTriplet {
            direct: Image::from_fn(256, 256, 3, |x, y, _| ((x ^ y) & 255) as u8),
            raw: Image::from_fn(256, 256, 3, |x, y, _| ((x * y) & 255) as u8),
            processed: Image::from_fn(256, 256, 1, |x, _, _| (x & 255) as u8),
        };
        assert_eq!(det.features(&roi).unwrap().len(), 384);
    }
}

fn gray_group(id: &str, label: Label, v: u8) -> LabeledGroup {
    LabeledGroup::single(id, label, Image::from_fn(16, 16, 3, |x, y, _| v.wrapping_add((x * y) as u8)))
}

#[test]
fn spoof_in_training_set_is_refused() {
    let train = vec![gray_group("a", Label::Live, 10), gray_group("b", Label::Spoof, 20)];
    let val = vec![gray_group("v", Label::Live, 30)];
    let vs = vec![gray_group("w", Label::Spoof, 40)];
    let cfg = TrainConfig { max_steps: Some(2), batch_size: 2, ..TrainConfig::default() };
    match train_gan(&train, &val, &vs, &tiny_spec(), &cfg) {
        Err(NnError::OneClassViolation(id)) => assert_eq!(id, "b"),
        other => panic!("{:?}", other.map(|o| o.audit)),
    }
    let vae_spec = VaeSpec { input_size: 16, conv_channels: vec![8, 8], base_size: 4, ..VaeSpec::mini() };
    vae_spec.validate().unwrap();
    assert!(matches!(train_vae(&train, &val, &vae_spec, &cfg), Err(NnError::OneClassViolation(_))));
}

#[test]
fn live_only_training_audit() {
    let train: Vec<_> = (0..6).map(|i| gray_group(&format!("l{i}"), Label::Live, i * 20)).collect();
    let val: Vec<_> = (0..3).map(|i| gray_group(&format!("v{i}"), Label::Live, i * 30 + 5)).collect();
    let vs: Vec<_> = (0..3).map(|i| gray_group(&format!("s{i}"), Label::Spoof, i * 40 + 100)).collect();
    let cfg = TrainConfig { max_steps: Some(4), batch_size: 3, eval_every: 2, seed: 5, ..TrainConfig::default() };
    let out = train_gan(&train, &val, &vs, &tiny_spec(), &cfg).unwrap();
    assert_eq!(out.audit.spoof_backward_passes, 0);
    assert!(out.audit.live_backward_passes > 0);
    assert_eq!(out.audit.val_spoof_evaluations, 2 * vs.len() as u64);
    let again = train_gan(&train, &val, &vs, &tiny_spec(), &cfg).unwrap();
    assert_eq!(out.discriminator, again.discriminator);
}

#[test]
fn checkpoint_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec();
    let d = build_discriminator(&spec, 8).unwrap();
    let ck = Checkpoint::of_network(Architecture::Discriminator(spec), &d, 12, Some(0.5), 8);
    let stem = dir.path().join("models/d");
    ck.save(&stem).unwrap();
    let back = Checkpoint::load(&stem).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.discriminator().unwrap(), d);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adversarial_losses_are_nonnegative(
        real in proptest::collection::vec(0.0f64..=1.0, 1..10),
        fake in proptest::collection::vec(0.0f64..=1.0, 1..10),
    ) {
        let (ld, lg) = adversarial_losses(&real, &fake).unwrap();
        prop_assert!(ld >= 0.0 && lg >= 0.0 && ld.is_finite() && lg.is_finite());
    }
}
