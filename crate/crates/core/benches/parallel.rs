//! Rayon global pool against the one-thread baseline on the two batch
//! workloads of the pipeline: ROI extraction and five-component scoring.
//! Build with `--no-default-features` to time the plain sequential fallback.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pad_core::corpus::{synth_capture, SynthConfig};
use pad_core::detector::Detector;
use pad_core::nnkit::{build_discriminator, Architecture, Checkpoint, DiscriminatorSpec, Vae};
use pad_core::par;
use pad_core::pipeline::{assemble_bundle, score_all, Mode};
use pad_core::preprocess::{extract_roi_triplet, Calibration, CaptureTriplet, RoiTriplet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BATCH: usize = 8;

fn captures() -> Vec<CaptureTriplet> {
    let cfg = SynthConfig {
        image_size: 256,
        ..SynthConfig::default()
    };
    (0..BATCH)
        .map(|i| synth_capture(&cfg, i, false, None).unwrap().triplet)
        .collect()
}

fn extract_all(caps: &[CaptureTriplet], cal: &Calibration) -> Vec<RoiTriplet> {
    par::map_slice(caps, |c| extract_roi_triplet(c, cal).unwrap().0)
}

fn detector() -> Detector {
    let specs = Mode::Mini64.specs();
    let disc = |spec: &DiscriminatorSpec, seed| {
        let d = build_discriminator(spec, seed).unwrap();
        Checkpoint::of_network(Architecture::Discriminator(spec.clone()), &d, 0, None, seed)
    };
    let vae: Vae<f32> = Vae::new(&specs.vae, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let vae = Checkpoint::of_network(Architecture::Vae(specs.vae.clone()), &vae, 0, None, 9);
    let bundle = assemble_bundle(
        [disc(&specs.direct, 1), disc(&specs.raw, 2), disc(&specs.processed, 3), disc(&specs.patch, 4), vae],
        0.05,
    );
    Detector::from_bundle(&bundle).unwrap()
}

fn bench_preprocess(c: &mut Criterion) {
    let caps = captures();
    let cal = Calibration::identity();
    let mut g = c.benchmark_group("extract_roi_batch");
    g.sample_size(10);
    g.bench_function("pool", |b| b.iter(|| extract_all(&caps, &cal)));
    g.bench_function("single_thread", |b| b.iter(|| par::single_threaded(|| extract_all(&caps, &cal))));
    g.finish();
}

fn bench_scoring(c: &mut Criterion) {
    let rois = extract_all(&captures(), &Calibration::identity());
    let det = detector();
    let refs: Vec<&RoiTriplet> = rois.iter().collect();
    let mut g = c.benchmark_group("score_batch");
    g.sample_size(10);
    g.bench_function("pool", |b| b.iter_batched(|| refs.clone(), |r| score_all(&det, &r).unwrap(), BatchSize::SmallInput));
    g.bench_function("single_thread", |b| {
        b.iter_batched(|| refs.clone(), |r| par::single_threaded(|| score_all(&det, &r).unwrap()), BatchSize::SmallInput)
    });
    g.finish();
}

criterion_group!(benches, bench_preprocess, bench_scoring);
criterion_main!(benches);
