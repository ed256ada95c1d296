use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hefuzz_bench::{Fixture, HeBackend};
use hefuzz_core::encoding::{EncodingParams, MinHasher};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn minhash(c: &mut Criterion) {
    let h = MinHasher::new(EncodingParams::default().window(0, 250)).unwrap();
    c.bench_function("minhash/250", |b| b.iter(|| h.signature(black_box("maria elena lopez")).unwrap()));
}

fn engine(c: &mut Criterion) {
    let f = Fixture::new(400, 20, 8);
    let backend = f.backend();
    let mut g = c.benchmark_group("ckks");
    g.sample_size(10);

    let values: Vec<f64> = (0..backend.slots()).map(|i| (i as f64).sin()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    g.bench_function("encrypt", |b| b.iter(|| backend.encrypt(&values, &mut rng).unwrap()));

    let weights: Vec<f64> = (0..f.matching.len()).map(|i| 1.0 / (i + 1) as f64).collect();
    g.bench_function("dot_ct_pt/50", |b| b.iter(|| backend.dot_ct_pt(&f.matching, &weights).unwrap()));

    let low: Vec<_> = f.matching.iter().map(|ct| backend.drop_to_level(ct, 2).unwrap()).collect();
    g.bench_function("dot_ct_ct/50", |b| b.iter(|| backend.dot_ct_ct(&low, &low).unwrap()));

    let mask = f.responder.next_mask(backend.slots());
    g.bench_function("centroid_scores", |b| {
        b.iter(|| f.responder.compare_to_centroids(backend, &f.centroid).unwrap())
    });
    g.bench_function("column_score", |b| {
        b.iter(|| f.responder.column_score(backend, &f.indicators, &f.matching, 0, &mask).unwrap())
    });
    let cell = f.experiment.model.records()[0].1;
    g.bench_function("record_score", |b| {
        b.iter(|| f.responder.record_score(backend, &f.matching, cell, &mask).unwrap())
    });
    g.bench_function("serialize", |b| b.iter(|| backend.serialize(&f.matching[0], false)));
    g.finish();
}

criterion_group!(benches, minhash, engine);
criterion_main!(benches);
