use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use atlas_core::concept_map::bin_values;
use atlas_core::ingest::EmbedOptions;
use atlas_core::scoring::score_embedding;
use atlas_core::{
    embed_corpus, normalize, top_k, Embedding, EmbeddingStore, GeoBBox, GeoPoint, Grid, ImageRecord, MapOptions,
    Parallelism, ToyEncoder,
};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Auto)];

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    normalize(&v).unwrap()
}

fn store(n: usize, dim: usize) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows = (0..n)
        .map(|i| {
            let geo = GeoPoint::new(rng.random_range(48.8..48.9), rng.random_range(2.25..2.42)).unwrap();
            (ImageRecord::new(format!("img{i:05}"), "").with_geo(geo), unit(&mut rng, dim))
        })
        .collect();
    EmbeddingStore::from_embeddings("bench", dim, rows).unwrap()
}

fn scoring(c: &mut Criterion) {
    let store = store(10_000, 512);
    let query = unit(&mut ChaCha8Rng::seed_from_u64(2), 512);
    let mut group = c.benchmark_group("score_10k_x_512");
    group.throughput(Throughput::Elements(store.len() as u64));
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new("score", name), |b| {
            b.iter(|| score_embedding(&store, &query, exec).unwrap())
        });
        group.bench_function(BenchmarkId::new("top_k_10", name), |b| {
            b.iter(|| top_k(&store, &query, 10, exec).unwrap())
        });
    }
    group.finish();
}

fn binning(c: &mut Criterion) {
    let store = store(10_000, 8);
    let geos: Vec<_> = store.records().iter().map(|r| r.geo).collect();
    let values: Vec<f64> = (0..geos.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let grid = Grid::new(GeoBBox::new(48.8, 48.9, 2.25, 2.42).unwrap(), 64, 64).unwrap();
    let options = MapOptions::new(grid);
    let mut group = c.benchmark_group("bin_10k_64x64");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| bin_values(&geos, &values, &options, exec).unwrap()));
    }
    group.finish();
}

fn embedding(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records: Vec<ImageRecord> = (0..256)
        .map(|i| {
            let path = dir.path().join(format!("{i:03}.png"));
            RgbImage::from_fn(64, 64, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
                .save(&path)
                .unwrap();
            ImageRecord::new(format!("{i:03}"), path.to_string_lossy())
        })
        .collect();
    let mut group = c.benchmark_group("embed_256_toy");
    group.sample_size(20);
    for (name, exec) in MODES {
        let options = EmbedOptions {
            batch_size: 64,
            parallelism: exec,
        };
        group.bench_function(name, |b| {
            b.iter(|| embed_corpus(&records, &ToyEncoder::new(), options).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scoring, binning, embedding);
criterion_main!(benches);
