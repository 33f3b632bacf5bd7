use casemem_bench::{embedded_bank, unit_vector};
use casemem_core::retrieval::{read_nonparametric, top_k_indices, HashEncoder};
use casemem_core::{retrieval_distribution, Encoder, State};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bench_top_k(c: &mut Criterion) {
    let mut group = c.benchmark_group("read_nonparametric");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let enc = HashEncoder::default();
    for n in [256, 2560, 25_600] {
        let bank = embedded_bank(n, 17, 0);
        let query = State::with_embedding("query", unit_vector(&mut rng, 17)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| read_nonparametric(black_box(&query), bank.cases(), 4, &enc).unwrap().len())
        });
    }
    group.finish();
}

fn bench_softmax_retrieval(c: &mut Criterion) {
    let q: Vec<(u64, f64)> = (0..2560).map(|i| (i, (i as f64 * 0.37).sin())).collect();
    c.bench_function("retrieval_distribution/2560", |b| b.iter(|| retrieval_distribution(black_box(&q), 0.5).unwrap()));
    let scores: Vec<f64> = q.iter().map(|(_, v)| *v).collect();
    c.bench_function("top_k_indices/2560", |b| b.iter(|| top_k_indices(black_box(&scores), 4)));
}

fn bench_encoder(c: &mut Criterion) {
    let enc = HashEncoder::default();
    let text = "find the population of the largest city on the northern shore of the lake";
    c.bench_function("hash_encoder/sentence", |b| b.iter(|| enc.encode(black_box(text))));
}

criterion_group!(benches, bench_top_k, bench_softmax_retrieval, bench_encoder);
criterion_main!(benches);
