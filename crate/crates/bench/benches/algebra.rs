use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nlqf_bench::{random_gram, random_matrix};
use nlqf_core::algebra::{permanent, vacuum_expectation, wightman, OperatorMonomial};
use nlqf_core::oracles::permanent_naive;

fn permanents(c: &mut Criterion) {
    let mut g = c.benchmark_group("permanent");
    for n in [6, 10, 14, 18] {
        let m = random_matrix(n, n as u64);
        g.bench_with_input(BenchmarkId::new("ryser", n), &m, |b, m| b.iter(|| permanent(black_box(m)).unwrap()));
    }
    for n in [6, 8] {
        let m = random_matrix(n, n as u64);
        g.bench_with_input(BenchmarkId::new("naive", n), &m, |b, m| b.iter(|| permanent_naive(black_box(m)).unwrap()));
    }
    g.finish();
}

fn pairings(c: &mut Criterion) {
    let mut g = c.benchmark_group("wightman");
    for n in [4, 8, 12] {
        let xi = random_gram(n, 7);
        g.bench_with_input(BenchmarkId::new("pairing_sum", n), &xi, |b, xi| b.iter(|| wightman(black_box(xi)).unwrap()));
    }
    g.finish();
    let xi = random_gram(8, 3);
    let word = (0..8).fold(OperatorMonomial::default(), |w, i| w.annihilate(i)).create(0).create(1);
    let word = (2..8).fold(word, |w, i| w.create(i));
    c.bench_function("vacuum_expectation/8+8", |b| b.iter(|| vacuum_expectation(black_box(&word), &xi).unwrap()));
}

criterion_group!(benches, permanents, pairings);
criterion_main!(benches);
