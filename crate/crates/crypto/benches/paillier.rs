//! Batched Paillier matrix operations: dispatched (rayon when the `parallel`
//! feature is on) vs an explicit per-element sequential loop. Build with
//! `--no-default-features` to time the fully sequential library too.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::hint::black_box;
use stfl_crypto::{decrypt_matrix, encrypt_matrix, keygen, FixedPointCodec};

fn bench_matrix_ops(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (pk, sk) = keygen(512, &mut rng).unwrap();
    let codec = FixedPointCodec::default();
    let m = stfl_core::rng::uniform_matrix(16, 8, -2.0, 2.0, &mut rng);

    let mut group = c.benchmark_group("paillier_16x8");
    group.sample_size(10);

    group.bench_function("encrypt_matrix_dispatched", |b| {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        b.iter(|| black_box(encrypt_matrix(&pk, &m, &codec, codec.frac_bits, &mut rng).unwrap()))
    });

    group.bench_function("encrypt_per_element_seq", |b| {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        b.iter(|| {
            for v in m.data() {
                black_box(pk.encrypt_real(*v, &codec, codec.frac_bits, &mut rng).unwrap());
            }
        })
    });

    let cm = {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        encrypt_matrix(&pk, &m, &codec, codec.frac_bits, &mut rng).unwrap()
    };
    group.bench_function("decrypt_matrix_dispatched", |b| {
        b.iter(|| black_box(decrypt_matrix(&sk, &cm, &codec).unwrap()))
    });

    group.bench_function("decrypt_per_element_seq", |b| {
        b.iter(|| {
            for i in 0..cm.rows() {
                for j in 0..cm.cols() {
                    black_box(sk.decrypt_real(&cm.cell(i, j), &codec).unwrap());
                }
            }
        })
    });

    group.finish();
}

criterion_group!(benches, bench_matrix_ops);
criterion_main!(benches);
