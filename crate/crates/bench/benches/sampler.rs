use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use lda_rlct::gibbs::{self, GibbsConfig};
use lda_rlct::model::{generate_dataset, sample_true_model};
use lda_rlct::rlct::{lda_rlct, LdaShape};
use lda_rlct::{gen_error_exact, waic};

fn bench_sweep(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = sample_true_model(10, 5, 2, &mut rng).unwrap();
    let dataset = generate_dataset(&truth, 1000, &mut rng).unwrap();
    let config = GibbsConfig::default();
    let mut group = c.benchmark_group("sweep_n1000");
    for topics in [2usize, 5] {
        let mut state = gibbs::init_chain(&dataset, topics, &mut rng).unwrap();
        group.bench_function(format!("H{topics}"), |b| {
            b.iter(|| gibbs::sweep(&mut state, &dataset, &config, &mut rng))
        });
    }
    group.finish();
}

fn bench_estimators(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = sample_true_model(10, 5, 2, &mut rng).unwrap();
    let dataset = generate_dataset(&truth, 1000, &mut rng).unwrap();
    let config = GibbsConfig { burn_in: 100, thinning: 1, draws: 1000, ..Default::default() };
    let draws = gibbs::run(&dataset, 3, &config).unwrap();
    c.bench_function("waic_k1000", |b| b.iter(|| waic(black_box(&draws), &dataset).unwrap()));
    c.bench_function("gen_error_exact_k1000", |b| {
        b.iter(|| gen_error_exact(black_box(&draws), &truth).unwrap())
    });
}

fn bench_theory(c: &mut Criterion) {
    c.bench_function("lda_rlct_grid_12", |b| {
        b.iter(|| {
            let mut acc = 0u32;
            for m in 2..=12 {
                for n in 2..=12 {
                    for h in 1..=12 {
                        let r = (m - 1).min(n - 1).min(h - 1);
                        acc += lda_rlct(&LdaShape::with_rank(m, n, h, r).unwrap()).multiplicity;
                    }
                }
            }
            black_box(acc)
        })
    });
}

criterion_group!(benches, bench_sweep, bench_estimators, bench_theory);
criterion_main!(benches);
