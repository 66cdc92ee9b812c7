use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recsim_bench::{random_book, record};
use recsim_core::consensus::{run_fpc, ConflictPair};
use recsim_core::ledger::TxId;
use recsim_core::market::match_orders;
use recsim_core::{FpcParams, Ledger, Opinion, TxPool, ValidatorSet};

fn matching(c: &mut Criterion) {
    let mut g = c.benchmark_group("match_orders");
    for n in [10, 100, 1000] {
        let (asks, bids) = random_book(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| match_orders(black_box(&asks), black_box(&bids)).unwrap())
        });
    }
    g.finish();
}

fn fpc(c: &mut Criterion) {
    let params = FpcParams::default();
    let mut g = c.benchmark_group("run_fpc");
    for split in [1.0, 0.8, 0.5] {
        g.bench_with_input(BenchmarkId::new("honest_share", split), &split, |b, &split| {
            b.iter_batched(
                || {
                    let mut nodes = ValidatorSet::new(100, 0);
                    let cut = (100.0 * split) as u32;
                    nodes.set_opinions(|n| {
                        if n.node_id.0 < cut {
                            Opinion::FavorA
                        } else {
                            Opinion::FavorB
                        }
                    });
                    let pair = ConflictPair::new(0, TxId([1; 32]), TxId([2; 32]));
                    (nodes, pair, ChaCha8Rng::seed_from_u64(7))
                },
                |(mut nodes, mut pair, mut rng)| {
                    run_fpc(&mut pair, &mut nodes, &params, 0, &mut rng).unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn packing(c: &mut Criterion) {
    c.bench_function("pack_block_full_pool", |b| {
        b.iter_batched(
            || {
                let mut pool = TxPool::default();
                for i in 0..pool.records_per_block() as u64 {
                    pool.submit(record(i)).unwrap();
                }
                (Ledger::default(), pool, ChaCha8Rng::seed_from_u64(3))
            },
            |(mut ledger, mut pool, mut rng)| {
                ledger.pack_block(&mut pool, &mut rng, 0, false).unwrap()
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, matching, fpc, packing);
criterion_main!(benches);
