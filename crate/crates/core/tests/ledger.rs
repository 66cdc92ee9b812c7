use std::collections::HashSet;

mod common;

use common::{build, export, record};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recsim_core::ledger::{LedgerError, Violation};
use recsim_core::{Block, Ledger, TxPool};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dag_stays_acyclic_with_exact_tips(batches in prop::collection::vec(0u8..10, 1..30), seed in any::<u64>()) {
        let l = build(&batches, seed);
        prop_assert!(l.topological_order().is_some());
        prop_assert_eq!(l.tips(), &l.recompute_tips());
        let total: u64 = batches.iter().map(|&b| u64::from(b)).sum();
        prop_assert_eq!(l.tx_count() as u64, total);
        for b in l.blocks() {
            prop_assert!(b.payload.len() <= 4);
        }
    }

    #[test]
    fn reruns_export_identical_bytes(batches in prop::collection::vec(0u8..10, 1..20), seed in any::<u64>()) {
        prop_assert_eq!(export(&build(&batches, seed)), export(&build(&batches, seed)));
    }

    #[test]
    fn every_packed_record_is_rejected_again(batches in prop::collection::vec(1u8..6, 1..10), pick in any::<prop::sample::Index>()) {
        let l = build(&batches, 3);
        let total: u64 = batches.iter().map(|&b| u64::from(b)).sum();
        let i = pick.index(total as usize) as u64;
        let tip = *l.tips().iter().next().unwrap();
        let replay = Block::new(tip, tip, vec![record(i)], 1_000);
        let verdict = l.verify_block(&replay);
        prop_assert!(verdict.violations.contains(&Violation::DoubleSpend(record(i).tx_id)));
    }
}

#[test]
fn duplicate_in_pool_is_refused() {
    let mut pool = TxPool::default();
    pool.submit(record(1)).unwrap();
    assert_eq!(pool.submit(record(1)), Err(LedgerError::DuplicateTx(record(1).tx_id)));
}

#[test]
fn block_with_internal_duplicate_is_refused() {
    let l = Ledger::default();
    let g = l.genesis();
    let b = Block::new(g, g, vec![record(1), record(1)], 1);
    assert!(!l.verify_block(&b).is_valid());
}

#[test]
fn partial_pool_needs_flush() {
    let mut l = Ledger::default();
    let mut pool = TxPool::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    pool.submit(record(1)).unwrap();
    assert!(matches!(
        l.pack_block(&mut pool, &mut rng, 0, false),
        Err(LedgerError::NotEligible { .. })
    ));
    assert!(l.pack_block(&mut pool, &mut rng, 0, true).unwrap().is_some());
    assert_eq!(l.pack_block(&mut pool, &mut rng, 0, true).unwrap(), None);
}

#[test]
fn default_pool_packs_8192_records() {
    let mut l = Ledger::default();
    let mut pool = TxPool::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..8192 {
        pool.submit(record(i)).unwrap();
    }
    assert!(pool.is_pack_eligible());
    assert!(pool.submit(record(9999)).is_err());
    let id = l.pack_block(&mut pool, &mut rng, 0, false).unwrap().unwrap();
    assert_eq!(l.get(&id).unwrap().payload.len(), 8192);
    assert!(pool.is_empty());
    let ids: HashSet<_> = l.get(&id).unwrap().payload.iter().map(|r| r.tx_id).collect();
    assert_eq!(ids.len(), 8192);
}
