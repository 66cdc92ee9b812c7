//! Helpers shared by the integration targets.
#![allow(dead_code)]

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recsim_core::ledger::RECORD_BYTES;
use recsim_core::{AccountId, Ledger, Order, RecSource, Side, TransactionRecord, TxId, TxPool};

pub fn order(id: u64, side: Side, price: f64, qty: u64) -> Order {
    Order::new(id, side, AccountId::new(format!("a{id}")), price, qty, 0)
}

/// Best welfare over every integer assignment of ask units to bid units.
pub fn oracle(asks: &[Order], bids: &[Order]) -> f64 {
    fn go(cell: usize, asks: &[Order], bids: &[Order], ask_left: &mut [u64], bid_left: &mut [u64]) -> f64 {
        let n = asks.len() * bids.len();
        if cell == n {
            return 0.0;
        }
        let (i, j) = (cell / bids.len(), cell % bids.len());
        let gain = bids[j].price - asks[i].price;
        let mut best = go(cell + 1, asks, bids, ask_left, bid_left);
        if gain < 0.0 {
            return best;
        }
        for q in 1..=ask_left[i].min(bid_left[j]) {
            ask_left[i] -= q;
            bid_left[j] -= q;
            best = best.max(gain * q as f64 + go(cell + 1, asks, bids, ask_left, bid_left));
            ask_left[i] += q;
            bid_left[j] += q;
        }
        best
    }
    let mut al: Vec<u64> = asks.iter().map(|o| o.quantity).collect();
    let mut bl: Vec<u64> = bids.iter().map(|o| o.quantity).collect();
    go(0, asks, bids, &mut al, &mut bl)
}

pub fn book() -> impl Strategy<Value = (Vec<Order>, Vec<Order>)> {
    (1usize..=5)
        .prop_flat_map(|n_asks| (Just(n_asks), 1usize..=(6 - n_asks).max(1)))
        .prop_flat_map(|(na, nb)| {
            (
                prop::collection::vec((1u32..=20, 1u64..=4), na),
                prop::collection::vec((1u32..=20, 1u64..=4), nb),
            )
        })
        .prop_map(|(a, b)| {
            let asks = a
                .into_iter()
                .enumerate()
                .map(|(k, (p, q))| order(k as u64, Side::Ask, f64::from(p) * 5.0, q))
                .collect();
            let bids = b
                .into_iter()
                .enumerate()
                .map(|(k, (p, q))| order(100 + k as u64, Side::Bid, f64::from(p) * 5.0, q))
                .collect();
            (asks, bids)
        })
}

pub fn record(i: u64) -> TransactionRecord {
    TransactionRecord {
        tx_id: TxId::derive(&[b"t", &i.to_le_bytes()]),
        seller_did: "did:rec:01".into(),
        buyer_account: AccountId::new("acct-x"),
        timestamp: 10,
        expiration_date: 100,
        rec_source: RecSource::Hydro,
        rec_price: 3.0,
        rec_amount: 1 + (i % 3) as u32,
        gen_time: 5,
    }
}

/// Feeds `batches` through a small pool, packing whenever it fills and
/// flushing at the end of each batch.
pub fn build(batches: &[u8], seed: u64) -> Ledger {
    let cap = 4 * RECORD_BYTES;
    let mut ledger = Ledger::new(cap);
    let mut pool = TxPool::with_capacity(cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = 0u64;
    for (t, &n) in batches.iter().enumerate() {
        for _ in 0..n {
            if pool.is_pack_eligible() {
                ledger.pack_block(&mut pool, &mut rng, t as i64, false).unwrap();
            }
            pool.submit(record(next)).unwrap();
            next += 1;
        }
        ledger.pack_block(&mut pool, &mut rng, t as i64, true).unwrap();
    }
    ledger
}

pub fn export(l: &Ledger) -> Vec<u8> {
    let mut v = Vec::new();
    l.export(&mut v).unwrap();
    v
}
