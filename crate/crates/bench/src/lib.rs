//! Input generators shared by the benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recsim_core::ledger::{TransactionRecord, TxId};
use recsim_core::{AccountId, Order, RecSource, Side};

/// `n` asks and `n` bids with prices in 1..=1000 and quantities in 1..=50.
pub fn random_book(n: usize, seed: u64) -> (Vec<Order>, Vec<Order>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut side = |side: Side, base: u64| -> Vec<Order> {
        (0..n)
            .map(|i| {
                Order::new(
                    base + i as u64,
                    side,
                    AccountId::new(format!("acct-{i}")),
                    rng.gen_range(1.0..=1000.0),
                    rng.gen_range(1..=50),
                    0,
                )
            })
            .collect()
    };
    let asks = side(Side::Ask, 0);
    let bids = side(Side::Bid, 1 << 32);
    (asks, bids)
}

pub fn record(i: u64) -> TransactionRecord {
    TransactionRecord {
        tx_id: TxId::derive(&[b"bench", &i.to_le_bytes()]),
        seller_did: "did:rec:00".into(),
        buyer_account: AccountId::new("acct-bench"),
        timestamp: 0,
        expiration_date: 3600,
        rec_source: RecSource::Wind,
        rec_price: 10.0,
        rec_amount: 1,
        gen_time: 0,
    }
}
