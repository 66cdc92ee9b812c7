use std::collections::HashSet;
use std::io::{self, Write};

use crate::ledger::{TransactionRecord, TxId, TxPool};
use crate::types::{slot_start, AccountId, RecSource, Slot};

use super::{ConsumerState, MarketError, SupplierState, Trade};

/// A slice of a trade booked under one buyer account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leg {
    pub account: AccountId,
    pub quantity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoidReason {
    InsufficientCertificates { available: u64 },
    ExpiredCertificates,
    InsufficientTokens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub trade_id: u64,
    pub slot: Slot,
    pub reason: VoidReason,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SettleOutcome {
    Settled { records: usize },
    Voided(VoidReason),
}

/// A settled trade as exported to `trades.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeRow {
    pub slot: Slot,
    pub buyer_accounts: Vec<AccountId>,
    pub seller_did: String,
    pub source: RecSource,
    pub price: f64,
    pub quantity: u64,
}

/// Books executed trades: moves certificates and tokens and writes ledger
/// records. Each trade id settles at most once.
#[derive(Debug, Clone, Default)]
pub struct Settlement {
    seen: HashSet<u64>,
    audit: Vec<AuditEntry>,
}

impl Settlement {
    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn settled_count(&self) -> usize {
        self.seen.len() - self.audit.len()
    }

    /// Settles `trade`, drawing certificates from the seller's `cohort`
    /// (generation slot) and booking them under `legs`.
    #[allow(clippy::too_many_arguments)]
    pub fn settle(
        &mut self,
        trade: &Trade,
        cohort: Slot,
        legs: &[Leg],
        seller: &mut SupplierState,
        seller_did: &str,
        buyer: &mut ConsumerState,
        registry: &mut super::CertificateRegistry,
        pool: &mut TxPool,
    ) -> Result<SettleOutcome, MarketError> {
        if self.seen.contains(&trade.trade_id) {
            return Err(MarketError::AlreadySettled(trade.trade_id));
        }
        let leg_total: u64 = legs.iter().map(|l| l.quantity).sum();
        if leg_total != trade.quantity {
            return Err(MarketError::LegMismatch {
                trade_id: trade.trade_id,
                legs: leg_total,
                quantity: trade.quantity,
            });
        }
        self.seen.insert(trade.trade_id);
        let now = trade.slot;

        let available = seller.inventory.get(&cohort).map_or(0, Vec::len) as u64;
        if available < trade.quantity {
            return Ok(self.void(trade, VoidReason::InsufficientCertificates { available }));
        }
        let lifetime = seller.lifetime;
        let expired = {
            let ids = &seller.inventory[&cohort];
            ids.first()
                .and_then(|&id| registry.get(id))
                .is_some_and(|c| c.is_expired(now))
        };
        if expired {
            for id in seller.inventory.remove(&cohort).unwrap_or_default() {
                registry.retire(id);
            }
            return Ok(self.void(trade, VoidReason::ExpiredCertificates));
        }
        let cost = trade.price * trade.quantity as f64;
        if buyer.tokens < cost {
            return Ok(self.void(trade, VoidReason::InsufficientTokens));
        }

        // every check passed; from here on nothing can fail halfway except
        // the pool, which is checked before any state moves
        let records: Vec<TransactionRecord> = legs
            .iter()
            .enumerate()
            .filter(|(_, l)| l.quantity > 0)
            .map(|(k, l)| TransactionRecord {
                tx_id: TxId::derive(&[
                    b"trade",
                    &trade.trade_id.to_le_bytes(),
                    &(k as u64).to_le_bytes(),
                ]),
                seller_did: seller_did.to_string(),
                buyer_account: l.account.clone(),
                timestamp: slot_start(now),
                expiration_date: slot_start(cohort.saturating_add(lifetime)),
                rec_source: seller.source,
                rec_price: trade.price,
                rec_amount: l.quantity as u32,
                gen_time: slot_start(cohort),
            })
            .collect();
        let needed = pool.byte_size() + records.len() * crate::ledger::RECORD_BYTES;
        if needed > pool.capacity_bytes() {
            return Err(MarketError::Ledger(crate::ledger::LedgerError::PoolFull {
                byte_size: pool.byte_size(),
                capacity: pool.capacity_bytes(),
            }));
        }
        for r in &records {
            r.validate().map_err(|source| {
                MarketError::Ledger(crate::ledger::LedgerError::InvalidRecord {
                    tx_id: r.tx_id,
                    source,
                })
            })?;
        }

        let batch = seller.inventory.get_mut(&cohort).expect("checked above");
        let moved: Vec<_> = batch.drain(..trade.quantity as usize).collect();
        if batch.is_empty() {
            seller.inventory.remove(&cohort);
        }
        let mut ids = moved.into_iter();
        for leg in legs {
            for id in ids.by_ref().take(leg.quantity as usize) {
                registry.transfer(id, &leg.account);
            }
        }
        buyer.recs_owned += trade.quantity;
        buyer.tokens -= cost;
        seller.tokens += cost;
        let n = records.len();
        for r in records {
            pool.submit(r)?;
        }
        Ok(SettleOutcome::Settled { records: n })
    }

    fn void(&mut self, trade: &Trade, reason: VoidReason) -> SettleOutcome {
        self.audit.push(AuditEntry {
            trade_id: trade.trade_id,
            slot: trade.slot,
            reason,
        });
        SettleOutcome::Voided(reason)
    }
}

/// Writes `slot,buyer_account,seller_did,source,price,quantity`. A trade
/// split over several accounts lists them joined by `;`.
pub fn write_trades<W: Write>(w: W, rows: &[TradeRow]) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["slot", "buyer_account", "seller_did", "source", "price", "quantity"])?;
    for r in rows {
        let accounts: Vec<&str> = r.buyer_accounts.iter().map(AccountId::as_str).collect();
        out.write_record([
            r.slot.to_string(),
            accounts.join(";"),
            r.seller_did.clone(),
            r.source.to_string(),
            format!("{:.6}", r.price),
            r.quantity.to_string(),
        ])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::CertificateRegistry;

    struct Fixture {
        seller: SupplierState,
        buyer: ConsumerState,
        registry: CertificateRegistry,
        pool: TxPool,
        settlement: Settlement,
    }

    fn fixture(recs: f64) -> Fixture {
        let mut seller = SupplierState::new(0, AccountId::new("sup"), RecSource::Hydro, 100.0);
        seller.lifetime = 10;
        let mut registry = CertificateRegistry::default();
        registry.generate_recs(&mut seller, recs, 0).unwrap();
        let mut buyer = ConsumerState::new(0, AccountId::new("con"), 0.5, 10_000.0);
        buyer.tokens = 1_000.0;
        Fixture {
            seller,
            buyer,
            registry,
            pool: TxPool::default(),
            settlement: Settlement::default(),
        }
    }

    fn trade(id: u64, q: u64, slot: Slot) -> Trade {
        Trade {
            trade_id: id,
            bid_id: 1,
            ask_id: 0,
            buyer: AccountId::new("con"),
            seller: AccountId::new("sup"),
            price: 90.0,
            quantity: q,
            slot,
        }
    }

    fn run(f: &mut Fixture, t: &Trade, legs: &[Leg]) -> Result<SettleOutcome, MarketError> {
        f.settlement.settle(
            t,
            0,
            legs,
            &mut f.seller,
            "did:rec:ab",
            &mut f.buyer,
            &mut f.registry,
            &mut f.pool,
        )
    }

    fn leg(name: &str, q: u64) -> Leg {
        Leg {
            account: AccountId::new(name),
            quantity: q,
        }
    }

    #[test]
    fn two_rec_trade() {
        let mut f = fixture(3.0);
        let t = trade(1, 2, 1);
        let out = run(&mut f, &t, &[leg("con", 2)]).unwrap();
        assert_eq!(out, SettleOutcome::Settled { records: 1 });
        assert_eq!(f.buyer.recs_owned, 2);
        assert_eq!(f.pool.len(), 1);
        assert_eq!(f.pool.pending().next().unwrap().rec_amount, 2);
        let owned = f.registry.iter().filter(|c| c.owner.as_str() == "con").count();
        assert_eq!(owned, 2);
        assert_eq!(f.seller.inventory_len(), 1);
        assert_eq!(f.buyer.tokens, 820.0);
        assert_eq!(f.seller.tokens, 180.0);
    }

    #[test]
    fn second_settlement_is_rejected() {
        let mut f = fixture(3.0);
        let t = trade(1, 1, 1);
        run(&mut f, &t, &[leg("con", 1)]).unwrap();
        assert_eq!(
            run(&mut f, &t, &[leg("con", 1)]),
            Err(MarketError::AlreadySettled(1))
        );
    }

    #[test]
    fn expired_cohort_voids_and_retires() {
        let mut f = fixture(2.0);
        let out = run(&mut f, &trade(1, 1, 10), &[leg("con", 1)]).unwrap();
        assert_eq!(out, SettleOutcome::Voided(VoidReason::ExpiredCertificates));
        assert_eq!(f.buyer.recs_owned, 0);
        assert_eq!(f.registry.retired(), 2);
        assert_eq!(f.settlement.audit().len(), 1);
    }

    #[test]
    fn shortfalls_void_without_side_effects() {
        let mut f = fixture(1.0);
        let out = run(&mut f, &trade(1, 2, 1), &[leg("con", 2)]).unwrap();
        assert!(matches!(
            out,
            SettleOutcome::Voided(VoidReason::InsufficientCertificates { available: 1 })
        ));
        f.buyer.tokens = 10.0;
        let out = run(&mut f, &trade(2, 1, 1), &[leg("con", 1)]).unwrap();
        assert_eq!(out, SettleOutcome::Voided(VoidReason::InsufficientTokens));
        assert_eq!(f.seller.inventory_len(), 1);
        assert!(f.pool.is_empty());
    }

    #[test]
    fn split_legs_write_one_record_each() {
        let mut f = fixture(5.0);
        let legs = [leg("p1", 2), leg("p2", 2), leg("p3", 1)];
        let out = run(&mut f, &trade(1, 5, 1), &legs).unwrap();
        assert_eq!(out, SettleOutcome::Settled { records: 3 });
        assert_eq!(f.buyer.recs_owned, 5);
        let owners: Vec<_> = f.registry.iter().map(|c| c.owner.as_str().to_string()).collect();
        assert_eq!(owners, ["p1", "p1", "p2", "p2", "p3"]);
        assert!(matches!(
            run(&mut f, &trade(2, 1, 1), &legs),
            Err(MarketError::LegMismatch { .. })
        ));
    }

    #[test]
    fn csv_shape() {
        let rows = [TradeRow {
            slot: 3,
            buyer_accounts: vec![AccountId::new("a"), AccountId::new("b")],
            seller_did: "did:rec:ff".into(),
            source: RecSource::Wind,
            price: 90.0,
            quantity: 4,
        }];
        let mut buf = Vec::new();
        write_trades(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "slot,buyer_account,seller_did,source,price,quantity\n3,a;b,did:rec:ff,wind,90.000000,4\n"
        );
    }
}
