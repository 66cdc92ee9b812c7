use std::collections::{BTreeMap, VecDeque};

use crate::types::{AccountId, RecSource, Slot, SLOTS_PER_YEAR};

use super::MarketError;

/// One certificate stands for exactly this much renewable energy.
pub const MWH_PER_REC: f64 = 1.0;

pub type CertId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct RecCertificate {
    pub cert_id: CertId,
    pub source: RecSource,
    pub gen_time: Slot,
    pub lifetime_total: Slot,
    pub owner: AccountId,
    pub retired: bool,
}

impl RecCertificate {
    /// Slots of life left at `now`, floored at zero.
    pub fn remaining(&self, now: Slot) -> Slot {
        self.lifetime_total
            .saturating_sub(now.saturating_sub(self.gen_time))
    }

    pub fn is_expired(&self, now: Slot) -> bool {
        self.remaining(now) == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplierState {
    pub supplier_id: u32,
    pub account: AccountId,
    pub source: RecSource,
    /// Current base price `b` before lifetime discounting.
    pub base_price: f64,
    pub price_bounds: (f64, f64),
    pub lifetime: Slot,
    /// Unsold certificates grouped by generation slot.
    pub inventory: BTreeMap<Slot, Vec<CertId>>,
    pub tokens: f64,
}

impl SupplierState {
    pub fn new(supplier_id: u32, account: AccountId, source: RecSource, base_price: f64) -> Self {
        SupplierState {
            supplier_id,
            account,
            source,
            base_price,
            price_bounds: (0.0, 10.0 * base_price.max(1.0)),
            lifetime: SLOTS_PER_YEAR,
            inventory: BTreeMap::new(),
            tokens: 0.0,
        }
    }

    pub fn inventory_len(&self) -> usize {
        self.inventory.values().map(Vec::len).sum()
    }

    /// Reviews the base price against stock. Holding more than `stock_cap`
    /// unsold certificates cuts the price one step; selling at least what
    /// was minted since the last review raises it; otherwise it holds.
    pub fn review_price(&mut self, minted: u64, sold: u64, stock_cap: u64, step: f64) {
        if self.inventory_len() as u64 > stock_cap {
            self.base_price *= 1.0 - step;
        } else if sold > 0 && sold >= minted {
            self.base_price *= 1.0 + step;
        }
        let (lo, hi) = self.price_bounds;
        self.base_price = self.base_price.clamp(lo, hi);
    }
}

/// Whole certificates earned by `surplus_mwh` of generation.
pub fn rec_count(surplus_mwh: f64) -> Result<u64, MarketError> {
    if !surplus_mwh.is_finite() || surplus_mwh < 0.0 {
        return Err(MarketError::NegativeSurplus(surplus_mwh));
    }
    Ok((surplus_mwh / MWH_PER_REC).floor() as u64)
}

/// Lifetime-discounted asking price. Expired certificates are retired on the
/// spot and priced at zero; already-retired ones are an error.
pub fn ask_price(
    supplier: &SupplierState,
    cert: &mut RecCertificate,
    now: Slot,
) -> Result<f64, MarketError> {
    if cert.retired {
        return Err(MarketError::Retired(cert.cert_id));
    }
    let remaining = cert.remaining(now);
    if remaining == 0 {
        cert.retired = true;
        return Ok(0.0);
    }
    Ok(discounted_price(supplier.base_price, remaining, cert.lifetime_total))
}

pub fn discounted_price(base: f64, remaining: Slot, lifetime: Slot) -> f64 {
    base * f64::from(remaining) / f64::from(lifetime)
}

/// Every certificate ever minted; ownership lives here.
#[derive(Debug, Clone, Default)]
pub struct CertificateRegistry {
    certs: Vec<RecCertificate>,
    // (expiry slot, first id, one past last id) per mint batch, in mint order
    expiry: VecDeque<(Slot, CertId, CertId)>,
    retired: u64,
}

impl CertificateRegistry {
    pub fn minted(&self) -> u64 {
        self.certs.len() as u64
    }

    pub fn retired(&self) -> u64 {
        self.retired
    }

    pub fn owned(&self) -> u64 {
        self.minted() - self.retired
    }

    pub fn get(&self, id: CertId) -> Option<&RecCertificate> {
        self.certs.get(id as usize)
    }

    /// Hands an unretired certificate to `owner`.
    pub(crate) fn transfer(&mut self, id: CertId, owner: &AccountId) {
        let c = &mut self.certs[id as usize];
        debug_assert!(!c.retired, "retired certificates are never tradable");
        c.owner = owner.clone();
    }

    pub fn iter(&self) -> impl Iterator<Item = &RecCertificate> {
        self.certs.iter()
    }

    /// Recounts owned and retired certificates from scratch.
    pub fn recount(&self) -> (u64, u64) {
        let retired = self.certs.iter().filter(|c| c.retired).count() as u64;
        (self.minted() - retired, retired)
    }

    /// Mints certificates for one supplier's surplus in `slot`; returns the
    /// number minted.
    pub fn generate_recs(
        &mut self,
        supplier: &mut SupplierState,
        surplus_mwh: f64,
        slot: Slot,
    ) -> Result<u64, MarketError> {
        let n = rec_count(surplus_mwh)?;
        if n == 0 {
            return Ok(0);
        }
        let first = self.certs.len() as CertId;
        let batch = supplier.inventory.entry(slot).or_default();
        for k in 0..n {
            let id = first + k;
            self.certs.push(RecCertificate {
                cert_id: id,
                source: supplier.source,
                gen_time: slot,
                lifetime_total: supplier.lifetime,
                owner: supplier.account.clone(),
                retired: false,
            });
            batch.push(id);
        }
        self.expiry
            .push_back((slot.saturating_add(supplier.lifetime), first, first + n));
        Ok(n)
    }

    /// Retires every certificate whose lifetime has run out by `now`.
    /// Returns the ids retired in this call.
    pub fn retire_expired(&mut self, now: Slot) -> Vec<CertId> {
        let mut out = Vec::new();
        while let Some(&(expires, lo, hi)) = self.expiry.front() {
            if expires > now {
                break;
            }
            self.expiry.pop_front();
            for id in lo..hi {
                let c = &mut self.certs[id as usize];
                if !c.retired {
                    c.retired = true;
                    self.retired += 1;
                    out.push(id);
                }
            }
        }
        out
    }

    /// Retires one certificate early (e.g. found expired at settlement).
    pub fn retire(&mut self, id: CertId) {
        if let Some(c) = self.certs.get_mut(id as usize) {
            if !c.retired {
                c.retired = true;
                self.retired += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn supplier() -> SupplierState {
        SupplierState::new(0, AccountId::new("sup"), RecSource::Wind, 100.0)
    }

    #[test]
    fn floor_semantics() {
        assert_eq!(rec_count(2.5).unwrap(), 2);
        assert_eq!(rec_count(0.9).unwrap(), 0);
        assert_eq!(rec_count(1.0).unwrap(), 1);
        assert!(matches!(rec_count(-1.0), Err(MarketError::NegativeSurplus(_))));
    }

    #[test]
    fn generate_mints_into_inventory() {
        let mut reg = CertificateRegistry::default();
        let mut s = supplier();
        assert_eq!(reg.generate_recs(&mut s, 3.7, 5).unwrap(), 3);
        assert_eq!(s.inventory[&5].len(), 3);
        assert_eq!(reg.minted(), 3);
        assert!(reg.iter().all(|c| c.gen_time == 5 && c.owner == s.account));
    }

    #[test]
    fn price_examples() {
        let s = supplier();
        let mut fresh = RecCertificate {
            cert_id: 0,
            source: RecSource::Wind,
            gen_time: 0,
            lifetime_total: 100,
            owner: s.account.clone(),
            retired: false,
        };
        assert_eq!(ask_price(&s, &mut fresh, 0).unwrap(), 100.0);
        assert_eq!(ask_price(&s, &mut fresh, 50).unwrap(), 50.0);
        assert_eq!(ask_price(&s, &mut fresh, 100).unwrap(), 0.0);
        assert!(fresh.retired);
        assert_eq!(ask_price(&s, &mut fresh, 100), Err(MarketError::Retired(0)));
    }

    #[test]
    fn expiry_retires_whole_batches() {
        let mut reg = CertificateRegistry::default();
        let mut s = supplier();
        s.lifetime = 10;
        reg.generate_recs(&mut s, 2.0, 0).unwrap();
        reg.generate_recs(&mut s, 3.0, 4).unwrap();
        assert!(reg.retire_expired(9).is_empty());
        assert_eq!(reg.retire_expired(10).len(), 2);
        assert_eq!(reg.retire_expired(14).len(), 3);
        assert_eq!((reg.owned(), reg.retired()), (0, 5));
        assert_eq!(reg.recount(), (0, 5));
    }

    #[test]
    fn price_review_directions() {
        let mut reg = CertificateRegistry::default();
        let mut s = supplier();
        reg.generate_recs(&mut s, 3.0, 0).unwrap();
        s.review_price(3, 3, 10, 0.02);
        assert!((s.base_price - 102.0).abs() < 1e-9);
        s.review_price(3, 1, 10, 0.02);
        assert!((s.base_price - 102.0).abs() < 1e-9);
        s.review_price(3, 0, 2, 0.02);
        assert!((s.base_price - 99.96).abs() < 1e-9);
        s.price_bounds = (99.0, 1000.0);
        s.review_price(0, 0, 0, 0.5);
        assert_eq!(s.base_price, 99.0);
    }
}
