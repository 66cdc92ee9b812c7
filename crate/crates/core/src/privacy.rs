//! Account routing that spreads a principal's purchases over original,
//! proxy and single-use accounts so the public trade distribution gives
//! less away about who is buying how much.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{self, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::market::Leg;
use crate::types::{population_stddev, AccountId, PrincipalId, Slot};

/// Upper bound on proxy accounts per principal.
pub const MAX_PROXIES: usize = 5;

/// Slots of trade history counted as a principal's activity.
pub const ACTIVITY_WINDOW: Slot = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccountKind {
    Original,
    Proxy,
    Empty,
}

impl AccountKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AccountKind::Original => "original",
            AccountKind::Proxy => "proxy",
            AccountKind::Empty => "empty",
        }
    }
}

impl fmt::Display for AccountKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrivacyError {
    #[error("principal {0} is not registered")]
    UnknownPrincipal(PrincipalId),
    #[error("principal {0} is already registered")]
    AlreadyRegistered(PrincipalId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountRecord {
    pub account_id: AccountId,
    pub kind: AccountKind,
    owner: Option<PrincipalId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Holdings {
    original: AccountId,
    proxies: Vec<AccountId>,
}

/// Routing decision for one principal's purchases in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Original,
    Empty,
    Proxy { fan_out: usize },
}

/// Per-slot amounts and activity of the principals that are trading, plus
/// their means.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivityStats {
    pub amount: BTreeMap<PrincipalId, u64>,
    pub activity: BTreeMap<PrincipalId, u64>,
    pub u_amount: f64,
    pub u_activity: f64,
}

impl ActivityStats {
    /// Means are taken over principals with a non-zero amount this slot.
    pub fn compute(
        amount: BTreeMap<PrincipalId, u64>,
        activity: BTreeMap<PrincipalId, u64>,
    ) -> Self {
        let active: Vec<PrincipalId> = amount
            .iter()
            .filter(|(_, &a)| a > 0)
            .map(|(&p, _)| p)
            .collect();
        let n = active.len().max(1) as f64;
        let u_amount = active.iter().map(|p| amount[p] as f64).sum::<f64>() / n;
        let u_activity = active
            .iter()
            .map(|p| activity.get(p).copied().unwrap_or(0) as f64)
            .sum::<f64>()
            / n;
        ActivityStats {
            amount,
            activity,
            u_amount,
            u_activity,
        }
    }
}

/// Sliding record of trades per principal.
#[derive(Debug, Clone, Default)]
pub struct ActivityLog {
    events: VecDeque<(Slot, PrincipalId, u64)>,
}

impl ActivityLog {
    pub fn record(&mut self, slot: Slot, principal: PrincipalId, trades: u64) {
        if trades > 0 {
            self.events.push_back((slot, principal, trades));
        }
    }

    /// Trades per principal within the window ending at `now` (inclusive).
    pub fn counts(&mut self, now: Slot) -> BTreeMap<PrincipalId, u64> {
        let start = now.saturating_sub(ACTIVITY_WINDOW - 1);
        while self.events.front().is_some_and(|e| e.0 < start) {
            self.events.pop_front();
        }
        let mut out = BTreeMap::new();
        for &(_, p, n) in &self.events {
            *out.entry(p).or_insert(0) += n;
        }
        out
    }
}

/// Per-account traded volume as anyone reading the ledger would see it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PublicView {
    volumes: BTreeMap<AccountId, (AccountKind, u64)>,
}

impl PublicView {
    pub fn add(&mut self, account: &AccountId, kind: AccountKind, quantity: u64) {
        let e = self
            .volumes
            .entry(account.clone())
            .or_insert((kind, 0));
        e.1 += quantity;
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn volumes(&self) -> impl Iterator<Item = (&AccountId, AccountKind, u64)> {
        self.volumes.iter().map(|(a, &(k, v))| (a, k, v))
    }

    /// Writes `account_id,kind,total_volume`.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["account_id", "kind", "total_volume"])?;
        for (a, k, v) in self.volumes() {
            out.write_record([a.as_str(), k.as_str(), &v.to_string()])?;
        }
        out.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnonymityMetrics {
    pub stddev: f64,
    pub top_share: f64,
    pub account_count: usize,
}

pub fn anonymity_metrics(view: &PublicView) -> AnonymityMetrics {
    let v: Vec<f64> = view.volumes().map(|(_, _, q)| q as f64).collect();
    let total: f64 = v.iter().sum();
    let top = v.iter().copied().fold(0.0, f64::max);
    AnonymityMetrics {
        stddev: population_stddev(&v),
        top_share: if total > 0.0 { top / total } else { 0.0 },
        account_count: v.len(),
    }
}

/// Private map from principals to the accounts they trade through.
#[derive(Debug, Clone)]
pub struct AccountGraph {
    secret: u64,
    minted: u64,
    principals: BTreeMap<PrincipalId, Holdings>,
    accounts: BTreeMap<AccountId, AccountRecord>,
    open_empties: Vec<AccountId>,
}

impl AccountGraph {
    /// `secret` salts account identifiers so they cannot be recomputed from
    /// principal ids.
    pub fn new(secret: u64) -> Self {
        AccountGraph {
            secret,
            minted: 0,
            principals: BTreeMap::new(),
            accounts: BTreeMap::new(),
            open_empties: Vec::new(),
        }
    }

    fn fresh_id(&mut self, principal: PrincipalId, kind: AccountKind) -> AccountId {
        loop {
            self.minted += 1;
            let mut h = Sha256::new();
            h.update(self.secret.to_le_bytes());
            h.update(principal.to_string().as_bytes());
            h.update(kind.as_str().as_bytes());
            h.update(self.minted.to_le_bytes());
            let id = AccountId(format!("acct-{}", &hex::encode(h.finalize())[..16]));
            if !self.accounts.contains_key(&id) {
                return id;
            }
        }
    }

    fn open(&mut self, principal: PrincipalId, kind: AccountKind) -> AccountId {
        let id = self.fresh_id(principal, kind);
        self.accounts.insert(
            id.clone(),
            AccountRecord {
                account_id: id.clone(),
                kind,
                owner: Some(principal),
            },
        );
        id
    }

    /// Registers `principal` and returns its original account.
    pub fn register(&mut self, principal: PrincipalId) -> Result<AccountId, PrivacyError> {
        if self.principals.contains_key(&principal) {
            return Err(PrivacyError::AlreadyRegistered(principal));
        }
        let original = self.open(principal, AccountKind::Original);
        self.principals.insert(
            principal,
            Holdings {
                original: original.clone(),
                proxies: Vec::new(),
            },
        );
        Ok(original)
    }

    pub fn original(&self, principal: PrincipalId) -> Result<&AccountId, PrivacyError> {
        self.principals
            .get(&principal)
            .map(|h| &h.original)
            .ok_or(PrivacyError::UnknownPrincipal(principal))
    }

    pub fn principal_count(&self) -> usize {
        self.principals.len()
    }

    pub fn account(&self, id: &AccountId) -> Option<&AccountRecord> {
        self.accounts.get(id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &AccountRecord> {
        self.accounts.values()
    }

    /// Platform-side lookup; `None` for unknown or tombstoned accounts.
    pub fn owner_of(&self, id: &AccountId) -> Option<PrincipalId> {
        self.accounts.get(id).and_then(|a| a.owner)
    }

    pub fn classify(
        &self,
        principal: PrincipalId,
        amount: u64,
        activity: u64,
        stats: &ActivityStats,
    ) -> Result<Route, PrivacyError> {
        if !self.principals.contains_key(&principal) {
            return Err(PrivacyError::UnknownPrincipal(principal));
        }
        let amount = amount as f64;
        if amount <= stats.u_amount {
            return Ok(Route::Original);
        }
        if activity as f64 <= stats.u_activity {
            return Ok(Route::Empty);
        }
        let k = if stats.u_amount > 0.0 {
            (amount / stats.u_amount).ceil() as usize
        } else {
            MAX_PROXIES
        };
        Ok(Route::Proxy {
            fan_out: k.clamp(1, MAX_PROXIES),
        })
    }

    /// Splits `quantity` according to `route`. Proxies are created on first
    /// use and kept; empty accounts are opened per call and tombstoned by
    /// [`AccountGraph::close_empties`].
    pub fn route_transaction(
        &mut self,
        principal: PrincipalId,
        route: Route,
        quantity: u64,
    ) -> Result<Vec<Leg>, PrivacyError> {
        let original = self.original(principal)?.clone();
        let legs = match route {
            Route::Original => vec![Leg {
                account: original,
                quantity,
            }],
            Route::Empty => {
                let id = self.open(principal, AccountKind::Empty);
                self.open_empties.push(id.clone());
                vec![Leg {
                    account: id,
                    quantity,
                }]
            }
            Route::Proxy { fan_out } => {
                let k = fan_out.clamp(1, MAX_PROXIES);
                while self.principals[&principal].proxies.len() < k {
                    let id = self.open(principal, AccountKind::Proxy);
                    self.principals
                        .get_mut(&principal)
                        .expect("registered")
                        .proxies
                        .push(id);
                }
                split_even(quantity, k)
                    .into_iter()
                    .zip(&self.principals[&principal].proxies)
                    .map(|(q, a)| Leg {
                        account: a.clone(),
                        quantity: q,
                    })
                    .collect()
            }
        };
        Ok(legs)
    }

    /// Drops the owner link of every empty account opened since the last
    /// call. Returns how many were closed.
    pub fn close_empties(&mut self) -> usize {
        let n = self.open_empties.len();
        for id in self.open_empties.drain(..) {
            if let Some(a) = self.accounts.get_mut(&id) {
                a.owner = None;
            }
        }
        n
    }

    pub fn kind_of(&self, id: &AccountId) -> Option<AccountKind> {
        self.accounts.get(id).map(|a| a.kind)
    }
}

/// `ceil(q / k)` per part with the remainder last; empty parts are dropped.
pub fn split_even(quantity: u64, k: usize) -> Vec<u64> {
    let k = k.max(1) as u64;
    let chunk = quantity.div_ceil(k);
    let mut left = quantity;
    let mut out = Vec::new();
    for _ in 0..k {
        let q = chunk.min(left);
        if q == 0 {
            break;
        }
        out.push(q);
        left -= q;
    }
    out
}
