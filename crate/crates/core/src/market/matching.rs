use std::cmp::Ordering;

use crate::types::{AccountId, Slot};

use super::MarketError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Ask,
    Bid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    /// Submission sequence number; lower means earlier.
    pub order_id: u64,
    pub side: Side,
    pub account: AccountId,
    pub price: f64,
    pub quantity: u64,
    pub slot: Slot,
}

impl Order {
    pub fn new(
        order_id: u64,
        side: Side,
        account: AccountId,
        price: f64,
        quantity: u64,
        slot: Slot,
    ) -> Self {
        Order {
            order_id,
            side,
            account,
            price,
            quantity,
            slot,
        }
    }

    fn check(&self, side: Side) -> Result<(), MarketError> {
        let reason = if self.side != side {
            "order on the wrong side of the book"
        } else if !self.price.is_finite() || self.price < 0.0 {
            "price must be a non-negative number"
        } else if self.quantity == 0 {
            "quantity must be at least 1"
        } else {
            return Ok(());
        };
        Err(MarketError::InvalidOrder {
            order_id: self.order_id,
            reason,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub trade_id: u64,
    pub bid_id: u64,
    pub ask_id: u64,
    pub buyer: AccountId,
    pub seller: AccountId,
    /// Execution price, always the ask's.
    pub price: f64,
    pub quantity: u64,
    pub slot: Slot,
}

fn priority(a: &Order, b: &Order, price: Ordering) -> Ordering {
    price
        .then(a.order_id.cmp(&b.order_id))
        .then_with(|| a.account.cmp(&b.account))
}

/// Greedy price-priority matching: the highest remaining bid meets the
/// cheapest remaining ask while it still covers that ask. Trade ids are
/// `slot << 32 | sequence` so they stay unique across slots.
pub fn match_orders(asks: &[Order], bids: &[Order]) -> Result<Vec<Trade>, MarketError> {
    for a in asks {
        a.check(Side::Ask)?;
    }
    for b in bids {
        b.check(Side::Bid)?;
    }
    let mut asks: Vec<&Order> = asks.iter().collect();
    let mut bids: Vec<&Order> = bids.iter().collect();
    asks.sort_by(|a, b| priority(a, b, a.price.total_cmp(&b.price)));
    bids.sort_by(|a, b| priority(a, b, b.price.total_cmp(&a.price)));

    let mut trades = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut ask_left = asks.first().map_or(0, |o| o.quantity);
    let mut bid_left = bids.first().map_or(0, |o| o.quantity);
    while i < asks.len() && j < bids.len() {
        let (ask, bid) = (asks[i], bids[j]);
        if bid.price < ask.price {
            break;
        }
        let q = ask_left.min(bid_left);
        trades.push(Trade {
            trade_id: (u64::from(bid.slot) << 32) | trades.len() as u64,
            bid_id: bid.order_id,
            ask_id: ask.order_id,
            buyer: bid.account.clone(),
            seller: ask.account.clone(),
            price: ask.price,
            quantity: q,
            slot: bid.slot,
        });
        ask_left -= q;
        bid_left -= q;
        if ask_left == 0 {
            i += 1;
            ask_left = asks.get(i).map_or(0, |o| o.quantity);
        }
        if bid_left == 0 {
            j += 1;
            bid_left = bids.get(j).map_or(0, |o| o.quantity);
        }
    }
    Ok(trades)
}

/// Welfare of a set of trades: what the buyers were willing to pay minus
/// what the sellers asked, over every executed unit.
pub fn objective(trades: &[Trade], asks: &[Order], bids: &[Order]) -> f64 {
    let price_of = |book: &[Order], id: u64| {
        book.iter()
            .find(|o| o.order_id == id)
            .map_or(0.0, |o| o.price)
    };
    trades
        .iter()
        .map(|t| (price_of(bids, t.bid_id) - price_of(asks, t.ask_id)) * t.quantity as f64)
        .sum()
}
