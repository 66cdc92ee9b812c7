//! Certificate minting, pricing, consumer bidding, order matching and
//! settlement.

mod consumer;
mod matching;
mod settlement;
mod supplier;

pub use consumer::{
    bid_cost, choose_bid, desired_quantity, green_lag, green_ratio, penalty_fee, urgency,
    BidChoice, BidContext, ConsumerState, DesiredQuantity, MarketClock, Urgency, BID_GRID_POINTS,
    URGENCY_CAP,
};
pub use matching::{match_orders, objective, Order, Side, Trade};
pub use settlement::{
    write_trades, AuditEntry, Leg, SettleOutcome, Settlement, TradeRow, VoidReason,
};
pub use supplier::{
    ask_price, discounted_price, rec_count, CertId, CertificateRegistry, RecCertificate,
    SupplierState, MWH_PER_REC,
};

use thiserror::Error;

use crate::ledger::LedgerError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("surplus must be a non-negative number of MWh, got {0}")]
    NegativeSurplus(f64),
    #[error("certificate {0} is retired")]
    Retired(CertId),
    #[error("consumption must be positive to compute a green ratio")]
    ZeroConsumption,
    #[error("invalid order {order_id}: {reason}")]
    InvalidOrder { order_id: u64, reason: &'static str },
    #[error("market ceiling price must be positive")]
    NoPriceCeiling,
    #[error("trade {0} was already settled")]
    AlreadySettled(u64),
    #[error("trade {trade_id} legs carry {legs} RECs but the trade has {quantity}")]
    LegMismatch { trade_id: u64, legs: u64, quantity: u64 },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}
