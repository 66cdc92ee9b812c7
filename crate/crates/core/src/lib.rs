//! Renewable energy certificate market on a DAG ledger, confirmed by
//! reputation-weighted fast probabilistic consensus.
//!
//! Modules follow the data flow of one hourly slot: suppliers mint and price
//! certificates ([`market`]), consumers bid, the matcher clears, settlement
//! books trades into the [`ledger`] pool, [`privacy`] decides which accounts
//! appear publicly, and [`consensus`] confirms packed blocks. [`scenario`]
//! drives the whole loop; [`baselines`] holds the PoW/PoS/Prism cost models.
// Negated float comparisons are used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod consensus;
pub mod identity;
pub mod ledger;
pub mod market;
pub mod privacy;
pub mod scenario;
pub mod types;

pub use baselines::{Calibration, ConsensusKind};
pub use consensus::{FpcParams, NodeId, Opinion, ValidatorNode, ValidatorSet};
pub use identity::{Did, DidRegistry};
pub use ledger::{Block, BlockId, Ledger, TransactionRecord, TxId, TxPool};
pub use market::{ConsumerState, Order, RecCertificate, Side, SupplierState, Trade};
pub use privacy::{AccountGraph, AccountKind, PublicView};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioError, ScenarioOutput};
pub use types::{AccountId, PrincipalId, RecSource, Seconds, Slot};
