//! Append-only DAG ledger of REC transaction records.
//!
//! Every block approves two earlier blocks. New parents are drawn uniformly
//! from the current tip set (blocks nobody approves yet). The genesis block
//! has no parents; the first block after it approves genesis twice.
//!
//! Records are admitted through a [`TxPool`] sized in a fixed 128-byte wire
//! footprint, so a full 1 MiB pool packs exactly 8192 records.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{AccountId, RecSource, Seconds};

/// Ledger footprint of one serialized [`TransactionRecord`].
pub const RECORD_BYTES: usize = 128;

/// Default pool capacity (1 MiB).
pub const DEFAULT_POOL_CAPACITY: usize = 1 << 20;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(pub [u8; 32]);

impl TxId {
    /// Derives an id by hashing arbitrary bytes.
    pub fn derive(parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        TxId(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub [u8; 32]);

impl BlockId {
    pub const NONE: BlockId = BlockId([0; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockId({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// One executed REC transfer as stored in a block.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub tx_id: TxId,
    pub seller_did: String,
    pub buyer_account: AccountId,
    pub timestamp: Seconds,
    pub expiration_date: Seconds,
    pub rec_source: RecSource,
    pub rec_price: f64,
    pub rec_amount: u32,
    pub gen_time: Seconds,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("rec_amount must be at least 1")]
    ZeroAmount,
    #[error("rec_price must be a non-negative finite number")]
    BadPrice,
    #[error("timestamp precedes generation time")]
    BeforeGeneration,
    #[error("expiration date is not after the timestamp")]
    AlreadyExpired,
}

impl TransactionRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.rec_amount == 0 {
            return Err(RecordError::ZeroAmount);
        }
        if !self.rec_price.is_finite() || self.rec_price < 0.0 {
            return Err(RecordError::BadPrice);
        }
        if self.timestamp < self.gen_time {
            return Err(RecordError::BeforeGeneration);
        }
        if self.expiration_date <= self.timestamp {
            return Err(RecordError::AlreadyExpired);
        }
        Ok(())
    }

    /// Fixed-width wire form. Variable-length identifiers are folded in as
    /// digests so every record costs exactly [`RECORD_BYTES`].
    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut out = [0u8; RECORD_BYTES];
        out[0..32].copy_from_slice(&self.tx_id.0);
        out[32..40].copy_from_slice(&self.timestamp.to_le_bytes());
        out[40..48].copy_from_slice(&self.expiration_date.to_le_bytes());
        out[48..56].copy_from_slice(&self.gen_time.to_le_bytes());
        out[56..64].copy_from_slice(&self.rec_price.to_bits().to_le_bytes());
        out[64..68].copy_from_slice(&self.rec_amount.to_le_bytes());
        out[68] = self.rec_source.code();
        let seller: [u8; 32] = Sha256::digest(self.seller_did.as_bytes()).into();
        out[72..104].copy_from_slice(&seller);
        let buyer: [u8; 32] = Sha256::digest(self.buyer_account.as_str().as_bytes()).into();
        out[104..128].copy_from_slice(&buyer[..24]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("transaction {0} is already pending")]
    DuplicateTx(TxId),
    #[error("invalid record {tx_id}: {source}")]
    InvalidRecord { tx_id: TxId, source: RecordError },
    #[error("pool is full ({byte_size} of {capacity} bytes); pack before submitting")]
    PoolFull { byte_size: usize, capacity: usize },
    #[error("pool holds {byte_size} of {capacity} bytes and no flush was requested")]
    NotEligible { byte_size: usize, capacity: usize },
    #[error("block rejected: {0}")]
    Rejected(BlockVerdict),
}

/// Pending records waiting to be packed into the next block.
#[derive(Debug, Clone)]
pub struct TxPool {
    pending: VecDeque<TransactionRecord>,
    ids: HashSet<TxId>,
    byte_size: usize,
    capacity_bytes: usize,
}

impl Default for TxPool {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_POOL_CAPACITY)
    }
}

impl TxPool {
    pub fn with_capacity(capacity_bytes: usize) -> Self {
        assert!(
            capacity_bytes >= RECORD_BYTES,
            "pool must hold at least one record"
        );
        TxPool {
            pending: VecDeque::new(),
            ids: HashSet::new(),
            byte_size: 0,
            capacity_bytes,
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn byte_size(&self) -> usize {
        self.byte_size
    }

    pub fn capacity_bytes(&self) -> usize {
        self.capacity_bytes
    }

    pub fn records_per_block(&self) -> usize {
        self.capacity_bytes / RECORD_BYTES
    }

    /// True once the pool has reached capacity and must be packed.
    pub fn is_pack_eligible(&self) -> bool {
        self.byte_size >= self.capacity_bytes
    }

    pub fn pending(&self) -> impl Iterator<Item = &TransactionRecord> {
        self.pending.iter()
    }

    pub fn submit(&mut self, rec: TransactionRecord) -> Result<(), LedgerError> {
        rec.validate().map_err(|source| LedgerError::InvalidRecord {
            tx_id: rec.tx_id,
            source,
        })?;
        if self.is_pack_eligible() {
            return Err(LedgerError::PoolFull {
                byte_size: self.byte_size,
                capacity: self.capacity_bytes,
            });
        }
        if !self.ids.insert(rec.tx_id) {
            return Err(LedgerError::DuplicateTx(rec.tx_id));
        }
        self.byte_size += RECORD_BYTES;
        self.pending.push_back(rec);
        Ok(())
    }

    fn drain_block(&mut self) -> Vec<TransactionRecord> {
        let n = self.pending.len().min(self.records_per_block());
        let batch: Vec<_> = self.pending.drain(..n).collect();
        for r in &batch {
            self.ids.remove(&r.tx_id);
        }
        self.byte_size -= n * RECORD_BYTES;
        batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub block_id: BlockId,
    pub parent_a: BlockId,
    pub parent_b: BlockId,
    pub payload: Vec<TransactionRecord>,
    pub payload_bytes: usize,
    pub created_at: Seconds,
}

impl Block {
    /// Builds a block and derives its id from parents, time and payload.
    pub fn new(
        parent_a: BlockId,
        parent_b: BlockId,
        payload: Vec<TransactionRecord>,
        created_at: Seconds,
    ) -> Self {
        let mut h = Sha256::new();
        h.update(parent_a.0);
        h.update(parent_b.0);
        h.update(created_at.to_le_bytes());
        h.update((payload.len() as u64).to_le_bytes());
        for r in &payload {
            h.update(r.to_bytes());
        }
        Block {
            block_id: BlockId(h.finalize().into()),
            parent_a,
            parent_b,
            payload_bytes: payload.len() * RECORD_BYTES,
            payload,
            created_at,
        }
    }

    fn genesis() -> Self {
        Block::new(BlockId::NONE, BlockId::NONE, Vec::new(), 0)
    }

    pub fn total_recs(&self) -> u64 {
        self.payload.iter().map(|r| u64::from(r.rec_amount)).sum()
    }
}

/// A single reason a block failed verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnresolvedParent(BlockId),
    DuplicateParents,
    ParentFromFuture(BlockId),
    DuplicateBlock,
    Oversized { payload_bytes: usize, capacity: usize },
    InvalidRecord { tx_id: TxId, reason: RecordError },
    DoubleSpend(TxId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnresolvedParent(id) => write!(f, "unresolved parent {id}"),
            Violation::DuplicateParents => f.write_str("duplicate parents outside bootstrap"),
            Violation::ParentFromFuture(id) => write!(f, "parent {id} created after child"),
            Violation::DuplicateBlock => f.write_str("block already on ledger"),
            Violation::Oversized {
                payload_bytes,
                capacity,
            } => write!(f, "payload {payload_bytes} bytes exceeds {capacity}"),
            Violation::InvalidRecord { tx_id, reason } => write!(f, "record {tx_id}: {reason}"),
            Violation::DoubleSpend(id) => write!(f, "double spend of {id}"),
        }
    }
}

/// Structured outcome of [`Ledger::verify_block`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlockVerdict {
    pub violations: Vec<Violation>,
}

impl BlockVerdict {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for BlockVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Ledger {
    genesis: BlockId,
    blocks: HashMap<BlockId, Block>,
    order: Vec<BlockId>,
    tips: BTreeSet<BlockId>,
    tx_index: HashSet<TxId>,
    capacity_bytes: usize,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new(DEFAULT_POOL_CAPACITY)
    }
}

impl Ledger {
    pub fn new(capacity_bytes: usize) -> Self {
        let g = Block::genesis();
        let id = g.block_id;
        let mut blocks = HashMap::new();
        blocks.insert(id, g);
        Ledger {
            genesis: id,
            blocks,
            order: vec![id],
            tips: BTreeSet::from([id]),
            tx_index: HashSet::new(),
            capacity_bytes,
        }
    }

    pub fn genesis(&self) -> BlockId {
        self.genesis
    }

    /// Number of blocks including genesis.
    pub fn size_blocks(&self) -> usize {
        self.order.len()
    }

    pub fn tips(&self) -> &BTreeSet<BlockId> {
        &self.tips
    }

    pub fn get(&self, id: &BlockId) -> Option<&Block> {
        self.blocks.get(id)
    }

    pub fn contains_tx(&self, id: &TxId) -> bool {
        self.tx_index.contains(id)
    }

    pub fn tx_count(&self) -> usize {
        self.tx_index.len()
    }

    /// Blocks in insertion order, genesis first.
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.order.iter().map(move |id| &self.blocks[id])
    }

    pub fn total_recs(&self) -> u64 {
        self.blocks().map(Block::total_recs).sum()
    }

    /// Picks two parents for the next block.
    ///
    /// Two distinct tips when available; with a single tip the second parent
    /// is drawn from the non-tip blocks. A genesis-only ledger yields
    /// `(genesis, genesis)`.
    pub fn select_tips<R: Rng + ?Sized>(&self, rng: &mut R) -> (BlockId, BlockId) {
        let tips: Vec<BlockId> = self.tips.iter().copied().collect();
        match tips.len() {
            0 => unreachable!("a ledger always has at least one tip"),
            1 => {
                let only = tips[0];
                if self.order.len() == 1 {
                    return (only, only);
                }
                let others: Vec<BlockId> = self
                    .order
                    .iter()
                    .copied()
                    .filter(|id| !self.tips.contains(id))
                    .collect();
                let second = others[rng.gen_range(0..others.len())];
                (only, second)
            }
            n => {
                let i = rng.gen_range(0..n);
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (tips[i], tips[j])
            }
        }
    }

    pub fn verify_block(&self, block: &Block) -> BlockVerdict {
        let mut violations = Vec::new();
        if self.blocks.contains_key(&block.block_id) {
            violations.push(Violation::DuplicateBlock);
        }
        let mut parents = vec![block.parent_a];
        if block.parent_b != block.parent_a {
            parents.push(block.parent_b);
        } else if block.parent_a != self.genesis {
            violations.push(Violation::DuplicateParents);
        }
        for p in parents {
            match self.blocks.get(&p) {
                None => violations.push(Violation::UnresolvedParent(p)),
                Some(pb) if pb.created_at > block.created_at => {
                    violations.push(Violation::ParentFromFuture(p))
                }
                Some(_) => {}
            }
        }
        if block.payload_bytes > self.capacity_bytes
            || block.payload.len() * RECORD_BYTES > self.capacity_bytes
        {
            violations.push(Violation::Oversized {
                payload_bytes: block.payload_bytes.max(block.payload.len() * RECORD_BYTES),
                capacity: self.capacity_bytes,
            });
        }
        let mut seen = HashSet::new();
        for r in &block.payload {
            if let Err(reason) = r.validate() {
                violations.push(Violation::InvalidRecord {
                    tx_id: r.tx_id,
                    reason,
                });
            }
            if self.tx_index.contains(&r.tx_id) || !seen.insert(r.tx_id) {
                violations.push(Violation::DoubleSpend(r.tx_id));
            }
        }
        BlockVerdict { violations }
    }

    /// Verifies and appends an externally built block.
    pub fn append(&mut self, block: Block) -> Result<BlockId, LedgerError> {
        let verdict = self.verify_block(&block);
        if !verdict.is_valid() {
            return Err(LedgerError::Rejected(verdict));
        }
        let id = block.block_id;
        self.tips.remove(&block.parent_a);
        self.tips.remove(&block.parent_b);
        self.tips.insert(id);
        self.tx_index.extend(block.payload.iter().map(|r| r.tx_id));
        self.order.push(id);
        self.blocks.insert(id, block);
        Ok(id)
    }

    /// Packs pending records into a new block.
    ///
    /// Requires a full pool unless `flush` is set. Returns `Ok(None)` when a
    /// flush finds the pool empty. On rejection the pool is left untouched.
    pub fn pack_block<R: Rng + ?Sized>(
        &mut self,
        pool: &mut TxPool,
        rng: &mut R,
        now: Seconds,
        flush: bool,
    ) -> Result<Option<BlockId>, LedgerError> {
        if pool.is_empty() {
            return Ok(None);
        }
        if !flush && !pool.is_pack_eligible() {
            return Err(LedgerError::NotEligible {
                byte_size: pool.byte_size,
                capacity: pool.capacity_bytes,
            });
        }
        let (a, b) = self.select_tips(rng);
        let n = pool.len().min(pool.records_per_block());
        let payload: Vec<_> = pool.pending.iter().take(n).cloned().collect();
        let block = Block::new(a, b, payload, now);
        let verdict = self.verify_block(&block);
        if !verdict.is_valid() {
            return Err(LedgerError::Rejected(verdict));
        }
        pool.drain_block();
        self.append(block).map(Some)
    }

    /// Tips recomputed from scratch: blocks referenced by no other block.
    pub fn recompute_tips(&self) -> BTreeSet<BlockId> {
        let mut referenced = HashSet::new();
        for b in self.blocks.values() {
            if b.block_id != self.genesis {
                referenced.insert(b.parent_a);
                referenced.insert(b.parent_b);
            }
        }
        self.blocks
            .keys()
            .filter(|id| !referenced.contains(*id))
            .copied()
            .collect()
    }

    /// Kahn topological order (parents before children), or `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<BlockId>> {
        let mut indegree: HashMap<BlockId, usize> = HashMap::new();
        let mut children: HashMap<BlockId, Vec<BlockId>> = HashMap::new();
        for b in self.blocks.values() {
            indegree.entry(b.block_id).or_insert(0);
            if b.block_id == self.genesis {
                continue;
            }
            let mut ps = vec![b.parent_a];
            if b.parent_b != b.parent_a {
                ps.push(b.parent_b);
            }
            for p in ps {
                *indegree.entry(b.block_id).or_insert(0) += 1;
                children.entry(p).or_default().push(b.block_id);
            }
        }
        let mut ready: Vec<BlockId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        ready.sort();
        let mut out = Vec::with_capacity(self.blocks.len());
        while let Some(id) = ready.pop() {
            out.push(id);
            for c in children.get(&id).into_iter().flatten() {
                let d = indegree.get_mut(c).expect("child registered");
                *d -= 1;
                if *d == 0 {
                    ready.push(*c);
                }
            }
        }
        (out.len() == self.blocks.len()).then_some(out)
    }

    /// Writes `block_id,parent_a,parent_b,created_at,n_tx`, one block per line.
    pub fn export<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "block_id,parent_a,parent_b,created_at,n_tx")?;
        for b in self.blocks() {
            writeln!(
                w,
                "{},{},{},{},{}",
                b.block_id,
                b.parent_a,
                b.parent_b,
                b.created_at,
                b.payload.len()
            )?;
        }
        Ok(())
    }
}
