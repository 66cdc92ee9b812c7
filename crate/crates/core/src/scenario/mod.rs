//! Scenario configuration, data ingestion and the hourly market loop.

mod config;
mod data;

pub use config::{ScenarioConfig, SEED_ENV};
pub use data::{
    load_demand_csv, load_generation_csv, parse_demand, parse_generation, DemandData,
    GenerationData, Period,
};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{BaselineError, Calibration, CalibrationAnchors, ConsensusKind};
use crate::consensus::{
    run_fpc, write_trace, ConflictPair, ConsensusError, NodeId, Opinion, RoundTrace, Tick,
    ValidatorNode, ValidatorSet,
};
use crate::identity::{create_did, sign_rec, verify_rec, Verdict};
use crate::ledger::{BlockId, Ledger, LedgerError, TxId, TxPool, RECORD_BYTES};
use crate::market::{
    choose_bid, discounted_price, match_orders, AuditEntry, BidContext, CertificateRegistry,
    ConsumerState, Leg, MarketClock, MarketError, Order, SettleOutcome, Settlement, Side,
    SupplierState, TradeRow, BID_GRID_POINTS,
};
use crate::privacy::{
    anonymity_metrics, AccountGraph, AccountKind, ActivityLog, ActivityStats, PrivacyError,
    PublicView, Route,
};
use crate::types::{slot_start, PrincipalId, RecSource, Slot};

/// Share of honest validators that saw the first half of an injected double
/// spend before the second.
pub const FIRST_SEEN_SHARE: f64 = 0.8;

/// Converts slot consumption to the unit the penalty coefficient is quoted
/// per (kWh) inside the quantity cap.
pub const KWH_PER_MWH: f64 = 1_000.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Data {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0} holds no data rows")]
    EmptyScenario(String),
    #[error("slot {slot}: {source}")]
    Step { slot: Slot, source: StepError },
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("mint batch of supplier {0} failed signature check")]
    Identity(u32),
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub slot: Slot,
    pub consensus_kind: ConsensusKind,
    pub mean_tx_time: f64,
    pub energy_units: f64,
    pub trades_executed: u64,
    pub recs_traded: u64,
    pub mean_price_by_source: [Option<f64>; 4],
    pub green_ratio_by_consumer: Vec<f64>,
    pub account_stddev: f64,
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricsRow], n_consumers: usize) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = [
        "slot",
        "consensus_kind",
        "mean_tx_time",
        "energy_units",
        "trades_executed",
        "recs_traded",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(RecSource::ALL.iter().map(|s| format!("price_{s}")));
    header.extend((0..n_consumers).map(|j| format!("green_ratio_{j}")));
    header.push("account_stddev".into());
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.slot.to_string(),
            r.consensus_kind.to_string(),
            format!("{:.9}", r.mean_tx_time),
            format!("{:.9}", r.energy_units),
            r.trades_executed.to_string(),
            r.recs_traded.to_string(),
        ];
        rec.extend(
            r.mean_price_by_source
                .iter()
                .map(|p| p.map_or(String::new(), |p| format!("{p:.6}"))),
        );
        rec.extend(r.green_ratio_by_consumer.iter().map(|g| format!("{g:.6}")));
        rec.push(format!("{:.6}", r.account_stddev));
        out.write_record(&rec)?;
    }
    out.flush()
}

/// Cuts `quantity` off the front of a principal's routed legs for the slot.
fn take_legs(queue: &mut VecDeque<Leg>, quantity: u64) -> Vec<Leg> {
    let mut out = Vec::new();
    let mut left = quantity;
    while left > 0 {
        let Some(front) = queue.front_mut() else { break };
        let q = front.quantity.min(left);
        out.push(Leg {
            account: front.account.clone(),
            quantity: q,
        });
        front.quantity -= q;
        left -= q;
        if front.quantity == 0 {
            queue.pop_front();
        }
    }
    out
}

/// Public volumes settled within one slot, with and without routing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotPrivacy {
    pub slot: Slot,
    pub routed: PublicView,
    pub unrouted: PublicView,
}

/// Final state and logs of a run.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub config: ScenarioConfig,
    pub metrics: Vec<MetricsRow>,
    pub trades: Vec<TradeRow>,
    pub ledger: Ledger,
    /// Volumes per routed account.
    pub public_view: PublicView,
    /// Volumes the same trades would show under original accounts only.
    pub unrouted_view: PublicView,
    /// Per-slot views of every slot that settled a trade.
    pub slot_views: Vec<SlotPrivacy>,
    pub consumers: Vec<ConsumerState>,
    pub suppliers: Vec<SupplierState>,
    pub registry: CertificateRegistry,
    pub validators: ValidatorSet,
    pub accounts: AccountGraph,
    pub conflict_trace: Vec<RoundTrace>,
    pub conflicts_resolved: u64,
    pub audit: Vec<AuditEntry>,
}

impl ScenarioOutput {
    /// Writes `trades.csv`, `metrics.csv`, `ledger.txt`, `accounts.csv` and
    /// `fpc_trace.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), ScenarioError> {
        let io_err = |p: &Path| {
            let p = p.to_path_buf();
            move |e| ScenarioError::Io { path: p, source: e }
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let create = |name: &str| {
            let p = dir.join(name);
            File::create(&p)
                .map(BufWriter::new)
                .map_err(io_err(&p))
                .map(|f| (f, p))
        };
        let (f, p) = create("trades.csv")?;
        crate::market::write_trades(f, &self.trades).map_err(io_err(&p))?;
        let (f, p) = create("metrics.csv")?;
        write_metrics(f, &self.metrics, self.consumers.len()).map_err(io_err(&p))?;
        let (mut f, p) = create("ledger.txt")?;
        self.ledger
            .export(&mut f)
            .and_then(|_| f.flush())
            .map_err(io_err(&p))?;
        let (f, p) = create("accounts.csv")?;
        self.public_view.write_csv(f).map_err(io_err(&p))?;
        let (f, p) = create("fpc_trace.csv")?;
        write_trace(f, &self.conflict_trace).map_err(io_err(&p))?;
        Ok(())
    }
}

/// Loads the configured CSVs and runs every slot.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput, ScenarioError> {
    config.validate()?;
    let generation = load_generation_csv(&config.generation_csv)?;
    let demand = load_demand_csv(&config.demand_csv)?;
    run_with_data(config, &generation, &demand)
}

/// Runs a scenario on already-loaded data. Data shorter than the horizon
/// wraps around.
pub fn run_with_data(
    config: &ScenarioConfig,
    generation: &GenerationData,
    demand: &DemandData,
) -> Result<ScenarioOutput, ScenarioError> {
    if generation.is_empty() {
        return Err(ScenarioError::EmptyScenario("generation data".into()));
    }
    if demand.is_empty() {
        return Err(ScenarioError::EmptyScenario("demand data".into()));
    }
    if demand.n_consumers() < config.n_consumers as usize {
        return Err(ScenarioError::Invalid(format!(
            "demand data covers {} consumers, scenario needs {}",
            demand.n_consumers(),
            config.n_consumers
        )));
    }
    let mut sim = Sim::new(config, generation, demand)?;
    for slot in 0..config.n_slots {
        sim.step(slot)
            .map_err(|source| ScenarioError::Step { slot, source })?;
    }
    Ok(sim.finish())
}

fn seeded_bytes(seed: u64, tag: &str, index: u32) -> [u8; 32] {
    Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(tag.as_bytes())
        .chain_update(index.to_le_bytes())
        .finalize()
        .into()
}

struct Seller {
    state: SupplierState,
    did: String,
    key: ed25519_dalek::SigningKey,
    public_key: [u8; 32],
    /// Generation below one whole certificate, carried to the next slot.
    banked_mwh: f64,
    /// Certificates minted since the last price review.
    unreviewed: u64,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    generation: &'a GenerationData,
    demand: &'a DemandData,
    rng: ChaCha8Rng,
    calibration: Calibration,
    sellers: Vec<Seller>,
    suppliers_per_source: [u32; 4],
    consumers: Vec<ConsumerState>,
    registry: CertificateRegistry,
    settlement: Settlement,
    clock: MarketClock,
    ledger: Ledger,
    pool: TxPool,
    validators: ValidatorSet,
    accounts: AccountGraph,
    activity: ActivityLog,
    public_view: PublicView,
    unrouted_view: PublicView,
    slot_views: Vec<SlotPrivacy>,
    metrics: Vec<MetricsRow>,
    trades: Vec<TradeRow>,
    conflict_trace: Vec<RoundTrace>,
    blocks_confirmed: u64,
    conflicts_resolved: u64,
}

impl<'a> Sim<'a> {
    fn new(
        cfg: &'a ScenarioConfig,
        generation: &'a GenerationData,
        demand: &'a DemandData,
    ) -> Result<Self, ScenarioError> {
        let calibration = Calibration::fit(
            &CalibrationAnchors::default(),
            &cfg.fpc,
            cfg.n_validators.max(cfg.fpc.quorum_size as u32),
            cfg.seed,
        )
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let mut accounts = AccountGraph::new(u64::from_le_bytes(
            seeded_bytes(cfg.seed, "accounts", 0)[..8].try_into().unwrap(),
        ));
        let register = |accounts: &mut AccountGraph, p| {
            accounts
                .register(p)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))
        };

        let mut sellers = Vec::new();
        let mut suppliers_per_source = [0u32; 4];
        for i in 0..cfg.n_suppliers {
            let source = RecSource::ALL[i as usize % 4];
            suppliers_per_source[source.index()] += 1;
            let account = register(&mut accounts, PrincipalId::Supplier(i))?;
            let mut state = SupplierState::new(i, account, source, cfg.initial_price);
            state.price_bounds = cfg.price_bounds;
            state.lifetime = cfg.rec_lifetime;
            let (doc, key) = create_did(&seeded_bytes(cfg.seed, "supplier", i));
            sellers.push(Seller {
                state,
                did: doc.did.to_string(),
                key,
                public_key: doc.public_key,
                banked_mwh: 0.0,
                unreviewed: 0,
            });
        }
        let mut consumers = Vec::new();
        for j in 0..cfg.n_consumers {
            let account = register(&mut accounts, PrincipalId::Consumer(j))?;
            let mut c = ConsumerState::new(j, account, cfg.target_for(j), cfg.gamma);
            c.bid_bounds = cfg.bid_bounds;
            c.tokens = cfg.initial_tokens;
            consumers.push(c);
        }

        Ok(Sim {
            cfg,
            generation,
            demand,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            calibration,
            sellers,
            suppliers_per_source,
            consumers,
            registry: CertificateRegistry::default(),
            settlement: Settlement::default(),
            clock: MarketClock::new(cfg.n_slots, cfg.initial_price),
            ledger: Ledger::default(),
            pool: TxPool::default(),
            validators: ValidatorSet::new(cfg.n_validators, 0),
            accounts,
            activity: ActivityLog::default(),
            public_view: PublicView::default(),
            unrouted_view: PublicView::default(),
            slot_views: Vec::new(),
            metrics: Vec::new(),
            trades: Vec::new(),
            conflict_trace: Vec::new(),
            blocks_confirmed: 0,
            conflicts_resolved: 0,
        })
    }

    fn finish(self) -> ScenarioOutput {
        ScenarioOutput {
            config: self.cfg.clone(),
            metrics: self.metrics,
            trades: self.trades,
            ledger: self.ledger,
            public_view: self.public_view,
            unrouted_view: self.unrouted_view,
            slot_views: self.slot_views,
            consumers: self.consumers,
            suppliers: self.sellers.into_iter().map(|s| s.state).collect(),
            registry: self.registry,
            validators: self.validators,
            accounts: self.accounts,
            conflict_trace: self.conflict_trace,
            conflicts_resolved: self.conflicts_resolved,
            audit: self.settlement.audit().to_vec(),
        }
    }

    fn mint(&mut self, slot: Slot, data_slot: usize) -> Result<(), StepError> {
        let hourly = self.generation.per_slot[data_slot % self.generation.len()];
        for s in &mut self.sellers {
            let src = s.state.source.index();
            let surplus = hourly[src] / f64::from(self.suppliers_per_source[src]) + s.banked_mwh;
            let n = self.registry.generate_recs(&mut s.state, surplus, slot)?;
            s.banked_mwh = surplus - n as f64;
            s.unreviewed += n;
            if n == 0 {
                continue;
            }
            let payload = format!("{};{};{}", s.state.source, slot, n);
            let t_gen = slot_start(slot);
            let t_exp = slot_start(slot.saturating_add(s.state.lifetime));
            let signed = sign_rec(payload.as_bytes(), &s.key, t_gen, t_exp)
                .map_err(|_| StepError::Identity(s.state.supplier_id))?;
            if verify_rec(&signed, &s.public_key, t_gen) != Verdict::Valid {
                return Err(StepError::Identity(s.state.supplier_id));
            }
        }
        Ok(())
    }

    /// Cheapest asks, in book order, until they cover `wanted` RECs.
    /// Matching never reaches past that point, so the rest of the book can
    /// stay unbuilt.
    fn ask_prefix(&self, slot: Slot, wanted: u64) -> (Vec<Order>, HashMap<u64, (usize, Slot)>) {
        let mut cursors: Vec<_> = self
            .sellers
            .iter()
            .map(|s| s.state.inventory.iter().peekable())
            .collect();
        let mut asks = Vec::new();
        let mut meta = HashMap::new();
        let mut covered = 0;
        while covered < wanted {
            let mut best: Option<(f64, u64, usize)> = None;
            for (i, cur) in cursors.iter_mut().enumerate() {
                let Some((&cohort, _)) = cur.peek() else { continue };
                let s = &self.sellers[i].state;
                let remaining = s.lifetime.saturating_sub(slot - cohort);
                let price = discounted_price(s.base_price, remaining, s.lifetime);
                let id = (u64::from(cohort) << 16) | i as u64;
                let better = best.is_none_or(|(bp, bid, _)| {
                    price.total_cmp(&bp).then(id.cmp(&bid)).is_lt()
                });
                if better {
                    best = Some((price, id, i));
                }
            }
            let Some((price, id, i)) = best else { break };
            let (&cohort, certs) = cursors[i].next().expect("peeked");
            let q = certs.len() as u64;
            asks.push(Order::new(
                id,
                Side::Ask,
                self.sellers[i].state.account.clone(),
                price,
                q,
                slot,
            ));
            meta.insert(id, (i, cohort));
            covered += q;
        }
        (asks, meta)
    }

    fn step(&mut self, slot: Slot) -> Result<(), StepError> {
        let tick = Tick::from(slot);
        let lambda = self.cfg.fpc.lambda;
        self.validators.decay_all(tick, lambda);
        self.clock.advance(slot);
        let data_slot = slot as usize;

        self.mint(slot, data_slot)?;
        self.registry.retire_expired(slot);
        for s in &mut self.sellers {
            let lifetime = s.state.lifetime;
            s.state.inventory.retain(|&g, _| g + lifetime > slot);
        }

        let volume: u64 = self
            .sellers
            .iter()
            .map(|s| s.state.inventory_len() as u64)
            .sum();
        let price_at = |s: &SupplierState, cohort: Slot| {
            discounted_price(s.base_price, s.lifetime - (slot - cohort), s.lifetime)
        };
        let mut highest: Option<f64> = None;
        let mut lowest: Option<f64> = None;
        for s in self.sellers.iter().map(|s| &s.state) {
            if let (Some(&new), Some(&old)) =
                (s.inventory.keys().next_back(), s.inventory.keys().next())
            {
                let (hi, lo) = (price_at(s, new), price_at(s, old));
                highest = Some(highest.map_or(hi, |h: f64| h.max(hi)));
                lowest = Some(lowest.map_or(lo, |l: f64| l.min(lo)));
            }
        }
        if let Some(h) = highest {
            self.clock.p_max_current = h;
        }
        let q_max = (self.cfg.q_max_share * volume as f64).floor() as u64;

        let mut bids = Vec::new();
        for (j, c) in self.consumers.iter_mut().enumerate() {
            let d = data_slot % self.demand.len();
            let e_c = self.demand.consumption[j][d];
            c.record_slot(e_c, self.demand.own_renewable[j][d]);
            let Some(lowest) = lowest else { continue };
            if q_max == 0 {
                continue;
            }
            let ctx = BidContext::for_consumer(c, &self.clock, e_c, e_c * KWH_PER_MWH, q_max, lowest)?;
            if ctx.lag <= 0.0 {
                continue;
            }
            if let Some(choice) = choose_bid(&ctx, BID_GRID_POINTS)? {
                bids.push(Order::new(
                    j as u64,
                    Side::Bid,
                    c.account.clone(),
                    choice.price,
                    choice.quantity,
                    slot,
                ));
            }
        }

        let wanted: u64 = bids.iter().map(|b| b.quantity).sum();
        let (asks, ask_meta) = self.ask_prefix(slot, wanted);
        let trades = match_orders(&asks, &bids)?;

        // privacy routing is decided per buyer over the whole slot
        let mut amount: BTreeMap<PrincipalId, u64> = BTreeMap::new();
        let mut count: BTreeMap<PrincipalId, u64> = BTreeMap::new();
        for t in &trades {
            let p = PrincipalId::Consumer(t.bid_id as u32);
            *amount.entry(p).or_default() += t.quantity;
            *count.entry(p).or_default() += 1;
        }
        for (&p, &n) in &count {
            self.activity.record(slot, p, n);
        }
        let stats = ActivityStats::compute(amount.clone(), self.activity.counts(slot));
        let mut routes = BTreeMap::new();
        for (&p, &a) in &amount {
            let route = if self.cfg.privacy_enabled {
                let act = stats.activity.get(&p).copied().unwrap_or(0);
                self.accounts.classify(p, a, act, &stats)?
            } else {
                Route::Original
            };
            let legs = self.accounts.route_transaction(p, route, a)?;
            routes.insert(p, VecDeque::from(legs));
        }

        let mut view = SlotPrivacy {
            slot,
            ..SlotPrivacy::default()
        };
        let mut sold = vec![0u64; self.sellers.len()];
        let mut executed = 0u64;
        let mut recs = 0u64;
        let mut price_sum = [(0.0, 0u64); 4];
        for t in &trades {
            let j = t.bid_id as usize;
            let p = PrincipalId::Consumer(j as u32);
            let legs = take_legs(routes.get_mut(&p).expect("routed above"), t.quantity);
            let (i, cohort) = ask_meta[&t.ask_id];
            if self.pool.byte_size() + legs.len() * RECORD_BYTES > self.pool.capacity_bytes() {
                self.pack(slot, false)?;
            }
            let seller = &mut self.sellers[i];
            let outcome = self.settlement.settle(
                t,
                cohort,
                &legs,
                &mut seller.state,
                &seller.did,
                &mut self.consumers[j],
                &mut self.registry,
                &mut self.pool,
            )?;
            if !matches!(outcome, SettleOutcome::Settled { .. }) {
                continue;
            }
            sold[i] += t.quantity;
            executed += 1;
            recs += t.quantity;
            let src = seller.state.source;
            price_sum[src.index()].0 += t.price * t.quantity as f64;
            price_sum[src.index()].1 += t.quantity;
            for leg in &legs {
                let kind = self
                    .accounts
                    .kind_of(&leg.account)
                    .unwrap_or(AccountKind::Original);
                self.public_view.add(&leg.account, kind, leg.quantity);
                view.routed.add(&leg.account, kind, leg.quantity);
            }
            let original = &self.consumers[j].account;
            self.unrouted_view
                .add(original, AccountKind::Original, t.quantity);
            view.unrouted.add(original, AccountKind::Original, t.quantity);
            self.trades.push(TradeRow {
                slot,
                buyer_accounts: legs.iter().map(|l| l.account.clone()).collect(),
                seller_did: seller.did.clone(),
                source: src,
                price: t.price,
                quantity: t.quantity,
            });
        }
        self.accounts.close_empties();
        if !view.routed.is_empty() {
            self.slot_views.push(view);
        }

        // Suppliers price against their own output since the last review;
        // a slot without bids says nothing about what buyers would pay.
        if !bids.is_empty() {
            for (s, &q) in self.sellers.iter_mut().zip(&sold) {
                s.state
                    .review_price(s.unreviewed, q, self.cfg.stock_cap, self.cfg.price_step);
                s.unreviewed = 0;
            }
        }

        let records = self.pool.len() as u64;
        self.pack(slot, true)?;

        let model = self.calibration.get(self.cfg.consensus_kind);
        let ledger_size = self.ledger.size_blocks() as u64;
        let ratios: Vec<f64> = self
            .consumers
            .iter()
            .map(|c| c.green_ratio().unwrap_or(0.0))
            .collect();
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
        self.metrics.push(MetricsRow {
            slot,
            consensus_kind: self.cfg.consensus_kind,
            mean_tx_time: model.tx_time(ledger_size, mean_ratio.clamp(0.0, 1.0))?,
            energy_units: model.tx_energy(ledger_size, records)?,
            trades_executed: executed,
            recs_traded: recs,
            mean_price_by_source: price_sum.map(|(s, n)| (n > 0).then(|| s / n as f64)),
            green_ratio_by_consumer: ratios,
            account_stddev: anonymity_metrics(&self.public_view).stddev,
        });
        Ok(())
    }

    /// Packs pending records into blocks and puts each through consensus.
    /// With `drain` every pending record is packed, otherwise one block.
    fn pack(&mut self, slot: Slot, drain: bool) -> Result<(), StepError> {
        while let Some(id) =
            self.ledger
                .pack_block(&mut self.pool, &mut self.rng, slot_start(slot), true)?
        {
            self.confirm(id, slot)?;
            if !drain {
                break;
            }
        }
        Ok(())
    }

    fn confirm(&mut self, block: BlockId, slot: Slot) -> Result<(), StepError> {
        if self.cfg.consensus_kind != ConsensusKind::FpcRep {
            return Ok(());
        }
        let tick = Tick::from(slot);
        self.blocks_confirmed += 1;
        self.validators.set_opinions(|_| Opinion::FavorA);
        let mut vote = ConflictPair::new(
            self.blocks_confirmed,
            TxId(block.0),
            TxId::derive(&[b"reject", &block.0]),
        );
        run_fpc(&mut vote, &mut self.validators, &self.cfg.fpc, tick, &mut self.rng)?;
        if self.blocks_confirmed.is_multiple_of(u64::from(self.cfg.conflict_interval)) {
            self.inject_conflict(tick)?;
        }
        Ok(())
    }

    /// Two fresh nodes submit conflicting spends of the same certificate;
    /// most honest validators saw the first one earlier.
    fn inject_conflict(&mut self, tick: Tick) -> Result<(), StepError> {
        let k = self.conflicts_resolved;
        let a = self.validators.next_id();
        self.validators.insert(ValidatorNode::new(a, tick));
        let b = NodeId(a.0 + 1);
        self.validators.insert(ValidatorNode::new(b, tick));
        let mut conflict = ConflictPair::new(
            k,
            TxId::derive(&[b"double-spend", &k.to_le_bytes(), b"a"]),
            TxId::derive(&[b"double-spend", &k.to_le_bytes(), b"b"]),
        );
        conflict.submitter_a = Some(a);
        conflict.submitter_b = Some(b);
        for n in self.validators.iter_mut() {
            n.opinion = if n.node_id == a {
                Opinion::FavorA
            } else if n.node_id == b || !self.rng.gen_bool(FIRST_SEEN_SHARE) {
                Opinion::FavorB
            } else {
                Opinion::FavorA
            };
        }
        let out = run_fpc(&mut conflict, &mut self.validators, &self.cfg.fpc, tick, &mut self.rng)?;
        self.conflict_trace.extend(out.trace);
        self.conflicts_resolved += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(hours: usize, gen: [f64; 4], consumers: usize, load: f64) -> (GenerationData, DemandData) {
        (
            GenerationData {
                per_slot: vec![gen; hours],
            },
            DemandData {
                consumption: vec![vec![load; hours]; consumers],
                own_renewable: vec![vec![0.0; hours]; consumers],
            },
        )
    }

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            n_suppliers: 2,
            n_consumers: 3,
            n_validators: 30,
            n_slots: 48,
            green_targets: vec![0.5],
            ..Default::default()
        }
    }

    #[test]
    fn micro_scenario_trades_and_conserves() {
        let cfg = small_config();
        let (g, d) = data(24, [3.0, 2.0, 0.0, 0.0], 3, 2.0);
        let out = run_with_data(&cfg, &g, &d).unwrap();
        assert_eq!(out.metrics.len(), 48);
        assert!(!out.trades.is_empty());
        let executed: u64 = out.metrics.iter().map(|m| m.trades_executed).sum();
        assert_eq!(executed as usize, out.trades.len());
        let (owned, retired) = out.registry.recount();
        assert_eq!(owned + retired, out.registry.minted());
        let bought: u64 = out.consumers.iter().map(|c| c.recs_owned).sum();
        let traded: u64 = out.trades.iter().map(|t| t.quantity).sum();
        assert_eq!(bought, traded);
        assert_eq!(out.ledger.total_recs(), traded);
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = small_config();
        let (g, d) = data(24, [3.0, 2.0, 0.0, 0.0], 3, 2.0);
        let a = run_with_data(&cfg, &g, &d).unwrap();
        let b = run_with_data(&cfg, &g, &d).unwrap();
        assert_eq!(a.trades, b.trades);
        assert_eq!(a.metrics, b.metrics);
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        a.ledger.export(&mut la).unwrap();
        b.ledger.export(&mut lb).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn fractional_generation_is_banked() {
        let cfg = ScenarioConfig {
            n_suppliers: 1,
            n_slots: 10,
            ..small_config()
        };
        let (g, d) = data(10, [0.5, 0.0, 0.0, 0.0], 3, 1.0);
        let out = run_with_data(&cfg, &g, &d).unwrap();
        assert_eq!(out.registry.minted(), 5);
    }

    #[test]
    fn rejects_short_demand() {
        let cfg = small_config();
        let (g, d) = data(24, [1.0; 4], 2, 1.0);
        assert!(matches!(run_with_data(&cfg, &g, &d), Err(ScenarioError::Invalid(_))));
    }
}
