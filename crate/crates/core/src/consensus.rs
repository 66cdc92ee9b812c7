//! Reputation-weighted Fast Probabilistic Consensus.
//!
//! Validators carry an activity reputation that decays exponentially while
//! they are idle and grows by one unit per participation. Conflicts between
//! two candidate records are settled over a fixed number of voting rounds:
//! each round draws a quorum with probability proportional to reputation,
//! weighs every member's vote by its share of quorum reputation, and compares
//! the running mean of those weighted queries against a random threshold.
//! The first round's threshold comes from `first_round_bounds`; later rounds
//! draw a fresh `beta` and then a threshold from `(beta, 1 - beta)`.
//!
//! A member's response is its own validation vote, fixed for the life of the
//! conflict. Tentative opinions follow the round decisions, and once the
//! final round resolves every remaining validator adopts the outcome.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::ledger::TxId;

/// Simulation time in slots.
pub type Tick = u64;

/// Reputation given to a freshly registered validator.
pub const INITIAL_REPUTATION: f64 = 1.0;

/// Votes whose normalized weight falls below this are ignored.
pub const WEIGHT_FLOOR: f64 = 0.001;

/// Quorum re-draws attempted before a conflict is declared stuck.
pub const MAX_QUORUM_REDRAWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opinion {
    FavorA,
    FavorB,
    Undecided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatorNode {
    pub node_id: NodeId,
    pub r_activity: f64,
    pub last_active: Tick,
    pub isolated: bool,
    pub opinion: Opinion,
    // Decay is applied from max(last_active, decayed_to) so repeated calls
    // compose instead of compounding.
    decayed_to: Tick,
}

impl ValidatorNode {
    pub fn new(node_id: NodeId, now: Tick) -> Self {
        Self::with_reputation(node_id, INITIAL_REPUTATION, now)
    }

    pub fn with_reputation(node_id: NodeId, r_activity: f64, now: Tick) -> Self {
        ValidatorNode {
            node_id,
            r_activity: r_activity.max(0.0),
            last_active: now,
            isolated: false,
            opinion: Opinion::Undecided,
            decayed_to: now,
        }
    }

    /// Applies exponential decay for the idle time up to `now`.
    pub fn decay_reputation(&mut self, now: Tick, lambda: f64) {
        let from = self.last_active.max(self.decayed_to);
        if now <= from {
            return;
        }
        let delta = (now - from) as f64;
        self.r_activity *= (-lambda * delta).exp();
        self.decayed_to = now;
    }

    /// Credits (or not) one interaction. An active interaction adds one unit
    /// of reputation after bringing decay up to date.
    pub fn record_activity(
        &mut self,
        active: bool,
        now: Tick,
        lambda: f64,
    ) -> Result<(), ConsensusError> {
        if self.isolated {
            return Err(ConsensusError::Isolated(self.node_id));
        }
        if active {
            self.decay_reputation(now, lambda);
            self.r_activity += 1.0;
            self.last_active = now;
            self.decayed_to = now;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpcParams {
    pub rounds: u32,
    pub first_round_bounds: (f64, f64),
    /// Lower end of the per-round `beta` draw; `beta` lands in `[beta, 0.5)`.
    pub beta: f64,
    pub lambda: f64,
    pub omega_initial: f64,
    pub quorum_size: usize,
}

impl Default for FpcParams {
    fn default() -> Self {
        FpcParams {
            rounds: 10,
            first_round_bounds: (0.5, 1.0),
            beta: 0.3,
            lambda: 0.2,
            omega_initial: 0.5,
            quorum_size: 20,
        }
    }
}

impl FpcParams {
    pub fn validate(&self) -> Result<(), ConsensusError> {
        let (a, b) = self.first_round_bounds;
        let bad = |m: &str| Err(ConsensusError::InvalidParams(m.to_string()));
        if self.rounds == 0 {
            return bad("rounds must be positive");
        }
        if !(0.5..=1.0).contains(&a) || !(a..=1.0).contains(&b) {
            return bad("first-round bounds need 0.5 <= a <= b <= 1");
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return bad("beta must lie in (0, 0.5)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a non-negative finite number");
        }
        if !(0.0..=1.0).contains(&self.omega_initial) {
            return bad("omega_initial must lie in [0, 1]");
        }
        if self.quorum_size == 0 {
            return bad("quorum_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Open,
    AWins,
    BWins,
}

impl Resolution {
    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Open => "open",
            Resolution::AWins => "a_wins",
            Resolution::BWins => "b_wins",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictPair {
    pub conflict_id: u64,
    pub candidate_a: TxId,
    pub candidate_b: TxId,
    pub submitter_a: Option<NodeId>,
    pub submitter_b: Option<NodeId>,
    pub resolution: Resolution,
}

impl ConflictPair {
    pub fn new(conflict_id: u64, candidate_a: TxId, candidate_b: TxId) -> Self {
        ConflictPair {
            conflict_id,
            candidate_a,
            candidate_b,
            submitter_a: None,
            submitter_b: None,
            resolution: Resolution::Open,
        }
    }

    pub fn losing_candidate(&self) -> Option<TxId> {
        match self.resolution {
            Resolution::AWins => Some(self.candidate_b),
            Resolution::BWins => Some(self.candidate_a),
            Resolution::Open => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("quorum reputation sums to zero")]
    DegenerateQuorum,
    #[error("{active} active validators, quorum needs {required}")]
    InsufficientNodes { active: usize, required: usize },
    #[error("unknown validator {0}")]
    UnknownNode(NodeId),
    #[error("validator {0} is isolated")]
    Isolated(NodeId),
    #[error("conflict {conflict_id} failed to reach consensus: degenerate quorum after {redraws} re-draws")]
    ConsensusFailure { conflict_id: u64, redraws: usize },
    #[error("invalid FPC parameters: {0}")]
    InvalidParams(String),
}

/// `node`'s share of the summed quorum reputation.
pub fn voting_weight(node: &ValidatorNode, quorum: &[&ValidatorNode]) -> Result<f64, ConsensusError> {
    let total: f64 = quorum.iter().map(|n| n.r_activity).sum();
    if total <= 0.0 {
        return Err(ConsensusError::DegenerateQuorum);
    }
    Ok(node.r_activity / total)
}

/// Normalized weights for a whole quorum, in quorum order.
pub fn quorum_weights(quorum: &[&ValidatorNode]) -> Result<Vec<f64>, ConsensusError> {
    let total: f64 = quorum.iter().map(|n| n.r_activity).sum();
    if total <= 0.0 {
        return Err(ConsensusError::DegenerateQuorum);
    }
    Ok(quorum.iter().map(|n| n.r_activity / total).collect())
}

/// Weighted share of the quorum favouring candidate A. Members below
/// [`WEIGHT_FLOOR`] are ignored.
pub fn opinion_query(votes: &[Opinion], weights: &[f64]) -> f64 {
    debug_assert_eq!(votes.len(), weights.len());
    votes
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w >= WEIGHT_FLOOR)
        .map(|(v, w)| if *v == Opinion::FavorA { *w } else { 0.0 })
        .sum()
}

/// One line of the per-round consensus trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub conflict_id: u64,
    pub round: u32,
    pub omega: f64,
    pub mean_query: f64,
    pub decision: Opinion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpcOutcome {
    pub resolution: Resolution,
    pub rounds_used: u32,
    pub queries_issued: usize,
    pub participants: BTreeSet<NodeId>,
    pub trace: Vec<RoundTrace>,
}

/// Writes `conflict_id,round,omega,mean_query,decision` lines.
pub fn write_trace<W: Write>(mut w: W, rows: &[RoundTrace]) -> io::Result<()> {
    writeln!(w, "conflict_id,round,omega,mean_query,decision")?;
    for r in rows {
        let d = match r.decision {
            Opinion::FavorA => "a",
            Opinion::FavorB => "b",
            Opinion::Undecided => "undecided",
        };
        writeln!(
            w,
            "{},{},{:.6},{:.6},{}",
            r.conflict_id, r.round, r.omega, r.mean_query, d
        )?;
    }
    Ok(())
}

/// The validator population taking part in consensus.
#[derive(Debug, Clone, Default)]
pub struct ValidatorSet {
    nodes: Vec<ValidatorNode>,
    index: HashMap<NodeId, usize>,
}

impl ValidatorSet {
    pub fn new(count: u32, now: Tick) -> Self {
        let mut set = ValidatorSet::default();
        for i in 0..count {
            set.insert(ValidatorNode::new(NodeId(i), now));
        }
        set
    }

    pub fn insert(&mut self, node: ValidatorNode) {
        match self.index.get(&node.node_id) {
            Some(&i) => self.nodes[i] = node,
            None => {
                self.index.insert(node.node_id, self.nodes.len());
                self.nodes.push(node);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn next_id(&self) -> NodeId {
        NodeId(self.nodes.iter().map(|n| n.node_id.0 + 1).max().unwrap_or(0))
    }

    /// Validator at a position returned by [`ValidatorSet::sample_quorum`].
    pub fn at(&self, index: usize) -> &ValidatorNode {
        &self.nodes[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ValidatorNode> {
        self.nodes.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ValidatorNode> {
        self.nodes.iter_mut()
    }

    pub fn get(&self, id: NodeId) -> Result<&ValidatorNode, ConsensusError> {
        self.index
            .get(&id)
            .map(|&i| &self.nodes[i])
            .ok_or(ConsensusError::UnknownNode(id))
    }

    pub fn get_mut(&mut self, id: NodeId) -> Result<&mut ValidatorNode, ConsensusError> {
        match self.index.get(&id) {
            Some(&i) => Ok(&mut self.nodes[i]),
            None => Err(ConsensusError::UnknownNode(id)),
        }
    }

    pub fn active_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.isolated).count()
    }

    /// Marks a validator isolated. Idempotent.
    pub fn isolate_node(&mut self, id: NodeId) -> Result<(), ConsensusError> {
        self.get_mut(id)?.isolated = true;
        Ok(())
    }

    pub fn decay_all(&mut self, now: Tick, lambda: f64) {
        for n in self.nodes.iter_mut().filter(|n| !n.isolated) {
            n.decay_reputation(now, lambda);
        }
    }

    pub fn set_opinions(&mut self, f: impl Fn(&ValidatorNode) -> Opinion) {
        for n in self.nodes.iter_mut() {
            n.opinion = f(n);
        }
    }

    /// Draws `size` distinct non-isolated validators, each pick proportional
    /// to reputation (Efraimidis-Spirakis keys). Zero-reputation validators
    /// only fill seats left over once positive ones are exhausted. Returns
    /// indices into the set.
    pub fn sample_quorum<R: Rng + ?Sized>(
        &self,
        size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, ConsensusError> {
        let active = self.active_count();
        if active < size {
            return Err(ConsensusError::InsufficientNodes {
                active,
                required: size,
            });
        }
        let mut keyed: Vec<(f64, f64, usize)> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.isolated)
            .map(|(i, n)| {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let key = if n.r_activity > 0.0 {
                    u.ln() / n.r_activity
                } else {
                    f64::NEG_INFINITY
                };
                (key, u, i)
            })
            .collect();
        let by_key = |x: &(f64, f64, usize), y: &(f64, f64, usize)| {
            y.0.total_cmp(&x.0).then(y.1.total_cmp(&x.1))
        };
        if size < keyed.len() {
            keyed.select_nth_unstable_by(size - 1, by_key);
            keyed.truncate(size);
        }
        keyed.sort_by(by_key);
        Ok(keyed.into_iter().map(|(_, _, i)| i).collect())
    }

    /// Credits every listed validator with one unit of activity.
    pub fn credit(&mut self, ids: impl IntoIterator<Item = NodeId>, now: Tick, lambda: f64) {
        for id in ids {
            if let Ok(n) = self.get_mut(id) {
                let _ = n.record_activity(true, now, lambda);
            }
        }
    }
}

fn draw_omega<R: Rng + ?Sized>(round: u32, params: &FpcParams, rng: &mut R) -> f64 {
    if round == 1 {
        let (a, b) = params.first_round_bounds;
        if a == b {
            a
        } else {
            rng.gen_range(a..=b)
        }
    } else {
        let beta = rng.gen_range(params.beta..0.5);
        rng.gen_range(beta..=1.0 - beta)
    }
}

/// Resolves `conflict` by repeated reputation-weighted voting.
///
/// Each validator's current `opinion` is taken as its vote. On success the
/// conflict's resolution is set, every non-isolated validator adopts it, the
/// submitter of the losing record (if known) is isolated, and each distinct
/// quorum participant is credited one unit of activity at `now`.
pub fn run_fpc<R: Rng + ?Sized>(
    conflict: &mut ConflictPair,
    nodes: &mut ValidatorSet,
    params: &FpcParams,
    now: Tick,
    rng: &mut R,
) -> Result<FpcOutcome, ConsensusError> {
    params.validate()?;
    let active = nodes.active_count();
    if active < params.quorum_size {
        return Err(ConsensusError::InsufficientNodes {
            active,
            required: params.quorum_size,
        });
    }

    let votes: Vec<Opinion> = nodes.nodes.iter().map(|n| n.opinion).collect();
    let mut unanimous = nodes.nodes.iter().filter(|n| !n.isolated).map(|n| n.opinion);
    let first = unanimous.next();
    let all_agree = first.is_some_and(|f| f != Opinion::Undecided && unanimous.all(|o| o == f));

    let mut trace = Vec::new();
    let mut participants = BTreeSet::new();
    let mut queries_issued = 0usize;
    let mut query_sum = 0.0;
    let mut decision = Opinion::Undecided;
    let mut rounds_used = 0;

    for round in 1..=params.rounds {
        let omega = draw_omega(round, params, rng);

        let mut attempt = 0;
        let (quorum, weights) = loop {
            let idx = nodes.sample_quorum(params.quorum_size, rng)?;
            let members: Vec<&ValidatorNode> = idx.iter().map(|&i| &nodes.nodes[i]).collect();
            match quorum_weights(&members) {
                Ok(w) => break (idx, w),
                Err(ConsensusError::DegenerateQuorum) if attempt < MAX_QUORUM_REDRAWS => {
                    attempt += 1
                }
                Err(ConsensusError::DegenerateQuorum) => {
                    return Err(ConsensusError::ConsensusFailure {
                        conflict_id: conflict.conflict_id,
                        redraws: MAX_QUORUM_REDRAWS,
                    })
                }
                Err(e) => return Err(e),
            }
        };
        let round_votes: Vec<Opinion> = quorum.iter().map(|&i| votes[i]).collect();
        let query = opinion_query(&round_votes, &weights);
        queries_issued += quorum.len();
        participants.extend(quorum.iter().map(|&i| nodes.nodes[i].node_id));

        query_sum += query;
        let mean_query = query_sum / f64::from(round);
        decision = if mean_query >= omega {
            Opinion::FavorA
        } else {
            Opinion::FavorB
        };
        for n in nodes.nodes.iter_mut().filter(|n| !n.isolated) {
            n.opinion = decision;
        }
        trace.push(RoundTrace {
            conflict_id: conflict.conflict_id,
            round,
            omega,
            mean_query,
            decision,
        });
        rounds_used = round;
        if all_agree {
            break;
        }
    }

    conflict.resolution = match decision {
        Opinion::FavorA => Resolution::AWins,
        _ => Resolution::BWins,
    };
    let loser = match conflict.resolution {
        Resolution::AWins => conflict.submitter_b,
        _ => conflict.submitter_a,
    };
    if let Some(id) = loser {
        nodes.isolate_node(id)?;
    }
    let credited: Vec<NodeId> = participants.iter().copied().collect();
    nodes.credit(credited, now, params.lambda);

    Ok(FpcOutcome {
        resolution: conflict.resolution,
        rounds_used,
        queries_issued,
        participants,
        trace,
    })
}
