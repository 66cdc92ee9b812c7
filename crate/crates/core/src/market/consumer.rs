use crate::types::{AccountId, Slot};

use super::{MarketError, Order, MWH_PER_REC};

/// Ceiling on purchase urgency; also returned when the green ratio is zero.
pub const URGENCY_CAP: f64 = 100.0;

/// Candidate prices tried per consumer per slot.
pub const BID_GRID_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumerState {
    pub consumer_id: u32,
    pub account: AccountId,
    pub green_target: f64,
    pub bid_bounds: (f64, f64),
    /// Penalty per unit of green-ratio shortfall.
    pub gamma: f64,
    /// Consumption so far this compliance year, MWh.
    pub consumption_mwh: f64,
    /// Self-generated or utility-bought renewable energy so far, MWh.
    pub own_renewable_mwh: f64,
    pub recs_owned: u64,
    pub tokens: f64,
}

impl ConsumerState {
    pub fn new(consumer_id: u32, account: AccountId, green_target: f64, gamma: f64) -> Self {
        ConsumerState {
            consumer_id,
            account,
            green_target: green_target.clamp(0.0, 1.0),
            bid_bounds: (0.0, f64::INFINITY),
            gamma,
            consumption_mwh: 0.0,
            own_renewable_mwh: 0.0,
            recs_owned: 0,
            tokens: 0.0,
        }
    }

    pub fn record_slot(&mut self, consumption_mwh: f64, own_renewable_mwh: f64) {
        self.consumption_mwh += consumption_mwh.max(0.0);
        self.own_renewable_mwh += own_renewable_mwh.max(0.0);
    }

    pub fn green_ratio(&self) -> Result<f64, MarketError> {
        green_ratio(self.recs_owned, self.own_renewable_mwh, self.consumption_mwh)
    }

    pub fn lag(&self) -> Result<f64, MarketError> {
        Ok(green_lag(self.green_ratio()?, self.green_target))
    }
}

pub fn green_ratio(
    recs_owned: u64,
    own_renewable_mwh: f64,
    consumption_mwh: f64,
) -> Result<f64, MarketError> {
    if !(consumption_mwh > 0.0) {
        return Err(MarketError::ZeroConsumption);
    }
    Ok((recs_owned as f64 * MWH_PER_REC + own_renewable_mwh) / consumption_mwh)
}

pub fn green_lag(ratio: f64, target: f64) -> f64 {
    (target - ratio).max(0.0)
}

pub fn penalty_fee(lag: f64, gamma: f64) -> f64 {
    lag * gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Urgency {
    pub value: f64,
    /// Set when the ratio was zero and the cap stood in for the quotient.
    pub degenerate: bool,
}

pub fn urgency(t_max: Slot, t_remain: Slot, target: f64, ratio: f64) -> Urgency {
    if !(ratio > 0.0) {
        return Urgency {
            value: URGENCY_CAP,
            degenerate: true,
        };
    }
    let t_remain = t_remain.max(1);
    let v = f64::from(t_max) / f64::from(t_remain) * (target / ratio);
    Urgency {
        value: v.min(URGENCY_CAP),
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesiredQuantity {
    pub quantity: u64,
    /// Set when the bid exceeded the ceiling and was treated as equal to it.
    pub clamped: bool,
}

/// Whole RECs a consumer asks for at bid `b`. `cap` is the second argument
/// of the outer minimum, `G_target * E_c * gamma - D`.
pub fn desired_quantity(
    b: f64,
    p_max: f64,
    q_max: u64,
    cap: f64,
) -> Result<DesiredQuantity, MarketError> {
    if !(p_max > 0.0) {
        return Err(MarketError::NoPriceCeiling);
    }
    let clamped = b > p_max;
    let raw = if clamped {
        q_max as f64
    } else {
        (b.max(0.0) / p_max) * q_max as f64
    };
    let q = raw.min(cap).max(0.0);
    Ok(DesiredQuantity {
        // tolerate representation error right at an integer boundary
        quantity: (q + 1e-9).floor() as u64,
        clamped,
    })
}

pub fn bid_cost(b: f64, q: u64, penalty: f64, alpha: f64, lag: f64, e_c: f64) -> f64 {
    let q = q as f64;
    let pressure = alpha * lag * e_c + q;
    b * q + penalty * pressure * pressure
}

/// Per-slot market-wide state seen by every consumer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketClock {
    pub slot: Slot,
    pub t_max: Slot,
    pub t_remain: Slot,
    pub p_max_current: f64,
}

impl MarketClock {
    pub fn new(t_max: Slot, initial_price: f64) -> Self {
        let t_max = t_max.max(1);
        MarketClock {
            slot: 0,
            t_max,
            t_remain: t_max,
            p_max_current: initial_price,
        }
    }

    pub fn advance(&mut self, slot: Slot) {
        self.slot = slot;
        self.t_remain = self.t_max.saturating_sub(slot % self.t_max).max(1);
    }

    /// Takes the highest open ask as the new ceiling; an empty book keeps
    /// the last one.
    pub fn observe_asks(&mut self, asks: &[Order]) {
        if let Some(p) = asks.iter().map(|o| o.price).reduce(f64::max) {
            self.p_max_current = p;
        }
    }
}

/// Everything needed to price one consumer's bid in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidContext {
    pub p_max: f64,
    pub q_max: u64,
    pub lag: f64,
    pub penalty: f64,
    pub alpha: f64,
    /// Slot consumption entering the cost's pressure term.
    pub e_c: f64,
    /// Quantity cap from the penalty budget.
    pub cap: f64,
    pub bounds: (f64, f64),
}

impl BidContext {
    /// Builds the context for `consumer`. The search window is the
    /// consumer's own bounds narrowed to at most the penalty (paying more
    /// than the fine is never rational) and the ceiling, and raised to at
    /// least `alpha` times the cheapest ask.
    ///
    /// `cap_consumption` is the consumption figure used in the quantity
    /// cap, expressed in the unit `gamma` is quoted per.
    pub fn for_consumer(
        consumer: &ConsumerState,
        clock: &MarketClock,
        slot_consumption_mwh: f64,
        cap_consumption: f64,
        q_max: u64,
        lowest_ask: f64,
    ) -> Result<Self, MarketError> {
        let ratio = consumer.green_ratio()?;
        let lag = green_lag(ratio, consumer.green_target);
        let penalty = penalty_fee(lag, consumer.gamma);
        let alpha = urgency(clock.t_max, clock.t_remain, consumer.green_target, ratio).value;
        let (b_min, b_max) = consumer.bid_bounds;
        let upper = b_max.min(penalty).min(clock.p_max_current).max(b_min);
        let lower = b_min.max((alpha * lowest_ask).min(upper));
        Ok(BidContext {
            p_max: clock.p_max_current,
            q_max,
            lag,
            penalty,
            alpha,
            e_c: slot_consumption_mwh,
            cap: consumer.green_target * cap_consumption * consumer.gamma - penalty,
            bounds: (lower, upper),
        })
    }

    pub fn quantity(&self, b: f64) -> Result<u64, MarketError> {
        Ok(desired_quantity(b, self.p_max, self.q_max, self.cap)?.quantity)
    }

    pub fn cost(&self, b: f64) -> Result<(u64, f64), MarketError> {
        let q = self.quantity(b)?;
        Ok((q, bid_cost(b, q, self.penalty, self.alpha, self.lag, self.e_c)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidChoice {
    pub price: f64,
    pub quantity: u64,
    pub cost: f64,
}

/// Cheapest bid on an evenly spaced grid of `points` prices over
/// `ctx.bounds` among those that buy at least one REC. Ties go to the lower
/// price. `None` when no grid price yields a positive quantity.
pub fn choose_bid(ctx: &BidContext, points: usize) -> Result<Option<BidChoice>, MarketError> {
    let (lo, hi) = ctx.bounds;
    if !(hi >= lo) || points == 0 {
        return Ok(None);
    }
    let n = if hi > lo { points.max(2) } else { 1 };
    let mut best: Option<BidChoice> = None;
    for k in 0..n {
        let b = if n == 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        };
        let (q, cost) = ctx.cost(b)?;
        if q == 0 {
            continue;
        }
        if best.is_none_or(|c| cost < c.cost) {
            best = Some(BidChoice {
                price: b,
                quantity: q,
                cost,
            });
        }
    }
    Ok(best)
}
