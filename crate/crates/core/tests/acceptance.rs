//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{book, build, export, oracle, record};
use recsim_core::baselines::{
    compare_consensus, counts_stddev, verification_distribution, CalibrationAnchors,
    ComparisonRow,
};
use recsim_core::consensus::{run_fpc, ConflictPair, Resolution};
use recsim_core::ledger::Violation;
use recsim_core::market::{discounted_price, match_orders, objective, rec_count};
use recsim_core::privacy::anonymity_metrics;
use recsim_core::{
    Block, Calibration, ConsensusKind, FpcParams, Opinion, RecSource, ScenarioConfig,
    ScenarioOutput, TxId, ValidatorSet, run_scenario,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

const SIZES: [u64; 3] = [100, 1000, 10_000];
const RATIOS: [f64; 3] = [0.3, 0.6, 0.9];

/// Published per-REC seconds, rows by ledger size then green ratio,
/// columns PoW, Prism, PoS, reputation FPC.
const TABLE: [[f64; 4]; 9] = [
    [0.00639, 0.00233, 0.0004, 0.00053],
    [0.00658, 0.00241, 0.0004, 0.00054],
    [0.00662, 0.00309, 0.0005, 0.00053],
    [5.3727, 1.8983, 0.0022, 0.00153],
    [5.7421, 2.1054, 0.0027, 0.00163],
    [6.1936, 2.9255, 0.0029, 0.00153],
    [521.3334, 189.4180, 0.0281, 0.00169],
    [548.2847, 239.2054, 0.0355, 0.00209],
    [561.3944, 263.1162, 0.0379, 0.00329],
];
const COLUMNS: [ConsensusKind; 4] = [
    ConsensusKind::Pow,
    ConsensusKind::Prism,
    ConsensusKind::Pos,
    ConsensusKind::FpcRep,
];

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Runner config without a failure-persistence file; this target has no
/// source path for proptest to key on.
fn cases(n: u32) -> Config {
    Config {
        cases: n,
        failure_persistence: None,
        ..Config::default()
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

/// Kinds sorted fastest first.
fn ordering(times: [f64; 4]) -> Vec<ConsensusKind> {
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    idx.into_iter().map(|i| COLUMNS[i]).collect()
}

fn year_config() -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/year.conf");
    ScenarioConfig::load(&path).expect("year config loads")
}

struct YearRuns {
    on: ScenarioOutput,
    off: ScenarioOutput,
    elapsed: Duration,
}

fn year() -> &'static YearRuns {
    static RUNS: OnceLock<YearRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let on_cfg = year_config();
        let mut off_cfg = on_cfg.clone();
        off_cfg.privacy_enabled = false;
        let on = run_scenario(&on_cfg).expect("year run");
        let elapsed = start.elapsed();
        let off = run_scenario(&off_cfg).expect("year run without routing");
        YearRuns { on, off, elapsed }
    })
}

fn table_ordering_and_magnitudes() -> Outcome {
    let start = Instant::now();
    let params = FpcParams::default();
    let anchors = CalibrationAnchors::default();
    let cal = Calibration::fit(&anchors, &params, 100, 42).map_err(|e| e.to_string())?;
    let rows = compare_consensus(&cal, &SIZES, &RATIOS, &params, 100, 3000, 42)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let time = |kind: ConsensusKind, size: u64, ratio: f64| -> f64 {
        rows.iter()
            .find(|r: &&ComparisonRow| {
                r.consensus == kind && r.ledger_size == size && r.green_ratio == ratio
            })
            .map(|r| r.tx_time_s)
            .expect("grid cell present")
    };

    let mut order_misses = Vec::new();
    let mut worst_cell = (0.0f64, String::new());
    for (i, published) in TABLE.iter().enumerate() {
        let (size, ratio) = (SIZES[i / 3], RATIOS[i % 3]);
        let model: [f64; 4] = COLUMNS.map(|k| time(k, size, ratio));
        if ordering(model) != ordering(*published) {
            order_misses.push(format!("{size}/{ratio}"));
        }
        for (k, (&m, &p)) in model.iter().zip(published).enumerate() {
            let dev = (m - p).abs() / p;
            if dev > worst_cell.0 {
                worst_cell = (dev, format!("{} {size}/{ratio}", COLUMNS[k]));
            }
        }
    }
    let at = |kind, size| time(kind, size, 0.3);
    let anchor_cells = [
        (ConsensusKind::Pow, anchors.small_ledger, anchors.pow_small),
        (ConsensusKind::Pow, anchors.large_ledger, anchors.pow_large),
        (ConsensusKind::Pos, anchors.small_ledger, anchors.pos_small),
        (ConsensusKind::Pos, anchors.large_ledger, anchors.pos_large),
        (ConsensusKind::FpcRep, anchors.small_ledger, TABLE[0][3]),
        (ConsensusKind::FpcRep, anchors.large_ledger, anchors.fpc_large),
    ];
    let mut anchor_misses = Vec::new();
    for (kind, size, target) in anchor_cells {
        if !within(at(kind, size), target, 0.2) {
            anchor_misses.push(format!("{kind}@{size}={:.5} vs {target}", at(kind, size)));
        }
    }

    check(order_misses.is_empty(), format!("ordering differs at {order_misses:?}"))?;
    check(anchor_misses.is_empty(), format!("anchors off by >20%: {anchor_misses:?}"))?;
    check(elapsed < Duration::from_secs(120), format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "9/9 orderings match; {} anchor cells within 20%; largest off-anchor deviation {:.0}% ({}); {elapsed:.1?}",
        anchor_cells.len(),
        worst_cell.0 * 100.0,
        worst_cell.1
    ))
}

fn headline_ratios() -> Outcome {
    let cal = Calibration::fit(&CalibrationAnchors::default(), &FpcParams::default(), 100, 42)
        .map_err(|e| e.to_string())?;
    let l = 10_000;
    let t = |k: ConsensusKind| cal.get(k).tx_time(l, 0.3).unwrap();
    let e = |k: ConsensusKind| cal.get(k).tx_energy(l, 1).unwrap();
    let time_share = t(ConsensusKind::FpcRep) / t(ConsensusKind::Pos);
    let energy_share = e(ConsensusKind::FpcRep) / e(ConsensusKind::Pos);
    check(time_share < 1.0 && energy_share < 1.0, "reputation FPC not cheaper than PoS")?;
    check(time_share <= 0.59 + 0.10, format!("time share {time_share:.3}"))?;
    check(energy_share <= 0.35 + 0.10, format!("energy share {energy_share:.3}"))?;
    Ok(format!(
        "time {:.1}% of PoS, energy {:.1}% of PoS",
        time_share * 100.0,
        energy_share * 100.0
    ))
}

fn decentralization() -> Outcome {
    let start = Instant::now();
    let params = FpcParams::default();
    let kinds = [ConsensusKind::Pow, ConsensusKind::Pos, ConsensusKind::FpcRep];
    let mut sums = [0.0; 3];
    for run in 0..5u64 {
        let mut sd = [0.0; 3];
        for (i, &kind) in kinds.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + run);
            let counts = verification_distribution(kind, 100, 3000, &params, &mut rng)
                .map_err(|e| e.to_string())?;
            sd[i] = counts_stddev(&counts);
            sums[i] += sd[i];
        }
        check(
            sd[0] > sd[1] && sd[1] > sd[2],
            format!("run {run}: pow {:.1} pos {:.1} fpc {:.1}", sd[0], sd[1], sd[2]),
        )?;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "mean stddev pow {:.1} > pos {:.1} > fpc {:.1} in 5/5 runs (reference 17.3 / 6.1 / 4.4); {elapsed:.1?}",
        sums[0] / 5.0,
        sums[1] / 5.0,
        sums[2] / 5.0
    ))
}

fn privacy_flattening() -> Outcome {
    let runs = year();
    let (on, off) = (&runs.on, &runs.off);
    let pre = anonymity_metrics(&on.unrouted_view);
    let post = anonymity_metrics(&on.public_view);

    let same_trades = on.trades.len() == off.trades.len()
        && on.trades.iter().zip(&off.trades).all(|(x, y)| {
            (x.slot, &x.seller_did, x.source, x.price, x.quantity)
                == (y.slot, &y.seller_did, y.source, y.price, y.quantity)
        });
    let same_ratios = on
        .metrics
        .iter()
        .zip(&off.metrics)
        .all(|(x, y)| x.green_ratio_by_consumer == y.green_ratio_by_consumer);
    let summary = format!(
        "accounts {} -> {}, stddev {:.0} -> {:.0}, top share {:.2} -> {:.2}; {:.1?}",
        pre.account_count,
        post.account_count,
        pre.stddev,
        post.stddev,
        pre.top_share,
        post.top_share,
        runs.elapsed
    );
    check(same_trades && same_ratios, "routing changed trades or green ratios")?;
    check(
        (30..=50).contains(&post.account_count),
        format!("account count outside [30, 50]: {summary}"),
    )?;
    check(post.stddev < pre.stddev, format!("stddev did not fall: {summary}"))?;
    check(runs.elapsed < Duration::from_secs(60), format!("slow: {summary}"))?;
    Ok(summary)
}

fn fpc_safety() -> Outcome {
    let start = Instant::now();
    let params = FpcParams::default();
    let trials = 10_000u64;
    let a_wins = |honest: u32, seed_base: u64| -> Result<u64, String> {
        let mut wins = 0;
        for t in 0..trials {
            let mut nodes = ValidatorSet::new(100, 0);
            nodes.set_opinions(|n| {
                if n.node_id.0 < honest {
                    Opinion::FavorA
                } else {
                    Opinion::FavorB
                }
            });
            let mut pair = ConflictPair::new(t, TxId([1; 32]), TxId([2; 32]));
            let mut rng = ChaCha8Rng::seed_from_u64(seed_base + t);
            let out = run_fpc(&mut pair, &mut nodes, &params, 0, &mut rng)
                .map_err(|e| e.to_string())?;
            if out.resolution == Resolution::AWins {
                wins += 1;
            }
        }
        Ok(wins)
    };
    let honest = a_wins(80, 0)? as f64 / trials as f64;
    let split = a_wins(50, 1 << 32)? as f64 / trials as f64;
    let elapsed = start.elapsed();
    check(honest >= 0.99, format!("honest share won {:.2}%", honest * 100.0))?;
    check((split - 0.5).abs() <= 0.03, format!("50/50 split gave A {:.2}%", split * 100.0))?;
    check(elapsed < Duration::from_secs(60), format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "80% honest wins {:.2}%; 50/50 split A {:.2}% / B {:.2}%; {elapsed:.1?}",
        honest * 100.0,
        split * 100.0,
        (1.0 - split) * 100.0
    ))
}

fn market_suite() -> Outcome {
    let mut runner = TestRunner::new(cases(1000));
    runner
        .run(&book(), |(asks, bids)| {
            let trades = match_orders(&asks, &bids).unwrap();
            let greedy = objective(&trades, &asks, &bids);
            prop_assert!((greedy - oracle(&asks, &bids)).abs() < 1e-9);
            let mut sold: BTreeMap<u64, u64> = BTreeMap::new();
            let mut bought: BTreeMap<u64, u64> = BTreeMap::new();
            for t in &trades {
                *sold.entry(t.ask_id).or_default() += t.quantity;
                *bought.entry(t.bid_id).or_default() += t.quantity;
            }
            prop_assert_eq!(sold.values().sum::<u64>(), bought.values().sum::<u64>());
            Ok(())
        })
        .map_err(|e| format!("matcher vs oracle: {e}"))?;

    check(rec_count(3.7) == Ok(3) && rec_count(0.99) == Ok(0), "certificate floor")?;
    check(
        (0..=8760u32)
            .step_by(24)
            .map(|age| discounted_price(100.0, 8760 - age, 8760))
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] <= w[0] && (w[0] - w[1] - 100.0 * 24.0 / 8760.0).abs() < 1e-9),
        "ask decay is not linear",
    )?;
    check(
        recsim_core::market::bid_cost(50.0, 5, 1_000.0, 4.0, 0.1, 2.0) == 33_890.0,
        "bid cost spot check",
    )?;

    let out = &year().on;
    let mut per_slot: BTreeMap<u32, u64> = BTreeMap::new();
    for t in &out.trades {
        *per_slot.entry(t.slot).or_default() += t.quantity;
    }
    let balanced = out
        .metrics
        .iter()
        .all(|m| m.recs_traded == per_slot.get(&m.slot).copied().unwrap_or(0));
    check(balanced, "per-slot sold and bought quantities differ")?;
    let (owned, retired) = out.registry.recount();
    let traded: u64 = out.trades.iter().map(|t| t.quantity).sum();
    let held: u64 = out.suppliers.iter().map(|s| s.inventory_len() as u64).sum();
    let bought: u64 = out.consumers.iter().map(|c| c.recs_owned).sum();
    check(out.registry.minted() == owned + retired, "minted != owned + retired")?;
    check(held + traded == owned && bought == traded, "certificates leaked")?;
    Ok(format!(
        "1000 books match the oracle; year: {} minted = {owned} owned + {retired} retired, {traded} traded",
        out.registry.minted()
    ))
}

fn ledger_suite() -> Outcome {
    let mut runner = TestRunner::new(cases(200));
    runner
        .run(
            &(prop::collection::vec(1u8..10, 1..30), any::<u64>()),
            |(batches, seed)| {
                let l = build(&batches, seed);
                prop_assert!(l.topological_order().is_some());
                prop_assert_eq!(l.tips(), &l.recompute_tips());
                prop_assert_eq!(export(&l), export(&build(&batches, seed)));
                let tip = *l.tips().iter().next().unwrap();
                let replay = Block::new(tip, tip, vec![record(0)], 1_000);
                prop_assert!(l
                    .verify_block(&replay)
                    .violations
                    .contains(&Violation::DoubleSpend(record(0).tx_id)));
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;

    let mut cfg = year_config();
    cfg.n_slots = 720;
    let a = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let b = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let bytes = |o: &ScenarioOutput| {
        let mut v = Vec::new();
        o.ledger.export(&mut v).unwrap();
        v
    };
    check(bytes(&a) == bytes(&b), "scenario ledger differs between reruns")?;
    let year = &year().on.ledger;
    check(year.topological_order().is_some(), "year ledger has a cycle")?;
    check(year.tips() == &year.recompute_tips(), "year ledger tips stale")?;
    Ok(format!(
        "200 random DAGs acyclic, tips exact, replays rejected, reruns identical; year ledger {} blocks",
        year.size_blocks()
    ))
}

fn price_shape() -> Outcome {
    let out = &year().on;
    let mut value = [0.0f64; 4];
    let mut qty = [0u64; 4];
    for t in &out.trades {
        let i = RecSource::ALL.iter().position(|&s| s == t.source).unwrap();
        value[i] += t.price * t.quantity as f64;
        qty[i] += t.quantity;
    }
    let means: Vec<(RecSource, f64)> = RecSource::ALL
        .iter()
        .enumerate()
        .filter(|&(i, _)| qty[i] > 0)
        .map(|(i, &s)| (s, value[i] / qty[i] as f64))
        .collect();
    let wind = means
        .iter()
        .find(|(s, _)| *s == RecSource::Wind)
        .map(|&(_, m)| m)
        .ok_or("no wind trades")?;
    let others: Vec<f64> = means
        .iter()
        .filter(|(s, _)| *s != RecSource::Wind)
        .map(|&(_, m)| m)
        .collect();
    let others_mean = others.iter().sum::<f64>() / others.len() as f64;
    let listing = means
        .iter()
        .map(|(s, m)| format!("{s} {m:.1}"))
        .collect::<Vec<_>>()
        .join(", ");

    let monotone = out.registry.iter().all(|c| {
        (0..=c.lifetime_total)
            .step_by(97)
            .map(|age| discounted_price(100.0, c.lifetime_total - age, c.lifetime_total))
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] <= w[0])
    });
    check(monotone, "an ask rose with certificate age")?;
    check(
        wind < others_mean,
        format!("wind {wind:.1} not below others' mean {others_mean:.1} ({listing})"),
    )?;
    Ok(format!("wind {wind:.1} < others' mean {others_mean:.1} ({listing})"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("AC1", "consensus time ordering and calibration", table_ordering_and_magnitudes),
        ("AC2", "headline time and energy ratios", headline_ratios),
        ("AC3", "validation spread across nodes", decentralization),
        ("AC4", "privacy flattening", privacy_flattening),
        ("AC5", "FPC statistical safety", fpc_safety),
        ("AC6", "market properties", market_suite),
        ("AC7", "ledger properties", ledger_suite),
        ("AC8", "price shape by source", price_shape),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, f) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("{id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
