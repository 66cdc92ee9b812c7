use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recsim_core::baselines::{
    compare_consensus, counts_stddev, verification_distribution, write_comparison,
};
use recsim_core::market::discounted_price;
use recsim_core::privacy::{anonymity_metrics, PublicView};
use recsim_core::scenario::{run_scenario, ScenarioConfig, ScenarioOutput};
use recsim_core::{Calibration, ConsensusKind, FpcParams, RecSource};

#[derive(Parser)]
#[command(name = "recsim", version, about = "REC market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trades, metrics, ledger and account files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate tx time, energy and verification spread per consensus kind.
    CompareConsensus {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        ledger_sizes: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9")]
        green_ratios: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 3000)]
        validations: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-account volumes with and without privacy routing.
    PrivacyDemo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot-ready CSV series.
    PlotData {
        #[command(subcommand)]
        series: PlotSeries,
    },
}

#[derive(Subcommand)]
enum PlotSeries {
    /// Daily mean clearing price per source.
    Prices {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Green ratio per consumer, sampled daily.
    GreenRatios {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask price against certificate age for one base price.
    AskDecay {
        #[arg(long, default_value_t = 100.0)]
        base_price: f64,
        #[arg(long, default_value_t = 8760)]
        lifetime: u32,
        #[arg(long, default_value_t = 24)]
        step: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verification-count spread over repeated seeded runs.
    Decentralization {
        #[arg(long, default_value_t = 5)]
        runs: u64,
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 3000)]
        validations: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Run { config, seed, out } => {
            let output = simulate(&config, seed)?;
            output.write_outputs(&out)?;
            let last = output.metrics.last();
            println!(
                "{} slots, {} trades, {} blocks -> {}",
                output.metrics.len(),
                output.trades.len(),
                output.ledger.size_blocks(),
                out.display()
            );
            if let Some(m) = last {
                let mean = m.green_ratio_by_consumer.iter().sum::<f64>()
                    / m.green_ratio_by_consumer.len().max(1) as f64;
                println!("mean final green ratio {mean:.4}");
            }
            Ok(())
        }
        Command::CompareConsensus {
            ledger_sizes,
            green_ratios,
            nodes,
            validations,
            seed,
            out,
        } => {
            let params = FpcParams::default();
            let calibration =
                Calibration::fit(&Default::default(), &params, nodes as u32, seed)?;
            let rows = compare_consensus(
                &calibration,
                &ledger_sizes,
                &green_ratios,
                &params,
                nodes,
                validations,
                seed,
            )?;
            let path = prepare(&out, "comparison.csv")?;
            write_comparison(BufWriter::new(File::create(&path)?), &rows)?;
            println!("{} rows -> {}", rows.len(), path.display());
            Ok(())
        }
        Command::PrivacyDemo { config, seed, out } => {
            let output = simulate(&config, seed)?;
            write_view(&prepare(&out, "pre_routing.csv")?, &output.unrouted_view)?;
            write_view(&prepare(&out, "post_routing.csv")?, &output.public_view)?;
            let path = prepare(&out, "summary.csv")?;
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "view,account_count,stddev,top_share")?;
            for (name, view) in [("pre", &output.unrouted_view), ("post", &output.public_view)] {
                let m = anonymity_metrics(view);
                writeln!(w, "{name},{},{:.4},{:.6}", m.account_count, m.stddev, m.top_share)?;
                println!(
                    "{name}: {} accounts, stddev {:.2}, top share {:.4}",
                    m.account_count, m.stddev, m.top_share
                );
            }
            w.flush()?;
            let path = prepare(&out, "per_slot.csv")?;
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "slot,pre_accounts,post_accounts,pre_stddev,post_stddev")?;
            for v in &output.slot_views {
                let (a, b) = (anonymity_metrics(&v.unrouted), anonymity_metrics(&v.routed));
                writeln!(
                    w,
                    "{},{},{},{:.4},{:.4}",
                    v.slot, a.account_count, b.account_count, a.stddev, b.stddev
                )?;
            }
            w.flush()?;
            Ok(())
        }
        Command::PlotData { series } => plot(series),
    }
}

fn plot(series: PlotSeries) -> CliResult {
    match series {
        PlotSeries::Prices { config, seed, out } => {
            let output = simulate(&config, seed)?;
            let path = prepare(&out, "prices.csv")?;
            write_daily_prices(&path, &output)?;
            println!("-> {}", path.display());
        }
        PlotSeries::GreenRatios { config, seed, out } => {
            let output = simulate(&config, seed)?;
            let path = prepare(&out, "green_ratios.csv")?;
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "slot,consumer,green_ratio")?;
            for m in output.metrics.iter().filter(|m| (m.slot + 1) % 24 == 0) {
                for (j, g) in m.green_ratio_by_consumer.iter().enumerate() {
                    writeln!(w, "{},{j},{g:.6}", m.slot)?;
                }
            }
            w.flush()?;
            println!("-> {}", path.display());
        }
        PlotSeries::AskDecay {
            base_price,
            lifetime,
            step,
            out,
        } => {
            let path = prepare(&out, "ask_decay.csv")?;
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "age,ask_price")?;
            for age in (0..=lifetime).step_by(step.max(1) as usize) {
                let price = discounted_price(base_price, lifetime - age, lifetime);
                writeln!(w, "{age},{price:.6}")?;
            }
            w.flush()?;
            println!("-> {}", path.display());
        }
        PlotSeries::Decentralization {
            runs,
            nodes,
            validations,
            seed,
            out,
        } => {
            let params = FpcParams::default();
            let path = prepare(&out, "decentralization.csv")?;
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "run,consensus,stddev_verifications")?;
            for run in 0..runs {
                for kind in [ConsensusKind::Pow, ConsensusKind::Pos, ConsensusKind::FpcRep] {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run));
                    let counts =
                        verification_distribution(kind, nodes, validations, &params, &mut rng)?;
                    writeln!(w, "{run},{kind},{:.4}", counts_stddev(&counts))?;
                }
            }
            w.flush()?;
            println!("-> {}", path.display());
        }
    }
    Ok(())
}

fn simulate(config: &Path, seed: Option<u64>) -> Result<ScenarioOutput, Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(run_scenario(&cfg)?)
}

fn prepare(dir: &Path, name: &str) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

/// Volumes sorted largest first, one row per account.
fn write_view(path: &Path, view: &PublicView) -> std::io::Result<()> {
    let mut rows: Vec<_> = view.volumes().collect();
    rows.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(b.0)));
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "rank,account_id,kind,volume")?;
    for (rank, (id, kind, v)) in rows.into_iter().enumerate() {
        writeln!(w, "{rank},{id},{},{v}", kind.as_str())?;
    }
    w.flush()
}

fn write_daily_prices(path: &Path, output: &ScenarioOutput) -> std::io::Result<()> {
    let days = output.metrics.len().div_ceil(24);
    let mut sums = vec![[(0.0, 0u64); 4]; days];
    for t in &output.trades {
        let cell = &mut sums[t.slot as usize / 24][t.source.index()];
        cell.0 += t.price * t.quantity as f64;
        cell.1 += t.quantity;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "day,source,mean_price,quantity")?;
    for (day, row) in sums.iter().enumerate() {
        for (src, &(p, q)) in RecSource::ALL.iter().zip(row) {
            if q > 0 {
                writeln!(w, "{day},{src},{:.6},{q}", p / q as f64)?;
            }
        }
    }
    w.flush()
}
