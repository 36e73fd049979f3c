use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{BufReader, BufWriter};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use cryptovar_core::backtest::{run_synthetic_campaign, CampaignConfig};
use cryptovar_core::sim::{generate_ticks, FeedSpec, SimConfig, SyntheticMarket};
use cryptovar_core::var::{EngineConfig, Model};
use cryptovar_core::{Execution, DAY_MS};
use cryptovar_gateway::{bench, router, AppState, GatewayConfig};
use cryptovar_tick::{read_feed, write_feed, EngineOptions, TableKind, TickEngine};

#[derive(Parser)]
#[command(name = "cryptovar", version, about = "Real-time VaR engine for crypto derivatives")]
struct Cli {
    /// Directory holding the recovery log (tp.log) and the HDB (hdb/).
    #[arg(long, env = "CRYPTOVAR_DATA_ROOT", default_value = "./data", global = true)]
    data_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Publish a feed file through the tickerplant.
    Replay {
        feed: PathBuf,
        /// `max`, or a multiple of real time such as `x10`.
        #[arg(long, default_value = "max")]
        speed: String,
        #[arg(long, default_value_t = 1000)]
        batch: usize,
    },
    /// Run the HTTP and WebSocket gateway.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, env = "CRYPTOVAR_PORT", default_value_t = 8080)]
        port: u16,
        /// Feed file to replay in the background while serving.
        #[arg(long)]
        feed: Option<PathBuf>,
        #[arg(long, default_value = "max")]
        speed: String,
    },
    /// Run a backtest campaign described by a TOML file.
    Backtest {
        config: PathBuf,
        /// Where to write the CSV/JSONL outputs.
        #[arg(long, default_value = "backtest-out")]
        out: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
    /// Time end-to-end VaR estimates against a synthetic market.
    Bench {
        /// Comma-separated portfolio sizes; `full` is the whole universe.
        #[arg(long, default_value = "1,5,10,50,100,500,1000,full")]
        holdings: String,
        /// Comma-separated models.
        #[arg(long, default_value = "EWMA,GARCH,HAR")]
        model: String,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 17)]
        days: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
    },
    /// Move every finished intraday day up to DATE (YYYY-MM-DD) into the HDB.
    PersistEod { date: NaiveDate },
    /// Write a synthetic feed file.
    GenFeed {
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        days: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of products quoted besides the indices.
        #[arg(long, default_value_t = 20)]
        products: usize,
        #[arg(long, default_value_t = 60)]
        index_ticks_per_minute: u32,
        #[arg(long, default_value_t = 5000)]
        product_interval_ms: i64,
    },
}

fn parse_speed(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("max") {
        return Ok(None);
    }
    let v: f64 = s.trim_start_matches(['x', 'X']).parse().with_context(|| format!("bad speed {s:?}"))?;
    if !(v > 0.0 && v.is_finite()) {
        bail!("speed must be positive");
    }
    Ok(Some(v))
}

fn open_engine(root: &std::path::Path) -> Result<TickEngine> {
    TickEngine::open(EngineOptions::under(root)).with_context(|| format!("opening data root {}", root.display()))
}

fn replay_file(engine: &TickEngine, feed: &std::path::Path, speed: Option<f64>, batch: usize) -> Result<u64> {
    let file = File::open(feed).with_context(|| format!("opening {}", feed.display()))?;
    let ticks: Vec<_> = read_feed(BufReader::new(file)).collect::<cryptovar_tick::Result<_>>()?;
    Ok(engine.replay_ticks(ticks, batch, speed)?)
}

/// Order-sensitive digest of the intraday tables.
fn state_digest(engine: &TickEngine) -> String {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for k in TableKind::ALL {
        for b in engine.intraday_rows(k) {
            b.sym.hash(&mut h);
            b.minute.hash(&mut h);
            b.twap.to_bits().hash(&mut h);
            b.count.hash(&mut h);
        }
    }
    format!("{:016x}", h.finish())
}

fn summary(engine: &TickEngine) -> serde_json::Value {
    let tables = engine.tables();
    let rows: std::collections::BTreeMap<_, _> =
        TableKind::ALL.iter().map(|k| (k.table_name(), tables.table(*k).len())).collect();
    serde_json::json!({
        "clock": engine.clock().map(cryptovar_core::market::iso8601::format),
        "intraday_rows": rows,
        "late_ticks": tables.late_ticks(),
        "malformed_ticks": tables.malformed(),
        "hdb_dates": engine.hdb_dates(),
    })
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(f).collect()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Replay { feed, speed, batch } => {
            let engine = open_engine(&cli.data_root)?;
            let n = replay_file(&engine, &feed, parse_speed(&speed)?, batch)?;
            let mut s = summary(&engine);
            s["published"] = n.into();
            s["next_seq"] = engine.next_seq().into();
            s["digest"] = state_digest(&engine).into();
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Serve { bind, port, feed, speed } => {
            let engine = Arc::new(open_engine(&cli.data_root)?);
            if let Some(feed) = feed {
                let (e, speed) = (engine.clone(), parse_speed(&speed)?);
                std::thread::spawn(move || match replay_file(&e, &feed, speed, 1000) {
                    Ok(n) => log::info!("feed replay finished: {n} ticks"),
                    Err(err) => log::error!("feed replay failed: {err:#}"),
                });
            }
            let state = AppState::new(engine, GatewayConfig::default());
            let addr: SocketAddr = format!("{bind}:{port}").parse().context("bad bind address")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                log::info!("listening on http://{addr}");
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .context("server error")
            })?;
        }
        Command::Backtest { config, out, sequential } => {
            let cfg = CampaignConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let engine = EngineConfig {
                exec: if sequential { Execution::Sequential } else { Execution::Parallel },
                ..EngineConfig::default()
            };
            let report = run_synthetic_campaign(&cfg, &engine)?;
            report.write_outputs(&out)?;
            print!("{}", report.render());
            println!("outputs written to {}", out.display());
        }
        Command::Bench { holdings, model, reps, days, seed, sequential } => {
            let models = parse_list(&model, |m| m.parse::<Model>().map_err(anyhow::Error::msg))?;
            let setup = bench::setup(days, seed)?;
            let full = setup.universe.len();
            let sizes = parse_list(&holdings, |h| {
                if h.eq_ignore_ascii_case("full") {
                    Ok(full)
                } else {
                    h.parse::<usize>().with_context(|| format!("bad holdings {h:?}"))
                }
            })?;
            let cfg = EngineConfig {
                exec: if sequential { Execution::Sequential } else { Execution::Parallel },
                ..EngineConfig::default()
            };
            let rows = bench::run(&setup, &sizes, &models, reps, &cfg)?;
            print!("{}", bench::render(&rows));
            let lookup = bench::lookup_latency(&setup, 1000.min(full), reps);
            println!("latest-cache lookup of {} products: {:.3} ms", 1000.min(full), lookup.as_secs_f64() * 1e3);
        }
        Command::PersistEod { date } => {
            let engine = open_engine(&cli.data_root)?;
            for r in engine.persist_eod(date)? {
                println!("{}: {} rows written, {} released", r.date, r.rows_written, r.released);
            }
        }
        Command::GenFeed {
            out,
            days,
            seed,
            products,
            index_ticks_per_minute,
            product_interval_ms,
        } => {
            let market = SyntheticMarket::generate(SimConfig {
                days,
                seed,
                ..SimConfig::default()
            });
            let mut spec = FeedSpec::new(market.start(), market.start() + days as i64 * DAY_MS);
            spec.seed = seed;
            spec.index_ticks_per_minute = index_ticks_per_minute;
            spec.product_interval_ms = product_interval_ms;
            let n = market.instruments().len();
            spec.products = market
                .instruments()
                .iter()
                .step_by((n / products.max(1)).max(1))
                .take(products)
                .map(|i| i.id.clone())
                .collect();
            let ticks = generate_ticks(&market, &spec);
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_feed(BufWriter::new(file), &ticks)?;
            println!("wrote {} ticks to {}", ticks.len(), out.display());
        }
    }
    Ok(())
}
