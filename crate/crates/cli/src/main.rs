//! `expcli` — experiment driver for the skytwin digital twin.
//!
//! Exit codes: 0 success, 2 configuration/input errors, 3 protocol errors,
//! 4 I/O errors, 1 anything else.

mod plot;

use clap::{Parser, Subcommand, ValueEnum};
use skytwin_core::datagen;
use skytwin_core::runner::{self, RunError};
use skytwin_core::scenario::{load_scenario, TransportCfg};
use skytwin_core::store::MetricStore;
use skytwin_core::xapp_kpm;
use std::path::PathBuf;

const EXIT_CONFIG: i32 = 2;
const EXIT_PROTOCOL: i32 = 3;
const EXIT_IO: i32 = 4;

#[derive(Parser)]
#[command(
    name = "expcli",
    about = "Run aerial-network digital twin experiments and work with their outputs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Socket,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the metric store, series CSV, summary, and
    /// manifest into the output directory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario transport.
        #[arg(long)]
        transport: Option<TransportArg>,
    },
    /// Generate a throughput-vs-distance curve at another transmit power.
    Datagen {
        /// Input curve CSV (with the power/offered-load comment line).
        #[arg(long)]
        input: PathBuf,
        /// Target transmit power (dBm).
        #[arg(long)]
        power_dbm: f64,
        #[arg(long)]
        out: PathBuf,
        /// Scenario supplying the CQI chain (carrier size, TDD layout);
        /// bundled defaults when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Score a generated curve against an oracle curve.
    Score {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
    },
    /// Export a metric store's kpm table as CSV.
    Dump {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render static SVG plots from a series CSV.
    Plot {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("expcli: {:#}", e.message);
            std::process::exit(e.code);
        }
    }
}

struct CliError {
    code: i32,
    message: anyhow::Error,
}

fn err(code: i32, e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code,
        message: e.into(),
    }
}

fn run_error_code(e: &RunError) -> i32 {
    match e {
        RunError::Scenario(_) | RunError::Channel(_) => EXIT_CONFIG,
        RunError::Node(_) | RunError::Ric(_) | RunError::Codec(_) | RunError::Protocol(_) => {
            EXIT_PROTOCOL
        }
        RunError::Io { .. } | RunError::Store(_) | RunError::Series(_) => EXIT_IO,
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            scenario,
            out,
            seed,
            transport,
        } => {
            let (mut scn, warnings) =
                load_scenario(&scenario).map_err(|e| err(EXIT_CONFIG, e))?;
            for w in &warnings {
                eprintln!("expcli: warning: {w}");
            }
            if let Some(seed) = seed {
                scn.seed = seed;
            }
            match transport {
                Some(TransportArg::Inproc) => scn.transport = TransportCfg::Inproc,
                Some(TransportArg::Socket) => {
                    if !matches!(scn.transport, TransportCfg::Socket { .. }) {
                        scn.transport = TransportCfg::Socket {
                            address: "127.0.0.1:0".into(),
                        };
                    }
                }
                None => {}
            }
            let artifacts =
                runner::run(&scn, &out).map_err(|e| err(run_error_code(&e), e))?;
            println!(
                "run {} complete: {} indications, {} stored rows",
                scn.name, artifacts.indications_delivered, artifacts.stored_rows
            );
            println!("outputs in {}", artifacts.out_dir.display());
            print!(
                "{}",
                std::fs::read_to_string(&artifacts.summary_path)
                    .map_err(|e| err(EXIT_IO, e))?
            );
            Ok(())
        }
        Command::Datagen {
            input,
            power_dbm,
            out,
            scenario,
        } => {
            let chain = match scenario {
                Some(path) => {
                    let (scn, _) = load_scenario(&path).map_err(|e| err(EXIT_CONFIG, e))?;
                    datagen::RateChain::from_scenario_parts(
                        &scn.tdd,
                        scn.sched.overhead_symbols,
                        &scn.channel,
                        1.0,
                    )
                    .map_err(|e| err(EXIT_CONFIG, e))?
                }
                None => datagen::RateChain::default_chain(),
            };
            let curve =
                datagen::read_curve_from_path(&input).map_err(|e| err(EXIT_CONFIG, e))?;
            let shifted = datagen::power_shift_curve(&curve, power_dbm, &chain);
            datagen::write_curve_to_path(&shifted, &out).map_err(|e| err(EXIT_IO, e))?;
            println!(
                "generated {} points at {} dBm -> {}",
                shifted.points.len(),
                power_dbm,
                out.display()
            );
            Ok(())
        }
        Command::Score { gen, oracle } => {
            let gen_curve =
                datagen::read_curve_from_path(&gen).map_err(|e| err(EXIT_CONFIG, e))?;
            let oracle_curve =
                datagen::read_curve_from_path(&oracle).map_err(|e| err(EXIT_CONFIG, e))?;
            let scores = datagen::score_generated(&gen_curve, &oracle_curve)
                .map_err(|e| err(EXIT_CONFIG, e))?;
            println!(
                "median_rel_err={:.4} max_rel_err={:.4} fraction_within_10pct={:.4} n_scored={}",
                scores.median_rel_err,
                scores.max_rel_err,
                scores.fraction_within_10pct,
                scores.n_scored
            );
            Ok(())
        }
        Command::Dump { store, out } => {
            let store = MetricStore::open(&store).map_err(|e| err(EXIT_IO, e))?;
            let file = std::fs::File::create(&out).map_err(|e| err(EXIT_IO, e))?;
            let mut w = std::io::BufWriter::new(file);
            store.dump_csv(&mut w).map_err(|e| err(EXIT_IO, e))?;
            use std::io::Write;
            w.flush().map_err(|e| err(EXIT_IO, e))?;
            println!("dumped {} rows -> {}", store.rows().len(), out.display());
            Ok(())
        }
        Command::Plot { series, out } => {
            let points =
                xapp_kpm::import_series_from_path(&series).map_err(|e| err(EXIT_CONFIG, e))?;
            std::fs::create_dir_all(&out).map_err(|e| err(EXIT_IO, e))?;
            let written = plot::render_all(&points, &out).map_err(|e| err(EXIT_IO, e))?;
            for f in written {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
    }
}
