//! Command-line frontend: single runs, grid sweeps, mobility trace
//! generation and traffic distribution diagnostics.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use manet_sim::metrics::MetricsReport;
use manet_sim::mobility::{self, MobilityModel};
use manet_sim::rng::sub_stream;
use manet_sim::routing::Protocol;
use manet_sim::scenario::{parse_config, ScenarioConfig, ScenarioError};
use manet_sim::sim::Simulation;
use manet_sim::sweep::{run_sweep, single_row_csv, to_csv, SweepGrid};
use manet_sim::traffic::{hill_tail_index, OnOffSampler, TrafficConfig, TrafficKind};

#[derive(Parser)]
#[command(
    name = "manet-sim",
    about = "Discrete-event MANET simulator measuring control-packet energy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and print its report.
    Run {
        /// Scenario config file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the delivered-event log (one line per event).
        #[arg(long)]
        event_log: Option<PathBuf>,
        /// Write the per-control-packet protocol event log.
        #[arg(long)]
        protocol_log: Option<PathBuf>,
        /// Write a single-row CSV of the metrics.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a sweep over protocol x mobility x traffic x speed x seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated speed list in m/s.
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,15,20,25")]
        speeds: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "aodv,dsr,dsdv")]
        protocols: Vec<ProtocolArg>,
        #[arg(long, value_delimiter = ',', default_value = "rwp,rpgm,manhattan")]
        mobility: Vec<MobilityArg>,
        #[arg(long, value_delimiter = ',', default_value = "cbr,exp,pareto")]
        traffic: Vec<TrafficArg>,
        /// Seeds per cell.
        #[arg(long, default_value_t = 5)]
        seeds: u32,
        /// Output CSV path.
        #[arg(long)]
        csv: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Generate mobility traces and write them in the trace file format.
    GenMobility {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print distribution diagnostics for the ON/OFF traffic generators.
    ValidateTraffic {
        #[arg(long, value_enum)]
        kind: OnOffKind,
        /// Number of ON/OFF cycles to sample.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Aodv,
    Dsr,
    Dsdv,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Protocol {
        match p {
            ProtocolArg::Aodv => Protocol::Aodv,
            ProtocolArg::Dsr => Protocol::Dsr,
            ProtocolArg::Dsdv => Protocol::Dsdv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MobilityArg {
    Rwp,
    Rpgm,
    Manhattan,
}

impl From<MobilityArg> for MobilityModel {
    fn from(m: MobilityArg) -> MobilityModel {
        match m {
            MobilityArg::Rwp => MobilityModel::RandomWaypoint,
            MobilityArg::Rpgm => MobilityModel::Rpgm,
            MobilityArg::Manhattan => MobilityModel::ManhattanGrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TrafficArg {
    Cbr,
    Exp,
    Pareto,
}

impl From<TrafficArg> for TrafficKind {
    fn from(t: TrafficArg) -> TrafficKind {
        match t {
            TrafficArg::Cbr => TrafficKind::Cbr,
            TrafficArg::Exp => TrafficKind::Exponential,
            TrafficArg::Pareto => TrafficKind::Pareto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOffKind {
    Exp,
    Pareto,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // Validation problems exit 1, runtime failures exit 2.
            let validation = e
                .chain()
                .any(|c| c.downcast_ref::<ScenarioError>().is_some());
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}

fn load_config(path: &PathBuf) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg = parse_config(&text)?;
    Ok(cfg)
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            event_log,
            protocol_log,
            csv,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            cfg.record_event_log = event_log.is_some();
            cfg.record_protocol_log = protocol_log.is_some();
            let mut sim = Simulation::new(cfg.clone())?;
            let report = sim.run();
            if let Some(path) = event_log {
                let mut text = String::new();
                for entry in sim.event_log() {
                    text.push_str(&entry.to_string());
                    text.push('\n');
                }
                fs::write(&path, text)
                    .with_context(|| format!("writing event log {}", path.display()))?;
            }
            if let Some(path) = protocol_log {
                fs::write(&path, sim.protocol_log().join("\n") + "\n")
                    .with_context(|| format!("writing protocol log {}", path.display()))?;
            }
            if let Some(path) = csv {
                fs::write(&path, single_row_csv(&cfg, &report))
                    .with_context(|| format!("writing csv {}", path.display()))?;
            }
            print_report(&cfg, &report);
        }
        Command::Sweep {
            config,
            speeds,
            protocols,
            mobility,
            traffic,
            seeds,
            csv,
            jobs,
        } => {
            let base = load_config(&config)?;
            let grid = SweepGrid {
                speeds_mps: speeds,
                protocols: protocols.into_iter().map(Into::into).collect(),
                mobilities: mobility.into_iter().map(Into::into).collect(),
                traffics: traffic.into_iter().map(Into::into).collect(),
                seeds,
            };
            grid.validate()
                .map_err(|m| anyhow::Error::new(ScenarioError::Invalid(m)))?;
            eprintln!("sweep: {} cells", grid.cell_count());
            let results = run_sweep(&base, &grid, jobs);
            let failures = results.iter().filter(|r| r.outcome.is_err()).count();
            fs::write(&csv, to_csv(&results))
                .with_context(|| format!("writing csv {}", csv.display()))?;
            eprintln!(
                "sweep: wrote {} rows to {} ({failures} failed cells)",
                results.len(),
                csv.display()
            );
            if failures > 0 {
                bail!("{failures} cells failed");
            }
        }
        Command::GenMobility { config, out } => {
            let cfg = load_config(&config)?;
            let traces = mobility::generate(
                &cfg.mobility,
                cfg.node_count,
                cfg.duration_s,
                cfg.master_seed,
            )
            .map_err(|e| anyhow::Error::new(ScenarioError::Invalid(e.to_string())))?;
            fs::write(&out, mobility::export_traces(&traces))
                .with_context(|| format!("writing trace file {}", out.display()))?;
            eprintln!(
                "gen-mobility: {} nodes over {} s -> {}",
                cfg.node_count,
                cfg.duration_s,
                out.display()
            );
        }
        Command::ValidateTraffic {
            kind,
            samples,
            seed,
        } => {
            validate_traffic(kind, samples, seed)?;
        }
    }
    Ok(())
}

fn print_report(cfg: &ScenarioConfig, r: &MetricsReport) {
    println!(
        "scenario: {} / {} / {} | {} nodes, {} s, {} flows, seed {}",
        cfg.protocol.name(),
        cfg.mobility.model.name(),
        cfg.traffic.kind.name(),
        cfg.node_count,
        cfg.duration_s,
        cfg.flow_count,
        cfg.master_seed
    );
    println!("energy (J summed over nodes):");
    println!(
        "  routing-control  tx {:.6}  rx {:.6}",
        r.routing_tx_j, r.routing_rx_j
    );
    println!(
        "  mac-control      tx {:.6}  rx {:.6}",
        r.mac_tx_j, r.mac_rx_j
    );
    println!(
        "  data             tx {:.6}  rx {:.6}",
        r.data_tx_j, r.data_rx_j
    );
    println!("  idle             {:.6}", r.idle_j);
    println!(
        "traffic: sent {}  delivered {}  pdf {}  avg delay {}  throughput {:.1} bit/s",
        r.data_sent,
        r.data_delivered,
        r.pdf.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
        r.avg_delay_s
            .map(|v| format!("{v:.6} s"))
            .unwrap_or_else(|| "-".into()),
        r.throughput_bps
    );
    println!(
        "control packets: {}",
        r.control_tx
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!("collisions: {}  dead nodes: {}", r.collisions, r.dead_nodes);
    println!("metadata:");
    for (k, v) in &r.metadata {
        println!("  {k} = {v}");
    }
}

fn validate_traffic(kind: OnOffKind, samples: usize, seed: u64) -> Result<()> {
    let cfg = TrafficConfig::default();
    let sampler = match kind {
        OnOffKind::Exp => OnOffSampler::exponential(&cfg),
        OnOffKind::Pareto => OnOffSampler::pareto(&cfg),
    }
    .map_err(|e| anyhow::Error::new(ScenarioError::Invalid(e.to_string())))?;
    if samples < 100 {
        bail!(ScenarioError::Invalid(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    let mut rng = sub_stream(seed, "validate-traffic", 0);
    let mut on = Vec::with_capacity(samples);
    let mut off = Vec::with_capacity(samples);
    let mut on_time = 0.0;
    let mut off_time = 0.0;
    for _ in 0..samples {
        let a = sampler.sample_on(&mut rng);
        let b = sampler.sample_off(&mut rng);
        // Realized burst lengths are whole packets at the configured rate.
        let packets = ((a * cfg.send_rate_pps).round() as u64).max(1);
        on_time += packets as f64 / cfg.send_rate_pps;
        off_time += b;
        on.push(a);
        off.push(b);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let min_on = on.iter().cloned().fold(f64::INFINITY, f64::min);
    let k = (samples / 50).max(10);
    println!(
        "kind: {}",
        match kind {
            OnOffKind::Exp => "exponential",
            OnOffKind::Pareto => "pareto",
        }
    );
    println!("samples: {samples}");
    println!("on_mean_s: {:.6} (configured {})", mean(&on), cfg.on_mean_s);
    println!(
        "off_mean_s: {:.6} (configured {})",
        mean(&off),
        cfg.off_mean_s
    );
    println!("on_min_s: {min_on:.6}");
    println!(
        "on_fraction: {:.6} (renewal expectation {:.6})",
        on_time / (on_time + off_time),
        cfg.on_mean_s / (cfg.on_mean_s + cfg.off_mean_s)
    );
    println!(
        "hill_tail_index: {:.4} (top {k} of {samples})",
        hill_tail_index(&on, k)
    );
    Ok(())
}
