//! Experiment sweeps over the protocol x mobility x traffic x speed x seed
//! grid, with canonical CSV output.
//!
//! Cells are independent and may execute concurrently; results are merged in
//! canonical key order, so the emitted CSV is byte-identical regardless of
//! execution order or parallelism. The per-cell master seed derives from the
//! base seed, the speed and the seed index only, so cells that differ in
//! protocol or traffic kind share mobility traces and flow layouts (paired
//! comparisons).

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::metrics::{fmt_f64, MetricsReport};
use crate::mobility::MobilityModel;
use crate::rng::derive_seed;
use crate::routing::Protocol;
use crate::scenario::ScenarioConfig;
use crate::sim::run_scenario;
use crate::traffic::TrafficKind;

/// The sweep axes; defaults reproduce the paper grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub speeds_mps: Vec<f64>,
    pub protocols: Vec<Protocol>,
    pub mobilities: Vec<MobilityModel>,
    pub traffics: Vec<TrafficKind>,
    /// Independent seeds per cell.
    pub seeds: u32,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            speeds_mps: vec![2.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            protocols: vec![Protocol::Aodv, Protocol::Dsr, Protocol::Dsdv],
            mobilities: vec![
                MobilityModel::RandomWaypoint,
                MobilityModel::Rpgm,
                MobilityModel::ManhattanGrid,
            ],
            traffics: vec![
                TrafficKind::Cbr,
                TrafficKind::Exponential,
                TrafficKind::Pareto,
            ],
            seeds: 5,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), String> {
        if self.speeds_mps.is_empty()
            || self.protocols.is_empty()
            || self.mobilities.is_empty()
            || self.traffics.is_empty()
            || self.seeds == 0
        {
            return Err("sweep grid axes must be non-empty".into());
        }
        if let Some(bad) = self.speeds_mps.iter().find(|s| !(**s > 0.0)) {
            return Err(format!("sweep speeds must be positive, got {bad}"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.speeds_mps.len()
            * self.protocols.len()
            * self.mobilities.len()
            * self.traffics.len()
            * self.seeds as usize
    }

    /// All cell keys in canonical order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::with_capacity(self.cell_count());
        for &protocol in &self.protocols {
            for &mobility in &self.mobilities {
                for &traffic in &self.traffics {
                    for &speed_mps in &self.speeds_mps {
                        for seed in 0..self.seeds {
                            out.push(CellKey {
                                protocol,
                                mobility,
                                traffic,
                                speed_mps,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out.sort();
        out
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub protocol: Protocol,
    pub mobility: MobilityModel,
    pub traffic: TrafficKind,
    pub speed_mps: f64,
    pub seed: u32,
}

impl Eq for CellKey {}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.protocol.name(), self.mobility.name(), self.traffic.name())
            .cmp(&(other.protocol.name(), other.mobility.name(), other.traffic.name()))
            .then(self.speed_mps.total_cmp(&other.speed_mps))
            .then(self.seed.cmp(&other.seed))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: Result<MetricsReport, String>,
}

/// Instantiate the scenario for one cell. The per-cell seed is a function of
/// the base seed, speed and seed index only (not protocol or traffic), so
/// comparisons across protocols and traffic kinds are paired on identical
/// mobility and flow randomness.
pub fn cell_config(base: &ScenarioConfig, key: &CellKey) -> ScenarioConfig {
    let mut cfg = base.clone().with_speed(key.speed_mps);
    cfg.protocol = key.protocol;
    cfg.routing.protocol = key.protocol;
    cfg.mobility.model = key.mobility;
    cfg.traffic.kind = key.traffic;
    cfg.master_seed = derive_seed(
        base.master_seed,
        &format!("cell/speed{}/seed{}", key.speed_mps, key.seed),
    );
    cfg
}

/// Run every cell of the grid; `jobs` bounds the worker threads (`None` uses
/// the global rayon pool). Output is sorted by cell key.
pub fn run_sweep(base: &ScenarioConfig, grid: &SweepGrid, jobs: Option<usize>) -> Vec<CellResult> {
    let cells = grid.cells();
    let run_all = || -> Vec<CellResult> {
        cells
            .par_iter()
            .map(|key| {
                let cfg = cell_config(base, key);
                let outcome = run_scenario(&cfg).map_err(|e| e.to_string());
                CellResult { key: *key, outcome }
            })
            .collect()
    };
    let mut results = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("worker pool")
            .install(run_all),
        None => run_all(),
    };
    results.sort_by(|a, b| a.key.cmp(&b.key));
    results
}

pub const CSV_HEADER: &str = "protocol,mobility,traffic,speed_mps,seed,routing_tx_j,routing_rx_j,mac_tx_j,mac_rx_j,data_j,idle_j,pdf,avg_delay_s,throughput_bps";

/// Render results as CSV with the exact pinned header. Absent metrics are
/// empty fields; failed cells leave every metric field empty.
pub fn to_csv(results: &[CellResult]) -> String {
    let mut out = String::with_capacity(64 * (results.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for cell in results {
        let k = &cell.key;
        let _ = write!(
            out,
            "{},{},{},{},{}",
            k.protocol.name(),
            k.mobility.name(),
            k.traffic.name(),
            fmt_f64(k.speed_mps),
            k.seed
        );
        match &cell.outcome {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{},{},{},{},{}",
                    fmt_f64(r.routing_tx_j),
                    fmt_f64(r.routing_rx_j),
                    fmt_f64(r.mac_tx_j),
                    fmt_f64(r.mac_rx_j),
                    fmt_f64(r.data_j()),
                    fmt_f64(r.idle_j),
                    r.pdf.map(fmt_f64).unwrap_or_default(),
                    r.avg_delay_s.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(r.throughput_bps),
                );
            }
            Err(_) => {
                let _ = writeln!(out, ",,,,,,,,,");
            }
        }
    }
    out
}

/// Single-row CSV for one `run` invocation.
pub fn single_row_csv(config: &ScenarioConfig, report: &MetricsReport) -> String {
    let key = CellKey {
        protocol: config.protocol,
        mobility: config.mobility.model,
        traffic: config.traffic.kind,
        speed_mps: config.mobility.mean_speed_mps(),
        seed: config.master_seed as u32,
    };
    to_csv(&[CellResult {
        key,
        outcome: Ok(report.clone()),
    }])
}
