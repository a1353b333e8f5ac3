//! Per-run metrics: energy decomposition, delivery statistics, and the
//! configuration/metadata echo.

use std::collections::BTreeMap;

use crate::energy::{Direction, EnergyLedger, LayerClass, RadioState};

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Routing-control energy summed over nodes, split by direction (J).
    pub routing_tx_j: f64,
    pub routing_rx_j: f64,
    pub mac_tx_j: f64,
    pub mac_rx_j: f64,
    pub data_tx_j: f64,
    pub data_rx_j: f64,
    pub idle_j: f64,
    pub sleep_j: f64,
    pub transition_j: f64,
    pub per_node_residual_j: Vec<f64>,
    pub data_sent: u64,
    pub data_delivered: u64,
    /// Delivered / sent; absent when nothing was sent.
    pub pdf: Option<f64>,
    /// Mean emission-to-delivery delay over delivered packets; absent when
    /// nothing was delivered.
    pub avg_delay_s: Option<f64>,
    /// Delivered payload bits per second of simulated time.
    pub throughput_bps: f64,
    pub collisions: u64,
    pub drops: BTreeMap<String, u64>,
    /// Transmission counts per control-packet kind (rreq, rrep, ...).
    pub control_tx: BTreeMap<String, u64>,
    pub dead_nodes: usize,
    /// Energy operations attempted on dead nodes (flagged, not charged).
    pub rejected_energy_ops: u64,
    /// Echo of every defaulted modeling decision.
    pub metadata: BTreeMap<String, String>,
}

impl MetricsReport {
    /// Total data-packet energy (both directions).
    pub fn data_j(&self) -> f64 {
        self.data_tx_j + self.data_rx_j
    }

    /// Total control energy, routing and MAC layers together.
    pub fn total_control_j(&self) -> f64 {
        self.routing_tx_j + self.routing_rx_j + self.mac_tx_j + self.mac_rx_j
    }

    pub fn routing_control_j(&self) -> f64 {
        self.routing_tx_j + self.routing_rx_j
    }

    pub fn mac_control_j(&self) -> f64 {
        self.mac_tx_j + self.mac_rx_j
    }

    /// Aggregate the energy fields from per-node ledgers.
    pub fn from_ledgers(ledgers: &[EnergyLedger]) -> EnergyTotals {
        let mut t = EnergyTotals::default();
        for l in ledgers {
            t.routing_tx_j += l.packet_j(Direction::Tx, LayerClass::RoutingControl);
            t.routing_rx_j += l.packet_j(Direction::Rx, LayerClass::RoutingControl);
            t.mac_tx_j += l.packet_j(Direction::Tx, LayerClass::MacControl);
            t.mac_rx_j += l.packet_j(Direction::Rx, LayerClass::MacControl);
            t.data_tx_j += l.packet_j(Direction::Tx, LayerClass::Data);
            t.data_rx_j += l.packet_j(Direction::Rx, LayerClass::Data);
            t.idle_j += l.state_j(RadioState::Idle);
            t.sleep_j += l.state_j(RadioState::Sleep);
            t.transition_j += l.state_j(RadioState::Transition);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyTotals {
    pub routing_tx_j: f64,
    pub routing_rx_j: f64,
    pub mac_tx_j: f64,
    pub mac_rx_j: f64,
    pub data_tx_j: f64,
    pub data_rx_j: f64,
    pub idle_j: f64,
    pub sleep_j: f64,
    pub transition_j: f64,
}

/// Full-precision decimal rendering for CSV fields (shortest representation
/// that round-trips the f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyParams;

    #[test]
    fn ledger_aggregation_sums_categories() {
        let p = EnergyParams::default();
        let mut a = EnergyLedger::new(&p);
        let mut b = EnergyLedger::new(&p);
        a.charge_packet(Direction::Tx, LayerClass::RoutingControl, 464.0, 0.0, &p);
        b.charge_packet(Direction::Rx, LayerClass::RoutingControl, 464.0, 0.0, &p);
        b.charge_packet(Direction::Tx, LayerClass::MacControl, 304.0, 0.0, &p);
        let t = MetricsReport::from_ledgers(&[a, b]);
        assert!(t.routing_tx_j > 0.0);
        assert!(t.routing_rx_j > 0.0);
        assert!(t.mac_tx_j > 0.0);
        assert_eq!(t.mac_rx_j, 0.0);
    }

    #[test]
    fn float_rendering_round_trips() {
        for v in [0.0, 1.5, 3.3792e-3, 123.456789012345, 1e-12] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
