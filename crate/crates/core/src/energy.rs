//! Radio energy accounting.
//!
//! Per-packet transmit/receive energy is `power x size / bit_rate`, i.e.
//! power multiplied by airtime. Idle, sleep and transition energy accrue by
//! state duration. Each node owns one [`EnergyLedger`] decomposing its
//! consumption by radio state and by packet layer x direction; the headline
//! metric of the whole simulator is the routing-control / mac-control split
//! of this ledger summed over nodes.

use std::fmt;

/// Energy-model parameters (powers in watts, energy in joules, time in
/// seconds, bit rate in bits/s).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyParams {
    pub initial_energy_j: f64,
    pub idle_power_w: f64,
    pub rx_power_w: f64,
    pub tx_power_w: f64,
    pub transition_power_w: f64,
    pub sleep_power_w: f64,
    pub transition_time_s: f64,
    pub bit_rate_bps: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            initial_energy_j: 150.0,
            idle_power_w: 1.0,
            rx_power_w: 1.1,
            tx_power_w: 1.65,
            transition_power_w: 0.6,
            sleep_power_w: 0.001,
            transition_time_s: 0.005,
            bit_rate_bps: 2e6,
        }
    }
}

/// Energy to transmit `size_bits` at the configured power and channel rate.
pub fn energy_tx(size_bits: f64, params: &EnergyParams) -> f64 {
    params.tx_power_w * size_bits / params.bit_rate_bps
}

/// Energy to receive `size_bits`.
pub fn energy_rx(size_bits: f64, params: &EnergyParams) -> f64 {
    params.rx_power_w * size_bits / params.bit_rate_bps
}

/// Layer classification of a packet or frame; decides which energy counter a
/// transmission or reception is charged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerClass {
    RoutingControl,
    MacControl,
    Data,
}

impl LayerClass {
    pub const ALL: [LayerClass; 3] = [
        LayerClass::RoutingControl,
        LayerClass::MacControl,
        LayerClass::Data,
    ];

    fn index(self) -> usize {
        match self {
            LayerClass::RoutingControl => 0,
            LayerClass::MacControl => 1,
            LayerClass::Data => 2,
        }
    }
}

impl fmt::Display for LayerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerClass::RoutingControl => "routing-control",
            LayerClass::MacControl => "mac-control",
            LayerClass::Data => "data",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Tx => 0,
            Direction::Rx => 1,
        }
    }
}

/// Radio state for time-based accrual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadioState {
    Idle,
    Tx,
    Rx,
    Sleep,
    Transition,
}

impl RadioState {
    fn index(self) -> usize {
        match self {
            RadioState::Idle => 0,
            RadioState::Tx => 1,
            RadioState::Rx => 2,
            RadioState::Sleep => 3,
            RadioState::Transition => 4,
        }
    }

    fn power(self, params: &EnergyParams) -> f64 {
        match self {
            RadioState::Idle => params.idle_power_w,
            RadioState::Tx => params.tx_power_w,
            RadioState::Rx => params.rx_power_w,
            RadioState::Sleep => params.sleep_power_w,
            RadioState::Transition => params.transition_power_w,
        }
    }
}

/// Per-node residual energy plus consumption decomposed by radio state and by
/// packet layer x direction.
///
/// Invariants maintained here:
/// - `initial - residual == sum of all consumption categories` (to fp error);
/// - all categories are nonnegative and monotone nondecreasing;
/// - once `residual <= 0` the node is dead and stays dead: further charges
///   and accruals are no-ops counted in `rejected_ops`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    initial_j: f64,
    residual_j: f64,
    /// Per-packet energy by [direction][layer].
    packet_j: [[f64; 3]; 2],
    /// State-accrual energy by radio state (Idle/Tx/Rx/Sleep/Transition).
    state_j: [f64; 5],
    /// Accounted state time by radio state, seconds.
    state_s: [f64; 5],
    /// Time up to which the state timeline has been accounted.
    cursor_s: f64,
    alive: bool,
    dead_at_s: Option<f64>,
    /// Charges or accruals attempted after death.
    rejected_ops: u64,
}

impl EnergyLedger {
    pub fn new(params: &EnergyParams) -> Self {
        EnergyLedger {
            initial_j: params.initial_energy_j,
            residual_j: params.initial_energy_j,
            packet_j: [[0.0; 3]; 2],
            state_j: [0.0; 5],
            state_s: [0.0; 5],
            cursor_s: 0.0,
            alive: true,
            dead_at_s: None,
            rejected_ops: 0,
        }
    }

    pub fn residual_j(&self) -> f64 {
        self.residual_j
    }

    pub fn initial_j(&self) -> f64 {
        self.initial_j
    }

    pub fn alive(&self) -> bool {
        self.alive
    }

    pub fn dead_at_s(&self) -> Option<f64> {
        self.dead_at_s
    }

    pub fn rejected_ops(&self) -> u64 {
        self.rejected_ops
    }

    pub fn packet_j(&self, dir: Direction, layer: LayerClass) -> f64 {
        self.packet_j[dir.index()][layer.index()]
    }

    pub fn state_j(&self, state: RadioState) -> f64 {
        self.state_j[state.index()]
    }

    pub fn state_s(&self, state: RadioState) -> f64 {
        self.state_s[state.index()]
    }

    /// Total accounted state time, seconds.
    pub fn accounted_s(&self) -> f64 {
        self.state_s.iter().sum()
    }

    /// Total consumption over every category, joules.
    pub fn consumed_j(&self) -> f64 {
        let packets: f64 = self.packet_j.iter().flatten().sum();
        let states: f64 = self.state_j.iter().sum();
        packets + states
    }

    /// `initial - residual - consumed`; zero up to float error.
    pub fn balance_error_j(&self) -> f64 {
        (self.initial_j - self.residual_j) - self.consumed_j()
    }

    fn spend(&mut self, joules: f64, now_s: f64) {
        self.residual_j -= joules;
        if self.alive && self.residual_j <= 0.0 {
            self.alive = false;
            self.dead_at_s = Some(now_s);
        }
    }

    /// Accrue `duration` seconds in `state`. Charged at `power(state) x
    /// duration`; also advances the state-time account.
    ///
    /// Accruing on a dead node is a no-op flagged in `rejected_ops`.
    pub fn accrue_state(
        &mut self,
        state: RadioState,
        duration_s: f64,
        now_s: f64,
        params: &EnergyParams,
    ) {
        debug_assert!(duration_s >= 0.0, "negative accrual duration");
        if !self.alive {
            self.rejected_ops += 1;
            return;
        }
        if duration_s == 0.0 {
            return;
        }
        let joules = state.power(params) * duration_s;
        self.state_j[state.index()] += joules;
        self.state_s[state.index()] += duration_s;
        self.cursor_s = self.cursor_s.max(now_s);
        self.spend(joules, now_s);
    }

    /// Charge per-packet energy for one transmission or reception.
    ///
    /// If the residual crosses zero the node is marked dead; callers must stop
    /// exposing it to the channel from that point on.
    pub fn charge_packet(
        &mut self,
        dir: Direction,
        layer: LayerClass,
        size_bits: f64,
        now_s: f64,
        params: &EnergyParams,
    ) {
        if !self.alive {
            self.rejected_ops += 1;
            return;
        }
        let joules = match dir {
            Direction::Tx => energy_tx(size_bits, params),
            Direction::Rx => energy_rx(size_bits, params),
        };
        self.packet_j[dir.index()][layer.index()] += joules;
        self.spend(joules, now_s);
    }

    /// Account one frame interval `[start, end]` in direction `dir`: idle time
    /// accrues over the gap since the last accounted instant, the busy segment
    /// is booked as Tx/Rx state time, and the packet energy is charged via the
    /// per-packet equations (state time carries no extra energy, avoiding
    /// double counting).
    ///
    /// Frame events are processed in end-time order; overlapping exposures
    /// contribute only their uncovered tail to the busy time (interval union).
    pub fn on_frame(
        &mut self,
        start_s: f64,
        end_s: f64,
        dir: Direction,
        layer: LayerClass,
        size_bits: f64,
        params: &EnergyParams,
    ) {
        if !self.alive {
            self.rejected_ops += 1;
            return;
        }
        let idle_gap = (start_s - self.cursor_s).max(0.0);
        if idle_gap > 0.0 {
            self.accrue_state(RadioState::Idle, idle_gap, start_s, params);
            if !self.alive {
                // Idle drain alone exhausted the battery.
                return;
            }
        }
        let busy = (end_s - self.cursor_s.max(start_s)).max(0.0);
        let state = match dir {
            Direction::Tx => RadioState::Tx,
            Direction::Rx => RadioState::Rx,
        };
        self.state_s[state.index()] += busy;
        self.cursor_s = self.cursor_s.max(end_s);
        self.charge_packet(dir, layer, size_bits, end_s, params);
    }

    /// Close the timeline at `end_s`, accruing trailing idle time.
    pub fn finish(&mut self, end_s: f64, params: &EnergyParams) {
        if !self.alive {
            return;
        }
        let gap = (end_s - self.cursor_s).max(0.0);
        if gap > 0.0 {
            self.accrue_state(RadioState::Idle, gap, end_s, params);
        }
        self.cursor_s = self.cursor_s.max(end_s);
    }
}
