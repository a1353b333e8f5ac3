//! Simplified 802.11 DCF channel model.
//!
//! Carrier sensing (physical plus NAV), uniform random backoff over a fixed
//! contention window, RTS/CTS/DATA/ACK for unicast above the RTS threshold,
//! DATA/ACK below it, plain transmission for broadcast, unit-disk
//! propagation and no-capture collision resolution. Frame kinds RTS, CTS and
//! ACK are classified mac-control; DATA frames inherit the layer class of
//! the routing packet they carry.
//!
//! The structures here hold per-node MAC state and channel parameters; the
//! event orchestration (who hears what, when) lives in the simulation
//! driver, which owns positions, energy ledgers and the event queue.

use std::collections::{BTreeMap, VecDeque};

use crate::energy::LayerClass;
use crate::kernel::EventHandle;
use crate::routing::Packet;
use crate::NodeId;

/// Channel and DCF parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub bit_rate_bps: f64,
    /// Unit-disk transmission range.
    pub range_m: f64,
    /// Carrier-sense range (defaults to the transmission range).
    pub cs_range_m: f64,
    pub slot_s: f64,
    pub difs_s: f64,
    pub sifs_s: f64,
    /// Fixed contention window, in slots; backoff ~ Uniform[0, cw).
    pub cw_slots: u32,
    /// Unicast retry limit before the link is reported broken.
    pub retry_limit: u32,
    pub rts_bits: u32,
    pub cts_bits: u32,
    pub ack_bits: u32,
    /// MAC header added to every DATA frame.
    pub data_header_bits: u32,
    /// Unicast DATA payloads of at least this many bits use RTS/CTS;
    /// `None` disables RTS/CTS entirely.
    pub rts_threshold_bits: Option<u32>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            bit_rate_bps: 2e6,
            range_m: 250.0,
            cs_range_m: 250.0,
            slot_s: 20e-6,
            difs_s: 50e-6,
            sifs_s: 10e-6,
            cw_slots: 32,
            retry_limit: 4,
            rts_bits: 352,
            cts_bits: 304,
            ack_bits: 304,
            data_header_bits: 272,
            rts_threshold_bits: Some(0),
        }
    }
}

impl ChannelModel {
    pub fn airtime_s(&self, bits: u32) -> f64 {
        bits as f64 / self.bit_rate_bps
    }

    /// Size on air of a control frame, or the header overhead for DATA.
    pub fn frame_overhead_bits(&self, kind: FrameKind) -> u32 {
        match kind {
            FrameKind::Rts => self.rts_bits,
            FrameKind::Cts => self.cts_bits,
            FrameKind::Ack => self.ack_bits,
            FrameKind::Data => self.data_header_bits,
        }
    }

    /// Full on-air size of a DATA frame carrying `payload_bits`.
    pub fn data_frame_bits(&self, payload_bits: u32) -> u32 {
        payload_bits + self.data_header_bits
    }

    pub fn uses_rts(&self, payload_bits: u32) -> bool {
        match self.rts_threshold_bits {
            Some(threshold) => payload_bits >= threshold,
            None => false,
        }
    }

    /// How long a sender waits for the CTS after its RTS ended.
    pub fn cts_timeout_s(&self) -> f64 {
        self.sifs_s + self.airtime_s(self.cts_bits) + 2.0 * self.slot_s
    }

    /// How long a sender waits for the ACK after its DATA ended.
    pub fn ack_timeout_s(&self) -> f64 {
        self.sifs_s + self.airtime_s(self.ack_bits) + 2.0 * self.slot_s
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.bit_rate_bps > 0.0) {
            return Err(format!("bit rate must be positive, got {}", self.bit_rate_bps));
        }
        if !(self.range_m > 0.0) || !(self.cs_range_m > 0.0) {
            return Err(format!(
                "ranges must be positive, got tx {} / cs {}",
                self.range_m, self.cs_range_m
            ));
        }
        if self.cw_slots == 0 {
            return Err("contention window must be at least 1 slot".into());
        }
        for (name, v) in [
            ("slot", self.slot_s),
            ("difs", self.difs_s),
            ("sifs", self.sifs_s),
        ] {
            if v < 0.0 {
                return Err(format!("{name} time must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Rts,
    Cts,
    Ack,
    Data,
}

impl FrameKind {
    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Rts => "rts",
            FrameKind::Cts => "cts",
            FrameKind::Ack => "ack",
            FrameKind::Data => "data",
        }
    }
}

/// One frame on the air.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub transmitter: NodeId,
    /// Intended receiver; `None` for broadcast.
    pub receiver: Option<NodeId>,
    /// Size on air, bits.
    pub bits: u32,
    /// Enclosed routing packet (DATA frames only).
    pub packet: Option<Packet>,
    /// Per-transmitter DATA sequence number (duplicate suppression across
    /// retransmissions); 0 for control frames.
    pub seq: u64,
    /// Virtual carrier reservation carried by the frame: listeners defer
    /// until this instant.
    pub nav_until_s: f64,
}

impl Frame {
    pub fn layer(&self) -> LayerClass {
        match self.kind {
            FrameKind::Rts | FrameKind::Cts | FrameKind::Ack => LayerClass::MacControl,
            FrameKind::Data => self
                .packet
                .as_ref()
                .map(|p| p.layer())
                .unwrap_or(LayerClass::Data),
        }
    }
}

/// A queued send request from the routing layer.
#[derive(Debug, Clone)]
pub struct MacJob {
    pub packet: Packet,
    /// `None` = broadcast.
    pub next_hop: Option<NodeId>,
    /// DATA frame sequence number; assigned at submission, stable across
    /// retransmissions.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Waiting for the scheduled channel-access attempt.
    Contending,
    AwaitingCts,
    AwaitingAck,
}

#[derive(Debug)]
pub struct Exchange {
    pub job: MacJob,
    pub phase: Phase,
    pub retries: u32,
    /// Guards stale attempt/timeout events after a phase change.
    pub token: u64,
    pub timeout: Option<EventHandle>,
}

/// Per-node MAC state.
#[derive(Debug, Default)]
pub struct MacState {
    pub queue: VecDeque<MacJob>,
    pub exchange: Option<Exchange>,
    /// Physical carrier sense: medium busy until this instant.
    pub busy_until_s: f64,
    /// Virtual carrier sense (NAV).
    pub nav_until_s: f64,
    pub transmitting_until_s: f64,
    pub last_tx_start_s: f64,
    next_seq: u64,
    next_token: u64,
    /// Last DATA sequence delivered upward, per transmitter.
    delivered: BTreeMap<NodeId, u64>,
}

impl MacState {
    pub fn new() -> Self {
        MacState {
            last_tx_start_s: f64::NEG_INFINITY,
            ..MacState::default()
        }
    }

    pub fn next_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    pub fn next_token(&mut self) -> u64 {
        self.next_token += 1;
        self.next_token
    }

    /// Medium considered busy (physically or by NAV) until this instant.
    pub fn carrier_busy_until_s(&self) -> f64 {
        self.busy_until_s.max(self.nav_until_s)
    }

    pub fn is_transmitting(&self, now_s: f64) -> bool {
        self.transmitting_until_s > now_s
    }

    /// Did this node transmit at any point during `[start, end)`?
    pub fn transmitted_during(&self, start_s: f64, end_s: f64) -> bool {
        self.last_tx_start_s < end_s && self.transmitting_until_s > start_s
    }

    /// Duplicate suppression: true when the DATA frame (transmitter, seq)
    /// has not been delivered upward yet.
    pub fn accept_data(&mut self, transmitter: NodeId, seq: u64) -> bool {
        match self.delivered.get(&transmitter) {
            Some(&last) if last == seq => false,
            _ => {
                self.delivered.insert(transmitter, seq);
                true
            }
        }
    }
}
