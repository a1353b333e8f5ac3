//! Routing protocols: per-node state machines producing control packets and
//! forwarding decisions.
//!
//! Each protocol implements [`RoutingProtocol`]: the engine feeds it
//! originated data packets, packets received from the MAC, unicast-failure
//! callbacks (the link-break detector) and timers; the protocol answers with
//! [`Action`]s (send unicast/broadcast, deliver locally, set a timer, drop).
//! Protocols never touch the channel directly, which keeps them a pure
//! function of their inputs and unit-testable without the engine.

pub mod aodv;
pub mod dsdv;
pub mod dsr;

use std::collections::VecDeque;

use crate::energy::LayerClass;
use crate::rng::SimRng;
use crate::NodeId;

pub use aodv::Aodv;
pub use dsdv::{Dsdv, DSDV_INFINITY};
pub use dsr::Dsr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Aodv,
    Dsr,
    Dsdv,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Aodv => "aodv",
            Protocol::Dsr => "dsr",
            Protocol::Dsdv => "dsdv",
        }
    }
}

/// Wire sizes of control packets, in bytes. The paper reports no control
/// sizes; these defaults follow the protocols' standard wire formats in
/// spirit and only scale energy linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSizes {
    pub aodv_rreq_bytes: u32,
    pub aodv_rrep_bytes: u32,
    pub aodv_rerr_base_bytes: u32,
    pub aodv_rerr_per_dest_bytes: u32,
    pub dsr_base_bytes: u32,
    pub dsr_per_node_bytes: u32,
    pub dsdv_base_bytes: u32,
    pub dsdv_per_entry_bytes: u32,
}

impl Default for ControlSizes {
    fn default() -> Self {
        ControlSizes {
            aodv_rreq_bytes: 24,
            aodv_rrep_bytes: 20,
            aodv_rerr_base_bytes: 12,
            aodv_rerr_per_dest_bytes: 8,
            dsr_base_bytes: 16,
            dsr_per_node_bytes: 4,
            dsdv_base_bytes: 12,
            dsdv_per_entry_bytes: 12,
        }
    }
}

/// Protocol timers and limits.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingConfig {
    pub protocol: Protocol,
    pub sizes: ControlSizes,
    /// AODV active-route lifetime, seconds.
    pub aodv_route_lifetime_s: f64,
    /// Route-request retries after the initial flood (AODV and DSR).
    pub rreq_retry_limit: u32,
    /// Spacing between route-request attempts, seconds.
    pub rreq_retry_interval_s: f64,
    /// DSDV periodic full-dump interval, seconds.
    pub dsdv_period_s: f64,
    /// Pending-packet buffer capacity per node (drop-oldest).
    pub buffer_capacity: usize,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            protocol: Protocol::Aodv,
            sizes: ControlSizes::default(),
            aodv_route_lifetime_s: 10.0,
            rreq_retry_limit: 3,
            rreq_retry_interval_s: 1.0,
            dsdv_period_s: 15.0,
            buffer_capacity: 64,
        }
    }
}

// --- Packet model ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AodvRreq {
    pub source: NodeId,
    pub source_seq: u32,
    pub broadcast_id: u32,
    pub dest: NodeId,
    /// Last destination sequence number known to the originator, if any.
    pub dest_seq: Option<u32>,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AodvRrep {
    /// The node the route leads to.
    pub dest: NodeId,
    pub dest_seq: u32,
    pub hop_count: u32,
    /// The original requester the reply travels back to.
    pub requester: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AodvRerr {
    /// Unreachable destinations with their incremented sequence numbers.
    pub unreachable: Vec<(NodeId, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsrRequest {
    pub source: NodeId,
    pub request_id: u32,
    pub dest: NodeId,
    /// Accumulated route, starting with the source.
    pub route: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsrReply {
    /// Complete source route from requester to destination.
    pub route: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsrError {
    pub broken_from: NodeId,
    pub broken_to: NodeId,
    /// Reverse path from the detecting node back to the data source.
    pub route: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsdvUpdate {
    /// Advertised `(dest, metric, seq)` triples; metric [`DSDV_INFINITY`]
    /// marks broken routes.
    pub entries: Vec<(NodeId, u32, u32)>,
}

/// Application payload riding on the routing layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub flow: usize,
    pub seq: u64,
    pub emitted_at_s: f64,
    pub size_bits: u32,
    /// DSR source route (absent for table-driven protocols).
    pub source_route: Option<Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PacketBody {
    Data(DataPacket),
    AodvRreq(AodvRreq),
    AodvRrep(AodvRrep),
    AodvRerr(AodvRerr),
    DsrRequest(DsrRequest),
    DsrReply(DsrReply),
    DsrError(DsrError),
    DsdvUpdate(DsdvUpdate),
}

/// A routing-layer packet: origin, final destination and kind-tagged body.
/// Per-hop sender/receiver addressing lives in the MAC frame around it.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub origin: NodeId,
    pub dest: NodeId,
    pub body: PacketBody,
}

impl Packet {
    pub fn layer(&self) -> LayerClass {
        match self.body {
            PacketBody::Data(_) => LayerClass::Data,
            _ => LayerClass::RoutingControl,
        }
    }

    /// Payload size on the routing layer, in bits.
    pub fn size_bits(&self, sizes: &ControlSizes) -> u32 {
        let bytes = match &self.body {
            PacketBody::Data(d) => return d.size_bits,
            PacketBody::AodvRreq(_) => sizes.aodv_rreq_bytes,
            PacketBody::AodvRrep(_) => sizes.aodv_rrep_bytes,
            PacketBody::AodvRerr(e) => {
                sizes.aodv_rerr_base_bytes
                    + sizes.aodv_rerr_per_dest_bytes * e.unreachable.len() as u32
            }
            PacketBody::DsrRequest(r) => {
                sizes.dsr_base_bytes + sizes.dsr_per_node_bytes * r.route.len() as u32
            }
            PacketBody::DsrReply(r) => {
                sizes.dsr_base_bytes + sizes.dsr_per_node_bytes * r.route.len() as u32
            }
            PacketBody::DsrError(e) => {
                sizes.dsr_base_bytes + sizes.dsr_per_node_bytes * e.route.len() as u32
            }
            PacketBody::DsdvUpdate(u) => {
                sizes.dsdv_base_bytes + sizes.dsdv_per_entry_bytes * u.entries.len() as u32
            }
        };
        bytes * 8
    }

    /// Short kind tag for logs and counters.
    pub fn kind(&self) -> &'static str {
        match self.body {
            PacketBody::Data(_) => "data",
            PacketBody::AodvRreq(_) => "rreq",
            PacketBody::AodvRrep(_) => "rrep",
            PacketBody::AodvRerr(_) => "rerr",
            PacketBody::DsrRequest(_) => "dsr-req",
            PacketBody::DsrReply(_) => "dsr-rep",
            PacketBody::DsrError(_) => "dsr-err",
            PacketBody::DsdvUpdate(_) => "dsdv-upd",
        }
    }
}

// --- Protocol interface ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimerKind {
    /// Route-request retry for a pending discovery.
    DiscoveryRetry { dest: NodeId, attempt: u32 },
    /// DSDV periodic full-table dump.
    DsdvPeriodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    BufferOverflow,
    DiscoveryFailed,
    NoRoute,
    LinkBreak,
    StaleControl,
}

impl DropReason {
    pub fn name(self) -> &'static str {
        match self {
            DropReason::BufferOverflow => "buffer-overflow",
            DropReason::DiscoveryFailed => "discovery-failed",
            DropReason::NoRoute => "no-route",
            DropReason::LinkBreak => "link-break",
            DropReason::StaleControl => "stale-control",
        }
    }
}

/// What a protocol asks the node to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Unicast { next_hop: NodeId, packet: Packet },
    Broadcast { packet: Packet },
    /// A data packet reached its final destination here.
    DeliverLocal { packet: Packet },
    SetTimer { at_s: f64, kind: TimerKind },
    /// A packet was dropped; metrics count it by reason.
    Drop { packet: Packet, reason: DropReason },
}

/// Per-invocation context handed to the protocol.
pub struct RoutingCtx<'a> {
    pub me: NodeId,
    pub now_s: f64,
    pub config: &'a RoutingConfig,
    pub rng: &'a mut SimRng,
}

pub trait RoutingProtocol {
    /// Called once at t = 0 (DSDV schedules its first dump here).
    fn start(&mut self, ctx: &mut RoutingCtx) -> Vec<Action>;

    /// A locally generated data packet wants to reach `packet.dest`.
    fn originate(&mut self, packet: Packet, ctx: &mut RoutingCtx) -> Vec<Action>;

    /// A packet arrived over the MAC from neighbor `from`.
    fn receive(&mut self, packet: Packet, from: NodeId, ctx: &mut RoutingCtx) -> Vec<Action>;

    /// The MAC exhausted its retries unicasting `packet` to `next_hop`.
    fn unicast_failed(
        &mut self,
        next_hop: NodeId,
        packet: Packet,
        ctx: &mut RoutingCtx,
    ) -> Vec<Action>;

    /// A previously requested timer fired.
    fn timer(&mut self, kind: TimerKind, ctx: &mut RoutingCtx) -> Vec<Action>;
}

/// Build the configured protocol state machine for one node.
pub fn make_protocol(protocol: Protocol, node: NodeId) -> Box<dyn RoutingProtocol> {
    match protocol {
        Protocol::Aodv => Box::new(Aodv::new(node)),
        Protocol::Dsr => Box::new(Dsr::new(node)),
        Protocol::Dsdv => Box::new(Dsdv::new(node)),
    }
}

// --- Pending-packet buffer --------------------------------------------------

/// Bounded buffer of data packets awaiting a route, drop-oldest on overflow.
#[derive(Debug, Default)]
pub struct PendingBuffer {
    queue: VecDeque<Packet>,
}

impl PendingBuffer {
    /// Push a packet; returns the evicted oldest packet when full.
    pub fn push(&mut self, packet: Packet, capacity: usize) -> Option<Packet> {
        let dropped = if self.queue.len() >= capacity.max(1) {
            self.queue.pop_front()
        } else {
            None
        };
        self.queue.push_back(packet);
        dropped
    }

    /// Remove and return all buffered packets for `dest`, oldest first.
    pub fn take_for(&mut self, dest: NodeId) -> Vec<Packet> {
        let mut taken = Vec::new();
        self.queue.retain(|p| {
            if p.dest == dest {
                taken.push(p.clone());
                false
            } else {
                true
            }
        });
        taken
    }

    pub fn contains_for(&self, dest: NodeId) -> bool {
        self.queue.iter().any(|p| p.dest == dest)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}
