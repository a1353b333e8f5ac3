//! Scenario assembly and the event-driven simulation core.
//!
//! A [`Simulation`] owns the node stacks (routing state machine, MAC state,
//! energy ledger), the precomputed mobility traces and traffic schedules,
//! and the event engine. Event handlers implement the channel semantics:
//! unit-disk propagation, carrier sensing, collisions without capture, and
//! per-frame energy reporting (tx for the sender, rx for every exposed
//! in-range node, including collided frames).

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::energy::{Direction, EnergyLedger, LayerClass};
use crate::kernel::{Engine, KernelError, LogEntry, SimTime};
use crate::mac::{Exchange, Frame, FrameKind, MacJob, MacState, Phase};
use crate::metrics::MetricsReport;
use crate::mobility::{self, MobilityTrace, Point};
use crate::rng::{sub_stream, SimRng};
use crate::routing::{
    Action, Aodv, DataPacket, Dsdv, Dsr, Packet, PacketBody, Protocol, RoutingCtx,
    RoutingProtocol, TimerKind,
};
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::traffic::{self, FlowSpec};
use crate::NodeId;

/// Event payloads of the network simulation.
#[derive(Debug)]
enum Ev {
    TrafficEmit { flow: usize, seq: u64 },
    RoutingTimer { node: NodeId, kind: TimerKind },
    MacAttempt { node: NodeId, token: u64 },
    MacResponse { node: NodeId, frame: Frame },
    MacTimeout { node: NodeId, token: u64 },
    TxEnd { tx_id: u64 },
    RxEnd { tx_id: u64, receiver: NodeId },
}

/// One transmission in flight.
struct ActiveTx {
    frame: Frame,
    start_s: f64,
    end_s: f64,
    exposed: Vec<NodeId>,
    collided: BTreeSet<NodeId>,
    /// Outstanding TxEnd/RxEnd events.
    pending: usize,
}

/// Per-protocol routing state with direct access for inspection.
pub enum NodeRouting {
    Aodv(Aodv),
    Dsr(Dsr),
    Dsdv(Dsdv),
}

impl NodeRouting {
    fn as_protocol(&mut self) -> &mut dyn RoutingProtocol {
        match self {
            NodeRouting::Aodv(p) => p,
            NodeRouting::Dsr(p) => p,
            NodeRouting::Dsdv(p) => p,
        }
    }

    pub fn aodv(&self) -> Option<&Aodv> {
        match self {
            NodeRouting::Aodv(p) => Some(p),
            _ => None,
        }
    }

    pub fn dsr(&self) -> Option<&Dsr> {
        match self {
            NodeRouting::Dsr(p) => Some(p),
            _ => None,
        }
    }

    pub fn dsdv(&self) -> Option<&Dsdv> {
        match self {
            NodeRouting::Dsdv(p) => Some(p),
            _ => None,
        }
    }
}

/// Raw event counts collected during a run.
#[derive(Debug, Default, Clone)]
pub struct Counters {
    pub data_sent: u64,
    pub data_delivered: u64,
    pub delay_sum_s: f64,
    pub delivered_payload_bits: u64,
    pub collisions: u64,
    pub exposures: u64,
    pub tx_reports: u64,
    pub rx_reports: u64,
    pub rx_missed: u64,
    pub rx_dead: u64,
    pub response_conflicts: u64,
    pub link_failures: u64,
    /// Frames put on the air, by frame kind.
    pub frames_tx: BTreeMap<&'static str, u64>,
    /// Frames received cleanly by their addressee (or any node, for
    /// broadcast), by frame kind.
    pub frames_delivered: BTreeMap<&'static str, u64>,
    /// Routing-control packet transmissions by packet kind.
    pub control_tx: BTreeMap<&'static str, u64>,
    pub drops: BTreeMap<&'static str, u64>,
}

pub struct Simulation {
    config: ScenarioConfig,
    engine: Engine<Ev>,
    traces: Vec<MobilityTrace>,
    flows: Vec<FlowSpec>,
    schedules: Vec<Vec<f64>>,
    routing: Vec<NodeRouting>,
    macs: Vec<MacState>,
    ledgers: Vec<EnergyLedger>,
    mac_rngs: Vec<SimRng>,
    routing_rngs: Vec<SimRng>,
    active: BTreeMap<u64, ActiveTx>,
    next_tx_id: u64,
    counters: Counters,
    delivered: Vec<BTreeSet<u64>>,
    protocol_log: Vec<String>,
    finished: bool,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let n = config.node_count;
        let duration = config.duration_s;
        let seed = config.master_seed;

        let traces = match &config.static_positions {
            Some(points) => points
                .iter()
                .enumerate()
                .map(|(node, p)| MobilityTrace::from_points(node, duration, vec![(0.0, *p)]))
                .collect(),
            None => mobility::generate(&config.mobility, n, duration, seed)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?,
        };

        let flows = match &config.flows_override {
            Some(flows) => flows.clone(),
            None => {
                let mut flows_rng = sub_stream(seed, "flows", 0);
                traffic::random_flows(n, config.flow_count, 0.0, duration, &mut flows_rng)
            }
        };
        let mut schedules = Vec::with_capacity(flows.len());
        for (i, flow) in flows.iter().enumerate() {
            flow.validate(duration)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            let mut rng = sub_stream(seed, "traffic", i as u64);
            let schedule = traffic::build_schedule(flow, &config.traffic, &mut rng)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            schedules.push(schedule);
        }

        let routing = (0..n)
            .map(|node| match config.protocol {
                Protocol::Aodv => NodeRouting::Aodv(Aodv::new(node)),
                Protocol::Dsr => NodeRouting::Dsr(Dsr::new(node)),
                Protocol::Dsdv => NodeRouting::Dsdv(Dsdv::new(node)),
            })
            .collect();
        let macs = (0..n).map(|_| MacState::new()).collect();
        let ledgers = (0..n).map(|_| EnergyLedger::new(&config.energy)).collect();
        let mac_rngs = (0..n)
            .map(|node| sub_stream(seed, "mac", node as u64))
            .collect();
        let routing_rngs = (0..n)
            .map(|node| sub_stream(seed, "routing", node as u64))
            .collect();

        let mut engine = Engine::new();
        if config.record_event_log {
            engine.enable_log();
        }
        let delivered = vec![BTreeSet::new(); flows.len()];

        Ok(Simulation {
            config,
            engine,
            traces,
            flows,
            schedules,
            routing,
            macs,
            ledgers,
            mac_rngs,
            routing_rngs,
            active: BTreeMap::new(),
            next_tx_id: 0,
            counters: Counters::default(),
            delivered,
            protocol_log: Vec::new(),
            finished: false,
        })
    }

    /// Run to the configured duration and compute the report.
    pub fn run(&mut self) -> MetricsReport {
        assert!(!self.finished, "a simulation runs once");
        self.finished = true;

        // Seed the initial events: protocol start actions and every traffic
        // emission (schedules are precomputed and final).
        for node in 0..self.config.node_count {
            let actions = self.call_routing(node, |p, ctx| p.start(ctx));
            self.apply_actions(node, actions);
        }
        let emissions: Vec<(f64, usize, u64)> = self
            .schedules
            .iter()
            .enumerate()
            .flat_map(|(flow, times)| {
                times
                    .iter()
                    .enumerate()
                    .map(move |(seq, &t)| (t, flow, seq as u64))
            })
            .collect();
        for (t, flow, seq) in emissions {
            self.schedule(t, Ev::TrafficEmit { flow, seq }, "traffic");
        }

        let until = SimTime(self.config.duration_s);
        while let Some((_, ev)) = self.engine.step_until(until) {
            self.dispatch(ev);
        }

        for ledger in &mut self.ledgers {
            ledger.finish(self.config.duration_s, &self.config.energy);
        }
        self.report()
    }

    // --- accessors ---------------------------------------------------------

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn ledgers(&self) -> &[EnergyLedger] {
        &self.ledgers
    }

    pub fn routing_state(&self, node: NodeId) -> &NodeRouting {
        &self.routing[node]
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.flows
    }

    pub fn schedules(&self) -> &[Vec<f64>] {
        &self.schedules
    }

    pub fn event_log(&self) -> &[LogEntry] {
        self.engine.log()
    }

    pub fn protocol_log(&self) -> &[String] {
        &self.protocol_log
    }

    // --- plumbing ----------------------------------------------------------

    fn now(&self) -> f64 {
        self.engine.clock().seconds()
    }

    fn schedule(&mut self, at_s: f64, ev: Ev, context: &str) {
        if let Err(e) = self.engine.schedule(SimTime(at_s), ev, context) {
            // Scheduling into the past is a programming error in a handler.
            panic!("{}", KernelErrorWrapper(e));
        }
    }

    fn position_of(&self, node: NodeId) -> Point {
        self.traces[node]
            .position_at(self.now().min(self.config.duration_s))
            .expect("event times stay within the run window")
    }

    fn call_routing(
        &mut self,
        node: NodeId,
        f: impl FnOnce(&mut dyn RoutingProtocol, &mut RoutingCtx) -> Vec<Action>,
    ) -> Vec<Action> {
        let now_s = self.engine.clock().seconds();
        let mut ctx = RoutingCtx {
            me: node,
            now_s,
            config: &self.config.routing,
            rng: &mut self.routing_rngs[node],
        };
        f(self.routing[node].as_protocol(), &mut ctx)
    }

    fn log_protocol(&mut self, node: NodeId, packet: &Packet, action: &str) {
        if !self.config.record_protocol_log || packet.layer() != LayerClass::RoutingControl {
            return;
        }
        let line = format!(
            "{:.9} {} {} {} {}",
            self.now(),
            node,
            packet.kind(),
            packet.size_bits(&self.config.routing.sizes),
            action
        );
        self.protocol_log.push(line);
    }

    // --- event dispatch ----------------------------------------------------

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::TrafficEmit { flow, seq } => self.on_traffic_emit(flow, seq),
            Ev::RoutingTimer { node, kind } => self.on_routing_timer(node, kind),
            Ev::MacAttempt { node, token } => self.on_mac_attempt(node, token),
            Ev::MacResponse { node, frame } => self.on_mac_response(node, frame),
            Ev::MacTimeout { node, token } => self.on_mac_timeout(node, token),
            Ev::TxEnd { tx_id } => self.on_tx_end(tx_id),
            Ev::RxEnd { tx_id, receiver } => self.on_rx_end(tx_id, receiver),
        }
    }

    fn on_traffic_emit(&mut self, flow: usize, seq: u64) {
        let spec = self.flows[flow];
        let node = spec.source;
        self.counters.data_sent += 1;
        if self.engine.log_enabled() {
            self.engine
                .record("traffic-emit", Some(node), format!("flow={flow} seq={seq}"));
        }
        if !self.ledgers[node].alive() {
            *self.counters.drops.entry("source-dead").or_default() += 1;
            return;
        }
        let packet = Packet {
            origin: node,
            dest: spec.dest,
            body: PacketBody::Data(DataPacket {
                flow,
                seq,
                emitted_at_s: self.now(),
                size_bits: self.config.traffic.packet_size_bits,
                source_route: None,
            }),
        };
        let actions = self.call_routing(node, |p, ctx| p.originate(packet, ctx));
        self.apply_actions(node, actions);
    }

    fn on_routing_timer(&mut self, node: NodeId, kind: TimerKind) {
        if !self.ledgers[node].alive() {
            return;
        }
        if self.engine.log_enabled() {
            self.engine
                .record("routing-timer", Some(node), format!("{kind:?}"));
        }
        let actions = self.call_routing(node, |p, ctx| p.timer(kind, ctx));
        self.apply_actions(node, actions);
    }

    fn apply_actions(&mut self, node: NodeId, actions: Vec<Action>) {
        for action in actions {
            match action {
                Action::Unicast { next_hop, packet } => {
                    self.log_protocol(node, &packet, "tx-unicast");
                    self.submit_job(node, Some(next_hop), packet);
                }
                Action::Broadcast { packet } => {
                    self.log_protocol(node, &packet, "tx-broadcast");
                    self.submit_job(node, None, packet);
                }
                Action::DeliverLocal { packet } => self.record_delivery(node, packet),
                Action::SetTimer { at_s, kind } => {
                    self.schedule(at_s, Ev::RoutingTimer { node, kind }, "routing-timer");
                }
                Action::Drop { packet, reason } => {
                    self.log_protocol(node, &packet, reason.name());
                    *self.counters.drops.entry(reason.name()).or_default() += 1;
                }
            }
        }
    }

    fn record_delivery(&mut self, node: NodeId, packet: Packet) {
        debug_assert_eq!(node, packet.dest, "local delivery at the final destination");
        if let PacketBody::Data(data) = packet.body {
            if self.delivered[data.flow].insert(data.seq) {
                self.counters.data_delivered += 1;
                self.counters.delay_sum_s += self.now() - data.emitted_at_s;
                self.counters.delivered_payload_bits += data.size_bits as u64;
            }
        }
    }

    // --- MAC ---------------------------------------------------------------

    fn submit_job(&mut self, node: NodeId, next_hop: Option<NodeId>, packet: Packet) {
        if !self.ledgers[node].alive() {
            return;
        }
        let seq = self.macs[node].next_seq();
        self.macs[node].queue.push_back(MacJob {
            packet,
            next_hop,
            seq,
        });
        self.kick_mac(node);
    }

    /// Promote the next queued job into an exchange and contend for the
    /// channel.
    fn kick_mac(&mut self, node: NodeId) {
        if self.macs[node].exchange.is_some() {
            return;
        }
        let Some(job) = self.macs[node].queue.pop_front() else {
            return;
        };
        self.macs[node].exchange = Some(Exchange {
            job,
            phase: Phase::Contending,
            retries: 0,
            token: 0,
            timeout: None,
        });
        self.schedule_attempt(node);
    }

    /// Schedule the next channel-access attempt: wait out the busy medium,
    /// then DIFS plus a fresh uniform backoff.
    fn schedule_attempt(&mut self, node: NodeId) {
        let now = self.now();
        let ch = &self.config.channel;
        let backoff_slots = self.mac_rngs[node].random_range(0..ch.cw_slots);
        let backoff = backoff_slots as f64 * ch.slot_s;
        let mac = &mut self.macs[node];
        let token = mac.next_token();
        let exchange = mac.exchange.as_mut().expect("attempt needs an exchange");
        exchange.token = token;
        exchange.phase = Phase::Contending;
        let idle_from = mac.carrier_busy_until_s().max(now);
        let at = idle_from + self.config.channel.difs_s + backoff;
        self.schedule(at, Ev::MacAttempt { node, token }, "mac-attempt");
    }

    fn on_mac_attempt(&mut self, node: NodeId, token: u64) {
        let now = self.now();
        if !self.ledgers[node].alive() {
            self.macs[node].exchange = None;
            self.macs[node].queue.clear();
            return;
        }
        let mac = &self.macs[node];
        let Some(exchange) = mac.exchange.as_ref() else {
            return;
        };
        if exchange.token != token || exchange.phase != Phase::Contending {
            return; // stale attempt
        }
        if mac.carrier_busy_until_s() > now || mac.is_transmitting(now) {
            // Medium became busy again: re-contend with a fresh backoff.
            self.schedule_attempt(node);
            return;
        }
        if self.engine.log_enabled() {
            self.engine.record("mac-attempt", Some(node), String::new());
        }
        let exchange = self.macs[node].exchange.as_ref().expect("checked above");
        let job_payload_bits = exchange.job.packet.size_bits(&self.config.routing.sizes);
        let unicast = exchange.job.next_hop;
        let frame = match unicast {
            None => {
                // Broadcast data: single transmission, no reservation.
                self.data_frame(node, 0.0)
            }
            Some(peer) => {
                if self.config.channel.uses_rts(job_payload_bits) {
                    self.macs[node].exchange.as_mut().expect("exchange").phase =
                        Phase::AwaitingCts;
                    self.rts_frame(node, peer, job_payload_bits)
                } else {
                    self.macs[node].exchange.as_mut().expect("exchange").phase =
                        Phase::AwaitingAck;
                    let ch = &self.config.channel;
                    let data_air = ch.airtime_s(ch.data_frame_bits(job_payload_bits));
                    let nav = now + data_air + ch.sifs_s + ch.airtime_s(ch.ack_bits);
                    self.data_frame(node, nav)
                }
            }
        };
        self.transmit(node, frame);
    }

    fn data_frame(&self, node: NodeId, nav_until_s: f64) -> Frame {
        let exchange = self.macs[node].exchange.as_ref().expect("exchange");
        let payload_bits = exchange.job.packet.size_bits(&self.config.routing.sizes);
        Frame {
            kind: FrameKind::Data,
            transmitter: node,
            receiver: exchange.job.next_hop,
            bits: self.config.channel.data_frame_bits(payload_bits),
            packet: Some(exchange.job.packet.clone()),
            seq: exchange.job.seq,
            nav_until_s,
        }
    }

    fn rts_frame(&self, node: NodeId, peer: NodeId, payload_bits: u32) -> Frame {
        let ch = &self.config.channel;
        let now = self.now();
        let rts_end = now + ch.airtime_s(ch.rts_bits);
        let data_air = ch.airtime_s(ch.data_frame_bits(payload_bits));
        let nav = rts_end
            + ch.sifs_s
            + ch.airtime_s(ch.cts_bits)
            + ch.sifs_s
            + data_air
            + ch.sifs_s
            + ch.airtime_s(ch.ack_bits);
        Frame {
            kind: FrameKind::Rts,
            transmitter: node,
            receiver: Some(peer),
            bits: ch.rts_bits,
            packet: None,
            seq: 0,
            nav_until_s: nav,
        }
    }

    /// Put a frame on the air: unit-disk exposure, carrier sensing for every
    /// node in carrier-sense range, and no-capture collision marking against
    /// every overlapping transmission.
    fn transmit(&mut self, node: NodeId, frame: Frame) {
        let now = self.now();
        let ch = &self.config.channel;
        let end = now + ch.airtime_s(frame.bits);
        let sender_pos = self.position_of(node);

        *self.counters.frames_tx.entry(frame.kind.name()).or_default() += 1;
        if frame.kind == FrameKind::Data {
            if let Some(packet) = &frame.packet {
                if packet.layer() == LayerClass::RoutingControl {
                    *self.counters.control_tx.entry(packet.kind()).or_default() += 1;
                }
            }
        }
        if self.engine.log_enabled() {
            self.engine.record(
                "tx-start",
                Some(node),
                format!(
                    "kind={} bits={} to={:?}",
                    frame.kind.name(),
                    frame.bits,
                    frame.receiver
                ),
            );
        }

        {
            let mac = &mut self.macs[node];
            mac.last_tx_start_s = now;
            mac.transmitting_until_s = end;
            mac.busy_until_s = mac.busy_until_s.max(end);
        }

        let mut exposed = Vec::new();
        for other in 0..self.config.node_count {
            if other == node || !self.ledgers[other].alive() {
                continue;
            }
            let d = sender_pos.distance(&self.position_of(other));
            if d <= self.config.channel.cs_range_m {
                let mac = &mut self.macs[other];
                mac.busy_until_s = mac.busy_until_s.max(end);
            }
            if d <= self.config.channel.range_m && !self.macs[other].is_transmitting(now) {
                exposed.push(other);
            }
        }

        let tx_id = self.next_tx_id;
        self.next_tx_id += 1;
        let mut collided = BTreeSet::new();
        for (_, other_tx) in self.active.iter_mut() {
            if other_tx.end_s <= now {
                continue;
            }
            for &r in &exposed {
                if other_tx.exposed.contains(&r) {
                    other_tx.collided.insert(r);
                    collided.insert(r);
                }
            }
        }

        self.counters.exposures += exposed.len() as u64;
        let pending = exposed.len() + 1;
        for &r in &exposed {
            self.schedule(end, Ev::RxEnd { tx_id, receiver: r }, "rx-end");
        }
        self.schedule(end, Ev::TxEnd { tx_id }, "tx-end");
        self.active.insert(
            tx_id,
            ActiveTx {
                frame,
                start_s: now,
                end_s: end,
                exposed,
                collided,
                pending,
            },
        );
    }

    fn release_active(&mut self, tx_id: u64) {
        let done = {
            let tx = self.active.get_mut(&tx_id).expect("active transmission");
            tx.pending -= 1;
            tx.pending == 0
        };
        if done {
            self.active.remove(&tx_id);
        }
    }

    fn on_tx_end(&mut self, tx_id: u64) {
        let (frame, start, end) = {
            let tx = self.active.get(&tx_id).expect("active transmission");
            (tx.frame.clone(), tx.start_s, tx.end_s)
        };
        let node = frame.transmitter;
        self.counters.tx_reports += 1;
        self.ledgers[node].on_frame(
            start,
            end,
            Direction::Tx,
            frame.layer(),
            frame.bits as f64,
            &self.config.energy,
        );
        if self.engine.log_enabled() {
            self.engine.record(
                "tx-end",
                Some(node),
                format!("kind={} bits={}", frame.kind.name(), frame.bits),
            );
        }

        // Sender-side exchange progress.
        let ch = self.config.channel.clone();
        let now = self.now();
        let mut fail_check: Option<()> = None;
        if let Some(exchange) = self.macs[node].exchange.as_mut() {
            match frame.kind {
                FrameKind::Rts if exchange.phase == Phase::AwaitingCts => {
                    let token = exchange.token;
                    let at = now + ch.cts_timeout_s();
                    let handle = self
                        .engine
                        .schedule(SimTime(at), Ev::MacTimeout { node, token }, "cts-timeout")
                        .expect("future timeout");
                    self.macs[node].exchange.as_mut().expect("exchange").timeout = Some(handle);
                }
                FrameKind::Data => {
                    if exchange.job.seq == frame.seq {
                        match exchange.job.next_hop {
                            None => {
                                // Broadcast complete.
                                self.macs[node].exchange = None;
                                fail_check = Some(());
                            }
                            Some(_) if exchange.phase == Phase::AwaitingAck => {
                                let token = exchange.token;
                                let at = now + ch.ack_timeout_s();
                                let handle = self
                                    .engine
                                    .schedule(
                                        SimTime(at),
                                        Ev::MacTimeout { node, token },
                                        "ack-timeout",
                                    )
                                    .expect("future timeout");
                                self.macs[node]
                                    .exchange
                                    .as_mut()
                                    .expect("exchange")
                                    .timeout = Some(handle);
                            }
                            _ => {}
                        }
                    }
                }
                _ => {}
            }
        }
        if fail_check.is_some() {
            self.kick_mac(node);
        }
        self.release_active(tx_id);
    }

    fn on_rx_end(&mut self, tx_id: u64, receiver: NodeId) {
        let (frame, start, end, collided) = {
            let tx = self.active.get(&tx_id).expect("active transmission");
            (
                tx.frame.clone(),
                tx.start_s,
                tx.end_s,
                tx.collided.contains(&receiver),
            )
        };
        let outcome;
        if !self.ledgers[receiver].alive() {
            self.counters.rx_dead += 1;
            outcome = "dead";
        } else if self.macs[receiver].transmitted_during(start, end) {
            // Half duplex: a radio that transmitted during the frame's
            // airtime cannot have received it; no rx energy accrues.
            self.counters.rx_missed += 1;
            outcome = "missed";
        } else {
            self.counters.rx_reports += 1;
            self.ledgers[receiver].on_frame(
                start,
                end,
                Direction::Rx,
                frame.layer(),
                frame.bits as f64,
                &self.config.energy,
            );
            if collided {
                self.counters.collisions += 1;
                outcome = "collided";
            } else {
                outcome = "received";
                self.deliver_frame(receiver, &frame);
            }
        }
        if self.engine.log_enabled() {
            self.engine.record(
                "rx-end",
                Some(receiver),
                format!(
                    "kind={} from={} outcome={outcome}",
                    frame.kind.name(),
                    frame.transmitter
                ),
            );
        }
        self.release_active(tx_id);
    }

    /// A frame arrived cleanly at `receiver`.
    fn deliver_frame(&mut self, receiver: NodeId, frame: &Frame) {
        let now = self.now();
        let ch = self.config.channel.clone();
        let addressed_to_me = frame.receiver == Some(receiver);
        if !addressed_to_me && frame.receiver.is_some() {
            // Overheard unicast traffic: honor its channel reservation.
            let mac = &mut self.macs[receiver];
            mac.nav_until_s = mac.nav_until_s.max(frame.nav_until_s);
            return;
        }
        match frame.kind {
            FrameKind::Rts => {
                debug_assert!(addressed_to_me);
                *self.counters.frames_delivered.entry("rts").or_default() += 1;
                let mac = &self.macs[receiver];
                if mac.nav_until_s <= now && !mac.is_transmitting(now) {
                    let cts = Frame {
                        kind: FrameKind::Cts,
                        transmitter: receiver,
                        receiver: Some(frame.transmitter),
                        bits: ch.cts_bits,
                        packet: None,
                        seq: 0,
                        nav_until_s: frame.nav_until_s,
                    };
                    self.schedule(
                        now + ch.sifs_s,
                        Ev::MacResponse {
                            node: receiver,
                            frame: cts,
                        },
                        "cts-response",
                    );
                }
            }
            FrameKind::Cts => {
                *self.counters.frames_delivered.entry("cts").or_default() += 1;
                let matches = self.macs[receiver].exchange.as_ref().is_some_and(|e| {
                    e.phase == Phase::AwaitingCts && e.job.next_hop == Some(frame.transmitter)
                });
                if matches {
                    if let Some(handle) = self.macs[receiver]
                        .exchange
                        .as_mut()
                        .and_then(|e| e.timeout.take())
                    {
                        self.engine.cancel(handle);
                    }
                    self.macs[receiver].exchange.as_mut().expect("exchange").phase =
                        Phase::AwaitingAck;
                    let data_air =
                        ch.airtime_s(ch.data_frame_bits(self.exchange_payload_bits(receiver)));
                    let nav = now + ch.sifs_s + data_air + ch.sifs_s + ch.airtime_s(ch.ack_bits);
                    let data = self.data_frame(receiver, nav);
                    self.schedule(
                        now + ch.sifs_s,
                        Ev::MacResponse {
                            node: receiver,
                            frame: data,
                        },
                        "data-response",
                    );
                }
            }
            FrameKind::Data => {
                let key = if frame.receiver.is_some() {
                    "data-unicast"
                } else {
                    "data-broadcast"
                };
                *self.counters.frames_delivered.entry(key).or_default() += 1;
                let transmitter = frame.transmitter;
                if addressed_to_me {
                    // ACK every clean unicast data frame, duplicates included.
                    let ack = Frame {
                        kind: FrameKind::Ack,
                        transmitter: receiver,
                        receiver: Some(transmitter),
                        bits: ch.ack_bits,
                        packet: None,
                        seq: 0,
                        nav_until_s: 0.0,
                    };
                    self.schedule(
                        now + ch.sifs_s,
                        Ev::MacResponse {
                            node: receiver,
                            frame: ack,
                        },
                        "ack-response",
                    );
                    if !self.macs[receiver].accept_data(transmitter, frame.seq) {
                        return; // retransmitted duplicate
                    }
                }
                let packet = frame.packet.clone().expect("data frames carry a packet");
                self.log_protocol(receiver, &packet, "rx");
                let actions =
                    self.call_routing(receiver, |p, ctx| p.receive(packet, transmitter, ctx));
                self.apply_actions(receiver, actions);
            }
            FrameKind::Ack => {
                *self.counters.frames_delivered.entry("ack").or_default() += 1;
                let matches = self.macs[receiver].exchange.as_ref().is_some_and(|e| {
                    e.phase == Phase::AwaitingAck && e.job.next_hop == Some(frame.transmitter)
                });
                if matches {
                    if let Some(handle) = self.macs[receiver]
                        .exchange
                        .as_mut()
                        .and_then(|e| e.timeout.take())
                    {
                        self.engine.cancel(handle);
                    }
                    self.macs[receiver].exchange = None;
                    self.kick_mac(receiver);
                }
            }
        }
    }

    fn exchange_payload_bits(&self, node: NodeId) -> u32 {
        self.macs[node]
            .exchange
            .as_ref()
            .expect("exchange")
            .job
            .packet
            .size_bits(&self.config.routing.sizes)
    }

    fn on_mac_response(&mut self, node: NodeId, frame: Frame) {
        let now = self.now();
        if !self.ledgers[node].alive() {
            return;
        }
        if self.macs[node].is_transmitting(now) {
            self.counters.response_conflicts += 1;
            return;
        }
        // For the sender's own DATA-after-CTS the response must still match
        // the live exchange (a timeout may have raced it).
        if frame.kind == FrameKind::Data && frame.receiver.is_some() {
            let live = self.macs[node].exchange.as_ref().is_some_and(|e| {
                e.phase == Phase::AwaitingAck && e.job.seq == frame.seq
            });
            if !live {
                return;
            }
        }
        self.transmit(node, frame);
    }

    fn on_mac_timeout(&mut self, node: NodeId, token: u64) {
        if !self.ledgers[node].alive() {
            return;
        }
        let retry = {
            let Some(exchange) = self.macs[node].exchange.as_mut() else {
                return;
            };
            if exchange.token != token
                || !matches!(exchange.phase, Phase::AwaitingCts | Phase::AwaitingAck)
            {
                return;
            }
            exchange.timeout = None;
            exchange.retries += 1;
            exchange.retries <= self.config.channel.retry_limit
        };
        if retry {
            self.schedule_attempt(node);
        } else {
            self.fail_exchange(node);
        }
    }

    /// Retry limit exceeded: report the broken link to routing and move on.
    fn fail_exchange(&mut self, node: NodeId) {
        let exchange = self.macs[node].exchange.take().expect("failing exchange");
        let next_hop = exchange
            .job
            .next_hop
            .expect("only unicast exchanges time out");
        self.counters.link_failures += 1;
        if self.engine.log_enabled() {
            self.engine.record(
                "link-failure",
                Some(node),
                format!("next_hop={next_hop} kind={}", exchange.job.packet.kind()),
            );
        }
        let packet = exchange.job.packet;
        let actions = self.call_routing(node, |p, ctx| p.unicast_failed(next_hop, packet, ctx));
        self.apply_actions(node, actions);
        self.kick_mac(node);
    }

    // --- report ------------------------------------------------------------

    fn report(&self) -> MetricsReport {
        let totals = MetricsReport::from_ledgers(&self.ledgers);
        let c = &self.counters;
        MetricsReport {
            routing_tx_j: totals.routing_tx_j,
            routing_rx_j: totals.routing_rx_j,
            mac_tx_j: totals.mac_tx_j,
            mac_rx_j: totals.mac_rx_j,
            data_tx_j: totals.data_tx_j,
            data_rx_j: totals.data_rx_j,
            idle_j: totals.idle_j,
            sleep_j: totals.sleep_j,
            transition_j: totals.transition_j,
            per_node_residual_j: self.ledgers.iter().map(|l| l.residual_j()).collect(),
            data_sent: c.data_sent,
            data_delivered: c.data_delivered,
            pdf: (c.data_sent > 0).then(|| c.data_delivered as f64 / c.data_sent as f64),
            avg_delay_s: (c.data_delivered > 0).then(|| c.delay_sum_s / c.data_delivered as f64),
            throughput_bps: c.delivered_payload_bits as f64 / self.config.duration_s,
            collisions: c.collisions,
            drops: c
                .drops
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            control_tx: c
                .control_tx
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            dead_nodes: self.ledgers.iter().filter(|l| !l.alive()).count(),
            rejected_energy_ops: self.ledgers.iter().map(|l| l.rejected_ops()).sum(),
            metadata: self.config.metadata(),
        }
    }
}

struct KernelErrorWrapper(KernelError);

impl std::fmt::Display for KernelErrorWrapper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "simulation aborted: {}", self.0)
    }
}

/// Build and run one scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsReport, ScenarioError> {
    let mut sim = Simulation::new(config.clone())?;
    Ok(sim.run())
}
