//! Ad hoc On-Demand Distance Vector routing.
//!
//! On-demand discovery: a source with no valid route buffers the packet and
//! floods a route request; the destination (or an intermediate node with a
//! route at least as fresh as the request asks for) unicasts a route reply
//! back along the reverse path formed while the request spread. Sequence
//! numbers order route freshness; broken links invalidate routes and notify
//! precursors with route errors. Expired routes are invalidated silently.

use std::collections::{BTreeMap, BTreeSet};

use super::{
    Action, AodvRerr, AodvRreq, AodvRrep, DropReason, Packet, PacketBody, PendingBuffer,
    RoutingCtx, RoutingProtocol, TimerKind,
};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub next_hop: NodeId,
    pub dest_seq: u32,
    pub seq_known: bool,
    pub hop_count: u32,
    pub expires_at_s: f64,
    pub valid: bool,
    /// Neighbors that were sent an RREP via this entry; they hear about
    /// breaks through RERRs.
    pub precursors: BTreeSet<NodeId>,
}

impl RouteEntry {
    fn usable(&self, now_s: f64) -> bool {
        self.valid && self.expires_at_s > now_s
    }
}


pub struct Aodv {
    me: NodeId,
    own_seq: u32,
    next_broadcast_id: u32,
    table: BTreeMap<NodeId, RouteEntry>,
    seen_rreq: BTreeSet<(NodeId, u32)>,
    pending: BTreeSet<NodeId>,
    buffer: PendingBuffer,
}

impl Aodv {
    pub fn new(me: NodeId) -> Self {
        Aodv {
            me,
            own_seq: 0,
            next_broadcast_id: 0,
            table: BTreeMap::new(),
            seen_rreq: BTreeSet::new(),
            pending: BTreeSet::new(),
            buffer: PendingBuffer::default(),
        }
    }

    /// Routing-table snapshot for invariant checks.
    pub fn routes(&self) -> impl Iterator<Item = (NodeId, &RouteEntry)> {
        self.table.iter().map(|(d, e)| (*d, e))
    }

    pub fn route_to(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.table.get(&dest)
    }

    /// Adopt `(next_hop, hop_count, seq)` for `dest` under the AODV
    /// freshness rules: newer sequence number wins; an equal one only
    /// improves an invalid or longer route. Returns true when adopted.
    fn update_route(
        &mut self,
        dest: NodeId,
        next_hop: NodeId,
        hop_count: u32,
        seq: Option<u32>,
        now_s: f64,
        lifetime_s: f64,
    ) -> bool {
        let expires = now_s + lifetime_s;
        match self.table.get_mut(&dest) {
            None => {
                self.table.insert(
                    dest,
                    RouteEntry {
                        next_hop,
                        dest_seq: seq.unwrap_or(0),
                        seq_known: seq.is_some(),
                        hop_count,
                        expires_at_s: expires,
                        valid: true,
                        precursors: BTreeSet::new(),
                    },
                );
                true
            }
            Some(entry) => {
                let adopt = match seq {
                    Some(s) => {
                        !entry.seq_known
                            || s > entry.dest_seq
                            || (s == entry.dest_seq
                                && (!entry.usable(now_s) || hop_count < entry.hop_count))
                    }
                    None => !entry.usable(now_s),
                };
                if adopt {
                    entry.next_hop = next_hop;
                    if let Some(s) = seq {
                        entry.dest_seq = s;
                        entry.seq_known = true;
                    }
                    entry.hop_count = hop_count;
                    entry.expires_at_s = expires;
                    entry.valid = true;
                }
                adopt
            }
        }
    }

    fn refresh(&mut self, dest: NodeId, now_s: f64, lifetime_s: f64) {
        if let Some(entry) = self.table.get_mut(&dest) {
            entry.expires_at_s = entry.expires_at_s.max(now_s + lifetime_s);
        }
    }

    /// Send every buffered packet for `dest` along the (now valid) route.
    fn flush_buffer(&mut self, dest: NodeId, ctx: &RoutingCtx) -> Vec<Action> {
        let mut actions = Vec::new();
        if let Some(entry) = self.table.get(&dest) {
            if entry.usable(ctx.now_s) {
                let next_hop = entry.next_hop;
                for packet in self.buffer.take_for(dest) {
                    actions.push(Action::Unicast { next_hop, packet });
                }
                if !actions.is_empty() {
                    self.refresh(dest, ctx.now_s, ctx.config.aodv_route_lifetime_s);
                }
                self.pending.remove(&dest);
            }
        }
        actions
    }

    fn start_discovery(&mut self, dest: NodeId, attempt: u32, ctx: &RoutingCtx) -> Vec<Action> {
        self.own_seq += 1;
        let broadcast_id = self.next_broadcast_id;
        self.next_broadcast_id += 1;
        self.seen_rreq.insert((self.me, broadcast_id));
        self.pending.insert(dest);
        let rreq = AodvRreq {
            source: self.me,
            source_seq: self.own_seq,
            broadcast_id,
            dest,
            dest_seq: self.table.get(&dest).filter(|e| e.seq_known).map(|e| e.dest_seq),
            hop_count: 0,
        };
        vec![
            Action::Broadcast {
                packet: Packet {
                    origin: self.me,
                    dest,
                    body: PacketBody::AodvRreq(rreq),
                },
            },
            Action::SetTimer {
                at_s: ctx.now_s + ctx.config.rreq_retry_interval_s,
                kind: TimerKind::DiscoveryRetry {
                    dest,
                    attempt: attempt + 1,
                },
            },
        ]
    }

    /// Invalidate all valid routes through `broken_next_hop` and build the
    /// route-error notification for their precursors.
    fn invalidate_via(&mut self, broken_next_hop: NodeId, now_s: f64) -> Vec<Action> {
        let mut unreachable = Vec::new();
        let mut precursors: BTreeSet<NodeId> = BTreeSet::new();
        for (dest, entry) in self.table.iter_mut() {
            if entry.valid && entry.next_hop == broken_next_hop {
                entry.valid = false;
                entry.dest_seq = entry.dest_seq.wrapping_add(1);
                entry.seq_known = true;
                unreachable.push((*dest, entry.dest_seq));
                precursors.extend(entry.precursors.iter().copied());
                entry.precursors.clear();
            }
        }
        let _ = now_s;
        if unreachable.is_empty() {
            return Vec::new();
        }
        let packet = Packet {
            origin: self.me,
            dest: self.me,
            body: PacketBody::AodvRerr(AodvRerr { unreachable }),
        };
        match precursors.len() {
            0 => Vec::new(),
            1 => vec![Action::Unicast {
                next_hop: *precursors.iter().next().expect("one precursor"),
                packet,
            }],
            _ => vec![Action::Broadcast { packet }],
        }
    }

    fn handle_rreq(&mut self, rreq: AodvRreq, from: NodeId, ctx: &mut RoutingCtx) -> Vec<Action> {
        if rreq.source == self.me || !self.seen_rreq.insert((rreq.source, rreq.broadcast_id)) {
            return Vec::new(); // duplicate suppression
        }
        let lifetime = ctx.config.aodv_route_lifetime_s;
        // Reverse path toward the originator.
        self.update_route(
            rreq.source,
            from,
            rreq.hop_count + 1,
            Some(rreq.source_seq),
            ctx.now_s,
            lifetime,
        );
        let mut actions = self.flush_buffer(rreq.source, ctx);

        if rreq.dest == self.me {
            // Destination replies; never answer with a stale own sequence
            // number.
            if let Some(wanted) = rreq.dest_seq {
                self.own_seq = self.own_seq.max(wanted);
            }
            actions.push(Action::Unicast {
                next_hop: from,
                packet: Packet {
                    origin: self.me,
                    dest: rreq.source,
                    body: PacketBody::AodvRrep(AodvRrep {
                        dest: self.me,
                        dest_seq: self.own_seq,
                        hop_count: 0,
                        requester: rreq.source,
                    }),
                },
            });
            return actions;
        }

        // Intermediate reply only with a route at least as fresh as requested.
        let can_reply = self.table.get(&rreq.dest).is_some_and(|entry| {
            entry.usable(ctx.now_s)
                && entry.seq_known
                && rreq.dest_seq.is_none_or(|wanted| entry.dest_seq >= wanted)
        });
        if can_reply {
            let entry = self.table.get_mut(&rreq.dest).expect("checked above");
            entry.precursors.insert(from);
            let (dest_seq, hop_count) = (entry.dest_seq, entry.hop_count);
            actions.push(Action::Unicast {
                next_hop: from,
                packet: Packet {
                    origin: self.me,
                    dest: rreq.source,
                    body: PacketBody::AodvRrep(AodvRrep {
                        dest: rreq.dest,
                        dest_seq,
                        hop_count,
                        requester: rreq.source,
                    }),
                },
            });
            return actions;
        }

        actions.push(Action::Broadcast {
            packet: Packet {
                origin: rreq.source,
                dest: rreq.dest,
                body: PacketBody::AodvRreq(AodvRreq {
                    hop_count: rreq.hop_count + 1,
                    ..rreq
                }),
            },
        });
        actions
    }

    fn handle_rrep(&mut self, rrep: AodvRrep, from: NodeId, ctx: &mut RoutingCtx) -> Vec<Action> {
        let lifetime = ctx.config.aodv_route_lifetime_s;
        self.update_route(
            rrep.dest,
            from,
            rrep.hop_count + 1,
            Some(rrep.dest_seq),
            ctx.now_s,
            lifetime,
        );
        if rrep.requester == self.me {
            return self.flush_buffer(rrep.dest, ctx);
        }
        // Forward along the reverse route; record the reverse next hop as a
        // precursor of the forward route.
        let Some(reverse) = self.table.get(&rrep.requester).filter(|e| e.usable(ctx.now_s))
        else {
            return vec![Action::Drop {
                packet: Packet {
                    origin: self.me,
                    dest: rrep.requester,
                    body: PacketBody::AodvRrep(rrep),
                },
                reason: DropReason::StaleControl,
            }];
        };
        let reverse_hop = reverse.next_hop;
        if let Some(forward) = self.table.get_mut(&rrep.dest) {
            forward.precursors.insert(reverse_hop);
        }
        vec![Action::Unicast {
            next_hop: reverse_hop,
            packet: Packet {
                origin: self.me,
                dest: rrep.requester,
                body: PacketBody::AodvRrep(AodvRrep {
                    hop_count: rrep.hop_count + 1,
                    ..rrep
                }),
            },
        }]
    }

    fn handle_rerr(&mut self, rerr: AodvRerr, from: NodeId, _ctx: &mut RoutingCtx) -> Vec<Action> {
        let mut invalidated = Vec::new();
        let mut precursors: BTreeSet<NodeId> = BTreeSet::new();
        for (dest, seq) in &rerr.unreachable {
            if let Some(entry) = self.table.get_mut(dest) {
                if entry.valid && entry.next_hop == from {
                    entry.valid = false;
                    entry.dest_seq = entry.dest_seq.max(*seq);
                    entry.seq_known = true;
                    invalidated.push((*dest, entry.dest_seq));
                    precursors.extend(entry.precursors.iter().copied());
                    entry.precursors.clear();
                }
            }
        }
        if invalidated.is_empty() {
            return Vec::new();
        }
        let packet = Packet {
            origin: self.me,
            dest: self.me,
            body: PacketBody::AodvRerr(AodvRerr {
                unreachable: invalidated,
            }),
        };
        match precursors.len() {
            0 => Vec::new(),
            1 => vec![Action::Unicast {
                next_hop: *precursors.iter().next().expect("one precursor"),
                packet,
            }],
            _ => vec![Action::Broadcast { packet }],
        }
    }
}

impl RoutingProtocol for Aodv {
    fn start(&mut self, _ctx: &mut RoutingCtx) -> Vec<Action> {
        Vec::new()
    }

    fn originate(&mut self, packet: Packet, ctx: &mut RoutingCtx) -> Vec<Action> {
        let dest = packet.dest;
        if dest == self.me {
            return vec![Action::DeliverLocal { packet }];
        }
        if let Some(entry) = self.table.get(&dest) {
            if entry.usable(ctx.now_s) {
                let next_hop = entry.next_hop;
                self.refresh(dest, ctx.now_s, ctx.config.aodv_route_lifetime_s);
                return vec![Action::Unicast { next_hop, packet }];
            }
        }
        let mut actions = Vec::new();
        if let Some(dropped) = self.buffer.push(packet, ctx.config.buffer_capacity) {
            actions.push(Action::Drop {
                packet: dropped,
                reason: DropReason::BufferOverflow,
            });
        }
        if !self.pending.contains(&dest) {
            actions.extend(self.start_discovery(dest, 0, ctx));
        }
        actions
    }

    fn receive(&mut self, packet: Packet, from: NodeId, ctx: &mut RoutingCtx) -> Vec<Action> {
        match packet.body {
            PacketBody::AodvRreq(rreq) => self.handle_rreq(rreq, from, ctx),
            PacketBody::AodvRrep(rrep) => self.handle_rrep(rrep, from, ctx),
            PacketBody::AodvRerr(rerr) => self.handle_rerr(rerr, from, ctx),
            PacketBody::Data(_) => {
                if packet.dest == self.me {
                    return vec![Action::DeliverLocal { packet }];
                }
                // Forward along the table route.
                if let Some(entry) = self.table.get(&packet.dest) {
                    if entry.usable(ctx.now_s) {
                        let next_hop = entry.next_hop;
                        self.refresh(packet.dest, ctx.now_s, ctx.config.aodv_route_lifetime_s);
                        return vec![Action::Unicast { next_hop, packet }];
                    }
                }
                // No usable route: drop and tell the upstream hop.
                let seq = self
                    .table
                    .get_mut(&packet.dest)
                    .map(|e| {
                        e.dest_seq = e.dest_seq.wrapping_add(1);
                        e.seq_known = true;
                        e.dest_seq
                    })
                    .unwrap_or(0);
                let dest = packet.dest;
                vec![
                    Action::Drop {
                        packet,
                        reason: DropReason::NoRoute,
                    },
                    Action::Unicast {
                        next_hop: from,
                        packet: Packet {
                            origin: self.me,
                            dest: self.me,
                            body: PacketBody::AodvRerr(AodvRerr {
                                unreachable: vec![(dest, seq)],
                            }),
                        },
                    },
                ]
            }
            _ => Vec::new(), // other protocols' packets are not ours
        }
    }

    fn unicast_failed(
        &mut self,
        next_hop: NodeId,
        packet: Packet,
        ctx: &mut RoutingCtx,
    ) -> Vec<Action> {
        let mut actions = self.invalidate_via(next_hop, ctx.now_s);
        if matches!(packet.body, PacketBody::Data(_)) {
            actions.push(Action::Drop {
                packet,
                reason: DropReason::LinkBreak,
            });
        }
        actions
    }

    fn timer(&mut self, kind: TimerKind, ctx: &mut RoutingCtx) -> Vec<Action> {
        let TimerKind::DiscoveryRetry { dest, attempt } = kind else {
            return Vec::new();
        };
        if !self.pending.contains(&dest) {
            return Vec::new(); // discovery already satisfied
        }
        if self
            .table
            .get(&dest)
            .is_some_and(|e| e.usable(ctx.now_s))
        {
            self.pending.remove(&dest);
            return Vec::new();
        }
        if attempt <= ctx.config.rreq_retry_limit {
            return self.start_discovery(dest, attempt, ctx);
        }
        // Give up: drop everything buffered for this destination.
        self.pending.remove(&dest);
        self.buffer
            .take_for(dest)
            .into_iter()
            .map(|packet| Action::Drop {
                packet,
                reason: DropReason::DiscoveryFailed,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{count_kind, data_packet, Bench};
    use super::*;
    use crate::routing::Protocol;

    fn rreq_of(actions: &[Action]) -> AodvRreq {
        actions
            .iter()
            .find_map(|a| match a {
                Action::Broadcast { packet } => match &packet.body {
                    PacketBody::AodvRreq(r) => Some(r.clone()),
                    _ => None,
                },
                _ => None,
            })
            .expect("an RREQ broadcast")
    }

    fn rrep_of(actions: &[Action]) -> (NodeId, AodvRrep) {
        actions
            .iter()
            .find_map(|a| match a {
                Action::Unicast { next_hop, packet } => match &packet.body {
                    PacketBody::AodvRrep(r) => Some((*next_hop, r.clone())),
                    _ => None,
                },
                _ => None,
            })
            .expect("an RREP unicast")
    }

    #[test]
    fn local_destination_is_delivered_without_control_traffic() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut a = Aodv::new(0);
        let actions = a.originate(data_packet(0, 0), &mut bench.ctx(0));
        assert!(matches!(actions.as_slice(), [Action::DeliverLocal { .. }]));
    }

    #[test]
    fn cache_hit_emits_no_rreq() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut a = Aodv::new(0);
        a.update_route(2, 1, 2, Some(4), 0.0, 10.0);
        let actions = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        assert_eq!(count_kind(&actions, "rreq"), 0);
        assert!(matches!(
            actions.as_slice(),
            [Action::Unicast { next_hop: 1, .. }]
        ));
    }

    #[test]
    fn empty_table_floods_exactly_one_rreq() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut a = Aodv::new(0);
        let actions = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        assert_eq!(count_kind(&actions, "rreq"), 1);
        let rreq = rreq_of(&actions);
        assert_eq!(rreq.hop_count, 0);
        assert_eq!(rreq.source_seq, 1, "own seq incremented before flooding");
        assert_eq!(rreq.dest_seq, None);
        // Second packet while discovery pending: buffered, no second flood.
        let actions = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        assert_eq!(count_kind(&actions, "rreq"), 0);
    }

    #[test]
    fn duplicate_rreq_is_dropped_silently() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut b = Aodv::new(1);
        let rreq = AodvRreq {
            source: 0,
            source_seq: 1,
            broadcast_id: 0,
            dest: 2,
            dest_seq: None,
            hop_count: 0,
        };
        let first = b.handle_rreq(rreq.clone(), 0, &mut bench.ctx(1));
        assert_eq!(count_kind(&first, "rreq"), 1);
        let second = b.handle_rreq(rreq, 0, &mut bench.ctx(1));
        assert!(second.is_empty());
    }

    #[test]
    fn intermediate_rebroadcasts_and_installs_reverse_route() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut b = Aodv::new(1);
        let rreq = AodvRreq {
            source: 0,
            source_seq: 1,
            broadcast_id: 0,
            dest: 2,
            dest_seq: None,
            hop_count: 0,
        };
        let actions = b.handle_rreq(rreq, 0, &mut bench.ctx(1));
        let forwarded = rreq_of(&actions);
        assert_eq!(forwarded.hop_count, 1);
        let reverse = b.route_to(0).expect("reverse route installed");
        assert_eq!(reverse.next_hop, 0);
        assert_eq!(reverse.hop_count, 1);
    }

    #[test]
    fn destination_unicasts_exactly_one_rrep() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut c = Aodv::new(2);
        let rreq = AodvRreq {
            source: 0,
            source_seq: 1,
            broadcast_id: 0,
            dest: 2,
            dest_seq: None,
            hop_count: 1,
        };
        let actions = c.handle_rreq(rreq, 1, &mut bench.ctx(2));
        assert_eq!(count_kind(&actions, "rrep"), 1);
        assert_eq!(count_kind(&actions, "rreq"), 0);
        let (next_hop, rrep) = rrep_of(&actions);
        assert_eq!(next_hop, 1);
        assert_eq!(rrep.hop_count, 0);
        assert_eq!(rrep.dest, 2);
    }

    /// Full discovery on the static line A(0) - B(1) - C(2): 2 RREQ
    /// broadcasts, 2 RREP unicasts, and A ends with a 2-hop route via B.
    #[test]
    fn line_discovery_matches_the_hand_trace() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut a = Aodv::new(0);
        let mut b = Aodv::new(1);
        let mut c = Aodv::new(2);

        let mut rreq_tx = 0;
        let mut rrep_tx = 0;

        let a_out = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        rreq_tx += count_kind(&a_out, "rreq");
        let rreq = rreq_of(&a_out);

        // B hears A's broadcast and rebroadcasts.
        let b_out = b.handle_rreq(rreq.clone(), 0, &mut bench.ctx(1));
        rreq_tx += count_kind(&b_out, "rreq");
        let rreq_b = rreq_of(&b_out);

        // Both A and C hear B's rebroadcast; A drops it as a duplicate of
        // its own discovery.
        let a_echo = a.handle_rreq(rreq_b.clone(), 1, &mut bench.ctx(0));
        assert!(a_echo.is_empty());
        let c_out = c.handle_rreq(rreq_b, 1, &mut bench.ctx(2));
        rrep_tx += count_kind(&c_out, "rrep");
        let (_, rrep) = rrep_of(&c_out);

        // RREP travels C -> B -> A.
        let b_fwd = b.handle_rrep(rrep, 2, &mut bench.ctx(1));
        rrep_tx += count_kind(&b_fwd, "rrep");
        let (to, rrep_b) = rrep_of(&b_fwd);
        assert_eq!(to, 0);
        let a_final = a.handle_rrep(rrep_b, 1, &mut bench.ctx(0));

        assert_eq!(rreq_tx, 2, "2 RREQ broadcasts");
        assert_eq!(rrep_tx, 2, "2 RREP unicasts");

        let route = a.route_to(2).expect("route installed at A");
        assert_eq!(route.next_hop, 1);
        assert_eq!(route.hop_count, 2);
        // Buffered data flushed along the fresh route.
        assert!(matches!(
            a_final.as_slice(),
            [Action::Unicast { next_hop: 1, .. }]
        ));
        // B's forward route to C carries A as precursor.
        let b_route = b.route_to(2).expect("forward route at B");
        assert!(b_route.precursors.contains(&0));
    }

    #[test]
    fn buffered_packets_flush_in_arrival_order() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut a = Aodv::new(0);
        for seq in 0..3u64 {
            let mut p = data_packet(0, 2);
            if let PacketBody::Data(d) = &mut p.body {
                d.seq = seq;
            }
            a.originate(p, &mut bench.ctx(0));
        }
        let rrep = AodvRrep {
            dest: 2,
            dest_seq: 1,
            hop_count: 1,
            requester: 0,
        };
        let actions = a.handle_rrep(rrep, 1, &mut bench.ctx(0));
        let seqs: Vec<u64> = actions
            .iter()
            .filter_map(|a| match a {
                Action::Unicast { packet, .. } => match &packet.body {
                    PacketBody::Data(d) => Some(d.seq),
                    _ => None,
                },
                _ => None,
            })
            .collect();
        assert_eq!(seqs, vec![0, 1, 2]);
    }

    #[test]
    fn rrep_without_reverse_route_is_dropped_and_counted() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut b = Aodv::new(1);
        let rrep = AodvRrep {
            dest: 2,
            dest_seq: 1,
            hop_count: 0,
            requester: 0,
        };
        let actions = b.handle_rrep(rrep, 2, &mut bench.ctx(1));
        assert!(matches!(
            actions.as_slice(),
            [Action::Drop {
                reason: DropReason::StaleControl,
                ..
            }]
        ));
    }

    #[test]
    fn link_break_notifies_the_precursor_and_invalidates_downstream() {
        let mut bench = Bench::new(Protocol::Aodv);
        // Established line A(0)-B(1)-C(2); B's route to C has precursor A.
        let mut a = Aodv::new(0);
        let mut b = Aodv::new(1);
        a.update_route(2, 1, 2, Some(1), 0.0, 10.0);
        b.update_route(2, 2, 1, Some(1), 0.0, 10.0);
        b.table.get_mut(&2).unwrap().precursors.insert(0);

        // B -> C fails.
        let actions = b.unicast_failed(2, data_packet(0, 2), &mut bench.ctx(1));
        let rerr = actions
            .iter()
            .find_map(|act| match act {
                Action::Unicast { next_hop, packet } => match &packet.body {
                    PacketBody::AodvRerr(e) => Some((*next_hop, e.clone())),
                    _ => None,
                },
                _ => None,
            })
            .expect("RERR to the single precursor");
        assert_eq!(rerr.0, 0);
        assert_eq!(rerr.1.unreachable, vec![(2, 2)]);
        assert!(!b.route_to(2).unwrap().valid);

        // A processes the RERR and invalidates its own C route.
        let fwd = a.handle_rerr(rerr.1, 1, &mut bench.ctx(0));
        assert!(!a.route_to(2).unwrap().valid);
        // A has no precursors for that route: the error stops here.
        assert!(fwd.is_empty());
    }

    #[test]
    fn break_with_no_routes_through_the_hop_sends_nothing() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut b = Aodv::new(1);
        b.update_route(2, 2, 1, Some(1), 0.0, 10.0);
        let actions = b.unicast_failed(9, data_packet(1, 2), &mut bench.ctx(1));
        assert_eq!(count_kind(&actions, "rerr"), 0);
    }

    #[test]
    fn expired_routes_are_invalid_without_any_rerr() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut a = Aodv::new(0);
        a.update_route(2, 1, 1, Some(1), 0.0, 10.0);
        bench.now_s = 11.0; // past the 10 s lifetime
        let actions = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        // New discovery starts; no RERR was ever sent.
        assert_eq!(count_kind(&actions, "rerr"), 0);
        assert_eq!(count_kind(&actions, "rreq"), 1);
    }

    #[test]
    fn retry_limit_exhausts_and_drops_buffered_packets() {
        let mut bench = Bench::new(Protocol::Aodv);
        let mut a = Aodv::new(0);
        a.originate(data_packet(0, 2), &mut bench.ctx(0));
        let mut floods = 1;
        for attempt in 1..=4 {
            bench.now_s += 1.0;
            let actions = a.timer(
                TimerKind::DiscoveryRetry { dest: 2, attempt },
                &mut bench.ctx(0),
            );
            floods += count_kind(&actions, "rreq");
            if attempt == 4 {
                assert!(
                    matches!(
                        actions.as_slice(),
                        [Action::Drop {
                            reason: DropReason::DiscoveryFailed,
                            ..
                        }]
                    ),
                    "after the final retry the buffer drains: {actions:?}"
                );
            }
        }
        assert_eq!(floods, 4, "initial flood plus 3 retries");
    }

    /// Walking next hops for a fixed destination with the (seq, -hops)
    /// ordering strictly increasing never revisits a node.
    #[test]
    fn discovery_preserves_loop_freedom_on_a_grid() {
        let mut bench = Bench::new(Protocol::Aodv);
        // 3x3 grid, node i talks to neighbors by index arithmetic.
        let n = 9usize;
        let neighbors = |i: usize| -> Vec<usize> {
            let (r, c) = (i / 3, i % 3);
            let mut out = Vec::new();
            if r > 0 {
                out.push(i - 3);
            }
            if r < 2 {
                out.push(i + 3);
            }
            if c > 0 {
                out.push(i - 1);
            }
            if c < 2 {
                out.push(i + 1);
            }
            out
        };
        // Deterministic lossless flood as (sender, receiver, packet) pairs.
        let mut nodes: Vec<Aodv> = (0..n).map(Aodv::new).collect();
        let start = nodes[0].originate(data_packet(0, 8), &mut bench.ctx(0));
        let mut wire: Vec<(usize, usize, Packet)> = Vec::new();
        let enqueue = |sender: usize, actions: &[Action], wire: &mut Vec<(usize, usize, Packet)>| {
            for act in actions {
                match act {
                    Action::Broadcast { packet } => {
                        for nb in neighbors(sender) {
                            wire.push((sender, nb, packet.clone()));
                        }
                    }
                    Action::Unicast { next_hop, packet } => {
                        wire.push((sender, *next_hop, packet.clone()));
                    }
                    _ => {}
                }
            }
        };
        enqueue(0, &start, &mut wire);
        let mut i = 0;
        while i < wire.len() {
            let (sender, receiver, packet) = wire[i].clone();
            i += 1;
            let actions = nodes[receiver].receive(packet, sender, &mut bench.ctx(receiver));
            enqueue(receiver, &actions, &mut wire);
        }
        // Loop-freedom check on the converged tables.
        for start_node in 0..n {
            let mut seen = vec![false; n];
            let mut cur = start_node;
            let mut last_key: Option<(u32, i64)> = None;
            while let Some(entry) = nodes[cur].route_to(8).filter(|e| e.valid) {
                assert!(!seen[cur], "loop detected through node {cur}");
                seen[cur] = true;
                let key = (entry.dest_seq, -(entry.hop_count as i64));
                if let Some(prev) = last_key {
                    assert!(key > prev, "(seq, -hops) must strictly increase along the path");
                }
                last_key = Some(key);
                cur = entry.next_hop;
                if cur == 8 {
                    break;
                }
            }
        }
    }
}
