//! Destination-Sequenced Distance Vector routing.
//!
//! Proactive Bellman-Ford with per-destination sequence numbers: every node
//! periodically broadcasts its full table; receivers adopt a route when the
//! advertised sequence number is newer, or equal with a shorter metric. A
//! node owns its sequence number (always even, +2 per periodic dump); broken
//! routes are advertised at infinite metric with the sequence number bumped
//! to odd, propagated by triggered incremental updates.

use std::collections::BTreeMap;

use super::{
    Action, DropReason, DsdvUpdate, Packet, PacketBody, PendingBuffer, RoutingCtx,
    RoutingProtocol, TimerKind,
};
use crate::NodeId;
use rand::Rng;

/// Infinite metric marker for broken routes.
pub const DSDV_INFINITY: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct DsdvEntry {
    pub next_hop: NodeId,
    pub metric: u32,
    pub seq: u32,
}

impl DsdvEntry {
    fn reachable(&self) -> bool {
        self.metric != DSDV_INFINITY
    }
}

pub struct Dsdv {
    me: NodeId,
    own_seq: u32,
    table: BTreeMap<NodeId, DsdvEntry>,
    buffer: PendingBuffer,
    started: bool,
}

impl Dsdv {
    pub fn new(me: NodeId) -> Self {
        let mut table = BTreeMap::new();
        table.insert(
            me,
            DsdvEntry {
                next_hop: me,
                metric: 0,
                seq: 0,
            },
        );
        Dsdv {
            me,
            own_seq: 0,
            table,
            buffer: PendingBuffer::default(),
            started: false,
        }
    }

    pub fn own_seq(&self) -> u32 {
        self.own_seq
    }

    pub fn entries(&self) -> impl Iterator<Item = (NodeId, &DsdvEntry)> {
        self.table.iter().map(|(d, e)| (*d, e))
    }

    pub fn entry(&self, dest: NodeId) -> Option<&DsdvEntry> {
        self.table.get(&dest)
    }

    fn full_dump(&self) -> Packet {
        let entries: Vec<(NodeId, u32, u32)> = self
            .table
            .iter()
            .map(|(dest, e)| (*dest, e.metric, e.seq))
            .collect();
        Packet {
            origin: self.me,
            dest: self.me,
            body: PacketBody::DsdvUpdate(DsdvUpdate { entries }),
        }
    }

    fn incremental(&self, dests: &[NodeId]) -> Packet {
        let entries: Vec<(NodeId, u32, u32)> = dests
            .iter()
            .filter_map(|d| self.table.get(d).map(|e| (*d, e.metric, e.seq)))
            .collect();
        Packet {
            origin: self.me,
            dest: self.me,
            body: PacketBody::DsdvUpdate(DsdvUpdate { entries }),
        }
    }

    /// Apply one advertised triple; returns whether a previously reachable
    /// local route was invalidated (which triggers propagation) and whether a
    /// new reachable route appeared.
    fn apply(&mut self, from: NodeId, dest: NodeId, metric: u32, seq: u32) -> (bool, bool) {
        if dest == self.me {
            return (false, false); // we own our entry
        }
        let new_metric = if metric == DSDV_INFINITY {
            DSDV_INFINITY
        } else {
            metric.saturating_add(1)
        };
        match self.table.get_mut(&dest) {
            None => {
                self.table.insert(
                    dest,
                    DsdvEntry {
                        next_hop: from,
                        metric: new_metric,
                        seq,
                    },
                );
                (false, new_metric != DSDV_INFINITY)
            }
            Some(entry) => {
                let fresher = seq > entry.seq;
                let better = seq == entry.seq && new_metric < entry.metric;
                if !(fresher || better) {
                    return (false, false);
                }
                let was_reachable = entry.reachable();
                entry.next_hop = from;
                entry.metric = new_metric;
                entry.seq = seq;
                let is_reachable = entry.reachable();
                (was_reachable && !is_reachable, !was_reachable && is_reachable)
            }
        }
    }

    fn flush_buffer(&mut self, dest: NodeId) -> Vec<Action> {
        let Some(entry) = self.table.get(&dest).filter(|e| e.reachable()) else {
            return Vec::new();
        };
        let next_hop = entry.next_hop;
        self.buffer
            .take_for(dest)
            .into_iter()
            .map(|packet| Action::Unicast { next_hop, packet })
            .collect()
    }
}

impl RoutingProtocol for Dsdv {
    fn start(&mut self, ctx: &mut RoutingCtx) -> Vec<Action> {
        self.started = true;
        // Stagger the first dump uniformly over one period so the periodic
        // broadcasts of different nodes do not all collide forever.
        let offset = ctx.rng.random_range(0.0..ctx.config.dsdv_period_s);
        vec![Action::SetTimer {
            at_s: ctx.now_s + offset,
            kind: TimerKind::DsdvPeriodic,
        }]
    }

    fn originate(&mut self, packet: Packet, ctx: &mut RoutingCtx) -> Vec<Action> {
        let dest = packet.dest;
        if dest == self.me {
            return vec![Action::DeliverLocal { packet }];
        }
        if let Some(entry) = self.table.get(&dest).filter(|e| e.reachable()) {
            return vec![Action::Unicast {
                next_hop: entry.next_hop,
                packet,
            }];
        }
        // Park the packet until an update advertises the destination.
        match self.buffer.push(packet, ctx.config.buffer_capacity) {
            Some(dropped) => vec![Action::Drop {
                packet: dropped,
                reason: DropReason::BufferOverflow,
            }],
            None => Vec::new(),
        }
    }

    fn receive(&mut self, packet: Packet, from: NodeId, _ctx: &mut RoutingCtx) -> Vec<Action> {
        match packet.body {
            PacketBody::DsdvUpdate(update) => {
                let mut invalidated = Vec::new();
                let mut appeared = Vec::new();
                for (dest, metric, seq) in update.entries {
                    let (lost, gained) = self.apply(from, dest, metric, seq);
                    if lost {
                        invalidated.push(dest);
                    }
                    if gained {
                        appeared.push(dest);
                    }
                }
                let mut actions = Vec::new();
                for dest in appeared {
                    actions.extend(self.flush_buffer(dest));
                }
                if !invalidated.is_empty() {
                    // Propagate bad news immediately.
                    actions.push(Action::Broadcast {
                        packet: self.incremental(&invalidated),
                    });
                }
                actions
            }
            PacketBody::Data(_) => {
                if packet.dest == self.me {
                    return vec![Action::DeliverLocal { packet }];
                }
                match self.table.get(&packet.dest).filter(|e| e.reachable()) {
                    Some(entry) => vec![Action::Unicast {
                        next_hop: entry.next_hop,
                        packet,
                    }],
                    None => vec![Action::Drop {
                        packet,
                        reason: DropReason::NoRoute,
                    }],
                }
            }
            _ => Vec::new(),
        }
    }

    fn unicast_failed(
        &mut self,
        next_hop: NodeId,
        packet: Packet,
        _ctx: &mut RoutingCtx,
    ) -> Vec<Action> {
        let mut invalidated = Vec::new();
        for (dest, entry) in self.table.iter_mut() {
            if entry.reachable() && entry.next_hop == next_hop {
                entry.metric = DSDV_INFINITY;
                entry.seq += 1; // odd: broken-route marker
                invalidated.push(*dest);
            }
        }
        let mut actions = Vec::new();
        if matches!(packet.body, PacketBody::Data(_)) {
            actions.push(Action::Drop {
                packet,
                reason: DropReason::LinkBreak,
            });
        }
        if !invalidated.is_empty() {
            actions.push(Action::Broadcast {
                packet: self.incremental(&invalidated),
            });
        }
        actions
    }

    fn timer(&mut self, kind: TimerKind, ctx: &mut RoutingCtx) -> Vec<Action> {
        if kind != TimerKind::DsdvPeriodic {
            return Vec::new();
        }
        self.own_seq += 2; // stays even
        self.table
            .get_mut(&self.me)
            .expect("own entry always present")
            .seq = self.own_seq;
        vec![
            Action::Broadcast {
                packet: self.full_dump(),
            },
            Action::SetTimer {
                at_s: ctx.now_s + ctx.config.dsdv_period_s,
                kind: TimerKind::DsdvPeriodic,
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{data_packet, Bench};
    use super::*;
    use crate::routing::Protocol;

    fn dump_of(actions: &[Action]) -> DsdvUpdate {
        actions
            .iter()
            .find_map(|a| match a {
                Action::Broadcast { packet } => match &packet.body {
                    PacketBody::DsdvUpdate(u) => Some(u.clone()),
                    _ => None,
                },
                _ => None,
            })
            .expect("an update broadcast")
    }

    fn fire_periodic(node: &mut Dsdv, bench: &mut Bench) -> DsdvUpdate {
        let actions = node.timer(TimerKind::DsdvPeriodic, &mut bench.ctx(node.me));
        dump_of(&actions)
    }

    #[test]
    fn isolated_node_advertises_only_itself() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        let dump = fire_periodic(&mut a, &mut bench);
        assert_eq!(dump.entries, vec![(0, 0, 2)]);
    }

    #[test]
    fn own_sequence_number_advances_by_two_per_period() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        for k in 1..=5u32 {
            fire_periodic(&mut a, &mut bench);
            assert_eq!(a.own_seq(), 2 * k);
        }
    }

    #[test]
    fn stale_sequence_numbers_never_replace_fresh_routes() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        let update = Packet {
            origin: 1,
            dest: 1,
            body: PacketBody::DsdvUpdate(DsdvUpdate {
                entries: vec![(2, 1, 4)],
            }),
        };
        a.receive(update, 1, &mut bench.ctx(0));
        assert_eq!(a.entry(2).unwrap().metric, 2);
        // Older seq: ignored.
        let stale = Packet {
            origin: 3,
            dest: 3,
            body: PacketBody::DsdvUpdate(DsdvUpdate {
                entries: vec![(2, 0, 2)],
            }),
        };
        a.receive(stale, 3, &mut bench.ctx(0));
        assert_eq!(a.entry(2).unwrap().next_hop, 1);
        assert_eq!(a.entry(2).unwrap().seq, 4);
    }

    #[test]
    fn equal_sequence_with_worse_metric_is_ignored() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        for (from, metric) in [(1usize, 1u32), (3, 3)] {
            let update = Packet {
                origin: from,
                dest: from,
                body: PacketBody::DsdvUpdate(DsdvUpdate {
                    entries: vec![(2, metric, 4)],
                }),
            };
            a.receive(update, from, &mut bench.ctx(0));
        }
        let e = a.entry(2).unwrap();
        assert_eq!(e.next_hop, 1, "worse metric at equal seq never adopted");
        assert_eq!(e.metric, 2);
    }

    #[test]
    fn equal_sequence_with_better_metric_is_adopted() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        for (from, metric) in [(1usize, 3u32), (3, 1)] {
            let update = Packet {
                origin: from,
                dest: from,
                body: PacketBody::DsdvUpdate(DsdvUpdate {
                    entries: vec![(2, metric, 4)],
                }),
            };
            a.receive(update, from, &mut bench.ctx(0));
        }
        assert_eq!(a.entry(2).unwrap().next_hop, 3);
        assert_eq!(a.entry(2).unwrap().metric, 2);
    }

    /// Static line A(0)-B(1)-C(2): two rounds of periodic dumps converge A's
    /// metric for C to 2 via B (Bellman-Ford fixed point).
    #[test]
    fn line_converges_within_two_update_rounds() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut nodes: Vec<Dsdv> = (0..3).map(Dsdv::new).collect();
        let adjacency = [vec![1], vec![0, 2], vec![1]];
        for _round in 0..2 {
            // Every node dumps; neighbors receive in node order.
            let dumps: Vec<DsdvUpdate> = (0..3)
                .map(|i| {
                    let actions =
                        nodes[i].timer(TimerKind::DsdvPeriodic, &mut bench.ctx(i));
                    dump_of(&actions)
                })
                .collect();
            for (sender, dump) in dumps.iter().enumerate() {
                for &receiver in &adjacency[sender] {
                    let packet = Packet {
                        origin: sender,
                        dest: sender,
                        body: PacketBody::DsdvUpdate(dump.clone()),
                    };
                    nodes[receiver].receive(packet, sender, &mut bench.ctx(receiver));
                }
            }
        }
        let a_to_c = nodes[0].entry(2).expect("A knows C");
        assert_eq!(a_to_c.metric, 2);
        assert_eq!(a_to_c.next_hop, 1);
    }

    #[test]
    fn link_break_marks_infinity_with_odd_seq_and_propagates() {
        let mut bench = Bench::new(Protocol::Dsdv);
        // Line A(0)-B(1)-C(2), converged.
        let mut a = Dsdv::new(0);
        let mut b = Dsdv::new(1);
        b.apply(2, 2, 0, 4); // B: C direct, seq 4
        a.apply(1, 2, 1, 4); // A: C via B, metric 2
        a.apply(1, 1, 0, 2);

        // B loses C.
        let actions = b.unicast_failed(2, data_packet(0, 2), &mut bench.ctx(1));
        let update = dump_of(&actions);
        assert_eq!(update.entries, vec![(2, DSDV_INFINITY, 5)]);
        assert_eq!(b.entry(2).unwrap().seq % 2, 1, "odd broken marker");

        // A adopts the invalidation and re-propagates.
        let packet = Packet {
            origin: 1,
            dest: 1,
            body: PacketBody::DsdvUpdate(update),
        };
        let fwd = a.receive(packet, 1, &mut bench.ctx(0));
        assert_eq!(a.entry(2).unwrap().metric, DSDV_INFINITY);
        assert_eq!(dump_of(&fwd).entries, vec![(2, DSDV_INFINITY, 5)]);
    }

    #[test]
    fn break_with_no_entries_through_the_hop_is_silent() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        a.apply(1, 2, 1, 4);
        let actions = a.unicast_failed(9, data_packet(0, 5), &mut bench.ctx(0));
        assert!(actions
            .iter()
            .all(|act| !matches!(act, Action::Broadcast { .. })));
    }

    #[test]
    fn fresher_even_seq_reestablishes_a_broken_route() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        a.apply(1, 2, 1, 4);
        a.unicast_failed(1, data_packet(0, 2), &mut bench.ctx(0));
        assert_eq!(a.entry(2).unwrap().metric, DSDV_INFINITY);
        assert_eq!(a.entry(2).unwrap().seq, 5);
        // C's next periodic advert carries seq 6 > 5.
        let (lost, gained) = a.apply(1, 2, 1, 6);
        assert!(!lost && gained);
        assert_eq!(a.entry(2).unwrap().metric, 2);
    }

    #[test]
    fn stored_sequence_numbers_never_decrease() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        let mut last_seq = 0;
        for (seq, metric) in [(4u32, 1u32), (2, 0), (6, 3), (5, 1), (8, 2)] {
            let update = Packet {
                origin: 1,
                dest: 1,
                body: PacketBody::DsdvUpdate(DsdvUpdate {
                    entries: vec![(2, metric, seq)],
                }),
            };
            a.receive(update, 1, &mut bench.ctx(0));
            let stored = a.entry(2).unwrap().seq;
            assert!(stored >= last_seq, "seq regressed: {stored} < {last_seq}");
            last_seq = stored;
        }
    }

    #[test]
    fn buffered_packets_flush_when_a_route_appears() {
        let mut bench = Bench::new(Protocol::Dsdv);
        let mut a = Dsdv::new(0);
        let parked = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        assert!(parked.is_empty(), "no route yet: parked silently");
        let update = Packet {
            origin: 1,
            dest: 1,
            body: PacketBody::DsdvUpdate(DsdvUpdate {
                entries: vec![(2, 1, 4)],
            }),
        };
        let actions = a.receive(update, 1, &mut bench.ctx(0));
        assert!(
            matches!(actions.as_slice(), [Action::Unicast { next_hop: 1, .. }]),
            "parked packet flushed via the fresh route: {actions:?}"
        );
    }
}
