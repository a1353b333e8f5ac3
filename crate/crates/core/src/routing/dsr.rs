//! Dynamic Source Routing.
//!
//! The sender knows the complete hop-by-hop route and carries it in every
//! data packet; routes are learned through route discovery (flooded requests
//! accumulating the path, unicast replies carrying it back) and kept in a
//! per-node route cache. Route maintenance removes broken links from every
//! cache the error notification traverses, and the source retries from its
//! cache or starts a new discovery.

use std::collections::BTreeSet;

use super::{
    Action, DropReason, DsrError, DsrReply, DsrRequest, Packet, PacketBody, PendingBuffer,
    RoutingCtx, RoutingProtocol, TimerKind,
};
use crate::NodeId;

pub struct Dsr {
    me: NodeId,
    next_request_id: u32,
    /// Complete source routes starting at `me`.
    cache: Vec<Vec<NodeId>>,
    seen_requests: BTreeSet<(NodeId, u32)>,
    pending: BTreeSet<NodeId>,
    buffer: PendingBuffer,
}

impl Dsr {
    pub fn new(me: NodeId) -> Self {
        Dsr {
            me,
            next_request_id: 0,
            cache: Vec::new(),
            seen_requests: BTreeSet::new(),
            pending: BTreeSet::new(),
            buffer: PendingBuffer::default(),
        }
    }

    pub fn cached_routes(&self) -> &[Vec<NodeId>] {
        &self.cache
    }

    /// Shortest cached route to `dest`, if any.
    pub fn route_to(&self, dest: NodeId) -> Option<&Vec<NodeId>> {
        self.cache
            .iter()
            .filter(|r| r.last() == Some(&dest))
            .min_by_key(|r| r.len())
    }

    /// Insert a loop-free route starting at `me`; duplicates are ignored.
    fn cache_route(&mut self, route: Vec<NodeId>) {
        if route.len() < 2 || route[0] != self.me {
            return;
        }
        let mut seen = BTreeSet::new();
        if !route.iter().all(|n| seen.insert(*n)) {
            return; // looping routes never enter the cache
        }
        if !self.cache.contains(&route) {
            self.cache.push(route);
        }
    }

    /// Learn the sub-routes a traversing packet reveals: from `me` toward
    /// both ends of `route` (links are bidirectional).
    fn cache_from_path(&mut self, route: &[NodeId]) {
        if let Some(idx) = route.iter().position(|n| *n == self.me) {
            if idx + 1 < route.len() {
                self.cache_route(route[idx..].to_vec());
            }
            if idx > 0 {
                let mut back: Vec<NodeId> = route[..=idx].to_vec();
                back.reverse();
                self.cache_route(back);
            }
        }
    }

    /// Drop every cached route that uses the undirected link `a`-`b`.
    fn purge_link(&mut self, a: NodeId, b: NodeId) {
        self.cache.retain(|route| {
            !route
                .windows(2)
                .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
        });
    }

    fn start_discovery(&mut self, dest: NodeId, attempt: u32, ctx: &RoutingCtx) -> Vec<Action> {
        let request_id = self.next_request_id;
        self.next_request_id += 1;
        self.seen_requests.insert((self.me, request_id));
        self.pending.insert(dest);
        vec![
            Action::Broadcast {
                packet: Packet {
                    origin: self.me,
                    dest,
                    body: PacketBody::DsrRequest(DsrRequest {
                        source: self.me,
                        request_id,
                        dest,
                        route: vec![self.me],
                    }),
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

    /// Attach a cached route to a data packet and emit the first hop.
    fn send_with_route(&mut self, mut packet: Packet, route: Vec<NodeId>) -> Action {
        let next_hop = route[1];
        if let PacketBody::Data(d) = &mut packet.body {
            d.source_route = Some(route);
        }
        Action::Unicast { next_hop, packet }
    }

    fn flush_buffer(&mut self, dest: NodeId) -> Vec<Action> {
        let Some(route) = self.route_to(dest).cloned() else {
            return Vec::new();
        };
        self.pending.remove(&dest);
        self.buffer
            .take_for(dest)
            .into_iter()
            .map(|p| self.send_with_route(p, route.clone()))
            .collect()
    }

    fn handle_request(
        &mut self,
        req: DsrRequest,
        _from: NodeId,
        _ctx: &mut RoutingCtx,
    ) -> Vec<Action> {
        if req.source == self.me {
            return Vec::new();
        }
        if !self.seen_requests.insert((req.source, req.request_id)) {
            return Vec::new(); // duplicate
        }
        if req.route.contains(&self.me) {
            return Vec::new(); // loop prevention
        }
        // On-path caching: the accumulated list is a path from the source to
        // our upstream neighbor.
        let mut back: Vec<NodeId> = req.route.clone();
        back.push(self.me);
        back.reverse();
        self.cache_route(back);

        if req.dest == self.me {
            let mut full = req.route.clone();
            full.push(self.me);
            let reply_next = *req.route.last().expect("route never empty");
            return vec![Action::Unicast {
                next_hop: reply_next,
                packet: Packet {
                    origin: self.me,
                    dest: req.source,
                    body: PacketBody::DsrReply(DsrReply { route: full }),
                },
            }];
        }

        let mut route = req.route;
        route.push(self.me);
        vec![Action::Broadcast {
            packet: Packet {
                origin: req.source,
                dest: req.dest,
                body: PacketBody::DsrRequest(DsrRequest { route, ..req }),
            },
        }]
    }

    fn handle_reply(&mut self, reply: DsrReply, _from: NodeId) -> Vec<Action> {
        let route = &reply.route;
        let Some(idx) = route.iter().position(|n| *n == self.me) else {
            return vec![Action::Drop {
                packet: Packet {
                    origin: self.me,
                    dest: self.me,
                    body: PacketBody::DsrReply(reply.clone()),
                },
                reason: DropReason::StaleControl,
            }];
        };
        self.cache_from_path(route);
        if idx == 0 {
            // We are the original requester.
            let dest = *route.last().expect("reply route non-empty");
            return self.flush_buffer(dest);
        }
        let next_hop = route[idx - 1];
        vec![Action::Unicast {
            next_hop,
            packet: Packet {
                origin: *route.last().expect("non-empty"),
                dest: route[0],
                body: PacketBody::DsrReply(reply),
            },
        }]
    }

    fn handle_error(&mut self, err: DsrError, _from: NodeId) -> Vec<Action> {
        self.purge_link(err.broken_from, err.broken_to);
        let route = &err.route;
        let Some(idx) = route.iter().position(|n| *n == self.me) else {
            return Vec::new();
        };
        if idx + 1 < route.len() {
            let next_hop = route[idx + 1];
            return vec![Action::Unicast {
                next_hop,
                packet: Packet {
                    origin: route[0],
                    dest: *route.last().expect("non-empty"),
                    body: PacketBody::DsrError(err),
                },
            }];
        }
        // The error reached the data source; new sends will re-route from
        // cache or restart discovery on demand.
        Vec::new()
    }

    fn forward_data(&mut self, packet: Packet, ctx: &mut RoutingCtx) -> Vec<Action> {
        let PacketBody::Data(data) = &packet.body else {
            unreachable!("forward_data called on data only");
        };
        let Some(sr) = data.source_route.clone() else {
            return vec![Action::Drop {
                packet,
                reason: DropReason::NoRoute,
            }];
        };
        let Some(idx) = sr.iter().position(|n| *n == self.me) else {
            return vec![Action::Drop {
                packet,
                reason: DropReason::StaleControl,
            }];
        };
        let _ = ctx;
        if idx + 1 >= sr.len() {
            return vec![Action::DeliverLocal { packet }];
        }
        let next_hop = sr[idx + 1];
        vec![Action::Unicast { next_hop, packet }]
    }
}

impl RoutingProtocol for Dsr {
    fn start(&mut self, _ctx: &mut RoutingCtx) -> Vec<Action> {
        Vec::new()
    }

    fn originate(&mut self, packet: Packet, ctx: &mut RoutingCtx) -> Vec<Action> {
        let dest = packet.dest;
        if dest == self.me {
            return vec![Action::DeliverLocal { packet }];
        }
        if let Some(route) = self.route_to(dest).cloned() {
            return vec![self.send_with_route(packet, route)];
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
            PacketBody::DsrRequest(req) => self.handle_request(req, from, ctx),
            PacketBody::DsrReply(reply) => self.handle_reply(reply, from),
            PacketBody::DsrError(err) => self.handle_error(err, from),
            PacketBody::Data(_) => {
                if packet.dest == self.me {
                    return vec![Action::DeliverLocal { packet }];
                }
                self.forward_data(packet, ctx)
            }
            _ => Vec::new(),
        }
    }

    fn unicast_failed(
        &mut self,
        next_hop: NodeId,
        packet: Packet,
        ctx: &mut RoutingCtx,
    ) -> Vec<Action> {
        self.purge_link(self.me, next_hop);
        let mut actions = Vec::new();
        match &packet.body {
            PacketBody::Data(data) => {
                let sr = data.source_route.clone().unwrap_or_default();
                let my_idx = sr.iter().position(|n| *n == self.me);
                if packet.origin == self.me {
                    // Retry locally: another cached route or a new discovery.
                    let dest = packet.dest;
                    if let Some(route) = self.route_to(dest).cloned() {
                        let mut retry = packet;
                        if let PacketBody::Data(d) = &mut retry.body {
                            d.source_route = None;
                        }
                        actions.push(self.send_with_route(retry, route));
                    } else {
                        if let Some(dropped) =
                            self.buffer.push(packet, ctx.config.buffer_capacity)
                        {
                            actions.push(Action::Drop {
                                packet: dropped,
                                reason: DropReason::BufferOverflow,
                            });
                        }
                        if !self.pending.contains(&dest) {
                            actions.extend(self.start_discovery(dest, 0, ctx));
                        }
                    }
                } else if let Some(idx) = my_idx {
                    // Propagate the break back to the source; the in-flight
                    // packet itself is lost here.
                    let mut back: Vec<NodeId> = sr[..=idx].to_vec();
                    back.reverse();
                    if back.len() >= 2 {
                        actions.push(Action::Unicast {
                            next_hop: back[1],
                            packet: Packet {
                                origin: self.me,
                                dest: *back.last().expect("non-empty"),
                                body: PacketBody::DsrError(DsrError {
                                    broken_from: self.me,
                                    broken_to: next_hop,
                                    route: back,
                                }),
                            },
                        });
                    }
                    actions.push(Action::Drop {
                        packet,
                        reason: DropReason::LinkBreak,
                    });
                } else {
                    actions.push(Action::Drop {
                        packet,
                        reason: DropReason::LinkBreak,
                    });
                }
            }
            // Control packets lost on a broken link are not retried at the
            // routing layer; the cache purge above is the lasting effect.
            _ => {}
        }
        actions
    }

    fn timer(&mut self, kind: TimerKind, ctx: &mut RoutingCtx) -> Vec<Action> {
        let TimerKind::DiscoveryRetry { dest, attempt } = kind else {
            return Vec::new();
        };
        if !self.pending.contains(&dest) {
            return Vec::new();
        }
        if self.route_to(dest).is_some() {
            self.pending.remove(&dest);
            return Vec::new();
        }
        if attempt <= ctx.config.rreq_retry_limit {
            return self.start_discovery(dest, attempt, ctx);
        }
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

    fn request_of(actions: &[Action]) -> DsrRequest {
        actions
            .iter()
            .find_map(|a| match a {
                Action::Broadcast { packet } => match &packet.body {
                    PacketBody::DsrRequest(r) => Some(r.clone()),
                    _ => None,
                },
                _ => None,
            })
            .expect("a request broadcast")
    }

    #[test]
    fn cache_hit_sends_data_with_the_full_source_route() {
        let mut bench = Bench::new(Protocol::Dsr);
        let mut a = Dsr::new(0);
        a.cache_route(vec![0, 1, 2]);
        let actions = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        assert_eq!(count_kind(&actions, "dsr-req"), 0);
        match actions.as_slice() {
            [Action::Unicast { next_hop: 1, packet }] => match &packet.body {
                PacketBody::Data(d) => {
                    assert_eq!(d.source_route.as_deref(), Some([0, 1, 2].as_slice()));
                }
                other => panic!("expected data, got {other:?}"),
            },
            other => panic!("expected one unicast, got {other:?}"),
        }
    }

    #[test]
    fn local_delivery_needs_no_route() {
        let mut bench = Bench::new(Protocol::Dsr);
        let mut a = Dsr::new(0);
        let actions = a.originate(data_packet(0, 0), &mut bench.ctx(0));
        assert!(matches!(actions.as_slice(), [Action::DeliverLocal { .. }]));
    }

    #[test]
    fn cache_miss_broadcasts_request_with_self_route_list() {
        let mut bench = Bench::new(Protocol::Dsr);
        let mut a = Dsr::new(0);
        let actions = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        let req = request_of(&actions);
        assert_eq!(req.route, vec![0]);
        assert_eq!(req.dest, 2);
    }

    #[test]
    fn node_already_in_route_list_drops_the_request() {
        let mut bench = Bench::new(Protocol::Dsr);
        let mut b = Dsr::new(1);
        let req = DsrRequest {
            source: 0,
            request_id: 0,
            dest: 2,
            route: vec![0, 1, 3],
        };
        let actions = b.handle_request(req, 3, &mut bench.ctx(1));
        assert!(actions.is_empty());
    }

    #[test]
    fn duplicate_request_id_is_dropped() {
        let mut bench = Bench::new(Protocol::Dsr);
        let mut b = Dsr::new(1);
        let req = DsrRequest {
            source: 0,
            request_id: 7,
            dest: 2,
            route: vec![0],
        };
        assert!(!b.handle_request(req.clone(), 0, &mut bench.ctx(1)).is_empty());
        assert!(b.handle_request(req, 0, &mut bench.ctx(1)).is_empty());
    }

    /// Line A(0)-B(1)-C(2): C answers [A,B] with the completed route
    /// [A,B,C], unicast back along [B,A].
    #[test]
    fn destination_replies_with_the_completed_route() {
        let mut bench = Bench::new(Protocol::Dsr);
        let mut c = Dsr::new(2);
        let req = DsrRequest {
            source: 0,
            request_id: 0,
            dest: 2,
            route: vec![0, 1],
        };
        let actions = c.handle_request(req, 1, &mut bench.ctx(2));
        match actions.as_slice() {
            [Action::Unicast { next_hop: 1, packet }] => match &packet.body {
                PacketBody::DsrReply(r) => assert_eq!(r.route, vec![0, 1, 2]),
                other => panic!("expected reply, got {other:?}"),
            },
            other => panic!("expected unicast reply, got {other:?}"),
        }
    }

    #[test]
    fn full_line_discovery_installs_the_route_and_flushes_data() {
        let mut bench = Bench::new(Protocol::Dsr);
        let mut a = Dsr::new(0);
        let mut b = Dsr::new(1);
        let mut c = Dsr::new(2);

        let a_out = a.originate(data_packet(0, 2), &mut bench.ctx(0));
        let req = request_of(&a_out);
        let b_out = b.handle_request(req, 0, &mut bench.ctx(1));
        let req_b = request_of(&b_out);
        assert_eq!(req_b.route, vec![0, 1]);
        let c_out = c.handle_request(req_b, 1, &mut bench.ctx(2));
        let reply = match &c_out[0] {
            Action::Unicast { packet, .. } => match &packet.body {
                PacketBody::DsrReply(r) => r.clone(),
                _ => panic!("not a reply"),
            },
            _ => panic!("not a unicast"),
        };
        // Reply travels C -> B -> A.
        let b_fwd = b.handle_reply(reply.clone(), 2);
        assert!(matches!(b_fwd.as_slice(), [Action::Unicast { next_hop: 0, .. }]));
        // B cached its sub-routes while forwarding.
        assert!(b.route_to(2).is_some());
        assert!(b.route_to(0).is_some());
        let a_final = a.handle_reply(reply, 1);
        assert_eq!(a.route_to(2), Some(&vec![0, 1, 2]));
        // Buffered packet leaves with the new source route.
        match a_final.as_slice() {
            [Action::Unicast { next_hop: 1, packet }] => match &packet.body {
                PacketBody::Data(d) => {
                    assert_eq!(d.source_route.as_deref(), Some([0, 1, 2].as_slice()));
                }
                _ => panic!("expected flushed data"),
            },
            other => panic!("expected one flushed packet, got {other:?}"),
        }
    }

    #[test]
    fn broken_link_purges_only_routes_that_use_it() {
        let mut a = Dsr::new(0);
        a.cache_route(vec![0, 1, 2]);
        a.cache_route(vec![0, 3, 2]);
        a.purge_link(1, 2);
        assert_eq!(a.cached_routes(), &[vec![0, 3, 2]]);
    }

    #[test]
    fn error_for_an_unused_link_changes_nothing() {
        let mut a = Dsr::new(0);
        a.cache_route(vec![0, 1, 2]);
        a.purge_link(5, 6);
        assert_eq!(a.cached_routes(), &[vec![0, 1, 2]]);
    }

    #[test]
    fn break_on_the_only_route_triggers_a_new_discovery() {
        let mut bench = Bench::new(Protocol::Dsr);
        let mut a = Dsr::new(0);
        a.cache_route(vec![0, 1]);
        let mut packet = data_packet(0, 1);
        if let PacketBody::Data(d) = &mut packet.body {
            d.source_route = Some(vec![0, 1]);
        }
        let actions = a.unicast_failed(1, packet, &mut bench.ctx(0));
        assert!(a.cached_routes().is_empty(), "cache emptied");
        assert_eq!(count_kind(&actions, "dsr-req"), 1, "re-discovery starts");
    }

    #[test]
    fn intermediate_break_reports_back_to_the_source() {
        let mut bench = Bench::new(Protocol::Dsr);
        // B forwards A's packet along [A,B,C] and the B-C hop dies.
        let mut b = Dsr::new(1);
        b.cache_route(vec![1, 2]);
        let mut packet = data_packet(0, 2);
        if let PacketBody::Data(d) = &mut packet.body {
            d.source_route = Some(vec![0, 1, 2]);
        }
        let actions = b.unicast_failed(2, packet, &mut bench.ctx(1));
        assert!(b.cached_routes().is_empty());
        let err = actions
            .iter()
            .find_map(|a| match a {
                Action::Unicast { next_hop, packet } => match &packet.body {
                    PacketBody::DsrError(e) => Some((*next_hop, e.clone())),
                    _ => None,
                },
                _ => None,
            })
            .expect("error toward the source");
        assert_eq!(err.0, 0);
        assert_eq!(err.1.broken_from, 1);
        assert_eq!(err.1.broken_to, 2);
        assert_eq!(err.1.route, vec![1, 0]);
        // A receives it and purges its own cache.
        let mut a = Dsr::new(0);
        a.cache_route(vec![0, 1, 2]);
        a.handle_error(err.1, 1);
        assert!(a.cached_routes().is_empty());
    }

    #[test]
    fn source_routes_never_contain_a_repeated_node() {
        let mut a = Dsr::new(0);
        a.cache_route(vec![0, 1, 2, 1]);
        assert!(a.cached_routes().is_empty());
    }
}
