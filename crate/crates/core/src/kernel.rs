//! Deterministic discrete-event engine.
//!
//! A single engine owns a monotonic clock and a priority queue of events
//! ordered by `(fire_time, tie_seq)`. The tie sequence is a monotone
//! insertion counter, so simultaneous events are delivered in FIFO order
//! and two runs of the same scenario replay the exact same event order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Simulation time in seconds. Non-negative, never decreasing during a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(pub f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn seconds(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        // Times are produced by finite arithmetic only; total_cmp keeps the
        // ordering total without unwraps.
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}

impl From<f64> for SimTime {
    fn from(s: f64) -> Self {
        SimTime(s)
    }
}

/// Handle returned by [`Engine::schedule`]; permits later cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    /// An event was scheduled before the current clock.
    #[error("clock violation: {context} scheduled an event at {requested} while the clock is at {clock}")]
    ClockViolation {
        requested: f64,
        clock: f64,
        context: String,
    },
}

struct HeapEntry<P> {
    fire_time: SimTime,
    tie_seq: u64,
    payload: P,
}

impl<P> PartialEq for HeapEntry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.tie_seq == other.tie_seq
    }
}
impl<P> Eq for HeapEntry<P> {}

impl<P> PartialOrd for HeapEntry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for HeapEntry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the minimal
        // (fire_time, tie_seq) on top.
        (other.fire_time, other.tie_seq).cmp(&(self.fire_time, self.tie_seq))
    }
}

/// One line of the delivered-event log: `time kind node detail`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: SimTime,
    pub kind: &'static str,
    pub node: Option<usize>,
    pub detail: String,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let node = match self.node {
            Some(n) => n.to_string(),
            None => "-".to_string(),
        };
        write!(f, "{} {} {} {}", self.time, self.kind, node, self.detail)
    }
}

/// Discrete-event engine: clock, pending-event queue, delivered-event log.
///
/// The engine is generic over the event payload so the queue mechanics can be
/// tested in isolation from any particular simulation.
pub struct Engine<P> {
    clock: SimTime,
    queue: BinaryHeap<HeapEntry<P>>,
    next_seq: u64,
    cancelled: HashSet<u64>,
    delivered: u64,
    log: Option<Vec<LogEntry>>,
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            clock: SimTime::ZERO,
            queue: BinaryHeap::new(),
            next_seq: 0,
            cancelled: HashSet::new(),
            delivered: 0,
            log: None,
        }
    }

    /// Enable recording of delivered events (off by default; large runs keep
    /// it off to bound memory).
    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn log(&self) -> &[LogEntry] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn take_log(&mut self) -> Vec<LogEntry> {
        self.log.take().unwrap_or_default()
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn delivered_count(&self) -> u64 {
        self.delivered
    }

    pub fn pending_len(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    /// Enqueue an event. `fire_time` must not precede the current clock.
    ///
    /// `context` names the caller for the clock-violation diagnostic.
    pub fn schedule(
        &mut self,
        fire_time: SimTime,
        payload: P,
        context: &str,
    ) -> Result<EventHandle, KernelError> {
        if fire_time < self.clock {
            return Err(KernelError::ClockViolation {
                requested: fire_time.0,
                clock: self.clock.0,
                context: context.to_string(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(HeapEntry {
            fire_time,
            tie_seq: seq,
            payload,
        });
        Ok(EventHandle(seq))
    }

    /// Cancel a previously scheduled event. A cancelled event is never
    /// delivered; cancelling an already-delivered handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pop and deliver the next event with `fire_time <= until`, advancing the
    /// clock to its fire time. Returns `None` once no such event remains, in
    /// which case the clock is advanced to `until`.
    pub fn step_until(&mut self, until: SimTime) -> Option<(SimTime, P)> {
        loop {
            match self.queue.peek() {
                Some(entry) if entry.fire_time <= until => {
                    let entry = self.queue.pop().expect("peeked entry");
                    if self.cancelled.remove(&entry.tie_seq) {
                        continue;
                    }
                    debug_assert!(entry.fire_time >= self.clock, "clock must not go backwards");
                    self.clock = entry.fire_time;
                    self.delivered += 1;
                    return Some((entry.fire_time, entry.payload));
                }
                _ => {
                    if until > self.clock {
                        self.clock = until;
                    }
                    return None;
                }
            }
        }
    }

    /// Record one delivered event in the log (if logging is enabled).
    pub fn record(&mut self, kind: &'static str, node: Option<usize>, detail: String) {
        let time = self.clock;
        if let Some(log) = self.log.as_mut() {
            log.push(LogEntry {
                time,
                kind,
                node,
                detail,
            });
        }
    }

    pub fn log_enabled(&self) -> bool {
        self.log.is_some()
    }
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    enum TestEv {
        Tag(&'static str),
    }

    fn drain(engine: &mut Engine<TestEv>, until: f64) -> Vec<(f64, TestEv)> {
        let mut out = Vec::new();
        while let Some((t, p)) = engine.step_until(SimTime(until)) {
            out.push((t.0, p));
        }
        out
    }

    #[test]
    fn single_event_fires_at_its_time() {
        let mut e = Engine::new();
        e.schedule(SimTime(1.0), TestEv::Tag("a"), "test").unwrap();
        assert_eq!(e.pending_len(), 1);
        let out = drain(&mut e, 10.0);
        assert_eq!(out, vec![(1.0, TestEv::Tag("a"))]);
    }

    #[test]
    fn pop_orders_by_time_then_insertion() {
        let mut e = Engine::new();
        e.schedule(SimTime(2.0), TestEv::Tag("late"), "test").unwrap();
        e.schedule(SimTime(1.0), TestEv::Tag("early"), "test").unwrap();
        let out = drain(&mut e, 10.0);
        assert_eq!(
            out,
            vec![(1.0, TestEv::Tag("early")), (2.0, TestEv::Tag("late"))]
        );
    }

    #[test]
    fn simultaneous_events_are_fifo() {
        let mut e = Engine::new();
        e.schedule(SimTime(1.0), TestEv::Tag("a"), "test").unwrap();
        e.schedule(SimTime(1.0), TestEv::Tag("b"), "test").unwrap();
        let out = drain(&mut e, 10.0);
        assert_eq!(out, vec![(1.0, TestEv::Tag("a")), (1.0, TestEv::Tag("b"))]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut e = Engine::new();
        e.schedule(SimTime(5.0), TestEv::Tag("a"), "test").unwrap();
        e.step_until(SimTime(10.0));
        let err = e
            .schedule(SimTime(1.0), TestEv::Tag("b"), "late-handler")
            .unwrap_err();
        match err {
            KernelError::ClockViolation {
                requested,
                clock,
                context,
            } => {
                assert_eq!(requested, 1.0);
                assert_eq!(clock, 5.0);
                assert_eq!(context, "late-handler");
            }
        }
    }

    #[test]
    fn run_with_no_events_advances_clock_to_until() {
        let mut e: Engine<TestEv> = Engine::new();
        e.enable_log();
        assert!(e.step_until(SimTime(120.0)).is_none());
        assert_eq!(e.clock(), SimTime(120.0));
        assert!(e.log().is_empty());
    }

    #[test]
    fn run_boundary_is_inclusive() {
        let mut e = Engine::new();
        for (t, tag) in [(1.0, "a"), (2.0, "b"), (3.0, "c")] {
            e.schedule(SimTime(t), TestEv::Tag(tag), "test").unwrap();
        }
        let out = drain(&mut e, 2.0);
        assert_eq!(out, vec![(1.0, TestEv::Tag("a")), (2.0, TestEv::Tag("b"))]);
        assert_eq!(e.clock(), SimTime(2.0));
        // The t=3 event is still pending for a later run.
        assert_eq!(e.pending_len(), 1);
    }

    #[test]
    fn cancelled_events_are_never_delivered() {
        let mut e = Engine::new();
        let h = e.schedule(SimTime(1.0), TestEv::Tag("a"), "test").unwrap();
        e.schedule(SimTime(2.0), TestEv::Tag("b"), "test").unwrap();
        e.cancel(h);
        let out = drain(&mut e, 10.0);
        assert_eq!(out, vec![(2.0, TestEv::Tag("b"))]);
    }

    #[test]
    fn clock_is_monotonic_across_steps() {
        let mut e = Engine::new();
        for i in 0..100 {
            // Deliberately interleaved insertion order.
            let t = ((i * 37) % 100) as f64 * 0.1;
            e.schedule(SimTime(t), TestEv::Tag("x"), "test").unwrap();
        }
        let mut last = -1.0;
        while let Some((t, _)) = e.step_until(SimTime(1000.0)) {
            assert!(t.0 >= last);
            last = t.0;
        }
    }

    #[test]
    fn identical_schedules_replay_identically() {
        let build = || {
            let mut e = Engine::new();
            e.enable_log();
            for i in 0..50u64 {
                let t = (i % 7) as f64;
                e.schedule(SimTime(t), TestEv::Tag("ev"), "test").unwrap();
            }
            let mut order = Vec::new();
            while let Some((t, p)) = e.step_until(SimTime(100.0)) {
                e.record("ev", None, format!("{t:?} {p:?}"));
                order.push((t, format!("{p:?}")));
            }
            (order, e.take_log())
        };
        let (o1, l1) = build();
        let (o2, l2) = build();
        assert_eq!(o1, o2);
        assert_eq!(l1, l2);
    }
}
