//! Deterministic discrete-event core.
//!
//! Events execute in (time, insertion sequence) order, so equal
//! timestamps resolve in the order they were scheduled and a replay
//! with the same inputs produces byte-identical behavior.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Position;

/// Application-level timers a node can arm.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum AppTimerKind {
    /// A selecting sentry stops waiting for cover-set info replies.
    InfoTimeout,
    /// Re-broadcast of a sink position beacon after a short jitter.
    FloodBeacon { seq: u64, pos: Position },
    /// Send a link-layer acknowledgement after the radio turnaround.
    SendAck { to: usize, for_seq: u64 },
}

/// Everything that can be scheduled on the timeline.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum EventKind {
    /// Node broadcasts its presence.
    SendHello { entity: usize },
    /// Node broadcasts its neighbor list.
    SendTable { entity: usize },
    /// Discovery is over: enumerate cover sets, planarize, pick
    /// sentries and schedule detections.
    SetupDone,
    /// Periodic sink position broadcast.
    BeaconTick,
    /// MAC state machine timer (CCA end, backoff end, ack timeout).
    MacTimer { entity: usize, token: u64 },
    /// A frame finishes its airtime.
    TxEnd { tx_id: u64 },
    /// Application timer at an entity.
    AppTimer { entity: usize, token: u64, kind: AppTimerKind },
    /// A sentry detects an intrusion and starts the burst machinery.
    Detection { entity: usize },
    /// Display timer for one image expires at the sink.
    DisplayDeadline { image_id: u64 },
}

#[derive(Clone, Copy, Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.time.total_cmp(&other.time) == Ordering::Equal && self.seq == other.seq
    }
}
impl Eq for Scheduled {}

impl Ord for Scheduled {
    /// Reversed so the max-heap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Time-ordered event queue with deterministic tie-breaking.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Scheduled>,
    next_seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        EventQueue::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Panics when asked to schedule into the past: that is always an
    /// internal logic error, never a data condition.
    pub fn schedule(&mut self, time: f64, kind: EventKind) {
        assert!(
            time >= self.now,
            "event {kind:?} scheduled at {time}, before current time {}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { time, seq, kind });
    }

    /// Pops the next event at or before `t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: f64) -> Option<(f64, EventKind)> {
        let head = self.heap.peek()?;
        if head.time > t_end {
            return None;
        }
        let ev = self.heap.pop().expect("peeked entry exists");
        self.now = ev.time;
        Some((ev.time, ev.kind))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};

    #[test]
    fn equal_times_run_in_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(1.0, EventKind::SendHello { entity: 0 });
        q.schedule(1.0, EventKind::SendHello { entity: 1 });
        q.schedule(0.5, EventKind::SendHello { entity: 2 });
        let order: Vec<usize> = std::iter::from_fn(|| q.pop_until(f64::INFINITY))
            .map(|(_, kind)| match kind {
                EventKind::SendHello { entity } => entity,
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(order, vec![2, 0, 1]);
    }

    #[test]
    fn empty_queue_returns_immediately() {
        let mut q = EventQueue::new();
        assert_eq!(q.pop_until(100.0), None);
        assert_eq!(q.now(), 0.0);
    }

    #[test]
    fn events_beyond_the_horizon_stay_queued() {
        let mut q = EventQueue::new();
        q.schedule(5.0, EventKind::BeaconTick);
        assert_eq!(q.pop_until(4.0), None);
        assert_eq!(q.len(), 1);
        assert!(q.pop_until(5.0).is_some());
    }

    #[test]
    #[should_panic(expected = "before current time")]
    fn scheduling_into_the_past_panics() {
        let mut q = EventQueue::new();
        q.schedule(2.0, EventKind::BeaconTick);
        q.pop_until(10.0);
        q.schedule(1.0, EventKind::BeaconTick);
    }

    fn trace_hash(seed: u64) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = EventQueue::new();
        for _ in 0..1000 {
            let t = rng.gen_range(0.0..50.0);
            q.schedule(t, EventKind::MacTimer { entity: rng.gen_range(0..64), token: rng.gen() });
        }
        let mut hasher = DefaultHasher::new();
        // Drain interleaved with fresh insertions past the clock.
        while let Some((t, kind)) = q.pop_until(f64::INFINITY) {
            t.to_bits().hash(&mut hasher);
            if let EventKind::MacTimer { entity, token } = kind {
                entity.hash(&mut hasher);
                token.hash(&mut hasher);
            }
            if rng.gen_bool(0.1) && q.len() < 2000 {
                q.schedule(t + rng.gen_range(0.0..5.0), EventKind::MacTimer {
                    entity: rng.gen_range(0..64),
                    token: rng.gen(),
                });
            }
        }
        hasher.finish()
    }

    #[test]
    fn replaying_a_seed_reproduces_the_trace() {
        assert_eq!(trace_hash(77), trace_hash(77));
        assert_ne!(trace_hash(77), trace_hash(78));
    }
}
