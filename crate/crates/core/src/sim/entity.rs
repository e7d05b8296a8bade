//! Per-entity simulation state: the shared MAC machine, camera nodes
//! and the mobile sink.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::geometry::{CoverSet, FieldOfView, Position};
use crate::imaging::{Fragment, ImageResult, ReassemblyBuffer};
use crate::neighborhood::NeighborTable;
use crate::routing::PlanarNeighborSet;
use crate::selection::MemberInfo;
use crate::sim::packet::{Addr, Frame};
use crate::NodeId;

/// Where the MAC state machine currently is.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum MacPhase {
    Idle,
    /// Sensing the channel; decision falls at the timer.
    Cca,
    /// Waiting out a backoff draw before sensing again.
    Backoff,
    /// Own frame on the air.
    Transmitting { tx_id: u64 },
    /// Unicast sent, waiting for the acknowledgement.
    AwaitAck,
}

/// The frame the MAC is currently working on.
#[derive(Clone, Debug)]
pub struct Outgoing {
    pub frame: Frame,
    pub retries_left: u32,
    pub backoff_exp: u32,
}

/// One entity's link layer: a bounded FIFO plus a stop-and-wait
/// transmit machine driven by the simulation loop.
#[derive(Debug)]
pub struct MacState {
    pub queue: VecDeque<Frame>,
    pub capacity: usize,
    pub current: Option<Outgoing>,
    pub phase: MacPhase,
    /// Valid timer token; bumping it cancels pending timers lazily.
    pub token: u64,
    pub next_seq: u64,
    pub queue_drops: u64,
}

impl MacState {
    pub fn new(capacity: usize) -> Self {
        MacState {
            queue: VecDeque::new(),
            capacity,
            current: None,
            phase: MacPhase::Idle,
            token: 0,
            next_seq: 0,
            queue_drops: 0,
        }
    }

    /// Stamps a fresh sequence number and queues the frame. Returns
    /// false on tail drop.
    pub fn enqueue(&mut self, mut frame: Frame) -> bool {
        if self.queue.len() >= self.capacity {
            self.queue_drops += 1;
            return false;
        }
        frame.seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push_back(frame);
        true
    }

    /// Invalidates any timer scheduled for the previous phase.
    pub fn bump_token(&mut self) -> u64 {
        self.token += 1;
        self.token
    }

    pub fn has_room(&self) -> bool {
        self.queue.len() < self.capacity
    }

    pub fn is_idle(&self) -> bool {
        self.phase == MacPhase::Idle && self.current.is_none()
    }
}

/// An image currently being pushed out by a camera.
#[derive(Clone, Debug)]
pub struct ActiveImage {
    pub image_id: u64,
    /// Stamped when the first fragment is offered to the MAC.
    pub burst_start: f64,
    pub fragments: Vec<Fragment>,
    /// Next fragment to offer.
    pub cursor: usize,
    /// Parallel paths requested for this image.
    pub n_paths: u32,
    /// Two-hop (relay, temp dest) pairs chosen once per image burst;
    /// empty means fall back to plain forwarding.
    pub pairs: Vec<(NodeId, NodeId)>,
}

/// Queue of images a camera still owes the sink.
#[derive(Debug, Default)]
pub struct BurstState {
    pub pending_images: u32,
    pub active: Option<ActiveImage>,
}

/// A sentry's cover-set info collection round.
#[derive(Debug)]
pub struct SelectionState {
    /// Scoreable candidates (non-singleton sets).
    pub candidates: Vec<CoverSet>,
    pub awaiting: BTreeSet<NodeId>,
    pub info: BTreeMap<NodeId, MemberInfo>,
    pub token: u64,
    pub decided: bool,
    /// Members that stay silent past the first timeout are asked once
    /// more before their candidate sets are written off.
    pub re_requested: bool,
}

/// State of one camera node.
#[derive(Debug)]
pub struct CameraState {
    pub id: NodeId,
    pub fov: FieldOfView,
    pub energy: f64,
    pub table: NeighborTable,
    pub planar: PlanarNeighborSet,
    pub cover_sets: Vec<CoverSet>,
    /// Sink position learned from the latest beacon.
    pub sink_pos: Option<Position>,
    pub last_beacon_seq: Option<u64>,
    pub is_sentry: bool,
    pub burst: BurstState,
    pub selection: Option<SelectionState>,
    /// Images this camera has started, for unique image ids.
    pub images_started: u32,
}

impl CameraState {
    pub fn new(id: NodeId, fov: FieldOfView, energy: f64) -> Self {
        CameraState {
            id,
            fov,
            energy,
            table: NeighborTable::new(id),
            planar: PlanarNeighborSet::default(),
            cover_sets: Vec::new(),
            sink_pos: None,
            last_beacon_seq: None,
            is_sentry: false,
            burst: BurstState::default(),
            selection: None,
            images_started: 0,
        }
    }

    pub fn position(&self) -> Position {
        self.fov.apex
    }
}

/// The robot sink's travel plan: piecewise-linear waypoints at
/// constant speed, parked at the last waypoint afterwards.
#[derive(Clone, PartialEq, Debug)]
pub struct SinkPlan {
    pub waypoints: Vec<Position>,
    /// Meters per second; zero parks the sink at the first waypoint.
    pub speed: f64,
}

impl SinkPlan {
    pub fn static_at(pos: Position) -> Self {
        SinkPlan { waypoints: vec![pos], speed: 0.0 }
    }

    pub fn position_at(&self, t: f64) -> Position {
        let first = *self.waypoints.first().expect("a sink plan has at least one waypoint");
        if self.speed <= 0.0 || self.waypoints.len() < 2 {
            return first;
        }
        let mut remaining = self.speed * t.max(0.0);
        let mut current = first;
        for &next in &self.waypoints[1..] {
            let leg = current.distance(next);
            if leg <= f64::EPSILON {
                current = next;
                continue;
            }
            if remaining < leg {
                let f = remaining / leg;
                return Position::new(
                    current.x + (next.x - current.x) * f,
                    current.y + (next.y - current.y) * f,
                );
            }
            remaining -= leg;
            current = next;
        }
        current
    }
}

/// State of the robot sink.
#[derive(Debug)]
pub struct SinkState {
    pub plan: SinkPlan,
    pub beacon_seq: u64,
    pub buffers: BTreeMap<u64, ReassemblyBuffer>,
    /// Burst-start times of buffered images, for latency accounting.
    pub results: Vec<ImageResult>,
    pub fragments_accepted: u64,
    pub duplicate_fragments: u64,
    pub late_fragments: u64,
}

impl SinkState {
    pub fn new(plan: SinkPlan) -> Self {
        SinkState {
            plan,
            beacon_seq: 0,
            buffers: BTreeMap::new(),
            results: Vec::new(),
            fragments_accepted: 0,
            duplicate_fragments: 0,
            late_fragments: 0,
        }
    }
}

pub enum EntityKind {
    Camera(Box<CameraState>),
    Sink(Box<SinkState>),
}

/// One radio-equipped participant.
pub struct Entity {
    pub addr: Addr,
    pub mac: MacState,
    /// Highest frame sequence already delivered, per sender, for
    /// duplicate suppression under retransmissions.
    pub last_rx_seq: BTreeMap<Addr, u64>,
    /// Transmissions currently arriving at this entity.
    pub active_rx: Vec<u64>,
    /// Own transmissions currently on the air (the MAC frame plus any
    /// acknowledgement sent outside the contention machine). A radio
    /// that is talking cannot hear.
    pub transmitting_count: u32,
    pub kind: EntityKind,
}

impl Entity {
    pub fn camera(state: CameraState, queue_capacity: usize) -> Self {
        Entity {
            addr: Addr::Node(state.id),
            mac: MacState::new(queue_capacity),
            last_rx_seq: BTreeMap::new(),
            active_rx: Vec::new(),
            transmitting_count: 0,
            kind: EntityKind::Camera(Box::new(state)),
        }
    }

    pub fn sink(state: SinkState, queue_capacity: usize) -> Self {
        Entity {
            addr: Addr::Sink,
            mac: MacState::new(queue_capacity),
            last_rx_seq: BTreeMap::new(),
            active_rx: Vec::new(),
            transmitting_count: 0,
            kind: EntityKind::Sink(Box::new(state)),
        }
    }

    pub fn camera_state(&self) -> Option<&CameraState> {
        match &self.kind {
            EntityKind::Camera(c) => Some(c),
            EntityKind::Sink(_) => None,
        }
    }

    pub fn camera_state_mut(&mut self) -> Option<&mut CameraState> {
        match &mut self.kind {
            EntityKind::Camera(c) => Some(c),
            EntityKind::Sink(_) => None,
        }
    }

    pub fn sink_state(&self) -> Option<&SinkState> {
        match &self.kind {
            EntityKind::Sink(s) => Some(s),
            EntityKind::Camera(_) => None,
        }
    }

    pub fn sink_state_mut(&mut self) -> Option<&mut SinkState> {
        match &mut self.kind {
            EntityKind::Sink(s) => Some(s),
            EntityKind::Camera(_) => None,
        }
    }
}
