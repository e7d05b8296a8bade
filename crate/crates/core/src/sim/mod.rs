//! Discrete-event simulation of the whole network: unit-disk radio with
//! collisions, CSMA/CA link layer, neighbor discovery, sink beaconing,
//! cover-set activation and fragment routing, driven to completion for
//! one seed and summarized as [`RunMetrics`].

pub mod engine;
pub mod entity;
pub mod packet;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ScenarioConfig;
use crate::geometry::{enumerate_cover_sets, CoverSet, FieldOfView, Position};
use crate::imaging::{fragment, fragment_bytes, Fragment, FragmentDisposition, ReassemblyBuffer};
use crate::metrics::{aggregate, RunMetrics};
use crate::neighborhood::{forwarders, forwarders2_union, NeighborRecord};
use crate::routing::{
    forward, gabriel_planarize, known_position, tgpsr_select_paths, ForwardDecision,
    RouterContext, RoutingHeader, RoutingMode, RoutingProtocol,
};
use crate::selection::{
    nb_optimal_paths, score_cover_set, select_cover_set, MemberInfo, PathRequirement,
    SelectionWeights,
};
use crate::NodeId;

use engine::{AppTimerKind, EventKind, EventQueue};
use entity::{
    ActiveImage, CameraState, Entity, EntityKind, MacPhase, Outgoing, SelectionState, SinkPlan,
    SinkState,
};
use packet::{Addr, Frame, FrameKind, ACK_BYTES, ACK_TURNAROUND};

/// Hello broadcasts are jittered uniformly over the first second.
pub const HELLO_WINDOW: f64 = 1.0;
/// Neighbor-table broadcasts start here, jittered over one more second.
pub const TABLE_TIME: f64 = 2.0;
/// When discovery is considered over and per-node setup runs.
pub const SETUP_TIME: f64 = 3.5;
/// First sink position beacon.
pub const BEACON_START: f64 = 4.0;
/// Re-broadcast jitter bound for flooded beacons.
const FLOOD_JITTER: f64 = 0.1;
/// Extra horizon after the last possible detection, so bursts started
/// late in the event window can still drain.
const POST_EVENT_MARGIN: f64 = 60.0;

/// Engine counters for one run.
#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct SimStats {
    pub events_processed: u64,
    /// Transmissions completed, including acknowledgements.
    pub frames_sent: u64,
    /// Receiver slots that decoded a frame.
    pub rx_ok: u64,
    /// Receiver slots destroyed by overlapping transmissions.
    pub rx_collision: u64,
    /// Receiver slots lost because the receiver was itself talking.
    pub rx_deaf: u64,
    /// Receiver slots outside the sender's radio range.
    pub rx_out_of_range: u64,
    /// Clear-channel assessments that found the medium busy.
    pub cca_busy: u64,
    /// Frames tail-dropped at full MAC queues.
    pub queue_drops: u64,
    /// Unicast frames abandoned after exhausting their retries.
    pub mac_failures: u64,
    /// Fragments dropped by a routing decision (isolation, perimeter
    /// loop, stale temporary destination, or no known sink).
    pub routing_drops: u64,
    /// Entity count, cameras plus sink.
    pub universe: usize,
    /// Some camera had no multi-hop path to the sink at deployment.
    pub sink_disconnected: bool,
}

impl SimStats {
    /// Every completed transmission offers exactly `universe - 1`
    /// receiver slots; each is decoded, collided, deafened or out of
    /// range. Holds after any fully drained run.
    pub fn conservation_holds(&self) -> bool {
        self.frames_sent * (self.universe as u64 - 1)
            == self.rx_ok + self.rx_collision + self.rx_deaf + self.rx_out_of_range
    }
}

/// Reproducibility probe: what the run decided before any scenario
/// policy could diverge, plus the activations it performed.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct RunDiagnostics {
    /// Cameras picked as sentries, ascending.
    pub sentries: Vec<NodeId>,
    /// Detection time drawn for each sentry.
    pub detection_schedule: Vec<(NodeId, f64)>,
    /// Cover sets activated, in decision order.
    pub activations: Vec<(NodeId, Vec<NodeId>)>,
    /// Hash over camera placements and facings.
    pub topology_digest: u64,
    /// Hash over the neighbor tables as discovery left them.
    pub tables_digest: u64,
    /// Cameras that had at least one non-singleton cover set.
    pub eligible_count: usize,
}

/// Everything a single seeded run produces.
#[derive(Clone, PartialEq, Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub stats: SimStats,
    pub diag: RunDiagnostics,
}

#[derive(Clone, Copy, PartialEq, Debug, Default)]
struct RxFlags {
    collided: bool,
    deaf: bool,
}

/// One frame on the air.
struct Transmission {
    sender: usize,
    sender_pos: Position,
    frame: Frame,
    /// Whether the sender's MAC machine is driving this frame (and
    /// must advance when it ends), as opposed to a turnaround ack.
    mac_frame: bool,
    /// In-range receivers captured at transmission start.
    receivers: Vec<(usize, RxFlags)>,
}

impl Transmission {
    fn corrupt_at(&mut self, receiver: usize) {
        if let Some(entry) = self.receivers.iter_mut().find(|(j, _)| *j == receiver) {
            entry.1.collided = true;
        }
    }

    fn deafen_at(&mut self, receiver: usize) {
        if let Some(entry) = self.receivers.iter_mut().find(|(j, _)| *j == receiver) {
            entry.1.deaf = true;
        }
    }
}

/// One seeded network run: entities, radio state and the event loop.
pub struct Simulation {
    cfg: ScenarioConfig,
    seed: u64,
    queue: EventQueue,
    /// Cameras at indices `0..sink_idx` (entity index = node id), sink last.
    entities: Vec<Entity>,
    sink_idx: usize,
    transmissions: BTreeMap<u64, Transmission>,
    next_tx_id: u64,
    next_app_token: u64,
    schedule_rng: ChaCha8Rng,
    mac_rng: ChaCha8Rng,
    stats: SimStats,
    diag: RunDiagnostics,
    images_attempted: u32,
    fragments_sent: u64,
    image_data: Option<Vec<u8>>,
    t_end: f64,
}

impl Simulation {
    /// Deploys `cfg.node_count` cameras uniformly at random with random
    /// facings, plus a static sink at the area center.
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Simulation {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let topology_seed: u64 = master.gen();
        let schedule_seed: u64 = master.gen();
        let mac_seed: u64 = master.gen();
        let mut topology_rng = ChaCha8Rng::seed_from_u64(topology_seed);
        let aligned = cfg.facing_spread < TAU;
        let base = if aligned { topology_rng.gen_range(0.0..TAU) } else { 0.0 };
        let mut cameras = Vec::with_capacity(cfg.node_count as usize);
        for _ in 0..cfg.node_count {
            let x = topology_rng.gen_range(0.0..cfg.area_width);
            let y = topology_rng.gen_range(0.0..cfg.area_height);
            let los = if aligned {
                let half = cfg.facing_spread / 2.0;
                (base + topology_rng.gen_range(-half..=half)).rem_euclid(TAU)
            } else {
                topology_rng.gen_range(0.0..TAU)
            };
            cameras.push((Position::new(x, y), los));
        }
        let plan = SinkPlan::static_at(cfg.sink_position());
        Simulation::assemble(cfg.clone(), seed, schedule_seed, mac_seed, &cameras, plan, true)
    }

    /// Builds a run over hand-placed cameras (position and facing) and
    /// an explicit sink plan. The master RNG stream is consumed in the
    /// same order as [`Simulation::new`], so schedules stay comparable.
    pub fn with_layout(
        cfg: &ScenarioConfig,
        seed: u64,
        cameras: &[(Position, f64)],
        plan: SinkPlan,
    ) -> Simulation {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let _topology_seed: u64 = master.gen();
        let schedule_seed: u64 = master.gen();
        let mac_seed: u64 = master.gen();
        Simulation::assemble(cfg.clone(), seed, schedule_seed, mac_seed, cameras, plan, true)
    }

    fn assemble(
        cfg: ScenarioConfig,
        seed: u64,
        schedule_seed: u64,
        mac_seed: u64,
        cameras: &[(Position, f64)],
        plan: SinkPlan,
        auto_discovery: bool,
    ) -> Simulation {
        cfg.validate().expect("simulation requires a valid configuration");
        let mut entities = Vec::with_capacity(cameras.len() + 1);
        for (idx, &(pos, los)) in cameras.iter().enumerate() {
            let fov = FieldOfView::new(pos, los, cfg.angle_of_view, cfg.depth_of_view);
            let state = CameraState::new(NodeId(idx as u16), fov, cfg.initial_energy);
            entities.push(Entity::camera(state, cfg.mac.queue_capacity));
        }
        let sink_idx = entities.len();
        entities.push(Entity::sink(SinkState::new(plan), cfg.mac.queue_capacity));

        let t_end = cfg.event_start + cfg.event_window + POST_EVENT_MARGIN + cfg.display_timer;
        let mut sim = Simulation {
            seed,
            queue: EventQueue::new(),
            entities,
            sink_idx,
            transmissions: BTreeMap::new(),
            next_tx_id: 0,
            next_app_token: 1,
            schedule_rng: ChaCha8Rng::seed_from_u64(schedule_seed),
            mac_rng: ChaCha8Rng::seed_from_u64(mac_seed),
            stats: SimStats::default(),
            diag: RunDiagnostics::default(),
            images_attempted: 0,
            fragments_sent: 0,
            image_data: None,
            t_end,
            cfg,
        };
        sim.stats.universe = sim.entities.len();
        sim.stats.sink_disconnected = !sim.all_cameras_reach_sink();
        if auto_discovery {
            for i in 0..sim.sink_idx {
                let jitter = sim.schedule_rng.gen_range(0.0..HELLO_WINDOW);
                sim.queue.schedule(jitter, EventKind::SendHello { entity: i });
            }
            for i in 0..sim.sink_idx {
                let jitter = sim.schedule_rng.gen_range(0.0..1.0);
                sim.queue.schedule(TABLE_TIME + jitter, EventKind::SendTable { entity: i });
            }
            sim.queue.schedule(SETUP_TIME, EventKind::SetupDone);
            sim.queue.schedule(BEACON_START, EventKind::BeaconTick);
        }
        sim
    }

    /// Routes fragments carrying real image bytes instead of the
    /// synthetic uniform fragments of the configured spec.
    pub fn with_image_data(mut self, bytes: Vec<u8>) -> Simulation {
        self.image_data = Some(bytes);
        self
    }

    /// Forces a detection at `node` at time `at`, bypassing sentry
    /// sampling. Used by fixtures and calibration probes.
    pub fn inject_detection(&mut self, node: NodeId, at: f64) {
        self.queue.schedule(at, EventKind::Detection { entity: node.0 as usize });
    }

    /// Drains the timeline, closes open reassembly buffers and
    /// aggregates the run.
    pub fn run(mut self) -> RunOutput {
        while let Some((_, kind)) = self.queue.pop_until(self.t_end) {
            self.stats.events_processed += 1;
            self.dispatch(kind);
        }
        let t_end = self.t_end;
        let (results, delivered) = {
            let sink = self.entities[self.sink_idx].sink_state_mut().expect("sink entity");
            let mut results = std::mem::take(&mut sink.results);
            for buffer in sink.buffers.values_mut() {
                if !buffer.is_finalized() {
                    results.push(buffer.finalize(t_end));
                }
            }
            (results, sink.fragments_accepted)
        };
        self.stats.queue_drops = self.entities.iter().map(|e| e.mac.queue_drops).sum();
        let metrics = aggregate(
            self.cfg.scenario,
            self.seed,
            &results,
            self.images_attempted,
            self.fragments_sent,
            delivered,
            self.cfg.latency_reference,
        );
        RunOutput { metrics, stats: self.stats, diag: self.diag }
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::SendHello { entity } => self.send_hello(entity),
            EventKind::SendTable { entity } => self.send_table(entity),
            EventKind::SetupDone => self.handle_setup(),
            EventKind::BeaconTick => self.beacon_tick(),
            EventKind::MacTimer { entity, token } => self.handle_mac_timer(entity, token),
            EventKind::TxEnd { tx_id } => self.handle_tx_end(tx_id),
            EventKind::AppTimer { entity, token, kind } => {
                self.handle_app_timer(entity, token, kind)
            }
            EventKind::Detection { entity } => self.handle_detection(entity),
            EventKind::DisplayDeadline { image_id } => self.handle_display_deadline(image_id),
        }
    }

    // ---------------------------------------------------------------
    // Radio
    // ---------------------------------------------------------------

    fn entity_position(&self, i: usize, t: f64) -> Position {
        match &self.entities[i].kind {
            EntityKind::Camera(c) => c.position(),
            EntityKind::Sink(s) => s.plan.position_at(t),
        }
    }

    fn all_cameras_reach_sink(&self) -> bool {
        let n = self.entities.len();
        let range_sq = self.cfg.comm_range * self.cfg.comm_range;
        let pos: Vec<Position> = (0..n).map(|i| self.entity_position(i, 0.0)).collect();
        let mut seen = vec![false; n];
        let mut stack = vec![self.sink_idx];
        seen[self.sink_idx] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && pos[u].distance_squared(pos[v]) <= range_sq {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    fn channel_busy(&self, i: usize) -> bool {
        let pos = self.entity_position(i, self.queue.now());
        let range_sq = self.cfg.comm_range * self.cfg.comm_range;
        self.transmissions.values().any(|t| t.sender_pos.distance_squared(pos) <= range_sq)
    }

    /// Puts a frame on the air: captures the in-range receiver set,
    /// corrupts receptions already in progress at those receivers, and
    /// deafens whatever the sender itself was hearing.
    fn start_transmission(&mut self, i: usize, frame: Frame, mac_frame: bool) {
        let now = self.queue.now();
        let sender_pos = self.entity_position(i, now);
        let air = packet::airtime(frame.payload_bytes(), self.cfg.frame_overhead, self.cfg.bitrate);
        let tx_id = self.next_tx_id;
        self.next_tx_id += 1;
        let range_sq = self.cfg.comm_range * self.cfg.comm_range;

        let mut receivers = Vec::new();
        for j in 0..self.entities.len() {
            if j == i {
                continue;
            }
            let pos = self.entity_position(j, now);
            if sender_pos.distance_squared(pos) <= range_sq {
                let deaf = self.entities[j].transmitting_count > 0;
                let collided = !self.entities[j].active_rx.is_empty();
                receivers.push((j, RxFlags { deaf, collided }));
            }
        }
        for &(j, flags) in &receivers {
            if flags.collided {
                let overlapping = self.entities[j].active_rx.clone();
                for old in overlapping {
                    if let Some(t) = self.transmissions.get_mut(&old) {
                        t.corrupt_at(j);
                    }
                }
            }
        }
        for &(j, _) in &receivers {
            self.entities[j].active_rx.push(tx_id);
        }
        let own_rx = self.entities[i].active_rx.clone();
        for old in own_rx {
            if let Some(t) = self.transmissions.get_mut(&old) {
                t.deafen_at(i);
            }
        }
        self.entities[i].transmitting_count += 1;
        if mac_frame {
            self.entities[i].mac.phase = MacPhase::Transmitting { tx_id };
            self.entities[i].mac.bump_token();
        }
        self.transmissions.insert(tx_id, Transmission { sender: i, sender_pos, frame, mac_frame, receivers });
        self.queue.schedule(now + air, EventKind::TxEnd { tx_id });
    }

    fn handle_tx_end(&mut self, tx_id: u64) {
        let tx = self
            .transmissions
            .remove(&tx_id)
            .expect("transmission records live until their end event");
        self.entities[tx.sender].transmitting_count -= 1;
        self.stats.frames_sent += 1;
        self.stats.rx_out_of_range += (self.entities.len() - 1 - tx.receivers.len()) as u64;
        for &(j, _) in &tx.receivers {
            self.entities[j].active_rx.retain(|&id| id != tx_id);
        }
        for &(j, flags) in &tx.receivers {
            if flags.deaf {
                self.stats.rx_deaf += 1;
            } else if flags.collided {
                self.stats.rx_collision += 1;
            } else {
                self.stats.rx_ok += 1;
                self.deliver_frame(j, tx.frame.clone(), tx.sender);
            }
        }
        if tx.mac_frame {
            if tx.frame.wants_ack() {
                self.entities[tx.sender].mac.phase = MacPhase::AwaitAck;
                self.arm_mac_timer(tx.sender, self.ack_timeout());
            } else {
                self.finish_current(tx.sender, true);
            }
        }
    }

    // ---------------------------------------------------------------
    // MAC machine
    // ---------------------------------------------------------------

    fn ack_timeout(&self) -> f64 {
        ACK_TURNAROUND
            + packet::airtime(ACK_BYTES, self.cfg.frame_overhead, self.cfg.bitrate)
            + self.cfg.mac.backoff_slot
    }

    /// Queues a frame for CSMA transmission; kicks the machine when idle.
    fn enqueue_frame(&mut self, i: usize, frame: Frame) -> bool {
        let accepted = self.entities[i].mac.enqueue(frame);
        if accepted && self.entities[i].mac.current.is_none() {
            self.mac_start_attempt(i);
        }
        accepted
    }

    fn mac_start_attempt(&mut self, i: usize) {
        let frame = match self.entities[i].mac.queue.pop_front() {
            Some(f) => f,
            None => {
                self.entities[i].mac.phase = MacPhase::Idle;
                return;
            }
        };
        self.entities[i].mac.current = Some(Outgoing {
            frame,
            retries_left: self.cfg.mac.max_retries,
            backoff_exp: 3u32.min(self.cfg.mac.max_backoff_exponent),
        });
        self.entities[i].mac.phase = MacPhase::Cca;
        self.arm_mac_timer(i, self.cfg.mac.cca_duration);
    }

    fn arm_mac_timer(&mut self, i: usize, delay: f64) {
        let token = self.entities[i].mac.bump_token();
        let now = self.queue.now();
        self.queue.schedule(now + delay, EventKind::MacTimer { entity: i, token });
    }

    fn begin_backoff(&mut self, i: usize) {
        let delay = {
            let out = self.entities[i].mac.current.as_mut().expect("backoff needs a frame");
            let exponent = out.backoff_exp;
            out.backoff_exp = (exponent + 1).min(self.cfg.mac.max_backoff_exponent);
            let slots = self.mac_rng.gen_range(0..(1u64 << exponent));
            slots as f64 * self.cfg.mac.backoff_slot
        };
        self.entities[i].mac.phase = MacPhase::Backoff;
        self.arm_mac_timer(i, delay);
    }

    fn handle_mac_timer(&mut self, i: usize, token: u64) {
        if self.entities[i].mac.token != token {
            return;
        }
        match self.entities[i].mac.phase {
            MacPhase::Cca => {
                if self.channel_busy(i) {
                    self.stats.cca_busy += 1;
                    self.begin_backoff(i);
                } else {
                    let frame = self.entities[i]
                        .mac
                        .current
                        .as_ref()
                        .expect("clear-channel check needs a frame")
                        .frame
                        .clone();
                    self.start_transmission(i, frame, true);
                }
            }
            MacPhase::Backoff => {
                self.entities[i].mac.phase = MacPhase::Cca;
                self.arm_mac_timer(i, self.cfg.mac.cca_duration);
            }
            MacPhase::AwaitAck => {
                let out = self.entities[i].mac.current.as_mut().expect("awaiting ack needs a frame");
                if out.retries_left == 0 {
                    self.stats.mac_failures += 1;
                    self.finish_current(i, false);
                } else {
                    out.retries_left -= 1;
                    self.begin_backoff(i);
                }
            }
            MacPhase::Idle | MacPhase::Transmitting { .. } => {}
        }
    }

    /// Retires the frame in flight and pulls the next one.
    fn finish_current(&mut self, i: usize, delivered: bool) {
        let frame = self.entities[i].mac.current.take().expect("retiring needs a frame").frame;
        self.entities[i].mac.phase = MacPhase::Idle;
        self.entities[i].mac.bump_token();
        self.app_tx_done(i, &frame, delivered);
        if self.entities[i].mac.current.is_none() && !self.entities[i].mac.queue.is_empty() {
            self.mac_start_attempt(i);
        }
    }

    fn handle_ack(&mut self, i: usize, from: Addr, for_seq: u64) {
        let matches = match (&self.entities[i].mac.phase, &self.entities[i].mac.current) {
            (MacPhase::AwaitAck, Some(out)) => {
                out.frame.seq == for_seq && out.frame.dst == from
            }
            _ => false,
        };
        if matches {
            self.finish_current(i, true);
        }
    }

    /// MAC completion callback: sources pace their burst off it.
    fn app_tx_done(&mut self, i: usize, _frame: &Frame, _delivered: bool) {
        if self.entities[i].camera_state().is_some() {
            self.try_offer_fragment(i);
        }
    }

    // ---------------------------------------------------------------
    // Frame delivery
    // ---------------------------------------------------------------

    fn deliver_frame(&mut self, j: usize, frame: Frame, sender: usize) {
        let addressed = frame.dst == Addr::Broadcast || frame.dst == self.entities[j].addr;
        if !addressed {
            return;
        }
        if let FrameKind::Ack { for_seq } = frame.kind {
            self.handle_ack(j, frame.src, for_seq);
            return;
        }
        if frame.wants_ack() {
            // Acknowledge even duplicates: the previous ack may be the
            // reason the sender retried.
            let now = self.queue.now();
            self.queue.schedule(
                now + ACK_TURNAROUND,
                EventKind::AppTimer {
                    entity: j,
                    token: 0,
                    kind: AppTimerKind::SendAck { to: sender, for_seq: frame.seq },
                },
            );
        }
        let last = self.entities[j].last_rx_seq.get(&frame.src).copied();
        if last.is_some_and(|l| frame.seq <= l) {
            return;
        }
        self.entities[j].last_rx_seq.insert(frame.src, frame.seq);
        self.dispatch_app_frame(j, frame);
    }

    fn dispatch_app_frame(&mut self, j: usize, frame: Frame) {
        let src = frame.src;
        match frame.kind {
            FrameKind::Hello { record } => {
                if let Some(cam) = self.entities[j].camera_state_mut() {
                    cam.table.record_hello(record);
                }
            }
            FrameKind::Table { records } => {
                if let Addr::Node(from) = src {
                    if let Some(cam) = self.entities[j].camera_state_mut() {
                        cam.table.record_table(from, &records);
                    }
                }
            }
            FrameKind::Beacon { beacon_seq, pos } => self.handle_beacon(j, beacon_seq, pos),
            FrameKind::InfoRequest => self.handle_info_request(j, src),
            FrameKind::InfoReply { forwarders, two_hop_forwarders, residual_energy, capture_rate } => {
                if let Addr::Node(member) = src {
                    let info = MemberInfo {
                        forwarders: forwarders as usize,
                        two_hop_forwarders: two_hop_forwarders as usize,
                        residual_energy,
                        capture_rate,
                    };
                    self.handle_info_reply(j, member, info);
                }
            }
            FrameKind::Activate => {
                if self.entities[j].camera_state().is_some() {
                    self.queue_images(j, self.cfg.images_per_burst);
                }
            }
            FrameKind::FragmentData { header, fragment, burst_start, origin } => {
                if self.entities[j].sink_state().is_some() {
                    self.sink_receive_fragment(fragment, burst_start);
                } else {
                    self.camera_forward(j, header, fragment, burst_start, origin, src);
                }
            }
            FrameKind::Ack { .. } => unreachable!("acks are consumed before app dispatch"),
        }
    }

    fn handle_beacon(&mut self, j: usize, seq: u64, pos: Position) {
        let fresh = {
            let cam = match self.entities[j].camera_state_mut() {
                Some(c) => c,
                None => return,
            };
            if cam.last_beacon_seq.is_some_and(|s| seq <= s) {
                false
            } else {
                cam.last_beacon_seq = Some(seq);
                cam.sink_pos = Some(pos);
                true
            }
        };
        if fresh {
            // Flood once per beacon generation, after a short jitter so
            // a neighborhood does not re-broadcast in lockstep.
            let jitter = self.mac_rng.gen_range(0.0..FLOOD_JITTER);
            let now = self.queue.now();
            self.queue.schedule(
                now + jitter,
                EventKind::AppTimer {
                    entity: j,
                    token: 0,
                    kind: AppTimerKind::FloodBeacon { seq, pos },
                },
            );
        }
    }

    fn handle_info_request(&mut self, j: usize, requester: Addr) {
        let reply = {
            let cam = match self.entities[j].camera_state() {
                Some(c) => c,
                None => return,
            };
            let (f_count, f2_count) = match cam.sink_pos {
                Some(sink) => (
                    forwarders(&cam.table, cam.position(), sink).len() as u32,
                    forwarders2_union(&cam.table, cam.position(), sink).len() as u32,
                ),
                None => (0, 0),
            };
            Frame {
                src: Addr::Node(cam.id),
                dst: requester,
                seq: 0,
                kind: FrameKind::InfoReply {
                    forwarders: f_count,
                    two_hop_forwarders: f2_count,
                    residual_energy: cam.energy,
                    capture_rate: self.cfg.capture_rate,
                },
            }
        };
        self.enqueue_frame(j, reply);
    }

    fn handle_info_reply(&mut self, j: usize, member: NodeId, info: MemberInfo) {
        let all_in = {
            let cam = match self.entities[j].camera_state_mut() {
                Some(c) => c,
                None => return,
            };
            match cam.selection.as_mut() {
                Some(sel) if !sel.decided => {
                    sel.info.insert(member, info);
                    sel.awaiting.remove(&member);
                    sel.awaiting.is_empty()
                }
                _ => return,
            }
        };
        if all_in {
            self.decide_selection(j);
        }
    }

    fn handle_app_timer(&mut self, entity: usize, token: u64, kind: AppTimerKind) {
        match kind {
            AppTimerKind::InfoTimeout => {
                enum Action {
                    Ignore,
                    Decide,
                    ReRequest(Vec<NodeId>),
                }
                let action = {
                    match self.entities[entity].camera_state_mut().and_then(|c| c.selection.as_mut())
                    {
                        Some(sel) if sel.token == token && !sel.decided => {
                            if !sel.re_requested && !sel.awaiting.is_empty() {
                                sel.re_requested = true;
                                Action::ReRequest(sel.awaiting.iter().copied().collect())
                            } else {
                                Action::Decide
                            }
                        }
                        _ => Action::Ignore,
                    }
                };
                match action {
                    Action::Ignore => {}
                    Action::Decide => self.decide_selection(entity),
                    Action::ReRequest(silent) => {
                        // One more chance for members whose replies were
                        // lost; the decision waits out a second timeout.
                        let owner = self.entities[entity].addr;
                        for m in silent {
                            let frame = Frame {
                                src: owner,
                                dst: Addr::Node(m),
                                seq: 0,
                                kind: FrameKind::InfoRequest,
                            };
                            self.enqueue_frame(entity, frame);
                        }
                        let now = self.queue.now();
                        self.queue.schedule(
                            now + self.cfg.info_timeout,
                            EventKind::AppTimer {
                                entity,
                                token,
                                kind: AppTimerKind::InfoTimeout,
                            },
                        );
                    }
                }
            }
            AppTimerKind::FloodBeacon { seq, pos } => {
                let current = self.entities[entity]
                    .camera_state()
                    .is_some_and(|c| c.last_beacon_seq == Some(seq));
                if current {
                    let src = self.entities[entity].addr;
                    let frame = Frame {
                        src,
                        dst: Addr::Broadcast,
                        seq: 0,
                        kind: FrameKind::Beacon { beacon_seq: seq, pos },
                    };
                    self.enqueue_frame(entity, frame);
                }
            }
            AppTimerKind::SendAck { to, for_seq } => {
                if self.entities[entity].transmitting_count > 0 {
                    // The radio is talking; the sender will retry.
                    return;
                }
                let src = self.entities[entity].addr;
                let dst = self.entities[to].addr;
                let seq = {
                    let mac = &mut self.entities[entity].mac;
                    let s = mac.next_seq;
                    mac.next_seq += 1;
                    s
                };
                let frame = Frame { src, dst, seq, kind: FrameKind::Ack { for_seq } };
                self.start_transmission(entity, frame, false);
            }
        }
    }

    // ---------------------------------------------------------------
    // Discovery and setup
    // ---------------------------------------------------------------

    fn send_hello(&mut self, i: usize) {
        let frame = {
            let cam = match self.entities[i].camera_state() {
                Some(c) => c,
                None => return,
            };
            Frame {
                src: Addr::Node(cam.id),
                dst: Addr::Broadcast,
                seq: 0,
                kind: FrameKind::Hello {
                    record: NeighborRecord::new(cam.id, cam.position(), &cam.fov, cam.energy),
                },
            }
        };
        self.enqueue_frame(i, frame);
    }

    fn send_table(&mut self, i: usize) {
        let frame = {
            let cam = match self.entities[i].camera_state() {
                Some(c) => c,
                None => return,
            };
            let records: Vec<NeighborRecord> = cam.table.one_hop().values().copied().collect();
            Frame {
                src: Addr::Node(cam.id),
                dst: Addr::Broadcast,
                seq: 0,
                kind: FrameKind::Table { records },
            }
        };
        self.enqueue_frame(i, frame);
    }

    /// Discovery is over: derive planar graphs and cover sets from the
    /// tables as they stand, then sample sentries and their detection
    /// times. Runs identically for every scenario.
    fn handle_setup(&mut self) {
        for i in 0..self.sink_idx {
            let max_card = self.cfg.max_cover_cardinality;
            let spacing = self.cfg.sample_spacing;
            let cam = self.entities[i].camera_state_mut().expect("camera index");
            cam.planar = gabriel_planarize(&cam.table, cam.position());
            let neighbor_fovs: BTreeMap<NodeId, FieldOfView> =
                cam.table.one_hop().iter().map(|(&id, r)| (id, r.fov())).collect();
            cam.cover_sets =
                enumerate_cover_sets(cam.id, &cam.fov, &neighbor_fovs, max_card, spacing)
                    .expect("deployed fields of view are valid");
        }
        self.diag.topology_digest = self.digest_topology();
        self.diag.tables_digest = self.digest_tables();

        let mut eligible: Vec<usize> = (0..self.sink_idx)
            .filter(|&i| {
                self.entities[i]
                    .camera_state()
                    .expect("camera index")
                    .cover_sets
                    .iter()
                    .any(|s| s.cardinality() >= 2)
            })
            .collect();
        self.diag.eligible_count = eligible.len();
        let count = if eligible.is_empty() || self.cfg.sentry_fraction <= 0.0 {
            0
        } else {
            let want = (self.cfg.sentry_fraction * eligible.len() as f64).round() as usize;
            want.clamp(1, eligible.len())
        };
        for k in 0..count {
            let j = self.schedule_rng.gen_range(k..eligible.len());
            eligible.swap(k, j);
        }
        let mut chosen = eligible[..count].to_vec();
        chosen.sort_unstable();
        for &i in &chosen {
            let t = if self.cfg.event_window > 0.0 {
                self.cfg.event_start + self.schedule_rng.gen_range(0.0..self.cfg.event_window)
            } else {
                self.cfg.event_start
            };
            let cam = self.entities[i].camera_state_mut().expect("camera index");
            cam.is_sentry = true;
            let id = cam.id;
            self.diag.sentries.push(id);
            self.diag.detection_schedule.push((id, t));
            self.queue.schedule(t, EventKind::Detection { entity: i });
        }
    }

    fn digest_topology(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for e in &self.entities {
            match &e.kind {
                EntityKind::Camera(c) => {
                    c.id.0.hash(&mut h);
                    c.fov.apex.x.to_bits().hash(&mut h);
                    c.fov.apex.y.to_bits().hash(&mut h);
                    c.fov.line_of_sight.to_bits().hash(&mut h);
                }
                EntityKind::Sink(s) => {
                    for w in &s.plan.waypoints {
                        w.x.to_bits().hash(&mut h);
                        w.y.to_bits().hash(&mut h);
                    }
                }
            }
        }
        h.finish()
    }

    fn digest_tables(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for e in &self.entities {
            if let Some(cam) = e.camera_state() {
                cam.id.0.hash(&mut h);
                for (&id, record) in cam.table.one_hop() {
                    id.0.hash(&mut h);
                    record.position.x.to_bits().hash(&mut h);
                    record.position.y.to_bits().hash(&mut h);
                }
                u16::MAX.hash(&mut h);
                for (&via, records) in cam.table.two_hop() {
                    via.0.hash(&mut h);
                    for record in records {
                        record.id.0.hash(&mut h);
                    }
                }
            }
        }
        h.finish()
    }

    fn beacon_tick(&mut self) {
        let now = self.queue.now();
        let frame = {
            let sink = self.entities[self.sink_idx].sink_state_mut().expect("sink entity");
            sink.beacon_seq += 1;
            Frame {
                src: Addr::Sink,
                dst: Addr::Broadcast,
                seq: 0,
                kind: FrameKind::Beacon {
                    beacon_seq: sink.beacon_seq,
                    pos: sink.plan.position_at(now),
                },
            }
        };
        self.enqueue_frame(self.sink_idx, frame);
        let next = now + self.cfg.beacon_period;
        if next <= self.t_end {
            self.queue.schedule(next, EventKind::BeaconTick);
        }
    }

    // ---------------------------------------------------------------
    // Detections, selection and bursts
    // ---------------------------------------------------------------

    fn handle_detection(&mut self, i: usize) {
        if self.entities[i].camera_state().is_none() {
            return;
        }
        // The detecting node always sends its own images, one per unit
        // of capture rate; the policy only decides which cover set
        // joins in (members each contribute images_per_burst).
        let own_images = (self.cfg.capture_rate.round() as u32).max(1);
        self.queue_images(i, own_images);
        match self.cfg.scenario {
            1 => {
                let first = self.entities[i]
                    .camera_state()
                    .expect("camera index")
                    .cover_sets
                    .iter()
                    .find(|s| !s.is_trivial())
                    .cloned();
                if let Some(set) = first {
                    self.activate_members(i, &set);
                }
            }
            _ => self.begin_selection(i),
        }
    }

    /// Scenarios 2 and 3: ask every candidate member for its forwarding
    /// picture, then decide when all replies are in or the timeout fires.
    fn begin_selection(&mut self, i: usize) {
        let token = self.next_app_token;
        self.next_app_token += 1;
        let (owner, members) = {
            let cam = self.entities[i].camera_state_mut().expect("camera index");
            let candidates: Vec<CoverSet> =
                cam.cover_sets.iter().filter(|s| !s.is_trivial()).cloned().collect();
            if candidates.is_empty() {
                return;
            }
            let mut awaiting = BTreeSet::new();
            for set in &candidates {
                awaiting.extend(set.members.iter().copied());
            }
            let members: Vec<NodeId> = awaiting.iter().copied().collect();
            cam.selection = Some(SelectionState {
                candidates,
                awaiting,
                info: BTreeMap::new(),
                token,
                decided: false,
                re_requested: false,
            });
            (cam.id, members)
        };
        for m in members {
            let frame = Frame {
                src: Addr::Node(owner),
                dst: Addr::Node(m),
                seq: 0,
                kind: FrameKind::InfoRequest,
            };
            self.enqueue_frame(i, frame);
        }
        let now = self.queue.now();
        self.queue.schedule(
            now + self.cfg.info_timeout,
            EventKind::AppTimer { entity: i, token, kind: AppTimerKind::InfoTimeout },
        );
    }

    fn decide_selection(&mut self, i: usize) {
        let (owner, candidates, info) = {
            let cam = match self.entities[i].camera_state_mut() {
                Some(c) => c,
                None => return,
            };
            let sel = match cam.selection.as_mut() {
                Some(s) if !s.decided => s,
                _ => return,
            };
            sel.decided = true;
            (cam.id, sel.candidates.clone(), sel.info.clone())
        };
        let weights = SelectionWeights::new(self.cfg.alpha, self.cfg.beta)
            .expect("weights validated with the configuration");
        let mut scored = Vec::new();
        for set in &candidates {
            let mut candidate = set.clone();
            // Members that never replied leave the candidate unscorable;
            // it simply drops out of the running.
            if score_cover_set(&mut candidate, &info, &weights, self.cfg.path_factor).is_ok() {
                scored.push(candidate);
            }
        }
        let chosen = select_cover_set(owner, &scored, self.cfg.energy_floor);
        if !chosen.is_trivial() {
            self.activate_members(i, &chosen);
        }
    }

    fn activate_members(&mut self, i: usize, set: &CoverSet) {
        let owner = self.entities[i].camera_state().expect("camera index").id;
        self.diag.activations.push((owner, set.members.clone()));
        for &m in &set.members {
            if m == owner {
                continue;
            }
            let frame = Frame {
                src: Addr::Node(owner),
                dst: Addr::Node(m),
                seq: 0,
                kind: FrameKind::Activate,
            };
            self.enqueue_frame(i, frame);
        }
    }

    fn queue_images(&mut self, i: usize, n: u32) {
        self.images_attempted += n;
        self.entities[i].camera_state_mut().expect("camera index").burst.pending_images += n;
        self.try_offer_fragment(i);
    }

    fn start_next_image(&mut self, i: usize) -> bool {
        let now = self.queue.now();
        let (id, serial, pos, sink_pos) = {
            let cam = self.entities[i].camera_state_mut().expect("camera index");
            if cam.burst.pending_images == 0 {
                return false;
            }
            cam.burst.pending_images -= 1;
            let serial = cam.images_started;
            cam.images_started += 1;
            (cam.id, serial, cam.position(), cam.sink_pos)
        };
        let image_id = ((id.0 as u64) << 32) | serial as u64;
        let fragments = match &self.image_data {
            Some(bytes) => fragment_bytes(image_id, bytes, self.cfg.image.payload_size)
                .expect("image bytes validated at load"),
            None => fragment(&self.cfg.image, image_id).expect("image spec validated"),
        };
        let n_paths = nb_optimal_paths(&PathRequirement {
            capture_rate: self.cfg.capture_rate,
            path_factor: self.cfg.path_factor,
        })
        .expect("path requirement validated");
        // Multi-path pairs are chosen once per image; temporary
        // destinations spread over fragments round-robin.
        let pairs = match (self.cfg.routing_protocol(), sink_pos) {
            (RoutingProtocol::Tgpsr, Some(sink)) => {
                let cam = self.entities[i].camera_state().expect("camera index");
                tgpsr_select_paths(&cam.table, pos, sink, n_paths)
            }
            _ => Vec::new(),
        };
        let cam = self.entities[i].camera_state_mut().expect("camera index");
        cam.burst.active =
            Some(ActiveImage { image_id, burst_start: now, fragments, cursor: 0, n_paths, pairs });
        true
    }

    /// Source pacing: one fragment is offered to the MAC per completed
    /// transmission, so a burst never floods its own queue.
    fn try_offer_fragment(&mut self, i: usize) {
        enum Offer {
            Wait,
            ImageDone,
            SourceDrop,
            Send(Frame),
        }
        loop {
            let needs_start = match self.entities[i].camera_state() {
                Some(c) => c.burst.active.is_none(),
                None => return,
            };
            if needs_start && !self.start_next_image(i) {
                return;
            }
            let action = {
                let protocol = self.cfg.routing_protocol();
                let comm_range = self.cfg.comm_range;
                let ent = &mut self.entities[i];
                let has_room = ent.mac.has_room();
                let cam = match &mut ent.kind {
                    EntityKind::Camera(c) => c,
                    EntityKind::Sink(_) => return,
                };
                let img = cam.burst.active.as_ref().expect("image in flight");
                if img.cursor >= img.fragments.len() {
                    Offer::ImageDone
                } else if !has_room {
                    Offer::Wait
                } else {
                    let frag = img.fragments[img.cursor].clone();
                    match cam.sink_pos {
                        None => Offer::SourceDrop,
                        Some(sink) => {
                            let mut header = RoutingHeader::new(protocol, sink, img.n_paths);
                            let dst = if !img.pairs.is_empty() {
                                let (relay, temp) = img.pairs[img.cursor % img.pairs.len()];
                                let temp_pos = known_position(&cam.table, temp)
                                    .expect("path pairs name known nodes");
                                header.mode = RoutingMode::TwoHopGreedy;
                                header.relay = Some(relay);
                                header.temp_dest = Some((temp, temp_pos));
                                Some(Addr::Node(relay))
                            } else {
                                let ctx = RouterContext {
                                    id: cam.id,
                                    position: cam.position(),
                                    comm_range,
                                    table: &cam.table,
                                    planar: &cam.planar,
                                };
                                match forward(&ctx, &mut header, None, img.cursor as u64) {
                                    ForwardDecision::Transmit(n) => Some(Addr::Node(n)),
                                    ForwardDecision::DeliverToSink => Some(Addr::Sink),
                                    ForwardDecision::Drop(_) => None,
                                }
                            };
                            match dst {
                                Some(dst) => Offer::Send(Frame {
                                    src: Addr::Node(cam.id),
                                    dst,
                                    seq: 0,
                                    kind: FrameKind::FragmentData {
                                        header,
                                        fragment: frag,
                                        burst_start: img.burst_start,
                                        origin: cam.id,
                                    },
                                }),
                                None => Offer::SourceDrop,
                            }
                        }
                    }
                }
            };
            match action {
                Offer::Wait => return,
                Offer::ImageDone => {
                    self.entities[i].camera_state_mut().expect("camera index").burst.active = None;
                }
                Offer::SourceDrop => {
                    self.stats.routing_drops += 1;
                    self.fragments_sent += 1;
                    self.entities[i]
                        .camera_state_mut()
                        .expect("camera index")
                        .burst
                        .active
                        .as_mut()
                        .expect("image in flight")
                        .cursor += 1;
                }
                Offer::Send(frame) => {
                    self.fragments_sent += 1;
                    self.entities[i]
                        .camera_state_mut()
                        .expect("camera index")
                        .burst
                        .active
                        .as_mut()
                        .expect("image in flight")
                        .cursor += 1;
                    self.enqueue_frame(i, frame);
                    return;
                }
            }
        }
    }

    // ---------------------------------------------------------------
    // Fragment transport
    // ---------------------------------------------------------------

    fn camera_forward(
        &mut self,
        j: usize,
        mut header: RoutingHeader,
        fragment: Fragment,
        burst_start: f64,
        origin: NodeId,
        src: Addr,
    ) {
        let arrival = match src {
            Addr::Node(id) => Some(id),
            _ => None,
        };
        let decision = {
            let cam = self.entities[j].camera_state().expect("camera index");
            let ctx = RouterContext {
                id: cam.id,
                position: cam.position(),
                comm_range: self.cfg.comm_range,
                table: &cam.table,
                planar: &cam.planar,
            };
            forward(&ctx, &mut header, arrival, fragment.index as u64)
        };
        let dst = match decision {
            ForwardDecision::Transmit(n) => Addr::Node(n),
            ForwardDecision::DeliverToSink => Addr::Sink,
            ForwardDecision::Drop(_) => {
                self.stats.routing_drops += 1;
                return;
            }
        };
        let own = self.entities[j].addr;
        let frame = Frame {
            src: own,
            dst,
            seq: 0,
            kind: FrameKind::FragmentData { header, fragment, burst_start, origin },
        };
        self.enqueue_frame(j, frame);
    }

    fn sink_receive_fragment(&mut self, fragment: Fragment, burst_start: f64) {
        let now = self.queue.now();
        let display_timer = self.cfg.display_timer;
        let mut deadline_to_arm = None;
        {
            let sink = self.entities[self.sink_idx].sink_state_mut().expect("sink entity");
            let buffer = sink.buffers.entry(fragment.image_id).or_insert_with(|| {
                ReassemblyBuffer::new(fragment.image_id, fragment.total, burst_start, display_timer)
            });
            let fresh = buffer.deadline().is_none();
            match buffer.on_fragment(fragment.index, now) {
                FragmentDisposition::Accepted => {
                    sink.fragments_accepted += 1;
                    if fresh {
                        deadline_to_arm =
                            Some(buffer.deadline().expect("first acceptance arms the deadline"));
                    }
                    if buffer.is_complete() && !buffer.is_finalized() {
                        let result = buffer.finalize(now);
                        sink.results.push(result);
                    }
                }
                FragmentDisposition::Duplicate => sink.duplicate_fragments += 1,
                FragmentDisposition::Late => sink.late_fragments += 1,
            }
        }
        if let Some(t) = deadline_to_arm {
            self.queue.schedule(t, EventKind::DisplayDeadline { image_id: fragment.image_id });
        }
    }

    fn handle_display_deadline(&mut self, image_id: u64) {
        let now = self.queue.now();
        let sink = self.entities[self.sink_idx].sink_state_mut().expect("sink entity");
        if let Some(buffer) = sink.buffers.get_mut(&image_id) {
            if !buffer.is_finalized() {
                let result = buffer.finalize(now);
                sink.results.push(result);
            }
        }
    }
}
