//! Geographic routing toward a known sink position.
//!
//! Packets carry their destination coordinates and are forwarded with
//! position information only. Greedy mode hands the packet to the
//! neighbor closest to the destination; where greedy strands, perimeter
//! mode walks faces of the Gabriel-planarized neighbor graph with the
//! right-hand rule until it finds a node closer than where greedy
//! failed. The two-hop variant picks relay and temporary-destination
//! pairs from the 2-hop forwarder set and spreads a fragment stream
//! across several such paths, re-deciding every two hops.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::geometry::Position;
use crate::neighborhood::{forwarders, forwarders2, NeighborRecord, NeighborTable};
use crate::NodeId;

/// Forwarding discipline a packet was launched with.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RoutingProtocol {
    /// Greedy with perimeter recovery.
    Gpsr,
    /// Two-hop multi-path on top of greedy and perimeter.
    Tgpsr,
}

/// Mode the packet is currently forwarded under.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RoutingMode {
    TwoHopGreedy,
    Greedy,
    Perimeter,
}

/// Why the routing layer gave up on a packet.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DropCause {
    /// The holder has no neighbors to pass the packet to.
    Isolated,
    /// The perimeter walk came back to its first edge without progress.
    PerimeterLoop,
    /// A relay no longer hears the chosen temporary destination.
    TempDestGone,
}

/// Book-keeping for a perimeter walk.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct PerimeterState {
    /// Position of the node where greedy failed.
    pub entry_point: Position,
    /// Crossing point at which the current face was entered.
    pub face_entry: Position,
    /// First directed edge walked on the current face.
    pub first_edge: (NodeId, NodeId),
}

/// Routing fields carried by every data packet.
#[derive(Clone, PartialEq, Debug)]
pub struct RoutingHeader {
    /// Sink position the source stamped on the packet.
    pub final_dest: Position,
    pub protocol: RoutingProtocol,
    pub mode: RoutingMode,
    /// Relay of the two-hop leg in flight, if any.
    pub relay: Option<NodeId>,
    /// Temporary destination of the two-hop leg in flight.
    pub temp_dest: Option<(NodeId, Position)>,
    /// Number of parallel paths the source asked for.
    pub n_paths: u32,
    pub perimeter: Option<PerimeterState>,
}

impl RoutingHeader {
    pub fn new(protocol: RoutingProtocol, final_dest: Position, n_paths: u32) -> Self {
        let mode = match protocol {
            RoutingProtocol::Gpsr => RoutingMode::Greedy,
            RoutingProtocol::Tgpsr => RoutingMode::TwoHopGreedy,
        };
        RoutingHeader {
            final_dest,
            protocol,
            mode,
            relay: None,
            temp_dest: None,
            n_paths: n_paths.max(1),
            perimeter: None,
        }
    }
}

/// Planar subset of a node's 1-hop neighbors, sorted by id.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct PlanarNeighborSet {
    pub owner: NodeId,
    pub neighbors: Vec<(NodeId, Position)>,
}

impl PlanarNeighborSet {
    pub fn position_of(&self, id: NodeId) -> Option<Position> {
        self.neighbors.iter().find(|(n, _)| *n == id).map(|(_, p)| *p)
    }
}

/// Keeps the edge to a neighbor only when no other neighbor sits
/// strictly inside the circle whose diameter is that edge. On symmetric
/// tables this yields the Gabriel graph restricted to the radio range,
/// which is planar and keeps a connected graph connected.
pub fn gabriel_planarize(table: &NeighborTable, self_pos: Position) -> PlanarNeighborSet {
    let mut kept = Vec::new();
    for (&id, rec) in table.one_hop() {
        let edge = self_pos.distance_squared(rec.position);
        let witnessed = table.one_hop().values().any(|w| {
            w.id != id
                && self_pos.distance_squared(w.position) + rec.position.distance_squared(w.position)
                    < edge
        });
        if !witnessed {
            kept.push((id, rec.position));
        }
    }
    PlanarNeighborSet { owner: table.owner(), neighbors: kept }
}

/// Neighbor strictly closer to `dest` than the node itself and closest
/// to `dest` overall; distance ties fall to the lowest node id.
pub fn greedy_next_hop(
    table: &NeighborTable,
    self_pos: Position,
    dest: Position,
) -> Option<NodeId> {
    let own = self_pos.distance_squared(dest);
    table
        .one_hop()
        .values()
        .filter(|r| r.position.distance_squared(dest) < own)
        .min_by(|a, b| {
            a.position
                .distance_squared(dest)
                .total_cmp(&b.position.distance_squared(dest))
                .then(a.id.cmp(&b.id))
        })
        .map(|r| r.id)
}

/// Relay and temporary-destination pairs for a two-hop dispatch: the
/// deduplicated 2-hop forwarders ranked by distance to `dest`, each
/// matched with a 1-hop forwarder that hears it, preferring relays not
/// already claimed by an earlier pair. Returns at most `n_paths` pairs.
pub fn tgpsr_select_paths(
    table: &NeighborTable,
    self_pos: Position,
    dest: Position,
    n_paths: u32,
) -> Vec<(NodeId, NodeId)> {
    let relays = forwarders(table, self_pos, dest);

    // Candidate temporary destinations with the relays that reach them.
    let mut reachable: BTreeMap<NodeId, (Position, Vec<NodeId>)> = BTreeMap::new();
    for &relay in &relays {
        let Ok(twos) = forwarders2(table, self_pos, relay, dest) else { continue };
        for id in twos {
            let pos = table
                .two_hop()
                .get(&relay)
                .and_then(|list| list.iter().find(|r| r.id == id))
                .map(|r| r.position)
                .expect("2-hop forwarders come from the relay's stored list");
            reachable.entry(id).or_insert_with(|| (pos, Vec::new())).1.push(relay);
        }
    }

    let mut ranked: Vec<(NodeId, Position, Vec<NodeId>)> = reachable
        .into_iter()
        .map(|(id, (pos, vias))| (id, pos, vias))
        .collect();
    ranked.sort_by(|a, b| {
        a.1.distance_squared(dest)
            .total_cmp(&b.1.distance_squared(dest))
            .then(a.0.cmp(&b.0))
    });

    let mut used: BTreeMap<NodeId, u32> = BTreeMap::new();
    let mut pairs = Vec::new();
    for (temp, _, vias) in ranked {
        if pairs.len() as u32 == n_paths {
            break;
        }
        let relay = vias
            .iter()
            .min_by_key(|&&v| (used.get(&v).copied().unwrap_or(0), v))
            .copied()
            .expect("every candidate has at least one relay");
        *used.entry(relay).or_insert(0) += 1;
        pairs.push((relay, temp));
    }
    pairs
}

/// Everything the forwarding decision may consult about the holder.
pub struct RouterContext<'a> {
    pub id: NodeId,
    pub position: Position,
    pub comm_range: f64,
    pub table: &'a NeighborTable,
    pub planar: &'a PlanarNeighborSet,
}

/// Outcome of one forwarding decision.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ForwardDecision {
    /// Hand the packet to this neighbor.
    Transmit(NodeId),
    /// The sink is within radio range; transmit to it directly.
    DeliverToSink,
    Drop(DropCause),
}

fn angle(from: Position, to: Position) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

/// First planar neighbor counterclockwise from the reference angle.
/// A neighbor exactly on the reference ray counts as a full turn, so
/// the arrival edge is only ever re-used as a last resort.
fn right_hand_neighbor(
    planar: &PlanarNeighborSet,
    self_pos: Position,
    ref_angle: f64,
) -> Option<NodeId> {
    planar
        .neighbors
        .iter()
        .map(|&(id, pos)| {
            let mut delta = (angle(self_pos, pos) - ref_angle).rem_euclid(TAU);
            if delta < 1e-12 {
                delta = TAU;
            }
            (delta, id)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Proper intersection point of segments `a0a1` and `b0b1`, if any.
/// Collinear overlaps report no intersection.
fn segment_intersection(a0: Position, a1: Position, b0: Position, b1: Position) -> Option<Position> {
    let r = (a1.x - a0.x, a1.y - a0.y);
    let s = (b1.x - b0.x, b1.y - b0.y);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let qp = (b0.x - a0.x, b0.y - a0.y);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(Position::new(a0.x + t * r.0, a0.y + t * r.1))
    } else {
        None
    }
}

/// Decides the next action for a packet held by `ctx`, updating the
/// header in place. `arrival` names the neighbor the packet came from,
/// if any; `frag_index` drives the round-robin spread of a fragment
/// stream over the selected two-hop paths.
pub fn forward(
    ctx: &RouterContext<'_>,
    header: &mut RoutingHeader,
    arrival: Option<NodeId>,
    frag_index: u64,
) -> ForwardDecision {
    if ctx.position.distance(header.final_dest) <= ctx.comm_range {
        return ForwardDecision::DeliverToSink;
    }

    // Relay leg of a two-hop dispatch: one blind transmit, no routing
    // work beyond checking that the target is still a neighbor.
    if header.relay == Some(ctx.id) {
        header.relay = None;
        return match header.temp_dest {
            Some((td, _)) if ctx.table.contains(td) => ForwardDecision::Transmit(td),
            Some(_) => ForwardDecision::Drop(DropCause::TempDestGone),
            None => greedy_family(ctx, header, frag_index),
        };
    }

    // A temporary destination behaves like a fresh source.
    if header.temp_dest.map(|(id, _)| id) == Some(ctx.id) {
        header.temp_dest = None;
        header.relay = None;
    }

    if header.mode == RoutingMode::Perimeter {
        let entry = header.perimeter.expect("perimeter mode carries perimeter state").entry_point;
        if ctx.position.distance_squared(header.final_dest)
            < entry.distance_squared(header.final_dest)
        {
            // Past the point where greedy failed: recover.
            header.perimeter = None;
        } else {
            return perimeter_step(ctx, header, arrival);
        }
    }

    greedy_family(ctx, header, frag_index)
}

fn greedy_family(
    ctx: &RouterContext<'_>,
    header: &mut RoutingHeader,
    frag_index: u64,
) -> ForwardDecision {
    header.relay = None;
    header.temp_dest = None;

    if header.protocol == RoutingProtocol::Tgpsr {
        let pairs = tgpsr_select_paths(ctx.table, ctx.position, header.final_dest, header.n_paths);
        if !pairs.is_empty() {
            let (relay, temp) = pairs[(frag_index % pairs.len() as u64) as usize];
            let temp_pos = known_position(ctx.table, temp)
                .expect("selected temporary destinations have known positions");
            header.mode = RoutingMode::TwoHopGreedy;
            header.relay = Some(relay);
            header.temp_dest = Some((temp, temp_pos));
            return ForwardDecision::Transmit(relay);
        }
    }

    if let Some(next) = greedy_next_hop(ctx.table, ctx.position, header.final_dest) {
        header.mode = RoutingMode::Greedy;
        return ForwardDecision::Transmit(next);
    }

    enter_perimeter(ctx, header)
}

fn enter_perimeter(ctx: &RouterContext<'_>, header: &mut RoutingHeader) -> ForwardDecision {
    if ctx.planar.neighbors.is_empty() {
        return ForwardDecision::Drop(DropCause::Isolated);
    }
    let ref_angle = angle(ctx.position, header.final_dest);
    let next = right_hand_neighbor(ctx.planar, ctx.position, ref_angle)
        .expect("non-empty planar set yields a neighbor");
    header.mode = RoutingMode::Perimeter;
    header.perimeter = Some(PerimeterState {
        entry_point: ctx.position,
        face_entry: ctx.position,
        first_edge: (ctx.id, next),
    });
    ForwardDecision::Transmit(next)
}

fn perimeter_step(
    ctx: &RouterContext<'_>,
    header: &mut RoutingHeader,
    arrival: Option<NodeId>,
) -> ForwardDecision {
    if ctx.planar.neighbors.is_empty() {
        return ForwardDecision::Drop(DropCause::Isolated);
    }
    let ref_angle = arrival
        .and_then(|id| {
            ctx.planar
                .position_of(id)
                .or_else(|| ctx.table.neighbor(id).map(|r| r.position))
        })
        .map(|pos| angle(ctx.position, pos))
        .unwrap_or_else(|| angle(ctx.position, header.final_dest));
    let mut next = right_hand_neighbor(ctx.planar, ctx.position, ref_angle)
        .expect("non-empty planar set yields a neighbor");

    let state = header.perimeter.as_mut().expect("perimeter mode carries perimeter state");
    let next_pos = ctx.planar.position_of(next).expect("planar neighbors carry positions");
    if let Some(crossing) =
        segment_intersection(ctx.position, next_pos, state.entry_point, header.final_dest)
    {
        if crossing.distance_squared(header.final_dest)
            < state.face_entry.distance_squared(header.final_dest)
        {
            // The edge would cross the entry-to-destination line closer
            // to the destination: move to the adjacent face instead of
            // walking through it.
            state.face_entry = crossing;
            let edge_angle = angle(ctx.position, next_pos);
            next = right_hand_neighbor(ctx.planar, ctx.position, edge_angle)
                .expect("non-empty planar set yields a neighbor");
            state.first_edge = (ctx.id, next);
            return ForwardDecision::Transmit(next);
        }
    }

    if (ctx.id, next) == state.first_edge {
        return ForwardDecision::Drop(DropCause::PerimeterLoop);
    }
    ForwardDecision::Transmit(next)
}

pub(crate) fn known_position(table: &NeighborTable, id: NodeId) -> Option<Position> {
    if let Some(rec) = table.neighbor(id) {
        return Some(rec.position);
    }
    for list in table.two_hop().values() {
        if let Some(rec) = list.iter().find(|r| r.id == id) {
            return Some(rec.position);
        }
    }
    None
}

// ----------------------------------------------------------------------
// Offline harness: routes packets over a static placement with ideal
// tables and no radio, for fixtures, property checks and path analysis.
// ----------------------------------------------------------------------

/// Result of tracing one packet offline.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum WalkOutcome {
    Delivered { hops: u32 },
    Dropped { at: NodeId, cause: DropCause },
    HopBudgetExceeded,
}

/// Static routing testbed over one node placement.
pub struct OfflineRouter {
    comm_range: f64,
    tables: BTreeMap<NodeId, NeighborTable>,
    planar: BTreeMap<NodeId, PlanarNeighborSet>,
    positions: BTreeMap<NodeId, Position>,
}

impl OfflineRouter {
    pub fn new(records: &[NeighborRecord], comm_range: f64) -> Self {
        let mut tables = BTreeMap::new();
        let mut planar = BTreeMap::new();
        let mut positions = BTreeMap::new();
        for rec in records {
            let table = NeighborTable::ideal(rec, records, comm_range);
            planar.insert(rec.id, gabriel_planarize(&table, rec.position));
            tables.insert(rec.id, table);
            positions.insert(rec.id, rec.position);
        }
        OfflineRouter { comm_range, tables, planar, positions }
    }

    pub fn position(&self, id: NodeId) -> Position {
        self.positions[&id]
    }

    pub fn context(&self, id: NodeId) -> RouterContext<'_> {
        RouterContext {
            id,
            position: self.positions[&id],
            comm_range: self.comm_range,
            table: &self.tables[&id],
            planar: &self.planar[&id],
        }
    }

    /// Undirected planar edges kept by at least one endpoint.
    pub fn planar_edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut edges = std::collections::BTreeSet::new();
        for (&id, set) in &self.planar {
            for &(nb, _) in &set.neighbors {
                let key = if id < nb { (id, nb) } else { (nb, id) };
                edges.insert(key);
            }
        }
        edges.into_iter().collect()
    }

    pub fn walk(
        &self,
        source: NodeId,
        dest: Position,
        protocol: RoutingProtocol,
        n_paths: u32,
        frag_index: u64,
    ) -> WalkOutcome {
        self.walk_traced(source, dest, protocol, n_paths, frag_index).0
    }

    /// Traces one packet and records each holder with the mode chosen
    /// at that hop.
    pub fn walk_traced(
        &self,
        source: NodeId,
        dest: Position,
        protocol: RoutingProtocol,
        n_paths: u32,
        frag_index: u64,
    ) -> (WalkOutcome, Vec<(NodeId, RoutingMode)>) {
        let mut header = RoutingHeader::new(protocol, dest, n_paths);
        let mut current = source;
        let mut arrival: Option<NodeId> = None;
        let mut trace = Vec::new();
        let n = self.positions.len() as u32;
        // Perimeter walks may traverse several faces of boundary O(n)
        // before recovering, so the budget is quadratic.
        let budget = n * n + 4 * n + 16;
        for hops in 0..budget {
            let ctx = self.context(current);
            match forward(&ctx, &mut header, arrival, frag_index) {
                ForwardDecision::DeliverToSink => {
                    trace.push((current, header.mode));
                    return (WalkOutcome::Delivered { hops: hops + 1 }, trace);
                }
                ForwardDecision::Transmit(next) => {
                    trace.push((current, header.mode));
                    arrival = Some(current);
                    current = next;
                }
                ForwardDecision::Drop(cause) => {
                    trace.push((current, header.mode));
                    return (WalkOutcome::Dropped { at: current, cause }, trace);
                }
            }
        }
        (WalkOutcome::HopBudgetExceeded, trace)
    }
}
