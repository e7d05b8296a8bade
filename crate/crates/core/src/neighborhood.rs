//! Neighbor tables and forwarder sets.
//!
//! Discovery fills each node's table in two broadcast rounds: HELLO
//! carries the sender's own record, TABLE re-broadcasts the accumulated
//! 1-hop table so receivers learn their 2-hop neighborhood. Forwarder
//! sets are read from those tables: a forwarder is a neighbor strictly
//! closer to the sink than the node itself, and the 2-hop forwarders of
//! a neighbor are its own neighbors strictly closer to the sink than it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::geometry::{FieldOfView, Position};
use crate::NodeId;

/// What a node advertises about itself in a HELLO broadcast.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct NeighborRecord {
    pub id: NodeId,
    pub position: Position,
    pub line_of_sight: f64,
    pub angle_of_view: f64,
    pub depth_of_view: f64,
    /// Remaining battery, in joules.
    pub residual_energy: f64,
}

impl NeighborRecord {
    pub fn new(id: NodeId, position: Position, fov: &FieldOfView, residual_energy: f64) -> Self {
        NeighborRecord {
            id,
            position,
            line_of_sight: fov.line_of_sight,
            angle_of_view: fov.angle_of_view,
            depth_of_view: fov.depth_of_view,
            residual_energy,
        }
    }

    pub fn fov(&self) -> FieldOfView {
        FieldOfView::new(self.position, self.line_of_sight, self.angle_of_view, self.depth_of_view)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NeighborhoodError {
    /// The queried relay is not a 1-hop forwarder of the table owner.
    NotAForwarder(NodeId),
}

impl fmt::Display for NeighborhoodError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeighborhoodError::NotAForwarder(id) => {
                write!(f, "{id} is not a 1-hop forwarder of the table owner")
            }
        }
    }
}

impl std::error::Error for NeighborhoodError {}

/// A node's view of its 1-hop and 2-hop neighborhood.
///
/// The owner never appears in either set, and 2-hop entries exist only
/// for known 1-hop neighbors.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct NeighborTable {
    owner: NodeId,
    one_hop: BTreeMap<NodeId, NeighborRecord>,
    two_hop: BTreeMap<NodeId, Vec<NeighborRecord>>,
}

impl NeighborTable {
    pub fn new(owner: NodeId) -> Self {
        NeighborTable { owner, one_hop: BTreeMap::new(), two_hop: BTreeMap::new() }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn one_hop(&self) -> &BTreeMap<NodeId, NeighborRecord> {
        &self.one_hop
    }

    pub fn two_hop(&self) -> &BTreeMap<NodeId, Vec<NeighborRecord>> {
        &self.two_hop
    }

    pub fn neighbor(&self, id: NodeId) -> Option<&NeighborRecord> {
        self.one_hop.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.one_hop.contains_key(&id)
    }

    /// Stores a received HELLO. A record claiming the owner's own id is
    /// dropped; a repeated sender replaces its earlier record.
    pub fn record_hello(&mut self, record: NeighborRecord) {
        if record.id == self.owner {
            return;
        }
        self.one_hop.insert(record.id, record);
    }

    /// Stores a received TABLE broadcast. Returns false when the sender
    /// is not a known 1-hop neighbor, in which case nothing is stored.
    pub fn record_table(&mut self, from: NodeId, records: &[NeighborRecord]) -> bool {
        if !self.one_hop.contains_key(&from) {
            return false;
        }
        let mut cleaned: Vec<NeighborRecord> = records
            .iter()
            .filter(|r| r.id != self.owner && r.id != from)
            .copied()
            .collect();
        cleaned.sort_by_key(|r| r.id);
        cleaned.dedup_by_key(|r| r.id);
        self.two_hop.insert(from, cleaned);
        true
    }

    /// Builds the table a node would hold after loss-free discovery over
    /// a unit-disk radio. Useful for fixtures and offline analysis.
    pub fn ideal(owner: &NeighborRecord, all: &[NeighborRecord], comm_range: f64) -> Self {
        let mut table = NeighborTable::new(owner.id);
        let in_range = |a: &NeighborRecord, b: &NeighborRecord| {
            a.id != b.id && a.position.distance(b.position) <= comm_range
        };
        for rec in all {
            if in_range(owner, rec) {
                table.record_hello(*rec);
            }
        }
        let neighbors: Vec<NeighborRecord> = table.one_hop.values().copied().collect();
        for nb in neighbors {
            let their_list: Vec<NeighborRecord> =
                all.iter().filter(|r| in_range(&nb, r)).copied().collect();
            table.record_table(nb.id, &their_list);
        }
        table
    }
}

/// 1-hop forwarders: neighbors strictly closer to the sink than the node.
pub fn forwarders(table: &NeighborTable, self_pos: Position, sink: Position) -> BTreeSet<NodeId> {
    let own = self_pos.distance_squared(sink);
    table
        .one_hop()
        .values()
        .filter(|r| r.position.distance_squared(sink) < own)
        .map(|r| r.id)
        .collect()
}

/// 2-hop forwarders reachable through the 1-hop forwarder `via`: the
/// neighbors of `via` strictly closer to the sink than `via` itself.
/// They may coincide with the owner's other 1-hop neighbors but never
/// include the owner.
pub fn forwarders2(
    table: &NeighborTable,
    self_pos: Position,
    via: NodeId,
    sink: Position,
) -> Result<BTreeSet<NodeId>, NeighborhoodError> {
    if !forwarders(table, self_pos, sink).contains(&via) {
        return Err(NeighborhoodError::NotAForwarder(via));
    }
    let via_dist = table
        .neighbor(via)
        .map(|r| r.position.distance_squared(sink))
        .expect("forwarders only returns known neighbors");
    let set = table
        .two_hop()
        .get(&via)
        .map(|records| {
            records
                .iter()
                .filter(|r| r.id != table.owner() && r.position.distance_squared(sink) < via_dist)
                .map(|r| r.id)
                .collect()
        })
        .unwrap_or_default();
    Ok(set)
}

/// Union of the 2-hop forwarder sets over every 1-hop forwarder,
/// deduplicated and never containing the owner.
pub fn forwarders2_union(
    table: &NeighborTable,
    self_pos: Position,
    sink: Position,
) -> BTreeSet<NodeId> {
    let mut union = BTreeSet::new();
    for via in forwarders(table, self_pos, sink) {
        if let Ok(set) = forwarders2(table, self_pos, via, sink) {
            union.extend(set);
        }
    }
    union
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(id: u16, x: f64, y: f64) -> NeighborRecord {
        let fov = FieldOfView::new(Position::new(x, y), 0.0, std::f64::consts::FRAC_PI_3, 125.0);
        NeighborRecord::new(NodeId(id), Position::new(x, y), &fov, 100.0)
    }

    fn ids(set: &BTreeSet<NodeId>) -> Vec<u16> {
        set.iter().map(|id| id.0).collect()
    }

    #[test]
    fn hello_populates_one_hop_and_ignores_self() {
        let mut table = NeighborTable::new(NodeId(0));
        table.record_hello(record(1, 10.0, 0.0));
        table.record_hello(record(0, 99.0, 99.0));
        assert!(table.contains(NodeId(1)));
        assert!(!table.contains(NodeId(0)));
        assert_eq!(table.one_hop().len(), 1);
    }

    #[test]
    fn table_broadcast_requires_known_sender() {
        let mut table = NeighborTable::new(NodeId(0));
        assert!(!table.record_table(NodeId(5), &[record(6, 0.0, 0.0)]));
        assert!(table.two_hop().is_empty());
        table.record_hello(record(5, 10.0, 0.0));
        assert!(table.record_table(NodeId(5), &[record(6, 20.0, 0.0), record(0, 0.0, 0.0)]));
        let via5: Vec<u16> = table.two_hop()[&NodeId(5)].iter().map(|r| r.id.0).collect();
        assert_eq!(via5, vec![6]);
    }

    #[test]
    fn line_topology_builds_expected_two_hop_view() {
        // a(0) - b(100) - c(200), range 150: a sees c only through b.
        let all = [record(0, 0.0, 0.0), record(1, 100.0, 0.0), record(2, 200.0, 0.0)];
        let table = NeighborTable::ideal(&all[0], &all, 150.0);
        assert_eq!(table.one_hop().len(), 1);
        assert!(table.contains(NodeId(1)));
        let via_b: Vec<u16> = table.two_hop()[&NodeId(1)].iter().map(|r| r.id.0).collect();
        assert_eq!(via_b, vec![2]);
    }

    #[test]
    fn forwarders_keep_strictly_closer_neighbors() {
        // Neighbors at sink distances 50, 80 and 120; the node sits at 100.
        let sink = Position::new(0.0, 0.0);
        let mut table = NeighborTable::new(NodeId(0));
        table.record_hello(record(1, 50.0, 0.0));
        table.record_hello(record(2, 80.0, 0.0));
        table.record_hello(record(3, 120.0, 0.0));
        let f = forwarders(&table, Position::new(100.0, 0.0), sink);
        assert_eq!(ids(&f), vec![1, 2]);
    }

    #[test]
    fn forwarders_exclude_equal_distance_neighbors() {
        let sink = Position::new(0.0, 0.0);
        let mut table = NeighborTable::new(NodeId(0));
        table.record_hello(record(1, 0.0, 100.0));
        let f = forwarders(&table, Position::new(100.0, 0.0), sink);
        assert!(f.is_empty());
    }

    #[test]
    fn two_hop_forwarders_on_a_line() {
        // v(300) - u(200) - k(100), sink at the origin.
        let all = [record(0, 300.0, 0.0), record(1, 200.0, 0.0), record(2, 100.0, 0.0)];
        let table = NeighborTable::ideal(&all[0], &all, 150.0);
        let sink = Position::new(0.0, 0.0);
        let f2 = forwarders2(&table, all[0].position, NodeId(1), sink).unwrap();
        assert_eq!(ids(&f2), vec![2]);
        assert_eq!(ids(&forwarders2_union(&table, all[0].position, sink)), vec![2]);
    }

    #[test]
    fn two_hop_forwarders_may_be_shared_one_hop_neighbors() {
        // m is v's own neighbor and also u's only neighbor closer to the
        // sink, so it shows up as a 2-hop forwarder through u.
        let v = record(0, 300.0, 0.0);
        let u = record(1, 240.0, 60.0);
        let m = record(2, 200.0, 0.0);
        let all = [v, u, m];
        let table = NeighborTable::ideal(&v, &all, 150.0);
        let sink = Position::new(0.0, 0.0);
        let f2 = forwarders2(&table, v.position, NodeId(1), sink).unwrap();
        assert_eq!(ids(&f2), vec![2]);
    }

    #[test]
    fn two_hop_forwarders_never_include_the_owner() {
        // v itself is closer to the sink than u, but it must not appear
        // in its own 2-hop forwarder set.
        let v = record(0, 200.0, 0.0);
        let u = record(1, 150.0, 100.0);
        let sink = Position::new(0.0, 0.0);
        let mut table = NeighborTable::new(NodeId(0));
        table.record_hello(u);
        table.record_table(NodeId(1), &[v]);
        let f2 = forwarders2(&table, v.position, NodeId(1), sink).unwrap();
        assert!(f2.is_empty());
    }

    #[test]
    fn querying_a_non_forwarder_is_an_error() {
        let v = record(0, 100.0, 0.0);
        let far = record(1, 200.0, 0.0);
        let all = [v, far];
        let table = NeighborTable::ideal(&v, &all, 150.0);
        let sink = Position::new(0.0, 0.0);
        let err = forwarders2(&table, v.position, NodeId(1), sink).unwrap_err();
        assert_eq!(err, NeighborhoodError::NotAForwarder(NodeId(1)));
    }

    #[test]
    fn union_deduplicates_shared_two_hop_forwarders() {
        // Two forwarders u1 and u2 both reach k; the union lists k once.
        let v = record(0, 300.0, 0.0);
        let u1 = record(1, 220.0, 50.0);
        let u2 = record(2, 220.0, -50.0);
        let k = record(3, 120.0, 0.0);
        let all = [v, u1, u2, k];
        let table = NeighborTable::ideal(&v, &all, 150.0);
        let sink = Position::new(0.0, 0.0);
        assert_eq!(ids(&forwarders2_union(&table, v.position, sink)), vec![3]);
    }

    #[test]
    fn forwarder_sets_match_brute_force_on_random_topologies() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let range = 150.0;
        for _ in 0..50 {
            let n = rng.gen_range(5..=15);
            let nodes: Vec<NeighborRecord> = (0..n)
                .map(|id| record(id, rng.gen_range(0.0..600.0), rng.gen_range(0.0..600.0)))
                .collect();
            let sink = Position::new(rng.gen_range(0.0..600.0), rng.gen_range(0.0..600.0));
            for v in &nodes {
                let table = NeighborTable::ideal(v, &nodes, range);

                // Independent recomputation straight from positions.
                let d = |p: Position| p.distance(sink);
                let mut expect_f: Vec<NodeId> = nodes
                    .iter()
                    .filter(|u| {
                        u.id != v.id
                            && u.position.distance(v.position) <= range
                            && d(u.position) < d(v.position)
                    })
                    .map(|u| u.id)
                    .collect();
                expect_f.sort_unstable();
                let f = forwarders(&table, v.position, sink);
                assert_eq!(ids(&f), expect_f.iter().map(|id| id.0).collect::<Vec<_>>());

                let mut expect_union: BTreeSet<NodeId> = BTreeSet::new();
                for u in nodes.iter().filter(|u| expect_f.contains(&u.id)) {
                    for k in &nodes {
                        if k.id != u.id
                            && k.id != v.id
                            && k.position.distance(u.position) <= range
                            && d(k.position) < d(u.position)
                        {
                            expect_union.insert(k.id);
                        }
                    }
                }
                let union = forwarders2_union(&table, v.position, sink);
                assert_eq!(union, expect_union);
            }
        }
    }
}
