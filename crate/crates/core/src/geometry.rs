//! Planar geometry for camera fields of view.
//!
//! A camera watches a closed triangular region: the apex sits at the
//! sensor position and the far edge lies `depth_of_view` metres away,
//! perpendicular to the line of sight. Coverage queries sample that
//! triangle on a fixed origin-anchored lattice, which keeps results
//! deterministic and conservative: halving the pitch only adds sample
//! points, so refinement can reveal an uncovered spot but never hide one.

use std::collections::BTreeMap;
use std::fmt;

use crate::NodeId;

/// Absolute tolerance, in metres, for classifying a point against a
/// triangle edge. Points within this distance of an edge count as inside.
pub const GEOMETRIC_TOLERANCE: f64 = 1e-9;

/// Default lattice pitch for coverage sampling, in metres.
pub const DEFAULT_SAMPLE_SPACING: f64 = 5.0;

/// Default cap on cover set cardinality during enumeration.
pub const DEFAULT_MAX_CARDINALITY: usize = 4;

/// A point in the deployment plane, in metres.
#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance_squared(self, other: Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Position) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.2}, {:.2})", self.x, self.y)
    }
}

/// Camera field of view: apex position, facing direction and aperture.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct FieldOfView {
    /// Sensor position, the triangle apex.
    pub apex: Position,
    /// Facing direction in radians.
    pub line_of_sight: f64,
    /// Full aperture angle in radians. Valid fields of view keep it in (0, pi).
    pub angle_of_view: f64,
    /// Viewing depth along the line of sight, in metres.
    pub depth_of_view: f64,
}

impl FieldOfView {
    pub fn new(apex: Position, line_of_sight: f64, angle_of_view: f64, depth_of_view: f64) -> Self {
        FieldOfView { apex, line_of_sight, angle_of_view, depth_of_view }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum GeometryError {
    /// A field of view or sampling parameter is outside its valid domain.
    InvalidGeometry(String),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::InvalidGeometry(msg) => write!(f, "invalid geometry: {msg}"),
        }
    }
}

impl std::error::Error for GeometryError {}

/// Score attached to a cover set by the selection stage.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct CoverSetScore {
    /// Mean ratio of 2-hop forwarders to required path count over members.
    pub r_two_hop: f64,
    /// Mean ratio of 1-hop relays to 2-hop forwarders over members.
    pub r_relay: f64,
    /// Weighted combination of the two ratios.
    pub transmission_quality: f64,
    /// Smallest residual energy among members, in joules.
    pub min_residual_energy: f64,
}

/// A set of nodes whose fields of view jointly cover the owner's.
///
/// The trivial set `{owner}` is always valid: a camera covers its own
/// field of view.
#[derive(Clone, PartialEq, Debug)]
pub struct CoverSet {
    pub owner: NodeId,
    /// Member ids, sorted ascending and free of duplicates.
    pub members: Vec<NodeId>,
    /// Filled in by the selection stage once member information is known.
    pub score: Option<CoverSetScore>,
}

impl CoverSet {
    pub fn new(owner: NodeId, mut members: Vec<NodeId>) -> Self {
        members.sort_unstable();
        members.dedup();
        CoverSet { owner, members, score: None }
    }

    /// The fallback set containing only the owner itself.
    pub fn trivial(owner: NodeId) -> Self {
        CoverSet { owner, members: vec![owner], score: None }
    }

    pub fn is_trivial(&self) -> bool {
        self.members.len() == 1 && self.members[0] == self.owner
    }

    pub fn cardinality(&self) -> usize {
        self.members.len()
    }
}

fn validate_fov(fov: &FieldOfView) -> Result<(), GeometryError> {
    let finite = fov.apex.x.is_finite()
        && fov.apex.y.is_finite()
        && fov.line_of_sight.is_finite()
        && fov.angle_of_view.is_finite()
        && fov.depth_of_view.is_finite();
    if !finite {
        return Err(GeometryError::InvalidGeometry("non-finite field of view parameter".into()));
    }
    if fov.angle_of_view <= 0.0 || fov.angle_of_view >= std::f64::consts::PI {
        return Err(GeometryError::InvalidGeometry(format!(
            "angle of view {} rad outside (0, pi)",
            fov.angle_of_view
        )));
    }
    if fov.depth_of_view <= 0.0 {
        return Err(GeometryError::InvalidGeometry(format!(
            "depth of view {} m must be positive",
            fov.depth_of_view
        )));
    }
    Ok(())
}

/// Computes the triangle `(p, b, c)` watched by a field of view.
///
/// `p` is the apex. `b` and `c` sit at distance `depth_of_view /
/// cos(angle_of_view / 2)` along the rays at plus and minus half the
/// aperture from the line of sight, so the far edge `bc` crosses the line
/// of sight perpendicularly at `depth_of_view` metres from the apex. The
/// vertex offsets depend only on the angles and depth, never on the apex,
/// so translating the apex translates the triangle.
pub fn fov_triangle(fov: &FieldOfView) -> Result<(Position, Position, Position), GeometryError> {
    validate_fov(fov)?;
    let half = fov.angle_of_view / 2.0;
    let reach = fov.depth_of_view / half.cos();
    let up = fov.line_of_sight + half;
    let down = fov.line_of_sight - half;
    let b = Position::new(fov.apex.x + reach * up.cos(), fov.apex.y + reach * up.sin());
    let c = Position::new(fov.apex.x + reach * down.cos(), fov.apex.y + reach * down.sin());
    Ok((fov.apex, b, c))
}

fn cross(origin: Position, a: Position, b: Position) -> f64 {
    (a.x - origin.x) * (b.y - origin.y) - (a.y - origin.y) * (b.x - origin.x)
}

/// Signed-distance test of `q` against the closed triangle `(p, b, c)`.
fn triangle_contains(tri: &(Position, Position, Position), q: Position) -> bool {
    let (p, b, c) = *tri;
    let orientation = cross(p, b, c);
    let sign = if orientation >= 0.0 { 1.0 } else { -1.0 };
    for (v0, v1) in [(p, b), (b, c), (c, p)] {
        let edge_len = v0.distance(v1);
        if edge_len == 0.0 {
            return false;
        }
        // Distance of q from the edge line, positive on the inner side.
        let d = sign * cross(v0, v1, q) / edge_len;
        if d < -GEOMETRIC_TOLERANCE {
            return false;
        }
    }
    true
}

/// Whether the field of view covers point `q`. The boundary counts as
/// covered; invalid fields of view cover nothing.
pub fn covers_point(fov: &FieldOfView, q: Position) -> bool {
    match fov_triangle(fov) {
        Ok(tri) => triangle_contains(&tri, q),
        Err(_) => false,
    }
}

/// Deterministic sample points for a field of view: every lattice point
/// (integer multiples of `spacing` on both axes) inside the closed
/// triangle, plus the three vertices and the centroid.
///
/// Anchoring the lattice at the plane origin rather than the triangle
/// makes the sample set at pitch `s/2` a superset of the one at `s`.
pub fn coverage_samples(fov: &FieldOfView, spacing: f64) -> Result<Vec<Position>, GeometryError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(GeometryError::InvalidGeometry(format!(
            "sample spacing {spacing} must be positive and finite"
        )));
    }
    let tri = fov_triangle(fov)?;
    let (p, b, c) = tri;
    let min_x = p.x.min(b.x).min(c.x);
    let max_x = p.x.max(b.x).max(c.x);
    let min_y = p.y.min(b.y).min(c.y);
    let max_y = p.y.max(b.y).max(c.y);

    let mut samples = Vec::new();
    let i0 = (min_x / spacing).ceil() as i64;
    let i1 = (max_x / spacing).floor() as i64;
    let j0 = (min_y / spacing).ceil() as i64;
    let j1 = (max_y / spacing).floor() as i64;
    for i in i0..=i1 {
        for j in j0..=j1 {
            let q = Position::new(i as f64 * spacing, j as f64 * spacing);
            if triangle_contains(&tri, q) {
                samples.push(q);
            }
        }
    }
    samples.push(p);
    samples.push(b);
    samples.push(c);
    samples.push(Position::new((p.x + b.x + c.x) / 3.0, (p.y + b.y + c.y) / 3.0));
    Ok(samples)
}

/// Whether the candidate fields of view jointly cover the target's
/// triangle, judged on the target's deterministic sample set.
pub fn covers_fov(
    candidates: &[FieldOfView],
    target: &FieldOfView,
    sample_spacing: f64,
) -> Result<bool, GeometryError> {
    let samples = coverage_samples(target, sample_spacing)?;
    let mut triangles = Vec::with_capacity(candidates.len());
    for fov in candidates {
        triangles.push(fov_triangle(fov)?);
    }
    Ok(samples
        .iter()
        .all(|&q| triangles.iter().any(|tri| triangle_contains(tri, q))))
}

/// Bit mask over the sample set, one word per 64 samples.
#[derive(Clone, PartialEq, Eq)]
struct SampleMask {
    words: Vec<u64>,
}

impl SampleMask {
    fn empty(len: usize) -> Self {
        SampleMask { words: vec![0; len.div_ceil(64)] }
    }

    fn set(&mut self, idx: usize) {
        self.words[idx / 64] |= 1 << (idx % 64);
    }

    fn or_assign(&mut self, other: &SampleMask) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
    }

    fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn covers_all(&self, full: &SampleMask) -> bool {
        self.words.iter().zip(&full.words).all(|(w, f)| w & f == *f)
    }
}

/// Enumerates every minimal cover set of the owner, capped at
/// `max_cardinality` members, ordered by cardinality and then by the
/// lexicographically smallest member-id sequence.
///
/// The trivial set `{owner}` is always included. Any larger set that
/// contains the owner would have `{owner}` as a covering subset, so mixed
/// sets are never minimal and never appear; members therefore come from
/// `neighbor_fovs` alone. An owner entry in `neighbor_fovs` is ignored.
pub fn enumerate_cover_sets(
    owner: NodeId,
    owner_fov: &FieldOfView,
    neighbor_fovs: &BTreeMap<NodeId, FieldOfView>,
    max_cardinality: usize,
    sample_spacing: f64,
) -> Result<Vec<CoverSet>, GeometryError> {
    let samples = coverage_samples(owner_fov, sample_spacing)?;
    let mut full = SampleMask::empty(samples.len());
    for idx in 0..samples.len() {
        full.set(idx);
    }

    // Candidates that cover no sample at all can never help.
    let mut candidates: Vec<(NodeId, SampleMask)> = Vec::new();
    for (&id, fov) in neighbor_fovs {
        if id == owner {
            continue;
        }
        let tri = fov_triangle(fov)?;
        let mut mask = SampleMask::empty(samples.len());
        for (idx, &q) in samples.iter().enumerate() {
            if triangle_contains(&tri, q) {
                mask.set(idx);
            }
        }
        if !mask.is_zero() {
            candidates.push((id, mask));
        }
    }

    let mut sets = vec![CoverSet::trivial(owner)];
    let cap = max_cardinality.min(candidates.len());
    let mut chosen: Vec<usize> = Vec::new();
    for cardinality in 1..=cap {
        chosen.clear();
        combinations(candidates.len(), cardinality, &mut chosen, &mut |combo| {
            let mut union = SampleMask::empty(samples.len());
            for &idx in combo {
                union.or_assign(&candidates[idx].1);
            }
            if !union.covers_all(&full) {
                return;
            }
            // Minimal means every member is necessary.
            for &skip in combo {
                let mut rest = SampleMask::empty(samples.len());
                for &idx in combo {
                    if idx != skip {
                        rest.or_assign(&candidates[idx].1);
                    }
                }
                if rest.covers_all(&full) {
                    return;
                }
            }
            let members = combo.iter().map(|&idx| candidates[idx].0).collect();
            sets.push(CoverSet { owner, members, score: None });
        });
    }

    sets.sort_by(|a, b| {
        a.members
            .len()
            .cmp(&b.members.len())
            .then_with(|| a.members.cmp(&b.members))
    });
    Ok(sets)
}

/// Visits every `k`-combination of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize, scratch: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    fn recur(
        n: usize,
        k: usize,
        start: usize,
        scratch: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if scratch.len() == k {
            visit(scratch);
            return;
        }
        let remaining = k - scratch.len();
        for idx in start..=n.saturating_sub(remaining) {
            scratch.push(idx);
            recur(n, k, idx + 1, scratch, visit);
            scratch.pop();
        }
    }
    if k == 0 || k > n {
        return;
    }
    recur(n, k, 0, scratch, visit);
}
