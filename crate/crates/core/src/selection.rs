//! Cover set scoring and selection.
//!
//! When a sentry detects an event it asks every member of its candidate
//! cover sets for fresh 1-hop and 2-hop forwarder counts, then scores
//! each set: `r_two_hop` rewards members whose 2-hop forwarder pool is
//! large relative to the number of paths their capture rate demands,
//! `r_relay` rewards members with many relays per 2-hop forwarder, and
//! the transmission quality blends the two. The set with the best
//! transmission quality gets activated.

use std::collections::BTreeMap;
use std::fmt;

use crate::geometry::{CoverSet, CoverSetScore};
use crate::NodeId;

#[derive(Clone, PartialEq, Debug)]
pub enum SelectionError {
    InvalidWeights(String),
    InvalidPathRequirement(String),
    /// A cover set member never reported its forwarder counts.
    IncompleteInformation(NodeId),
    EmptyCoverSet,
}

impl fmt::Display for SelectionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionError::InvalidWeights(msg) => write!(f, "invalid weights: {msg}"),
            SelectionError::InvalidPathRequirement(msg) => {
                write!(f, "invalid path requirement: {msg}")
            }
            SelectionError::IncompleteInformation(id) => {
                write!(f, "no forwarder information for member {id}")
            }
            SelectionError::EmptyCoverSet => write!(f, "cover set has no members"),
        }
    }
}

impl std::error::Error for SelectionError {}

/// Relative importance of the 2-hop ratio versus the relay ratio.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SelectionWeights {
    alpha: f64,
    beta: f64,
}

impl SelectionWeights {
    /// Builds weights, requiring both to be non-negative and to sum to 1.
    pub fn new(alpha: f64, beta: f64) -> Result<Self, SelectionError> {
        if !alpha.is_finite() || !beta.is_finite() || alpha < 0.0 || beta < 0.0 {
            return Err(SelectionError::InvalidWeights(format!(
                "alpha {alpha} and beta {beta} must be finite and non-negative"
            )));
        }
        if (alpha + beta - 1.0).abs() > 1e-9 {
            return Err(SelectionError::InvalidWeights(format!(
                "alpha {alpha} + beta {beta} must equal 1"
            )));
        }
        Ok(SelectionWeights { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for SelectionWeights {
    fn default() -> Self {
        SelectionWeights { alpha: 0.5, beta: 0.5 }
    }
}

/// How many disjoint-ish forwarding paths a member's traffic calls for.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct PathRequirement {
    /// Images captured per second.
    pub capture_rate: f64,
    /// Paths provisioned per unit of capture rate.
    pub path_factor: f64,
}

/// Number of paths a requirement translates to: the capture rate scaled
/// by the path factor, rounded up, and never less than one.
pub fn nb_optimal_paths(req: &PathRequirement) -> Result<u32, SelectionError> {
    if !req.capture_rate.is_finite() || req.capture_rate < 0.0 {
        return Err(SelectionError::InvalidPathRequirement(format!(
            "capture rate {} must be finite and non-negative",
            req.capture_rate
        )));
    }
    if !req.path_factor.is_finite() || req.path_factor < 0.0 {
        return Err(SelectionError::InvalidPathRequirement(format!(
            "path factor {} must be finite and non-negative",
            req.path_factor
        )));
    }
    let paths = (req.capture_rate * req.path_factor).ceil();
    Ok((paths.max(1.0)) as u32)
}

/// What a member reports back when asked for selection input.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct MemberInfo {
    /// Size of the member's 1-hop forwarder set.
    pub forwarders: usize,
    /// Size of the member's deduplicated 2-hop forwarder set.
    pub two_hop_forwarders: usize,
    pub residual_energy: f64,
    pub capture_rate: f64,
}

fn member_info<'a>(
    set: &CoverSet,
    info: &'a BTreeMap<NodeId, MemberInfo>,
    member: NodeId,
) -> Result<&'a MemberInfo, SelectionError> {
    let _ = set;
    info.get(&member).ok_or(SelectionError::IncompleteInformation(member))
}

/// Mean ratio of 2-hop forwarder count to required path count over the
/// set's members. Deliberately unclamped: values above 1 mean the
/// neighborhood offers more forwarding choice than the traffic needs.
pub fn r_two_hop(
    set: &CoverSet,
    info: &BTreeMap<NodeId, MemberInfo>,
    path_factor: f64,
) -> Result<f64, SelectionError> {
    if set.members.is_empty() {
        return Err(SelectionError::EmptyCoverSet);
    }
    let mut sum = 0.0;
    for &member in &set.members {
        let data = member_info(set, info, member)?;
        let paths = nb_optimal_paths(&PathRequirement {
            capture_rate: data.capture_rate,
            path_factor,
        })?;
        sum += data.two_hop_forwarders as f64 / paths as f64;
    }
    Ok(sum / set.members.len() as f64)
}

/// Mean ratio of 1-hop forwarders to 2-hop forwarders over the set's
/// members. A member with no 2-hop forwarders contributes zero.
pub fn r_relay(
    set: &CoverSet,
    info: &BTreeMap<NodeId, MemberInfo>,
) -> Result<f64, SelectionError> {
    if set.members.is_empty() {
        return Err(SelectionError::EmptyCoverSet);
    }
    let mut sum = 0.0;
    for &member in &set.members {
        let data = member_info(set, info, member)?;
        if data.two_hop_forwarders > 0 {
            sum += data.forwarders as f64 / data.two_hop_forwarders as f64;
        }
    }
    Ok(sum / set.members.len() as f64)
}

/// Weighted blend of the two ratios.
pub fn transmission_quality(r_two_hop: f64, r_relay: f64, weights: &SelectionWeights) -> f64 {
    weights.alpha * r_two_hop + weights.beta * r_relay
}

/// Computes and attaches the full score of one cover set.
pub fn score_cover_set(
    set: &mut CoverSet,
    info: &BTreeMap<NodeId, MemberInfo>,
    weights: &SelectionWeights,
    path_factor: f64,
) -> Result<CoverSetScore, SelectionError> {
    let r2 = r_two_hop(set, info, path_factor)?;
    let rr = r_relay(set, info)?;
    let mut min_energy = f64::INFINITY;
    for &member in &set.members {
        min_energy = min_energy.min(member_info(set, info, member)?.residual_energy);
    }
    let score = CoverSetScore {
        r_two_hop: r2,
        r_relay: rr,
        transmission_quality: transmission_quality(r2, rr, weights),
        min_residual_energy: min_energy,
    };
    set.score = Some(score);
    Ok(score)
}

/// Picks the cover set to activate: among scored candidates whose
/// minimum member energy reaches `energy_floor`, the one with the best
/// transmission quality. Ties fall to the higher minimum residual
/// energy, then the smaller cardinality, then the lexicographically
/// smallest member sequence. With no usable candidate the owner falls
/// back to covering the event alone.
pub fn select_cover_set(
    owner: NodeId,
    candidates: &[CoverSet],
    energy_floor: f64,
) -> CoverSet {
    let mut best: Option<&CoverSet> = None;
    for set in candidates {
        let score = match set.score {
            Some(score) if score.min_residual_energy >= energy_floor => score,
            _ => continue,
        };
        let better = match best {
            None => true,
            Some(cur) => {
                let cur_score = cur.score.unwrap();
                let key = (
                    score.transmission_quality,
                    score.min_residual_energy,
                    std::cmp::Reverse(set.members.len()),
                );
                let cur_key = (
                    cur_score.transmission_quality,
                    cur_score.min_residual_energy,
                    std::cmp::Reverse(cur.members.len()),
                );
                match key.partial_cmp(&cur_key) {
                    Some(std::cmp::Ordering::Greater) => true,
                    Some(std::cmp::Ordering::Equal) => set.members < cur.members,
                    _ => false,
                }
            }
        };
        if better {
            best = Some(set);
        }
    }
    best.cloned().unwrap_or_else(|| CoverSet::trivial(owner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn info(forwarders: usize, two_hop: usize, energy: f64, rate: f64) -> MemberInfo {
        MemberInfo { forwarders, two_hop_forwarders: two_hop, residual_energy: energy, capture_rate: rate }
    }

    fn set_of(owner: u16, members: &[u16]) -> CoverSet {
        CoverSet::new(NodeId(owner), members.iter().map(|&id| NodeId(id)).collect())
    }

    #[test]
    fn path_count_rounds_up_and_never_drops_below_one() {
        let cases = [
            (2.0, 1.0, 2),
            (0.0, 1.0, 1),
            (0.5, 1.0, 1),
            (2.0, 2.5, 5),
            (3.0, 0.0, 1),
        ];
        for (rate, factor, expected) in cases {
            let req = PathRequirement { capture_rate: rate, path_factor: factor };
            assert_eq!(nb_optimal_paths(&req).unwrap(), expected, "rate {rate} factor {factor}");
        }
        assert!(nb_optimal_paths(&PathRequirement { capture_rate: -1.0, path_factor: 1.0 }).is_err());
        assert!(nb_optimal_paths(&PathRequirement { capture_rate: 1.0, path_factor: f64::NAN }).is_err());
    }

    #[test]
    fn two_hop_ratio_averages_over_members() {
        // Members with 4 and 1 two-hop forwarders, both needing 2 paths.
        let set = set_of(0, &[1, 2]);
        let mut data = BTreeMap::new();
        data.insert(NodeId(1), info(3, 4, 100.0, 2.0));
        data.insert(NodeId(2), info(2, 1, 100.0, 2.0));
        let r2 = r_two_hop(&set, &data, 1.0).unwrap();
        assert_eq!(r2, 1.25);
    }

    #[test]
    fn two_hop_ratio_is_not_clamped_to_one() {
        let set = set_of(0, &[1]);
        let mut data = BTreeMap::new();
        data.insert(NodeId(1), info(3, 9, 100.0, 1.0));
        assert_eq!(r_two_hop(&set, &data, 1.0).unwrap(), 9.0);
    }

    #[test]
    fn relay_ratio_averages_and_zeroes_empty_pools() {
        let set = set_of(0, &[1, 2]);
        let mut data = BTreeMap::new();
        data.insert(NodeId(1), info(2, 2, 100.0, 1.0));
        data.insert(NodeId(2), info(4, 2, 100.0, 1.0));
        assert_eq!(r_relay(&set, &data).unwrap(), 1.5);

        let lonely = set_of(0, &[3]);
        let mut none = BTreeMap::new();
        none.insert(NodeId(3), info(5, 0, 100.0, 1.0));
        assert_eq!(r_relay(&lonely, &none).unwrap(), 0.0);
    }

    #[test]
    fn transmission_quality_blends_with_weights() {
        let weights = SelectionWeights::default();
        assert_eq!(transmission_quality(1.25, 1.5, &weights), 1.375);
        let lopsided = SelectionWeights::new(0.8, 0.2).unwrap();
        let tq = transmission_quality(2.0, 0.5, &lopsided);
        assert!((tq - 1.7).abs() < 1e-12);
    }

    #[test]
    fn weights_must_be_normalized() {
        assert!(SelectionWeights::new(0.7, 0.3).is_ok());
        assert!(SelectionWeights::new(0.7, 0.4).is_err());
        assert!(SelectionWeights::new(-0.2, 1.2).is_err());
        assert!(SelectionWeights::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn missing_member_information_is_an_error() {
        let set = set_of(0, &[1, 2]);
        let mut data = BTreeMap::new();
        data.insert(NodeId(1), info(1, 1, 100.0, 1.0));
        match r_two_hop(&set, &data, 1.0) {
            Err(SelectionError::IncompleteInformation(id)) => assert_eq!(id, NodeId(2)),
            other => panic!("expected incomplete information, got {other:?}"),
        }
        assert!(r_relay(&set, &data).is_err());
    }

    fn scored(owner: u16, members: &[u16], tq: f64, energy: f64) -> CoverSet {
        let mut set = set_of(owner, members);
        set.score = Some(CoverSetScore {
            r_two_hop: tq,
            r_relay: tq,
            transmission_quality: tq,
            min_residual_energy: energy,
        });
        set
    }

    #[test]
    fn selection_takes_the_best_transmission_quality() {
        let candidates = vec![
            scored(0, &[1, 2], 1.0, 50.0),
            scored(0, &[3, 4], 1.6, 50.0),
            scored(0, &[5], 1.2, 90.0),
        ];
        let chosen = select_cover_set(NodeId(0), &candidates, 0.0);
        assert_eq!(chosen.members, vec![NodeId(3), NodeId(4)]);
    }

    #[test]
    fn energy_floor_filters_candidates() {
        let candidates = vec![
            scored(0, &[1, 2], 1.6, 10.0),
            scored(0, &[3, 4], 1.0, 80.0),
        ];
        let chosen = select_cover_set(NodeId(0), &candidates, 50.0);
        assert_eq!(chosen.members, vec![NodeId(3), NodeId(4)]);
    }

    #[test]
    fn all_candidates_filtered_falls_back_to_the_owner() {
        let candidates = vec![scored(7, &[1, 2], 1.6, 10.0)];
        let chosen = select_cover_set(NodeId(7), &candidates, 50.0);
        assert!(chosen.is_trivial());
        assert_eq!(chosen.owner, NodeId(7));
        let none = select_cover_set(NodeId(7), &[], 0.0);
        assert!(none.is_trivial());
    }

    #[test]
    fn ties_fall_to_energy_then_cardinality_then_members() {
        // Same quality: the higher minimum energy wins.
        let by_energy = vec![
            scored(0, &[1, 2], 1.5, 40.0),
            scored(0, &[3, 4], 1.5, 70.0),
        ];
        assert_eq!(
            select_cover_set(NodeId(0), &by_energy, 0.0).members,
            vec![NodeId(3), NodeId(4)]
        );

        // Same quality and energy: fewer members win.
        let by_size = vec![
            scored(0, &[1, 2, 3], 1.5, 70.0),
            scored(0, &[4, 5], 1.5, 70.0),
        ];
        assert_eq!(
            select_cover_set(NodeId(0), &by_size, 0.0).members,
            vec![NodeId(4), NodeId(5)]
        );

        // Everything equal: the lexicographically smallest members win.
        let by_members = vec![
            scored(0, &[2, 6], 1.5, 70.0),
            scored(0, &[2, 4], 1.5, 70.0),
        ];
        assert_eq!(
            select_cover_set(NodeId(0), &by_members, 0.0).members,
            vec![NodeId(2), NodeId(4)]
        );
    }

    #[test]
    fn unscored_candidates_are_ignored() {
        let mut unscored = set_of(0, &[1, 2]);
        unscored.score = None;
        let chosen = select_cover_set(NodeId(0), &[unscored], 0.0);
        assert!(chosen.is_trivial());
    }

    #[test]
    fn scores_match_exact_rational_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.gen_range(1..=5usize);
            let members: Vec<u16> = (1..=n as u16).collect();
            let set = set_of(0, &members);
            let mut data = BTreeMap::new();
            for &m in &members {
                data.insert(
                    NodeId(m),
                    info(
                        rng.gen_range(0..12),
                        rng.gen_range(0..40),
                        rng.gen_range(1.0..100.0),
                        rng.gen_range(0..5) as f64,
                    ),
                );
            }
            let r2 = r_two_hop(&set, &data, 1.0).unwrap();
            let rr = r_relay(&set, &data).unwrap();

            // Oracle over exact rationals: sum of a_i/b_i as a single
            // fraction, then one float division at the very end.
            let mut num: i128 = 0;
            let mut den: i128 = 1;
            for &m in &members {
                let d = &data[&NodeId(m)];
                let paths = (d.capture_rate.ceil() as i128).max(1);
                num = num * paths + d.two_hop_forwarders as i128 * den;
                den *= paths;
            }
            let exact_r2 = num as f64 / (den * n as i128) as f64;
            assert!((r2 - exact_r2).abs() <= 1e-12 * exact_r2.abs().max(1.0));

            let mut num_r: i128 = 0;
            let mut den_r: i128 = 1;
            for &m in &members {
                let d = &data[&NodeId(m)];
                if d.two_hop_forwarders > 0 {
                    num_r = num_r * d.two_hop_forwarders as i128 + d.forwarders as i128 * den_r;
                    den_r *= d.two_hop_forwarders as i128;
                }
            }
            let exact_rr = num_r as f64 / (den_r * n as i128) as f64;
            assert!((rr - exact_rr).abs() <= 1e-12 * exact_rr.abs().max(1.0));
        }
    }
}
