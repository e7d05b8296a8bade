//! Deterministic simulator for wireless camera sensor networks.
//!
//! The library models a field of image sensors that cooperate to push
//! pictures of detected events toward a mobile robot sink: triangular
//! fields of view and the cover sets that replicate them (`geometry`),
//! two-round neighborhood discovery and forwarder sets (`neighborhood`),
//! transmission-quality scoring of cover sets (`selection`), greedy,
//! perimeter and two-hop multi-path geographic routing (`routing`), a
//! discrete-event radio and CSMA/CA engine (`sim`), image fragmentation
//! and reassembly (`imaging`), and per-run metrics with CSV and JSON
//! export (`metrics`). `config` and `experiment` tie the pieces into
//! reproducible scenario runs driven by the `visnet` binary.

use std::fmt;

pub mod config;
pub mod experiment;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod neighborhood;
pub mod routing;
pub mod selection;
pub mod sim;

/// Identifier of a sensor node within one deployment.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct NodeId(pub u16);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}
