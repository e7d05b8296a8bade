//! Frames on the air.
//!
//! Every transmission carries one [`Frame`]. Payload sizes are modeled,
//! not serialized: each frame kind has a nominal byte count that drives
//! airtime, and the per-frame protocol overhead (preamble, addressing,
//! checksum) is folded into a single constant added by the radio.

use crate::geometry::Position;
use crate::imaging::Fragment;
use crate::neighborhood::NeighborRecord;
use crate::routing::RoutingHeader;
use crate::NodeId;

/// Radio-level address. The sink is a quasi-node reachable like any
/// neighbor but not part of the camera id space.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Addr {
    Node(NodeId),
    Sink,
    Broadcast,
}

impl std::fmt::Display for Addr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Addr::Node(id) => write!(f, "{id}"),
            Addr::Sink => write!(f, "sink"),
            Addr::Broadcast => write!(f, "*"),
        }
    }
}

/// Nominal payload bytes for the control frames.
pub const HELLO_BYTES: u32 = 16;
pub const TABLE_ENTRY_BYTES: u32 = 12;
pub const TABLE_BASE_BYTES: u32 = 4;
pub const BEACON_BYTES: u32 = 12;
pub const INFO_REQUEST_BYTES: u32 = 4;
pub const INFO_REPLY_BYTES: u32 = 16;
pub const ACTIVATE_BYTES: u32 = 4;
pub const ACK_BYTES: u32 = 0;

/// Seconds the radio needs to turn around before sending an ack.
pub const ACK_TURNAROUND: f64 = 192e-6;

#[derive(Clone, Debug)]
pub enum FrameKind {
    /// Presence announcement with the sender's camera parameters.
    Hello { record: NeighborRecord },
    /// The sender's one-hop neighbor list.
    Table { records: Vec<NeighborRecord> },
    /// Sink position advertisement, flooded network-wide.
    Beacon { beacon_seq: u64, pos: Position },
    /// Sentry asks a potential cover-set member for its forwarding picture.
    InfoRequest,
    /// The member's answer, measured against its cached sink position.
    InfoReply {
        forwarders: u32,
        two_hop_forwarders: u32,
        residual_energy: f64,
        capture_rate: f64,
    },
    /// Order to a cover-set member to start its own image burst.
    Activate,
    /// One image fragment plus its routing state.
    FragmentData {
        header: RoutingHeader,
        fragment: Fragment,
        /// When the originating burst put this image's first fragment
        /// on the air; latency is measured from here.
        burst_start: f64,
        /// Camera that captured the image.
        origin: NodeId,
    },
    /// Link-layer acknowledgement for one received unicast frame.
    Ack { for_seq: u64 },
}

/// One MAC frame.
#[derive(Clone, Debug)]
pub struct Frame {
    pub src: Addr,
    pub dst: Addr,
    /// Per-sender sequence number; receivers use it to discard the
    /// duplicates produced by ack-less retries.
    pub seq: u64,
    pub kind: FrameKind,
}

impl Frame {
    /// Nominal payload size in bytes; the radio adds the fixed
    /// per-frame overhead on top.
    pub fn payload_bytes(&self) -> u32 {
        match &self.kind {
            FrameKind::Hello { .. } => HELLO_BYTES,
            FrameKind::Table { records } => {
                TABLE_BASE_BYTES + TABLE_ENTRY_BYTES * records.len() as u32
            }
            FrameKind::Beacon { .. } => BEACON_BYTES,
            FrameKind::InfoRequest => INFO_REQUEST_BYTES,
            FrameKind::InfoReply { .. } => INFO_REPLY_BYTES,
            FrameKind::Activate => ACTIVATE_BYTES,
            FrameKind::FragmentData { fragment, .. } => fragment.payload_len,
            FrameKind::Ack { .. } => ACK_BYTES,
        }
    }

    /// Unicast data wants a link-layer acknowledgement; broadcasts and
    /// acks themselves do not.
    pub fn wants_ack(&self) -> bool {
        self.dst != Addr::Broadcast && !matches!(self.kind, FrameKind::Ack { .. })
    }
}

/// Seconds a frame of `payload` bytes occupies the channel.
pub fn airtime(payload: u32, frame_overhead: u32, bitrate: f64) -> f64 {
    ((payload + frame_overhead) as f64) * 8.0 / bitrate
}
