//! Images as fragment streams.
//!
//! A captured image is encoded once and cut into fixed-size fragments
//! that travel independently. The sink reassembles whatever arrives,
//! in any order, and a display timer started by the first fragment
//! bounds how long it waits before rendering what it has. Quality is
//! judged purely by the fraction of fragments lost; payload content is
//! never inspected.

use std::fmt;

/// Parameters of the on-sensor encoding pipeline.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct ImageSpec {
    /// Size of the raw capture in bytes.
    pub raw_size: u32,
    /// Size after compression, in bytes.
    pub encoded_size: u32,
    /// Maximum fragment payload in bytes.
    pub payload_size: u32,
    /// Fragment count produced by the encoder, when it reports one.
    /// Takes precedence over the size-derived count: the encoder's
    /// packetizer adds its own framing, so the two need not agree.
    pub packet_count: Option<u32>,
    /// Compression quality factor (informational).
    pub quality_factor: u32,
}

impl Default for ImageSpec {
    /// 128×100 8bpp capture compressed at quality factor 50, shipped
    /// as 205 fragments of up to 90 payload bytes.
    fn default() -> Self {
        ImageSpec {
            raw_size: 102_400,
            encoded_size: 16_621,
            payload_size: 90,
            packet_count: Some(205),
            quality_factor: 50,
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub enum ImagingError {
    InvalidSpec(String),
    /// Loss ratios live in [0, 1].
    InvalidLossRatio(f64),
}

impl fmt::Display for ImagingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImagingError::InvalidSpec(why) => write!(f, "invalid image spec: {why}"),
            ImagingError::InvalidLossRatio(v) => write!(f, "loss ratio {v} outside [0, 1]"),
        }
    }
}

impl std::error::Error for ImagingError {}

/// One unit of image data in flight.
#[derive(Clone, PartialEq, Debug)]
pub struct Fragment {
    pub image_id: u64,
    pub index: u32,
    pub total: u32,
    /// Bytes this fragment stands for (drives airtime).
    pub payload_len: u32,
    /// Real bytes when a file is being pushed through the network;
    /// synthetic streams carry none.
    pub bytes: Option<Vec<u8>>,
}

impl ImageSpec {
    /// Number of fragments one image becomes.
    pub fn fragment_count(&self) -> Result<u32, ImagingError> {
        if let Some(count) = self.packet_count {
            if count == 0 {
                return Err(ImagingError::InvalidSpec("packet count of zero".into()));
            }
            return Ok(count);
        }
        if self.payload_size == 0 {
            return Err(ImagingError::InvalidSpec("payload size of zero".into()));
        }
        if self.encoded_size == 0 {
            return Err(ImagingError::InvalidSpec("encoded size of zero".into()));
        }
        Ok(self.encoded_size.div_ceil(self.payload_size))
    }
}

/// Cuts a synthetic image into its fragment stream. Every fragment
/// reports the full payload size: the stream models the encoder's
/// packet count, not an exact byte split.
pub fn fragment(spec: &ImageSpec, image_id: u64) -> Result<Vec<Fragment>, ImagingError> {
    let total = spec.fragment_count()?;
    Ok((0..total)
        .map(|index| Fragment {
            image_id,
            index,
            total,
            payload_len: spec.payload_size,
            bytes: None,
        })
        .collect())
}

/// Cuts real bytes into fragments of at most `payload_size` bytes; the
/// last fragment may be shorter.
pub fn fragment_bytes(
    image_id: u64,
    data: &[u8],
    payload_size: u32,
) -> Result<Vec<Fragment>, ImagingError> {
    if payload_size == 0 {
        return Err(ImagingError::InvalidSpec("payload size of zero".into()));
    }
    if data.is_empty() {
        return Err(ImagingError::InvalidSpec("empty image data".into()));
    }
    let chunks: Vec<&[u8]> = data.chunks(payload_size as usize).collect();
    let total = chunks.len() as u32;
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(index, chunk)| Fragment {
            image_id,
            index: index as u32,
            total,
            payload_len: chunk.len() as u32,
            bytes: Some(chunk.to_vec()),
        })
        .collect())
}

/// Quality verdict on a reassembled image.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ImageClass {
    /// Every fragment arrived.
    Complete,
    /// Missing data, but no more than 60% of it.
    Usable,
    /// More than 60% lost; not worth rendering.
    Unusable,
}

/// Judges an image by its fragment loss ratio. Exactly 60% loss still
/// counts as usable; only strictly more is rejected.
pub fn classify(loss_ratio: f64) -> Result<ImageClass, ImagingError> {
    if !(0.0..=1.0).contains(&loss_ratio) {
        return Err(ImagingError::InvalidLossRatio(loss_ratio));
    }
    Ok(if loss_ratio == 0.0 {
        ImageClass::Complete
    } else if loss_ratio <= 0.60 {
        ImageClass::Usable
    } else {
        ImageClass::Unusable
    })
}

/// What happened to a fragment handed to a reassembly buffer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FragmentDisposition {
    Accepted,
    Duplicate,
    /// Arrived after the buffer was finalized or its deadline passed.
    Late,
}

/// Everything recorded about one image once its buffer is closed.
#[derive(Clone, PartialEq, Debug)]
pub struct ImageResult {
    pub image_id: u64,
    pub expected: u32,
    pub received: u32,
    pub loss_ratio: f64,
    /// Seconds from burst start to finalization.
    pub latency: f64,
    pub class: ImageClass,
    pub late_fragments: u32,
}

/// Order-independent collector for one image's fragments.
#[derive(Clone, Debug)]
pub struct ReassemblyBuffer {
    image_id: u64,
    expected: u32,
    seen: Vec<u64>,
    received: u32,
    burst_start: f64,
    display_timer: f64,
    deadline: Option<f64>,
    late: u32,
    finalized: bool,
}

impl ReassemblyBuffer {
    /// `burst_start` is when the source began sending; the display
    /// deadline is armed by the first accepted fragment.
    pub fn new(image_id: u64, expected: u32, burst_start: f64, display_timer: f64) -> Self {
        ReassemblyBuffer {
            image_id,
            expected,
            seen: vec![0; (expected as usize).div_ceil(64)],
            received: 0,
            burst_start,
            display_timer,
            deadline: None,
            late: 0,
            finalized: false,
        }
    }

    pub fn image_id(&self) -> u64 {
        self.image_id
    }

    pub fn expected(&self) -> u32 {
        self.expected
    }

    pub fn received(&self) -> u32 {
        self.received
    }

    pub fn late_fragments(&self) -> u32 {
        self.late
    }

    /// Display deadline, once the first fragment has armed it.
    pub fn deadline(&self) -> Option<f64> {
        self.deadline
    }

    pub fn is_complete(&self) -> bool {
        self.received == self.expected
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn on_fragment(&mut self, index: u32, now: f64) -> FragmentDisposition {
        if index >= self.expected {
            return FragmentDisposition::Late; // malformed; never count it received
        }
        if self.finalized || self.deadline.is_some_and(|d| now > d) {
            self.late += 1;
            return FragmentDisposition::Late;
        }
        let (word, bit) = (index as usize / 64, index as usize % 64);
        if self.seen[word] & (1 << bit) != 0 {
            return FragmentDisposition::Duplicate;
        }
        self.seen[word] |= 1 << bit;
        self.received += 1;
        if self.deadline.is_none() {
            self.deadline = Some(now + self.display_timer);
        }
        FragmentDisposition::Accepted
    }

    /// Closes the buffer and reports the image. Fires either when the
    /// last fragment lands or when the display timer expires, whichever
    /// comes first.
    pub fn finalize(&mut self, now: f64) -> ImageResult {
        self.finalized = true;
        let loss_ratio = (self.expected - self.received) as f64 / self.expected as f64;
        ImageResult {
            image_id: self.image_id,
            expected: self.expected,
            received: self.received,
            loss_ratio,
            latency: now - self.burst_start,
            class: classify(loss_ratio).expect("internal loss ratios are always in range"),
            late_fragments: self.late,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_spec_fragments_into_205_pieces() {
        let frags = fragment(&ImageSpec::default(), 7).unwrap();
        assert_eq!(frags.len(), 205);
        assert!(frags.iter().all(|f| f.total == 205 && f.payload_len == 90 && f.image_id == 7));
        assert_eq!(frags.last().unwrap().index, 204);
    }

    #[test]
    fn size_derived_count_rounds_up() {
        let spec = ImageSpec { packet_count: None, encoded_size: 900, payload_size: 90, ..ImageSpec::default() };
        assert_eq!(spec.fragment_count().unwrap(), 10);
        let spec = ImageSpec { packet_count: None, encoded_size: 90, payload_size: 90, ..ImageSpec::default() };
        assert_eq!(spec.fragment_count().unwrap(), 1);
        let spec = ImageSpec { packet_count: None, encoded_size: 91, payload_size: 90, ..ImageSpec::default() };
        assert_eq!(spec.fragment_count().unwrap(), 2);
    }

    #[test]
    fn explicit_count_beats_the_size_arithmetic() {
        // 16621 / 90 would give 185, but the encoder says 205.
        let spec = ImageSpec::default();
        assert_eq!(spec.encoded_size.div_ceil(spec.payload_size), 185);
        assert_eq!(spec.fragment_count().unwrap(), 205);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let spec = ImageSpec { packet_count: Some(0), ..ImageSpec::default() };
        assert!(spec.fragment_count().is_err());
        let spec = ImageSpec { packet_count: None, payload_size: 0, ..ImageSpec::default() };
        assert!(spec.fragment_count().is_err());
        assert!(fragment_bytes(1, &[], 90).is_err());
        assert!(fragment_bytes(1, &[1, 2, 3], 0).is_err());
    }

    #[test]
    fn byte_chunks_reassemble_into_the_original() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<u8> = (0..1234).map(|_| rng.gen()).collect();
        let frags = fragment_bytes(42, &data, 90).unwrap();
        assert_eq!(frags.len(), 14); // 13 full + 1 partial
        assert_eq!(frags.last().unwrap().payload_len, 1234 - 13 * 90);
        let rebuilt: Vec<u8> =
            frags.iter().flat_map(|f| f.bytes.clone().unwrap()).collect();
        assert_eq!(rebuilt, data);
    }

    #[test]
    fn buffer_finalizes_early_when_every_fragment_lands() {
        let mut buf = ReassemblyBuffer::new(1, 5, 10.0, 10.0);
        for i in 0..5 {
            assert_eq!(buf.on_fragment(i, 10.2 + i as f64 * 0.01), FragmentDisposition::Accepted);
        }
        assert!(buf.is_complete());
        let result = buf.finalize(10.24);
        assert_eq!(result.received, 5);
        assert_eq!(result.loss_ratio, 0.0);
        assert_eq!(result.class, ImageClass::Complete);
        assert!((result.latency - 0.24).abs() < 1e-12);
    }

    #[test]
    fn stalled_buffer_waits_out_the_display_timer() {
        let mut buf = ReassemblyBuffer::new(1, 205, 5.0, 10.0);
        assert_eq!(buf.on_fragment(0, 6.5), FragmentDisposition::Accepted);
        assert_eq!(buf.deadline(), Some(16.5));
        // The sink fires the timer; 204 fragments never came.
        let result = buf.finalize(16.5);
        assert_eq!(result.received, 1);
        assert_eq!(result.class, ImageClass::Unusable);
        assert!((result.latency - 11.5).abs() < 1e-12);
    }

    #[test]
    fn duplicates_change_nothing() {
        let mut buf = ReassemblyBuffer::new(1, 10, 0.0, 10.0);
        assert_eq!(buf.on_fragment(3, 1.0), FragmentDisposition::Accepted);
        assert_eq!(buf.on_fragment(3, 1.5), FragmentDisposition::Duplicate);
        assert_eq!(buf.received(), 1);
        assert_eq!(buf.late_fragments(), 0);
    }

    #[test]
    fn fragments_after_deadline_or_finalize_count_as_late() {
        let mut buf = ReassemblyBuffer::new(1, 10, 0.0, 10.0);
        buf.on_fragment(0, 1.0);
        // Exactly on the deadline still counts.
        assert_eq!(buf.on_fragment(1, 11.0), FragmentDisposition::Accepted);
        assert_eq!(buf.on_fragment(2, 11.0001), FragmentDisposition::Late);
        let _ = buf.finalize(11.0001);
        assert_eq!(buf.on_fragment(3, 11.1), FragmentDisposition::Late);
        assert_eq!(buf.late_fragments(), 2);
    }

    #[test]
    fn reassembly_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let expected = rng.gen_range(1..60u32);
            let keep = rng.gen_range(0..=expected);
            let mut indices: Vec<u32> = (0..expected).collect();
            indices.shuffle(&mut rng);
            indices.truncate(keep as usize);

            let mut reference: Option<(u32, f64, ImageClass)> = None;
            for _ in 0..4 {
                let mut order = indices.clone();
                order.shuffle(&mut rng);
                let mut buf = ReassemblyBuffer::new(9, expected, 0.0, 10.0);
                for &i in &order {
                    buf.on_fragment(i, 1.0);
                }
                let result = buf.finalize(2.0);
                let key = (result.received, result.loss_ratio, result.class);
                match &reference {
                    None => reference = Some(key),
                    Some(prev) => assert_eq!(*prev, key),
                }
            }
        }
    }

    #[test]
    fn classification_boundaries_are_exact() {
        assert_eq!(classify(0.0).unwrap(), ImageClass::Complete);
        assert_eq!(classify(0.3).unwrap(), ImageClass::Usable);
        assert_eq!(classify(0.75).unwrap(), ImageClass::Unusable);
        assert_eq!(classify(1.0).unwrap(), ImageClass::Unusable);

        // 123 of 205 fragments lost is exactly the 60% boundary, and
        // both ways of computing it land on the same float.
        let direct: f64 = 123.0 / 205.0;
        let complement: f64 = 1.0 - 82.0 / 205.0;
        assert_eq!(direct.to_bits(), 0.6f64.to_bits());
        assert_eq!(complement.to_bits(), 0.6f64.to_bits());
        assert_eq!(classify(direct).unwrap(), ImageClass::Usable);

        // One ulp above the boundary tips over.
        let above = f64::from_bits(0.6f64.to_bits() + 1);
        assert_eq!(classify(above).unwrap(), ImageClass::Unusable);

        assert!(classify(-0.1).is_err());
        assert!(classify(1.1).is_err());
        assert!(classify(f64::NAN).is_err());
    }

    #[test]
    fn boundary_loss_through_a_buffer_is_usable() {
        let mut buf = ReassemblyBuffer::new(1, 205, 0.0, 10.0);
        for i in 0..82 {
            buf.on_fragment(i, 0.5);
        }
        let result = buf.finalize(10.5);
        assert_eq!(result.loss_ratio.to_bits(), 0.6f64.to_bits());
        assert_eq!(result.class, ImageClass::Usable);
    }
}
