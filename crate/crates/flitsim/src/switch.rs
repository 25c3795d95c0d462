//! Cut-through switch model.
//!
//! A switch terminates FEC on ingress and regenerates it on egress; the
//! 250-byte core crosses an unprotected internal datapath in between. What
//! else the switch does depends on the protocol mode:
//!
//! * `Baseline`: the link CRC is also terminated per hop: checked after FEC
//!   decode (drop on mismatch) and recomputed over the possibly-modified
//!   header and payload before egress. Recomputing is what launders internal
//!   corruption: bits flipped inside the switch leave with a freshly valid
//!   CRC and nothing downstream can tell.
//! * `Rxl`: the CRC is end-to-end, so the switch never reads or writes it.
//!   Internal corruption travels out under the source's checksum and fails
//!   verification at the destination endpoint.
//!
//! Switches have no replay state and cannot NACK. An uncorrectable arrival
//! is silently dropped; the endpoints discover the loss through the next
//! explicitly numbered flit or the replay timer.

use rand::Rng;

use crate::fec_rs::{fec_decode_flit, fec_encode_flit, FlitVerdict};
use crate::flit_codec::{FlitCodec, CORE_BYTES, CRC_BYTES, HEADER_BYTES, PAYLOAD_BYTES, WIRE_BYTES};
use crate::link_layer::ProtocolMode;

/// Most bits internal corruption flips in one event.
pub const MAX_INTERNAL_FLIPS: u32 = 8;

const CORE_BITS: usize = CORE_BYTES * 8;

#[derive(Clone, Copy, Debug)]
pub struct SwitchConfig {
    pub mode: ProtocolMode,
    /// Per-traversal probability that the internal datapath corrupts the core.
    pub internal_error_prob: f64,
    /// Terminate the link CRC at this hop: check on ingress, regenerate on
    /// egress. Defaults to the mode's natural behavior.
    pub check_link_crc: bool,
}

impl SwitchConfig {
    #[must_use]
    pub fn new(mode: ProtocolMode, internal_error_prob: f64) -> Self {
        Self { mode, internal_error_prob, check_link_crc: mode == ProtocolMode::Baseline }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DropReason {
    FecUncorrectable,
    LinkCrcFail,
}

// Lives one call frame per hop; a 256-byte copy beats boxing here.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SwitchAction {
    Forward {
        wire: [u8; WIRE_BYTES],
        /// Ground-truth flag: the internal datapath modified the core.
        corrupted_internally: bool,
    },
    Drop(DropReason),
}

#[derive(Clone, Copy, Default, Debug)]
pub struct SwitchStats {
    pub forwarded: u64,
    pub corrected: u64,
    pub dropped_fec: u64,
    pub dropped_crc: u64,
    pub corrupted_internally: u64,
}

pub struct Switch {
    pub config: SwitchConfig,
    codec: FlitCodec,
    pub stats: SwitchStats,
}

impl Switch {
    #[must_use]
    pub fn new(config: SwitchConfig, codec: FlitCodec) -> Self {
        Self { config, codec, stats: SwitchStats::default() }
    }

    /// Bernoulli roll for internal corruption on one traversal. Kept
    /// separate from [`Self::forward`] so the caller can decide the outcome
    /// before materializing wire bytes; zero probability consumes no
    /// randomness.
    pub fn roll_internal_corruption(&self, rng: &mut impl Rng) -> bool {
        self.config.internal_error_prob > 0.0 && rng.gen_bool(self.config.internal_error_prob)
    }

    /// One traversal with the corruption outcome already decided.
    /// `rng` is used only to place the flips when `corrupt_now` is set.
    pub fn forward(&mut self, wire: &[u8; WIRE_BYTES], corrupt_now: bool, rng: &mut impl Rng) -> SwitchAction {
        let decode = fec_decode_flit(wire);
        match decode.verdict {
            FlitVerdict::DetectedUncorrectable => {
                self.stats.dropped_fec += 1;
                return SwitchAction::Drop(DropReason::FecUncorrectable);
            }
            FlitVerdict::Corrected => self.stats.corrected += 1,
            FlitVerdict::Clean => {}
        }
        let mut core = decode.core;
        if self.config.check_link_crc && !link_crc_ok(&self.codec, &core) {
            self.stats.dropped_crc += 1;
            return SwitchAction::Drop(DropReason::LinkCrcFail);
        }
        if corrupt_now {
            corrupt_core(&mut core, rng);
            self.stats.corrupted_internally += 1;
        }
        if self.config.check_link_crc {
            regenerate_link_crc(&self.codec, &mut core);
        }
        self.stats.forwarded += 1;
        SwitchAction::Forward { wire: fec_encode_flit(&core), corrupted_internally: corrupt_now }
    }

    /// Roll and forward in one call.
    pub fn process(&mut self, wire: &[u8; WIRE_BYTES], rng: &mut impl Rng) -> SwitchAction {
        let corrupt_now = self.roll_internal_corruption(rng);
        self.forward(wire, corrupt_now, rng)
    }
}

fn link_crc_ok(codec: &FlitCodec, core: &[u8; CORE_BYTES]) -> bool {
    let stored = u64::from_le_bytes(core[HEADER_BYTES + PAYLOAD_BYTES..].try_into().expect("8 bytes"));
    codec.crc().compute(&core[..HEADER_BYTES + PAYLOAD_BYTES]) == stored
}

fn regenerate_link_crc(codec: &FlitCodec, core: &mut [u8; CORE_BYTES]) {
    let crc = codec.crc().compute(&core[..HEADER_BYTES + PAYLOAD_BYTES]);
    core[HEADER_BYTES + PAYLOAD_BYTES..].copy_from_slice(&crc.to_le_bytes());
}

/// Flips 1..=8 distinct uniformly placed bits across the 250-byte core.
fn corrupt_core(core: &mut [u8; CORE_BYTES], rng: &mut impl Rng) {
    let count = rng.gen_range(1..=MAX_INTERNAL_FLIPS);
    let mut chosen = [0usize; MAX_INTERNAL_FLIPS as usize];
    let mut placed = 0usize;
    while placed < count as usize {
        let bit = rng.gen_range(0..CORE_BITS);
        if chosen[..placed].contains(&bit) {
            continue;
        }
        chosen[placed] = bit;
        placed += 1;
        core[bit >> 3] ^= 1 << (bit & 7);
    }
}

// keep CRC_BYTES in the signature sanity check below honest
const _: () = assert!(HEADER_BYTES + PAYLOAD_BYTES + CRC_BYTES == CORE_BYTES);
