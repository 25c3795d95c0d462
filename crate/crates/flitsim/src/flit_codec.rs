//! Bit-exact construction and verification of 256-byte flits.
//!
//! Wire image: bytes 0-1 header, bytes 2-241 payload, bytes 242-249 CRC-64
//! (little-endian), bytes 250-255 FEC parity (owned by [`crate::fec_rs`]).
//! The header is a little-endian u16: bits 0-9 sequence/ack number (FSN),
//! bits 10-11 replay command, bits 12-15 reserved zero.
//!
//! Two CRC disciplines cover the 242-byte header‖payload prefix:
//!
//! * baseline: CRC over the bytes exactly as transmitted;
//! * implicit sequence number (ISN): the sender's 10-bit sequence number is
//!   XORed into payload bytes 0-1 *inside the CRC computation only*. The wire
//!   payload is untouched; the receiver re-derives the checksum with its own
//!   expected sequence number, so a mismatch in either data or sequence
//!   position fails verification. The fold difference between any two
//!   sequence numbers spans at most 10 bits, well inside the 64-bit burst
//!   detection guarantee, so seq != eseq always fails for intact payloads.

pub const HEADER_BYTES: usize = 2;
pub const PAYLOAD_BYTES: usize = 240;
pub const CRC_BYTES: usize = 8;
pub const FEC_BYTES: usize = 6;
/// Header + payload + CRC: the CRC-protected, FEC-covered region.
pub const CORE_BYTES: usize = HEADER_BYTES + PAYLOAD_BYTES + CRC_BYTES;
pub const WIRE_BYTES: usize = CORE_BYTES + FEC_BYTES;

const _: () = assert!(CORE_BYTES == 250 && WIRE_BYTES == 256);

/// Sequence numbers live in a 10-bit space.
pub const SEQ_SPACE: u16 = 1024;
/// Ordering is only total within half the space (ARQ ambiguity bound).
pub const SEQ_HALF_WINDOW: u16 = SEQ_SPACE / 2;

/// Default CRC-64 polynomial (ECMA-182 coefficients), used non-reflected
/// with zero init and no final XOR.
pub const DEFAULT_CRC_POLY: u64 = 0x42F0_E1EB_A9EA_3693;

/// 10-bit sequence counter with modular arithmetic and half-window ordering.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct SeqNum(u16);

impl SeqNum {
    pub const ZERO: SeqNum = SeqNum(0);

    /// Wraps into the 10-bit space.
    #[must_use]
    pub const fn new(v: u16) -> Self {
        Self(v % SEQ_SPACE)
    }

    #[must_use]
    pub const fn value(self) -> u16 {
        self.0
    }

    #[must_use]
    pub const fn next(self) -> Self {
        Self((self.0 + 1) % SEQ_SPACE)
    }

    #[must_use]
    pub const fn prev(self) -> Self {
        Self((self.0 + SEQ_SPACE - 1) % SEQ_SPACE)
    }

    #[must_use]
    pub const fn add(self, n: u16) -> Self {
        Self((self.0 + n % SEQ_SPACE) % SEQ_SPACE)
    }

    /// Forward (modular) distance from `from` to `self`, in 0..1024.
    #[must_use]
    pub const fn distance_from(self, from: SeqNum) -> u16 {
        (self.0 + SEQ_SPACE - from.0) % SEQ_SPACE
    }

    /// Half-window rule: `self` is newer when it lies strictly ahead of
    /// `other` by less than half the sequence space.
    #[must_use]
    pub fn is_newer_than(self, other: SeqNum) -> bool {
        let d = self.distance_from(other);
        d != 0 && d < SEQ_HALF_WINDOW
    }

    #[must_use]
    pub fn is_older_than(self, other: SeqNum) -> bool {
        other.is_newer_than(self)
    }
}

/// Meaning of the 10-bit FSN header field.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReplayCmd {
    /// FSN is the flit's own explicit sequence number.
    Seq = 0,
    /// FSN is a piggybacked acknowledgment number.
    Ack = 1,
    /// FSN is the last valid sequence number; retransmit everything after it.
    NackGoBackN = 2,
    /// Single-flit retry request; handled as go-back-N (selective repeat is
    /// intentionally unimplemented, see `link_layer`).
    NackSingle = 3,
}

impl ReplayCmd {
    #[must_use]
    pub const fn from_bits(bits: u8) -> Self {
        match bits & 0x3 {
            0 => ReplayCmd::Seq,
            1 => ReplayCmd::Ack,
            2 => ReplayCmd::NackGoBackN,
            _ => ReplayCmd::NackSingle,
        }
    }

    #[must_use]
    pub const fn bits(self) -> u8 {
        self as u8
    }
}

/// 2-byte flit header. Reserved bits are always zero on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FlitHeader {
    pub fsn: SeqNum,
    pub cmd: ReplayCmd,
}

impl FlitHeader {
    #[must_use]
    pub const fn new(fsn: SeqNum, cmd: ReplayCmd) -> Self {
        Self { fsn, cmd }
    }

    #[must_use]
    pub fn pack(self) -> [u8; HEADER_BYTES] {
        pack_header(self.fsn, self.cmd)
    }
}

#[must_use]
pub fn pack_header(fsn: SeqNum, cmd: ReplayCmd) -> [u8; HEADER_BYTES] {
    let word = fsn.value() | ((cmd.bits() as u16) << 10);
    word.to_le_bytes()
}

/// Inverse of [`pack_header`]. Reserved bits (12-15) are masked off; a
/// well-formed flit never sets them.
#[must_use]
pub fn unpack_header(bytes: [u8; HEADER_BYTES]) -> FlitHeader {
    let word = u16::from_le_bytes(bytes);
    FlitHeader {
        fsn: SeqNum::new(word & 0x3FF),
        cmd: ReplayCmd::from_bits(((word >> 10) & 0x3) as u8),
    }
}

/// Table-driven CRC-64, MSB-first, zero init, no reflection, no final XOR.
///
/// Any polynomial with the constant term set (bit 0) detects every error
/// burst of length <= 64 bits; the constructor enforces that.
pub struct Crc64 {
    poly: u64,
    table: [u64; 256],
}

impl Crc64 {
    /// Builds the byte table for `poly`. Panics if bit 0 of `poly` is clear
    /// (the burst-detection guarantee would not hold); config validation
    /// rejects such polynomials before anything is constructed.
    #[must_use]
    pub fn new(poly: u64) -> Self {
        assert!(poly & 1 == 1, "CRC polynomial must have its constant term set");
        let mut table = [0u64; 256];
        let mut i = 0usize;
        while i < 256 {
            let mut crc = (i as u64) << 56;
            let mut bit = 0;
            while bit < 8 {
                crc = if crc & (1 << 63) != 0 { (crc << 1) ^ poly } else { crc << 1 };
                bit += 1;
            }
            table[i] = crc;
            i += 1;
        }
        Self { poly, table }
    }

    #[must_use]
    pub fn poly(&self) -> u64 {
        self.poly
    }

    #[must_use]
    pub fn compute(&self, data: &[u8]) -> u64 {
        let mut crc = 0u64;
        for &b in data {
            crc = (crc << 8) ^ self.table[((crc >> 56) as u8 ^ b) as usize];
        }
        crc
    }
}

impl Default for Crc64 {
    fn default() -> Self {
        Self::new(DEFAULT_CRC_POLY)
    }
}

/// A flit as received. The header is kept as raw bytes so that corruption in
/// the reserved bits survives a parse/serialize round trip and stays visible
/// to CRC verification; `header()` gives the parsed view. `fec` is zero until
/// the FEC layer fills it in.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Flit {
    pub header_bytes: [u8; HEADER_BYTES],
    pub payload: [u8; PAYLOAD_BYTES],
    pub crc: u64,
    pub fec: [u8; FEC_BYTES],
}

impl Flit {
    #[must_use]
    pub fn header(&self) -> FlitHeader {
        unpack_header(self.header_bytes)
    }

    /// Header ‖ payload ‖ CRC, the 250-byte FEC-covered region.
    #[must_use]
    pub fn to_core(&self) -> [u8; CORE_BYTES] {
        let mut core = [0u8; CORE_BYTES];
        core[..HEADER_BYTES].copy_from_slice(&self.header_bytes);
        core[HEADER_BYTES..HEADER_BYTES + PAYLOAD_BYTES].copy_from_slice(&self.payload);
        core[HEADER_BYTES + PAYLOAD_BYTES..].copy_from_slice(&self.crc.to_le_bytes());
        core
    }

    /// Lossless: `from_core(&f.to_core())` reproduces `f` for arbitrary bytes.
    #[must_use]
    pub fn from_core(core: &[u8; CORE_BYTES]) -> Flit {
        let mut payload = [0u8; PAYLOAD_BYTES];
        payload.copy_from_slice(&core[HEADER_BYTES..HEADER_BYTES + PAYLOAD_BYTES]);
        let mut crc = [0u8; CRC_BYTES];
        crc.copy_from_slice(&core[HEADER_BYTES + PAYLOAD_BYTES..]);
        Flit {
            header_bytes: [core[0], core[1]],
            payload,
            crc: u64::from_le_bytes(crc),
            fec: [0u8; FEC_BYTES],
        }
    }
}

/// Flit encoder/verifier bound to one CRC polynomial.
pub struct FlitCodec {
    crc: Crc64,
}

impl FlitCodec {
    #[must_use]
    pub fn new(crc: Crc64) -> Self {
        Self { crc }
    }

    #[must_use]
    pub fn crc(&self) -> &Crc64 {
        &self.crc
    }

    /// CRC input: raw header bytes followed by the payload, with the
    /// sequence fold applied when `seq` is given.
    fn crc_input(header_bytes: [u8; HEADER_BYTES], payload: &[u8; PAYLOAD_BYTES], seq: Option<SeqNum>) -> [u8; HEADER_BYTES + PAYLOAD_BYTES] {
        let mut buf = [0u8; HEADER_BYTES + PAYLOAD_BYTES];
        buf[..HEADER_BYTES].copy_from_slice(&header_bytes);
        buf[HEADER_BYTES..].copy_from_slice(payload);
        if let Some(seq) = seq {
            buf[HEADER_BYTES] ^= (seq.value() & 0xFF) as u8;
            buf[HEADER_BYTES + 1] ^= ((seq.value() >> 8) & 0x3) as u8;
        }
        buf
    }

    #[must_use]
    pub fn encode_baseline(&self, header: FlitHeader, payload: &[u8; PAYLOAD_BYTES]) -> Flit {
        let header_bytes = header.pack();
        let crc = self.crc.compute(&Self::crc_input(header_bytes, payload, None));
        Flit { header_bytes, payload: *payload, crc, fec: [0u8; FEC_BYTES] }
    }

    #[must_use]
    pub fn verify_baseline(&self, flit: &Flit) -> bool {
        self.crc.compute(&Self::crc_input(flit.header_bytes, &flit.payload, None)) == flit.crc
    }

    /// The transmitted payload is the original; `seq` exists only inside the
    /// CRC computation. At `seq` = 0 this is byte-identical to
    /// [`Self::encode_baseline`].
    #[must_use]
    pub fn encode_isn(&self, header: FlitHeader, payload: &[u8; PAYLOAD_BYTES], seq: SeqNum) -> Flit {
        let header_bytes = header.pack();
        let crc = self.crc.compute(&Self::crc_input(header_bytes, payload, Some(seq)));
        Flit { header_bytes, payload: *payload, crc, fec: [0u8; FEC_BYTES] }
    }

    /// Passes only when the payload is intact *and* the sender's sequence
    /// number equals `eseq` (up to the 2^-64 escape probability).
    #[must_use]
    pub fn verify_isn(&self, flit: &Flit, eseq: SeqNum) -> bool {
        self.crc.compute(&Self::crc_input(flit.header_bytes, &flit.payload, Some(eseq))) == flit.crc
    }
}

impl Default for FlitCodec {
    fn default() -> Self {
        Self::new(Crc64::default())
    }
}
