//! Endpoint transmitter and receiver state machines.
//!
//! Two protocol modes share one code path wherever possible:
//!
//! * `Baseline`: the CRC is a per-hop link check. A flit either carries its
//!   own explicit sequence number (cmd 0) or sacrifices the field to
//!   piggyback an acknowledgment (cmd 1). Piggybacking flits are accepted on
//!   data integrity alone: the receiver bumps its expected counter but
//!   cannot validate the sequence, so a drop immediately followed by a
//!   piggybacking flit slips through silently and is only caught by the next
//!   explicitly numbered flit.
//! * `Rxl`: the CRC is end-to-end and folds in the implicit sequence
//!   number, so *every* accepted flit is sequence-validated, piggybacking or
//!   not, and the FSN field is free to carry acknowledgments at any time.
//!
//! Retry is go-back-N over a replay buffer of at most 512 entries (half the
//! sequence space, the classic ARQ ambiguity bound). A NACK names the last
//! valid sequence number; it both acknowledges everything up to it and
//! requests retransmission of everything after it. Retransmitted flits never
//! piggyback: they always carry explicit identity so the receiver can
//! re-synchronize. Single-flit retry requests (cmd 3) are parsed but mapped
//! to go-back-N; selective repeat is intentionally unimplemented.

use std::collections::VecDeque;

use crate::flit_codec::{
    Flit, FlitCodec, FlitHeader, ReplayCmd, SeqNum, PAYLOAD_BYTES,
};

/// Protocol stack selector, fixed per scenario.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProtocolMode {
    Baseline,
    Rxl,
}

/// Replay window capacity: half the 10-bit sequence space.
pub const WINDOW_CAPACITY: usize = 512;

/// Messages per 128-byte payload group the flit format can carry.
pub const MAX_MESSAGES_PER_GROUP: usize = 44;

/// Capacity predicate for a packing plan; message contents stay abstract.
#[must_use]
pub fn messages_fit_group(count: usize) -> bool {
    count <= MAX_MESSAGES_PER_GROUP
}

/// Transaction classification used by the end-to-end stream classifier.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MessageKind {
    Request,
    Response,
    Data,
}

/// Abstract transaction riding in a flit. Transactions sharing a `cqid`
/// require in-order delivery.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Message {
    pub kind: MessageKind,
    pub cqid: u32,
    pub msg_id: u64,
}

/// Backpressure: the replay buffer already holds 512 unacknowledged flits.
#[derive(Debug, thiserror::Error)]
#[error("replay window full ({WINDOW_CAPACITY} unacknowledged flits)")]
pub struct WindowFull;

/// Encodes one flit for its mode: baseline covers the bytes as-is, the
/// implicit-sequence mode folds `seq` into the CRC.
#[must_use]
pub fn encode_flit_for(codec: &FlitCodec, mode: ProtocolMode, header: FlitHeader, payload: &[u8; PAYLOAD_BYTES], seq: SeqNum) -> Flit {
    match mode {
        ProtocolMode::Baseline => codec.encode_baseline(header, payload),
        ProtocolMode::Rxl => codec.encode_isn(header, payload, seq),
    }
}

/// Header for a first transmission under `mode`, given an optional
/// piggybacked acknowledgment.
#[must_use]
pub fn emission_header(mode: ProtocolMode, seq: SeqNum, piggyback_ack: Option<SeqNum>) -> FlitHeader {
    match (mode, piggyback_ack) {
        // the flit's own sequence number is not transmitted when piggybacking
        (_, Some(ack)) => FlitHeader::new(ack, ReplayCmd::Ack),
        (ProtocolMode::Baseline, None) => FlitHeader::new(seq, ReplayCmd::Seq),
        // implicit mode never transmits seq; the field is zero when idle
        (ProtocolMode::Rxl, None) => FlitHeader::new(SeqNum::ZERO, ReplayCmd::Seq),
    }
}

struct ReplayEntry {
    seq: SeqNum,
    payload: [u8; PAYLOAD_BYTES],
    /// Opaque caller tag (the simulator's ground-truth id).
    tag: u64,
}

struct Retry {
    last_valid: SeqNum,
    /// Next sequence number to retransmit.
    cursor: SeqNum,
}

/// Metadata of a freshly assigned emission; the wire image can be built
/// lazily with [`encode_flit_for`].
#[derive(Clone, Copy, Debug)]
pub struct EmitMeta {
    pub seq: SeqNum,
    pub header: FlitHeader,
}

/// Metadata of the next go-back-N retransmission.
#[derive(Clone, Copy, Debug)]
pub struct RetransMeta {
    pub seq: SeqNum,
    pub header: FlitHeader,
    pub tag: u64,
}

/// Outcome of delivering a NACK to the transmitter.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NackResponse {
    /// Coalesced into the retry already in progress, or nothing to resend.
    Ignored,
    /// A new go-back-N replay begins (costs one retry latency).
    RetryStarted,
}

/// Transmitter: sequence assignment, replay buffer, go-back-N scheduling.
pub struct TxState {
    mode: ProtocolMode,
    next_seq: SeqNum,
    replay: VecDeque<ReplayEntry>,
    retry: Option<Retry>,
}

impl TxState {
    #[must_use]
    pub fn new(mode: ProtocolMode) -> Self {
        Self { mode, next_seq: SeqNum::ZERO, replay: VecDeque::new(), retry: None }
    }

    #[must_use]
    pub fn mode(&self) -> ProtocolMode {
        self.mode
    }

    #[must_use]
    pub fn next_seq(&self) -> SeqNum {
        self.next_seq
    }

    #[must_use]
    pub fn outstanding(&self) -> usize {
        self.replay.len()
    }

    #[must_use]
    pub fn retry_in_progress(&self) -> bool {
        self.retry.is_some()
    }

    /// Oldest unacknowledged sequence number, if any.
    #[must_use]
    pub fn base_seq(&self) -> Option<SeqNum> {
        self.replay.front().map(|e| e.seq)
    }

    /// Assigns the next sequence number, buffers the payload, and returns
    /// the header/sequence pair for the wire. Fails when the window is full;
    /// the caller must stall until ACKs arrive.
    pub fn emit_meta(&mut self, payload: &[u8; PAYLOAD_BYTES], tag: u64, piggyback_ack: Option<SeqNum>) -> Result<EmitMeta, WindowFull> {
        if self.replay.len() >= WINDOW_CAPACITY {
            return Err(WindowFull);
        }
        let seq = self.next_seq;
        let header = emission_header(self.mode, seq, piggyback_ack);
        self.replay.push_back(ReplayEntry { seq, payload: *payload, tag });
        self.next_seq = seq.next();
        Ok(EmitMeta { seq, header })
    }

    /// [`Self::emit_meta`] plus immediate encoding.
    pub fn emit(&mut self, codec: &FlitCodec, payload: &[u8; PAYLOAD_BYTES], tag: u64, piggyback_ack: Option<SeqNum>) -> Result<Flit, WindowFull> {
        let meta = self.emit_meta(payload, tag, piggyback_ack)?;
        Ok(encode_flit_for(codec, self.mode, meta.header, payload, meta.seq))
    }

    /// Releases every replay entry up to and including `acknum`. Stale or
    /// out-of-window acknowledgments are ignored (idempotent).
    pub fn on_ack(&mut self, acknum: SeqNum) {
        while let Some(front) = self.replay.front() {
            // acknum covers front iff it sits 0..512 ahead of it
            if acknum.distance_from(front.seq) < WINDOW_CAPACITY as u16 {
                self.replay.pop_front();
            } else {
                break;
            }
        }
    }

    /// Go-back-N: acknowledges everything up to `last_valid`, then schedules
    /// retransmission of `last_valid+1 ..= next_seq-1`. A repeat NACK naming
    /// the last_valid of the replay already in progress is coalesced.
    ///
    /// Panics if the window invariant is broken (entries after `last_valid`
    /// were already released); that is a protocol error, not a recoverable
    /// condition.
    pub fn on_nack(&mut self, last_valid: SeqNum) -> NackResponse {
        if let Some(retry) = &self.retry {
            if retry.last_valid == last_valid {
                return NackResponse::Ignored;
            }
        }
        self.on_ack(last_valid);
        let resume = last_valid.next();
        if resume == self.next_seq {
            // nothing outstanding beyond last_valid
            self.retry = None;
            return NackResponse::Ignored;
        }
        let front = self.replay.front().map(|e| e.seq);
        assert!(
            front == Some(resume),
            "go-back-N resume point {resume:?} evicted from replay buffer (front {front:?})"
        );
        self.retry = Some(Retry { last_valid, cursor: resume });
        NackResponse::RetryStarted
    }

    /// Restarts transmission from the oldest unacknowledged flit; used by
    /// the replay timer when the stream has no successor flit to reveal a
    /// loss. Returns false when nothing is outstanding.
    pub fn begin_timeout_replay(&mut self) -> bool {
        match self.replay.front() {
            None => {
                self.retry = None;
                false
            }
            Some(front) => {
                self.retry = Some(Retry { last_valid: front.seq.prev(), cursor: front.seq });
                true
            }
        }
    }

    /// Next scheduled retransmission, in order. Retransmitted flits always
    /// carry explicit identity (cmd 0; never piggyback). Returns None when
    /// no replay is in progress; the replay is cleared once its last entry
    /// has been handed out.
    pub fn next_retransmission_meta(&mut self) -> Option<RetransMeta> {
        let retry = self.retry.as_mut()?;
        // ACKs that raced in may have released entries past the cursor
        if let Some(front) = self.replay.front() {
            if front.seq.is_newer_than(retry.cursor) {
                retry.cursor = front.seq;
            }
        } else {
            self.retry = None;
            return None;
        }
        if retry.cursor == self.next_seq {
            self.retry = None;
            return None;
        }
        let front_seq = self.replay.front().expect("nonempty").seq;
        let index = retry.cursor.distance_from(front_seq) as usize;
        let entry = &self.replay[index];
        let header = match self.mode {
            ProtocolMode::Baseline => FlitHeader::new(entry.seq, ReplayCmd::Seq),
            ProtocolMode::Rxl => FlitHeader::new(SeqNum::ZERO, ReplayCmd::Seq),
        };
        let meta = RetransMeta { seq: entry.seq, header, tag: entry.tag };
        retry.cursor = retry.cursor.next();
        if retry.cursor == self.next_seq {
            self.retry = None;
        }
        Some(meta)
    }

    /// [`Self::next_retransmission_meta`] plus immediate encoding.
    pub fn next_retransmission(&mut self, codec: &FlitCodec) -> Option<(Flit, u64)> {
        let meta = self.next_retransmission_meta()?;
        let payload = *self.payload_of(meta.seq).expect("scheduled entry present");
        Some((encode_flit_for(codec, self.mode, meta.header, &payload, meta.seq), meta.tag))
    }

    /// Buffered payload for `seq`, if still unacknowledged.
    #[must_use]
    pub fn payload_of(&self, seq: SeqNum) -> Option<&[u8; PAYLOAD_BYTES]> {
        let front = self.replay.front()?.seq;
        let index = seq.distance_from(front) as usize;
        let entry = self.replay.get(index)?;
        (entry.seq == seq).then_some(&entry.payload)
    }
}

/// Receiver's view of one arrived flit. The simulator supplies either a
/// fully decoded wire flit or a ground-truth shortcut for flits it knows are
/// untouched; both answer the same questions so the accept logic exists once.
pub trait FlitView {
    fn header(&self) -> FlitHeader;
    /// Baseline link CRC over the bytes as received.
    fn crc_ok(&self) -> bool;
    /// End-to-end CRC re-derived with the receiver's expected sequence number.
    fn isn_ok(&self, eseq: SeqNum) -> bool;
    fn payload(&self) -> [u8; PAYLOAD_BYTES];
}

/// [`FlitView`] over a real decoded flit.
pub struct DecodedFlit<'a> {
    pub flit: &'a Flit,
    pub codec: &'a FlitCodec,
}

impl FlitView for DecodedFlit<'_> {
    fn header(&self) -> FlitHeader {
        self.flit.header()
    }

    fn crc_ok(&self) -> bool {
        self.codec.verify_baseline(self.flit)
    }

    fn isn_ok(&self, eseq: SeqNum) -> bool {
        self.codec.verify_isn(self.flit, eseq)
    }

    fn payload(&self) -> [u8; PAYLOAD_BYTES] {
        self.flit.payload
    }
}

/// Receiver decision for one arrived flit.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RxAction {
    /// Integrity passed; deliver the payload. Carries the piggybacked
    /// acknowledgment when the flit had one.
    Forward { piggyback_ack: Option<SeqNum> },
    /// Integrity or sequence check failed: request go-back-N after
    /// `last_valid`. The receiver resets its expectation to `last_valid+1`
    /// and will keep answering stray pre-retry flits with the same NACK
    /// (the transmitter coalesces repeats).
    Nack { last_valid: SeqNum },
    /// Explicitly numbered flit older than expected: go-back-N overlap.
    /// Worth an immediate duplicate-ACK so a timed-out replay can drain.
    DiscardDuplicate,
}

/// Receiver: expected-sequence tracking, validation split, ACK coalescing.
pub struct RxState {
    mode: ProtocolMode,
    eseq: SeqNum,
    last_validated: SeqNum,
    coalesce_k: u32,
    since_last_ack: u32,
    forwarded: u64,
}

impl RxState {
    /// `coalesce_k` = flits per acknowledgment (1/p_coalescing).
    #[must_use]
    pub fn new(mode: ProtocolMode, coalesce_k: u32) -> Self {
        assert!(coalesce_k >= 1, "coalesce_k must be >= 1");
        Self {
            mode,
            eseq: SeqNum::ZERO,
            // "one before flit zero": consistent with eseq-1 under wraparound
            last_validated: SeqNum::ZERO.prev(),
            coalesce_k,
            since_last_ack: 0,
            forwarded: 0,
        }
    }

    #[must_use]
    pub fn eseq(&self) -> SeqNum {
        self.eseq
    }

    #[must_use]
    pub fn last_validated(&self) -> SeqNum {
        self.last_validated
    }

    #[must_use]
    pub fn forwarded(&self) -> u64 {
        self.forwarded
    }

    fn nack(&mut self) -> RxAction {
        let last_valid = self.last_validated;
        self.eseq = last_valid.next();
        RxAction::Nack { last_valid }
    }

    /// FEC flagged the flit uncorrectable before any CRC ran; nothing in it
    /// can be trusted, so request a retry from the last validated point.
    pub fn on_fec_uncorrectable(&mut self) -> RxAction {
        self.nack()
    }

    /// Accept logic for a FEC-clean (or corrected) flit.
    ///
    /// Baseline mode trusts cmd-1 flits on CRC alone; the expected counter
    /// advances but `last_validated` does not, which is exactly the window
    /// a silent drop escapes through. Cmd 2/3 belong to the reverse channel;
    /// on the data path they can only mean corruption that survived the
    /// integrity checks (a switch rewriting the CRC over flipped header
    /// bits), so they are refused with a retry request.
    pub fn rx_accept<V: FlitView>(&mut self, flit: &V) -> RxAction {
        match self.mode {
            ProtocolMode::Baseline => {
                // CRC first: a corrupted flit may carry any header bits,
                // including the control commands rejected below
                if !flit.crc_ok() {
                    return self.nack();
                }
                let header = flit.header();
                match header.cmd {
                    ReplayCmd::Ack => {
                        self.eseq = self.eseq.next();
                        self.forwarded += 1;
                        RxAction::Forward { piggyback_ack: Some(header.fsn) }
                    }
                    ReplayCmd::Seq => {
                        if header.fsn == self.eseq {
                            self.last_validated = header.fsn;
                            self.eseq = self.eseq.next();
                            self.forwarded += 1;
                            RxAction::Forward { piggyback_ack: None }
                        } else if header.fsn.is_older_than(self.eseq) {
                            // Re-assert receipt of everything through this
                            // fsn: the receiver believes it has it (fsn <
                            // eseq), and the acknowledgment must say so or a
                            // timed-out replay of a flit delivered without
                            // validation would be discarded forever. When an
                            // unvalidated cmd-1 forward advanced eseq over a
                            // real loss, this is the moment that loss turns
                            // permanent, acknowledged on belief.
                            if header.fsn.is_newer_than(self.last_validated) {
                                self.last_validated = header.fsn;
                            }
                            RxAction::DiscardDuplicate
                        } else {
                            self.nack()
                        }
                    }
                    ReplayCmd::NackGoBackN | ReplayCmd::NackSingle => self.nack(),
                }
            }
            ProtocolMode::Rxl => {
                if flit.isn_ok(self.eseq) {
                    self.eseq = self.eseq.next();
                    self.last_validated = self.eseq.prev();
                    self.forwarded += 1;
                    let header = flit.header();
                    let ack = (header.cmd == ReplayCmd::Ack).then_some(header.fsn);
                    RxAction::Forward { piggyback_ack: ack }
                } else {
                    self.nack()
                }
            }
        }
    }

    /// ACK coalescing: after every `coalesce_k` forwarded flits, emit one
    /// acknowledgment carrying the newest forwarded sequence number the
    /// receiver can actually name. Call once after each `Forward`.
    ///
    /// The acknum is `last_validated`, not `eseq - 1`: the two agree except
    /// while an unvalidated cmd-1 flit has advanced eseq over a silent drop,
    /// and in that window an eseq-based acknowledgment would release a
    /// replay entry that was never delivered, wedging go-back-N.
    pub fn ack_scheduler(&mut self) -> Option<SeqNum> {
        self.since_last_ack += 1;
        if self.since_last_ack >= self.coalesce_k {
            self.since_last_ack = 0;
            Some(self.last_validated)
        } else {
            None
        }
    }

    /// Acknowledgment to send immediately on a discarded duplicate, so a
    /// timed-out replay drains the transmitter's window.
    #[must_use]
    pub fn duplicate_ack(&self) -> SeqNum {
        self.last_validated
    }

    /// Ack-timer flush: emit the pending coalesced acknowledgment early.
    /// Used when the transmitter stalls on a full window.
    pub fn flush_ack(&mut self) -> Option<SeqNum> {
        if self.since_last_ack == 0 {
            return None;
        }
        self.since_last_ack = 0;
        Some(self.last_validated)
    }
}

/// Reverse-channel command parsing. Single-flit retry (cmd 3) maps to
/// go-back-N: selective repeat is unimplemented by design.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ControlMsg {
    Ack(SeqNum),
    NackGoBackN(SeqNum),
}

#[must_use]
pub fn parse_control(header: FlitHeader) -> Option<ControlMsg> {
    match header.cmd {
        ReplayCmd::Ack => Some(ControlMsg::Ack(header.fsn)),
        ReplayCmd::NackGoBackN | ReplayCmd::NackSingle => Some(ControlMsg::NackGoBackN(header.fsn)),
        ReplayCmd::Seq => None,
    }
}
