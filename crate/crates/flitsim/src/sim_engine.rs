//! Slotted Monte Carlo simulator over a linear topology: source endpoint,
//! zero or more switches, destination endpoint.
//!
//! Time advances one forward emission per slot. Propagation is treated as
//! instantaneous and the reverse channel as error-free, so every arrival is
//! judged, acknowledged, or NACKed within the slot that carried it; a retry
//! additionally occupies the channel for the configured retry latency. This
//! is the coarsest model that still reproduces the bandwidth-loss accounting
//! of interest: busy time = emission slots + retry penalties + timeout waits.
//!
//! Every emission carries ground truth (flit id and true sequence number)
//! beside its wire image. A flit that nothing has corrupted keeps a `Clean`
//! wire state and skips all codec arithmetic: a canonical encoding decodes
//! to itself, passes FEC with no error, passes its own CRC, and passes the
//! sequence-folded check exactly when the receiver expects its sequence
//! number. Those facts are theorems about the codec (covered by its unit
//! tests), so the shortcut cannot change observable behavior; corruption of
//! any kind materializes real bytes and runs the full pipeline. Setting
//! `force_full_codec` disables the shortcut so the equivalence is itself
//! testable. Random draws are identical down the two paths.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error_model::{draw_error_mask, ErrorConfig};
use crate::fec_rs::{fec_decode_flit, fec_encode_flit, FlitVerdict};
use crate::flit_codec::{
    Crc64, Flit, FlitCodec, FlitHeader, SeqNum, DEFAULT_CRC_POLY, PAYLOAD_BYTES, SEQ_SPACE,
    WIRE_BYTES,
};
use crate::link_layer::{
    encode_flit_for, DecodedFlit, FlitView, Message, MessageKind, ProtocolMode, RxAction, RxState,
    TxState,
};
use crate::switch::{DropReason, Switch, SwitchAction, SwitchConfig};

/// RNG stream ids: link `l` uses stream `world·WORLD_STREAM_STRIDE + l`,
/// switch `s` uses `world·WORLD_STREAM_STRIDE + SWITCH_STREAM_BASE + s`.
const WORLD_STREAM_STRIDE: u64 = 4096;
const SWITCH_STREAM_BASE: u64 = 1000;

const MAX_SWITCH_LEVELS: u32 = 8;

/// Delivered-stream log is kept only for runs this small.
const DELIVERED_LOG_LIMIT: u64 = 4096;

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// One simulated scenario. Parsed from a flat `key = value` text file
/// (`#` starts a comment); field names double as config keys.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub mode: ProtocolMode,
    pub switch_levels: u32,
    pub flit_count: u64,
    pub seed: u64,
    pub slot_ns: f64,
    pub retry_latency_ns: f64,
    /// 0 selects the default, ten retry latencies.
    pub replay_timeout_ns: f64,
    /// Flits per coalesced acknowledgment.
    pub coalesce_k: u32,
    /// Account each acknowledgment as a standalone reverse flit instead of
    /// assuming it piggybacks on reverse-direction data.
    pub standalone_ack: bool,
    /// Transactions are spread over this many in-order queues (flit id mod
    /// cqid_count).
    pub cqid_count: u32,
    /// Channel bit-error process, applied per link traversal.
    pub error: ErrorConfig,
    /// Per-traversal probability the flit vanishes in the channel.
    pub random_drop_prob: f64,
    /// Per-traversal probability the flit arrives FEC-uncorrectable.
    pub forced_uncorrectable_prob: f64,
    /// Per-traversal probability a switch corrupts the core internally.
    pub internal_error_prob: f64,
    /// None = each mode's natural behavior (terminate the link CRC at
    /// switches in baseline mode, never in the end-to-end mode).
    pub check_link_crc: Option<bool>,
    /// Piggyback an acknowledgment on every coalesce_k-th first emission.
    pub auto_piggyback: bool,
    /// Stop after this many forward emissions (0 = run to completion);
    /// lets scripted scenarios freeze mid-recovery.
    pub halt_after_emissions: u64,
    pub crc_poly: u64,
    /// Run every flit through the full codec even when provably clean.
    pub force_full_codec: bool,
    /// Flit ids whose first transmission is dropped in the channel.
    pub force_drop: Vec<u64>,
    /// (flit id, acknum): first transmission piggybacks this acknowledgment.
    pub force_piggyback: Vec<(u64, u16)>,
    /// Flit ids whose first transmission is corrupted inside switch 0.
    pub force_internal_corrupt: Vec<u64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: ProtocolMode::Baseline,
            switch_levels: 0,
            flit_count: 1000,
            seed: 0,
            slot_ns: 2.0,
            retry_latency_ns: 100.0,
            replay_timeout_ns: 0.0,
            coalesce_k: 10,
            standalone_ack: false,
            cqid_count: 1,
            error: ErrorConfig::QUIET,
            random_drop_prob: 0.0,
            forced_uncorrectable_prob: 0.0,
            internal_error_prob: 0.0,
            check_link_crc: None,
            auto_piggyback: false,
            halt_after_emissions: 0,
            crc_poly: DEFAULT_CRC_POLY,
            force_full_codec: false,
            force_drop: Vec::new(),
            force_piggyback: Vec::new(),
            force_internal_corrupt: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(ConfigError::BadValue {
                    line,
                    key: stripped.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value).map_err(|message| match message {
                ApplyError::Unknown => ConfigError::UnknownKey { line, key: key.to_string() },
                ApplyError::Bad(message) => {
                    ConfigError::BadValue { line, key: key.to_string(), message }
                }
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ApplyError> {
        fn num<T: std::str::FromStr>(value: &str) -> Result<T, ApplyError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| ApplyError::Bad(format!("{e}")))
        }
        fn flag(value: &str) -> Result<bool, ApplyError> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(ApplyError::Bad(format!("expected true/false, got `{other}`"))),
            }
        }
        fn id_list(value: &str) -> Result<Vec<u64>, ApplyError> {
            value.split(',').map(|part| num::<u64>(part.trim())).collect()
        }
        match key {
            "mode" => {
                self.mode = match value {
                    "baseline" => ProtocolMode::Baseline,
                    "rxl" => ProtocolMode::Rxl,
                    other => {
                        return Err(ApplyError::Bad(format!(
                            "expected baseline/rxl, got `{other}`"
                        )))
                    }
                }
            }
            "switch_levels" => self.switch_levels = num(value)?,
            "flit_count" => self.flit_count = num(value)?,
            "seed" => self.seed = num(value)?,
            "slot_ns" => self.slot_ns = num(value)?,
            "retry_latency_ns" => self.retry_latency_ns = num(value)?,
            "replay_timeout_ns" => self.replay_timeout_ns = num(value)?,
            "coalesce_k" => self.coalesce_k = num(value)?,
            "standalone_ack" => self.standalone_ack = flag(value)?,
            "cqid_count" => self.cqid_count = num(value)?,
            "ber" => self.error.ber = num(value)?,
            "burst_enabled" => self.error.burst_enabled = flag(value)?,
            "burst_start_prob" => self.error.burst_start_prob = num(value)?,
            "burst_mean_len" => self.error.burst_mean_len = num(value)?,
            "random_drop_prob" => self.random_drop_prob = num(value)?,
            "forced_uncorrectable_prob" => self.forced_uncorrectable_prob = num(value)?,
            "internal_error_prob" => self.internal_error_prob = num(value)?,
            "check_link_crc" => {
                self.check_link_crc = match value {
                    "auto" => None,
                    "true" => Some(true),
                    "false" => Some(false),
                    other => {
                        return Err(ApplyError::Bad(format!(
                            "expected auto/true/false, got `{other}`"
                        )))
                    }
                }
            }
            "auto_piggyback" => self.auto_piggyback = flag(value)?,
            "halt_after_emissions" => self.halt_after_emissions = num(value)?,
            "crc_poly" => {
                let digits = value.strip_prefix("0x").ok_or_else(|| {
                    ApplyError::Bad("expected hex literal like 0x42f0e1eba9ea3693".into())
                })?;
                self.crc_poly = u64::from_str_radix(digits, 16)
                    .map_err(|e| ApplyError::Bad(format!("{e}")))?;
            }
            "force_full_codec" => self.force_full_codec = flag(value)?,
            "force_drop" => self.force_drop = id_list(value)?,
            "force_internal_corrupt" => self.force_internal_corrupt = id_list(value)?,
            "force_piggyback" => {
                self.force_piggyback = value
                    .split(',')
                    .map(|part| {
                        let part = part.trim();
                        let (id, ack) = part.split_once(':').ok_or_else(|| {
                            ApplyError::Bad(format!("expected id:acknum, got `{part}`"))
                        })?;
                        Ok((num::<u64>(id.trim())?, num::<u16>(ack.trim())?))
                    })
                    .collect::<Result<_, ApplyError>>()?;
            }
            _ => return Err(ApplyError::Unknown),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.flit_count == 0 {
            return fail("flit_count must be >= 1".into());
        }
        if self.switch_levels > MAX_SWITCH_LEVELS {
            return fail(format!("switch_levels must be <= {MAX_SWITCH_LEVELS}"));
        }
        if self.slot_ns.is_nan() || self.slot_ns <= 0.0 {
            return fail("slot_ns must be positive".into());
        }
        if self.retry_latency_ns < 0.0 || self.replay_timeout_ns < 0.0 {
            return fail("latencies must be non-negative".into());
        }
        if self.coalesce_k == 0 {
            return fail("coalesce_k must be >= 1".into());
        }
        if self.cqid_count == 0 {
            return fail("cqid_count must be >= 1".into());
        }
        if self.crc_poly & 1 == 0 {
            return fail("crc_poly must have its constant term set".into());
        }
        for (name, p) in [
            ("random_drop_prob", self.random_drop_prob),
            ("forced_uncorrectable_prob", self.forced_uncorrectable_prob),
            ("internal_error_prob", self.internal_error_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1]"));
            }
        }
        self.error.validate().map_err(ConfigError::Invalid)?;
        for &(id, ack) in &self.force_piggyback {
            if ack >= SEQ_SPACE {
                return fail(format!("force_piggyback acknum {ack} out of range"));
            }
            if id >= self.flit_count {
                return fail(format!("force_piggyback id {id} >= flit_count"));
            }
        }
        for (name, list) in
            [("force_drop", &self.force_drop), ("force_internal_corrupt", &self.force_internal_corrupt)]
        {
            if let Some(&id) = list.iter().find(|&&id| id >= self.flit_count) {
                return fail(format!("{name} id {id} >= flit_count"));
            }
        }
        if !self.force_internal_corrupt.is_empty() && self.switch_levels == 0 {
            return fail("force_internal_corrupt requires switch_levels >= 1".into());
        }
        Ok(())
    }

    #[must_use]
    pub fn effective_replay_timeout(&self) -> f64 {
        if self.replay_timeout_ns > 0.0 {
            self.replay_timeout_ns
        } else {
            10.0 * self.retry_latency_ns
        }
    }

    #[must_use]
    pub fn effective_check_link_crc(&self) -> bool {
        self.check_link_crc.unwrap_or(self.mode == ProtocolMode::Baseline)
    }

    #[must_use]
    pub fn has_forced_events(&self) -> bool {
        !self.force_drop.is_empty()
            || !self.force_piggyback.is_empty()
            || !self.force_internal_corrupt.is_empty()
    }

    /// Which mechanisms could have produced the reported failures.
    #[must_use]
    pub fn error_regime(&self) -> String {
        let mut parts = Vec::new();
        if self.has_forced_events() {
            parts.push("scripted");
        }
        if self.forced_uncorrectable_prob > 0.0 {
            parts.push("forced_uncorrectable");
        }
        if self.random_drop_prob > 0.0 {
            parts.push("random_drop");
        }
        if !self.error.is_quiet() {
            parts.push("random_ber");
        }
        if self.internal_error_prob > 0.0 || !self.force_internal_corrupt.is_empty() {
            parts.push("switch_internal");
        }
        if parts.is_empty() {
            "error_free".into()
        } else {
            parts.join("+")
        }
    }
}

enum ApplyError {
    Unknown,
    Bad(String),
}

/// Command queue a flit belongs to.
#[must_use]
pub fn cqid_of(id: u64, cqid_count: u32) -> u32 {
    (id % u64::from(cqid_count)) as u32
}

/// The oracle payload for flit `id`: the id, transaction metadata, and a
/// deterministic filler, so any corruption is a byte-level mismatch.
#[must_use]
pub fn payload_for(id: u64, cqid_count: u32) -> [u8; PAYLOAD_BYTES] {
    let message = message_of(id, cqid_count);
    let mut payload = [0u8; PAYLOAD_BYTES];
    payload[..8].copy_from_slice(&id.to_le_bytes());
    payload[8] = message.kind as u8;
    payload[9..13].copy_from_slice(&message.cqid.to_le_bytes());
    let mut x = id.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    for chunk in payload[13..].chunks_mut(8) {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        chunk.copy_from_slice(&x.to_le_bytes()[..chunk.len()]);
    }
    payload
}

/// Transaction metadata for flit `id` (one message per flit).
#[must_use]
pub fn message_of(id: u64, cqid_count: u32) -> Message {
    let kind = match id % 3 {
        0 => MessageKind::Request,
        1 => MessageKind::Response,
        _ => MessageKind::Data,
    };
    Message { kind, cqid: cqid_of(id, cqid_count), msg_id: id }
}

/// Order-failure tallies.
#[derive(Clone, Copy, Default, PartialEq, Eq, Debug)]
pub struct OrderCounts {
    /// Oracle ids never delivered although a later id was.
    pub gap: u64,
    /// Extra deliveries of an already-delivered id.
    pub duplicate: u64,
    /// Deliveries that overtook a smaller undelivered id of the same queue.
    pub reorder: u64,
}

impl OrderCounts {
    #[must_use]
    pub fn total(&self) -> u64 {
        self.gap + self.duplicate + self.reorder
    }
}

/// Incremental order classifier for delivered flit ids against the implicit
/// oracle 0..oracle_len with queues assigned round-robin.
pub struct StreamClassifier {
    cqid_count: u32,
    delivered: Vec<u8>,
    /// Smallest undelivered id in each queue.
    queue_ptr: Vec<u64>,
    max_delivered: Option<u64>,
    duplicates: u64,
    reorders: u64,
    events: u64,
}

impl StreamClassifier {
    #[must_use]
    pub fn new(oracle_len: u64, cqid_count: u32) -> Self {
        assert!(cqid_count >= 1);
        let len = usize::try_from(oracle_len).expect("oracle fits in memory");
        Self {
            cqid_count,
            delivered: vec![0u8; len],
            queue_ptr: (0..u64::from(cqid_count)).collect(),
            max_delivered: None,
            duplicates: 0,
            reorders: 0,
            events: 0,
        }
    }

    pub fn push(&mut self, id: u64) {
        let idx = usize::try_from(id).expect("id in oracle range");
        let queue = cqid_of(id, self.cqid_count) as usize;
        self.events += 1;
        self.max_delivered = Some(self.max_delivered.map_or(id, |m| m.max(id)));
        if self.delivered[idx] > 0 {
            self.delivered[idx] = self.delivered[idx].saturating_add(1);
            self.duplicates += 1;
            return;
        }
        self.delivered[idx] = 1;
        if self.queue_ptr[queue] < id {
            self.reorders += 1;
        }
        if self.queue_ptr[queue] == id {
            // advance to the queue's next undelivered id
            let stride = u64::from(self.cqid_count);
            let mut next = id + stride;
            while (next as usize) < self.delivered.len() && self.delivered[next as usize] > 0 {
                next += stride;
            }
            self.queue_ptr[queue] = next;
        }
    }

    /// Ids delivered at least once.
    #[must_use]
    pub fn distinct_delivered(&self) -> u64 {
        self.events - self.duplicates
    }

    #[must_use]
    pub fn finish(&self) -> OrderCounts {
        let gap = match self.max_delivered {
            None => 0,
            Some(max) => {
                (0..max).filter(|&id| self.delivered[id as usize] == 0).count() as u64
            }
        };
        OrderCounts { gap, duplicate: self.duplicates, reorder: self.reorders }
    }
}

/// One element of an explicit delivery stream.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct StreamItem {
    pub id: u64,
    pub cqid: u32,
    pub digest: u64,
}

#[derive(Clone, Copy, Default, PartialEq, Eq, Debug)]
pub struct FailureCounts {
    pub fail_data: u64,
    pub order: OrderCounts,
}

/// Classifies an observed delivery stream against its oracle. Oracle
/// position i must hold id i. An observed digest mismatch (or an id outside
/// the oracle) is a data failure; ordering is judged on ids, with trailing
/// undelivered ids treated as pending rather than gaps.
#[must_use]
pub fn classify_stream(oracle: &[StreamItem], observed: &[StreamItem]) -> FailureCounts {
    for (i, item) in oracle.iter().enumerate() {
        assert_eq!(item.id, i as u64, "oracle must be dense and in id order");
    }
    // per-queue oracle id lists, for arbitrary cqid assignments
    let mut queues: HashMap<u32, Vec<u64>> = HashMap::new();
    for item in oracle {
        queues.entry(item.cqid).or_default().push(item.id);
    }
    let mut ptr: HashMap<u32, usize> = queues.keys().map(|&q| (q, 0)).collect();
    let mut delivered = vec![0u8; oracle.len()];
    let mut counts = FailureCounts::default();
    let mut max_delivered = None;
    for item in observed {
        let Some(oracle_item) = oracle.get(item.id as usize) else {
            counts.fail_data += 1;
            continue;
        };
        if item.digest != oracle_item.digest || item.cqid != oracle_item.cqid {
            counts.fail_data += 1;
        }
        let id = item.id;
        let queue = oracle_item.cqid;
        max_delivered = Some(max_delivered.map_or(id, |m: u64| m.max(id)));
        let slot = &mut delivered[id as usize];
        if *slot > 0 {
            *slot = slot.saturating_add(1);
            counts.order.duplicate += 1;
            continue;
        }
        *slot = 1;
        let ids = &queues[&queue];
        let p = ptr.get_mut(&queue).expect("queue known");
        if *p < ids.len() && ids[*p] < id {
            counts.order.reorder += 1;
        }
        while *p < ids.len() && delivered[ids[*p] as usize] > 0 {
            *p += 1;
        }
    }
    if let Some(max) = max_delivered {
        counts.order.gap = (0..max).filter(|&id| delivered[id as usize] == 0).count() as u64;
    }
    counts
}

/// Everything one simulation run reports. All counters are exact; see each
/// field for what exactly it counts.
#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub config: ScenarioConfig,
    pub rng_algorithm: &'static str,
    pub error_regime: String,
    pub world_count: u32,
    /// Forward-channel emissions: first transmissions plus retransmissions.
    pub flits_sent: u64,
    pub first_transmissions: u64,
    pub retransmissions: u64,
    /// Payloads the destination forwarded to the application (duplicates
    /// included).
    pub flits_delivered: u64,
    /// Distinct oracle ids delivered at least once.
    pub goodput_flits: u64,
    /// FEC corrections, endpoint and switches combined.
    pub fec_corrected: u64,
    /// Silent switch drops of FEC-uncorrectable arrivals.
    pub fec_uncorrectable_drops: u64,
    /// Switch drops from a link CRC mismatch on a decodable core.
    pub crc_switch_drops: u64,
    /// Flits lost in the channel (random or scripted drops).
    pub channel_drops: u64,
    /// NACKs the destination endpoint sent (any integrity or sequence
    /// failure, including FEC-uncorrectable arrivals).
    pub crc_nacks: u64,
    /// Go-back-N replays started by a NACK.
    pub retries: u64,
    /// Replays started by the replay timer.
    pub timeout_replays: u64,
    /// Explicitly numbered arrivals older than expected, dropped at rx.
    pub rx_discarded_duplicates: u64,
    /// Times the destination forwarded an id it had already forwarded.
    pub duplicates_forwarded: u64,
    pub fail_data: u64,
    pub fail_order: OrderCounts,
    pub channel_busy_ns: f64,
    /// 1 − first_transmissions·slot / busy.
    pub bw_loss: f64,
    pub reverse_ack_flits: u64,
    pub reverse_nack_flits: u64,
    /// Reverse-channel slots per forward flit when acknowledgments travel
    /// standalone; 0 when they are assumed to piggyback.
    pub reverse_bw_loss: f64,
    /// Piggybacked acknowledgments observed in delivered flits.
    pub piggybacked_acks_delivered: u64,
    /// (id, cqid) per delivery, kept only for small runs.
    pub delivered_log: Option<Vec<(u64, u32)>>,
}

impl SimReport {
    /// Every emission resolved in exactly one way; holds because
    /// propagation is instantaneous.
    #[must_use]
    pub fn accounting_balanced(&self) -> bool {
        self.flits_sent
            == self.flits_delivered
                + self.channel_drops
                + self.fec_uncorrectable_drops
                + self.crc_switch_drops
                + self.crc_nacks
                + self.rx_discarded_duplicates
    }
}

/// Ground truth riding beside a wire image.
#[derive(Clone, Copy)]
struct Emission {
    id: u64,
    seq: SeqNum,
    header: FlitHeader,
    is_retransmit: bool,
}

enum WireState {
    /// Canonical encoding of the emission's ground truth; no bytes exist.
    Clean,
    Real(Box<[u8; WIRE_BYTES]>),
}

/// Ground-truth shortcut view of a provably untouched flit.
struct CleanView {
    header: FlitHeader,
    seq: SeqNum,
    id: u64,
    cqid_count: u32,
}

impl FlitView for CleanView {
    fn header(&self) -> FlitHeader {
        self.header
    }

    fn crc_ok(&self) -> bool {
        true
    }

    fn isn_ok(&self, eseq: SeqNum) -> bool {
        self.seq == eseq
    }

    fn payload(&self) -> [u8; PAYLOAD_BYTES] {
        payload_for(self.id, self.cqid_count)
    }
}

enum SlotOutcome {
    Delivered,
    ChannelDrop,
    SwitchDrop,
    Nacked,
    Discarded,
}

struct World {
    cfg: ScenarioConfig,
    codec: FlitCodec,
    tx: TxState,
    rx: RxState,
    switches: Vec<Switch>,
    link_rngs: Vec<ChaCha12Rng>,
    switch_rngs: Vec<ChaCha12Rng>,
    classifier: StreamClassifier,
    force_drop: HashSet<u64>,
    force_piggyback: HashMap<u64, u16>,
    force_internal: HashSet<u64>,
    emitted_firsts: u64,
    auto_ack_counter: u16,
    delivered_log: Option<Vec<(u64, u32)>>,
    // counters mirrored into SimReport
    flits_sent: u64,
    retransmissions: u64,
    flits_delivered: u64,
    fec_corrected: u64,
    fec_uncorrectable_drops: u64,
    crc_switch_drops: u64,
    channel_drops: u64,
    crc_nacks: u64,
    retries: u64,
    timeout_replays: u64,
    rx_discarded: u64,
    fail_data: u64,
    reverse_acks: u64,
    reverse_nacks: u64,
    piggyback_acks_seen: u64,
    busy_ns: f64,
}

impl World {
    fn new(cfg: &ScenarioConfig, world_index: u32) -> Self {
        let base = u64::from(world_index) * WORLD_STREAM_STRIDE;
        let stream_rng = |stream: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(base + stream);
            rng
        };
        let links = cfg.switch_levels as usize + 1;
        let switch_cfg = SwitchConfig {
            mode: cfg.mode,
            internal_error_prob: cfg.internal_error_prob,
            check_link_crc: cfg.effective_check_link_crc(),
        };
        Self {
            cfg: cfg.clone(),
            codec: FlitCodec::new(Crc64::new(cfg.crc_poly)),
            tx: TxState::new(cfg.mode),
            rx: RxState::new(cfg.mode, cfg.coalesce_k),
            switches: (0..cfg.switch_levels)
                .map(|_| Switch::new(switch_cfg, FlitCodec::new(Crc64::new(cfg.crc_poly))))
                .collect(),
            link_rngs: (0..links).map(|l| stream_rng(l as u64)).collect(),
            switch_rngs: (0..cfg.switch_levels)
                .map(|s| stream_rng(SWITCH_STREAM_BASE + u64::from(s)))
                .collect(),
            classifier: StreamClassifier::new(cfg.flit_count, cfg.cqid_count),
            force_drop: cfg.force_drop.iter().copied().collect(),
            force_piggyback: cfg.force_piggyback.iter().copied().collect(),
            force_internal: cfg.force_internal_corrupt.iter().copied().collect(),
            emitted_firsts: 0,
            auto_ack_counter: 100,
            delivered_log: (cfg.flit_count <= DELIVERED_LOG_LIMIT).then(Vec::new),
            flits_sent: 0,
            retransmissions: 0,
            flits_delivered: 0,
            fec_corrected: 0,
            fec_uncorrectable_drops: 0,
            crc_switch_drops: 0,
            channel_drops: 0,
            crc_nacks: 0,
            retries: 0,
            timeout_replays: 0,
            rx_discarded: 0,
            fail_data: 0,
            reverse_acks: 0,
            reverse_nacks: 0,
            piggyback_acks_seen: 0,
            busy_ns: 0.0,
        }
    }

    fn run(mut self) -> SimReport {
        let guard_limit = 50 * self.cfg.flit_count + 100_000;
        let mut guard = 0u64;
        loop {
            guard += 1;
            assert!(
                guard <= guard_limit,
                "simulation made no forward progress: emitted_firsts={} outstanding={} \
                 retry={} timeout_replays={} rx_discarded={} eseq={:?} lv={:?} base={:?}",
                self.emitted_firsts,
                self.tx.outstanding(),
                self.tx.retry_in_progress(),
                self.timeout_replays,
                self.rx_discarded,
                self.rx.eseq(),
                self.rx.last_validated(),
                self.tx.base_seq(),
            );
            if self.cfg.halt_after_emissions > 0 && self.flits_sent >= self.cfg.halt_after_emissions
            {
                break;
            }
            let emission = if let Some(meta) = self.tx.next_retransmission_meta() {
                self.retransmissions += 1;
                Some(Emission { id: meta.tag, seq: meta.seq, header: meta.header, is_retransmit: true })
            } else if self.emitted_firsts < self.cfg.flit_count {
                let id = self.emitted_firsts;
                let piggyback = self.piggyback_for(id);
                let payload = payload_for(id, self.cfg.cqid_count);
                match self.tx.emit_meta(&payload, id, piggyback) {
                    Ok(meta) => {
                        self.emitted_firsts += 1;
                        Some(Emission { id, seq: meta.seq, header: meta.header, is_retransmit: false })
                    }
                    Err(_) => {
                        // window full: fire the ack timer; if nothing was
                        // pending, fall back to a timed-out replay
                        if let Some(ack) = self.rx.flush_ack() {
                            self.send_ack(ack);
                        } else {
                            self.start_timeout_replay();
                        }
                        None
                    }
                }
            } else if self.tx.outstanding() > 0 {
                self.start_timeout_replay();
                None
            } else {
                break;
            };
            let Some(emission) = emission else { continue };
            self.flits_sent += 1;
            self.busy_ns += self.cfg.slot_ns;
            match self.traverse(emission) {
                SlotOutcome::ChannelDrop => self.channel_drops += 1,
                SlotOutcome::SwitchDrop
                | SlotOutcome::Delivered
                | SlotOutcome::Nacked
                | SlotOutcome::Discarded => {}
            }
        }
        self.into_report()
    }

    fn piggyback_for(&mut self, id: u64) -> Option<SeqNum> {
        if let Some(&ack) = self.force_piggyback.get(&id) {
            return Some(SeqNum::new(ack));
        }
        if self.cfg.auto_piggyback && (id + 1).is_multiple_of(u64::from(self.cfg.coalesce_k)) {
            let ack = SeqNum::new(self.auto_ack_counter % SEQ_SPACE);
            self.auto_ack_counter = self.auto_ack_counter.wrapping_add(1);
            return Some(ack);
        }
        None
    }

    fn start_timeout_replay(&mut self) {
        self.busy_ns += self.cfg.effective_replay_timeout();
        self.timeout_replays += 1;
        let started = self.tx.begin_timeout_replay();
        assert!(started, "timeout with nothing outstanding");
    }

    fn canonical_wire(&self, em: &Emission) -> Box<[u8; WIRE_BYTES]> {
        let payload = payload_for(em.id, self.cfg.cqid_count);
        let flit = encode_flit_for(&self.codec, self.cfg.mode, em.header, &payload, em.seq);
        Box::new(fec_encode_flit(&flit.to_core()))
    }

    fn traverse(&mut self, em: Emission) -> SlotOutcome {
        let mut state = if self.cfg.force_full_codec {
            WireState::Real(self.canonical_wire(&em))
        } else {
            WireState::Clean
        };
        let mut forced_uncorrectable = false;
        let levels = self.cfg.switch_levels as usize;
        for link in 0..=levels {
            // scripted drops hit the first transmission on the first link
            if link == 0 && !em.is_retransmit && self.force_drop.contains(&em.id) {
                return SlotOutcome::ChannelDrop;
            }
            let rng = &mut self.link_rngs[link];
            if self.cfg.random_drop_prob > 0.0 && rng.gen_bool(self.cfg.random_drop_prob) {
                return SlotOutcome::ChannelDrop;
            }
            if self.cfg.forced_uncorrectable_prob > 0.0
                && rng.gen_bool(self.cfg.forced_uncorrectable_prob)
            {
                forced_uncorrectable = true;
            }
            if !self.cfg.error.is_quiet() {
                let mask = draw_error_mask(&self.cfg.error, rng);
                if !mask.is_empty() {
                    if let WireState::Clean = state {
                        state = WireState::Real(self.canonical_wire(&em));
                    }
                    let WireState::Real(bytes) = &mut state else { unreachable!() };
                    mask.apply(bytes);
                }
            }
            if link < levels {
                let forced_here =
                    link == 0 && !em.is_retransmit && self.force_internal.contains(&em.id);
                let corrupt_now = forced_here
                    || self.switches[link].roll_internal_corruption(&mut self.switch_rngs[link]);
                if forced_uncorrectable {
                    // synthetic uncorrectable arrival: the switch drops it
                    self.switches[link].stats.dropped_fec += 1;
                    self.fec_uncorrectable_drops += 1;
                    return SlotOutcome::SwitchDrop;
                }
                match (&state, corrupt_now) {
                    (WireState::Clean, false) => {
                        // provably identical to decode + re-encode
                        self.switches[link].stats.forwarded += 1;
                    }
                    _ => {
                        if let WireState::Clean = state {
                            state = WireState::Real(self.canonical_wire(&em));
                        }
                        let WireState::Real(bytes) = &state else { unreachable!() };
                        match self.switches[link].forward(bytes, corrupt_now, &mut self.switch_rngs[link])
                        {
                            SwitchAction::Forward { wire, .. } => {
                                state = WireState::Real(Box::new(wire));
                            }
                            SwitchAction::Drop(DropReason::FecUncorrectable) => {
                                self.fec_uncorrectable_drops += 1;
                                return SlotOutcome::SwitchDrop;
                            }
                            SwitchAction::Drop(DropReason::LinkCrcFail) => {
                                self.crc_switch_drops += 1;
                                return SlotOutcome::SwitchDrop;
                            }
                        }
                    }
                }
            }
        }
        // destination endpoint
        if forced_uncorrectable {
            let action = self.rx.on_fec_uncorrectable();
            return self.apply_rx(action, &em, None);
        }
        match state {
            WireState::Clean => {
                let view = CleanView {
                    header: em.header,
                    seq: em.seq,
                    id: em.id,
                    cqid_count: self.cfg.cqid_count,
                };
                let action = self.rx.rx_accept(&view);
                self.apply_rx(action, &em, None)
            }
            WireState::Real(bytes) => {
                let decode = fec_decode_flit(&bytes);
                match decode.verdict {
                    FlitVerdict::DetectedUncorrectable => {
                        let action = self.rx.on_fec_uncorrectable();
                        return self.apply_rx(action, &em, None);
                    }
                    FlitVerdict::Corrected => self.fec_corrected += 1,
                    FlitVerdict::Clean => {}
                }
                let flit = Flit::from_core(&decode.core);
                let action = self.rx.rx_accept(&DecodedFlit { flit: &flit, codec: &self.codec });
                self.apply_rx(action, &em, Some(&flit))
            }
        }
    }

    fn apply_rx(&mut self, action: RxAction, em: &Emission, real: Option<&Flit>) -> SlotOutcome {
        match action {
            RxAction::Forward { piggyback_ack } => {
                self.flits_delivered += 1;
                if piggyback_ack.is_some() {
                    self.piggyback_acks_seen += 1;
                }
                // clean deliveries equal the oracle by construction; only
                // real bytes can carry laundered corruption
                if let Some(flit) = real {
                    if flit.payload != payload_for(em.id, self.cfg.cqid_count) {
                        self.fail_data += 1;
                    }
                }
                self.classifier.push(em.id);
                if let Some(log) = &mut self.delivered_log {
                    log.push((em.id, cqid_of(em.id, self.cfg.cqid_count)));
                }
                if let Some(ack) = self.rx.ack_scheduler() {
                    self.send_ack(ack);
                }
                SlotOutcome::Delivered
            }
            RxAction::Nack { last_valid } => {
                self.crc_nacks += 1;
                self.reverse_nacks += 1;
                if self.tx.on_nack(last_valid) == crate::link_layer::NackResponse::RetryStarted {
                    self.retries += 1;
                    self.busy_ns += self.cfg.retry_latency_ns;
                }
                SlotOutcome::Nacked
            }
            RxAction::DiscardDuplicate => {
                self.rx_discarded += 1;
                let ack = self.rx.duplicate_ack();
                self.send_ack(ack);
                SlotOutcome::Discarded
            }
        }
    }

    fn send_ack(&mut self, ack: SeqNum) {
        self.reverse_acks += 1;
        self.tx.on_ack(ack);
    }

    fn into_report(self) -> SimReport {
        let order = self.classifier.finish();
        let fec_corrected =
            self.fec_corrected + self.switches.iter().map(|s| s.stats.corrected).sum::<u64>();
        let first_transmissions = self.emitted_firsts;
        let useful_ns = first_transmissions as f64 * self.cfg.slot_ns;
        let bw_loss = if self.busy_ns > 0.0 { 1.0 - useful_ns / self.busy_ns } else { 0.0 };
        let reverse_bw_loss = if self.cfg.standalone_ack && first_transmissions > 0 {
            self.reverse_acks as f64 / first_transmissions as f64
        } else {
            0.0
        };
        let report = SimReport {
            error_regime: self.cfg.error_regime(),
            config: self.cfg,
            rng_algorithm: "chacha12",
            world_count: 1,
            flits_sent: self.flits_sent,
            first_transmissions,
            retransmissions: self.retransmissions,
            flits_delivered: self.flits_delivered,
            goodput_flits: self.classifier.distinct_delivered(),
            fec_corrected,
            fec_uncorrectable_drops: self.fec_uncorrectable_drops,
            crc_switch_drops: self.crc_switch_drops,
            channel_drops: self.channel_drops,
            crc_nacks: self.crc_nacks,
            retries: self.retries,
            timeout_replays: self.timeout_replays,
            rx_discarded_duplicates: self.rx_discarded,
            duplicates_forwarded: order.duplicate,
            fail_data: self.fail_data,
            fail_order: order,
            channel_busy_ns: self.busy_ns,
            bw_loss,
            reverse_ack_flits: self.reverse_acks,
            reverse_nack_flits: self.reverse_nacks,
            reverse_bw_loss,
            piggybacked_acks_delivered: self.piggyback_acks_seen,
            delivered_log: self.delivered_log,
        };
        debug_assert!(report.accounting_balanced(), "emission accounting out of balance");
        report
    }
}

/// Runs one scenario to completion (world 0).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimReport, ConfigError> {
    cfg.validate()?;
    Ok(World::new(cfg, 0).run())
}

/// Runs `worlds` independent replicas of the scenario on separate RNG
/// stream families and merges their counters by summation in world order.
/// Scripted forced events are per-flit-id and do not compose across
/// replicas, so they are rejected here.
pub fn run_worlds(cfg: &ScenarioConfig, worlds: u32) -> Result<SimReport, ConfigError> {
    cfg.validate()?;
    if worlds == 0 {
        return Err(ConfigError::Invalid("world count must be >= 1".into()));
    }
    if worlds > 1 && cfg.has_forced_events() {
        return Err(ConfigError::Invalid(
            "forced events cannot run across parallel worlds".into(),
        ));
    }
    if worlds == 1 {
        return run_scenario(cfg);
    }
    let mut reports: Vec<SimReport> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            (0..worlds).map(|w| scope.spawn(move || World::new(cfg, w).run())).collect();
        handles.into_iter().map(|h| h.join().expect("world thread")).collect()
    });
    let mut merged = reports.remove(0);
    merged.world_count = worlds;
    merged.delivered_log = None;
    for r in reports {
        merged.flits_sent += r.flits_sent;
        merged.first_transmissions += r.first_transmissions;
        merged.retransmissions += r.retransmissions;
        merged.flits_delivered += r.flits_delivered;
        merged.goodput_flits += r.goodput_flits;
        merged.fec_corrected += r.fec_corrected;
        merged.fec_uncorrectable_drops += r.fec_uncorrectable_drops;
        merged.crc_switch_drops += r.crc_switch_drops;
        merged.channel_drops += r.channel_drops;
        merged.crc_nacks += r.crc_nacks;
        merged.retries += r.retries;
        merged.timeout_replays += r.timeout_replays;
        merged.rx_discarded_duplicates += r.rx_discarded_duplicates;
        merged.duplicates_forwarded += r.duplicates_forwarded;
        merged.fail_data += r.fail_data;
        merged.fail_order.gap += r.fail_order.gap;
        merged.fail_order.duplicate += r.fail_order.duplicate;
        merged.fail_order.reorder += r.fail_order.reorder;
        merged.channel_busy_ns += r.channel_busy_ns;
        merged.reverse_ack_flits += r.reverse_ack_flits;
        merged.reverse_nack_flits += r.reverse_nack_flits;
        merged.piggybacked_acks_delivered += r.piggybacked_acks_delivered;
    }
    let useful = merged.first_transmissions as f64 * merged.config.slot_ns;
    merged.bw_loss =
        if merged.channel_busy_ns > 0.0 { 1.0 - useful / merged.channel_busy_ns } else { 0.0 };
    merged.reverse_bw_loss = if merged.config.standalone_ack && merged.first_transmissions > 0 {
        merged.reverse_ack_flits as f64 / merged.first_transmissions as f64
    } else {
        0.0
    };
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_script(flit_count: u64, cqid_count: u32, halt: u64) -> ScenarioConfig {
        ScenarioConfig {
            flit_count,
            cqid_count,
            halt_after_emissions: halt,
            force_drop: vec![1],
            force_piggyback: vec![(2, 100)],
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn parse_round_trip_and_comments() {
        let text = "
            # demo scenario
            mode = rxl
            switch_levels = 2
            flit_count = 50   # inline comment
            seed = 7
            slot_ns = 2.5
            retry_latency_ns = 90
            replay_timeout_ns = 500
            coalesce_k = 4
            standalone_ack = true
            cqid_count = 8
            ber = 1e-7
            burst_enabled = true
            burst_start_prob = 1e-9
            burst_mean_len = 8
            random_drop_prob = 0.25
            forced_uncorrectable_prob = 3e-5
            internal_error_prob = 0.001
            check_link_crc = false
            auto_piggyback = true
            halt_after_emissions = 100
            crc_poly = 0x42f0e1eba9ea3693
            force_full_codec = true
            force_drop = 1, 3
            force_piggyback = 2:100, 4:7
            force_internal_corrupt = 5
        ";
        let cfg = ScenarioConfig::parse_str(text).unwrap();
        assert_eq!(cfg.mode, ProtocolMode::Rxl);
        assert_eq!(cfg.switch_levels, 2);
        assert_eq!(cfg.flit_count, 50);
        assert_eq!(cfg.slot_ns, 2.5);
        assert_eq!(cfg.coalesce_k, 4);
        assert!(cfg.standalone_ack);
        assert_eq!(cfg.error.ber, 1e-7);
        assert!(cfg.error.burst_enabled);
        assert_eq!(cfg.check_link_crc, Some(false));
        assert_eq!(cfg.force_drop, vec![1, 3]);
        assert_eq!(cfg.force_piggyback, vec![(2, 100), (4, 7)]);
        assert_eq!(cfg.force_internal_corrupt, vec![5]);
        assert!(cfg.force_full_codec);
    }

    #[test]
    fn parse_rejects_unknown_key_naming_it() {
        let err = ScenarioConfig::parse_str("flit_count = 5\nflit_cout = 5\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { line: 2, key: "flit_cout".into() });
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("flit_cout"), "{msg}");
    }

    #[test]
    fn parse_rejects_bad_values_and_validation() {
        assert!(matches!(
            ScenarioConfig::parse_str("mode = fancy"),
            Err(ConfigError::BadValue { line: 1, .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse_str("flit_count = 0"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse_str("switch_levels = 9"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse_str("force_internal_corrupt = 0"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse_str("random_drop_prob = 1.5"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn error_free_run_is_lossless() {
        for mode in [ProtocolMode::Baseline, ProtocolMode::Rxl] {
            for levels in [0u32, 1, 3] {
                let cfg = ScenarioConfig {
                    mode,
                    switch_levels: levels,
                    flit_count: 200,
                    ..ScenarioConfig::default()
                };
                let report = run_scenario(&cfg).unwrap();
                assert_eq!(report.flits_sent, 200);
                assert_eq!(report.flits_delivered, 200);
                assert_eq!(report.goodput_flits, 200);
                assert_eq!(report.fail_data, 0);
                assert_eq!(report.fail_order, OrderCounts::default());
                assert_eq!(report.retries, 0);
                assert_eq!(report.bw_loss, 0.0);
                assert_eq!(report.channel_busy_ns, 400.0);
                assert!(report.accounting_balanced());
                assert_eq!(report.error_regime, "error_free");
                assert_eq!(
                    report.delivered_log.as_ref().unwrap().iter().map(|d| d.0).collect::<Vec<_>>(),
                    (0..200).collect::<Vec<_>>()
                );
            }
        }
    }

    /// Silent drop escape: flit 1 dropped, flit 2 arrives piggybacking and
    /// is forwarded unvalidated; the run halts before any recovery.
    #[test]
    fn scripted_drop_baseline_leaves_gap() {
        let report = run_scenario(&fig_script(3, 4, 3)).unwrap();
        assert_eq!(
            report.delivered_log.as_ref().unwrap(),
            &vec![(0, 0), (2, 2)],
            "post-drop piggybacked flit forwarded"
        );
        assert_eq!(report.fail_order.gap, 1);
        assert_eq!(report.fail_order.duplicate, 0);
        assert_eq!(report.fail_data, 0);
    }

    #[test]
    fn scripted_drop_rxl_stays_clean() {
        let cfg = ScenarioConfig { mode: ProtocolMode::Rxl, ..fig_script(3, 4, 3) };
        let report = run_scenario(&cfg).unwrap();
        // the piggybacked flit fails its sequence-folded check instead
        assert_eq!(report.delivered_log.as_ref().unwrap(), &vec![(0, 0)]);
        assert_eq!(report.crc_nacks, 1);
        assert_eq!(report.fail_data, 0);
        assert_eq!(report.fail_order, OrderCounts::default());
    }

    /// Four-flit script: the gap is noticed at the next explicitly numbered
    /// flit and go-back-N re-forwards the escaped flit.
    #[test]
    fn scripted_replay_baseline_duplicates() {
        let report = run_scenario(&fig_script(4, 4, 6)).unwrap();
        assert_eq!(
            report.delivered_log.as_ref().unwrap().iter().map(|d| d.0).collect::<Vec<_>>(),
            vec![0, 2, 1, 2]
        );
        assert_eq!(report.fail_order.duplicate, 1);
        assert_eq!(report.duplicates_forwarded, 1);
        assert_eq!(report.fail_order.reorder, 0, "distinct queues");
        assert_eq!(report.fail_order.gap, 0, "trailing id is pending, not lost");
        assert_eq!(report.retries, 1);
    }

    #[test]
    fn scripted_replay_rxl_delivers_oracle_exactly() {
        let cfg = ScenarioConfig { mode: ProtocolMode::Rxl, ..fig_script(4, 4, 6) };
        let report = run_scenario(&cfg).unwrap();
        assert_eq!(
            report.delivered_log.as_ref().unwrap().iter().map(|d| d.0).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
        assert_eq!(report.fail_order, OrderCounts::default());
        assert_eq!(report.fail_data, 0);
        assert_eq!(report.goodput_flits, 4);
    }

    #[test]
    fn scripted_replay_shared_queue_reorders() {
        let report = run_scenario(&fig_script(4, 1, 6)).unwrap();
        assert_eq!(report.fail_order.reorder, 1);
        assert_eq!(report.fail_order.duplicate, 1);
    }

    #[test]
    fn timeout_drains_a_trailing_drop() {
        for mode in [ProtocolMode::Baseline, ProtocolMode::Rxl] {
            let cfg = ScenarioConfig {
                mode,
                flit_count: 3,
                force_drop: vec![2],
                ..ScenarioConfig::default()
            };
            let report = run_scenario(&cfg).unwrap();
            assert_eq!(report.goodput_flits, 3, "{mode:?}");
            assert_eq!(report.fail_order, OrderCounts::default());
            assert!(report.timeout_replays >= 1);
            assert!(report.accounting_balanced());
        }
    }

    #[test]
    fn rxl_recovers_heavy_random_drops_exactly() {
        let cfg = ScenarioConfig {
            mode: ProtocolMode::Rxl,
            flit_count: 4000,
            random_drop_prob: 0.3,
            seed: 11,
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg).unwrap();
        assert!(report.channel_drops > 800, "drops {}", report.channel_drops);
        assert_eq!(report.goodput_flits, 4000);
        assert_eq!(report.flits_delivered, 4000, "no duplicates ever forwarded");
        assert_eq!(report.fail_data, 0);
        assert_eq!(report.fail_order, OrderCounts::default());
        assert_eq!(
            report.delivered_log.as_ref().unwrap().iter().map(|d| d.0).collect::<Vec<_>>(),
            (0..4000).collect::<Vec<_>>()
        );
    }

    #[test]
    fn baseline_escapes_under_random_drops_with_piggybacking() {
        let cfg = ScenarioConfig {
            flit_count: 5000,
            random_drop_prob: 0.02,
            auto_piggyback: true,
            coalesce_k: 2,
            cqid_count: 1,
            seed: 3,
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg).unwrap();
        assert!(report.fail_order.total() >= 1, "expected at least one escape");
        assert_eq!(report.fail_data, 0, "drops corrupt nothing");
        assert_eq!(report.goodput_flits, 5000, "every id still arrives eventually");
    }

    #[test]
    fn seed_determinism() {
        let cfg = ScenarioConfig {
            mode: ProtocolMode::Rxl,
            flit_count: 1500,
            switch_levels: 1,
            random_drop_prob: 0.05,
            internal_error_prob: 0.002,
            error: ErrorConfig { ber: 2e-5, ..ErrorConfig::QUIET },
            seed: 42,
            ..ScenarioConfig::default()
        };
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run_scenario(&ScenarioConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    /// The ground-truth shortcut must be observationally identical to
    /// running every flit through the full codec.
    #[test]
    fn fast_path_equals_full_codec() {
        for mode in [ProtocolMode::Baseline, ProtocolMode::Rxl] {
            let cfg = ScenarioConfig {
                mode,
                flit_count: 1200,
                switch_levels: 1,
                random_drop_prob: 0.02,
                internal_error_prob: 0.003,
                forced_uncorrectable_prob: 0.001,
                error: ErrorConfig { ber: 3e-5, ..ErrorConfig::QUIET },
                auto_piggyback: true,
                seed: 9,
                ..ScenarioConfig::default()
            };
            let fast = run_scenario(&cfg).unwrap();
            let full =
                run_scenario(&ScenarioConfig { force_full_codec: true, ..cfg.clone() }).unwrap();
            assert_eq!(fast.flits_sent, full.flits_sent, "{mode:?}");
            assert_eq!(fast.flits_delivered, full.flits_delivered);
            assert_eq!(fast.goodput_flits, full.goodput_flits);
            assert_eq!(fast.fec_corrected, full.fec_corrected);
            assert_eq!(fast.fec_uncorrectable_drops, full.fec_uncorrectable_drops);
            assert_eq!(fast.crc_switch_drops, full.crc_switch_drops);
            assert_eq!(fast.channel_drops, full.channel_drops);
            assert_eq!(fast.crc_nacks, full.crc_nacks);
            assert_eq!(fast.retries, full.retries);
            assert_eq!(fast.fail_data, full.fail_data);
            assert_eq!(fast.fail_order, full.fail_order);
            assert_eq!(fast.channel_busy_ns, full.channel_busy_ns);
            assert_eq!(fast.delivered_log, full.delivered_log);
        }
    }

    #[test]
    fn switch_internal_corruption_splits_by_mode() {
        let base = ScenarioConfig {
            flit_count: 3000,
            switch_levels: 1,
            internal_error_prob: 0.01,
            seed: 5,
            ..ScenarioConfig::default()
        };
        let baseline = run_scenario(&base).unwrap();
        // laundered by the per-hop CRC rewrite: delivered as good data
        assert!(baseline.fail_data > 0, "fail_data {}", baseline.fail_data);
        let rxl = run_scenario(&ScenarioConfig { mode: ProtocolMode::Rxl, ..base }).unwrap();
        // caught by the end-to-end check and replayed
        assert_eq!(rxl.fail_data, 0);
        assert!(rxl.crc_nacks > 0);
        assert_eq!(rxl.goodput_flits, 3000);
    }

    #[test]
    fn ber_errors_are_corrected_or_retried() {
        let cfg = ScenarioConfig {
            mode: ProtocolMode::Rxl,
            flit_count: 20_000,
            error: ErrorConfig { ber: 1e-5, ..ErrorConfig::QUIET },
            seed: 17,
            ..ScenarioConfig::default()
        };
        let report = run_scenario(&cfg).unwrap();
        assert!(report.fec_corrected > 100, "corrected {}", report.fec_corrected);
        assert_eq!(report.fail_data, 0);
        assert_eq!(report.fail_order, OrderCounts::default());
        assert_eq!(report.goodput_flits, 20_000);
        assert!(report.accounting_balanced());
    }

    #[test]
    fn classifier_fig4a_pattern() {
        let mut c = StreamClassifier::new(3, 1);
        for id in [0u64, 2, 1, 2] {
            c.push(id);
        }
        let order = c.finish();
        assert_eq!(order, OrderCounts { gap: 0, duplicate: 1, reorder: 1 });
        assert_eq!(c.distinct_delivered(), 3);
    }

    #[test]
    fn classifier_counts_interior_gap_only() {
        let mut c = StreamClassifier::new(5, 1);
        c.push(0);
        c.push(1);
        c.push(3); // 2 missing, 4 pending
        let order = c.finish();
        assert_eq!(order.gap, 1);
        assert_eq!(order.reorder, 1, "3 overtook undelivered 2");
    }

    #[test]
    fn classify_stream_examples() {
        let digest = |id: u64| id.wrapping_mul(31);
        let oracle: Vec<StreamItem> =
            (0..3).map(|id| StreamItem { id, cqid: 0, digest: digest(id) }).collect();

        assert_eq!(classify_stream(&oracle, &oracle), FailureCounts::default());

        let minus_middle = [oracle[0], oracle[2]];
        assert_eq!(classify_stream(&oracle, &minus_middle).order.gap, 1);

        let acbc = [oracle[0], oracle[2], oracle[1], oracle[2]];
        let counts = classify_stream(&oracle, &acbc);
        assert_eq!(counts.order.duplicate, 1);
        assert_eq!(counts.order.reorder, 1);
        assert_eq!(counts.fail_data, 0);

        let corrupted = [oracle[0], StreamItem { digest: 999, ..oracle[1] }, oracle[2]];
        let counts = classify_stream(&oracle, &corrupted);
        assert_eq!(counts.fail_data, 1);
        assert_eq!(counts.order, OrderCounts::default());
    }

    #[test]
    fn classifier_matches_classify_stream_on_random_patterns() {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for trial in 0..50 {
            let n = 20 + trial % 30;
            let cqids = 1 + (trial % 4) as u32;
            let oracle: Vec<StreamItem> = (0..n)
                .map(|id| StreamItem { id, cqid: cqid_of(id, cqids), digest: id })
                .collect();
            let mut observed: Vec<StreamItem> =
                oracle.iter().filter(|_| rng.gen_bool(0.8)).copied().collect();
            let dups: Vec<StreamItem> =
                observed.iter().filter(|_| rng.gen_bool(0.2)).copied().collect();
            observed.extend(dups);
            observed.shuffle(&mut rng);
            let reference = classify_stream(&oracle, &observed);
            let mut inc = StreamClassifier::new(n, cqids);
            for item in &observed {
                inc.push(item.id);
            }
            assert_eq!(inc.finish(), reference.order, "trial {trial}");
        }
    }

    #[test]
    fn worlds_merge_by_summation() {
        let cfg = ScenarioConfig {
            mode: ProtocolMode::Rxl,
            flit_count: 800,
            random_drop_prob: 0.1,
            seed: 21,
            ..ScenarioConfig::default()
        };
        let merged = run_worlds(&cfg, 3).unwrap();
        assert_eq!(merged.world_count, 3);
        assert_eq!(merged.first_transmissions, 2400);
        assert_eq!(merged.goodput_flits, 2400);
        assert!(merged.delivered_log.is_none());
        // world 0 of the merge is exactly the single-world run
        let single = run_scenario(&cfg).unwrap();
        assert!(merged.flits_sent > single.flits_sent);
        assert_eq!(run_worlds(&cfg, 3).unwrap(), merged, "merge is deterministic");
    }

    #[test]
    fn worlds_reject_forced_events() {
        let cfg = fig_script(4, 4, 0);
        assert!(matches!(run_worlds(&cfg, 2), Err(ConfigError::Invalid(_))));
        assert!(run_worlds(&cfg, 1).is_ok());
    }

    #[test]
    fn oracle_payload_embeds_identity() {
        let p = payload_for(7, 4);
        assert_eq!(u64::from_le_bytes(p[..8].try_into().unwrap()), 7);
        assert_eq!(p[8], MessageKind::Response as u8);
        assert_eq!(u32::from_le_bytes(p[9..13].try_into().unwrap()), 3);
        assert_ne!(payload_for(7, 4), payload_for(8, 4));
        assert_eq!(message_of(9, 4).kind, MessageKind::Request);
    }
}
