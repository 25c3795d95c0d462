//! Deterministic report rendering. Floats use Rust's shortest round-trip
//! formatting and nothing here reads the clock or environment, so the same
//! invocation always produces byte-identical output.

use std::fmt::Write;

use flitsim::analytics::{AnalyticReport, FitCurvePoint};
use flitsim::link_layer::ProtocolMode;
use flitsim::sim_engine::{ScenarioConfig, SimReport};

fn mode_name(mode: ProtocolMode) -> &'static str {
    match mode {
        ProtocolMode::Baseline => "baseline",
        ProtocolMode::Rxl => "rxl",
    }
}

/// Shortest round-trip float formatting, scientific outside [1e-3, 1e7).
/// Both branches are deterministic and re-parseable.
fn fnum(v: f64) -> String {
    let mag = v.abs();
    if v != 0.0 && !(1e-3..1e7).contains(&mag) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// The resolved scenario as re-parseable `key = value` lines; every report
/// embeds this so a result can be reproduced from the report alone.
pub fn scenario_block(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let kv = |s: &mut String, k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv(&mut s, "mode", &mode_name(cfg.mode));
    kv(&mut s, "switch_levels", &cfg.switch_levels);
    kv(&mut s, "flit_count", &cfg.flit_count);
    kv(&mut s, "seed", &cfg.seed);
    kv(&mut s, "slot_ns", &fnum(cfg.slot_ns));
    kv(&mut s, "retry_latency_ns", &fnum(cfg.retry_latency_ns));
    kv(&mut s, "replay_timeout_ns", &fnum(cfg.replay_timeout_ns));
    kv(&mut s, "coalesce_k", &cfg.coalesce_k);
    kv(&mut s, "standalone_ack", &cfg.standalone_ack);
    kv(&mut s, "cqid_count", &cfg.cqid_count);
    kv(&mut s, "ber", &fnum(cfg.error.ber));
    kv(&mut s, "burst_enabled", &cfg.error.burst_enabled);
    kv(&mut s, "burst_start_prob", &fnum(cfg.error.burst_start_prob));
    kv(&mut s, "burst_mean_len", &fnum(cfg.error.burst_mean_len));
    kv(&mut s, "random_drop_prob", &fnum(cfg.random_drop_prob));
    kv(&mut s, "forced_uncorrectable_prob", &fnum(cfg.forced_uncorrectable_prob));
    kv(&mut s, "internal_error_prob", &fnum(cfg.internal_error_prob));
    let crc_mode = match cfg.check_link_crc {
        None => "auto",
        Some(true) => "true",
        Some(false) => "false",
    };
    kv(&mut s, "check_link_crc", &crc_mode);
    kv(&mut s, "auto_piggyback", &cfg.auto_piggyback);
    kv(&mut s, "halt_after_emissions", &cfg.halt_after_emissions);
    kv(&mut s, "crc_poly", &format_args!("0x{:016x}", cfg.crc_poly));
    kv(&mut s, "force_full_codec", &cfg.force_full_codec);
    if !cfg.force_drop.is_empty() {
        kv(&mut s, "force_drop", &join_u64(&cfg.force_drop));
    }
    if !cfg.force_piggyback.is_empty() {
        let pairs: Vec<String> =
            cfg.force_piggyback.iter().map(|(id, ack)| format!("{id}:{ack}")).collect();
        kv(&mut s, "force_piggyback", &pairs.join(", "));
    }
    if !cfg.force_internal_corrupt.is_empty() {
        kv(&mut s, "force_internal_corrupt", &join_u64(&cfg.force_internal_corrupt));
    }
    s
}

fn join_u64(ids: &[u64]) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
}

/// (name, value) pairs in fixed column order, shared by text and CSV.
fn sim_fields(r: &SimReport) -> Vec<(&'static str, String)> {
    vec![
        ("rng_algorithm", r.rng_algorithm.to_string()),
        ("error_regime", r.error_regime.clone()),
        ("world_count", r.world_count.to_string()),
        ("flits_sent", r.flits_sent.to_string()),
        ("first_transmissions", r.first_transmissions.to_string()),
        ("retransmissions", r.retransmissions.to_string()),
        ("flits_delivered", r.flits_delivered.to_string()),
        ("goodput_flits", r.goodput_flits.to_string()),
        ("fec_corrected", r.fec_corrected.to_string()),
        ("fec_uncorrectable_drops", r.fec_uncorrectable_drops.to_string()),
        ("crc_switch_drops", r.crc_switch_drops.to_string()),
        ("channel_drops", r.channel_drops.to_string()),
        ("crc_nacks", r.crc_nacks.to_string()),
        ("retries", r.retries.to_string()),
        ("timeout_replays", r.timeout_replays.to_string()),
        ("rx_discarded_duplicates", r.rx_discarded_duplicates.to_string()),
        ("duplicates_forwarded", r.duplicates_forwarded.to_string()),
        ("fail_data", r.fail_data.to_string()),
        ("fail_gap", r.fail_order.gap.to_string()),
        ("fail_duplicate", r.fail_order.duplicate.to_string()),
        ("fail_reorder", r.fail_order.reorder.to_string()),
        ("channel_busy_ns", fnum(r.channel_busy_ns)),
        ("bw_loss", fnum(r.bw_loss)),
        ("reverse_ack_flits", r.reverse_ack_flits.to_string()),
        ("reverse_nack_flits", r.reverse_nack_flits.to_string()),
        ("reverse_bw_loss", fnum(r.reverse_bw_loss)),
        ("piggybacked_acks_delivered", r.piggybacked_acks_delivered.to_string()),
    ]
}

pub fn sim_text(r: &SimReport) -> String {
    let mut s = String::from("[config]\n");
    s.push_str(&scenario_block(&r.config));
    s.push_str("\n[report]\n");
    for (name, value) in sim_fields(r) {
        let _ = writeln!(s, "{name} = {value}");
    }
    if let Some(log) = &r.delivered_log {
        if log.len() <= 64 {
            let items: Vec<String> =
                log.iter().map(|(id, cqid)| format!("{id}:{cqid}")).collect();
            let _ = writeln!(s, "delivered = {}", items.join(" "));
        } else {
            let _ = writeln!(s, "delivered = ({} events, omitted)", log.len());
        }
    }
    s
}

pub fn sim_csv(r: &SimReport) -> String {
    let mut s = String::new();
    for line in scenario_block(&r.config).lines() {
        let _ = writeln!(s, "# {line}");
    }
    let fields = sim_fields(r);
    let _ = writeln!(s, "{}", fields.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","));
    let _ = writeln!(
        s,
        "{}",
        fields.into_iter().map(|(_, v)| v).collect::<Vec<_>>().join(",")
    );
    s
}

fn analytic_fields(r: &AnalyticReport) -> Vec<(&'static str, String)> {
    vec![
        ("ber", fnum(r.inputs.ber)),
        ("flit_bits", r.inputs.flit_bits.to_string()),
        ("fer_uc", fnum(r.inputs.fer_uc)),
        ("p_coalescing", fnum(r.inputs.p_coalescing)),
        ("flits_per_sec", fnum(r.inputs.flits_per_sec)),
        ("slot_ns", fnum(r.inputs.slot_ns)),
        ("retry_ns", fnum(r.inputs.retry_ns)),
        ("crc_escape", fnum(r.inputs.crc_escape)),
        ("switch_levels", r.inputs.switch_levels.to_string()),
        ("fer", fnum(r.fer)),
        ("p_correct", fnum(r.p_correct)),
        ("fer_ud_direct", fnum(r.fer_ud)),
        ("fer_drop", fnum(r.fer_drop)),
        ("fer_order", fnum(r.fer_order)),
        ("fit_device", fnum(r.fit_device)),
        ("bw_loss_direct", fnum(r.bw_loss_direct)),
        ("bw_loss_switched", fnum(r.bw_loss_switched)),
        ("bw_loss_standalone", fnum(r.bw_loss_standalone)),
    ]
}

pub fn curve_csv(points: &[FitCurvePoint]) -> String {
    let mut s = String::from("level,fit_baseline,fit_rxl\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.level, fnum(p.fit_baseline), fnum(p.fit_rxl));
    }
    s
}

pub fn analytic_text(r: &AnalyticReport, points: &[FitCurvePoint]) -> String {
    let mut s = String::from("[results]\n");
    for (name, value) in analytic_fields(r) {
        let _ = writeln!(s, "{name} = {value}");
    }
    for note in &r.notes {
        let _ = writeln!(s, "note: {note}");
    }
    s.push_str("\n[fit curve]\n");
    s.push_str(&curve_csv(points));
    s
}

pub fn analytic_csv(r: &AnalyticReport, points: &[FitCurvePoint]) -> String {
    let mut s = String::new();
    for note in &r.notes {
        let _ = writeln!(s, "# {note}");
    }
    let fields = analytic_fields(r);
    let _ = writeln!(s, "{}", fields.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","));
    let _ = writeln!(
        s,
        "{}",
        fields.into_iter().map(|(_, v)| v).collect::<Vec<_>>().join(",")
    );
    s.push('\n');
    s.push_str(&curve_csv(points));
    s
}
