//! `flitsim` command line: closed-form reliability analysis, Monte Carlo /
//! scripted link simulation, and exhaustive codec self-checks.
//!
//! Exit codes: 0 success, 2 configuration or usage error (the message names
//! the offending key and line), 1 internal assertion failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flitsim::analytics::{compute_report, fit_curve, AnalyticInputs};
use flitsim::sim_engine::{run_worlds, ScenarioConfig};

mod render;
mod selftest;

/// Relative output paths are resolved under this directory when it is set.
const OUT_DIR_ENV: &str = "FLITSIM_OUT";

#[derive(Parser)]
#[command(name = "flitsim", version, about = "Flit-level interconnect reliability toolkit")]
struct Cli {
    /// Progress notes on stderr (never part of report output).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form reliability and bandwidth figures, plus the FIT-vs-levels curve.
    Analyze {
        /// Optional key = value input file (see scenarios/fig7_sweep.scenario).
        config: Option<PathBuf>,
        #[arg(long)]
        ber: Option<f64>,
        #[arg(long)]
        flit_bits: Option<u32>,
        #[arg(long)]
        fer_uc: Option<f64>,
        #[arg(long)]
        p_coalescing: Option<f64>,
        #[arg(long)]
        flits_per_sec: Option<f64>,
        #[arg(long)]
        slot_ns: Option<f64>,
        #[arg(long)]
        retry_ns: Option<f64>,
        /// Switch levels for the table row.
        #[arg(long)]
        levels: Option<u32>,
        /// Deepest level of the FIT curve.
        #[arg(long)]
        max_levels: Option<u32>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Additionally write just the FIT curve CSV here.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Run one scenario file and report every counter.
    Simulate {
        config: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Independent replicas on separate RNG streams, merged by summation.
        #[arg(long, default_value_t = 1)]
        parallel: u32,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive codec property runs (CRC burst guarantee, sequence fold,
    /// FEC correction sweeps). Any failure is an internal assertion.
    CodecSelftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(1),
    }
}

fn run(cli: &Cli) -> Result<(), String> {
    match &cli.command {
        Command::Analyze {
            config,
            ber,
            flit_bits,
            fer_uc,
            p_coalescing,
            flits_per_sec,
            slot_ns,
            retry_ns,
            levels,
            max_levels,
            format,
            out,
            curve,
        } => {
            let mut inputs = AnalyticInputs::default();
            let mut curve_depth = 8u32;
            if let Some(path) = config {
                parse_analyze_file(path, &mut inputs, &mut curve_depth)?;
            }
            override_opt(&mut inputs.ber, *ber);
            override_opt(&mut inputs.flit_bits, *flit_bits);
            override_opt(&mut inputs.fer_uc, *fer_uc);
            override_opt(&mut inputs.p_coalescing, *p_coalescing);
            override_opt(&mut inputs.flits_per_sec, *flits_per_sec);
            override_opt(&mut inputs.slot_ns, *slot_ns);
            override_opt(&mut inputs.retry_ns, *retry_ns);
            override_opt(&mut inputs.switch_levels, *levels);
            override_opt(&mut curve_depth, *max_levels);

            let report = compute_report(&inputs).map_err(|e| e.to_string())?;
            let points = fit_curve(&inputs, curve_depth);
            let rendered = match format {
                Format::Text => render::analytic_text(&report, &points),
                Format::Csv => render::analytic_csv(&report, &points),
            };
            emit(out.as_deref(), &rendered)?;
            if let Some(path) = curve {
                emit(Some(path), &render::curve_csv(&points))?;
            }
            Ok(())
        }
        Command::Simulate { config, seed, parallel, format, out } => {
            let text = read_config(config)?;
            let mut cfg = ScenarioConfig::parse_str(&text)
                .map_err(|e| format!("{}: {e}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = *seed;
            }
            if *parallel == 0 {
                return Err("--parallel must be >= 1".into());
            }
            if cli.verbose {
                eprintln!(
                    "running {} flits x {} world(s), mode {:?}",
                    cfg.flit_count, parallel, cfg.mode
                );
            }
            let report = run_worlds(&cfg, *parallel).map_err(|e| e.to_string())?;
            let rendered = match format {
                Format::Text => render::sim_text(&report),
                Format::Csv => render::sim_csv(&report),
            };
            emit(out.as_deref(), &rendered)
        }
        Command::CodecSelftest => {
            selftest::run_all(cli.verbose);
            Ok(())
        }
    }
}

fn override_opt<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn read_config(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// stdout, or a file with relative paths resolved under $FLITSIM_OUT.
fn emit(target: Option<&Path>, content: &str) -> Result<(), String> {
    match target {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => {
            let resolved = match std::env::var_os(OUT_DIR_ENV) {
                Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
                _ => path.to_path_buf(),
            };
            if let Some(parent) = resolved.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .map_err(|e| format!("{}: {e}", parent.display()))?;
                }
            }
            std::fs::write(&resolved, content).map_err(|e| format!("{}: {e}", resolved.display()))
        }
    }
}

fn parse_analyze_file(
    path: &Path,
    inputs: &mut AnalyticInputs,
    curve_depth: &mut u32,
) -> Result<(), String> {
    let text = read_config(path)?;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(format!("{}: line {line}: expected `key = value`", path.display()));
        };
        let key = key.trim();
        let value = value.trim();
        let bad = |e: &dyn std::fmt::Display| {
            format!("{}: line {line}: key `{key}`: {e}", path.display())
        };
        match key {
            "ber" => inputs.ber = value.parse().map_err(|e| bad(&e))?,
            "flit_bits" => inputs.flit_bits = value.parse().map_err(|e| bad(&e))?,
            "fer_uc" => inputs.fer_uc = value.parse().map_err(|e| bad(&e))?,
            "p_coalescing" => inputs.p_coalescing = value.parse().map_err(|e| bad(&e))?,
            "flits_per_sec" => inputs.flits_per_sec = value.parse().map_err(|e| bad(&e))?,
            "slot_ns" => inputs.slot_ns = value.parse().map_err(|e| bad(&e))?,
            "retry_ns" => inputs.retry_ns = value.parse().map_err(|e| bad(&e))?,
            "crc_escape" => inputs.crc_escape = value.parse().map_err(|e| bad(&e))?,
            "switch_levels" => inputs.switch_levels = value.parse().map_err(|e| bad(&e))?,
            "max_levels" => *curve_depth = value.parse().map_err(|e| bad(&e))?,
            _ => {
                return Err(format!("{}: line {line}: unknown key `{key}`", path.display()));
            }
        }
    }
    Ok(())
}
