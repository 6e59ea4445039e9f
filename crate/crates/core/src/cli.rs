//! Command-line front end. Human-readable reports go to `err`, machine
//! output (CSV, hex, `key=value` lines) to `out`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::adversary::{error_bound, post_key_recover, search_min_error_rate, EveSpec, ForwardingMode};
use crate::analysis::{qnd_scan, scan_csv_line, sweep_strategies, verify_scheme, write_csv};
use crate::config::SessionFile;
use crate::protocol::{run_session_with, Carrier, Verdict};
use crate::rng::RandomStream;
use crate::scheme::{build_bases, SchemeParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
/// Key announced but the decoded message disagrees with what was sent.
pub const EXIT_CORRUPTED: i32 = 3;
/// Command-line usage error.
pub const EXIT_USAGE: i32 = 64;

pub const SEED_ENV: &str = "DETCOMM_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "detcomm",
    version,
    about = "Deterministic two-qubit direct communication simulator"
)]
pub struct Cli {
    /// Seed for every random choice; overrides the config file and DETCOMM_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CarrierArg {
    Memory,
    Bytes,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one session from a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "memory")]
        carrier: CarrierArg,
    },
    /// Error rates of random intercept-resend strategies, as CSV.
    Sweep {
        #[arg(long, default_value = "optimal")]
        scheme: SchemeParams,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value = "as-detected")]
        mode: ForwardingMode,
        /// Also simulate each strategy with about this many control bits.
        #[arg(long)]
        empirical: Option<usize>,
        /// Restarts of the local search for a strategy below the bound.
        #[arg(long, default_value_t = 0)]
        search: usize,
    },
    /// Check the algebraic properties of a scheme.
    Verify {
        #[arg(long, conflicts_with = "params", required_unless_present = "params")]
        scheme: Option<String>,
        /// Explicit `a1,a2,a3` (need not be normalized; failures are reported).
        #[arg(long)]
        params: Option<String>,
    },
    /// Run a session and let the eavesdropper decode with the true key.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the strategy named in the config file.
        #[arg(long)]
        eve: Option<EveSpec>,
    },
    /// Locate schemes admitting a nondemolition measurement.
    QndScan {
        #[arg(long, default_value_t = 21, value_parser = clap::value_parser!(u64).range(2..))]
        grid: u64,
    },
}

/// Seed precedence: flag, then config file, then environment, then zero.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>, env: Option<&str>) -> Result<u64, String> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        None => Ok(0),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with(args: &[String], env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli, env_seed, out, err),
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: &Cli, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, env_seed, out, err) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(cli: &Cli, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let io = |e: std::io::Error| e.to_string();
    match &cli.command {
        Command::Simulate { config, carrier } => {
            let file = SessionFile::load(config).map_err(|e| e.to_string())?;
            let mut session = file.config.clone();
            session.seed = resolve_seed(cli.seed, file.seed, env_seed)?;
            let strategy = file
                .eve
                .resolve(&build_bases(&session.scheme))
                .map_err(|e| e.to_string())?;
            let carrier = match carrier {
                CarrierArg::Memory => Carrier::Memory,
                CarrierArg::Bytes => Carrier::Bytes,
            };
            let t = run_session_with(&session, &strategy, carrier).map_err(|e| e.to_string())?;
            let r = &t.error_report;
            writeln!(err, "scheme: {}", session.scheme).map_err(io)?;
            writeln!(err, "eve: {}", file.eve).map_err(io)?;
            writeln!(err, "seed: {}", session.seed).map_err(io)?;
            writeln!(
                err,
                "control errors: {}/{} (rate {:.6}, threshold {:.6})",
                r.control_errors, r.control_total, r.error_rate, session.abort_threshold
            )
            .map_err(io)?;
            match r.verdict {
                Verdict::Abort => {
                    writeln!(err, "verdict: ABORT").map_err(io)?;
                    Ok(EXIT_ABORT)
                }
                Verdict::Pass => {
                    let decoded = t.decoded_message.clone().unwrap_or_default();
                    writeln!(out, "{}", hex::encode(&decoded)).map_err(io)?;
                    let ok = t.decodes_to(&session.message);
                    writeln!(err, "verdict: PASS").map_err(io)?;
                    if !t.erased_bits.is_empty() {
                        writeln!(err, "erased bits: {}", t.erased_bits.len()).map_err(io)?;
                    }
                    if ok {
                        Ok(EXIT_OK)
                    } else {
                        writeln!(err, "decoded message differs from the one sent").map_err(io)?;
                        Ok(EXIT_CORRUPTED)
                    }
                }
            }
        }
        Command::Sweep {
            scheme,
            n,
            mode,
            empirical,
            search,
        } => {
            let seed = resolve_seed(cli.seed, None, env_seed)?;
            let (rows, summary) =
                sweep_strategies(scheme, *n as usize, *mode, seed, *empirical).map_err(|e| e.to_string())?;
            write_csv(&rows, &mut *out).map_err(io)?;
            writeln!(err, "scheme {scheme} mode {mode}: {summary}").map_err(io)?;
            if *search > 0 {
                let mut rng = RandomStream::substream(seed, u64::MAX);
                let probe = search_min_error_rate(&build_bases(scheme), *search, &mut rng);
                writeln!(
                    err,
                    "search: best rate {:.12} after {} evaluations (bound {:.12})",
                    probe.best_rate,
                    probe.evaluations,
                    error_bound(scheme)
                )
                .map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Verify { scheme, params } => {
            let [a1, a2, a3] = match (scheme, params) {
                (Some(name), _) => SchemeParams::preset(name).map_err(|e| e.to_string())?.as_array(),
                (None, Some(p)) => parse_triple(p)?,
                (None, None) => return Err("give --scheme or --params".into()),
            };
            let report = verify_scheme(a1, a2, a3);
            write!(err, "{report}").map_err(io)?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_INTERNAL })
        }
        Command::Attack { config, eve } => {
            let file = SessionFile::load(config).map_err(|e| e.to_string())?;
            let mut session = file.config.clone();
            session.seed = resolve_seed(cli.seed, file.seed, env_seed)?;
            let spec = eve.unwrap_or(file.eve);
            let bases = build_bases(&session.scheme);
            let strategy = spec.resolve(&bases).map_err(|e| e.to_string())?;
            let t = run_session_with(&session, &strategy, Carrier::Memory).map_err(|e| e.to_string())?;
            let recovery =
                post_key_recover(&t.eve_records, &t.key(), &t.bits(), &bases, &strategy).map_err(|e| e.to_string())?;
            let verdict = match t.error_report.verdict {
                Verdict::Pass => "PASS",
                Verdict::Abort => "ABORT",
            };
            writeln!(err, "scheme {} eve {} seed {}", session.scheme, spec, session.seed).map_err(io)?;
            writeln!(out, "verdict={verdict}").map_err(io)?;
            writeln!(out, "bob_error_rate={}", t.error_report.error_rate).map_err(io)?;
            writeln!(out, "control_bits={}", t.error_report.control_total).map_err(io)?;
            writeln!(out, "eve_correct_fraction={}", recovery.correct_fraction).map_err(io)?;
            writeln!(out, "eve_certain_fraction={}", recovery.certain_fraction).map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::QndScan { grid } => {
            let points = qnd_scan(*grid as usize);
            writeln!(out, "a1,a2,a3,vulnerable,pattern").map_err(io)?;
            for p in &points {
                writeln!(out, "{}", scan_csv_line(p)).map_err(io)?;
            }
            let vulnerable = points.iter().filter(|p| p.backdoor.is_some()).count();
            let interior_vulnerable = points.iter().filter(|p| p.backdoor.is_some() && !p.on_edge).count();
            let edge_safe = points.iter().filter(|p| p.backdoor.is_none() && p.on_edge).count();
            writeln!(
                err,
                "grid {grid}: {} points, {vulnerable} vulnerable, {interior_vulnerable} vulnerable in the interior, {edge_safe} safe on an edge",
                points.len()
            )
            .map_err(io)?;
            Ok(EXIT_OK)
        }
    }
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected a1,a2,a3, got {s:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(v)
}
