//! `censim` command-line interface.
//!
//! Exit codes: 0 on a completed run, 2 on scenario load/validation failure,
//! 3 on a runtime error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use censim::harness::{
    load_report, load_scenario, run_scenario, save_report, trace_domain, HarnessError, Report,
    RunOptions,
};
use censim::probe::{ProbeLayer, TraceOutcome, VerdictValue};

/// Environment variable naming the default directory for report output.
const OUT_DIR_ENV: &str = "CENSIM_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "censim",
    version,
    about = "Censorship gateway simulator and probe suite"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report.
    Run {
        scenario: PathBuf,
        /// Report path; defaults to $CENSIM_OUT_DIR/report-<name>.json or
        /// ./report-<name>.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for full per-row capture files.
        #[arg(long)]
        captures: Option<PathBuf>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Load and validate a scenario, reporting the first violation.
    Validate { scenario: PathBuf },
    /// Inspect a stored report.
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
    /// TTL-trace one domain through one layer from every trace vantage.
    Trace {
        scenario: PathBuf,
        #[arg(long)]
        domain: String,
        #[arg(long, value_enum)]
        layer: LayerArg,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Print a human summary table.
    Show { report: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum LayerArg {
    Dns,
    Http,
    Tls,
}

impl From<LayerArg> for ProbeLayer {
    fn from(value: LayerArg) -> Self {
        match value {
            LayerArg::Dns => ProbeLayer::Dns,
            LayerArg::Http => ProbeLayer::Http,
            LayerArg::Tls => ProbeLayer::Tls,
        }
    }
}

fn main() -> ExitCode {
    // Rust ignores SIGPIPE; restore the default so piping into `head` ends
    // the process instead of panicking on a closed stdout.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("censim: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            captures,
            seed,
        } => {
            let scenario = load_scenario(&scenario)?;
            let options = RunOptions {
                seed_override: seed,
                captures_dir: captures.as_deref(),
            };
            let report = run_scenario(&scenario, &options)?;
            let out = out.unwrap_or_else(|| default_report_path(&scenario.name));
            save_report(&report, &out)?;
            println!("report written to {}", out.display());
            print_summary(&report);
            Ok(())
        }
        Command::Validate { scenario } => {
            let scenario = load_scenario(&scenario)?;
            println!(
                "scenario {} is valid: {} domains, {} matrix targets, {} trace vantages",
                scenario.name,
                scenario.domains.len(),
                scenario.matrix_targets.len(),
                scenario.probe_plan.trace_vantages.len()
            );
            Ok(())
        }
        Command::Report {
            command: ReportCommand::Show { report },
        } => {
            let report = load_report(&report)?;
            print_summary(&report);
            Ok(())
        }
        Command::Trace {
            scenario,
            domain,
            layer,
        } => {
            let scenario = load_scenario(&scenario)?;
            let traces = trace_domain(&scenario, layer.into(), &domain)?;
            for trace in traces {
                println!(
                    "vantage {}, layer {}, domain {}",
                    trace.vantage, trace.layer, domain
                );
                println!("  {:>4}  {:<16} router", "ttl", "outcome");
                for (ttl, outcome) in &trace.per_ttl_outcomes {
                    let (label, router) = match outcome {
                        TraceOutcome::TimeExceeded { router } => {
                            ("time-exceeded", router.to_string())
                        }
                        TraceOutcome::Interference { kind } => ("interference", kind.to_string()),
                        TraceOutcome::Clean => ("clean", String::new()),
                    };
                    println!("  {ttl:>4}  {label:<16} {router}");
                }
                match (trace.first_interfering_ttl, &trace.chokepoint_router) {
                    (Some(ttl), Some(router)) => {
                        println!("  first interfering ttl: {ttl}; chokepoint: {router}")
                    }
                    _ => println!("  no interference observed"),
                }
            }
            Ok(())
        }
    }
}

fn default_report_path(scenario_name: &str) -> PathBuf {
    let dir = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("report-{scenario_name}.json"))
}

fn print_summary(report: &Report) {
    println!(
        "scenario {} (seed {}, tool {})",
        report.scenario_name, report.seed, report.tool_version
    );

    let mut by_layer: BTreeMap<(String, VerdictValue), usize> = BTreeMap::new();
    for row in &report.domain_rows {
        *by_layer
            .entry((row.layer.to_string(), row.verdict))
            .or_default() += 1;
    }
    println!("verdicts:");
    for ((layer, verdict), count) in &by_layer {
        println!("  {layer:<5} {verdict:<26} {count:>5}");
    }

    println!("protocol matrix:");
    for row in &report.matrix_rows {
        println!(
            "  {:<12} {:>3}/{:<5} {:<12} responses={}",
            row.label,
            harness_proto(row.proto),
            row.port,
            row.verdict.to_string(),
            row.response_packet_count
        );
    }

    let agg = &report.aggregates;
    println!("aggregates:");
    println!(
        "  poisoned_fraction={} ({}/{} dns probes)",
        agg.poisoned_fraction, agg.dns_poisoned_count, agg.dns_probe_count
    );
    println!(
        "  blockpage={} rst={} sni_reset={} silent_drop={}",
        agg.blockpage_count, agg.rst_count, agg.sni_reset_count, agg.silent_drop_count
    );
    println!(
        "  allowed protocols: {}",
        agg.allowed_protocol_set
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join(", ")
    );
    match &agg.chokepoint_consensus {
        Some(censim::probe::ConsensusOutcome::Unanimous(router)) => {
            println!("  chokepoint consensus: unanimous at {router}")
        }
        Some(censim::probe::ConsensusOutcome::Divergent(routers)) => println!(
            "  chokepoint consensus: divergent ({})",
            routers
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
        None => println!("  chokepoint consensus: no interference localized"),
    }
}

fn harness_proto(proto: censim::netsim::Transport) -> &'static str {
    match proto {
        censim::netsim::Transport::Tcp => "TCP",
        censim::netsim::Transport::Udp => "UDP",
    }
}
