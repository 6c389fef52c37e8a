//! Executes a scenario's probe plan in the documented deterministic order:
//! domains sorted, probes DNS → HTTP → TLS → matrix → trace.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::netsim::HostId;
use crate::probe::{
    consensus_chokepoint, Baseline, Evidence, HttpMutation, ProbeError, ProbeLayer, Prober,
    TraceResult, Verdict,
};
use crate::wire::parse_http_response;

use super::report::{DomainVerdictRow, MatrixRow, Report, RowDetail, TraceRow};
use super::scenario::{DomainEntry, Scenario};
use super::{aggregate, HarnessError};

/// Options for a run. The seed override replaces the scenario's seed; the
/// captures directory, when set, receives one JSON capture file per row.
#[derive(Debug, Default, Clone)]
pub struct RunOptions<'a> {
    pub seed_override: Option<u64>,
    pub captures_dir: Option<&'a Path>,
}

pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<Report, HarnessError> {
    let seed = options.seed_override.unwrap_or(scenario.seed);
    let world = scenario.build_world()?;
    let baseline = Baseline::collect(&world, scenario.domain_names());
    let prober = Prober::new(&world, &baseline);
    let sorted = scenario.sorted_domains();
    let plan = &scenario.probe_plan;
    let mut sink = CaptureSink::new(options.captures_dir)?;

    let mut domain_rows = Vec::new();

    // DNS sweep.
    let dns_vantage = HostId(plan.dns_vantage.clone());
    for entry in &sorted {
        let context = || format!("dns probe for {} from {}", entry.name, dns_vantage);
        let (verdict, message) = prober
            .dns_probe(&entry.name, &dns_vantage)
            .map_err(|e| probe_failed(context(), e))?;
        let id = format!("dns:{}:{}", entry.name, dns_vantage);
        sink.write(&id, &verdict.evidence)?;
        domain_rows.push(DomainVerdictRow {
            id,
            layer: ProbeLayer::Dns,
            domain: entry.name.clone(),
            category: entry.category,
            vantage: dns_vantage.clone(),
            mutation: None,
            verdict: verdict.value,
            evidence_digest: verdict.evidence.digest(),
            detail: RowDetail {
                dns_answers: message.map(|m| m.answers),
                ..RowDetail::default()
            },
        });
    }

    // HTTP sweep, then the mutation re-probes the plan asks for.
    let http_vantage = HostId(plan.http_vantage.clone());
    for entry in &sorted {
        let row = http_row(&prober, entry, &http_vantage, None, &mut sink)?;
        domain_rows.push(row);
    }
    for domain in &plan.http_mutation_domains {
        let entry = sorted
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(domain))
            .expect("validated mutation domain");
        for mutation in &plan.http_mutations {
            let row = http_row(&prober, entry, &http_vantage, Some(*mutation), &mut sink)?;
            domain_rows.push(row);
        }
    }

    // TLS sweep.
    let tls_vantage = HostId(plan.tls_vantage.clone());
    for entry in &sorted {
        let context = || format!("tls probe for {} from {}", entry.name, tls_vantage);
        let verdict = prober
            .tls_probe(&entry.name, &tls_vantage)
            .map_err(|e| probe_failed(context(), e))?;
        let id = format!("tls:{}:{}", entry.name, tls_vantage);
        sink.write(&id, &verdict.evidence)?;
        domain_rows.push(DomainVerdictRow {
            id,
            layer: ProbeLayer::Tls,
            domain: entry.name.clone(),
            category: entry.category,
            vantage: tls_vantage.clone(),
            mutation: None,
            verdict: verdict.value,
            evidence_digest: verdict.evidence.digest(),
            detail: RowDetail {
                sni: Some(entry.name.clone()),
                ..RowDetail::default()
            },
        });
    }

    // Protocol matrix.
    let matrix_vantage = HostId(plan.matrix_vantage.clone());
    let targets = scenario.resolve_targets(draw_random_high_port(scenario, seed))?;
    let results = prober
        .protocol_matrix(&matrix_vantage, &targets)
        .map_err(|e| probe_failed(format!("protocol matrix from {matrix_vantage}"), e))?;
    let mut matrix_rows = Vec::new();
    for (target, verdict) in results {
        let id = format!("matrix:{}", target.label);
        sink.write(&id, &verdict.evidence)?;
        matrix_rows.push(MatrixRow {
            id,
            label: target.label,
            proto: target.proto,
            port: target.port,
            verdict: verdict.value,
            response_packet_count: verdict.evidence.received().count(),
            evidence_digest: verdict.evidence.digest(),
        });
    }

    // TTL traces across the plan's vantages, then the consensus call.
    let mut trace_rows = Vec::new();
    let mut traces: Vec<TraceResult> = Vec::new();
    for vantage in &plan.trace_vantages {
        let vantage = HostId(vantage.clone());
        for probe in &plan.trace_probes {
            let context = || {
                format!(
                    "ttl trace ({}) for {} from {}",
                    probe.layer, probe.domain, vantage
                )
            };
            let trace = prober
                .ttl_trace(probe.layer, &probe.domain, &vantage, plan.trace_max_ttl)
                .map_err(|e| probe_failed(context(), e))?;
            trace_rows.push(TraceRow {
                id: format!("trace:{}:{}:{}", probe.layer, probe.domain, vantage),
                layer: trace.layer,
                domain: trace.domain.clone(),
                vantage: trace.vantage.clone(),
                max_ttl: plan.trace_max_ttl,
                per_ttl_outcomes: trace.per_ttl_outcomes.clone(),
                first_interfering_ttl: trace.first_interfering_ttl,
                chokepoint_router: trace.chokepoint_router.clone(),
            });
            traces.push(trace);
        }
    }
    let localized: Vec<TraceResult> = traces
        .iter()
        .filter(|t| t.chokepoint_router.is_some())
        .cloned()
        .collect();
    let consensus = if localized.is_empty() {
        None
    } else {
        Some(
            consensus_chokepoint(&localized)
                .map_err(|e| probe_failed("chokepoint consensus".to_string(), e))?,
        )
    };

    let mut report = Report {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_name: scenario.name.clone(),
        scenario_digest: scenario.digest(),
        seed,
        domain_rows,
        matrix_rows,
        trace_rows,
        consensus,
        aggregates: super::report::Stats {
            poisoned_fraction: 0.0,
            dns_poisoned_count: 0,
            dns_probe_count: 0,
            blockpage_count: 0,
            rst_count: 0,
            sni_reset_count: 0,
            silent_drop_count: 0,
            allowed_protocol_set: Default::default(),
            chokepoint_consensus: None,
        },
    };
    report.aggregates = aggregate(&report)?;
    Ok(report)
}

/// Runs the plan's trace probes for one (layer, domain) from every trace
/// vantage; the CLI `trace` subcommand prints the result.
pub fn trace_domain(
    scenario: &Scenario,
    layer: ProbeLayer,
    domain: &str,
) -> Result<Vec<TraceResult>, HarnessError> {
    let world = scenario.build_world()?;
    let baseline = Baseline::collect(&world, scenario.domain_names());
    let prober = Prober::new(&world, &baseline);
    scenario
        .probe_plan
        .trace_vantages
        .iter()
        .map(|vantage| {
            let vantage = HostId(vantage.clone());
            prober
                .ttl_trace(layer, domain, &vantage, scenario.probe_plan.trace_max_ttl)
                .map_err(|e| {
                    probe_failed(
                        format!("ttl trace ({layer}) for {domain} from {vantage}"),
                        e,
                    )
                })
        })
        .collect()
}

fn http_row(
    prober: &Prober<'_>,
    entry: &DomainEntry,
    vantage: &HostId,
    mutation: Option<HttpMutation>,
    sink: &mut CaptureSink<'_>,
) -> Result<DomainVerdictRow, HarnessError> {
    let context = || match mutation {
        Some(m) => format!("http probe ({m}) for {} from {vantage}", entry.name),
        None => format!("http probe for {} from {vantage}", entry.name),
    };
    let verdict = prober
        .http_probe(&entry.name, "/", vantage, mutation)
        .map_err(|e| probe_failed(context(), e))?;
    let id = match mutation {
        Some(m) => format!("http:{}:{}:{m}", entry.name, vantage),
        None => format!("http:{}:{}", entry.name, vantage),
    };
    sink.write(&id, &verdict.evidence)?;
    Ok(DomainVerdictRow {
        id,
        layer: ProbeLayer::Http,
        domain: entry.name.clone(),
        category: entry.category,
        vantage: vantage.clone(),
        mutation,
        verdict: verdict.value,
        evidence_digest: verdict.evidence.digest(),
        detail: RowDetail {
            http_status: http_status_of(&verdict),
            ..RowDetail::default()
        },
    })
}

fn http_status_of(verdict: &Verdict) -> Option<u16> {
    verdict
        .evidence
        .received()
        .filter(|p| !p.payload.is_empty())
        .find_map(|p| parse_http_response(&p.payload).ok())
        .map(|r| r.status_code)
}

/// Picks the matrix's random high port from the seed, avoiding every port
/// the scenario already uses.
fn draw_random_high_port(scenario: &Scenario, seed: u64) -> u16 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reserved: Vec<u16> = scenario
        .matrix_targets
        .iter()
        .filter_map(|t| match t.port {
            super::scenario::PortSpec::Fixed(p) => Some(p),
            super::scenario::PortSpec::RandomHigh(_) => None,
        })
        .collect();
    loop {
        let port = rng.gen_range(10000..=60000);
        if !reserved.contains(&port) {
            return port;
        }
    }
}

fn probe_failed(context: String, source: ProbeError) -> HarnessError {
    HarnessError::Probe { context, source }
}

/// Writes per-row capture files when a captures directory is configured.
struct CaptureSink<'a> {
    dir: Option<&'a Path>,
}

impl<'a> CaptureSink<'a> {
    fn new(dir: Option<&'a Path>) -> Result<Self, HarnessError> {
        if let Some(dir) = dir {
            std::fs::create_dir_all(dir)
                .map_err(|e| HarnessError::Report(format!("creating {}: {e}", dir.display())))?;
        }
        Ok(Self { dir })
    }

    fn write(&mut self, row_id: &str, evidence: &Evidence) -> Result<(), HarnessError> {
        let Some(dir) = self.dir else {
            return Ok(());
        };
        let file = dir.join(format!("{}.json", row_id.replace(':', "--")));
        let json = serde_json::to_string_pretty(evidence)
            .map_err(|e| HarnessError::Report(format!("encoding capture {row_id}: {e}")))?;
        std::fs::write(&file, json)
            .map_err(|e| HarnessError::Report(format!("writing {}: {e}", file.display())))
    }
}
