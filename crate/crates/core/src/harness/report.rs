//! Persisted results of a scenario run. Field names are part of the external
//! contract; see `docs/report-schema.md`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::netsim::{HostId, RouterId, Transport};
use crate::probe::{ConsensusOutcome, HttpMutation, ProbeLayer, TraceOutcome, VerdictValue};
use crate::wire::DnsAnswer;

use super::scenario::DomainCategory;
use super::HarnessError;

/// Layer-specific metadata captured alongside a verdict: DNS answers and
/// their TTLs, HTTP status codes, SNI values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowDetail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dns_answers: Option<Vec<DnsAnswer>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http_status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sni: Option<String>,
}

/// One (domain, layer, vantage, mutation) measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainVerdictRow {
    /// Stable row id, also used to name sidecar capture files.
    pub id: String,
    pub layer: ProbeLayer,
    pub domain: String,
    pub category: DomainCategory,
    pub vantage: HostId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<HttpMutation>,
    pub verdict: VerdictValue,
    pub evidence_digest: String,
    #[serde(default)]
    pub detail: RowDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub id: String,
    pub label: String,
    pub proto: Transport,
    pub port: u16,
    pub verdict: VerdictValue,
    pub response_packet_count: usize,
    pub evidence_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub id: String,
    pub layer: ProbeLayer,
    pub domain: String,
    pub vantage: HostId,
    pub max_ttl: u8,
    pub per_ttl_outcomes: Vec<(u8, TraceOutcome)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_interfering_ttl: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chokepoint_router: Option<RouterId>,
}

/// Aggregate statistics, recomputable from the raw rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// DNS_POISONED verdicts over all DNS-probed domains.
    pub poisoned_fraction: f64,
    pub dns_poisoned_count: usize,
    pub dns_probe_count: usize,
    pub blockpage_count: usize,
    pub rst_count: usize,
    pub sni_reset_count: usize,
    pub silent_drop_count: usize,
    /// `PROTO/port` strings of matrix targets that completed an exchange.
    pub allowed_protocol_set: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chokepoint_consensus: Option<ConsensusOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub scenario_name: String,
    pub scenario_digest: String,
    pub seed: u64,
    pub domain_rows: Vec<DomainVerdictRow>,
    pub matrix_rows: Vec<MatrixRow>,
    pub trace_rows: Vec<TraceRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus: Option<ConsensusOutcome>,
    pub aggregates: Stats,
}

impl Report {
    /// Canonical serialized form; byte-identical for identical runs.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Recomputes the aggregate statistics from the raw rows.
pub fn aggregate(report: &Report) -> Result<Stats, HarnessError> {
    let dns_rows: Vec<&DomainVerdictRow> = report
        .domain_rows
        .iter()
        .filter(|r| r.layer == ProbeLayer::Dns)
        .collect();
    if dns_rows.is_empty() {
        return Err(HarnessError::Report(
            "empty report: no DNS verdict rows to aggregate".to_string(),
        ));
    }
    let dns_poisoned_count = dns_rows
        .iter()
        .filter(|r| r.verdict == VerdictValue::DnsPoisoned)
        .count();
    let count_verdict = |layer: ProbeLayer, verdict: VerdictValue| {
        report
            .domain_rows
            .iter()
            .filter(|r| r.layer == layer && r.verdict == verdict)
            .count()
    };
    let silent_drop_count = report
        .domain_rows
        .iter()
        .map(|r| r.verdict)
        .chain(report.matrix_rows.iter().map(|r| r.verdict))
        .filter(|v| *v == VerdictValue::SilentDrop)
        .count();
    let allowed_protocol_set = report
        .matrix_rows
        .iter()
        .filter(|r| r.verdict == VerdictValue::Ok)
        .map(|r| format!("{}/{}", proto_token(r.proto), r.port))
        .collect();
    Ok(Stats {
        poisoned_fraction: dns_poisoned_count as f64 / dns_rows.len() as f64,
        dns_poisoned_count,
        dns_probe_count: dns_rows.len(),
        blockpage_count: count_verdict(ProbeLayer::Http, VerdictValue::HttpBlockpage),
        rst_count: count_verdict(ProbeLayer::Http, VerdictValue::TcpRst),
        sni_reset_count: count_verdict(ProbeLayer::Tls, VerdictValue::TlsRstAfterClientHello),
        silent_drop_count,
        allowed_protocol_set,
        chokepoint_consensus: report.consensus.clone(),
    })
}

pub(crate) fn proto_token(proto: Transport) -> &'static str {
    match proto {
        Transport::Tcp => "TCP",
        Transport::Udp => "UDP",
    }
}

/// Writes the report as canonical JSON.
pub fn save_report(report: &Report, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, report.to_json())
        .map_err(|e| HarnessError::Report(format!("writing {}: {e}", path.display())))
}

/// Loads a report and replays the aggregate computation over its rows; a
/// mismatch means the file was edited or corrupted.
pub fn load_report(path: &Path) -> Result<Report, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let report: Report = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.display().to_string(),
        detail: format!("line {}, column {}: {e}", e.line(), e.column()),
    })?;
    let recomputed = aggregate(&report)?;
    if recomputed != report.aggregates {
        return Err(HarnessError::Report(format!(
            "aggregates in {} do not match their rows",
            path.display()
        )));
    }
    Ok(report)
}
