//! The measurement client: per-layer active probes, baseline comparison,
//! verdict classification, TTL-limited interference localization, and
//! cross-vantage chokepoint consensus.
//!
//! A [`Prober`] borrows an immutable [`World`] plus a [`Baseline`] and may be
//! used from any number of threads; every probe owns its own flow state.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::addr::Ipv4Net;
use crate::netsim::{
    udp_round_trip, ConnectionResult, DeliveryKind, FlowEvent, HostId, NetsimError, Packet,
    RouterId, TcpFlow, Transport, World, DEFAULT_TTL,
};
use crate::wire::{
    decode_dns, encode_dns_query, parse_http_response, render_http_request, DnsAnswer, DnsMessage,
    HttpRequest, HttpResponse, WireError,
};

/// Substring that identifies the injected block page.
pub const BLOCKPAGE_MARKER: &str = "iframe src=\"http://10.10.34.34/";

/// Implements Display by reusing the serde rename, so logs and tables show
/// the same token the report files use.
macro_rules! fmt_via_serde {
    () => {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            let s = serde_json::to_string(self).map_err(|_| std::fmt::Error)?;
            f.write_str(s.trim_matches('"'))
        }
    };
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProbeError {
    #[error("missing baseline entry for {0}")]
    MissingBaseline(String),
    #[error("no traces provided")]
    EmptyInput,
    #[error("trace carries no chokepoint attribution")]
    TraceWithoutChokepoint,
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Classified outcome of one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictValue {
    Ok,
    DnsPoisoned,
    HttpBlockpage,
    TcpRst,
    #[serde(rename = "TLS_RST_AFTER_CLIENTHELLO")]
    TlsRstAfterClientHello,
    SilentDrop,
    Timeout,
}

impl std::fmt::Display for VerdictValue {
    fmt_via_serde!();
}

/// Ordered capture of the packets a probe sent and received; the raw
/// material behind every verdict.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub events: Vec<FlowEvent>,
}

impl Evidence {
    pub fn from_round_trip(sent: Packet, responses: &[Packet]) -> Self {
        let mut events = vec![FlowEvent::Sent { packet: sent }];
        events.extend(
            responses
                .iter()
                .map(|p| FlowEvent::Received { packet: p.clone() }),
        );
        Self { events }
    }

    pub fn received(&self) -> impl Iterator<Item = &Packet> {
        self.events.iter().filter_map(|e| match e {
            FlowEvent::Received { packet } => Some(packet),
            FlowEvent::Sent { .. } => None,
        })
    }

    pub fn sent(&self) -> impl Iterator<Item = &Packet> {
        self.events.iter().filter_map(|e| match e {
            FlowEvent::Sent { packet } => Some(packet),
            FlowEvent::Received { .. } => None,
        })
    }

    /// Stable hex digest over the full ordered capture.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for event in &self.events {
            let (tag, packet) = match event {
                FlowEvent::Sent { packet } => (0u8, packet),
                FlowEvent::Received { packet } => (1u8, packet),
            };
            hasher.update([tag]);
            hasher.update(packet.src.as_str().as_bytes());
            hasher.update([0]);
            hasher.update(packet.dst.as_str().as_bytes());
            hasher.update([0]);
            hasher.update([
                packet.ttl,
                if packet.proto == Transport::Tcp {
                    6
                } else {
                    17
                },
            ]);
            hasher.update(packet.src_port.to_be_bytes());
            hasher.update(packet.dst_port.to_be_bytes());
            let f = packet.flags();
            hasher.update([u8::from(f.syn)
                | u8::from(f.ack) << 1
                | u8::from(f.rst) << 2
                | u8::from(f.fin) << 3
                | u8::from(f.psh) << 4]);
            hasher.update((packet.payload.len() as u32).to_be_bytes());
            hasher.update(&packet.payload);
        }
        hex::encode(hasher.finalize())
    }
}

/// A measurement verdict and the capture that supports it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    pub evidence: Evidence,
}

/// Reference responses gathered over an uncensored path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub resolved: Vec<Ipv4Addr>,
    pub http_status: u16,
    pub http_body_sha256: String,
    pub tls_success: bool,
}

/// Domain → baseline entry, measured via the external baseline server (in
/// the simulator: read straight off the server model, which is exactly what
/// an uncensored path observes).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Baseline {
    entries: BTreeMap<String, BaselineEntry>,
}

impl Baseline {
    pub fn collect<'a>(world: &World, domains: impl IntoIterator<Item = &'a str>) -> Self {
        let mut entries = BTreeMap::new();
        for domain in domains {
            let resolved: Vec<Ipv4Addr> = world.servers().lookup(domain).into_iter().collect();
            debug_assert!(
                !resolved
                    .iter()
                    .any(|a| world.policy().poison_pool.contains(*a)),
                "baseline for {domain} contains a poison-pool address"
            );
            let (http_status, http_body_sha256) =
                crate::netsim::ServerModel::http_fingerprint(domain);
            entries.insert(
                domain.to_ascii_lowercase(),
                BaselineEntry {
                    resolved,
                    http_status,
                    http_body_sha256,
                    tls_success: true,
                },
            );
        }
        Self { entries }
    }

    pub fn entry(&self, domain: &str) -> Option<&BaselineEntry> {
        self.entries.get(&domain.to_ascii_lowercase())
    }

    pub fn insert(&mut self, domain: &str, entry: BaselineEntry) {
        self.entries.insert(domain.to_ascii_lowercase(), entry);
    }
}

/// What a probe observed, reduced to the fields classification looks at.
#[derive(Debug, Clone)]
pub enum Observed<'a> {
    Dns {
        answers: &'a [DnsAnswer],
    },
    Http {
        response: Option<&'a HttpResponse>,
        reset_after_request: bool,
    },
    Tls {
        reset_after_hello: bool,
        server_handshake_seen: bool,
    },
}

/// Pure verdict classification against the baseline.
///
/// DNS poisoning is decided by poison/bogon-pool membership first and
/// baseline mismatch second. An HTTP response that matches neither the
/// baseline fingerprint nor the block-page shape is still a forgery — the
/// uncensored path cannot produce it — and classifies as a block page.
pub fn classify(
    domain: &str,
    observed: &Observed<'_>,
    baseline: &Baseline,
    poison_nets: &[Ipv4Net],
) -> Result<VerdictValue, ProbeError> {
    let entry = baseline
        .entry(domain)
        .ok_or_else(|| ProbeError::MissingBaseline(domain.to_string()))?;
    let verdict = match observed {
        Observed::Dns { answers } => {
            let poisoned = answers
                .iter()
                .any(|a| poison_nets.iter().any(|net| net.contains(a.addr)));
            if poisoned {
                VerdictValue::DnsPoisoned
            } else {
                let mut observed_addrs: Vec<Ipv4Addr> = answers.iter().map(|a| a.addr).collect();
                observed_addrs.sort_unstable();
                let mut expected = entry.resolved.clone();
                expected.sort_unstable();
                if observed_addrs == expected {
                    VerdictValue::Ok
                } else {
                    VerdictValue::DnsPoisoned
                }
            }
        }
        Observed::Http {
            response,
            reset_after_request,
        } => {
            if *reset_after_request {
                VerdictValue::TcpRst
            } else if let Some(resp) = response {
                let body_hex = hex::encode(Sha256::digest(&resp.body));
                let is_blockpage = resp.status_code == 403
                    && String::from_utf8_lossy(&resp.body).contains(BLOCKPAGE_MARKER);
                if is_blockpage {
                    VerdictValue::HttpBlockpage
                } else if resp.status_code == entry.http_status
                    && body_hex == entry.http_body_sha256
                {
                    VerdictValue::Ok
                } else {
                    VerdictValue::HttpBlockpage
                }
            } else {
                VerdictValue::Timeout
            }
        }
        Observed::Tls {
            reset_after_hello,
            server_handshake_seen,
        } => {
            if *reset_after_hello && !*server_handshake_seen {
                VerdictValue::TlsRstAfterClientHello
            } else if *server_handshake_seen {
                VerdictValue::Ok
            } else {
                VerdictValue::Timeout
            }
        }
    };
    Ok(verdict)
}

/// Request mutations used to test the censor's case sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HttpMutation {
    /// `GET` becomes `gET` in the request line.
    MethodCase,
    /// The `Host` header is sent as `hOsT`.
    HeaderCase,
}

impl std::fmt::Display for HttpMutation {
    fmt_via_serde!();
}

/// Which probe layer a trace exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeLayer {
    Dns,
    Http,
    Tls,
}

impl std::fmt::Display for ProbeLayer {
    fmt_via_serde!();
}

/// One protocol-matrix target with its concrete first payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixTarget {
    pub label: String,
    pub proto: Transport,
    pub port: u16,
    #[serde(with = "hex::serde")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceKind {
    DnsInjection,
    Blockpage,
    Rst,
    SilentDrop,
}

impl std::fmt::Display for InterferenceKind {
    fmt_via_serde!();
}

/// Per-TTL outcome of a trace step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOutcome {
    TimeExceeded { router: RouterId },
    Interference { kind: InterferenceKind },
    Clean,
}

impl TraceOutcome {
    pub fn is_interference(&self) -> bool {
        matches!(self, TraceOutcome::Interference { .. })
    }
}

/// Result of TTL-limited interference localization for one
/// (layer, domain, vantage) triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceResult {
    pub layer: ProbeLayer,
    pub domain: String,
    pub vantage: HostId,
    pub per_ttl_outcomes: Vec<(u8, TraceOutcome)>,
    pub first_interfering_ttl: Option<u8>,
    pub chokepoint_router: Option<RouterId>,
}

/// Agreement across traces about where interference originates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusOutcome {
    Unanimous(RouterId),
    Divergent(Vec<RouterId>),
}

/// UNANIMOUS iff all traces name the same router identity; hop indices may
/// differ per path.
pub fn consensus_chokepoint(traces: &[TraceResult]) -> Result<ConsensusOutcome, ProbeError> {
    if traces.is_empty() {
        return Err(ProbeError::EmptyInput);
    }
    let mut routers: Vec<RouterId> = Vec::new();
    for trace in traces {
        let router = trace
            .chokepoint_router
            .clone()
            .ok_or(ProbeError::TraceWithoutChokepoint)?;
        if !routers.contains(&router) {
            routers.push(router);
        }
    }
    Ok(if routers.len() == 1 {
        ConsensusOutcome::Unanimous(routers.remove(0))
    } else {
        ConsensusOutcome::Divergent(routers)
    })
}

fn default_poison_nets() -> Vec<Ipv4Net> {
    // RFC 1918 space: a public name must never resolve here, so any such
    // answer is a bogon regardless of what the censor's pool really is.
    ["10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16"]
        .iter()
        .map(|s| s.parse().expect("static CIDR"))
        .collect()
}

/// The measurement client. Holds only shared immutable references; safe to
/// use concurrently.
pub struct Prober<'w> {
    world: &'w World,
    baseline: &'w Baseline,
    poison_nets: Vec<Ipv4Net>,
}

impl<'w> Prober<'w> {
    pub fn new(world: &'w World, baseline: &'w Baseline) -> Self {
        Self {
            world,
            baseline,
            poison_nets: default_poison_nets(),
        }
    }

    pub fn with_poison_nets(mut self, nets: Vec<Ipv4Net>) -> Self {
        self.poison_nets = nets;
        self
    }

    pub fn world(&self) -> &World {
        self.world
    }

    /// Sends an A query for `domain` and classifies the answer.
    pub fn dns_probe(
        &self,
        domain: &str,
        vantage: &HostId,
    ) -> Result<(Verdict, Option<DnsMessage>), ProbeError> {
        let query = encode_dns_query(dns_id(domain), domain)?;
        let (sent, outcome) = udp_round_trip(
            self.world,
            vantage,
            self.world.servers().resolver(),
            40001,
            53,
            query,
            DEFAULT_TTL,
        )?;
        let evidence = Evidence::from_round_trip(sent, &outcome.response_packets);
        let (value, message) = match outcome.kind {
            DeliveryKind::SilentlyDropped => (VerdictValue::SilentDrop, None),
            DeliveryKind::TimeExceeded { .. } => (VerdictValue::Timeout, None),
            DeliveryKind::Delivered | DeliveryKind::InjectedResponse => {
                match outcome
                    .response_packets
                    .first()
                    .and_then(|p| decode_dns(&p.payload).ok())
                {
                    Some(msg) => {
                        let value = classify(
                            domain,
                            &Observed::Dns {
                                answers: &msg.answers,
                            },
                            self.baseline,
                            &self.poison_nets,
                        )?;
                        (value, Some(msg))
                    }
                    None => (VerdictValue::Timeout, None),
                }
            }
        };
        Ok((Verdict { value, evidence }, message))
    }

    /// Fetches `http://domain{path}` and classifies what came back.
    pub fn http_probe(
        &self,
        domain: &str,
        path: &str,
        vantage: &HostId,
        mutation: Option<HttpMutation>,
    ) -> Result<Verdict, ProbeError> {
        let mut flow = TcpFlow::open(
            self.world,
            vantage.clone(),
            self.world.servers().origin().clone(),
            40101,
            80,
        );
        let value = match flow.handshake()? {
            ConnectionResult::SilentTimeout => VerdictValue::SilentDrop,
            ConnectionResult::ResetAtSyn => VerdictValue::TcpRst,
            ConnectionResult::Established => {
                let request = build_request(domain, path, mutation);
                let outcome = flow.send_data(render_http_request(&request), DEFAULT_TTL)?;
                match outcome.kind {
                    DeliveryKind::SilentlyDropped => VerdictValue::SilentDrop,
                    DeliveryKind::TimeExceeded { .. } => VerdictValue::Timeout,
                    DeliveryKind::Delivered | DeliveryKind::InjectedResponse => {
                        let reset = outcome.response_packets.iter().any(|p| p.flags().rst);
                        let response = outcome
                            .response_packets
                            .iter()
                            .find(|p| !p.payload.is_empty())
                            .and_then(|p| parse_http_response(&p.payload).ok());
                        classify(
                            domain,
                            &Observed::Http {
                                response: response.as_ref(),
                                reset_after_request: reset,
                            },
                            self.baseline,
                            &self.poison_nets,
                        )?
                    }
                }
            }
        };
        Ok(Verdict {
            value,
            evidence: Evidence {
                events: flow.into_transcript(),
            },
        })
    }

    /// Opens TCP/443 and sends a ClientHello with SNI = `domain`.
    pub fn tls_probe(&self, domain: &str, vantage: &HostId) -> Result<Verdict, ProbeError> {
        self.tls_probe_with(domain, vantage, true)
    }

    /// Same as [`Self::tls_probe`], optionally omitting the SNI extension.
    pub fn tls_probe_with(
        &self,
        domain: &str,
        vantage: &HostId,
        send_sni: bool,
    ) -> Result<Verdict, ProbeError> {
        let mut flow = TcpFlow::open(
            self.world,
            vantage.clone(),
            self.world.servers().origin().clone(),
            40201,
            443,
        );
        let value = match flow.handshake()? {
            ConnectionResult::SilentTimeout => VerdictValue::SilentDrop,
            ConnectionResult::ResetAtSyn => VerdictValue::TcpRst,
            ConnectionResult::Established => {
                let hello = crate::wire::build_client_hello(send_sni.then_some(domain));
                let outcome = flow.send_data(hello, DEFAULT_TTL)?;
                match outcome.kind {
                    DeliveryKind::SilentlyDropped => VerdictValue::SilentDrop,
                    DeliveryKind::TimeExceeded { .. } => VerdictValue::Timeout,
                    DeliveryKind::Delivered | DeliveryKind::InjectedResponse => {
                        let reset = outcome.response_packets.iter().any(|p| p.flags().rst);
                        let server_handshake_seen = outcome
                            .response_packets
                            .iter()
                            .any(|p| crate::wire::looks_like_handshake_record(&p.payload));
                        classify(
                            domain,
                            &Observed::Tls {
                                reset_after_hello: reset,
                                server_handshake_seen,
                            },
                            self.baseline,
                            &self.poison_nets,
                        )?
                    }
                }
            }
        };
        Ok(Verdict {
            value,
            evidence: Evidence {
                events: flow.into_transcript(),
            },
        })
    }

    /// Attempts each target once. A flow whose first classifiable packet
    /// vanishes is SILENT_DROP; a completed exchange is OK.
    pub fn protocol_matrix(
        &self,
        vantage: &HostId,
        targets: &[MatrixTarget],
    ) -> Result<Vec<(MatrixTarget, Verdict)>, ProbeError> {
        let mut results = Vec::with_capacity(targets.len());
        for (i, target) in targets.iter().enumerate() {
            let src_port = 40301 + i as u16;
            let verdict = match target.proto {
                Transport::Udp => {
                    let server = if target.port == 53 {
                        self.world.servers().resolver().clone()
                    } else {
                        self.world.servers().origin().clone()
                    };
                    let (sent, outcome) = udp_round_trip(
                        self.world,
                        vantage,
                        &server,
                        src_port,
                        target.port,
                        target.payload.clone(),
                        DEFAULT_TTL,
                    )?;
                    let value = match outcome.kind {
                        DeliveryKind::SilentlyDropped => VerdictValue::SilentDrop,
                        DeliveryKind::TimeExceeded { .. } => VerdictValue::Timeout,
                        DeliveryKind::Delivered | DeliveryKind::InjectedResponse => {
                            if outcome.response_packets.is_empty() {
                                VerdictValue::Timeout
                            } else {
                                VerdictValue::Ok
                            }
                        }
                    };
                    Verdict {
                        value,
                        evidence: Evidence::from_round_trip(sent, &outcome.response_packets),
                    }
                }
                Transport::Tcp => {
                    let mut flow = TcpFlow::open(
                        self.world,
                        vantage.clone(),
                        self.world.servers().origin().clone(),
                        src_port,
                        target.port,
                    );
                    let value = match flow.handshake()? {
                        ConnectionResult::SilentTimeout => VerdictValue::SilentDrop,
                        ConnectionResult::ResetAtSyn => VerdictValue::TcpRst,
                        ConnectionResult::Established => {
                            let outcome = flow.send_data(target.payload.clone(), DEFAULT_TTL)?;
                            match outcome.kind {
                                DeliveryKind::SilentlyDropped => VerdictValue::SilentDrop,
                                DeliveryKind::TimeExceeded { .. } => VerdictValue::Timeout,
                                DeliveryKind::Delivered | DeliveryKind::InjectedResponse => {
                                    if outcome.response_packets.is_empty() {
                                        VerdictValue::Timeout
                                    } else {
                                        VerdictValue::Ok
                                    }
                                }
                            }
                        }
                    };
                    Verdict {
                        value,
                        evidence: Evidence {
                            events: flow.into_transcript(),
                        },
                    }
                }
            };
            results.push((target.clone(), verdict));
        }
        Ok(results)
    }

    /// Steps the triggering packet's TTL from 1 upward until interference
    /// appears. TCP handshakes run at the default TTL; the TTL limit applies
    /// to the packet that actually provokes the censor, so the first
    /// interfering TTL is the chokepoint's hop index.
    pub fn ttl_trace(
        &self,
        layer: ProbeLayer,
        domain: &str,
        vantage: &HostId,
        max_ttl: u8,
    ) -> Result<TraceResult, ProbeError> {
        let mut per_ttl_outcomes = Vec::new();
        let mut first_interfering_ttl = None;
        for ttl in 1..=max_ttl {
            let outcome = self.trace_step(layer, domain, vantage, ttl)?;
            let interfering = outcome.is_interference();
            per_ttl_outcomes.push((ttl, outcome));
            if interfering {
                first_interfering_ttl = Some(ttl);
                break;
            }
        }
        let chokepoint_router = first_interfering_ttl.and_then(|ttl| {
            self.world
                .topology()
                .path(vantage)
                .and_then(|path| path.get(ttl as usize - 1))
                .cloned()
        });
        Ok(TraceResult {
            layer,
            domain: domain.to_string(),
            vantage: vantage.clone(),
            per_ttl_outcomes,
            first_interfering_ttl,
            chokepoint_router,
        })
    }

    fn trace_step(
        &self,
        layer: ProbeLayer,
        domain: &str,
        vantage: &HostId,
        ttl: u8,
    ) -> Result<TraceOutcome, ProbeError> {
        match layer {
            ProbeLayer::Dns => {
                let query = encode_dns_query(dns_id(domain), domain)?;
                let (_, outcome) = udp_round_trip(
                    self.world,
                    vantage,
                    self.world.servers().resolver(),
                    41000 + u16::from(ttl),
                    53,
                    query,
                    ttl,
                )?;
                Ok(trace_outcome(outcome))
            }
            ProbeLayer::Http | ProbeLayer::Tls => {
                let dst_port = if layer == ProbeLayer::Http { 80 } else { 443 };
                let mut flow = TcpFlow::open(
                    self.world,
                    vantage.clone(),
                    self.world.servers().origin().clone(),
                    42000 + u16::from(ttl),
                    dst_port,
                );
                match flow.handshake()? {
                    ConnectionResult::Established => {}
                    // The connection itself is being interfered with; a
                    // silent handshake failure carries no hop information.
                    _ => {
                        return Ok(TraceOutcome::Interference {
                            kind: InterferenceKind::SilentDrop,
                        })
                    }
                }
                let payload = if layer == ProbeLayer::Http {
                    render_http_request(&build_request(domain, "/", None))
                } else {
                    crate::wire::build_client_hello(Some(domain))
                };
                let outcome = flow.send_data(payload, ttl)?;
                Ok(trace_outcome(outcome))
            }
        }
    }
}

fn trace_outcome(outcome: crate::netsim::DeliveryOutcome) -> TraceOutcome {
    match outcome.kind {
        DeliveryKind::TimeExceeded { router, .. } => TraceOutcome::TimeExceeded { router },
        DeliveryKind::SilentlyDropped => TraceOutcome::Interference {
            kind: InterferenceKind::SilentDrop,
        },
        DeliveryKind::InjectedResponse => TraceOutcome::Interference {
            kind: interference_kind(&outcome.response_packets),
        },
        DeliveryKind::Delivered => TraceOutcome::Clean,
    }
}

fn interference_kind(packets: &[Packet]) -> InterferenceKind {
    if packets.iter().any(|p| p.flags().rst) {
        InterferenceKind::Rst
    } else if packets
        .iter()
        .any(|p| matches!(decode_dns(&p.payload), Ok(m) if m.is_response))
    {
        InterferenceKind::DnsInjection
    } else {
        InterferenceKind::Blockpage
    }
}

fn build_request(domain: &str, path: &str, mutation: Option<HttpMutation>) -> HttpRequest {
    let mut request = HttpRequest::get(path, domain);
    match mutation {
        None => {}
        Some(HttpMutation::MethodCase) => request.method = "gET".to_string(),
        Some(HttpMutation::HeaderCase) => {
            request.headers = vec![("hOsT".to_string(), domain.to_string())];
        }
    }
    request
}

/// Stable per-domain query id.
fn dns_id(domain: &str) -> u16 {
    let digest = Sha256::digest(domain.as_bytes());
    u16::from_be_bytes([digest[0], digest[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::censor::{CensorPolicy, DomainPattern, HttpMatchOn, HttpRule, HttpRuleAction};
    use crate::netsim::{build_topology, ServerModel, TopologySpec};

    pub(crate) fn test_world(policy: CensorPolicy) -> World {
        let topology = build_topology(&TopologySpec {
            vantage_paths: [(
                "client".to_string(),
                vec![
                    "r1".to_string(),
                    "r2".to_string(),
                    "GW".to_string(),
                    "r4".to_string(),
                ],
            )]
            .into(),
            servers: vec![
                "resolver".to_string(),
                "origin".to_string(),
                "baseline".to_string(),
            ],
            chokepoint: "GW".to_string(),
        })
        .unwrap();
        let mut servers = ServerModel::new("resolver".into(), "origin".into());
        for (i, domain) in [
            "twitter.com",
            "google.com",
            "bbc.com",
            "instagram.com",
            "example.org",
        ]
        .iter()
        .enumerate()
        {
            servers.add_record(domain, Ipv4Addr::new(198, 18, 0, i as u8 + 1));
        }
        World::new(topology, policy, servers)
    }

    fn june_policy() -> CensorPolicy {
        CensorPolicy {
            dns_blacklist: vec![DomainPattern::Plain("twitter.com".to_string())],
            dns_whitelist: ["google.com".to_string()].into(),
            http_rules: vec![HttpRule {
                pattern: "bbc.com".to_string(),
                match_on: HttpMatchOn::Host,
                case_sensitive: true,
                action: HttpRuleAction::Blockpage,
            }],
            sni_blacklist: vec![DomainPattern::Plain("instagram.com".to_string())],
            whitelist_mode: true,
            ..CensorPolicy::pass_all()
        }
    }

    fn domains() -> Vec<&'static str> {
        vec![
            "twitter.com",
            "google.com",
            "bbc.com",
            "instagram.com",
            "example.org",
        ]
    }

    #[test]
    fn dns_probe_flags_poisoned_answer() {
        let world = test_world(june_policy());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        let (verdict, msg) = prober.dns_probe("twitter.com", &"client".into()).unwrap();
        assert_eq!(verdict.value, VerdictValue::DnsPoisoned);
        let msg = msg.unwrap();
        assert_eq!(msg.answers[0].addr, Ipv4Addr::new(10, 10, 34, 34));
        assert_eq!(msg.answers[0].ttl_seconds, 10);
    }

    #[test]
    fn dns_probe_passes_whitelisted_domain() {
        let world = test_world(june_policy());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        let (verdict, msg) = prober.dns_probe("google.com", &"client".into()).unwrap();
        assert_eq!(verdict.value, VerdictValue::Ok);
        assert_eq!(
            msg.unwrap().answers[0].ttl_seconds,
            crate::netsim::AUTHORITATIVE_TTL
        );
    }

    #[test]
    fn dns_probe_is_clean_under_pass_all() {
        let world = test_world(CensorPolicy::pass_all());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        for domain in domains() {
            let (verdict, _) = prober.dns_probe(domain, &"client".into()).unwrap();
            assert_eq!(verdict.value, VerdictValue::Ok, "{domain}");
        }
    }

    #[test]
    fn http_probe_sees_blockpage_and_mutations_evade_it() {
        let world = test_world(june_policy());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        let base = prober
            .http_probe("bbc.com", "/", &"client".into(), None)
            .unwrap();
        assert_eq!(base.value, VerdictValue::HttpBlockpage);
        for mutation in [HttpMutation::MethodCase, HttpMutation::HeaderCase] {
            let v = prober
                .http_probe("bbc.com", "/", &"client".into(), Some(mutation))
                .unwrap();
            assert_eq!(v.value, VerdictValue::Ok, "{mutation:?}");
        }
    }

    #[test]
    fn http_probe_under_rst_rule() {
        let mut policy = june_policy();
        policy.http_rules[0].action = HttpRuleAction::Rst;
        let world = test_world(policy);
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        let verdict = prober
            .http_probe("bbc.com", "/", &"client".into(), None)
            .unwrap();
        assert_eq!(verdict.value, VerdictValue::TcpRst);
        // No HTTP payload came back, only the bare reset.
        assert!(verdict
            .evidence
            .received()
            .all(|p| p.payload.is_empty() || p.flags().syn));
    }

    #[test]
    fn tls_probe_reset_after_hello_and_sni_omission_evades() {
        let world = test_world(june_policy());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        let hit = prober.tls_probe("instagram.com", &"client".into()).unwrap();
        assert_eq!(hit.value, VerdictValue::TlsRstAfterClientHello);
        let sniless = prober
            .tls_probe_with("instagram.com", &"client".into(), false)
            .unwrap();
        assert_eq!(sniless.value, VerdictValue::Ok);
        // Cross-check the evasion against the censor itself: a hello without
        // the extension draws PASS even though the server is blacklisted.
        let action = crate::censor::apply_policy(
            &Packet::tcp(
                "client".into(),
                "origin".into(),
                40000,
                443,
                crate::netsim::TcpFlags::PSH_ACK,
                crate::wire::build_client_hello(None),
            ),
            &mut crate::censor::FlowTable::new(),
            world.policy(),
        );
        assert_eq!(action, crate::censor::CensorAction::Pass);
        let allowed = prober.tls_probe("google.com", &"client".into()).unwrap();
        assert_eq!(allowed.value, VerdictValue::Ok);
    }

    fn matrix_targets() -> Vec<MatrixTarget> {
        vec![
            MatrixTarget {
                label: "dns".to_string(),
                proto: Transport::Udp,
                port: 53,
                payload: encode_dns_query(7, "example.org").unwrap(),
            },
            MatrixTarget {
                label: "http".to_string(),
                proto: Transport::Tcp,
                port: 80,
                payload: render_http_request(&HttpRequest::get("/", "example.org")),
            },
            MatrixTarget {
                label: "tls".to_string(),
                proto: Transport::Tcp,
                port: 443,
                payload: crate::wire::build_client_hello(Some("example.org")),
            },
            MatrixTarget {
                label: "openvpn".to_string(),
                proto: Transport::Udp,
                port: 1194,
                payload: vec![0x38, 0, 1, 2, 3, 4, 5, 6, 7, 0],
            },
            MatrixTarget {
                label: "ssh".to_string(),
                proto: Transport::Tcp,
                port: 22,
                payload: b"SSH-2.0-OpenSSH_9.6\r\n".to_vec(),
            },
        ]
    }

    #[test]
    fn protocol_matrix_allows_exactly_the_whitelisted_classes() {
        let world = test_world(june_policy());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        let results = prober
            .protocol_matrix(&"client".into(), &matrix_targets())
            .unwrap();
        let by_label: BTreeMap<&str, VerdictValue> = results
            .iter()
            .map(|(t, v)| (t.label.as_str(), v.value))
            .collect();
        assert_eq!(by_label["dns"], VerdictValue::Ok);
        assert_eq!(by_label["http"], VerdictValue::Ok);
        assert_eq!(by_label["tls"], VerdictValue::Ok);
        assert_eq!(by_label["openvpn"], VerdictValue::SilentDrop);
        assert_eq!(by_label["ssh"], VerdictValue::SilentDrop);
        for (target, verdict) in &results {
            if verdict.value == VerdictValue::SilentDrop {
                assert_eq!(verdict.evidence.received().count(), 0, "{}", target.label);
            }
        }
    }

    #[test]
    fn ttl_trace_localizes_the_chokepoint_per_layer() {
        let world = test_world(june_policy());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        for (layer, domain) in [
            (ProbeLayer::Dns, "twitter.com"),
            (ProbeLayer::Http, "bbc.com"),
            (ProbeLayer::Tls, "instagram.com"),
        ] {
            let trace = prober
                .ttl_trace(layer, domain, &"client".into(), 16)
                .unwrap();
            assert_eq!(trace.first_interfering_ttl, Some(3), "{layer:?}");
            assert_eq!(trace.chokepoint_router, Some("GW".into()));
            assert_eq!(trace.per_ttl_outcomes.len(), 3);
            assert!(matches!(
                trace.per_ttl_outcomes[0].1,
                TraceOutcome::TimeExceeded { ref router } if router.as_str() == "r1"
            ));
            assert!(matches!(
                trace.per_ttl_outcomes[1].1,
                TraceOutcome::TimeExceeded { ref router } if router.as_str() == "r2"
            ));
            assert!(trace.per_ttl_outcomes[2].1.is_interference());
        }
    }

    #[test]
    fn ttl_trace_finds_nothing_under_pass_all() {
        let world = test_world(CensorPolicy::pass_all());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        let trace = prober
            .ttl_trace(ProbeLayer::Dns, "twitter.com", &"client".into(), 8)
            .unwrap();
        assert_eq!(trace.first_interfering_ttl, None);
        assert_eq!(trace.chokepoint_router, None);
        assert_eq!(trace.per_ttl_outcomes.len(), 8);
    }

    #[test]
    fn localization_matches_chokepoint_index_exhaustively() {
        // Chokepoint at every index 1..=10 of an 12-hop path.
        for index in 1..=10usize {
            let hops: Vec<String> = (1..=12)
                .map(|i| {
                    if i == index {
                        "GW".to_string()
                    } else {
                        format!("r{i}")
                    }
                })
                .collect();
            let topology = build_topology(&TopologySpec {
                vantage_paths: [("client".to_string(), hops)].into(),
                servers: vec!["resolver".to_string(), "origin".to_string()],
                chokepoint: "GW".to_string(),
            })
            .unwrap();
            let mut servers = ServerModel::new("resolver".into(), "origin".into());
            servers.add_record("blocked.example", Ipv4Addr::new(198, 18, 9, 9));
            let world = World::new(
                topology,
                CensorPolicy {
                    dns_blacklist: vec![DomainPattern::Plain("blocked.example".to_string())],
                    ..CensorPolicy::pass_all()
                },
                servers,
            );
            let baseline = Baseline::collect(&world, ["blocked.example"]);
            let prober = Prober::new(&world, &baseline);
            let trace = prober
                .ttl_trace(ProbeLayer::Dns, "blocked.example", &"client".into(), 16)
                .unwrap();
            assert_eq!(trace.first_interfering_ttl, Some(index as u8));
            assert_eq!(trace.chokepoint_router, Some("GW".into()));
        }
    }

    #[test]
    fn trace_at_chokepoint_index_one_is_a_boundary_case() {
        let topology = build_topology(&TopologySpec {
            vantage_paths: [("client".to_string(), vec!["GW".to_string()])].into(),
            servers: vec!["resolver".to_string(), "origin".to_string()],
            chokepoint: "GW".to_string(),
        })
        .unwrap();
        let mut servers = ServerModel::new("resolver".into(), "origin".into());
        servers.add_record("blocked.example", Ipv4Addr::new(198, 18, 9, 9));
        let world = World::new(
            topology,
            CensorPolicy {
                dns_blacklist: vec![DomainPattern::Plain("blocked.example".to_string())],
                ..CensorPolicy::pass_all()
            },
            servers,
        );
        let baseline = Baseline::collect(&world, ["blocked.example"]);
        let prober = Prober::new(&world, &baseline);
        let trace = prober
            .ttl_trace(ProbeLayer::Dns, "blocked.example", &"client".into(), 16)
            .unwrap();
        assert_eq!(trace.first_interfering_ttl, Some(1));
    }

    fn trace_result(router: Option<&str>) -> TraceResult {
        TraceResult {
            layer: ProbeLayer::Dns,
            domain: "blocked.example".to_string(),
            vantage: "client".into(),
            per_ttl_outcomes: Vec::new(),
            first_interfering_ttl: router.map(|_| 3),
            chokepoint_router: router.map(RouterId::from),
        }
    }

    #[test]
    fn consensus_over_matching_routers_is_unanimous() {
        let traces = vec![trace_result(Some("GW")), trace_result(Some("GW"))];
        assert_eq!(
            consensus_chokepoint(&traces).unwrap(),
            ConsensusOutcome::Unanimous("GW".into())
        );
        assert_eq!(
            consensus_chokepoint(&traces[..1]).unwrap(),
            ConsensusOutcome::Unanimous("GW".into())
        );
    }

    #[test]
    fn consensus_diverges_and_rejects_empty_input() {
        let traces = vec![trace_result(Some("GW")), trace_result(Some("GW2"))];
        assert_eq!(
            consensus_chokepoint(&traces).unwrap(),
            ConsensusOutcome::Divergent(vec!["GW".into(), "GW2".into()])
        );
        assert_eq!(consensus_chokepoint(&[]), Err(ProbeError::EmptyInput));
        assert_eq!(
            consensus_chokepoint(&[trace_result(None)]),
            Err(ProbeError::TraceWithoutChokepoint)
        );
    }

    #[test]
    fn classify_is_pure_and_matches_examples() {
        let mut baseline = Baseline::default();
        baseline.insert(
            "news.example",
            BaselineEntry {
                resolved: vec![Ipv4Addr::new(198, 18, 0, 7)],
                http_status: 200,
                http_body_sha256: "aa".to_string(),
                tls_success: true,
            },
        );
        let nets = default_poison_nets();
        // Identity: observed equals baseline.
        let answers = [DnsAnswer {
            name: "news.example".to_string(),
            addr: Ipv4Addr::new(198, 18, 0, 7),
            ttl_seconds: 3600,
        }];
        let same = classify(
            "news.example",
            &Observed::Dns { answers: &answers },
            &baseline,
            &nets,
        )
        .unwrap();
        assert_eq!(same, VerdictValue::Ok);
        // A pool address that is not the primary still counts as poisoned.
        let pool = [DnsAnswer {
            name: "news.example".to_string(),
            addr: Ipv4Addr::new(10, 10, 34, 7),
            ttl_seconds: 10,
        }];
        let poisoned = classify(
            "news.example",
            &Observed::Dns { answers: &pool },
            &baseline,
            &nets,
        )
        .unwrap();
        assert_eq!(poisoned, VerdictValue::DnsPoisoned);
        // Repeated calls agree.
        let again = classify(
            "news.example",
            &Observed::Dns { answers: &pool },
            &baseline,
            &nets,
        )
        .unwrap();
        assert_eq!(poisoned, again);
        // 403 with the iframe marker is a block page.
        let page = crate::censor::render_blockpage();
        let block = classify(
            "news.example",
            &Observed::Http {
                response: Some(&page),
                reset_after_request: false,
            },
            &baseline,
            &nets,
        )
        .unwrap();
        assert_eq!(block, VerdictValue::HttpBlockpage);
    }

    #[test]
    fn classify_requires_a_baseline_entry() {
        let baseline = Baseline::default();
        let err = classify(
            "ghost.example",
            &Observed::Dns { answers: &[] },
            &baseline,
            &default_poison_nets(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            ProbeError::MissingBaseline("ghost.example".to_string())
        );
    }

    #[test]
    fn baseline_mismatch_without_pool_membership_is_poisoned() {
        let world = test_world(CensorPolicy::pass_all());
        let baseline = Baseline::collect(&world, domains());
        let answers = [DnsAnswer {
            name: "twitter.com".to_string(),
            addr: Ipv4Addr::new(203, 0, 113, 50),
            ttl_seconds: 60,
        }];
        let verdict = classify(
            "twitter.com",
            &Observed::Dns { answers: &answers },
            &baseline,
            &default_poison_nets(),
        )
        .unwrap();
        assert_eq!(verdict, VerdictValue::DnsPoisoned);
    }

    #[test]
    fn probes_from_unknown_vantage_propagate_unknown_host() {
        let world = test_world(june_policy());
        let baseline = Baseline::collect(&world, domains());
        let prober = Prober::new(&world, &baseline);
        assert!(matches!(
            prober.dns_probe("twitter.com", &"ghost".into()),
            Err(ProbeError::Netsim(NetsimError::UnknownHost(_)))
        ));
    }

    #[test]
    fn verdict_tokens_render_like_the_report_format() {
        assert_eq!(
            VerdictValue::TlsRstAfterClientHello.to_string(),
            "TLS_RST_AFTER_CLIENTHELLO"
        );
        assert_eq!(VerdictValue::DnsPoisoned.to_string(), "DNS_POISONED");
        assert_eq!(ProbeLayer::Dns.to_string(), "dns");
    }

    #[test]
    fn probes_share_a_world_across_threads() {
        let world = test_world(june_policy());
        let baseline = Baseline::collect(&world, domains());
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..4)
                .map(|_| {
                    scope.spawn(|| {
                        let prober = Prober::new(&world, &baseline);
                        let (verdict, _) =
                            prober.dns_probe("twitter.com", &"client".into()).unwrap();
                        verdict.value
                    })
                })
                .collect();
            for handle in handles {
                assert_eq!(handle.join().unwrap(), VerdictValue::DnsPoisoned);
            }
        });
    }
}
