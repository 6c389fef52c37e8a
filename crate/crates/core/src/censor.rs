//! The DPI middlebox: evaluates every packet that traverses the chokepoint
//! against a [`CensorPolicy`] and emits one [`CensorAction`].
//!
//! Layer order is fixed: (1) protocol whitelist, (2) DNS, (3) HTTP, (4) SNI.
//! The first matching layer determines the action. Domains on the DNS
//! whitelist are exempt from every layer: any packet whose qname, Host, or
//! SNI equals an exempt domain passes untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::addr::Ipv4Net;
use crate::netsim::{HostId, Packet, Transport};
use crate::wire::{
    classify_protocol, decode_dns, parse_client_hello, parse_http_request, render_http_response,
    ClientHello, DnsAnswer, DnsMessage, HttpRequest, HttpResponse, ProtocolClass,
};

/// Method tokens the HTTP rule engine recognizes. The comparison is exact:
/// a request line reading `gET / HTTP/1.1` disengages the engine entirely,
/// which is what makes method-case mutation an evasion.
const CANONICAL_METHODS: &[&str] = &[
    "GET", "HEAD", "POST", "PUT", "DELETE", "CONNECT", "OPTIONS", "TRACE", "PATCH",
];

/// A domain pattern in a blacklist. By default the match is suffix-based on
/// label boundaries ("telegram.org" also matches "web.telegram.org");
/// `exact` restricts it to whole-name equality. Comparison is always
/// case-insensitive. `poison_address` overrides the pool's primary address
/// for DNS injection triggered by this pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainPattern {
    Plain(String),
    Detailed {
        pattern: String,
        #[serde(default)]
        exact: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        poison_address: Option<Ipv4Addr>,
    },
}

impl DomainPattern {
    pub fn pattern(&self) -> &str {
        match self {
            DomainPattern::Plain(p) => p,
            DomainPattern::Detailed { pattern, .. } => pattern,
        }
    }

    fn exact(&self) -> bool {
        match self {
            DomainPattern::Plain(_) => false,
            DomainPattern::Detailed { exact, .. } => *exact,
        }
    }

    pub fn poison_address(&self) -> Option<Ipv4Addr> {
        match self {
            DomainPattern::Plain(_) => None,
            DomainPattern::Detailed { poison_address, .. } => *poison_address,
        }
    }

    pub fn matches(&self, domain: &str) -> bool {
        let pattern = self.pattern().to_ascii_lowercase();
        let domain = domain.to_ascii_lowercase();
        if domain == pattern {
            return true;
        }
        !self.exact() && domain.ends_with(&format!(".{pattern}"))
    }
}

/// What to match an HTTP rule's pattern against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HttpMatchOn {
    Host,
    Path,
    /// Pattern may appear in either the host or the path.
    Both,
}

/// Action an HTTP rule takes on match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HttpRuleAction {
    Blockpage,
    Rst,
}

/// One HTTP filtering rule. When `case_sensitive` is set, both the Host
/// header lookup (by exact header name `Host`) and the substring comparison
/// are byte-exact; otherwise both are ASCII-case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRule {
    pub pattern: String,
    pub match_on: HttpMatchOn,
    pub case_sensitive: bool,
    pub action: HttpRuleAction,
}

fn default_poison_pool() -> Ipv4Net {
    "10.10.34.0/24".parse().expect("static CIDR")
}

fn default_poison_primary() -> Ipv4Addr {
    Ipv4Addr::new(10, 10, 34, 34)
}

fn default_poison_ttl() -> u32 {
    10
}

fn default_allowed_classes() -> BTreeSet<ProtocolClass> {
    [
        ProtocolClass::DnsUdp,
        ProtocolClass::Http,
        ProtocolClass::Tls,
    ]
    .into_iter()
    .collect()
}

/// The full rule set of the gateway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensorPolicy {
    #[serde(default)]
    pub dns_blacklist: Vec<DomainPattern>,
    /// Exact domains exempt from all layers.
    #[serde(default)]
    pub dns_whitelist: BTreeSet<String>,
    #[serde(default = "default_poison_pool")]
    pub poison_pool: Ipv4Net,
    #[serde(default = "default_poison_primary")]
    pub poison_primary: Ipv4Addr,
    #[serde(default = "default_poison_ttl")]
    pub poison_ttl_seconds: u32,
    #[serde(default)]
    pub http_rules: Vec<HttpRule>,
    #[serde(default)]
    pub sni_blacklist: Vec<DomainPattern>,
    #[serde(default)]
    pub whitelist_mode: bool,
    #[serde(default = "default_allowed_classes")]
    pub allowed_classes: BTreeSet<ProtocolClass>,
}

impl Default for CensorPolicy {
    fn default() -> Self {
        Self::pass_all()
    }
}

impl CensorPolicy {
    /// A policy that never interferes.
    pub fn pass_all() -> Self {
        Self {
            dns_blacklist: Vec::new(),
            dns_whitelist: BTreeSet::new(),
            poison_pool: default_poison_pool(),
            poison_primary: default_poison_primary(),
            poison_ttl_seconds: default_poison_ttl(),
            http_rules: Vec::new(),
            sni_blacklist: Vec::new(),
            whitelist_mode: false,
            allowed_classes: default_allowed_classes(),
        }
    }

    pub fn is_exempt(&self, domain: &str) -> bool {
        self.dns_whitelist
            .iter()
            .any(|d| d.eq_ignore_ascii_case(domain))
    }

    /// Checks the policy invariants; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if !self.poison_pool.contains(self.poison_primary) {
            return Err(format!(
                "poison pool {} does not contain primary address {}",
                self.poison_pool, self.poison_primary
            ));
        }
        for pattern in &self.dns_blacklist {
            if let Some(addr) = pattern.poison_address() {
                if !self.poison_pool.contains(addr) {
                    return Err(format!(
                        "poison override {addr} for {:?} lies outside pool {}",
                        pattern.pattern(),
                        self.poison_pool
                    ));
                }
            }
            if self.is_exempt(pattern.pattern()) {
                return Err(format!(
                    "domain {:?} appears in both dns_whitelist and dns_blacklist",
                    pattern.pattern()
                ));
            }
        }
        Ok(())
    }
}

/// The action the censor takes on one evaluated packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CensorAction {
    Pass,
    InjectDns { addr: Ipv4Addr, ttl_seconds: u32 },
    InjectBlockpage,
    InjectRst,
    Drop,
}

impl CensorAction {
    pub fn is_pass(&self) -> bool {
        matches!(self, CensorAction::Pass)
    }

    /// Builds the spoofed packet(s) this action sends back toward the
    /// client. The injected packet carries the server's identity; `Drop` and
    /// `Pass` synthesize nothing.
    pub fn materialize(&self, trigger: &Packet) -> Vec<Packet> {
        match self {
            CensorAction::Pass | CensorAction::Drop => Vec::new(),
            CensorAction::InjectDns { addr, ttl_seconds } => {
                let Ok(query) = decode_dns(&trigger.payload) else {
                    return Vec::new();
                };
                let response = DnsMessage::response(
                    query.id,
                    &query.qname,
                    vec![DnsAnswer {
                        name: query.qname.clone(),
                        addr: *addr,
                        ttl_seconds: *ttl_seconds,
                    }],
                );
                let bytes = response.encode().expect("injected response encodes");
                vec![reply_packet(trigger, None, bytes)]
            }
            CensorAction::InjectBlockpage => {
                let bytes = render_http_response(&render_blockpage());
                vec![reply_packet(
                    trigger,
                    Some(crate::netsim::TcpFlags::PSH_ACK),
                    bytes,
                )]
            }
            CensorAction::InjectRst => {
                vec![reply_packet(
                    trigger,
                    Some(crate::netsim::TcpFlags::RST),
                    Vec::new(),
                )]
            }
        }
    }
}

fn reply_packet(
    trigger: &Packet,
    flags: Option<crate::netsim::TcpFlags>,
    payload: Vec<u8>,
) -> Packet {
    Packet {
        src: trigger.dst.clone(),
        dst: trigger.src.clone(),
        ttl: crate::netsim::DEFAULT_TTL,
        proto: trigger.proto,
        src_port: trigger.dst_port,
        dst_port: trigger.src_port,
        tcp_flags: flags,
        payload,
    }
}

/// Per-flow censor state, keyed by the 5-tuple of client-originated packets.
/// TCP flows are classified once, at their first data segment; UDP datagrams
/// are evaluated individually.
#[derive(Debug, Default, Clone)]
pub struct FlowTable {
    records: BTreeMap<FlowKey, FlowRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct FlowKey {
    src: HostId,
    dst: HostId,
    proto: Transport,
    src_port: u16,
    dst_port: u16,
}

impl FlowKey {
    fn of(pkt: &Packet) -> Self {
        Self {
            src: pkt.src.clone(),
            dst: pkt.dst.clone(),
            proto: pkt.proto,
            src_port: pkt.src_port,
            dst_port: pkt.dst_port,
        }
    }
}

#[derive(Debug, Default, Clone)]
struct FlowRecord {
    class: Option<ProtocolClass>,
    evaluated: bool,
    dropped: bool,
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Prior classification for the packet's 5-tuple, if any.
    pub fn classification(&self, pkt: &Packet) -> Option<ProtocolClass> {
        self.records.get(&FlowKey::of(pkt)).and_then(|r| r.class)
    }
}

/// Decision of the protocol whitelist layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhitelistDecision {
    Allow,
    Drop,
}

/// Evaluates one chokepoint-traversing packet. Deterministic in
/// (packet, flow state, policy); total — unknown traffic falls through
/// according to `whitelist_mode`.
pub fn apply_policy(pkt: &Packet, flows: &mut FlowTable, policy: &CensorPolicy) -> CensorAction {
    let record = flows.records.entry(FlowKey::of(pkt)).or_default();
    if record.dropped {
        // Whitelist already killed this flow; stay silent for the rest of it.
        return CensorAction::Drop;
    }

    if pkt.proto == Transport::Tcp {
        if pkt.payload.is_empty() {
            // Handshake/teardown segment. SYNs toward ports that could still
            // become an allowed web protocol are provisionally forwarded and
            // the flow is re-evaluated at its first data segment.
            if policy.whitelist_mode && !provisional_port_allowed(pkt.dst_port, policy) {
                record.dropped = true;
                return CensorAction::Drop;
            }
            return CensorAction::Pass;
        }
        if record.evaluated {
            // Content already inspected at the first data segment.
            return CensorAction::Pass;
        }
        record.evaluated = true;
    }

    // Layer 0: whitelist-exempt domains short-circuit everything.
    if let Some(domain) = domain_identity(pkt) {
        if policy.is_exempt(&domain) {
            record.class = Some(classify_protocol(pkt.proto, pkt.dst_port, &pkt.payload));
            return CensorAction::Pass;
        }
    }

    // Layer 1: protocol whitelist.
    let class = classify_protocol(pkt.proto, pkt.dst_port, &pkt.payload);
    record.class = Some(class);
    if whitelist_check(class, policy) == WhitelistDecision::Drop {
        record.dropped = true;
        return CensorAction::Drop;
    }

    // Layer 2: DNS. Queries are answered from the chokepoint and never
    // forwarded onward; the model black-holes them.
    if pkt.proto == Transport::Udp {
        if let Ok(msg) = decode_dns(&pkt.payload) {
            if !msg.is_response {
                if let Some(poison) = match_dns(&msg.qname, policy) {
                    return CensorAction::InjectDns {
                        addr: poison.addr,
                        ttl_seconds: poison.ttl_seconds,
                    };
                }
            }
        }
    }

    if pkt.proto == Transport::Tcp {
        // Layer 3: HTTP.
        if let Ok(req) = parse_http_request(&pkt.payload) {
            match match_http(&req, policy) {
                Some(HttpRuleAction::Blockpage) => return CensorAction::InjectBlockpage,
                Some(HttpRuleAction::Rst) => return CensorAction::InjectRst,
                None => {}
            }
        }
        // Layer 4: SNI.
        if let Ok(hello) = parse_client_hello(&pkt.payload) {
            if match_sni(&hello, policy) {
                return CensorAction::InjectRst;
            }
        }
    }

    CensorAction::Pass
}

fn provisional_port_allowed(dst_port: u16, policy: &CensorPolicy) -> bool {
    (dst_port == 80 && policy.allowed_classes.contains(&ProtocolClass::Http))
        || (dst_port == 443 && policy.allowed_classes.contains(&ProtocolClass::Tls))
}

/// The qname/Host/SNI identity of a first data unit, when one parses.
/// Extraction here is deliberately forgiving (case-insensitive header
/// lookup); the strict per-rule extraction lives in [`match_http`].
fn domain_identity(pkt: &Packet) -> Option<String> {
    if pkt.payload.is_empty() {
        return None;
    }
    match pkt.proto {
        Transport::Udp => decode_dns(&pkt.payload)
            .ok()
            .filter(|m| !m.is_response)
            .map(|m| m.qname),
        Transport::Tcp => {
            if let Ok(req) = parse_http_request(&pkt.payload) {
                return req.host().map(str::to_string);
            }
            parse_client_hello(&pkt.payload).ok().and_then(|h| h.sni)
        }
    }
}

/// A DNS-layer match: which address to inject, with which answer TTL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoisonDecision {
    pub addr: Ipv4Addr,
    pub ttl_seconds: u32,
}

/// DNS blacklist lookup. The whitelist wins over the blacklist; comparison
/// is case-insensitive on domain labels.
pub fn match_dns(qname: &str, policy: &CensorPolicy) -> Option<PoisonDecision> {
    if policy.is_exempt(qname) {
        return None;
    }
    policy
        .dns_blacklist
        .iter()
        .find(|p| p.matches(qname))
        .map(|p| PoisonDecision {
            addr: p.poison_address().unwrap_or(policy.poison_primary),
            ttl_seconds: policy.poison_ttl_seconds,
        })
}

/// HTTP rule lookup against a parsed request head. Returns the first
/// matching rule's action.
pub fn match_http(req: &HttpRequest, policy: &CensorPolicy) -> Option<HttpRuleAction> {
    // The engine only engages for canonical method tokens.
    if !CANONICAL_METHODS.contains(&req.method.as_str()) {
        return None;
    }
    if let Some(host) = req.host() {
        if policy.is_exempt(host) {
            return None;
        }
    }
    for rule in &policy.http_rules {
        let host = if rule.case_sensitive {
            req.header_exact("Host")
        } else {
            req.header_ci("host")
        };
        let host_hit = matches!((&rule.match_on, host),
            (HttpMatchOn::Host | HttpMatchOn::Both, Some(h))
                if contains_pattern(h, &rule.pattern, rule.case_sensitive));
        let path_hit = matches!(rule.match_on, HttpMatchOn::Path | HttpMatchOn::Both)
            && contains_pattern(&req.path, &rule.pattern, rule.case_sensitive);
        if host_hit || path_hit {
            return Some(rule.action);
        }
    }
    None
}

fn contains_pattern(haystack: &str, pattern: &str, case_sensitive: bool) -> bool {
    if case_sensitive {
        haystack.contains(pattern)
    } else {
        haystack
            .to_ascii_lowercase()
            .contains(&pattern.to_ascii_lowercase())
    }
}

/// SNI blacklist lookup. An absent SNI defeats the match.
pub fn match_sni(hello: &ClientHello, policy: &CensorPolicy) -> bool {
    let Some(sni) = &hello.sni else {
        return false;
    };
    if policy.is_exempt(sni) {
        return false;
    }
    policy.sni_blacklist.iter().any(|p| p.matches(sni))
}

/// Protocol whitelist decision. Drops are silent: no response is synthesized.
pub fn whitelist_check(class: ProtocolClass, policy: &CensorPolicy) -> WhitelistDecision {
    if !policy.whitelist_mode || policy.allowed_classes.contains(&class) {
        WhitelistDecision::Allow
    } else {
        WhitelistDecision::Drop
    }
}

/// The generic block page served in place of forbidden content. Byte-stable
/// across calls.
pub fn render_blockpage() -> HttpResponse {
    let body = concat!(
        "<html><head><meta charset=\"utf-8\"><title>403 Forbidden</title></head>\n",
        "<body><div style=\"width:100%;height:100%\">",
        "<iframe src=\"http://10.10.34.34/?type=policy&detail=blocked\" ",
        "style=\"border:0;width:100%;height:100%\"></iframe>",
        "</div></body></html>\n"
    );
    HttpResponse::new(403, "Forbidden", body.as_bytes().to_vec())
        .with_header("Content-Type", "text/html")
        .with_header("Connection", "close")
}
