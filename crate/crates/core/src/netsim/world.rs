//! The immutable world a scenario runs against: topology, censor policy, and
//! the behavior of the simulated server hosts.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use sha2::{Digest, Sha256};

use crate::censor::{CensorPolicy, FlowTable};
use crate::wire::{
    decode_dns, parse_client_hello, parse_http_request, render_http_response, DnsAnswer,
    DnsMessage, HttpResponse,
};

use super::packet::{HostId, Packet, TcpFlags, Transport};
use super::{forward, DeliveryKind, DeliveryOutcome, NetsimError, Topology};

/// Answer TTL the authoritative resolver uses; deliberately far from the
/// low TTLs the censor stamps on injected answers.
pub const AUTHORITATIVE_TTL: u32 = 3600;

/// Behavior of the simulated server hosts. The resolver answers DNS on UDP;
/// every server host serves HTTP and TLS and echoes anything else, standing
/// in for cooperative external measurement endpoints.
#[derive(Debug, Clone)]
pub struct ServerModel {
    resolver: HostId,
    origin: HostId,
    records: BTreeMap<String, Ipv4Addr>,
}

impl ServerModel {
    pub fn new(resolver: HostId, origin: HostId) -> Self {
        Self {
            resolver,
            origin,
            records: BTreeMap::new(),
        }
    }

    pub fn resolver(&self) -> &HostId {
        &self.resolver
    }

    pub fn origin(&self) -> &HostId {
        &self.origin
    }

    pub fn add_record(&mut self, domain: &str, addr: Ipv4Addr) {
        self.records.insert(domain.to_ascii_lowercase(), addr);
    }

    /// The authoritative address for a domain, if one is registered.
    pub fn lookup(&self, domain: &str) -> Option<Ipv4Addr> {
        self.records.get(&domain.to_ascii_lowercase()).copied()
    }

    /// Canonical page body a server host serves for a domain.
    pub fn page_body(domain: &str) -> Vec<u8> {
        format!(
            "<html><head><title>{domain}</title></head><body>canonical content for {domain}</body></html>\n"
        )
        .into_bytes()
    }

    /// (status code, body sha256) fingerprint of the canonical page.
    pub fn http_fingerprint(domain: &str) -> (u16, String) {
        let digest = Sha256::digest(Self::page_body(domain));
        (200, hex::encode(digest))
    }

    /// Application-level reply of the destination host to a delivered packet.
    fn respond(&self, pkt: &Packet) -> Vec<Packet> {
        match pkt.proto {
            Transport::Tcp => {
                let flags = pkt.flags();
                if flags.rst || flags.fin {
                    return Vec::new();
                }
                if flags.syn && !flags.ack {
                    return vec![reply(pkt, Some(TcpFlags::SYN_ACK), Vec::new())];
                }
                if pkt.payload.is_empty() {
                    return Vec::new();
                }
                if let Ok(req) = parse_http_request(&pkt.payload) {
                    let domain = req.host().unwrap_or("unknown.example").to_string();
                    let resp = HttpResponse::new(200, "OK", Self::page_body(&domain))
                        .with_header("Content-Type", "text/html");
                    return vec![reply(
                        pkt,
                        Some(TcpFlags::PSH_ACK),
                        render_http_response(&resp),
                    )];
                }
                if parse_client_hello(&pkt.payload).is_ok() {
                    return vec![reply(
                        pkt,
                        Some(TcpFlags::PSH_ACK),
                        crate::wire::build_server_hello(),
                    )];
                }
                // Echo unknown payloads back.
                vec![reply(pkt, Some(TcpFlags::PSH_ACK), pkt.payload.clone())]
            }
            Transport::Udp => {
                if pkt.dst == self.resolver {
                    if let Ok(msg) = decode_dns(&pkt.payload) {
                        if !msg.is_response {
                            let answers = self
                                .lookup(&msg.qname)
                                .map(|addr| {
                                    vec![DnsAnswer {
                                        name: msg.qname.clone(),
                                        addr,
                                        ttl_seconds: AUTHORITATIVE_TTL,
                                    }]
                                })
                                .unwrap_or_default();
                            let bytes = DnsMessage::response(msg.id, &msg.qname, answers)
                                .encode()
                                .expect("resolver response encodes");
                            return vec![reply(pkt, None, bytes)];
                        }
                    }
                    return Vec::new();
                }
                if pkt.payload.is_empty() {
                    return Vec::new();
                }
                vec![reply(pkt, None, pkt.payload.clone())]
            }
        }
    }
}

fn reply(pkt: &Packet, flags: Option<TcpFlags>, payload: Vec<u8>) -> Packet {
    Packet {
        src: pkt.dst.clone(),
        dst: pkt.src.clone(),
        ttl: super::DEFAULT_TTL,
        proto: pkt.proto,
        src_port: pkt.dst_port,
        dst_port: pkt.src_port,
        tcp_flags: flags,
        payload,
    }
}

/// Topology + policy + server behavior. Immutable after construction; safe
/// to share across concurrently running probes, each of which owns its own
/// [`FlowTable`].
#[derive(Debug, Clone)]
pub struct World {
    topology: Topology,
    policy: CensorPolicy,
    servers: ServerModel,
}

impl World {
    pub fn new(topology: Topology, policy: CensorPolicy, servers: ServerModel) -> Self {
        Self {
            topology,
            policy,
            servers,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn policy(&self) -> &CensorPolicy {
        &self.policy
    }

    pub fn servers(&self) -> &ServerModel {
        &self.servers
    }

    /// Forwards a packet and, when it is delivered, collects the destination
    /// host's application-level replies into `response_packets`. Replies
    /// travel the return path unhindered: the middlebox only inspects
    /// client-originated traffic.
    pub fn send(
        &self,
        pkt: &Packet,
        flows: &mut FlowTable,
    ) -> Result<DeliveryOutcome, NetsimError> {
        let mut outcome = forward(pkt, &self.topology, &self.policy, flows)?;
        if outcome.kind == DeliveryKind::Delivered {
            outcome.response_packets = self.servers.respond(pkt);
        }
        debug_assert!(
            outcome.kind != DeliveryKind::SilentlyDropped || outcome.response_packets.is_empty(),
            "silent drop produced packets"
        );
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{build_topology, TopologySpec};
    use crate::wire::encode_dns_query;

    fn world(policy: CensorPolicy) -> World {
        let topology = build_topology(&TopologySpec {
            vantage_paths: [("client".to_string(), vec!["GW".to_string()])].into(),
            servers: vec!["resolver".to_string(), "origin".to_string()],
            chokepoint: "GW".to_string(),
        })
        .unwrap();
        let mut servers = ServerModel::new("resolver".into(), "origin".into());
        servers.add_record("example.org", Ipv4Addr::new(198, 18, 0, 1));
        World::new(topology, policy, servers)
    }

    #[test]
    fn resolver_answers_known_domain() {
        let w = world(CensorPolicy::pass_all());
        let pkt = Packet::udp(
            "client".into(),
            "resolver".into(),
            40000,
            53,
            encode_dns_query(5, "example.org").unwrap(),
        );
        let out = w.send(&pkt, &mut FlowTable::new()).unwrap();
        assert_eq!(out.kind, DeliveryKind::Delivered);
        let msg = decode_dns(&out.response_packets[0].payload).unwrap();
        assert_eq!(msg.answers[0].addr, Ipv4Addr::new(198, 18, 0, 1));
        assert_eq!(msg.answers[0].ttl_seconds, AUTHORITATIVE_TTL);
    }

    #[test]
    fn resolver_returns_empty_answers_for_unknown_domain() {
        let w = world(CensorPolicy::pass_all());
        let pkt = Packet::udp(
            "client".into(),
            "resolver".into(),
            40000,
            53,
            encode_dns_query(5, "unknown.example").unwrap(),
        );
        let out = w.send(&pkt, &mut FlowTable::new()).unwrap();
        let msg = decode_dns(&out.response_packets[0].payload).unwrap();
        assert!(msg.is_response);
        assert!(msg.answers.is_empty());
    }

    #[test]
    fn syn_gets_syn_ack() {
        let w = world(CensorPolicy::pass_all());
        let syn = Packet::tcp(
            "client".into(),
            "origin".into(),
            40000,
            80,
            TcpFlags::SYN,
            vec![],
        );
        let out = w.send(&syn, &mut FlowTable::new()).unwrap();
        assert_eq!(out.response_packets.len(), 1);
        assert_eq!(out.response_packets[0].flags(), TcpFlags::SYN_ACK);
    }

    #[test]
    fn origin_serves_canonical_page_for_host_header() {
        let w = world(CensorPolicy::pass_all());
        let req = b"GET / HTTP/1.1\r\nHost: example.org\r\n\r\n".to_vec();
        let data = Packet::tcp(
            "client".into(),
            "origin".into(),
            40000,
            80,
            TcpFlags::PSH_ACK,
            req,
        );
        let out = w.send(&data, &mut FlowTable::new()).unwrap();
        let resp = crate::wire::parse_http_response(&out.response_packets[0].payload).unwrap();
        assert_eq!(resp.status_code, 200);
        assert_eq!(resp.body, ServerModel::page_body("example.org"));
    }

    #[test]
    fn unknown_payloads_are_echoed() {
        let w = world(CensorPolicy::pass_all());
        let pkt = Packet::udp(
            "client".into(),
            "origin".into(),
            40000,
            9999,
            b"ping".to_vec(),
        );
        let out = w.send(&pkt, &mut FlowTable::new()).unwrap();
        assert_eq!(out.response_packets[0].payload, b"ping");
    }
}
